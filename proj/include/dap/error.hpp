// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace dap {

enum class ErrorCode {
  // corpus
  InvalidRule,
  EmptyDocument,
  BudgetExceedsCorpus,
  // tokenizer
  DuplicateToken,
  MissingSpecialToken,
  IdOutOfRange,
  // model
  InvalidConfig,
  ShapeMismatch,
  EmptyMask,
  EmptyDataset,
  PromptTooLong,
  // trainer
  NonFiniteGradient,
  CheckpointWriteFailure,
  ConfigMismatch,
  DatasetHashMismatch,
  // distributed
  LengthMismatch,
  // eval
  SchemaError,
  TemplateError,
  MissingResponse,
  EmptyGold,
  // io / cli
  MissingFile,
  WriteFailure,
  StaleArtifact,
  NoInput,
  InvalidInput,
};

const char* error_code_name(ErrorCode code);

/// Single exception type carrying a machine-checkable code plus a human
/// message. CLI maps codes onto stable process exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace dap
