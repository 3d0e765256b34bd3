// SPDX-License-Identifier: Apache-2.0

#include "dap/error.hpp"

namespace dap {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidRule: return "InvalidRule";
    case ErrorCode::EmptyDocument: return "EmptyDocument";
    case ErrorCode::BudgetExceedsCorpus: return "BudgetExceedsCorpus";
    case ErrorCode::DuplicateToken: return "DuplicateToken";
    case ErrorCode::MissingSpecialToken: return "MissingSpecialToken";
    case ErrorCode::IdOutOfRange: return "IdOutOfRange";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::PromptTooLong: return "PromptTooLong";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::CheckpointWriteFailure: return "CheckpointWriteFailure";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
    case ErrorCode::DatasetHashMismatch: return "DatasetHashMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::TemplateError: return "TemplateError";
    case ErrorCode::MissingResponse: return "MissingResponse";
    case ErrorCode::EmptyGold: return "EmptyGold";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::WriteFailure: return "WriteFailure";
    case ErrorCode::StaleArtifact: return "StaleArtifact";
    case ErrorCode::NoInput: return "NoInput";
    case ErrorCode::InvalidInput: return "InvalidInput";
  }
  return "UnknownError";
}

}  // namespace dap
