// SPDX-License-Identifier: Apache-2.0

#include "dap/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dap/error.hpp"
#include "dap/rng.hpp"
#include "dap/serialize.hpp"

namespace dap {

namespace {
constexpr double kInitStd = 0.02;
constexpr double kLnEps = 1e-5;
}  // namespace

void ModelConfig::validate() const {
  if (vocab_size == 0 || d_model == 0 || n_heads == 0 || n_layers == 0 || d_ff == 0) {
    raise(ErrorCode::InvalidConfig, "all model dimensions must be positive");
  }
  if (max_seq_len < 2) raise(ErrorCode::InvalidConfig, "max_seq_len must be >= 2");
  if (d_model % n_heads != 0) {
    raise(ErrorCode::InvalidConfig, "d_model (" + std::to_string(d_model) +
                                        ") not divisible by n_heads (" + std::to_string(n_heads) + ")");
  }
}

std::vector<std::pair<std::string, std::vector<size_t>>> parameter_layout(const ModelConfig& c) {
  std::vector<std::pair<std::string, std::vector<size_t>>> layout;
  layout.emplace_back("token_embedding", std::vector<size_t>{c.vocab_size, c.d_model});
  layout.emplace_back("pos_embedding", std::vector<size_t>{c.max_seq_len, c.d_model});
  for (size_t l = 0; l < c.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    layout.emplace_back(p + "ln1.scale", std::vector<size_t>{c.d_model});
    layout.emplace_back(p + "ln1.shift", std::vector<size_t>{c.d_model});
    layout.emplace_back(p + "attn.wq", std::vector<size_t>{c.d_model, c.d_model});
    layout.emplace_back(p + "attn.wk", std::vector<size_t>{c.d_model, c.d_model});
    layout.emplace_back(p + "attn.wv", std::vector<size_t>{c.d_model, c.d_model});
    layout.emplace_back(p + "attn.wo", std::vector<size_t>{c.d_model, c.d_model});
    layout.emplace_back(p + "ln2.scale", std::vector<size_t>{c.d_model});
    layout.emplace_back(p + "ln2.shift", std::vector<size_t>{c.d_model});
    layout.emplace_back(p + "ff.w1", std::vector<size_t>{c.d_model, c.d_ff});
    layout.emplace_back(p + "ff.b1", std::vector<size_t>{c.d_ff});
    layout.emplace_back(p + "ff.w2", std::vector<size_t>{c.d_ff, c.d_model});
    layout.emplace_back(p + "ff.b2", std::vector<size_t>{c.d_model});
  }
  layout.emplace_back("final_ln.scale", std::vector<size_t>{c.d_model});
  layout.emplace_back("final_ln.shift", std::vector<size_t>{c.d_model});
  layout.emplace_back("lm_head", std::vector<size_t>{c.d_model, c.vocab_size});
  return layout;
}

size_t Parameters::index_of(const std::string& name) const {
  if (index_.empty()) {
    for (size_t i = 0; i < names.size(); ++i) index_[names[i]] = i;
  }
  auto it = index_.find(name);
  if (it == index_.end()) raise(ErrorCode::ShapeMismatch, "unknown tensor '" + name + "'");
  return it->second;
}

size_t Parameters::total_elements() const {
  size_t total = 0;
  for (const auto& t : tensors) total += t.numel();
  return total;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_bias_like(const std::string& name) {
  return ends_with(name, ".shift") || ends_with(name, ".b1") || ends_with(name, ".b2");
}

bool is_scale_like(const std::string& name) { return ends_with(name, ".scale"); }

}  // namespace

Parameters init_params(const ModelConfig& config) {
  config.validate();
  Parameters params;
  params.config = config;
  SplitMix64 rng(config.init_seed);
  for (const auto& [name, shape] : parameter_layout(config)) {
    Tensor tensor(shape);
    if (is_scale_like(name)) {
      tensor.fill(1.0);
    } else if (is_bias_like(name)) {
      // already zero
    } else {
      for (double& w : tensor.data) w = kInitStd * rng.next_gaussian();
    }
    params.names.push_back(name);
    params.tensors.push_back(std::move(tensor));
  }
  return params;
}

Batch make_batch(const PackedDataset& dataset, const std::vector<size_t>& indices) {
  Batch batch;
  batch.batch_size = indices.size();
  batch.length = dataset.seq_len;
  batch.inputs.resize(batch.batch_size * batch.length);
  batch.loss_mask.assign(batch.batch_size * batch.length, 0);
  for (size_t b = 0; b < indices.size(); ++b) {
    const auto& sequence = dataset.sequences.at(indices[b]);
    const size_t content = dataset.seq_len - dataset.pad_counts.at(indices[b]);
    for (size_t t = 0; t < dataset.seq_len; ++t) {
      batch.inputs[b * batch.length + t] = sequence[t];
      batch.loss_mask[b * batch.length + t] = (t + 1 < content) ? 1 : 0;
    }
  }
  return batch;
}

// ---------------------------------------------------------------------------
// forward / backward
// ---------------------------------------------------------------------------

struct LayerCache {
  std::vector<double> x_in;         // M x D, input of the block
  std::vector<double> mu1, rstd1;   // M
  std::vector<double> n1;           // M x D
  std::vector<double> q, k, v;      // M x D
  std::vector<double> att;          // B x H x T x T
  std::vector<double> ctx;          // M x D
  std::vector<double> x_mid;        // M x D, after attention residual
  std::vector<double> mu2, rstd2;   // M
  std::vector<double> n2;           // M x D
  std::vector<double> a1;           // M x F, pre-activation
  std::vector<double> hmid;         // M x F
};

struct ActivationCache {
  size_t batch = 0, length = 0;
  std::vector<LayerCache> layers;
  std::vector<double> x_final;            // M x D, input of the final layer norm
  std::vector<double> muf, rstdf;         // M
  std::vector<double> hf;                 // M x D
};

namespace {

double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}

double gelu_grad(double x) {
  const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  return cdf + x * phi;
}

// y = scale .* (x - mu) * rstd + shift, statistics over the feature axis.
void layer_norm_forward(const double* x, const double* scale, const double* shift, size_t rows,
                        size_t dim, double* y, double* mu_out, double* rstd_out) {
  for (size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * dim;
    double mu = 0.0;
    for (size_t d = 0; d < dim; ++d) mu += xr[d];
    mu /= static_cast<double>(dim);
    double var = 0.0;
    for (size_t d = 0; d < dim; ++d) {
      const double c = xr[d] - mu;
      var += c * c;
    }
    var /= static_cast<double>(dim);
    const double rstd = 1.0 / std::sqrt(var + kLnEps);
    mu_out[r] = mu;
    rstd_out[r] = rstd;
    double* yr = y + r * dim;
    for (size_t d = 0; d < dim; ++d) yr[d] = scale[d] * (xr[d] - mu) * rstd + shift[d];
  }
}

// Accumulates dx into dx_out; dscale/dshift accumulated across rows.
void layer_norm_backward(const double* dy, const double* x, const double* mu, const double* rstd,
                         const double* scale, size_t rows, size_t dim, double* dx_out,
                         double* dscale, double* dshift) {
  std::vector<double> dxhat(dim);
  for (size_t r = 0; r < rows; ++r) {
    const double* dyr = dy + r * dim;
    const double* xr = x + r * dim;
    const double m = mu[r];
    const double rs = rstd[r];
    double mean_dxhat = 0.0;
    double mean_dxhat_xhat = 0.0;
    for (size_t d = 0; d < dim; ++d) {
      const double xhat = (xr[d] - m) * rs;
      dscale[d] += dyr[d] * xhat;
      dshift[d] += dyr[d];
      dxhat[d] = dyr[d] * scale[d];
      mean_dxhat += dxhat[d];
      mean_dxhat_xhat += dxhat[d] * xhat;
    }
    mean_dxhat /= static_cast<double>(dim);
    mean_dxhat_xhat /= static_cast<double>(dim);
    double* dxr = dx_out + r * dim;
    for (size_t d = 0; d < dim; ++d) {
      const double xhat = (xr[d] - m) * rs;
      dxr[d] += rs * (dxhat[d] - mean_dxhat - xhat * mean_dxhat_xhat);
    }
  }
}

void add_bias_rows(double* y, const double* bias, size_t rows, size_t dim) {
  for (size_t r = 0; r < rows; ++r) {
    double* yr = y + r * dim;
    for (size_t d = 0; d < dim; ++d) yr[d] += bias[d];
  }
}

void validate_batch(const ModelConfig& config, const Batch& batch) {
  if (batch.inputs.size() != batch.batch_size * batch.length ||
      batch.loss_mask.size() != batch.inputs.size()) {
    raise(ErrorCode::ShapeMismatch, "batch buffers do not match batch_size x length");
  }
  if (batch.length > config.max_seq_len) {
    raise(ErrorCode::ShapeMismatch, "batch length " + std::to_string(batch.length) +
                                        " exceeds max_seq_len " + std::to_string(config.max_seq_len));
  }
  for (uint32_t id : batch.inputs) {
    if (id >= config.vocab_size) {
      raise(ErrorCode::ShapeMismatch, "token id " + std::to_string(id) + " out of range");
    }
  }
}

}  // namespace

ForwardResult forward(const Parameters& params, const Batch& batch) {
  const ModelConfig& c = params.config;
  validate_batch(c, batch);

  const size_t B = batch.batch_size, T = batch.length, D = c.d_model, H = c.n_heads,
               F = c.d_ff, V = c.vocab_size;
  const size_t M = B * T;
  const size_t dh = c.head_dim();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  auto cache = std::make_shared<ActivationCache>();
  cache->batch = B;
  cache->length = T;
  ForwardResult result;
  result.cache = cache;
  result.logits.assign(M * V, 0.0);
  if (B == 0) return result;

  const Tensor& tok = params.get("token_embedding");
  const Tensor& pos = params.get("pos_embedding");

  std::vector<double> x(M * D);
  for (size_t b = 0; b < B; ++b) {
    for (size_t t = 0; t < T; ++t) {
      const uint32_t id = batch.input(b, t);
      double* xr = x.data() + (b * T + t) * D;
      const double* er = tok.data.data() + id * D;
      const double* pr = pos.data.data() + t * D;
      for (size_t d = 0; d < D; ++d) xr[d] = er[d] + pr[d];
    }
  }

  cache->layers.resize(c.n_layers);
  for (size_t l = 0; l < c.n_layers; ++l) {
    LayerCache& lc = cache->layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    lc.x_in = x;

    lc.mu1.resize(M);
    lc.rstd1.resize(M);
    lc.n1.resize(M * D);
    layer_norm_forward(lc.x_in.data(), params.get(p + "ln1.scale").data.data(),
                       params.get(p + "ln1.shift").data.data(), M, D, lc.n1.data(), lc.mu1.data(),
                       lc.rstd1.data());

    lc.q.resize(M * D);
    lc.k.resize(M * D);
    lc.v.resize(M * D);
    matmul_nn(lc.n1.data(), params.get(p + "attn.wq").data.data(), lc.q.data(), M, D, D);
    matmul_nn(lc.n1.data(), params.get(p + "attn.wk").data.data(), lc.k.data(), M, D, D);
    matmul_nn(lc.n1.data(), params.get(p + "attn.wv").data.data(), lc.v.data(), M, D, D);

    lc.att.assign(B * H * T * T, 0.0);
    lc.ctx.assign(M * D, 0.0);
    for (size_t b = 0; b < B; ++b) {
      for (size_t h = 0; h < H; ++h) {
        double* att_bh = lc.att.data() + (b * H + h) * T * T;
        for (size_t t = 0; t < T; ++t) {
          const double* qrow = lc.q.data() + (b * T + t) * D + h * dh;
          double* arow = att_bh + t * T;
          double max_score = -1e300;
          for (size_t u = 0; u <= t; ++u) {
            const double* krow = lc.k.data() + (b * T + u) * D + h * dh;
            double s = 0.0;
            for (size_t d = 0; d < dh; ++d) s += qrow[d] * krow[d];
            s *= inv_sqrt_dh;
            arow[u] = s;
            max_score = std::max(max_score, s);
          }
          double z = 0.0;
          for (size_t u = 0; u <= t; ++u) {
            arow[u] = std::exp(arow[u] - max_score);
            z += arow[u];
          }
          double* crow = lc.ctx.data() + (b * T + t) * D + h * dh;
          for (size_t u = 0; u <= t; ++u) {
            arow[u] /= z;
            const double* vrow = lc.v.data() + (b * T + u) * D + h * dh;
            for (size_t d = 0; d < dh; ++d) crow[d] += arow[u] * vrow[d];
          }
        }
      }
    }

    std::vector<double> ao(M * D);
    matmul_nn(lc.ctx.data(), params.get(p + "attn.wo").data.data(), ao.data(), M, D, D);
    lc.x_mid.resize(M * D);
    for (size_t i = 0; i < M * D; ++i) lc.x_mid[i] = lc.x_in[i] + ao[i];

    lc.mu2.resize(M);
    lc.rstd2.resize(M);
    lc.n2.resize(M * D);
    layer_norm_forward(lc.x_mid.data(), params.get(p + "ln2.scale").data.data(),
                       params.get(p + "ln2.shift").data.data(), M, D, lc.n2.data(), lc.mu2.data(),
                       lc.rstd2.data());

    lc.a1.resize(M * F);
    matmul_nn(lc.n2.data(), params.get(p + "ff.w1").data.data(), lc.a1.data(), M, D, F);
    add_bias_rows(lc.a1.data(), params.get(p + "ff.b1").data.data(), M, F);
    lc.hmid.resize(M * F);
    for (size_t i = 0; i < M * F; ++i) lc.hmid[i] = gelu(lc.a1[i]);

    std::vector<double> ff(M * D);
    matmul_nn(lc.hmid.data(), params.get(p + "ff.w2").data.data(), ff.data(), M, F, D);
    add_bias_rows(ff.data(), params.get(p + "ff.b2").data.data(), M, D);
    for (size_t i = 0; i < M * D; ++i) x[i] = lc.x_mid[i] + ff[i];
  }

  cache->x_final = x;
  cache->muf.resize(M);
  cache->rstdf.resize(M);
  cache->hf.resize(M * D);
  layer_norm_forward(cache->x_final.data(), params.get("final_ln.scale").data.data(),
                     params.get("final_ln.shift").data.data(), M, D, cache->hf.data(),
                     cache->muf.data(), cache->rstdf.data());

  matmul_nn(cache->hf.data(), params.get("lm_head").data.data(), result.logits.data(), M, D, V);

  for (double v : result.logits) {
    if (!std::isfinite(v)) raise(ErrorCode::ShapeMismatch, "non-finite logits");
  }
  return result;
}

double clm_loss(const std::vector<double>& logits, const Batch& batch, size_t vocab_size) {
  const size_t B = batch.batch_size, T = batch.length, V = vocab_size;
  if (logits.size() != B * T * V) raise(ErrorCode::ShapeMismatch, "logits shape mismatch");
  double total = 0.0;
  size_t count = 0;
  for (size_t b = 0; b < B; ++b) {
    for (size_t t = 0; t < T; ++t) {
      if (!batch.masked(b, t)) continue;
      if (t + 1 >= T) raise(ErrorCode::ShapeMismatch, "mask set at final position");
      const double* row = logits.data() + (b * T + t) * V;
      const uint32_t target = batch.input(b, t + 1);
      double max_logit = row[0];
      for (size_t i = 1; i < V; ++i) max_logit = std::max(max_logit, row[i]);
      double z = 0.0;
      for (size_t i = 0; i < V; ++i) z += std::exp(row[i] - max_logit);
      total += -(row[target] - max_logit - std::log(z));
      ++count;
    }
  }
  if (count == 0) raise(ErrorCode::EmptyMask, "no masked positions in batch");
  return total / static_cast<double>(count);
}

LossAndGrads loss_and_grads(const Parameters& params, const Batch& batch) {
  const ModelConfig& c = params.config;
  ForwardResult fwd = forward(params, batch);
  const ActivationCache& cache = *fwd.cache;

  const size_t B = batch.batch_size, T = batch.length, D = c.d_model, H = c.n_heads,
               F = c.d_ff, V = c.vocab_size;
  const size_t M = B * T;
  const size_t dh = c.head_dim();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  LossAndGrads out;
  out.grads.reserve(params.tensors.size());
  for (const auto& t : params.tensors) out.grads.emplace_back(Tensor{t.shape});

  // Softmax cross-entropy over masked positions; dlogits carries 1/M.
  size_t mask_count = 0;
  for (size_t i = 0; i < M; ++i) mask_count += batch.loss_mask[i] ? 1 : 0;
  if (mask_count == 0) raise(ErrorCode::EmptyMask, "no masked positions in batch");
  const double inv_mask = 1.0 / static_cast<double>(mask_count);

  std::vector<double> dlogits(M * V, 0.0);
  double total_loss = 0.0;
  for (size_t b = 0; b < B; ++b) {
    for (size_t t = 0; t < T; ++t) {
      if (!batch.masked(b, t)) continue;
      const double* row = fwd.logits.data() + (b * T + t) * V;
      double* drow = dlogits.data() + (b * T + t) * V;
      const uint32_t target = batch.input(b, t + 1);
      double max_logit = row[0];
      for (size_t i = 1; i < V; ++i) max_logit = std::max(max_logit, row[i]);
      double z = 0.0;
      for (size_t i = 0; i < V; ++i) z += std::exp(row[i] - max_logit);
      total_loss += -(row[target] - max_logit - std::log(z));
      for (size_t i = 0; i < V; ++i) drow[i] = std::exp(row[i] - max_logit) / z * inv_mask;
      drow[target] -= inv_mask;
    }
  }
  out.loss = total_loss * inv_mask;

  auto grad = [&](const std::string& name) -> Tensor& { return out.grads[params.index_of(name)]; };

  // lm_head and final layer norm
  std::vector<double> dhf(M * D, 0.0);
  matmul_tn(cache.hf.data(), dlogits.data(), grad("lm_head").data.data(), M, D, V);
  matmul_nt(dlogits.data(), params.get("lm_head").data.data(), dhf.data(), M, V, D);

  std::vector<double> dx(M * D, 0.0);
  layer_norm_backward(dhf.data(), cache.x_final.data(), cache.muf.data(), cache.rstdf.data(),
                      params.get("final_ln.scale").data.data(), M, D, dx.data(),
                      grad("final_ln.scale").data.data(), grad("final_ln.shift").data.data());

  std::vector<double> dctx(M * D), dq(M * D), dk(M * D), dv(M * D), dn1(M * D), dn2(M * D),
      da1(M * F), dhmid(M * F);

  for (size_t l = c.n_layers; l-- > 0;) {
    const LayerCache& lc = cache.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";

    // dx is the gradient at the block output (x_mid + ff).
    // Feed-forward branch
    matmul_nt(dx.data(), params.get(p + "ff.w2").data.data(), dhmid.data(), M, D, F);
    matmul_tn(lc.hmid.data(), dx.data(), grad(p + "ff.w2").data.data(), M, F, D);
    {
      double* db2 = grad(p + "ff.b2").data.data();
      for (size_t r = 0; r < M; ++r) {
        const double* row = dx.data() + r * D;
        for (size_t d = 0; d < D; ++d) db2[d] += row[d];
      }
    }
    for (size_t i = 0; i < M * F; ++i) da1[i] = dhmid[i] * gelu_grad(lc.a1[i]);
    matmul_tn(lc.n2.data(), da1.data(), grad(p + "ff.w1").data.data(), M, D, F);
    {
      double* db1 = grad(p + "ff.b1").data.data();
      for (size_t r = 0; r < M; ++r) {
        const double* row = da1.data() + r * F;
        for (size_t f = 0; f < F; ++f) db1[f] += row[f];
      }
    }
    std::fill(dn2.begin(), dn2.end(), 0.0);
    matmul_nt(da1.data(), params.get(p + "ff.w1").data.data(), dn2.data(), M, F, D);

    // dx_mid = dx (residual) + LN2 backward of dn2
    layer_norm_backward(dn2.data(), lc.x_mid.data(), lc.mu2.data(), lc.rstd2.data(),
                        params.get(p + "ln2.scale").data.data(), M, D, dx.data(),
                        grad(p + "ln2.scale").data.data(), grad(p + "ln2.shift").data.data());

    // Attention branch: dx now holds dx_mid.
    matmul_tn(lc.ctx.data(), dx.data(), grad(p + "attn.wo").data.data(), M, D, D);
    matmul_nt(dx.data(), params.get(p + "attn.wo").data.data(), dctx.data(), M, D, D);

    std::fill(dq.begin(), dq.end(), 0.0);
    std::fill(dk.begin(), dk.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);
    std::vector<double> da_row(T), ds_row(T);
    for (size_t b = 0; b < B; ++b) {
      for (size_t h = 0; h < H; ++h) {
        const double* att_bh = lc.att.data() + (b * H + h) * T * T;
        for (size_t t = 0; t < T; ++t) {
          const double* arow = att_bh + t * T;
          const double* dctx_row = dctx.data() + (b * T + t) * D + h * dh;
          double dot = 0.0;
          for (size_t u = 0; u <= t; ++u) {
            const double* vrow = lc.v.data() + (b * T + u) * D + h * dh;
            double da = 0.0;
            for (size_t d = 0; d < dh; ++d) da += dctx_row[d] * vrow[d];
            da_row[u] = da;
            dot += arow[u] * da;
            double* dvrow = dv.data() + (b * T + u) * D + h * dh;
            for (size_t d = 0; d < dh; ++d) dvrow[d] += arow[u] * dctx_row[d];
          }
          const double* qrow = lc.q.data() + (b * T + t) * D + h * dh;
          double* dqrow = dq.data() + (b * T + t) * D + h * dh;
          for (size_t u = 0; u <= t; ++u) {
            ds_row[u] = arow[u] * (da_row[u] - dot) * inv_sqrt_dh;
            const double* krow = lc.k.data() + (b * T + u) * D + h * dh;
            double* dkrow = dk.data() + (b * T + u) * D + h * dh;
            for (size_t d = 0; d < dh; ++d) {
              dqrow[d] += ds_row[u] * krow[d];
              dkrow[d] += ds_row[u] * qrow[d];
            }
          }
        }
      }
    }

    matmul_tn(lc.n1.data(), dq.data(), grad(p + "attn.wq").data.data(), M, D, D);
    matmul_tn(lc.n1.data(), dk.data(), grad(p + "attn.wk").data.data(), M, D, D);
    matmul_tn(lc.n1.data(), dv.data(), grad(p + "attn.wv").data.data(), M, D, D);
    std::fill(dn1.begin(), dn1.end(), 0.0);
    matmul_nt(dq.data(), params.get(p + "attn.wq").data.data(), dn1.data(), M, D, D, true);
    matmul_nt(dk.data(), params.get(p + "attn.wk").data.data(), dn1.data(), M, D, D, true);
    matmul_nt(dv.data(), params.get(p + "attn.wv").data.data(), dn1.data(), M, D, D, true);

    // dx_in = dx_mid (residual) + LN1 backward of dn1
    layer_norm_backward(dn1.data(), lc.x_in.data(), lc.mu1.data(), lc.rstd1.data(),
                        params.get(p + "ln1.scale").data.data(), M, D, dx.data(),
                        grad(p + "ln1.scale").data.data(), grad(p + "ln1.shift").data.data());
  }

  // Embedding gradients
  {
    Tensor& dtok = grad("token_embedding");
    Tensor& dpos = grad("pos_embedding");
    for (size_t b = 0; b < B; ++b) {
      for (size_t t = 0; t < T; ++t) {
        const uint32_t id = batch.input(b, t);
        const double* dxr = dx.data() + (b * T + t) * D;
        double* er = dtok.data.data() + id * D;
        double* pr = dpos.data.data() + t * D;
        for (size_t d = 0; d < D; ++d) {
          er[d] += dxr[d];
          pr[d] += dxr[d];
        }
      }
    }
  }

  // Freeze contract: frozen tensors receive exactly zero gradient.
  for (size_t i = 0; i < out.grads.size(); ++i) {
    if (params.is_frozen(i)) std::fill(out.grads[i].data.begin(), out.grads[i].data.end(), 0.0);
  }
  return out;
}

double perplexity(const Parameters& params, const PackedDataset& dataset) {
  if (dataset.sequences.empty()) raise(ErrorCode::EmptyDataset, "no sequences to score");
  const size_t V = params.config.vocab_size;
  constexpr size_t kChunk = 8;
  double total_nll = 0.0;
  size_t positions = 0;
  for (size_t start = 0; start < dataset.sequences.size(); start += kChunk) {
    std::vector<size_t> indices;
    for (size_t i = start; i < std::min(dataset.sequences.size(), start + kChunk); ++i) {
      indices.push_back(i);
    }
    const Batch batch = make_batch(dataset, indices);
    const ForwardResult fwd = forward(params, batch);
    for (size_t b = 0; b < batch.batch_size; ++b) {
      for (size_t t = 0; t < batch.length; ++t) {
        if (!batch.masked(b, t)) continue;
        const double* row = fwd.logits.data() + (b * batch.length + t) * V;
        const uint32_t target = batch.input(b, t + 1);
        double max_logit = row[0];
        for (size_t i = 1; i < V; ++i) max_logit = std::max(max_logit, row[i]);
        double z = 0.0;
        for (size_t i = 0; i < V; ++i) z += std::exp(row[i] - max_logit);
        total_nll += -(row[target] - max_logit - std::log(z));
        ++positions;
      }
    }
  }
  if (positions == 0) raise(ErrorCode::EmptyDataset, "no scoreable positions");
  return std::exp(total_nll / static_cast<double>(positions));
}

std::vector<uint32_t> generate(const Parameters& params, const std::vector<uint32_t>& prompt,
                               size_t max_new_tokens, uint32_t eos_id) {
  const ModelConfig& c = params.config;
  if (prompt.size() >= c.max_seq_len) {
    raise(ErrorCode::PromptTooLong, "prompt length " + std::to_string(prompt.size()) +
                                        " must be < " + std::to_string(c.max_seq_len));
  }
  if (prompt.empty()) raise(ErrorCode::InvalidInput, "prompt must not be empty");
  std::vector<uint32_t> ids = prompt;
  for (size_t step = 0; step < max_new_tokens && ids.size() < c.max_seq_len; ++step) {
    Batch batch;
    batch.batch_size = 1;
    batch.length = ids.size();
    batch.inputs = ids;
    batch.loss_mask.assign(ids.size(), 0);
    const ForwardResult fwd = forward(params, batch);
    const double* row = fwd.logits.data() + (ids.size() - 1) * c.vocab_size;
    uint32_t best = 0;
    for (size_t i = 1; i < c.vocab_size; ++i) {
      if (row[i] > row[best]) best = static_cast<uint32_t>(i);  // ties keep the lowest id
    }
    ids.push_back(best);
    if (best == eos_id) break;
  }
  return ids;
}

std::vector<double> flatten_tensors(const std::vector<Tensor>& tensors) {
  std::vector<double> flat;
  size_t total = 0;
  for (const auto& t : tensors) total += t.numel();
  flat.reserve(total);
  for (const auto& t : tensors) flat.insert(flat.end(), t.data.begin(), t.data.end());
  return flat;
}

void unflatten_tensors(const std::vector<double>& flat, std::vector<Tensor>& tensors) {
  size_t offset = 0;
  for (auto& t : tensors) {
    if (offset + t.numel() > flat.size()) raise(ErrorCode::LengthMismatch, "flat vector too short");
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(offset),
              flat.begin() + static_cast<std::ptrdiff_t>(offset + t.numel()), t.data.begin());
    offset += t.numel();
  }
  if (offset != flat.size()) raise(ErrorCode::LengthMismatch, "flat vector too long");
}

// ---------------------------------------------------------------------------
// parameter container
// ---------------------------------------------------------------------------

namespace {
constexpr char kParamsMagic[4] = {'D', 'A', 'P', 'T'};
constexpr uint32_t kParamsVersion = 1;
constexpr uint8_t kDtypeF64 = 1;
}  // namespace

std::string params_to_bytes(const Parameters& params, uint64_t config_hash) {
  ByteWriter w;
  w.put_bytes(std::string_view(kParamsMagic, 4));
  w.put_u32(kParamsVersion);
  w.put_u64(config_hash);
  w.put_u32(static_cast<uint32_t>(params.tensors.size()));
  for (size_t i = 0; i < params.tensors.size(); ++i) {
    const Tensor& t = params.tensors[i];
    w.put_string(params.names[i]);
    w.put_u8(kDtypeF64);
    w.put_u8(static_cast<uint8_t>(t.shape.size()));
    for (size_t d : t.shape) w.put_u64(d);
    for (double v : t.data) w.put_f64(v);
  }
  return w.take();
}

Parameters params_from_bytes(std::string_view bytes, const ModelConfig& config,
                             uint64_t expected_config_hash) {
  ByteReader r(bytes);
  if (r.get_bytes(4) != std::string_view(kParamsMagic, 4)) {
    raise(ErrorCode::InvalidInput, "not a parameter container");
  }
  if (r.get_u32() != kParamsVersion) raise(ErrorCode::InvalidInput, "unsupported container version");
  const uint64_t stored_hash = r.get_u64();
  if (expected_config_hash != 0 && stored_hash != expected_config_hash) {
    raise(ErrorCode::ConfigMismatch, "parameter container was produced with a different config");
  }
  const uint32_t count = r.get_u32();

  Parameters params;
  params.config = config;
  const auto layout = parameter_layout(config);
  if (count != layout.size()) {
    raise(ErrorCode::ConfigMismatch, "tensor count does not match model layout");
  }
  for (const auto& [name, shape] : layout) {
    const std::string stored_name = r.get_string();
    if (stored_name != name) {
      raise(ErrorCode::ConfigMismatch, "tensor '" + stored_name + "' does not match layout '" + name + "'");
    }
    if (r.get_u8() != kDtypeF64) raise(ErrorCode::InvalidInput, "unsupported dtype tag");
    const uint8_t ndim = r.get_u8();
    std::vector<size_t> stored_shape(ndim);
    for (auto& d : stored_shape) d = r.get_u64();
    if (stored_shape != shape) raise(ErrorCode::ConfigMismatch, "shape mismatch for '" + name + "'");
    Tensor tensor(shape);
    for (double& v : tensor.data) v = r.get_f64();
    params.names.push_back(name);
    params.tensors.push_back(std::move(tensor));
  }
  if (!r.at_end()) raise(ErrorCode::InvalidInput, "trailing bytes in parameter container");
  return params;
}

void save_params(const std::string& path, const Parameters& params, uint64_t config_hash) {
  atomic_write_file(path, params_to_bytes(params, config_hash), ErrorCode::CheckpointWriteFailure);
}

Parameters load_params(const std::string& path, const ModelConfig& config,
                       uint64_t expected_config_hash) {
  return params_from_bytes(read_file(path), config, expected_config_hash);
}

}  // namespace dap
