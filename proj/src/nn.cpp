#include "esmask/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "esmask/rng.hpp"
#include "esmask/search_dist.hpp"

namespace esmask {

std::size_t FlatModel::maskable_count() const {
  std::size_t c = 0;
  for (std::uint8_t f : maskable) c += f;
  return c;
}

std::vector<std::size_t> FlatModel::maskable_param_indices() const {
  std::vector<std::size_t> out;
  out.reserve(maskable_count());
  for (std::size_t j = 0; j < maskable.size(); ++j)
    if (maskable[j]) out.push_back(j);
  return out;
}

FlatModel make_mlp(const MlpConfig& cfg) {
  if (cfg.widths.size() < 2)
    throw std::invalid_argument("make_mlp: need at least input and output widths");
  FlatModel m;
  std::size_t offset = 0;
  std::size_t bn_offset = 0;
  const std::size_t num_dense = cfg.widths.size() - 1;
  for (std::size_t l = 0; l < num_dense; ++l) {
    const bool final_layer = (l + 1 == num_dense);
    LayerDesc dense;
    dense.kind = LayerKind::Dense;
    dense.in = cfg.widths[l];
    dense.out = cfg.widths[l + 1];
    dense.weight_offset = offset;
    offset += dense.in * dense.out;
    dense.has_bias = cfg.bias;
    if (cfg.bias) {
      dense.bias_offset = offset;
      offset += dense.out;
    }
    dense.maskable = cfg.mask_final_layer || !final_layer;
    m.layers.push_back(dense);

    if (cfg.batch_norm && !final_layer) {
      LayerDesc bn;
      bn.kind = LayerKind::BatchNorm;
      bn.in = bn.out = dense.out;
      bn.weight_offset = offset;  // gamma
      offset += bn.out;
      bn.bias_offset = offset;  // beta
      offset += bn.out;
      bn.running_offset = bn_offset;
      bn_offset += bn.out;
      m.layers.push_back(bn);
    }
  }

  m.params.assign(offset, 0.0);
  m.momentum.assign(offset, 0.0);
  m.bn_running_mean.assign(bn_offset, 0.0);
  m.bn_running_var.assign(bn_offset, 1.0);
  m.num_classes = cfg.widths.back() == 1 ? 2 : cfg.widths.back();
  m.maskable.assign(offset, 0);

  Rng rng(derive_seed(cfg.init_seed, stream_tag::kInit));
  for (const LayerDesc& layer : m.layers) {
    if (layer.kind == LayerKind::Dense) {
      const double stddev = 1.0 / std::sqrt(static_cast<double>(layer.in));
      for (std::size_t j = 0; j < layer.in * layer.out; ++j)
        m.params[layer.weight_offset + j] = truncated_normal(rng, stddev);
      if (layer.maskable)
        std::fill_n(m.maskable.begin() + static_cast<std::ptrdiff_t>(layer.weight_offset),
                    layer.in * layer.out, std::uint8_t{1});
    } else {
      std::fill_n(m.params.begin() + static_cast<std::ptrdiff_t>(layer.weight_offset),
                  layer.out, 1.0);  // gamma
    }
  }
  return m;
}

namespace {

bool relu_after(const FlatModel& model, std::size_t layer_idx) {
  if (layer_idx + 1 == model.layers.size()) return false;
  if (model.layers[layer_idx].kind == LayerKind::Dense &&
      model.layers[layer_idx + 1].kind == LayerKind::BatchNorm)
    return false;  // the ReLU follows the batch norm
  return true;
}

struct TapeEntry {
  std::vector<double> input;  // N x in, activation entering the layer
  std::vector<double> xhat;   // BN only, N x features
  std::vector<double> inv_std;  // BN only, per feature
  bool relu = false;
};

struct Head {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<double> dlogits;  // filled only when requested
};

Head apply_head(std::span<const double> logits, const Batch& batch,
                std::size_t out_dim, bool want_grad) {
  const std::size_t n = batch.size();
  Head head;
  if (want_grad) head.dlogits.assign(n * out_dim, 0.0);
  double loss = 0.0;
  std::size_t correct = 0;

  if (out_dim == 1) {
    // Logistic head over two classes; positive logit means class 1.
    for (std::size_t i = 0; i < n; ++i) {
      const double t = logits[i];
      const double y = batch.labels[i] == 1 ? 1.0 : 0.0;
      // softplus(x) = log(1 + e^x), stable for both signs
      const double sp = t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
      loss += y * (sp - t) + (1.0 - y) * sp;
      const int pred = t > 0.0 ? 1 : 0;
      if (pred == batch.labels[i]) ++correct;
      if (want_grad) {
        const double sig = 1.0 / (1.0 + std::exp(-t));
        head.dlogits[i] = (sig - y) / static_cast<double>(n);
      }
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = logits.data() + i * out_dim;
      double max_logit = row[0];
      std::size_t arg = 0;
      for (std::size_t c = 1; c < out_dim; ++c)
        if (row[c] > max_logit) {
          max_logit = row[c];
          arg = c;
        }
      double denom = 0.0;
      for (std::size_t c = 0; c < out_dim; ++c) denom += std::exp(row[c] - max_logit);
      const auto label = static_cast<std::size_t>(batch.labels[i]);
      loss += -(row[label] - max_logit - std::log(denom));
      if (arg == label) ++correct;
      if (want_grad) {
        double* drow = head.dlogits.data() + i * out_dim;
        for (std::size_t c = 0; c < out_dim; ++c)
          drow[c] = (std::exp(row[c] - max_logit) / denom -
                     (c == label ? 1.0 : 0.0)) /
                    static_cast<double>(n);
      }
    }
  }
  head.loss = loss / static_cast<double>(n);
  head.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return head;
}

// Forward pass; fills `tape` (when non-null) with what backward needs.
std::vector<double> run_forward(const FlatModel& model,
                                std::span<const double> params,
                                const Batch& batch, bool training_bn,
                                std::vector<TapeEntry>* tape,
                                BnBatchStats* stats_out) {
  if (params.size() != model.dim())
    throw std::invalid_argument("forward: parameter length mismatch");
  if (batch.size() == 0) throw std::invalid_argument("forward: empty batch");
  if (batch.feature_dim != model.layers.front().in)
    throw std::invalid_argument("forward: feature dimension mismatch");

  const std::size_t n = batch.size();
  std::vector<double> act(batch.features.begin(), batch.features.end());
  if (tape) tape->resize(model.layers.size());
  if (stats_out) {
    stats_out->mean.assign(model.bn_running_mean.size(), 0.0);
    stats_out->var.assign(model.bn_running_var.size(), 0.0);
  }

  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const LayerDesc& layer = model.layers[li];
    if (tape) {
      (*tape)[li].input = std::move(act);
      act = {};  // the layer reads from the tape copy below
    }
    const std::vector<double>& in = tape ? (*tape)[li].input : act;

    std::vector<double> out(n * layer.out);
    if (layer.kind == LayerKind::Dense) {
      const double* w = params.data() + layer.weight_offset;
      const double* b = layer.has_bias ? params.data() + layer.bias_offset : nullptr;
      // Transposed weights give stride-1 rank-1 updates; blocking four
      // examples per weight sweep keeps the traffic off the weight matrix.
      std::vector<double> wt(layer.in * layer.out);
      for (std::size_t o = 0; o < layer.out; ++o)
        for (std::size_t k = 0; k < layer.in; ++k)
          wt[k * layer.out + o] = w[o * layer.in + k];
      for (std::size_t i = 0; i < n; ++i) {
        double* y = out.data() + i * layer.out;
        if (b)
          std::copy(b, b + layer.out, y);
        else
          std::fill(y, y + layer.out, 0.0);
      }
      const std::size_t in_w = layer.in, out_w = layer.out;
      std::size_t i = 0;
      for (; i + 4 <= n; i += 4) {
        const double* x0 = in.data() + (i + 0) * in_w;
        const double* x1 = in.data() + (i + 1) * in_w;
        const double* x2 = in.data() + (i + 2) * in_w;
        const double* x3 = in.data() + (i + 3) * in_w;
        double* y0 = out.data() + (i + 0) * out_w;
        double* y1 = out.data() + (i + 1) * out_w;
        double* y2 = out.data() + (i + 2) * out_w;
        double* y3 = out.data() + (i + 3) * out_w;
        for (std::size_t k = 0; k < in_w; ++k) {
          const double* wrow = wt.data() + k * out_w;
          const double a0 = x0[k], a1 = x1[k], a2 = x2[k], a3 = x3[k];
          for (std::size_t o = 0; o < out_w; ++o) {
            const double wv = wrow[o];
            y0[o] += a0 * wv;
            y1[o] += a1 * wv;
            y2[o] += a2 * wv;
            y3[o] += a3 * wv;
          }
        }
      }
      for (; i < n; ++i) {
        const double* x = in.data() + i * in_w;
        double* y = out.data() + i * out_w;
        for (std::size_t k = 0; k < in_w; ++k) {
          const double xv = x[k];
          const double* wrow = wt.data() + k * out_w;
          for (std::size_t o = 0; o < out_w; ++o) y[o] += xv * wrow[o];
        }
      }
    } else {
      const std::size_t f = layer.out;
      const double* gamma = params.data() + layer.weight_offset;
      const double* beta = params.data() + layer.bias_offset;
      std::vector<double> mean(f, 0.0), var(f, 0.0);
      if (training_bn) {
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t c = 0; c < f; ++c) mean[c] += in[i * f + c];
        for (double& v : mean) v /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t c = 0; c < f; ++c) {
            const double d = in[i * f + c] - mean[c];
            var[c] += d * d;
          }
        for (double& v : var) v /= static_cast<double>(n);
      } else {
        for (std::size_t c = 0; c < f; ++c) {
          mean[c] = model.bn_running_mean[layer.running_offset + c];
          var[c] = model.bn_running_var[layer.running_offset + c];
        }
      }
      if (stats_out && training_bn) {
        for (std::size_t c = 0; c < f; ++c) {
          stats_out->mean[layer.running_offset + c] = mean[c];
          stats_out->var[layer.running_offset + c] = var[c];
        }
      }
      std::vector<double> inv_std(f);
      for (std::size_t c = 0; c < f; ++c)
        inv_std[c] = 1.0 / std::sqrt(var[c] + model.bn_epsilon);
      if (tape) {
        (*tape)[li].xhat.resize(n * f);
        (*tape)[li].inv_std = inv_std;
      }
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < f; ++c) {
          const double xh = (in[i * f + c] - mean[c]) * inv_std[c];
          if (tape) (*tape)[li].xhat[i * f + c] = xh;
          out[i * f + c] = gamma[c] * xh + beta[c];
        }
    }

    if (relu_after(model, li)) {
      for (double& v : out) v = std::max(0.0, v);
      if (tape) (*tape)[li].relu = true;
    }
    act = std::move(out);
  }
  return act;
}

}  // namespace

EvalResult eval_with_params(const FlatModel& model, std::span<const double> params,
                            const Batch& batch, bool training_bn,
                            BnBatchStats* stats_out) {
  const std::vector<double> logits =
      run_forward(model, params, batch, training_bn, nullptr, stats_out);
  const Head head =
      apply_head(logits, batch, model.layers.back().out, /*want_grad=*/false);
  return {head.loss, head.accuracy};
}

GradResult forward_backward(const FlatModel& model, std::span<const double> params,
                            const Batch& batch, BnBatchStats* stats_out) {
  std::vector<TapeEntry> tape;
  const std::vector<double> logits =
      run_forward(model, params, batch, /*training_bn=*/true, &tape, stats_out);
  Head head = apply_head(logits, batch, model.layers.back().out, /*want_grad=*/true);

  GradResult result;
  result.loss = head.loss;
  result.accuracy = head.accuracy;
  result.grad.assign(model.dim(), 0.0);

  const std::size_t n = batch.size();
  std::vector<double> delta = std::move(head.dlogits);  // d loss / d layer-output

  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const LayerDesc& layer = model.layers[li];
    const TapeEntry& t = tape[li];

    if (t.relu) {
      // Post-activation values are the next layer's stored input.
      const std::vector<double>& post =
          li + 1 < model.layers.size() ? tape[li + 1].input : t.input;  // unreachable fallback
      for (std::size_t i = 0; i < delta.size(); ++i)
        if (post[i] <= 0.0) delta[i] = 0.0;
    }

    std::vector<double> dinput(n * layer.in, 0.0);
    if (layer.kind == LayerKind::Dense) {
      const double* w = params.data() + layer.weight_offset;
      double* dw = result.grad.data() + layer.weight_offset;
      double* db = layer.has_bias ? result.grad.data() + layer.bias_offset : nullptr;
      const std::size_t in_w = layer.in, out_w = layer.out;
      if (db) {
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t o = 0; o < out_w; ++o) db[o] += delta[i * out_w + o];
      }
      // same four-example blocking as the forward pass
      std::size_t i = 0;
      for (; i + 4 <= n; i += 4) {
        const double* x0 = t.input.data() + (i + 0) * in_w;
        const double* x1 = t.input.data() + (i + 1) * in_w;
        const double* x2 = t.input.data() + (i + 2) * in_w;
        const double* x3 = t.input.data() + (i + 3) * in_w;
        const double* dy0 = delta.data() + (i + 0) * out_w;
        const double* dy1 = delta.data() + (i + 1) * out_w;
        const double* dy2 = delta.data() + (i + 2) * out_w;
        const double* dy3 = delta.data() + (i + 3) * out_w;
        double* dx0 = dinput.data() + (i + 0) * in_w;
        double* dx1 = dinput.data() + (i + 1) * in_w;
        double* dx2 = dinput.data() + (i + 2) * in_w;
        double* dx3 = dinput.data() + (i + 3) * in_w;
        for (std::size_t o = 0; o < out_w; ++o) {
          const double g0 = dy0[o], g1 = dy1[o], g2 = dy2[o], g3 = dy3[o];
          const double* wrow = w + o * in_w;
          double* dwrow = dw + o * in_w;
          for (std::size_t k = 0; k < in_w; ++k) {
            dwrow[k] += g0 * x0[k] + g1 * x1[k] + g2 * x2[k] + g3 * x3[k];
            const double wv = wrow[k];
            dx0[k] += g0 * wv;
            dx1[k] += g1 * wv;
            dx2[k] += g2 * wv;
            dx3[k] += g3 * wv;
          }
        }
      }
      for (; i < n; ++i) {
        const double* x = t.input.data() + i * in_w;
        const double* dy = delta.data() + i * out_w;
        double* dx = dinput.data() + i * in_w;
        for (std::size_t o = 0; o < out_w; ++o) {
          const double g = dy[o];
          const double* wrow = w + o * in_w;
          double* dwrow = dw + o * in_w;
          for (std::size_t k = 0; k < in_w; ++k) {
            dwrow[k] += g * x[k];
            dx[k] += g * wrow[k];
          }
        }
      }
    } else {
      const std::size_t f = layer.out;
      const double* gamma = params.data() + layer.weight_offset;
      double* dgamma = result.grad.data() + layer.weight_offset;
      double* dbeta = result.grad.data() + layer.bias_offset;
      // Standard training-mode batch-norm backward over batch statistics.
      std::vector<double> sum_dxhat(f, 0.0), sum_dxhat_xhat(f, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < f; ++c) {
          const double dy = delta[i * f + c];
          const double xh = t.xhat[i * f + c];
          dgamma[c] += dy * xh;
          dbeta[c] += dy;
          const double dxhat = dy * gamma[c];
          sum_dxhat[c] += dxhat;
          sum_dxhat_xhat[c] += dxhat * xh;
        }
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < f; ++c) {
          const double dxhat = delta[i * f + c] * gamma[c];
          dinput[i * f + c] =
              t.inv_std[c] * (dxhat - inv_n * sum_dxhat[c] -
                              inv_n * t.xhat[i * f + c] * sum_dxhat_xhat[c]);
        }
    }
    delta = std::move(dinput);
  }
  return result;
}

std::vector<double> apply_param_mask(std::span<const double> params,
                                     std::span<const std::uint8_t> mask) {
  if (mask.size() != params.size())
    throw std::invalid_argument("apply_param_mask: length mismatch");
  std::vector<double> out(params.begin(), params.end());
  for (std::size_t j = 0; j < out.size(); ++j)
    if (!mask[j]) out[j] = 0.0;
  return out;
}

EvalResult forward(const FlatModel& model, std::span<const std::uint8_t> mask,
                   const Batch& batch, bool training_bn) {
  if (mask.empty()) return eval_with_params(model, model.params, batch, training_bn);
  const std::vector<double> masked = apply_param_mask(model.params, mask);
  return eval_with_params(model, masked, batch, training_bn);
}

GradResult backward(const FlatModel& model, std::span<const std::uint8_t> mask,
                    const Batch& batch) {
  if (mask.empty()) return forward_backward(model, model.params, batch);
  const std::vector<double> masked = apply_param_mask(model.params, mask);
  GradResult result = forward_backward(model, masked, batch);
  for (std::size_t j = 0; j < result.grad.size(); ++j)
    if (!mask[j]) result.grad[j] = 0.0;
  return result;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("train config: lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw std::invalid_argument("train config: momentum must be in [0, 1)");
  if (weight_decay < 0.0)
    throw std::invalid_argument("train config: weight_decay must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (steps < 1) throw std::invalid_argument("train config: steps must be >= 1");
  if (generation_size < 1)
    throw std::invalid_argument("train config: generation_size must be >= 1");
}

void sgd_momentum_step(FlatModel& model, std::span<const double> grad,
                       const TrainConfig& cfg,
                       std::span<const std::uint8_t> decay_eligible) {
  if (grad.size() != model.dim())
    throw std::invalid_argument("sgd: gradient length mismatch");
  if (!decay_eligible.empty() && decay_eligible.size() != model.dim())
    throw std::invalid_argument("sgd: decay mask length mismatch");
  for (double g : grad)
    if (!std::isfinite(g)) throw std::invalid_argument("sgd: non-finite gradient");

  for (std::size_t j = 0; j < model.dim(); ++j) {
    double g = grad[j];
    if (cfg.weight_decay > 0.0 && (decay_eligible.empty() || decay_eligible[j]))
      g += cfg.weight_decay * model.params[j];
    model.momentum[j] = cfg.momentum * model.momentum[j] + g;
    model.params[j] -= cfg.lr * model.momentum[j];
  }
}

void update_bn_running_stats(FlatModel& model,
                             std::span<const BnBatchStats> stats) {
  if (model.bn_running_mean.empty() || stats.empty()) return;
  const std::size_t f = model.bn_running_mean.size();
  std::vector<double> mean(f, 0.0), var(f, 0.0);
  for (const BnBatchStats& s : stats) {
    for (std::size_t c = 0; c < f; ++c) {
      mean[c] += s.mean[c];
      var[c] += s.var[c];
    }
  }
  const double inv = 1.0 / static_cast<double>(stats.size());
  for (std::size_t c = 0; c < f; ++c) {
    model.bn_running_mean[c] =
        model.bn_momentum * model.bn_running_mean[c] + (1.0 - model.bn_momentum) * mean[c] * inv;
    model.bn_running_var[c] =
        model.bn_momentum * model.bn_running_var[c] + (1.0 - model.bn_momentum) * var[c] * inv;
  }
}

EvalResult evaluate_split(const FlatModel& model, std::span<const double> params,
                          const Dataset& dataset,
                          std::span<const std::size_t> indices, bool training_bn,
                          std::size_t chunk) {
  if (indices.empty()) throw std::invalid_argument("evaluate_split: empty split");
  double loss = 0.0, acc = 0.0;
  std::size_t done = 0;
  while (done < indices.size()) {
    const std::size_t take = std::min(chunk, indices.size() - done);
    const Batch batch = full_split_batch(dataset, indices.subspan(done, take));
    const EvalResult r = eval_with_params(model, params, batch, training_bn);
    loss += r.loss * static_cast<double>(take);
    acc += r.accuracy * static_cast<double>(take);
    done += take;
  }
  const double inv = 1.0 / static_cast<double>(indices.size());
  return {loss * inv, acc * inv};
}

}  // namespace esmask
