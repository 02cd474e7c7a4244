#include "xannot/neural.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <numeric>

#include "xannot/io.hpp"
#include "xannot/random.hpp"

namespace xannot::neural {

namespace {

std::size_t product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void require_rank(const Tensor& t, int rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Tensor::Tensor(std::vector<int> shape, double fill) : shape_(std::move(shape)) {
  values_.assign(product(shape_), fill);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != product(shape_)) {
    throw ShapeError("tensor value count does not match shape " + shape_str(shape_));
  }
}

std::span<double> Tensor::grad() {
  if (grad_.size() != values_.size()) grad_.assign(values_.size(), 0.0);
  return grad_;
}

void Tensor::zero_grad() { grad_.assign(values_.size(), 0.0); }

// --- conv3x3 -----------------------------------------------------------------

Tensor conv3x3(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 3, "conv3x3 input");
  require_rank(weight, 4, "conv3x3 weight");
  const int h = x.dim(0), w = x.dim(1), cin = x.dim(2), cout = weight.dim(0);
  if (weight.dim(1) != cin || weight.dim(2) != 3 || weight.dim(3) != 3) {
    throw ShapeError("conv3x3: weight " + shape_str(weight.shape()) + " does not match input " + shape_str(x.shape()));
  }
  if (bias.rank() != 1 || bias.dim(0) != cout) throw ShapeError("conv3x3: bias must have Cout entries");

  Tensor y({h, w, cout});
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double* out = &y[(static_cast<std::size_t>(r) * w + c) * cout];
      for (int o = 0; o < cout; ++o) out[o] = bias[static_cast<std::size_t>(o)];
      for (int ky = 0; ky < 3; ++ky) {
        const int rr = r + ky - 1;
        if (rr < 0 || rr >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int cc = c + kx - 1;
          if (cc < 0 || cc >= w) continue;
          const double* in = &x[(static_cast<std::size_t>(rr) * w + cc) * cin];
          for (int o = 0; o < cout; ++o) {
            const double* k = &weight[((static_cast<std::size_t>(o) * cin) * 3 + ky) * 3 + kx];
            double acc = 0.0;
            for (int i = 0; i < cin; ++i) acc += k[static_cast<std::size_t>(i) * 9] * in[i];
            out[o] += acc;
          }
        }
      }
    }
  }
  return y;
}

void conv3x3_backward(Tensor& x, Tensor& weight, Tensor& bias, const Tensor& dy) {
  const int h = x.dim(0), w = x.dim(1), cin = x.dim(2), cout = weight.dim(0);
  if (dy.shape() != std::vector<int>{h, w, cout}) throw ShapeError("conv3x3_backward: upstream shape mismatch");
  auto dx = x.grad();
  auto dw = weight.grad();
  auto db = bias.grad();
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double* g = &dy[(static_cast<std::size_t>(r) * w + c) * cout];
      for (int o = 0; o < cout; ++o) db[static_cast<std::size_t>(o)] += g[o];
      for (int ky = 0; ky < 3; ++ky) {
        const int rr = r + ky - 1;
        if (rr < 0 || rr >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int cc = c + kx - 1;
          if (cc < 0 || cc >= w) continue;
          const std::size_t in_base = (static_cast<std::size_t>(rr) * w + cc) * cin;
          for (int o = 0; o < cout; ++o) {
            const std::size_t k_base = ((static_cast<std::size_t>(o) * cin) * 3 + ky) * 3 + kx;
            for (int i = 0; i < cin; ++i) {
              const std::size_t ki = k_base + static_cast<std::size_t>(i) * 9;
              dw[ki] += g[o] * x[in_base + i];
              dx[in_base + i] += g[o] * weight[ki];
            }
          }
        }
      }
    }
  }
}

// --- layernorm ---------------------------------------------------------------

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& shift, double epsilon) {
  if (x.rank() < 1) throw ShapeError("layernorm: scalar input");
  const int c = x.shape().back();
  if (gain.rank() != 1 || gain.dim(0) != c || shift.rank() != 1 || shift.dim(0) != c) {
    throw ShapeError("layernorm: gain/shift must have one entry per channel");
  }
  Tensor y(x.shape());
  const std::size_t positions = c == 0 ? 0 : x.size() / static_cast<std::size_t>(c);
  for (std::size_t p = 0; p < positions; ++p) {
    const double* in = &x[p * c];
    double* out = &y[p * c];
    double mean = 0.0;
    for (int i = 0; i < c; ++i) mean += in[i];
    mean /= c;
    double var = 0.0;
    for (int i = 0; i < c; ++i) var += (in[i] - mean) * (in[i] - mean);
    var /= c;
    const double rstd = 1.0 / std::sqrt(var + epsilon);
    for (int i = 0; i < c; ++i) out[i] = gain[static_cast<std::size_t>(i)] * (in[i] - mean) * rstd + shift[static_cast<std::size_t>(i)];
  }
  return y;
}

void layernorm_backward(Tensor& x, Tensor& gain, Tensor& shift, double epsilon, const Tensor& dy) {
  require_same_shape(x, dy, "layernorm_backward");
  const int c = x.shape().back();
  auto dx = x.grad();
  auto dg = gain.grad();
  auto ds = shift.grad();
  std::vector<double> xhat(static_cast<std::size_t>(c)), dxhat(static_cast<std::size_t>(c));
  const std::size_t positions = c == 0 ? 0 : x.size() / static_cast<std::size_t>(c);
  for (std::size_t p = 0; p < positions; ++p) {
    const double* in = &x[p * c];
    const double* g = &dy[p * c];
    double mean = 0.0;
    for (int i = 0; i < c; ++i) mean += in[i];
    mean /= c;
    double var = 0.0;
    for (int i = 0; i < c; ++i) var += (in[i] - mean) * (in[i] - mean);
    var /= c;
    const double rstd = 1.0 / std::sqrt(var + epsilon);
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (int i = 0; i < c; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      xhat[ui] = (in[i] - mean) * rstd;
      dxhat[ui] = g[i] * gain[ui];
      dg[ui] += g[i] * xhat[ui];
      ds[ui] += g[i];
      mean_dxhat += dxhat[ui];
      mean_dxhat_xhat += dxhat[ui] * xhat[ui];
    }
    mean_dxhat /= c;
    mean_dxhat_xhat /= c;
    for (int i = 0; i < c; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      dx[p * c + ui] += rstd * (dxhat[ui] - mean_dxhat - xhat[ui] * mean_dxhat_xhat);
    }
  }
}

// --- gelu --------------------------------------------------------------------

Tensor gelu(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    y[i] = v * 0.5 * (1.0 + std::erf(v * kInvSqrt2));
  }
  return y;
}

void gelu_backward(Tensor& x, const Tensor& dy) {
  require_same_shape(x, dy, "gelu_backward");
  auto dx = x.grad();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
    dx[i] += dy[i] * (cdf + v * pdf);
  }
}

// --- maxpool -----------------------------------------------------------------

namespace {

std::size_t pool_argmax(const Tensor& x, int r, int c, int ch) {
  const int w = x.dim(1), cn = x.dim(2);
  std::size_t best = (static_cast<std::size_t>(2 * r) * w + 2 * c) * cn + ch;
  for (int dy = 0; dy < 2; ++dy) {
    for (int dx = 0; dx < 2; ++dx) {
      const std::size_t idx = (static_cast<std::size_t>(2 * r + dy) * w + 2 * c + dx) * cn + ch;
      if (x[idx] > x[best]) best = idx;
    }
  }
  return best;
}

}  // namespace

Tensor maxpool2x2(const Tensor& x) {
  require_rank(x, 3, "maxpool2x2");
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (h % 2 != 0 || w % 2 != 0) throw ShapeError("maxpool2x2: spatial dims must be even, got " + shape_str(x.shape()));
  Tensor y({h / 2, w / 2, c});
  for (int r = 0; r < h / 2; ++r) {
    for (int cc = 0; cc < w / 2; ++cc) {
      for (int ch = 0; ch < c; ++ch) {
        y[(static_cast<std::size_t>(r) * (w / 2) + cc) * c + ch] = x[pool_argmax(x, r, cc, ch)];
      }
    }
  }
  return y;
}

void maxpool2x2_backward(Tensor& x, const Tensor& dy) {
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (dy.shape() != std::vector<int>{h / 2, w / 2, c}) throw ShapeError("maxpool2x2_backward: upstream shape mismatch");
  auto dx = x.grad();
  for (int r = 0; r < h / 2; ++r) {
    for (int cc = 0; cc < w / 2; ++cc) {
      for (int ch = 0; ch < c; ++ch) {
        dx[pool_argmax(x, r, cc, ch)] += dy[(static_cast<std::size_t>(r) * (w / 2) + cc) * c + ch];
      }
    }
  }
}

// --- linear ------------------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const int n = x.dim(0), cin = x.dim(1), cout = weight.dim(0);
  if (weight.dim(1) != cin) throw ShapeError("linear: weight " + shape_str(weight.shape()) + " vs input " + shape_str(x.shape()));
  if (bias.rank() != 1 || bias.dim(0) != cout) throw ShapeError("linear: bias must have Cout entries");
  Tensor y({n, cout});
  for (int r = 0; r < n; ++r) {
    for (int o = 0; o < cout; ++o) {
      double acc = bias[static_cast<std::size_t>(o)];
      for (int i = 0; i < cin; ++i) {
        acc += weight[static_cast<std::size_t>(o) * cin + i] * x[static_cast<std::size_t>(r) * cin + i];
      }
      y[static_cast<std::size_t>(r) * cout + o] = acc;
    }
  }
  return y;
}

void linear_backward(Tensor& x, Tensor& weight, Tensor& bias, const Tensor& dy) {
  const int n = x.dim(0), cin = x.dim(1), cout = weight.dim(0);
  if (dy.shape() != std::vector<int>{n, cout}) throw ShapeError("linear_backward: upstream shape mismatch");
  auto dx = x.grad();
  auto dw = weight.grad();
  auto db = bias.grad();
  for (int r = 0; r < n; ++r) {
    for (int o = 0; o < cout; ++o) {
      const double g = dy[static_cast<std::size_t>(r) * cout + o];
      db[static_cast<std::size_t>(o)] += g;
      for (int i = 0; i < cin; ++i) {
        dw[static_cast<std::size_t>(o) * cin + i] += g * x[static_cast<std::size_t>(r) * cin + i];
        dx[static_cast<std::size_t>(r) * cin + i] += g * weight[static_cast<std::size_t>(o) * cin + i];
      }
    }
  }
}

// --- softmax -----------------------------------------------------------------

Tensor softmax(const Tensor& x) {
  if (x.rank() < 1 || x.shape().back() == 0) throw ShapeError("softmax: empty last axis");
  const int m = x.shape().back();
  Tensor y(x.shape());
  for (std::size_t row = 0; row < x.size() / static_cast<std::size_t>(m); ++row) {
    const double* in = &x[row * m];
    double* out = &y[row * m];
    const double mx = *std::max_element(in, in + m);
    double sum = 0.0;
    for (int i = 0; i < m; ++i) {
      out[i] = std::exp(in[i] - mx);
      sum += out[i];
    }
    for (int i = 0; i < m; ++i) out[i] /= sum;
  }
  return y;
}

void softmax_backward(Tensor& x, const Tensor& y, const Tensor& dy) {
  require_same_shape(x, y, "softmax_backward");
  require_same_shape(y, dy, "softmax_backward");
  const int m = x.shape().back();
  auto dx = x.grad();
  for (std::size_t row = 0; row < x.size() / static_cast<std::size_t>(m); ++row) {
    double dot = 0.0;
    for (int i = 0; i < m; ++i) dot += dy[row * m + i] * y[row * m + i];
    for (int i = 0; i < m; ++i) dx[row * m + i] += y[row * m + i] * (dy[row * m + i] - dot);
  }
}

// --- encoder -----------------------------------------------------------------

void EAEConfig::validate() const {
  for (int c : block_channels) {
    if (c < 1) throw ConfigError("EAE block widths must be >= 1");
  }
  if (token_count < 1) throw ConfigError("EAE token_count must be >= 1");
  if (token_dim < 1) throw ConfigError("EAE token_dim must be >= 1");
  if (!(layernorm_epsilon > 0.0)) throw ConfigError("EAE layernorm_epsilon must be positive");
}

namespace {

Tensor uniform_tensor(std::vector<int> shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

EAEParams EAEParams::init(const EAEConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  EAEParams p;
  int cin = 2;
  for (std::size_t b = 0; b < 3; ++b) {
    const int cout = config.block_channels[b];
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin) * 9.0);
    p.blocks[b].conv_weight = uniform_tensor({cout, cin, 3, 3}, bound, rng);
    p.blocks[b].conv_bias = uniform_tensor({cout}, bound, rng);
    p.blocks[b].norm_gain = Tensor({cout}, 1.0);
    p.blocks[b].norm_shift = Tensor({cout}, 0.0);
    cin = cout;
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin));
  p.head_weight = uniform_tensor({1, cin}, bound, rng);
  p.head_bias = uniform_tensor({1}, bound, rng);
  p.proj_weight = uniform_tensor({config.token_dim, cin}, bound, rng);
  p.proj_bias = uniform_tensor({config.token_dim}, bound, rng);
  return p;
}

std::vector<Tensor*> EAEParams::tensors() {
  std::vector<Tensor*> out;
  for (auto& b : blocks) {
    out.insert(out.end(), {&b.conv_weight, &b.conv_bias, &b.norm_gain, &b.norm_shift});
  }
  out.insert(out.end(), {&head_weight, &head_bias, &proj_weight, &proj_bias});
  return out;
}

std::vector<const Tensor*> EAEParams::tensors() const {
  std::vector<const Tensor*> out;
  for (auto* t : const_cast<EAEParams*>(this)->tensors()) out.push_back(t);
  return out;
}

std::vector<std::string> EAEParams::tensor_names() {
  std::vector<std::string> out;
  for (int b = 1; b <= 3; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    out.insert(out.end(), {p + "conv_weight", p + "conv_bias", p + "norm_gain", p + "norm_shift"});
  }
  out.insert(out.end(), {"head_weight", "head_bias", "proj_weight", "proj_bias"});
  return out;
}

void EAEParams::zero_grad() {
  for (auto* t : tensors()) t->zero_grad();
}

Tensor make_x0(const energy::DualEnergyPair& pair) {
  if (!pair.high.same_shape(pair.low)) throw ShapeError("make_x0: planes differ in size");
  const int h = pair.height(), w = pair.width();
  Tensor x({h, w, 2});
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t i = (static_cast<std::size_t>(r) * w + c) * 2;
      x[i] = pair.high(c, r) / 255.0;
      x[i + 1] = pair.low(c, r) / 255.0;
    }
  }
  return x;
}

Tensor eae_forward(const Tensor& x0, const EAEParams& params, const EAEConfig& config, EAETrace* trace) {
  config.validate();
  require_rank(x0, 3, "eae_forward");
  if (x0.dim(2) != 2) throw ShapeError("eae_forward: input must have 2 channels");
  if (x0.dim(0) % 8 != 0 || x0.dim(1) % 8 != 0 || x0.dim(0) == 0 || x0.dim(1) == 0) {
    throw ShapeError("eae_forward: H and W must be positive multiples of 8, got " + shape_str(x0.shape()));
  }
  Tensor x = x0;
  if (trace) trace->input = x0;
  for (std::size_t b = 0; b < 3; ++b) {
    const auto& bp = params.blocks[b];
    Tensor conv = conv3x3(x, bp.conv_weight, bp.conv_bias);
    Tensor norm = layernorm(conv, bp.norm_gain, bp.norm_shift, config.layernorm_epsilon);
    Tensor act = gelu(norm);
    Tensor pooled = maxpool2x2(act);
    if (trace) {
      trace->block_input[b] = std::move(x);
      trace->conv[b] = std::move(conv);
      trace->norm[b] = std::move(norm);
      trace->act[b] = std::move(act);
      trace->pooled[b] = pooled;
    }
    x = std::move(pooled);
  }
  return x;
}

namespace {

Tensor grad_of(const Tensor& t) {
  const auto g = t.grad();
  return Tensor(t.shape(), {g.begin(), g.end()});
}

}  // namespace

Tensor eae_backward(EAETrace& trace, EAEParams& params, const EAEConfig& config, const Tensor& d_x3) {
  Tensor grad = d_x3;
  for (int b = 2; b >= 0; --b) {
    const auto ub = static_cast<std::size_t>(b);
    auto& bp = params.blocks[ub];
    trace.act[ub].zero_grad();
    maxpool2x2_backward(trace.act[ub], grad);
    trace.norm[ub].zero_grad();
    gelu_backward(trace.norm[ub], grad_of(trace.act[ub]));
    trace.conv[ub].zero_grad();
    layernorm_backward(trace.conv[ub], bp.norm_gain, bp.norm_shift, config.layernorm_epsilon, grad_of(trace.norm[ub]));
    trace.block_input[ub].zero_grad();
    conv3x3_backward(trace.block_input[ub], bp.conv_weight, bp.conv_bias, grad_of(trace.conv[ub]));
    grad = grad_of(trace.block_input[ub]);
  }
  return grad;
}

// --- location initializer ----------------------------------------------------

TokenInit location_init(const Tensor& x3, const EAEParams& params, const EAEConfig& config) {
  require_rank(x3, 3, "location_init");
  const int positions = x3.dim(0) * x3.dim(1);
  const int channels = x3.dim(2);
  if (config.token_count > positions) {
    throw ConfigError("location_init: token_count " + std::to_string(config.token_count) + " exceeds " +
                      std::to_string(positions) + " positions");
  }
  const Tensor flat({positions, channels}, {x3.values().begin(), x3.values().end()});
  const Tensor scores = linear(flat, params.head_weight, params.head_bias);
  const Tensor weights = softmax(Tensor({positions}, {scores.values().begin(), scores.values().end()}));

  TokenInit out;
  out.scores.assign(scores.values().begin(), scores.values().end());
  out.weights.assign(weights.values().begin(), weights.values().end());
  std::vector<int> order(static_cast<std::size_t>(positions));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return out.weights[static_cast<std::size_t>(a)] > out.weights[static_cast<std::size_t>(b)];
  });
  out.indices.assign(order.begin(), order.begin() + config.token_count);

  Tensor selected({config.token_count, channels});
  for (int i = 0; i < config.token_count; ++i) {
    const auto src = static_cast<std::size_t>(out.indices[static_cast<std::size_t>(i)]) * channels;
    std::copy_n(&flat[src], channels, &selected[static_cast<std::size_t>(i) * channels]);
  }
  out.embeddings = linear(selected, params.proj_weight, params.proj_bias);
  return out;
}

Tensor location_init_backward(const Tensor& x3, EAEParams& params, const TokenInit& out,
                              const Tensor& d_embeddings, std::span<const double> d_weights) {
  const int positions = x3.dim(0) * x3.dim(1);
  const int channels = x3.dim(2);
  const int k = static_cast<int>(out.indices.size());
  if (d_weights.size() != static_cast<std::size_t>(positions)) {
    throw ShapeError("location_init_backward: one weight gradient per position expected");
  }
  Tensor flat({positions, channels}, {x3.values().begin(), x3.values().end()});
  flat.zero_grad();

  Tensor selected({k, channels});
  for (int i = 0; i < k; ++i) {
    const auto src = static_cast<std::size_t>(out.indices[static_cast<std::size_t>(i)]) * channels;
    std::copy_n(&flat[src], channels, &selected[static_cast<std::size_t>(i) * channels]);
  }
  selected.zero_grad();
  linear_backward(selected, params.proj_weight, params.proj_bias, d_embeddings);
  auto dflat = flat.grad();
  for (int i = 0; i < k; ++i) {
    const auto dst = static_cast<std::size_t>(out.indices[static_cast<std::size_t>(i)]) * channels;
    for (int c = 0; c < channels; ++c) dflat[dst + c] += selected.grad()[static_cast<std::size_t>(i) * channels + c];
  }

  Tensor scores({positions}, out.scores);
  scores.zero_grad();
  softmax_backward(scores, Tensor({positions}, out.weights), Tensor({positions}, {d_weights.begin(), d_weights.end()}));
  const auto ds = scores.grad();
  linear_backward(flat, params.head_weight, params.head_bias, Tensor({positions, 1}, {ds.begin(), ds.end()}));

  return Tensor(x3.shape(), {flat.grad().begin(), flat.grad().end()});
}

// --- checkpoint --------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'X', 'E', 'A', 'E', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    double v = 0.0;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  void magic() {
    need(8);
    if (std::memcmp(bytes_.data(), kMagic, 8) != 0) throw CodecError("checkpoint: bad magic");
    pos_ += 8;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw CodecError("checkpoint: truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const EAEConfig& config, const EAEParams& params) {
  config.validate();
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put_u32(out, kVersion);
  for (int c : config.block_channels) put_u32(out, static_cast<std::uint32_t>(c));
  put_u32(out, static_cast<std::uint32_t>(config.token_count));
  put_u32(out, static_cast<std::uint32_t>(config.token_dim));
  put_f64(out, config.layernorm_epsilon);
  const EAEParams reference = EAEParams::init(config, 0);
  const auto expected = reference.tensors();
  const auto actual = params.tensors();
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (actual[i]->shape() != expected[i]->shape()) {
      throw ShapeError("checkpoint: parameter " + EAEParams::tensor_names()[i] + " does not match config");
    }
    for (double v : actual[i]->values()) put_f64(out, v);
  }
  return out;
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.magic();
  if (const auto v = r.u32(); v != kVersion) throw CodecError("checkpoint: unsupported version " + std::to_string(v));
  Checkpoint ck;
  for (auto& c : ck.config.block_channels) c = static_cast<int>(r.u32());
  ck.config.token_count = static_cast<int>(r.u32());
  ck.config.token_dim = static_cast<int>(r.u32());
  ck.config.layernorm_epsilon = r.f64();
  try {
    ck.config.validate();
  } catch (const ConfigError& e) {
    throw CodecError(std::string("checkpoint: ") + e.what());
  }
  // Size check before allocating anything the header asks for.
  std::uint64_t count = 0;
  std::uint64_t cin = 2;
  for (int c : ck.config.block_channels) {
    count += static_cast<std::uint64_t>(c) * cin * 9 + 3ULL * static_cast<std::uint64_t>(c);
    cin = static_cast<std::uint64_t>(c);
  }
  count += cin + 1 + static_cast<std::uint64_t>(ck.config.token_dim) * (cin + 1);
  if (count * 8 != r.remaining()) throw CodecError("checkpoint: payload size does not match config");
  ck.params = EAEParams::init(ck.config, 0);
  for (auto* t : ck.params.tensors()) {
    for (auto& v : t->values()) v = r.f64();
  }
  if (!r.done()) throw CodecError("checkpoint: trailing bytes");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const EAEConfig& config, const EAEParams& params) {
  io::write_file(path, serialize_checkpoint(config, params));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(io::read_file(path)); }

}  // namespace xannot::neural
