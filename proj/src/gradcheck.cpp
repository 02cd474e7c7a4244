#include "xannot/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>

#include "xannot/neural.hpp"
#include "xannot/random.hpp"

namespace xannot::neural {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-5});
  return std::abs(analytic - numeric) / denom;
}

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  return std::inner_product(a.values().begin(), a.values().end(), b.values().begin(), 0.0);
}

/// Probes `coords` of `target` (all when empty) and folds the worst error into `entry`.
void probe(GradCheckEntry& entry, Tensor& target, const std::function<double()>& loss, double step,
           const std::vector<std::size_t>& coords) {
  auto check = [&](std::size_t i) {
    const double saved = target[i];
    target[i] = saved + step;
    const double plus = loss();
    target[i] = saved - step;
    const double minus = loss();
    target[i] = saved;
    const double numeric = (plus - minus) / (2.0 * step);
    entry.max_relative_error = std::max(entry.max_relative_error, relative_error(target.grad()[i], numeric));
    ++entry.coordinates;
  };
  if (coords.empty()) {
    for (std::size_t i = 0; i < target.size(); ++i) check(i);
  } else {
    for (std::size_t i : coords) check(i);
  }
}

// Which element each max-pool window picked, plus the top-k selection. A
// stencil whose two sides route differently straddles a kink.
using Routing = std::vector<std::size_t>;

struct Evaluation {
  double loss = 0.0;
  Routing routing;
};

Routing routing_of(const EAETrace& trace, const TokenInit& tokens) {
  Routing out;
  for (const auto& act : trace.act) {
    const int w = act.dim(1), c = act.dim(2);
    for (int r = 0; r < act.dim(0) / 2; ++r) {
      for (int col = 0; col < w / 2; ++col) {
        for (int ch = 0; ch < c; ++ch) {
          std::size_t best = (static_cast<std::size_t>(2 * r) * w + 2 * col) * c + ch;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t idx = (static_cast<std::size_t>(2 * r + dy) * w + 2 * col + dx) * c + ch;
              if (act[idx] > act[best]) best = idx;
            }
          }
          out.push_back(best);
        }
      }
    }
  }
  out.insert(out.end(), tokens.indices.begin(), tokens.indices.end());
  return out;
}

void probe_routed(GradCheckEntry& entry, Tensor& target, const std::function<Evaluation()>& eval,
                  const Routing& base, double step, const std::vector<std::size_t>& coords) {
  auto check = [&](std::size_t i) {
    const double saved = target[i];
    target[i] = saved + step;
    const Evaluation plus = eval();
    target[i] = saved - step;
    const Evaluation minus = eval();
    target[i] = saved;
    if (plus.routing != base || minus.routing != base) {
      ++entry.skipped;
      return;
    }
    const double numeric = (plus.loss - minus.loss) / (2.0 * step);
    entry.max_relative_error = std::max(entry.max_relative_error, relative_error(target.grad()[i], numeric));
    ++entry.coordinates;
  };
  if (coords.empty()) {
    for (std::size_t i = 0; i < target.size(); ++i) check(i);
  } else {
    for (std::size_t i : coords) check(i);
  }
}

std::vector<std::size_t> sample_coords(std::size_t n, int count, Rng& rng) {
  if (static_cast<std::size_t>(count) >= n) return {};
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  rng.shuffle(all.begin(), all.end());
  all.resize(static_cast<std::size_t>(count));
  return all;
}

GradCheckEntry check_unary(const std::string& name, Tensor x, Rng& rng, double step,
                           Tensor (*fwd)(const Tensor&), void (*bwd)(Tensor&, const Tensor&)) {
  const Tensor y = fwd(x);
  const Tensor r = random_tensor(y.shape(), rng);
  x.zero_grad();
  bwd(x, r);
  GradCheckEntry e{name};
  probe(e, x, [&] { return dot(fwd(x), r); }, step, {});
  return e;
}

}  // namespace

GradCheckReport run_gradcheck(const GradCheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(options.seed);
  const double h = options.step;
  const int s = options.op_size;
  GradCheckReport report;

  {
    Tensor x = random_tensor({s, s, 2}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    const Tensor r = random_tensor({s, s, 3}, rng);
    conv3x3_backward(x, w, b, r);
    auto loss = [&] { return dot(conv3x3(x, w, b), r); };
    GradCheckEntry e{"conv3x3"};
    probe(e, x, loss, h, {});
    probe(e, w, loss, h, {});
    probe(e, b, loss, h, {});
    report.entries.push_back(e);
  }
  for (int channels : {2, 5}) {
    Tensor x = random_tensor({s, s, channels}, rng);
    Tensor g = random_tensor({channels}, rng, 0.5, 1.5);
    Tensor sh = random_tensor({channels}, rng);
    const Tensor r = random_tensor({s, s, channels}, rng);
    layernorm_backward(x, g, sh, 1e-6, r);
    auto loss = [&] { return dot(layernorm(x, g, sh, 1e-6), r); };
    GradCheckEntry e{"layernorm/c" + std::to_string(channels)};
    probe(e, x, loss, h, {});
    probe(e, g, loss, h, {});
    probe(e, sh, loss, h, {});
    report.entries.push_back(e);
  }
  report.entries.push_back(check_unary("gelu", random_tensor({s, s, 2}, rng, -3.0, 3.0), rng, h, &gelu, &gelu_backward));
  report.entries.push_back(
      check_unary("maxpool2x2", random_tensor({s, s, 2}, rng), rng, h, &maxpool2x2, &maxpool2x2_backward));
  {
    Tensor x = random_tensor({s * s, 2}, rng);
    Tensor w = random_tensor({3, 2}, rng);
    Tensor b = random_tensor({3}, rng);
    const Tensor r = random_tensor({s * s, 3}, rng);
    linear_backward(x, w, b, r);
    auto loss = [&] { return dot(linear(x, w, b), r); };
    GradCheckEntry e{"linear"};
    probe(e, x, loss, h, {});
    probe(e, w, loss, h, {});
    probe(e, b, loss, h, {});
    report.entries.push_back(e);
  }
  {
    Tensor x = random_tensor({s, s, 2}, rng, -2.0, 2.0);
    const Tensor y = softmax(x);
    const Tensor r = random_tensor(y.shape(), rng);
    softmax_backward(x, y, r);
    GradCheckEntry e{"softmax"};
    probe(e, x, [&] { return dot(softmax(x), r); }, h, {});
    report.entries.push_back(e);
  }
  {
    // Location initializer alone, with more positions than tokens so the
    // selection actually discards some embeddings.
    EAEConfig cfg;
    cfg.block_channels = {4, 6, 8};
    cfg.token_count = 4;
    cfg.token_dim = 8;
    EAEParams params = EAEParams::init(cfg, rng.next());
    Tensor x3 = random_tensor({4, 4, 8}, rng);
    const TokenInit out = location_init(x3, params, cfg);
    const Tensor re = random_tensor(out.embeddings.shape(), rng);
    const Tensor rw = random_tensor({16}, rng);
    params.zero_grad();
    const Tensor dx3 = location_init_backward(x3, params, out, re, rw.values());
    x3.zero_grad();
    std::copy(dx3.values().begin(), dx3.values().end(), x3.grad().begin());
    auto loss = [&] {
      const TokenInit t = location_init(x3, params, cfg);
      return dot(t.embeddings, re) + std::inner_product(t.weights.begin(), t.weights.end(), rw.values().begin(), 0.0);
    };
    GradCheckEntry e{"location_init"};
    probe(e, x3, loss, h, {});
    probe(e, params.head_weight, loss, h, {});
    probe(e, params.head_bias, loss, h, {});
    probe(e, params.proj_weight, loss, h, {});
    probe(e, params.proj_bias, loss, h, {});
    report.entries.push_back(e);
  }

  GradCheckEntry full{"eae+location_init"};
  const EAEConfig cfg;
  for (int n = 0; n < options.inputs; ++n) {
    EAEParams params = EAEParams::init(cfg, rng.next());
    for (auto& b : params.blocks) {
      for (auto& v : b.norm_gain.values()) v = rng.uniform(0.5, 1.5);
      for (auto& v : b.norm_shift.values()) v = rng.uniform(-0.5, 0.5);
    }
    Tensor x0 = random_tensor({options.size, options.size, 2}, rng, 0.0, 1.0);
    EAETrace trace;
    const Tensor x3 = eae_forward(x0, params, cfg, &trace);
    const TokenInit out = location_init(x3, params, cfg);
    const Tensor re = random_tensor(out.embeddings.shape(), rng);
    const Tensor rw = random_tensor({static_cast<int>(out.weights.size())}, rng);

    params.zero_grad();
    const Tensor dx3 = location_init_backward(x3, params, out, re, rw.values());
    const Tensor dx0 = eae_backward(trace, params, cfg, dx3);
    x0.zero_grad();
    std::copy(dx0.values().begin(), dx0.values().end(), x0.grad().begin());

    auto eval = [&] {
      EAETrace t;
      const TokenInit tok = location_init(eae_forward(x0, params, cfg, &t), params, cfg);
      return Evaluation{dot(tok.embeddings, re) +
                            std::inner_product(tok.weights.begin(), tok.weights.end(), rw.values().begin(), 0.0),
                        routing_of(t, tok)};
    };
    const Routing base = routing_of(trace, out);
    probe_routed(full, x0, eval, base, h, {});
    for (auto* t : params.tensors()) {
      probe_routed(full, *t, eval, base, h, sample_coords(t->size(), options.param_samples, rng));
    }
  }
  report.entries.push_back(full);

  for (const auto& e : report.entries) report.max_relative_error = std::max(report.max_relative_error, e.max_relative_error);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace xannot::neural
