#include <doctest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "xannot/gradcheck.hpp"
#include "xannot/neural.hpp"

using namespace xannot;
using namespace xannot::neural;

TEST_CASE("tensor construction checks sizes") {
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1.0, 2.0}), ShapeError);
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK_FALSE(t.has_grad());
  t.grad()[4] = 2.0;
  CHECK(t.has_grad());
  t.zero_grad();
  CHECK(t.grad()[4] == 0.0);
}

TEST_CASE("conv3x3 frozen outputs") {
  const Tensor x({3, 3, 1}, 1.0);
  const Tensor w({1, 1, 3, 3}, 1.0);
  const Tensor b({1}, std::vector<double>{0.5});
  const Tensor y = conv3x3(x, w, b);
  CHECK(y[0] == 4.5);
  CHECK(y[1] == 6.5);
  CHECK(y[4] == 9.5);

  // Single tap above the centre: cross-correlation reads the row above.
  Tensor ramp({3, 3, 1});
  std::iota(ramp.values().begin(), ramp.values().end(), 0.0);
  Tensor tap({1, 1, 3, 3}, 0.0);
  tap[1] = 1.0;
  const Tensor shifted = conv3x3(ramp, tap, Tensor({1}, 0.0));
  CHECK(shifted[0] == 0.0);
  CHECK(shifted[4] == 1.0);
  CHECK(shifted[8] == 5.0);
  CHECK_THROWS_AS(conv3x3(x, Tensor({1, 2, 3, 3}), b), ShapeError);
}

TEST_CASE("gelu frozen values") {
  const Tensor y = gelu(Tensor({3}, std::vector<double>{-1.0, 0.0, 1.0}));
  CHECK(y[0] == doctest::Approx(-0.15865525393145707).epsilon(1e-14));
  CHECK(y[1] == 0.0);
  CHECK(y[2] == doctest::Approx(0.8413447460685429).epsilon(1e-14));
}

TEST_CASE("softmax frozen values") {
  const Tensor y = softmax(Tensor({2}, std::vector<double>{0.0, std::log(2.0)}));
  CHECK(y[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  const Tensor big = softmax(Tensor({2}, std::vector<double>{1000.0, 1000.0}));
  CHECK(big[0] == doctest::Approx(0.5));
}

TEST_CASE("layernorm normalizes over channels") {
  const Tensor x({1, 2, 3}, std::vector<double>{1.0, 2.0, 3.0, -5.0, 0.0, 5.0});
  const Tensor y = layernorm(x, Tensor({3}, 1.0), Tensor({3}, 0.0), 1e-6);
  for (int p = 0; p < 2; ++p) {
    double mean = 0.0, var = 0.0;
    for (int c = 0; c < 3; ++c) mean += y[p * 3 + c];
    mean /= 3.0;
    for (int c = 0; c < 3; ++c) var += (y[p * 3 + c] - mean) * (y[p * 3 + c] - mean);
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(var / 3.0 == doctest::Approx(1.0).epsilon(1e-5));
  }
  // (1 - 2) / sqrt(2/3 + 1e-6)
  CHECK(y[0] == doctest::Approx(-1.0 / std::sqrt(2.0 / 3.0 + 1e-6)).epsilon(1e-14));
}

TEST_CASE("maxpool routes ties to the first maximum") {
  Tensor x({2, 2, 1}, 3.0);
  const Tensor y = maxpool2x2(x);
  CHECK(y.size() == 1);
  CHECK(y[0] == 3.0);
  maxpool2x2_backward(x, Tensor({1, 1, 1}, 1.0));
  CHECK(x.grad()[0] == 1.0);
  CHECK(x.grad()[1] == 0.0);
  CHECK(x.grad()[3] == 0.0);
  CHECK_THROWS_AS(maxpool2x2(Tensor({3, 2, 1})), ShapeError);
}

TEST_CASE("linear backward matches hand-rolled finite differences") {
  Rng rng(4);
  Tensor x({3, 4}), w({2, 4}), b({2});
  for (auto* t : {&x, &w, &b}) {
    for (auto& v : t->values()) v = rng.uniform(-1.0, 1.0);
  }
  // L = sum(y * c) with fixed c.
  Tensor c({3, 2});
  for (auto& v : c.values()) v = rng.uniform(-1.0, 1.0);
  auto loss = [&] {
    const Tensor y = linear(x, w, b);
    double l = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) l += y[i] * c[i];
    return l;
  };
  linear_backward(x, w, b, c);
  for (auto* t : {&x, &w, &b}) {
    for (std::size_t i = 0; i < t->size(); ++i) {
      const double keep = (*t)[i];
      (*t)[i] = keep + 1e-6;
      const double up = loss();
      (*t)[i] = keep - 1e-6;
      const double down = loss();
      (*t)[i] = keep;
      CHECK(t->grad()[i] == doctest::Approx((up - down) / 2e-6).epsilon(1e-7));
    }
  }
}

TEST_CASE("encoder shapes and location initializer") {
  const EAEConfig cfg;
  const auto params = EAEParams::init(cfg, 1);
  CHECK(EAEParams::tensor_names().size() == params.tensors().size());
  Tensor x0({16, 16, 2});
  Rng rng(2);
  for (auto& v : x0.values()) v = rng.uniform01();
  const Tensor x3 = eae_forward(x0, params, cfg);
  CHECK(x3.shape() == std::vector<int>{2, 2, 64});
  const auto init = location_init(x3, params, cfg);
  CHECK(init.embeddings.shape() == std::vector<int>{4, 256});
  CHECK(init.indices.size() == 4);
  CHECK(std::accumulate(init.weights.begin(), init.weights.end(), 0.0) == doctest::Approx(1.0));
  for (std::size_t i = 1; i < init.indices.size(); ++i) {
    CHECK(init.weights[init.indices[i - 1]] >= init.weights[init.indices[i]]);
  }
  CHECK_THROWS_AS(eae_forward(Tensor({12, 16, 2}), params, cfg), ShapeError);
  EAEConfig too_many = cfg;
  too_many.token_count = 5;
  CHECK_THROWS_AS(location_init(x3, params, too_many), ConfigError);
}

TEST_CASE("make_x0 scales both planes") {
  energy::DualEnergyPair pair{GrayPlane(8, 8, 255), GrayPlane(8, 8, 51)};
  const Tensor x0 = make_x0(pair);
  CHECK(x0.shape() == std::vector<int>{8, 8, 2});
  CHECK(x0[0] == 1.0);
  CHECK(x0[1] == doctest::Approx(0.2));
}

TEST_CASE("checkpoint round trip and corruption") {
  EAEConfig cfg;
  cfg.block_channels = {4, 6, 8};
  cfg.token_dim = 5;
  const auto params = EAEParams::init(cfg, 9);
  auto bytes = serialize_checkpoint(cfg, params);
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "XEAECKP1");
  const auto back = deserialize_checkpoint(bytes);
  CHECK(back.config == cfg);
  for (std::size_t i = 0; i < params.tensors().size(); ++i) CHECK(*back.params.tensors()[i] == *params.tensors()[i]);

  auto bad = bytes;
  bad[0] = 'Y';
  CHECK_THROWS_AS(deserialize_checkpoint(bad), CodecError);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(deserialize_checkpoint(truncated), CodecError);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(deserialize_checkpoint(trailing), CodecError);

  const auto dir = oracle::temp_dir("ckpt");
  save_checkpoint(dir / "m.bin", cfg, params);
  CHECK(load_checkpoint(dir / "m.bin").config == cfg);
  std::filesystem::remove_all(dir);
}

TEST_CASE("relative error floor") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
  CHECK(relative_error(1e-9, 0.0) == doctest::Approx(1e-4));
}

TEST_CASE("gradient check on a reduced run") {
  GradCheckOptions opts;
  opts.inputs = 2;
  opts.param_samples = 8;
  const auto report = run_gradcheck(opts);
  CHECK(report.entries.size() >= 7);
  for (const auto& e : report.entries) {
    CAPTURE(e.name);
    CHECK(e.coordinates > 0);
    CHECK(e.max_relative_error < 1e-4);
  }
}
