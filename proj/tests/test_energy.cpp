#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "xannot/energy.hpp"
#include "xannot/error.hpp"

using namespace xannot;
using namespace xannot::energy;

namespace {

SyntheticScene single_material(double z, double d, int w = 4, int h = 3) {
  SyntheticScene s;
  s.width = w;
  s.height = h;
  Material m;
  m.atomic_number = z;
  m.thickness = Grid<double>(w, h, d);
  s.materials.push_back(m);
  return s;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

}  // namespace

TEST_CASE("attenuation frozen values") {
  CHECK(attenuation(1.0, 2.0, 1.0, 0.0) == doctest::Approx(8.0).epsilon(1e-15));
  // 3 * 26^3 / 60^3 + 0.2 / 60
  CHECK(attenuation(60.0, 26.0, 3.0, 0.2) == doctest::Approx(0.24744444444444444).epsilon(1e-14));
  CHECK(attenuation(120.0, 0.0, 3.0, 0.2) == doctest::Approx(0.2 / 120.0).epsilon(1e-15));
  CHECK_THROWS_AS(attenuation(0.0, 6.0, 3.0, 0.2), DomainError);
  CHECK_THROWS_AS(attenuation(-5.0, 6.0, 3.0, 0.2), DomainError);
  CHECK_THROWS_AS(attenuation(60.0, -1.0, 3.0, 0.2), DomainError);
}

TEST_CASE("attenuation decreases with energy for positive coefficients") {
  for (double z : {1.0, 6.0, 13.0, 26.0, 82.0}) {
    double prev = attenuation(10.0, z, 3.0, 0.2);
    for (double e = 20.0; e <= 200.0; e += 10.0) {
      const double mu = attenuation(e, z, 3.0, 0.2);
      CHECK(mu < prev);
      prev = mu;
    }
  }
}

TEST_CASE("transmission matches direct exponential") {
  const auto s = single_material(13.0, 2.5);
  const auto t = transmit(s);
  const double mu_l = 3.0 * std::pow(13.0, 3) / std::pow(60.0, 3) + 0.2 / 60.0;
  const double mu_h = 3.0 * std::pow(13.0, 3) / std::pow(120.0, 3) + 0.2 / 120.0;
  CHECK(rel_err(t.low(0, 0), 255.0 * std::exp(-mu_l * 2.5)) < 1e-13);
  CHECK(rel_err(t.high(3, 2), 255.0 * std::exp(-mu_h * 2.5)) < 1e-13);
}

TEST_CASE("log additivity of stacked materials") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> zd(1.0, 30.0), dd(0.01, 4.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double za = zd(gen), zb = zd(gen), da = dd(gen), db = dd(gen);
    auto both = single_material(za, da);
    both.materials.push_back(single_material(zb, db).materials[0]);
    const auto tab = transmit(both);
    const auto ta = transmit(single_material(za, da));
    const auto tb = transmit(single_material(zb, db));
    for (std::size_t i = 0; i < tab.low.size(); ++i) {
      const double lhs = -std::log(tab.low.storage()[i] / 255.0);
      const double rhs = -std::log(ta.low.storage()[i] / 255.0) - std::log(tb.low.storage()[i] / 255.0);
      CHECK(rel_err(lhs, rhs) < 1e-12);
    }
  }
}

TEST_CASE("doubling thickness squares the transmitted fraction") {
  for (double z : {6.0, 13.0, 26.0}) {
    for (double d : {0.1, 1.0, 3.7}) {
      const auto t1 = transmit(single_material(z, d));
      const auto t2 = transmit(single_material(z, 2.0 * d));
      const double f1 = t1.high(1, 1) / 255.0, f2 = t2.high(1, 1) / 255.0;
      CHECK(rel_err(f2, f1 * f1) < 1e-12);
    }
  }
}

TEST_CASE("quantize rounds half up and clamps") {
  CHECK(quantize(127.5) == 128);
  CHECK(quantize(127.49) == 127);
  CHECK(quantize(-3.0) == 0);
  CHECK(quantize(255.4) == 255);
  CHECK(quantize(900.0) == 255);
  CHECK(quantize(std::nan("")) == 0);
}

TEST_CASE("decompose takes channel max and min") {
  PseudoColorImage img(2, 1);
  img.rgb = {10, 200, 30, 7, 7, 7};
  const auto pair = decompose(img);
  CHECK(pair.high(0, 0) == 200);
  CHECK(pair.low(0, 0) == 10);
  CHECK(pair.high(1, 0) == 7);
  CHECK(pair.low(1, 0) == 7);
}

TEST_CASE("canonical and greenish palettes round trip, warm does not") {
  std::mt19937_64 gen(5);
  std::uniform_int_distribution<int> g(0, 255);
  DualEnergyPair pair{GrayPlane(16, 16), GrayPlane(16, 16)};
  for (std::size_t i = 0; i < pair.high.size(); ++i) {
    const int a = g(gen), b = g(gen);
    pair.high.storage()[i] = static_cast<std::uint8_t>(std::max(a, b));
    pair.low.storage()[i] = static_cast<std::uint8_t>(std::min(a, b));
  }
  CHECK(decompose(apply_palette(pair, canonical_palette())) == pair);
  CHECK(decompose(apply_palette(pair, palette_by_name("greenish"))) == pair);
  CHECK_FALSE(decompose(apply_palette(pair, palette_by_name("warm"))) == pair);
  CHECK_THROWS_AS(palette_by_name("rainbow"), ConfigError);
}

TEST_CASE("rendered scenes satisfy high >= low") {
  Rng rng(21);
  for (int i = 0; i < 20; ++i) {
    const auto r = render_scene(build_scene(random_scene(rng, {64, 64, 1, 3})), canonical_palette());
    for (std::size_t k = 0; k < r.pair.high.size(); ++k) {
      REQUIRE(r.pair.high.storage()[k] >= r.pair.low.storage()[k]);
    }
  }
}

TEST_CASE("scene text round trip") {
  Rng rng(3);
  const auto desc = random_scene(rng, {96, 80, 2, 3});
  const auto again = parse_scene(format_scene(desc));
  CHECK(format_scene(again) == format_scene(desc));
  const auto a = render_scene(build_scene(desc), canonical_palette());
  const auto b = render_scene(build_scene(again), canonical_palette());
  CHECK(a.image == b.image);
}

TEST_CASE("scene parser rejects bad input") {
  CHECK_THROWS_AS(parse_scene("width abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_scene("material z=6\n"), ConfigError);
  CHECK_THROWS_AS(parse_scene("material shape=star\n"), ConfigError);
  CHECK_THROWS_AS(parse_scene("colour red\n"), ConfigError);
  CHECK_THROWS_AS(build_scene(parse_scene("width 10\nheight 10\nmaterial shape=disk cx=2 cy=5 r=4\n")),
                  PlacementError);
  CHECK_THROWS_AS(build_scene(parse_scene("width 10\nheight 10\nmaterial shape=rect x=0 y=0 w=2 h=2 thickness=0\n")),
                  ConfigError);
}

TEST_CASE("rect rasterization and object masks") {
  const auto desc = parse_scene(
      "width 8\nheight 6\n"
      "material shape=rect x=1 y=1 w=3 h=2 z=26 thickness=1 object=4\n"
      "material shape=rect x=4 y=1 w=2 h=2 z=6 thickness=10 object=4\n"
      "material shape=disk cx=6 cy=4.5 r=0.9 z=13\n");
  const auto r = render_scene(build_scene(desc), canonical_palette());
  REQUIRE(r.object_ids.size() == 2);
  CHECK(r.object_ids[0] == 4);
  CHECK(count_foreground(r.material_masks[0]) == 6);
  CHECK(count_foreground(r.object_masks[0]) == 10);
  CHECK(r.object_masks[0](5, 2) == 1);
  CHECK(r.object_masks[0](6, 2) == 0);
  CHECK(r.pair.high(0, 0) == 255);
}

TEST_CASE("thickness ramp is linear along the axis") {
  const auto scene = build_scene(parse_scene(
      "width 10\nheight 2\nmaterial shape=rect x=0 y=0 w=10 h=2 thickness=1 thickness_end=3 ramp=x\n"));
  const auto& t = scene.materials[0].thickness;
  CHECK(t(0, 0) == doctest::Approx(1.1));
  CHECK(t(9, 1) == doctest::Approx(2.9));
  CHECK(t(5, 0) - t(4, 0) == doctest::Approx(0.2));
}

TEST_CASE("dumbbell has uniform thickness") {
  const auto scene = build_scene(dumbbell_scene(128, 128));
  Grid<double> total(128, 128, 0.0);
  for (const auto& m : scene.materials) {
    for (int y = 0; y < m.thickness.height(); ++y) {
      for (int x = 0; x < m.thickness.width(); ++x) total(m.offset_x + x, m.offset_y + y) += m.thickness(x, y);
    }
  }
  for (double v : total.storage()) CHECK((v == 0.0 || v == 1.5));
}

TEST_CASE("generators are deterministic") {
  Rng a(99), b(99);
  CHECK(format_scene(random_scene(a)) == format_scene(random_scene(b)));
  Rng c(7), d(7);
  CHECK(format_scene(composite_tool_scene(c)) == format_scene(composite_tool_scene(d)));
}
