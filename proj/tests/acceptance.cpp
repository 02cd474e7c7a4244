// One line per acceptance criterion; exits non-zero if any line reports FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>

#include <httplib.h>

#include "fixed_oracle.hpp"
#include "oracles.hpp"
#include "schema.hpp"
#include "xannot/apg.hpp"
#include "xannot/curation.hpp"
#include "xannot/energy.hpp"
#include "xannot/eval.hpp"
#include "xannot/gradcheck.hpp"
#include "xannot/io.hpp"
#include "xannot/rle.hpp"
#include "xannot/service.hpp"
#include "xannot/store.hpp"

using namespace xannot;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// --- 1 ----------------------------------------------------------------------

Outcome gradient_suite() {
  neural::GradCheckOptions opts;
  opts.inputs = 20;
  opts.size = 16;
  opts.step = 1e-5;
  const auto t0 = std::chrono::steady_clock::now();
  const auto report = neural::run_gradcheck(opts);
  const double secs = seconds_since(t0);
  std::size_t coords = 0, skipped = 0;
  for (const auto& e : report.entries) {
    coords += e.coordinates;
    skipped += e.skipped;
  }
  return {report.max_relative_error < 1e-4 && secs < 60.0,
          fmt("%zu checks, %zu coordinates (%zu at kinks), max rel err %.3g, %.1f s", report.entries.size(), coords,
              skipped, report.max_relative_error, secs)};
}

// --- 2 ----------------------------------------------------------------------

SoftMask two_blob_mask(std::mt19937_64& gen, int& w, int& h) {
  std::uniform_int_distribution<int> dim(16, 64);
  w = dim(gen);
  h = dim(gen);
  SoftMask m(w, h, 0.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int blob = 0; blob < 2; ++blob) {
    // Left and right halves keep the blobs apart.
    const double r = 2.0 + u(gen) * (std::min(w, h) / 5.0);
    const double cx = (blob == 0 ? 0.25 : 0.75) * w + (u(gen) - 0.5) * w * 0.1;
    const double cy = r + u(gen) * (h - 2.0 * r);
    const bool disk = u(gen) < 0.5;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        const bool in = disk ? dx * dx + dy * dy <= r * r : std::abs(dx) <= r && std::abs(dy) <= 0.6 * r;
        if (in) m(x, y) = 1.0;
      }
    }
  }
  return m;
}

Outcome apg_exactness() {
  std::mt19937_64 gen(2024);
  const auto t0 = std::chrono::steady_clock::now();
  int clustered = 0, exact = 0, distinct = 0;
  for (int i = 0; i < 200; ++i) {
    int w = 0, h = 0;
    const SoftMask mask = two_blob_mask(gen, w, h);
    std::vector<std::pair<int, int>> fg;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (mask(x, y) >= 0.5) fg.emplace_back(x, y);
      }
    }
    const auto [px, py] = fg[gen() % fg.size()];
    FixedOracle oracle({{mask, 0.9}});
    apg::APGConfig cfg;
    cfg.rng_seed = gen();
    const auto r = apg::generate(blank_request(w, h), {px + 0.5, py + 0.5, 1}, oracle, cfg);
    if (r.mode != apg::Mode::clustered) continue;
    ++clustered;
    std::int64_t best = -1;
    for (const auto& a : r.c1_pixels) {
      for (const auto& b : r.c2_pixels) {
        const std::int64_t dx = a.x - b.x, dy = a.y - b.y;
        best = std::max(best, dx * dx + dy * dy);
      }
    }
    const apg::Pixel p{static_cast<int>(std::floor(r.points.first.x)), static_cast<int>(std::floor(r.points.first.y))};
    const apg::Pixel q{static_cast<int>(std::floor(r.points.second.x)),
                       static_cast<int>(std::floor(r.points.second.y))};
    const std::int64_t got = (p.x - q.x) * static_cast<std::int64_t>(p.x - q.x) +
                             (p.y - q.y) * static_cast<std::int64_t>(p.y - q.y);
    if (got == best) ++exact;
    const bool p_in_c1 = std::find(r.c1_pixels.begin(), r.c1_pixels.end(), p) != r.c1_pixels.end();
    const bool q_in_c2 = std::find(r.c2_pixels.begin(), r.c2_pixels.end(), q) != r.c2_pixels.end();
    if (p_in_c1 && q_in_c2) ++distinct;
  }
  const double secs = seconds_since(t0);
  return {clustered > 0 && exact == clustered && distinct == clustered && secs < 30.0,
          fmt("%d/200 clustered, exact distance %d/%d, distinct clusters %d/%d, %.2f s", clustered, exact, clustered,
              distinct, clustered, secs)};
}

// --- 3 ----------------------------------------------------------------------

Outcome apg_fallback_uniformity() {
  const int w = 64, h = 64;
  SoftMask mask(w, h, 0.0);
  for (int y = 20; y < 40; ++y) {
    for (int x = 10; x < 50; ++x) mask(x, y) = 1.0;
  }
  apg::APGConfig cfg;
  // No separation can clear this threshold, so every call takes the fallback path.
  cfg.tau_min_px = 1e9;
  const int n = 10000;
  std::array<int, 64> bins{};
  double sum_w = 0.0, sum_h = 0.0;
  int fallback = 0, inside = 0;
  for (int i = 0; i < n; ++i) {
    FixedOracle oracle({{mask, 1.0}});
    cfg.rng_seed = mix_seed(3, static_cast<std::uint64_t>(i));
    const auto r = apg::generate(blank_request(w, h), {20.5, 30.5, 1}, oracle, cfg);
    if (r.mode != apg::Mode::fallback || !r.box) continue;
    ++fallback;
    sum_w += r.s_w;
    sum_h += r.s_h;
    const auto& b = *r.box;
    const auto& p = r.points.first;
    if (b.contains(p.x, p.y) && b.contains(r.points.second.x, r.points.second.y)) ++inside;
    const int bx = std::min(7, static_cast<int>((p.x - b.x0) / b.width() * 8.0));
    const int by = std::min(7, static_cast<int>((p.y - b.y0) / b.height() * 8.0));
    ++bins[static_cast<std::size_t>(by * 8 + bx)];
  }
  const double expected = fallback / 64.0;
  double chi2 = 0.0;
  for (int c : bins) chi2 += (c - expected) * (c - expected) / expected;
  // Upper 1% point of chi-square with 63 degrees of freedom.
  const double critical = 92.010;
  const double mw = sum_w / fallback, mh = sum_h / fallback;
  const bool ok = fallback == n && inside == n && chi2 < critical && std::abs(mw - 1.0) <= 0.005 &&
                  std::abs(mh - 1.0) <= 0.005;
  return {ok, fmt("%d fallback samples, chi2 %.2f (crit %.3f, df 63), mean s_w %.4f, mean s_h %.4f", fallback, chi2,
                  critical, mw, mh)};
}

// --- 4 ----------------------------------------------------------------------

Outcome curation_statistics() {
  using namespace curation;
  const FilterConfig cfg;
  struct Planted {
    int w, h;
    bool defect;
  };
  std::vector<Planted> planted = {
      {200, 200, false},  {200, 1000, false}, {1000, 200, false}, {640, 480, false},  {201, 300, false},
      {199, 199, true},   {199, 800, true},   {800, 199, true},   {200, 1001, true},  {1001, 200, true},
      {10, 10, true},     {300, 1600, true},  {1600, 300, true},  {250, 1250, false}, {1250, 250, false},
  };
  std::mt19937_64 gen(4);
  std::uniform_int_distribution<int> d(120, 1300);
  for (int i = 0; i < 200; ++i) {
    const int w = d(gen), h = d(gen);
    const double ar = static_cast<double>(w) / h;
    planted.push_back({w, h, std::min(w, h) < 200 || ar < 0.2 || ar > 5.0});
  }
  int tp = 0, fp = 0, fn = 0, boundary_kept = 0;
  for (std::size_t i = 0; i < planted.size(); ++i) {
    const auto& p = planted[i];
    // Flat images never trip the noise filter, isolating the deterministic ones.
    const auto rec = evaluate({"p" + std::to_string(i), "s", GrayPlane(p.w, p.h, 100)}, cfg);
    const bool rejected = rec.decision == Decision::reject;
    if (rejected && p.defect) ++tp;
    if (rejected && !p.defect) ++fp;
    if (!rejected && p.defect) ++fn;
    if (i < 3 && !rejected) ++boundary_kept;
  }
  const double precision = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / (tp + fp);
  const double recall = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / (tp + fn);

  std::uniform_int_distribution<int> byte(0, 255);
  GrayPlane noisy(200, 200);
  int discarded = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    for (auto& v : noisy.storage()) v = static_cast<std::uint8_t>(byte(gen));
    if (evaluate({"noisy" + std::to_string(i), "s", noisy}, cfg).reason == Reason::noise) ++discarded;
  }
  const double frac = static_cast<double>(discarded) / n;

  std::vector<SplitItem> items;
  const std::pair<const char*, int> sources[] = {{"a", 7}, {"b", 13}, {"c", 101}, {"d", 1}, {"e", 999}, {"f", 55}};
  for (const auto& [src, count] : sources) {
    for (int i = 0; i < count; ++i) items.push_back({std::string(src) + std::to_string(i), src});
  }
  const auto assignment = split(items, {}, {}, 77);
  double worst = 0.0;
  for (const auto& [src, counts] : assignment.counts()) {
    const int total = counts[0] + counts[1] + counts[2];
    const double want[3] = {0.8 * total, 0.1 * total, 0.1 * total};
    for (int k = 0; k < 3; ++k) worst = std::max(worst, std::abs(counts[static_cast<std::size_t>(k)] - want[k]));
  }
  const bool ok = precision == 1.0 && recall == 1.0 && boundary_kept == 3 && frac >= 0.89 && frac <= 0.91 &&
                  worst <= 1.0;
  return {ok, fmt("precision %.3f recall %.3f on %zu planted, boundaries kept %d/3, discard %.4f, split max dev %.2f",
                  precision, recall, planted.size(), boundary_kept, frac, worst)};
}

// --- 5 ----------------------------------------------------------------------

Outcome physics_invariants() {
  using namespace energy;
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> zd(1.0, 40.0), dd(0.01, 5.0);
  auto slab = [](double z, double d) {
    SyntheticScene s;
    s.width = 3;
    s.height = 2;
    Material m;
    m.atomic_number = z;
    m.thickness = Grid<double>(3, 2, d);
    s.materials.push_back(m);
    return s;
  };
  double worst_add = 0.0, worst_double = 0.0;
  for (int i = 0; i < 500; ++i) {
    const double za = zd(gen), zb = zd(gen), da = dd(gen), db = dd(gen);
    auto both = slab(za, da);
    both.materials.push_back(slab(zb, db).materials[0]);
    const auto tab = transmit(both), ta = transmit(slab(za, da)), tb = transmit(slab(zb, db));
    const auto t2 = transmit(slab(za, 2.0 * da));
    for (const auto& [ab, a, b, a2] : {std::tuple{&tab.high, &ta.high, &tb.high, &t2.high},
                                       std::tuple{&tab.low, &ta.low, &tb.low, &t2.low}}) {
      const double lhs = std::log((*ab)(1, 1) / 255.0);
      const double rhs = std::log((*a)(1, 1) / 255.0) + std::log((*b)(1, 1) / 255.0);
      worst_add = std::max(worst_add, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
      const double f = (*a)(1, 1) / 255.0, f2 = (*a2)(1, 1) / 255.0;
      worst_double = std::max(worst_double, std::abs(f2 - f * f) / (f * f));
    }
  }
  int ordered = 0, round_trip = 0;
  Rng rng(55);
  for (int i = 0; i < 100; ++i) {
    const auto r = render_scene(build_scene(random_scene(rng)), canonical_palette());
    bool ok = true;
    for (std::size_t k = 0; k < r.pair.high.size(); ++k) ok = ok && r.pair.high.storage()[k] >= r.pair.low.storage()[k];
    ordered += ok;
    round_trip += decompose(r.image) == r.pair;
  }
  const bool ok = worst_add < 1e-12 && worst_double < 1e-12 && ordered == 100 && round_trip == 100;
  return {ok, fmt("log-additivity rel err %.2g, doubling rel err %.2g, G_H >= G_L %d/100, palette round trip %d/100",
                  worst_add, worst_double, ordered, round_trip)};
}

// --- 6 ----------------------------------------------------------------------

Outcome metrics_oracle() {
  std::mt19937_64 gen(6);
  std::uniform_int_distribution<int> dim(1, 96);
  std::uniform_real_distribution<double> dens(0.0, 1.0);
  int iou_ok = 0, dice_ok = 0;
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int w = dim(gen), h = dim(gen);
    const auto a = oracle::random_mask(gen, w, h, dens(gen) * dens(gen));
    const auto b = oracle::random_mask(gen, w, h, dens(gen));
    const double j = eval::iou(a, b), d = eval::dice(a, b);
    iou_ok += j == oracle::iou(a, b);
    dice_ok += d == oracle::dice(a, b);
    worst = std::max(worst, std::abs(d - 2.0 * j / (1.0 + j)));
  }
  return {iou_ok == 1000 && dice_ok == 1000 && worst < 1e-12,
          fmt("IoU exact %d/1000, Dice exact %d/1000, max |Dice - 2J/(1+J)| %.2g", iou_ok, dice_ok, worst)};
}

// --- 7 ----------------------------------------------------------------------

Outcome ablation_direction() {
  const int n = 300;
  double sum_single = 0.0, sum_apg = 0.0;
  std::size_t wins = 0, losses = 0, ties = 0;
  std::array<int, 3> modes{};
  backend::BuiltinOracle oracle;
  for (int s = 0; s < n; ++s) {
    Rng rng(mix_seed(7, static_cast<std::uint64_t>(s)));
    const auto rendered = energy::render_scene(energy::build_scene(energy::composite_tool_scene(rng)),
                                               energy::canonical_palette());
    const BinaryMask& gt = rendered.object_masks.at(0);
    std::vector<std::pair<int, int>> fg;
    for (int y = 0; y < gt.height(); ++y) {
      for (int x = 0; x < gt.width(); ++x) {
        if (gt(x, y)) fg.emplace_back(x, y);
      }
    }
    const auto [x, y] = fg[rng.below(fg.size())];
    backend::OracleRequest req;
    req.image = std::make_shared<PseudoColorImage>(rendered.image);
    req.width = rendered.image.width;
    req.height = rendered.image.height;
    const backend::PointPrompt p0{x + 0.5, y + 0.5, 1};
    req.points = {p0};
    const BinaryMask single = binarize(backend::select_best(oracle.segment(req)));

    apg::APGConfig cfg;
    cfg.rng_seed = mix_seed(11, static_cast<std::uint64_t>(s));
    const auto r = apg::generate(req, p0, oracle, cfg);
    ++modes[static_cast<std::size_t>(r.mode)];
    req.points = {r.points.first, r.points.second};
    const BinaryMask two = binarize(backend::select_best(oracle.segment(req)));

    const double a = eval::iou(single, gt), b = eval::iou(two, gt);
    sum_single += a;
    sum_apg += b;
    if (b > a) ++wins;
    else if (b < a) ++losses;
    else ++ties;
  }
  const double p = eval::sign_test_p(wins, losses);
  const double m1 = sum_single / n, m2 = sum_apg / n;
  return {m2 >= m1 && p < 0.05,
          fmt("%d scenes, mean IoU single %.4f vs two-point %.4f, wins %zu losses %zu ties %zu, sign test p %.3g, "
              "modes c%d/f%d/d%d",
              n, m1, m2, wins, losses, ties, p, modes[0], modes[1], modes[2])};
}

// --- 8 ----------------------------------------------------------------------

struct ModelAnn {
  datastore::Status status;
  int round;
};

enum class Op { propose, accept, correct, correct_next };

struct Step {
  Op op;
  std::size_t target;
};

int enumerated_transitions = 0;
int illegal_rejected = 0;
int illegal_total = 0;
int legal_ok = 0;
int legal_total = 0;

datastore::RLEMask unique_mask(int serial) {
  BinaryMask m(16, 16, 0);
  m(serial % 16, serial / 16 % 16) = 1;
  m(15 - serial % 16, 15) = 1;
  return datastore::rle_encode(m);
}

// Replays `prefix` on a fresh store, then tries every operation from that state.
void explore(const std::vector<Step>& prefix, int depth, int max_rounds, const std::filesystem::path& root,
             int& serial) {
  std::vector<Step> options{{Op::propose, 0}};
  {
    std::size_t anns = 0;
    for (const auto& s : prefix) anns += s.op != Op::accept;
    for (std::size_t i = 0; i < anns; ++i) {
      options.push_back({Op::accept, i});
      options.push_back({Op::correct, i});
      options.push_back({Op::correct_next, i});
    }
  }
  for (const auto& step : options) {
    const auto dir = root / std::to_string(serial++);
    auto store = datastore::AnnotationStore::open(dir, {max_rounds});
    store->add_image("img", "s", io::encode_png(PseudoColorImage(16, 16)));
    std::vector<std::int64_t> ids;
    std::vector<ModelAnn> model;
    int mask_serial = 0;
    auto apply = [&](const Step& s, bool& legal) {
      legal = true;
      switch (s.op) {
        case Op::propose:
          ids.push_back(store->propose("img", unique_mask(mask_serial++), "Gun").id);
          model.push_back({datastore::Status::proposed, 1});
          return;
        case Op::accept:
          legal = model[s.target].status == datastore::Status::proposed;
          store->accept(ids[s.target]);
          model[s.target].status = datastore::Status::accepted;
          return;
        case Op::correct:
        case Op::correct_next: {
          const int round = model[s.target].round + (s.op == Op::correct_next ? 1 : 0);
          legal = model[s.target].status != datastore::Status::superseded && round <= max_rounds;
          ids.push_back(store->correct(ids[s.target], unique_mask(mask_serial++), "Gun", s.op == Op::correct_next).id);
          model[s.target].status = datastore::Status::superseded;
          model.push_back({datastore::Status::accepted, round});
          return;
        }
      }
    };
    for (const auto& s : prefix) {
      bool legal = true;
      apply(s, legal);
    }
    const auto before = store->all_annotations();
    bool legal = true;
    bool threw = false;
    // Legality is decided by the model before the store is touched.
    switch (step.op) {
      case Op::propose: legal = true; break;
      case Op::accept: legal = model[step.target].status == datastore::Status::proposed; break;
      default: {
        const int round = model[step.target].round + (step.op == Op::correct_next ? 1 : 0);
        legal = model[step.target].status != datastore::Status::superseded && round <= max_rounds;
      }
    }
    try {
      bool unused = true;
      apply(step, unused);
    } catch (const StateError&) {
      threw = true;
    }
    ++enumerated_transitions;
    if (legal) {
      ++legal_total;
      bool ok = !threw;
      if (ok) {
        for (std::size_t i = 0; i < model.size(); ++i) ok = ok && store->get_annotation(ids[i]).status == model[i].status;
        store->check_invariants();
      }
      legal_ok += ok;
    } else {
      ++illegal_total;
      const auto after = store->all_annotations();
      bool unchanged = after.size() == before.size();
      for (std::size_t i = 0; unchanged && i < after.size(); ++i) {
        unchanged = after[i].status == before[i].status && after[i].round == before[i].round;
      }
      illegal_rejected += threw && unchanged;
    }
    store.reset();
    std::filesystem::remove_all(dir);
    if (legal && depth > 1) {
      auto next = prefix;
      next.push_back(step);
      explore(next, depth - 1, max_rounds, root, serial);
    }
  }
}

Outcome codec_and_store() {
  std::mt19937_64 gen(8);
  std::uniform_int_distribution<int> dim(1, 128);
  std::uniform_real_distribution<double> dens(0.0, 1.0);
  int exact = 0;
  for (int i = 0; i < 1000; ++i) {
    // Mix of iid noise and solid rectangles so long runs are covered too.
    BinaryMask m = oracle::random_mask(gen, dim(gen), dim(gen), dens(gen));
    if (i % 2 == 0) {
      std::fill(m.storage().begin(), m.storage().end(), std::uint8_t{0});
      const int x0 = static_cast<int>(gen() % static_cast<unsigned>(m.width()));
      const int y0 = static_cast<int>(gen() % static_cast<unsigned>(m.height()));
      for (int y = y0; y < m.height(); ++y) {
        for (int x = x0; x < m.width(); ++x) m(x, y) = 1;
      }
    }
    const auto rle = datastore::rle_encode(m);
    exact += rle.counts == oracle::rle_counts(m) && datastore::rle_decode(rle) == m;
  }

  const auto root = oracle::temp_dir("statemachine");
  int serial = 0;
  explore({}, 4, 2, root, serial);

  bool cap_ok = false;
  {
    auto store = datastore::AnnotationStore::open(root / "cap");
    store->add_image("img", "s", io::encode_png(PseudoColorImage(16, 16)));
    auto a = store->propose("img", unique_mask(0), "Gun");
    bool climbed = true;
    for (int r = 2; r <= 5; ++r) {
      a = store->correct(a.id, unique_mask(r), "Gun", true);
      climbed = climbed && a.round == r;
    }
    try {
      store->correct(a.id, unique_mask(9), "Gun", true);
    } catch (const RoundLimitError&) {
      cap_ok = climbed && store->get_annotation(a.id).status == datastore::Status::accepted;
    }
  }
  std::filesystem::remove_all(root);
  const bool ok = exact == 1000 && illegal_rejected == illegal_total && legal_ok == legal_total && cap_ok;
  return {ok, fmt("RLE exact %d/1000, %d transitions enumerated, illegal rejected %d/%d, legal applied %d/%d, "
                  "round cap 5 %s",
                  exact, enumerated_transitions, illegal_rejected, illegal_total, legal_ok, legal_total,
                  cap_ok ? "enforced" : "NOT enforced")};
}

// --- 9 ----------------------------------------------------------------------

Outcome service_contract() {
  const auto root = oracle::temp_dir("contract");
  service::ServiceConfig cfg;
  cfg.port = 0;
  cfg.data_root = root / "data";
  std::vector<std::string> violations;
  int accepted = -1;
  std::string mode, degenerate_mode;
  int degenerate_status = 0;
  {
    service::Service svc(cfg);
    Rng rng(9);
    const auto scene = energy::render_scene(energy::build_scene(energy::composite_tool_scene(rng)),
                                            energy::canonical_palette());
    svc.store().add_image("tool", "synthetic", io::encode_png(scene.image));
    svc.store().add_image("empty", "synthetic", io::encode_png(PseudoColorImage(48, 48)));
    const int port = svc.start();
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30, 0);
    const httplib::Headers session{{"X-Session-Id", "acceptance"}};
    auto check = [&](const char* what, const httplib::Result& res, int status, auto validator) -> json {
      if (!res) {
        violations.push_back(std::string(what) + ": no response");
        return nullptr;
      }
      if (res->status != status) violations.push_back(fmt("%s: status %d", what, res->status));
      json body;
      try {
        body = json::parse(res->body);
      } catch (const json::exception&) {
        violations.push_back(std::string(what) + ": body is not JSON");
        return nullptr;
      }
      if (auto e = validator(body); !e.empty()) violations.push_back(std::string(what) + ": " + e);
      return body;
    };

    check("list", c.Get("/images"), 200, [](const json& j) { return schema::image_list(j); });
    const auto& gt = scene.object_masks.at(0);
    const auto bb = datastore::bbox_from_mask(gt);
    int cx = (bb.x_min + bb.x_max) / 2, cy = (bb.y_min + bb.y_max) / 2;
    while (!gt(cx, cy)) ++cx;
    const json click = check("click",
                             c.Post("/images/tool/click", session, json{{"x", cx + 0.5}, {"y", cy + 0.5}}.dump(),
                                    "application/json"),
                             200, [&](const json& j) { return schema::click(j, gt.height(), gt.width()); });
    if (click.is_object() && !click["proposals"].empty()) {
      mode = click["apg"]["mode"];
      const json& best = click["proposals"][click["best"].get<std::size_t>()];
      const json proposed = check("propose",
                                  c.Post("/images/tool/annotations", session,
                                         json{{"action", "propose"}, {"rle", best["rle"]},
                                              {"category", "Hammer"}}
                                             .dump(),
                                         "application/json"),
                                  201, [](const json& j) { return schema::annotate(j); });
      if (proposed.is_object()) {
        check("accept",
              c.Post("/images/tool/annotations", session,
                     json{{"action", "accept"}, {"predecessor", proposed["id"]}, {"category", "Hammer"}}
                         .dump(),
                     "application/json"),
              201, [](const json& j) {
                if (auto e = schema::annotate(j); !e.empty()) return e;
                return j["status"] == "accepted" ? std::string() : std::string("status is not accepted");
              });
      }
    } else {
      violations.push_back("click returned no proposals");
    }
    const auto image = check("image", c.Get("/images/tool"), 200, [](const json& j) {
      if (!j.contains("annotations") || !j["annotations"].is_array()) return std::string("missing annotations");
      for (const auto& a : j["annotations"]) {
        if (auto e = schema::annotation(a); !e.empty()) return e;
      }
      return std::string();
    });
    if (image.is_object()) {
      accepted = 0;
      for (const auto& a : image["annotations"]) accepted += a["status"] == "accepted";
    }

    const auto degenerate = c.Post("/images/empty/click", session, json{{"x", 10.0}, {"y", 20.0}}.dump(),
                                   "application/json");
    const json dj = check("degenerate click", degenerate, 200, [](const json& j) { return schema::click(j, 48, 48); });
    if (degenerate) degenerate_status = degenerate->status;
    if (dj.is_object()) degenerate_mode = dj["apg"]["mode"];
    check("bad click", c.Post("/images/empty/click", session, R"({"x": 99, "y": 1})", "application/json"), 400,
          [](const json& j) { return schema::error(j); });
    svc.store().check_invariants();
  }
  std::filesystem::remove_all(root);
  const bool ok = violations.empty() && accepted == 1 && degenerate_mode == "degenerate" && degenerate_status == 200;
  std::string detail = fmt("click mode %s, accepted annotations %d, degenerate click %d/%s, schema violations %zu",
                           mode.c_str(), accepted, degenerate_status, degenerate_mode.c_str(), violations.size());
  for (const auto& v : violations) detail += "; " + v;
  return {ok, detail + ", no UI directory configured"};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"neural gradient suite", gradient_suite},
      {"APG farthest-pair exactness", apg_exactness},
      {"APG fallback uniformity", apg_fallback_uniformity},
      {"curation statistics", curation_statistics},
      {"physics invariants", physics_invariants},
      {"metrics oracle", metrics_oracle},
      {"two-point vs single-point ablation direction", ablation_direction},
      {"codec and annotation store", codec_and_store},
      {"service contract", service_contract},
  };
  int failures = 0;
  int index = 1;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %d: %s  %s  (%s)\n", index++, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
