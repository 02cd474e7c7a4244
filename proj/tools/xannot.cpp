// xannot command-line front end.
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "xannot/curation.hpp"
#include "xannot/energy.hpp"
#include "xannot/eval.hpp"
#include "xannot/gradcheck.hpp"
#include "xannot/io.hpp"
#include "xannot/service.hpp"
#include "xannot/store.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace xannot;

namespace {

struct Common {
  std::uint64_t seed = 0;
  std::string config;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
}

json load_config(const std::string& path) {
  if (path.empty()) return json();
  try {
    return json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string scene_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04d", i);
  return buf;
}

// --- synth ---------------------------------------------------------------------

struct SynthArgs {
  Common common;
  int scenes = 1;
  std::string out = "scenes";
  std::string scene_file;
  std::string generator = "random";
  std::string palette;
};

void write_scene(const fs::path& out, const std::string& name, const energy::SceneDescription& desc) {
  const energy::RenderedScene r = energy::render_scene(energy::build_scene(desc), energy::palette_by_name(desc.palette));
  io::write_text(out / (name + ".txt"), energy::format_scene(desc));
  io::write_file(out / (name + ".png"), io::encode_png(r.image));
  io::write_file(out / (name + "_high.png"), io::encode_png(r.pair.high));
  io::write_file(out / (name + "_low.png"), io::encode_png(r.pair.low));
  for (std::size_t i = 0; i < r.object_masks.size(); ++i) {
    io::write_file(out / "masks" / (name + "_obj" + std::to_string(r.object_ids[i]) + ".png"),
                   io::encode_mask_png(r.object_masks[i]));
  }
}

int run_synth(const SynthArgs& a) {
  const fs::path out = a.out;
  if (!a.scene_file.empty()) {
    energy::SceneDescription desc = energy::parse_scene(io::read_text(a.scene_file));
    if (!a.palette.empty()) desc.palette = a.palette;
    write_scene(out, fs::path(a.scene_file).stem().string(), desc);
    std::cout << "rendered " << a.scene_file << " -> " << out.string() << "\n";
    return 0;
  }
  const json cfg = load_config(a.common.config);
  energy::SceneGenConfig gen;
  std::string generator = a.generator;
  std::string palette = a.palette;
  if (cfg.is_object()) {
    const json& s = cfg.contains("synth") ? cfg["synth"] : cfg;
    gen.width = s.value("width", gen.width);
    gen.height = s.value("height", gen.height);
    gen.min_objects = s.value("min_objects", gen.min_objects);
    gen.max_objects = s.value("max_objects", gen.max_objects);
    if (generator == "random") generator = s.value("generator", generator);
    if (palette.empty()) palette = s.value("palette", std::string());
  }
  Rng rng(a.common.seed);
  for (int i = 0; i < a.scenes; ++i) {
    energy::SceneDescription desc;
    if (generator == "random") {
      desc = energy::random_scene(rng, gen);
    } else if (generator == "composite") {
      desc = energy::composite_tool_scene(rng, gen.width, gen.height);
    } else if (generator == "dumbbell") {
      desc = energy::dumbbell_scene(gen.width, gen.height);
    } else {
      throw ConfigError("unknown generator '" + generator + "' (random, composite, dumbbell)");
    }
    if (!palette.empty()) desc.palette = palette;
    write_scene(out, scene_name(i), desc);
  }
  std::cout << "wrote " << a.scenes << " scene(s) to " << out.string() << "\n";
  return 0;
}

// --- curate --------------------------------------------------------------------

struct CurateArgs {
  Common common;
  std::string in;
  std::string report;
  std::string split_out;
};

int run_curate(CurateArgs& a, bool seed_given) {
  curation::FilterConfig cfg;
  json preserved_json;
  if (!a.common.config.empty()) {
    const std::string text = io::read_text(a.common.config);
    cfg = curation::config_from_json(text);
    const json j = load_config(a.common.config);
    const json& section = j.contains("curation") ? j["curation"] : j;
    if (section.contains("preserved")) preserved_json = section["preserved"];
  }
  if (seed_given) cfg.rng_seed = a.common.seed;
  const auto records = curation::curate_directory(a.in, cfg);
  io::write_text(a.report, curation::format_report(records, cfg));
  const auto summary = curation::summarize(records);
  std::cout << "curated " << summary.total << " image(s): kept " << summary.kept << ", rejected "
            << summary.total - summary.kept << "\n";

  if (!a.split_out.empty()) {
    std::vector<curation::SplitItem> kept;
    for (const auto& r : records) {
      if (r.decision == curation::Decision::keep) kept.push_back({r.id, r.source});
    }
    std::vector<std::pair<std::string, curation::Split>> preserved;
    if (preserved_json.is_object()) {
      for (const auto& [id, s] : preserved_json.items()) {
        preserved.emplace_back(id, curation::split_from_string(s.get<std::string>()));
      }
    }
    const auto assignment = curation::split(kept, {}, preserved, cfg.rng_seed);
    json out = json::object();
    for (const auto& [id, s] : assignment.split) {
      out[id] = {{"split", curation::to_string(s)}, {"source", assignment.source.at(id)}};
    }
    io::write_text(a.split_out, out.dump(2) + "\n");
  }
  return 0;
}

// --- eval ----------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string pred;
  std::string gt;
  std::string report;
  std::string categories;
  std::string run;
};

int run_eval(const EvalArgs& a) {
  std::map<std::string, std::string> categories;
  if (!a.categories.empty()) {
    const json j = load_config(a.categories);
    if (!j.is_object()) throw ConfigError("categories file must map image ids to class names");
    for (const auto& [id, c] : j.items()) categories[id] = c.get<std::string>();
  }
  int reps = 1;
  auto items = eval::load_run(a.pred, a.gt, categories, &reps);
  eval::EvalOptions opts;
  opts.repetitions = reps;
  opts.run = a.run.empty() ? fs::path(a.report).stem().string() : a.run;
  for (int r = 0; r < reps; ++r) opts.seeds.push_back(a.common.seed + static_cast<std::uint64_t>(r));
  const eval::EvalReport report = eval::evaluate_run(std::move(items), opts);
  io::write_text(a.report, eval::format_report(report));
  std::printf("mIoU %.4f  mean Dice %.4f  (%zu instance results, %zu errors)\n", report.miou, report.mean_dice,
              report.instances.size(), report.errors.size());
  return 0;
}

// --- serve ---------------------------------------------------------------------

struct ServeArgs {
  Common common;
  std::optional<int> port;
  std::string host;
  std::string backend;
  std::string data_root;
  std::string taxonomy;
  std::string ui_dir;
};

int run_serve(const ServeArgs& a) {
  service::Overrides flags;
  if (a.port) flags["port"] = std::to_string(*a.port);
  if (!a.host.empty()) flags["host"] = a.host;
  if (!a.backend.empty()) flags["backend"] = a.backend;
  if (!a.data_root.empty()) flags["data_root"] = a.data_root;
  if (!a.taxonomy.empty()) flags["taxonomy"] = a.taxonomy;
  if (!a.ui_dir.empty()) flags["ui_dir"] = a.ui_dir;
  const auto env = service::env_overrides([](const char* k) { return std::getenv(k); });
  service::ServiceConfig cfg = service::resolve_config(flags, env, load_config(a.common.config));
  service::Service svc(cfg);
  const int port = svc.start();
  std::cout << "serving on http://" << cfg.host << ":" << port << " (backend " << cfg.backend << ", data "
            << cfg.data_root.string() << ")" << std::endl;
  svc.wait();
  return 0;
}

// --- store ---------------------------------------------------------------------

struct StoreArgs {
  Common common;
  std::string data_root = "xannot-data";
  std::string dir;
  std::string source = "operational";
  std::string split;
};

int run_export(const StoreArgs& a) {
  auto store = datastore::AnnotationStore::open(a.data_root);
  const auto s = datastore::export_archive(*store, a.dir);
  std::cout << "exported " << s.images << " image(s) and " << s.annotations << " annotation(s) to " << a.dir << "\n";
  return 0;
}

int run_import(const StoreArgs& a) {
  auto store = datastore::AnnotationStore::open(a.data_root);
  const auto s = datastore::import_archive(*store, a.dir);
  std::cout << "imported " << s.images << " image(s) and " << s.annotations << " annotation(s) from " << a.dir << "\n";
  return 0;
}

int run_ingest(const StoreArgs& a) {
  auto store = datastore::AnnotationStore::open(a.data_root);
  std::optional<curation::Split> split;
  if (!a.split.empty()) split = curation::split_from_string(a.split);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  int added = 0;
  for (const auto& f : files) {
    const std::string id = f.stem().string();
    if (store->find_image(id)) continue;
    store->add_image(id, a.source, io::read_file(f), split);
    ++added;
  }
  std::cout << "ingested " << added << " image(s) into " << a.data_root << "\n";
  return 0;
}

// --- gradcheck -----------------------------------------------------------------

struct GradArgs {
  Common common;
  int inputs = 20;
  int size = 16;
  bool verbose = false;
};

int run_gradcheck_cmd(const GradArgs& a) {
  neural::GradCheckOptions opts;
  opts.seed = a.common.seed;
  opts.inputs = a.inputs;
  opts.size = a.size;
  const auto report = neural::run_gradcheck(opts);
  if (a.verbose) {
    for (const auto& e : report.entries) {
      std::printf("  %-28s max rel err %.3e  (%zu coords, %zu skipped)\n", e.name.c_str(), e.max_relative_error,
                  e.coordinates, e.skipped);
    }
  }
  const bool ok = report.max_relative_error < 1e-4;
  std::printf("max relative error %.3e over %zu checks in %.1f s: %s\n", report.max_relative_error,
              report.entries.size(), report.seconds, ok ? "PASS" : "FAIL");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"X-ray contraband annotation toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Render synthetic dual-energy scenes with ground-truth masks");
  add_common(c_synth, synth.common);
  c_synth->add_option("--scenes", synth.scenes, "Number of scenes")->check(CLI::Range(1, 1000000));
  c_synth->add_option("--out", synth.out, "Output directory");
  c_synth->add_option("--scene", synth.scene_file, "Render one scene description file")->check(CLI::ExistingFile);
  c_synth->add_option("--generator", synth.generator, "random | composite | dumbbell");
  c_synth->add_option("--palette", synth.palette, "Palette name");

  CurateArgs curate;
  auto* c_curate = app.add_subcommand("curate", "Filter an image corpus and write a curation report");
  add_common(c_curate, curate.common);
  c_curate->add_option("--in", curate.in, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  c_curate->add_option("--report", curate.report, "Report path (JSON lines)")->required();
  c_curate->add_option("--split", curate.split_out, "Also write an 8:1:1 split of the kept images");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Score predicted masks against ground truth");
  add_common(c_eval, ev.common);
  c_eval->add_option("--pred", ev.pred, "Prediction directory (or rep0, rep1, ... subdirectories)")->required();
  c_eval->add_option("--gt", ev.gt, "Ground-truth mask directory")->required();
  c_eval->add_option("--report", ev.report, "Report path")->required();
  c_eval->add_option("--categories", ev.categories, "JSON map of id to category")->check(CLI::ExistingFile);
  c_eval->add_option("--run", ev.run, "Run name recorded in the report");

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve", "Run the annotation service");
  add_common(c_serve, serve.common);
  c_serve->add_option("--port", serve.port, "Listen port")->check(CLI::Range(0, 65535));
  c_serve->add_option("--host", serve.host, "Listen address");
  c_serve->add_option("--backend", serve.backend, "builtin or segmenter base URL");
  c_serve->add_option("--data-root", serve.data_root, "Store directory");
  c_serve->add_option("--taxonomy", serve.taxonomy, "Taxonomy JSON file")->check(CLI::ExistingFile);
  c_serve->add_option("--ui-dir", serve.ui_dir, "Built UI bundle to serve under /ui");

  StoreArgs exp, imp, ing;
  auto* c_export = app.add_subcommand("export", "Export the annotation store as an archive directory");
  add_common(c_export, exp.common);
  c_export->add_option("--data-root", exp.data_root, "Store directory");
  c_export->add_option("--out", exp.dir, "Archive directory")->required();
  auto* c_import = app.add_subcommand("import", "Import an archive directory into the store");
  add_common(c_import, imp.common);
  c_import->add_option("--data-root", imp.data_root, "Store directory");
  c_import->add_option("--in", imp.dir, "Archive directory")->required()->check(CLI::ExistingDirectory);
  auto* c_ingest = app.add_subcommand("ingest", "Add every PNG in a directory to the store");
  add_common(c_ingest, ing.common);
  c_ingest->add_option("--data-root", ing.data_root, "Store directory");
  c_ingest->add_option("--in", ing.dir, "Image directory")->required()->check(CLI::ExistingDirectory);
  c_ingest->add_option("--source", ing.source, "Source domain tag");
  c_ingest->add_option("--split", ing.split, "train | validation | test");

  GradArgs grad;
  auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference check of the encoder gradients");
  add_common(c_grad, grad.common);
  c_grad->add_option("--inputs", grad.inputs, "Random full-network inputs")->check(CLI::Range(1, 1000));
  c_grad->add_option("--size", grad.size, "Input side length (multiple of 8)")->check(CLI::Range(8, 256));
  c_grad->add_flag("-v,--verbose", grad.verbose, "Print every check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (c_synth->parsed()) return run_synth(synth);
    if (c_curate->parsed()) return run_curate(curate, c_curate->count("--seed") > 0);
    if (c_eval->parsed()) return run_eval(ev);
    if (c_serve->parsed()) return run_serve(serve);
    if (c_export->parsed()) return run_export(exp);
    if (c_import->parsed()) return run_import(imp);
    if (c_ingest->parsed()) return run_ingest(ing);
    if (c_grad->parsed()) return run_gradcheck_cmd(grad);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
