#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <memory>

#include "xannot/apg.hpp"
#include "xannot/backend.hpp"
#include "xannot/curation.hpp"
#include "xannot/energy.hpp"
#include "xannot/eval.hpp"
#include "xannot/gradcheck.hpp"
#include "xannot/rle.hpp"
#include "xannot/taxonomy.hpp"

namespace py = pybind11;
using namespace xannot;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

PseudoColorImage image_from(const U8Array& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw py::value_error("expected an H x W x 3 uint8 array");
  PseudoColorImage img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::memcpy(img.rgb.data(), a.data(), img.rgb.size());
  return img;
}

Grid<std::uint8_t> plane_from(const U8Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected an H x W uint8 array");
  const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  return Grid<std::uint8_t>(w, h, std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

U8Array to_array(const PseudoColorImage& img) {
  U8Array out({img.height, img.width, 3});
  std::memcpy(out.mutable_data(), img.rgb.data(), img.rgb.size());
  return out;
}

U8Array to_array(const Grid<std::uint8_t>& g) {
  U8Array out({g.height(), g.width()});
  std::memcpy(out.mutable_data(), g.storage().data(), g.size());
  return out;
}

py::array_t<double> to_array(const SoftMask& m) {
  py::array_t<double> out({m.height(), m.width()});
  std::memcpy(out.mutable_data(), m.storage().data(), m.size() * sizeof(double));
  return out;
}

py::dict rendered_dict(const energy::SceneDescription& desc) {
  const auto r = energy::render_scene(energy::build_scene(desc), energy::palette_by_name(desc.palette));
  py::list masks;
  for (const auto& m : r.object_masks) masks.append(to_array(m));
  py::dict d;
  d["image"] = to_array(r.image);
  d["high"] = to_array(r.pair.high);
  d["low"] = to_array(r.pair.low);
  d["object_masks"] = masks;
  d["object_ids"] = r.object_ids;
  d["description"] = energy::format_scene(desc);
  return d;
}

backend::OracleRequest request_for(const PseudoColorImage& img) {
  backend::OracleRequest req;
  req.image = std::make_shared<PseudoColorImage>(img);
  req.width = img.width;
  req.height = img.height;
  return req;
}

}  // namespace

PYBIND11_MODULE(xannot, m) {
  m.doc() = "X-ray contraband annotation toolkit";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<DegenerateMask>(m, "DegenerateMask", base.ptr());
  py::register_exception<TaxonomyError>(m, "TaxonomyError", base.ptr());
  py::register_exception<CodecError>(m, "CodecError", base.ptr());
  py::register_exception<BackendError>(m, "BackendError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());

  // energy
  m.def("decompose", [](const U8Array& img) {
    const auto pair = energy::decompose(image_from(img));
    return py::make_tuple(to_array(pair.high), to_array(pair.low));
  }, py::arg("image"), "Per-pixel channel max and min of an H x W x 3 image.");
  m.def("attenuation", &energy::attenuation, py::arg("energy_kev"), py::arg("atomic_number"),
        py::arg("photo_scale") = 3.0, py::arg("compton_scale") = 0.2);
  m.def("apply_palette", [](const U8Array& high, const U8Array& low, const std::string& palette) {
    return to_array(energy::apply_palette({plane_from(high), plane_from(low)}, energy::palette_by_name(palette)));
  }, py::arg("high"), py::arg("low"), py::arg("palette") = "canonical");
  m.def("palette_names", &energy::palette_names);
  m.def("synth_scene", [](std::uint64_t seed, const std::string& kind, int width, int height) {
    Rng rng(seed);
    energy::SceneDescription desc;
    if (kind == "composite") {
      desc = energy::composite_tool_scene(rng, width, height);
    } else if (kind == "dumbbell") {
      desc = energy::dumbbell_scene(width, height);
    } else if (kind == "random") {
      desc = energy::random_scene(rng, {width, height, 1, 3});
    } else {
      throw py::value_error("kind must be composite, dumbbell or random");
    }
    return rendered_dict(desc);
  }, py::arg("seed") = 0, py::arg("kind") = "composite", py::arg("width") = 96, py::arg("height") = 96);
  m.def("render_scene_text", [](const std::string& text) { return rendered_dict(energy::parse_scene(text)); },
        py::arg("text"));

  // curation
  m.def("laplacian_variance", [](const U8Array& gray) { return curation::laplacian_variance(plane_from(gray)); },
        py::arg("gray"));
  m.def("apportion", [](int n, int train, int val, int test) {
    return curation::apportion(n, {train, val, test});
  }, py::arg("n"), py::arg("train") = 8, py::arg("validation") = 1, py::arg("test") = 1);

  // masks and metrics
  m.def("rle_encode", [](const U8Array& mask) {
    const auto rle = datastore::rle_encode(plane_from(mask));
    py::dict d;
    d["size"] = std::vector<int>{rle.height, rle.width};
    d["counts"] = rle.counts;
    return d;
  }, py::arg("mask"));
  m.def("rle_decode", [](const std::vector<std::uint32_t>& counts, const std::pair<int, int>& size) {
    return to_array(datastore::rle_decode({size.first, size.second, counts}));
  }, py::arg("counts"), py::arg("size"));
  m.def("iou", [](const U8Array& a, const U8Array& b) { return eval::iou(plane_from(a), plane_from(b)); });
  m.def("dice", [](const U8Array& a, const U8Array& b) { return eval::dice(plane_from(a), plane_from(b)); });
  m.def("sign_test_p", &eval::sign_test_p, py::arg("wins"), py::arg("losses"));

  // segmentation and point generation
  m.def("region_grow", [](const U8Array& img, const std::vector<std::pair<double, double>>& points, double tolerance) {
    const auto image = image_from(img);
    std::vector<backend::PointPrompt> prompts;
    for (const auto& [x, y] : points) prompts.push_back({x, y, 1});
    backend::RegionGrowConfig cfg;
    cfg.tolerance = tolerance;
    py::list out;
    for (const auto& p : backend::region_grow_segment(energy::decompose(image).low, prompts, cfg)) {
      out.append(py::make_tuple(to_array(p.mask), p.score));
    }
    return out;
  }, py::arg("image"), py::arg("points"), py::arg("tolerance") = 12.0);
  m.def("apg_generate", [](const U8Array& img, double x, double y, std::uint64_t seed, double tolerance) {
    backend::RegionGrowConfig rg;
    rg.tolerance = tolerance;
    backend::BuiltinOracle oracle(rg);
    apg::APGConfig cfg;
    cfg.rng_seed = seed;
    const auto r = apg::generate(request_for(image_from(img)), {x, y, 1}, oracle, cfg);
    py::dict d;
    d["mode"] = apg::to_string(r.mode);
    d["points"] = py::make_tuple(py::make_tuple(r.points.first.x, r.points.first.y),
                                 py::make_tuple(r.points.second.x, r.points.second.y));
    if (r.b0) d["bbox"] = py::make_tuple(r.b0->x_min, r.b0->y_min, r.b0->x_max, r.b0->y_max);
    if (r.box) d["box"] = py::make_tuple(r.box->x0, r.box->y0, r.box->x1, r.box->y1);
    if (r.c1) d["centroids"] = py::make_tuple(py::make_tuple(r.c1->x, r.c1->y), py::make_tuple(r.c2->x, r.c2->y));
    d["scales"] = py::make_tuple(r.s_w, r.s_h);
    d["m0"] = to_array(r.m0);
    return d;
  }, py::arg("image"), py::arg("x"), py::arg("y"), py::arg("seed") = 0, py::arg("tolerance") = 12.0);
  m.def("farthest_cross_pair", [](const std::vector<std::pair<int, int>>& c1, const std::vector<std::pair<int, int>>& c2) {
    std::vector<apg::Pixel> a, b;
    for (const auto& [x, y] : c1) a.push_back({x, y});
    for (const auto& [x, y] : c2) b.push_back({x, y});
    const auto [p, q] = apg::farthest_cross_pair(a, b);
    return py::make_tuple(py::make_tuple(p.x, p.y), py::make_tuple(q.x, q.y));
  }, py::arg("c1"), py::arg("c2"));

  // taxonomy
  m.def("validate_category", [](const std::string& name) {
    const auto ref = datastore::Taxonomy::builtin().validate_category(name);
    return py::make_tuple(ref.superclass, ref.fine);
  }, py::arg("name"));
  m.def("taxonomy", [] {
    py::dict d;
    for (const auto& g : datastore::Taxonomy::builtin().groups()) d[py::str(g.name)] = g.classes;
    return d;
  });

  // neural
  m.def("gradcheck", [](std::uint64_t seed, int inputs, int size) {
    neural::GradCheckOptions opts;
    opts.seed = seed;
    opts.inputs = inputs;
    opts.size = size;
    const auto report = neural::run_gradcheck(opts);
    return py::make_tuple(report.max_relative_error, report.seconds);
  }, py::arg("seed") = 0, py::arg("inputs") = 2, py::arg("size") = 16, py::call_guard<py::gil_scoped_release>());
}
