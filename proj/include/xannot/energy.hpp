#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xannot/grid.hpp"
#include "xannot/random.hpp"

namespace xannot::energy {

/// High- and low-energy grayscale planes of one scan. high >= low pointwise.
struct DualEnergyPair {
  GrayPlane high;
  GrayPlane low;

  int width() const noexcept { return high.width(); }
  int height() const noexcept { return high.height(); }

  friend bool operator==(const DualEnergyPair&, const DualEnergyPair&) = default;
};

/// Per-pixel channel maximum (high) and minimum (low).
DualEnergyPair decompose(const PseudoColorImage& image);

/// Linear attenuation coefficient: photo_scale * Z^3 / E^3 + compton_scale / E.
/// Throws DomainError when energy_kev <= 0 or atomic_number < 0.
double attenuation(double energy_kev, double atomic_number, double photo_scale, double compton_scale);

struct Material {
  double atomic_number = 1.0;
  int offset_x = 0;
  int offset_y = 0;
  /// Local thickness map; the footprint is where thickness > 0.
  Grid<double> thickness;
  /// Materials sharing an object id form one object instance (e.g. blade + handle).
  int object_id = -1;
};

struct SyntheticScene {
  int width = 0;
  int height = 0;
  std::vector<Material> materials;
  double incident_intensity = 255.0;
  double energy_low = 60.0;
  double energy_high = 120.0;
  double photo_scale = 3.0;
  double compton_scale = 0.2;
};

/// Checks dims, energies, coefficients and that every footprint fits the canvas.
void validate(const SyntheticScene& scene);

/// Transmitted intensity I0 * exp(-sum mu * d) at each energy, unquantized.
struct Transmission {
  Grid<double> high;
  Grid<double> low;
};

Transmission transmit(const SyntheticScene& scene);

/// Round half up, clamped to [0, 255].
std::uint8_t quantize(double value) noexcept;

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Display mapping from (G_max, G_min) to RGB. The canonical palette keeps the
/// extremes as the channel max and min, so decompose() inverts it exactly.
struct Palette {
  std::string name;
  bool canonical = false;
  bool preserves_extremes = false;
  Rgb (*map)(std::uint8_t g_max, std::uint8_t g_min) = nullptr;
};

const Palette& canonical_palette();
/// "canonical", "greenish" or "warm"; throws ConfigError otherwise.
const Palette& palette_by_name(std::string_view name);
std::vector<std::string> palette_names();

PseudoColorImage apply_palette(const DualEnergyPair& pair, const Palette& palette);

struct RenderedScene {
  PseudoColorImage image;
  DualEnergyPair pair;
  /// One mask per material, in scene order.
  std::vector<BinaryMask> material_masks;
  /// One mask per object id (ascending), union of its materials' footprints.
  std::vector<BinaryMask> object_masks;
  std::vector<int> object_ids;
};

RenderedScene render_scene(const SyntheticScene& scene, const Palette& palette);

// --- scene descriptions -----------------------------------------------------

enum class ShapeKind { disk, rect, ellipse };

/// One material placed as a primitive shape. Thickness ramps linearly from
/// `thickness` to `thickness_end` along `ramp_axis` across the shape extent.
struct ShapeSpec {
  ShapeKind kind = ShapeKind::disk;
  double atomic_number = 26.0;
  double cx = 0.0;  ///< centre (disk, ellipse) or top-left x (rect)
  double cy = 0.0;
  double rx = 1.0;  ///< radius (disk uses rx), semi-axis, or rect width
  double ry = 1.0;
  double thickness = 1.0;
  std::optional<double> thickness_end;
  char ramp_axis = 'x';
  int object_id = -1;
};

struct SceneDescription {
  int width = 64;
  int height = 64;
  double incident_intensity = 255.0;
  double energy_low = 60.0;
  double energy_high = 120.0;
  double photo_scale = 3.0;
  double compton_scale = 0.2;
  std::string palette = "canonical";
  std::vector<ShapeSpec> shapes;
};

/// Rasterizes shapes into materials, cropping each to its canvas-clipped footprint.
/// Throws PlacementError if a shape lies partly outside the canvas.
SyntheticScene build_scene(const SceneDescription& desc);

/// Plain-text format: "key value" lines followed by "material key=value ..." lines.
SceneDescription parse_scene(std::string_view text);
std::string format_scene(const SceneDescription& desc);

struct SceneGenConfig {
  int width = 128;
  int height = 128;
  int min_objects = 1;
  int max_objects = 3;
};

/// Random scene of disks, plates, dumbbells and two-material tools.
SceneDescription random_scene(Rng& rng, const SceneGenConfig& config = {});

/// One two-material composite (tapered metal blade + plastic handle) on an empty tray.
SceneDescription composite_tool_scene(Rng& rng, int width = 96, int height = 96);

/// Two equal disks joined by a thin bridge of the same material.
SceneDescription dumbbell_scene(int width = 96, int height = 64);

}  // namespace xannot::energy
