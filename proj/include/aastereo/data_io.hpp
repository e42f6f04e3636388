#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "aastereo/disparity_head.hpp"

namespace aastereo {

// Images are H x W x C with values in [0, 1].
struct StereoPair {
  Tensor left;
  Tensor right;
  std::optional<DisparityMap> gt;
  std::optional<DisparityMap> pseudo;

  // Throws ShapeError when the invariants between the members do not hold.
  void validate() const;
};

Tensor hwc_to_chw(const Tensor& image);
Tensor chw_to_hwc(const Tensor& image);

// ---------------------------------------------------------------------------
// PFM, grayscale "Pf" only. Rows are stored bottom-up; a negative scale
// marks little-endian samples. Non-finite samples are read as invalid
// pixels (mask 0); the mask is left empty when every sample is finite.

DisparityMap read_pfm(const std::filesystem::path& path);
// Values are narrowed to 32-bit floats; written little-endian, scale -1.
void write_pfm(const DisparityMap& map, const std::filesystem::path& path);

// Binary PGM (P5, C = 1) or PPM (P6, C = 3), maxval up to 65535 with
// big-endian 16-bit samples above 255. Returns H x W x C in [0, 1].
Tensor read_image(const std::filesystem::path& path);
// Writes P5 for C = 1 and P6 for C = 3; values are clamped to [0, 1] and
// rounded to `maxval` levels.
void write_image(const Tensor& image, const std::filesystem::path& path,
                 std::uint16_t maxval = 255);

// ---------------------------------------------------------------------------
// Random-dot stereograms built from fronto-parallel rectangular layers.

struct LayerRect {
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t disparity = 0;
};

struct SyntheticSceneSpec {
  std::size_t height = 32;
  std::size_t width = 64;
  std::size_t channels = 3;
  // Used when `layers` is empty: one full-frame background plus
  // `num_layers - 1` random rectangles, disparities drawn from
  // [min_disparity, max_disparity] and sorted so nearer layers shift more.
  std::size_t num_layers = 3;
  std::size_t min_disparity = 0;
  std::size_t max_disparity = 8;
  double density = 0.5;  // probability that a texel carries a dot
  // Explicit layers, front to back. The last one is the background and
  // covers the whole frame regardless of its rectangle.
  std::vector<LayerRect> layers;
  std::uint64_t seed = 0;

  void validate() const;
};

// Left pixel (h, w) shows the frontmost layer L containing it; the right
// image is the same scene with every layer shifted left by its disparity.
// Each layer has its own texture addressed in left-image columns, extended
// by max_disparity on the right so disoccluded right-image regions show
// texels the left image never saw. gt is dense; the mask keeps pixels whose
// match (h, w - d) is inside the right image and shows the same layer.
// Dot values are multiples of 1/255, so 8-bit images round-trip exactly.
StereoPair generate_stereogram(const SyntheticSceneSpec& spec);

// `count` stereograms whose seeds are derived from spec.seed.
std::vector<StereoPair> generate_dataset(const SyntheticSceneSpec& spec, std::size_t count);

// Keeps exactly round(fraction * n) of the n valid pixels, chosen uniformly
// by a seeded shuffle.
DisparityMap sparsify_mask(const DisparityMap& gt, double fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Dataset directories hold left_NNNN.ppm, right_NNNN.ppm, disp_NNNN.pfm and
// optionally mask_NNNN.pgm (nonzero = valid) and pseudo_NNNN.pfm.

void write_dataset(const std::vector<StereoPair>& pairs, const std::filesystem::path& dir);
std::vector<StereoPair> read_dataset(const std::filesystem::path& dir);

}  // namespace aastereo
