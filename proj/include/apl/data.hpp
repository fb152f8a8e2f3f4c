#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "apl/tensor.hpp"

namespace apl {

// One training/eval item. Labeled samples carry `mask`; samples whose
// annotation was discarded by make_split keep it in `hidden_mask` so
// pseudo-label quality can be audited without leaking it to training.
struct Sample {
  std::string id;
  Tensor image;                       // (3, H, W), values in [0, 1]
  std::optional<Tensor> mask;         // (1, H, W), values in {0, 1}
  std::optional<Tensor> hidden_mask;  // training-invisible ground truth
};

struct DatasetLayout {
  std::string images_dir = "images";
  std::string masks_dir = "masks";
};

struct LoadOptions {
  int resolution = 128;  // square edge every sample is resized to
};

// Loads `<root>/<images_dir>/*.{png,jpg,jpeg}` paired with
// `<root>/<masks_dir>/<stem>.png` by filename stem. Masks binarize at 50%
// of the format's max intensity. Samples whose decoded mask size differs
// from the image are rejected with a warning. Returns samples sorted by id.
std::vector<Sample> load_dataset(const std::filesystem::path& root, const DatasetLayout& layout,
                                 const LoadOptions& opts);

struct SplitConfig {
  std::optional<int> labeled_count;
  std::optional<double> labeled_ratio;  // in (0, 1]
  uint64_t seed = 1;

  int resolve_count(size_t total) const;
};

struct Split {
  std::vector<Sample> labeled;
  std::vector<Sample> unlabeled;  // masks moved into hidden_mask
};

// Uniform-random labeled/unlabeled partition, deterministic under seed.
// Every input sample must carry a mask.
Split make_split(const std::vector<Sample>& samples, const SplitConfig& cfg);

enum class ShapeKind { ellipse, rectangle, blob };

struct SyntheticConfig {
  int image_size = 64;
  int num_images = 100;
  std::set<ShapeKind> shape_kinds = {ShapeKind::ellipse, ShapeKind::rectangle, ShapeKind::blob};
  double noise_level = 0.2;
  uint64_t seed = 1;
};

// Renders images that each contain exactly one foreground shape covering
// 5-60% of the pixels, with per-channel foreground/background contrast and
// additive Gaussian noise. Masks are the exact shape support, values {0,1}.
std::vector<Sample> generate_synthetic(const SyntheticConfig& cfg);

// Writes samples as `<root>/images/<id>.png` + `<root>/masks/<id>.png`
// (8-bit), matching the load_dataset layout.
void export_dataset(const std::vector<Sample>& samples, const std::filesystem::path& root);

// --- image plumbing (OpenCV-backed) ---

// Decodes an image file to (3, H, W) in [0, 1]; empty optional on failure.
std::optional<Tensor> read_image(const std::filesystem::path& path);
// Decodes a grayscale file to (1, H, W) in [0, 1]; empty optional on failure.
std::optional<Tensor> read_gray(const std::filesystem::path& path);
// Writes a (1, H, W) map in [0, 1] as an 8-bit grayscale PNG.
void write_gray_png(const Tensor& map, const std::filesystem::path& path);
// Writes a (3, H, W) image in [0, 1] as an 8-bit PNG.
void write_rgb_png(const Tensor& image, const std::filesystem::path& path);
// Bilinear resize for images, nearest for masks (keeps values binary).
Tensor resize_image(const Tensor& image, int out_h, int out_w);
Tensor resize_mask_nearest(const Tensor& mask, int out_h, int out_w);

}  // namespace apl
