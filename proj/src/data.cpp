#include "apl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <numeric>

namespace apl {

namespace fs = std::filesystem;

namespace {

bool has_image_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ".png" || e == ".jpg" || e == ".jpeg";
}

Tensor binarize_mask(const Tensor& gray) {
  Tensor m(1, gray.h, gray.w);
  for (long i = 0; i < gray.size(); ++i) m.v[i] = gray.v[i] > 0.5 ? 1.0 : 0.0;
  return m;
}

}  // namespace

std::vector<Sample> load_dataset(const fs::path& root, const DatasetLayout& layout,
                                 const LoadOptions& opts) {
  const fs::path images_dir = root / layout.images_dir;
  const fs::path masks_dir = root / layout.masks_dir;
  if (!fs::is_directory(images_dir))
    throw ConfigError("load_dataset: missing images directory " + images_dir.string());

  std::map<std::string, fs::path> image_files;
  for (const auto& entry : fs::directory_iterator(images_dir))
    if (entry.is_regular_file() && has_image_ext(entry.path()))
      image_files[entry.path().stem().string()] = entry.path();
  if (image_files.empty())
    throw ConfigError("load_dataset: no images found in " + images_dir.string());

  std::map<std::string, fs::path> mask_files;
  if (fs::is_directory(masks_dir))
    for (const auto& entry : fs::directory_iterator(masks_dir))
      if (entry.is_regular_file() && has_image_ext(entry.path()))
        mask_files[entry.path().stem().string()] = entry.path();

  std::vector<Sample> samples;
  for (const auto& [stem, img_path] : image_files) {
    auto image = read_image(img_path);
    if (!image) {
      std::cerr << "warning: could not decode " << img_path << ", skipping\n";
      continue;
    }
    Sample s;
    s.id = stem;
    std::optional<Tensor> mask;
    if (auto it = mask_files.find(stem); it != mask_files.end()) {
      auto gray = read_gray(it->second);
      if (!gray) {
        std::cerr << "warning: could not decode mask " << it->second << ", skipping sample " << stem
                  << "\n";
        continue;
      }
      if (gray->h != image->h || gray->w != image->w) {
        std::cerr << "warning: image/mask size mismatch for " << stem << " (" << image->h << "x"
                  << image->w << " vs " << gray->h << "x" << gray->w << "), rejecting sample\n";
        continue;
      }
      // Binarize at 50% of the format's max intensity, then resize.
      mask = resize_mask_nearest(binarize_mask(*gray), opts.resolution, opts.resolution);
    }
    s.image = resize_image(*image, opts.resolution, opts.resolution);
    s.mask = std::move(mask);
    samples.push_back(std::move(s));
  }
  // std::map iteration already yields ids in sorted order.
  return samples;
}

int SplitConfig::resolve_count(size_t total) const {
  if (labeled_count && labeled_ratio)
    throw ConfigError("SplitConfig: give either labeled_count or labeled_ratio, not both");
  int count = 0;
  if (labeled_count) {
    count = *labeled_count;
  } else if (labeled_ratio) {
    if (!(*labeled_ratio > 0.0 && *labeled_ratio <= 1.0))
      throw ConfigError("SplitConfig: labeled_ratio must lie in (0, 1]");
    count = static_cast<int>(std::llround(*labeled_ratio * static_cast<double>(total)));
  } else {
    throw ConfigError("SplitConfig: labeled_count or labeled_ratio required");
  }
  if (count <= 0) throw ConfigError("SplitConfig: labeled count must be positive");
  if (count > static_cast<int>(total))
    throw ConfigError("SplitConfig: labeled count " + std::to_string(count) + " exceeds dataset size " +
                      std::to_string(total));
  return count;
}

Split make_split(const std::vector<Sample>& samples, const SplitConfig& cfg) {
  const int count = cfg.resolve_count(samples.size());
  for (const Sample& s : samples)
    if (!s.mask) throw ConfigError("make_split: sample " + s.id + " carries no mask");

  std::vector<size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(cfg.seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<size_t> labeled_idx(order.begin(), order.begin() + count);
  std::vector<size_t> unlabeled_idx(order.begin() + count, order.end());
  std::sort(labeled_idx.begin(), labeled_idx.end());
  std::sort(unlabeled_idx.begin(), unlabeled_idx.end());

  Split split;
  for (size_t i : labeled_idx) split.labeled.push_back(samples[i]);
  for (size_t i : unlabeled_idx) {
    Sample s = samples[i];
    s.hidden_mask = std::move(s.mask);  // keep ground truth for post-hoc audits only
    s.mask.reset();
    split.unlabeled.push_back(std::move(s));
  }
  return split;
}

// ---------------------------------------------------------------------------
// Synthetic shapes
// ---------------------------------------------------------------------------

namespace {

struct ShapeParams {
  ShapeKind kind;
  double cx, cy, ax, ay, theta;  // ellipse/rectangle
  std::vector<std::array<double, 5>> lobes;  // blob: (cx, cy, ax, ay, theta)
};

bool inside_ellipse(double x, double y, double cx, double cy, double ax, double ay, double theta) {
  const double dx = x - cx, dy = y - cy;
  const double u = dx * std::cos(theta) + dy * std::sin(theta);
  const double v = -dx * std::sin(theta) + dy * std::cos(theta);
  return (u * u) / (ax * ax) + (v * v) / (ay * ay) <= 1.0;
}

bool inside_rect(double x, double y, double cx, double cy, double hx, double hy, double theta) {
  const double dx = x - cx, dy = y - cy;
  const double u = dx * std::cos(theta) + dy * std::sin(theta);
  const double v = -dx * std::sin(theta) + dy * std::cos(theta);
  return std::fabs(u) <= hx && std::fabs(v) <= hy;
}

Tensor render_mask(const ShapeParams& p, int n) {
  Tensor mask(1, n, n, 0.0);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      bool in = false;
      switch (p.kind) {
        case ShapeKind::ellipse:
          in = inside_ellipse(x, y, p.cx, p.cy, p.ax, p.ay, p.theta);
          break;
        case ShapeKind::rectangle:
          in = inside_rect(x, y, p.cx, p.cy, p.ax, p.ay, p.theta);
          break;
        case ShapeKind::blob:
          for (const auto& l : p.lobes)
            if (inside_ellipse(x, y, l[0], l[1], l[2], l[3], l[4])) {
              in = true;
              break;
            }
          break;
      }
      if (in) mask.at(0, y, x) = 1.0;
    }
  return mask;
}

}  // namespace

std::vector<Sample> generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.image_size < 32) throw ConfigError("generate_synthetic: image_size must be >= 32");
  if (cfg.num_images <= 0) throw ConfigError("generate_synthetic: num_images must be positive");
  if (cfg.shape_kinds.empty()) throw ConfigError("generate_synthetic: shape_kinds must not be empty");
  if (cfg.noise_level < 0.0) throw ConfigError("generate_synthetic: noise_level must be >= 0");

  std::vector<ShapeKind> kinds(cfg.shape_kinds.begin(), cfg.shape_kinds.end());
  const int n = cfg.image_size;
  const double s = static_cast<double>(n);
  Rng rng(cfg.seed);

  std::vector<Sample> samples;
  samples.reserve(cfg.num_images);
  for (int img = 0; img < cfg.num_images; ++img) {
    // Rejection-sample a shape whose support covers 5-60% of the pixels.
    Tensor mask;
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 1000) throw TrainingAbort("generate_synthetic: could not place a shape in range");
      ShapeParams p;
      p.kind = kinds[static_cast<size_t>(rand_index(rng, static_cast<long>(kinds.size())))];
      p.cx = uniform(rng, 0.30 * s, 0.70 * s);
      p.cy = uniform(rng, 0.30 * s, 0.70 * s);
      p.theta = uniform(rng, 0.0, M_PI);
      if (p.kind == ShapeKind::blob) {
        const int lobes = 3 + static_cast<int>(rand_index(rng, 3));
        for (int i = 0; i < lobes; ++i)
          p.lobes.push_back({p.cx + uniform(rng, -0.12 * s, 0.12 * s),
                             p.cy + uniform(rng, -0.12 * s, 0.12 * s), uniform(rng, 0.10 * s, 0.22 * s),
                             uniform(rng, 0.10 * s, 0.22 * s), uniform(rng, 0.0, M_PI)});
      } else {
        p.ax = uniform(rng, 0.14 * s, 0.38 * s);
        p.ay = uniform(rng, 0.14 * s, 0.38 * s);
      }
      mask = render_mask(p, n);
      const double coverage = mask.mean();
      if (coverage >= 0.05 && coverage <= 0.60) break;
    }

    // Per-channel disjoint intensity bands; which side is brighter varies by
    // image and channel, so segmentation cannot reduce to one fixed threshold.
    double fg[3], bg[3];
    for (int ci = 0; ci < 3; ++ci) {
      const double lo = uniform(rng, 0.08, 0.42);
      const double hi = uniform(rng, 0.58, 0.92);
      const bool fg_bright = uniform(rng, 0.0, 1.0) < 0.5;
      fg[ci] = fg_bright ? hi : lo;
      bg[ci] = fg_bright ? lo : hi;
    }

    // Per-image difficulty scales the configured noise level.
    const double difficulty = uniform(rng, 0.3, 1.7);
    const double sigma = cfg.noise_level * difficulty;

    Sample sample;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "synth_%06d", img);
    sample.id = buf;
    sample.image = Tensor(3, n, n);
    for (int ci = 0; ci < 3; ++ci)
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          double value = mask.at(0, y, x) > 0.5 ? fg[ci] : bg[ci];
          if (sigma > 0.0) value = std::clamp(value + normal(rng, 0.0, sigma), 0.0, 1.0);
          sample.image.at(ci, y, x) = value;
        }
    sample.mask = std::move(mask);
    samples.push_back(std::move(sample));
  }
  return samples;
}

void export_dataset(const std::vector<Sample>& samples, const fs::path& root) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  for (const Sample& s : samples) {
    write_rgb_png(s.image, root / "images" / (s.id + ".png"));
    const Tensor* mask = s.mask ? &*s.mask : (s.hidden_mask ? &*s.hidden_mask : nullptr);
    if (mask) write_gray_png(*mask, root / "masks" / (s.id + ".png"));
  }
}

}  // namespace apl
