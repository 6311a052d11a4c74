#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "i2ckd/jsonutil.hpp"
#include "i2ckd/rng.hpp"
#include "i2ckd/tensor.hpp"

namespace i2ckd {

// Synthetic shape-segmentation data: a textured background plus a handful
// of colored rectangles/ellipses/triangles, labeled by the topmost shape.
// Class identity drives the base color; correlation strength and per-pixel
// noise control how hard the task is. Identical spec + seed reproduces the
// dataset bit for bit; every sample derives from (seed, split, index) only.
struct DatasetSpec {
  int num_classes = 5;  // background + 4 shape classes
  std::size_t height = 64;
  std::size_t width = 64;
  int train_samples = 500;
  int val_samples = 100;
  int test_samples = 100;
  std::uint64_t seed = 1234;
  int shapes_min = 3;
  int shapes_max = 6;
  double color_noise_sigma = 0.18;         // per-pixel additive noise
  double class_color_correlation = 0.85;   // 1 = color fully determined by class

  void validate() const;
  Json to_json() const;
  static DatasetSpec from_json(const Json& j, const std::string& context);

  int split_count(std::string_view split) const;
};

struct Sample {
  Tensor image;  // [3,H,W], values in [0,1]
  LabelMap mask;
  std::string id;
};

Sample generate_sample(const DatasetSpec& spec, std::string_view split, int index);
std::vector<Sample> generate_split(const DatasetSpec& spec, std::string_view split);

struct AugmentParams {
  bool flip = false;
  double scale = 1.0;    // in [0.5, 2]
  double offset_y = 0.0; // crop/pad placement, in [0,1)
  double offset_x = 0.0;
};

AugmentParams draw_augment_params(Rng& rng);
// Horizontal flip, bilinear (image) / nearest (mask) rescale, then random
// crop or pad back to the original extent (pad: image 0, mask ignore).
Sample apply_augment(const Sample& sample, const AugmentParams& params);
Sample augment(const Sample& sample, Rng& rng);

// On-disk layout: <dir>/<split>/<id>.image.stf (f32), <id>.mask.stf (u8),
// <dir>/<split>/manifest.json listing ids in order, <dir>/dataset.json
// holding the resolved spec.
void save_dataset(const std::filesystem::path& dir, const DatasetSpec& spec);
std::vector<Sample> load_split(const std::filesystem::path& dir, std::string_view split);
DatasetSpec load_dataset_spec(const std::filesystem::path& dir);

// Fraction of split images in which each class occupies at least one pixel.
std::vector<double> class_presence(const std::vector<Sample>& samples, int num_classes);

}  // namespace i2ckd
