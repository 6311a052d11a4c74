#include "i2ckd/dataset.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "i2ckd/stf.hpp"

namespace i2ckd {

void DatasetSpec::validate() const {
  if (num_classes < 2 || num_classes > 64)
    throw std::invalid_argument("DatasetSpec: num_classes must be in [2, 64]");
  if (height < 16 || width < 16) throw std::invalid_argument("DatasetSpec: extents must be >= 16");
  if (train_samples < 0 || val_samples < 0 || test_samples < 0)
    throw std::invalid_argument("DatasetSpec: negative sample count");
  if (shapes_min < 0 || shapes_max < shapes_min)
    throw std::invalid_argument("DatasetSpec: bad shapes-per-image range");
  if (color_noise_sigma < 0.0) throw std::invalid_argument("DatasetSpec: negative color_noise_sigma");
  if (class_color_correlation < 0.0 || class_color_correlation > 1.0)
    throw std::invalid_argument("DatasetSpec: class_color_correlation must be in [0,1]");
}

Json DatasetSpec::to_json() const {
  Json j;
  j["num_classes"] = num_classes;
  j["height"] = height;
  j["width"] = width;
  j["train_samples"] = train_samples;
  j["val_samples"] = val_samples;
  j["test_samples"] = test_samples;
  j["seed"] = seed;
  j["shapes_min"] = shapes_min;
  j["shapes_max"] = shapes_max;
  j["color_noise_sigma"] = color_noise_sigma;
  j["class_color_correlation"] = class_color_correlation;
  return j;
}

DatasetSpec DatasetSpec::from_json(const Json& j, const std::string& context) {
  require_known_keys(j,
                     {"num_classes", "height", "width", "train_samples", "val_samples", "test_samples",
                      "seed", "shapes_min", "shapes_max", "color_noise_sigma", "class_color_correlation"},
                     context);
  DatasetSpec s;
  s.num_classes = json_get_or(j, "num_classes", s.num_classes);
  s.height = json_get_or(j, "height", s.height);
  s.width = json_get_or(j, "width", s.width);
  s.train_samples = json_get_or(j, "train_samples", s.train_samples);
  s.val_samples = json_get_or(j, "val_samples", s.val_samples);
  s.test_samples = json_get_or(j, "test_samples", s.test_samples);
  s.seed = json_get_or(j, "seed", s.seed);
  s.shapes_min = json_get_or(j, "shapes_min", s.shapes_min);
  s.shapes_max = json_get_or(j, "shapes_max", s.shapes_max);
  s.color_noise_sigma = json_get_or(j, "color_noise_sigma", s.color_noise_sigma);
  s.class_color_correlation = json_get_or(j, "class_color_correlation", s.class_color_correlation);
  s.validate();
  return s;
}

int DatasetSpec::split_count(std::string_view split) const {
  if (split == "train") return train_samples;
  if (split == "val") return val_samples;
  if (split == "test") return test_samples;
  throw std::invalid_argument("DatasetSpec: unknown split '" + std::string(split) + "'");
}

namespace {

struct Rgb {
  double r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

// Saturated, well-separated base color per foreground class.
Rgb class_base_color(int cls, int num_classes) {
  const int fg = num_classes - 1;
  const double hue = fg > 0 ? (cls - 1) / static_cast<double>(fg) * 0.83 : 0.0;
  return hsv_to_rgb(hue, 0.72, 0.78);
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

struct ShapeInstance {
  int kind;  // 0 rect, 1 ellipse, 2 triangle
  int cls;
  double cx, cy, ax, ay;
  double tx[3], ty[3];  // triangle vertices
  Rgb color;
};

bool shape_covers(const ShapeInstance& s, double x, double y) {
  switch (s.kind) {
    case 0:
      return std::fabs(x - s.cx) <= s.ax && std::fabs(y - s.cy) <= s.ay;
    case 1: {
      const double nx = (x - s.cx) / s.ax, ny = (y - s.cy) / s.ay;
      return nx * nx + ny * ny <= 1.0;
    }
    default: {
      auto edge = [&](int i, int j) {
        return (s.tx[j] - s.tx[i]) * (y - s.ty[i]) - (s.ty[j] - s.ty[i]) * (x - s.tx[i]);
      };
      const double e0 = edge(0, 1), e1 = edge(1, 2), e2 = edge(2, 0);
      return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
    }
  }
}

}  // namespace

Sample generate_sample(const DatasetSpec& spec, std::string_view split, int index) {
  spec.validate();
  if (index < 0 || index >= spec.split_count(split))
    throw std::invalid_argument("generate_sample: index out of range for split");

  Rng rng = Rng(spec.seed).derive(split).derive(static_cast<std::uint64_t>(index));
  const std::size_t H = spec.height, W = spec.width;

  // Background: unsaturated tone with a smooth low-frequency field.
  Rng bg = rng.derive("background");
  const double base_gray = bg.uniform(0.3, 0.55);
  double tint[3];
  for (double& t : tint) t = base_gray + bg.uniform(-0.05, 0.05);
  constexpr int kGrid = 5;
  double field[3][kGrid][kGrid];
  for (int c = 0; c < 3; ++c)
    for (int gy = 0; gy < kGrid; ++gy)
      for (int gx = 0; gx < kGrid; ++gx) field[c][gy][gx] = bg.normal(0.0, 0.07);

  std::vector<double> image(3 * H * W);
  std::vector<std::uint8_t> mask(H * W, 0);
  for (std::size_t y = 0; y < H; ++y) {
    const double fy = y * (kGrid - 1.0) / (H - 1.0);
    const int gy = std::min<int>(kGrid - 2, static_cast<int>(fy));
    const double wy = fy - gy;
    for (std::size_t x = 0; x < W; ++x) {
      const double fx = x * (kGrid - 1.0) / (W - 1.0);
      const int gx = std::min<int>(kGrid - 2, static_cast<int>(fx));
      const double wx = fx - gx;
      for (int c = 0; c < 3; ++c) {
        const double v = (1 - wy) * ((1 - wx) * field[c][gy][gx] + wx * field[c][gy][gx + 1]) +
                         wy * ((1 - wx) * field[c][gy + 1][gx] + wx * field[c][gy + 1][gx + 1]);
        image[c * H * W + y * W + x] = tint[c] + v;
      }
    }
  }

  // Shapes, topmost last.
  Rng shapes_rng = rng.derive("shapes");
  const int nshapes =
      spec.shapes_min + static_cast<int>(shapes_rng.next_below(spec.shapes_max - spec.shapes_min + 1));
  const double scale = static_cast<double>(std::min(H, W));
  for (int s = 0; s < nshapes; ++s) {
    Rng sr = shapes_rng.derive(static_cast<std::uint64_t>(s));
    ShapeInstance inst;
    inst.kind = static_cast<int>(sr.next_below(3));
    inst.cls = 1 + static_cast<int>(sr.next_below(spec.num_classes - 1));
    inst.cx = sr.uniform(0.12, 0.88) * W;
    inst.cy = sr.uniform(0.12, 0.88) * H;
    inst.ax = sr.uniform(0.08, 0.22) * scale;
    inst.ay = sr.uniform(0.08, 0.22) * scale;
    for (int v = 0; v < 3; ++v) {
      inst.tx[v] = inst.cx + sr.uniform(-1.0, 1.0) * inst.ax;
      inst.ty[v] = inst.cy + sr.uniform(-1.0, 1.0) * inst.ay;
    }
    const Rgb base = class_base_color(inst.cls, spec.num_classes);
    const double rho = spec.class_color_correlation;
    inst.color = {rho * base.r + (1 - rho) * sr.next_double(),
                  rho * base.g + (1 - rho) * sr.next_double(),
                  rho * base.b + (1 - rho) * sr.next_double()};

    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        if (!shape_covers(inst, x + 0.5, y + 0.5)) continue;
        mask[y * W + x] = static_cast<std::uint8_t>(inst.cls);
        image[0 * H * W + y * W + x] = inst.color.r;
        image[1 * H * W + y * W + x] = inst.color.g;
        image[2 * H * W + y * W + x] = inst.color.b;
      }
  }

  // Per-pixel color noise; the main difficulty dial.
  Rng noise = rng.derive("noise");
  for (double& v : image) v = clamp01(v + noise.normal(0.0, spec.color_noise_sigma));

  char idbuf[32];
  std::snprintf(idbuf, sizeof(idbuf), "%s-%06d", std::string(split).c_str(), index);
  return {Tensor::from_raw(Shape{3, H, W}, std::move(image)), LabelMap(H, W, std::move(mask)), idbuf};
}

std::vector<Sample> generate_split(const DatasetSpec& spec, std::string_view split) {
  const int n = spec.split_count(split);
  std::vector<Sample> out(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) out[i] = generate_sample(spec, split, i);
  return out;
}

AugmentParams draw_augment_params(Rng& rng) {
  AugmentParams p;
  p.flip = rng.bernoulli(0.5);
  p.scale = rng.uniform(0.5, 2.0);
  p.offset_y = rng.next_double();
  p.offset_x = rng.next_double();
  return p;
}

namespace {

Sample flip_horizontal(const Sample& s) {
  const std::size_t H = s.mask.height(), W = s.mask.width();
  std::vector<double> image(3 * H * W);
  std::vector<std::uint8_t> mask(H * W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      mask[y * W + x] = s.mask.at(y, W - 1 - x);
      for (int c = 0; c < 3; ++c)
        image[c * H * W + y * W + x] = s.image[c * H * W + y * W + (W - 1 - x)];
    }
  return {Tensor::from_raw(Shape{3, H, W}, std::move(image)), LabelMap(H, W, std::move(mask)), s.id};
}

}  // namespace

Sample apply_augment(const Sample& sample, const AugmentParams& params) {
  if (params.scale < 0.5 || params.scale > 2.0)
    throw std::invalid_argument("apply_augment: scale outside [0.5, 2]");
  const Sample* src = &sample;
  Sample flipped;
  if (params.flip) {
    flipped = flip_horizontal(sample);
    src = &flipped;
  }

  const std::size_t H = src->mask.height(), W = src->mask.width();
  const std::size_t nh = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(H * params.scale)));
  const std::size_t nw = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(W * params.scale)));

  // Bilinear image resample, nearest-neighbor mask resample.
  std::vector<double> rimage(3 * nh * nw);
  std::vector<std::uint8_t> rmask(nh * nw);
  for (std::size_t y = 0; y < nh; ++y) {
    const double sy = std::clamp((y + 0.5) * H / nh - 0.5, 0.0, static_cast<double>(H - 1));
    const std::size_t y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, H - 1);
    const double fy = sy - y0;
    const std::size_t my = std::min(H - 1, y * H / nh);
    for (std::size_t x = 0; x < nw; ++x) {
      const double sx = std::clamp((x + 0.5) * W / nw - 0.5, 0.0, static_cast<double>(W - 1));
      const std::size_t x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, W - 1);
      const double fx = sx - x0;
      const std::size_t mx = std::min(W - 1, x * W / nw);
      rmask[y * nw + x] = src->mask.at(my, mx);
      for (int c = 0; c < 3; ++c) {
        const double* plane = src->image.data() + c * H * W;
        const double v = (1 - fy) * ((1 - fx) * plane[y0 * W + x0] + fx * plane[y0 * W + x1]) +
                         fy * ((1 - fx) * plane[y1 * W + x0] + fx * plane[y1 * W + x1]);
        rimage[c * nh * nw + y * nw + x] = v;
      }
    }
  }

  // Crop or pad back to H x W per axis; pads are 0 for the image and the
  // ignore label for the mask, so padded area is excluded from training.
  auto place = [](double offset01, std::size_t from, std::size_t to) {
    // start offset in whichever of source/destination is larger
    const std::size_t room = (from > to ? from - to : to - from) + 1;
    return static_cast<std::size_t>(offset01 * room);
  };
  const std::size_t oy = place(params.offset_y, nh, H);
  const std::size_t ox = place(params.offset_x, nw, W);

  std::vector<double> image(3 * H * W, 0.0);
  std::vector<std::uint8_t> mask(H * W, LabelMap::kIgnore);
  for (std::size_t y = 0; y < H; ++y) {
    const bool pad_y = nh < H;
    if (pad_y && (y < oy || y >= oy + nh)) continue;
    const std::size_t sy = pad_y ? y - oy : y + oy;
    for (std::size_t x = 0; x < W; ++x) {
      const bool pad_x = nw < W;
      if (pad_x && (x < ox || x >= ox + nw)) continue;
      const std::size_t sx = pad_x ? x - ox : x + ox;
      mask[y * W + x] = rmask[sy * nw + sx];
      for (int c = 0; c < 3; ++c)
        image[c * H * W + y * W + x] = rimage[c * nh * nw + sy * nw + sx];
    }
  }
  return {Tensor::from_raw(Shape{3, H, W}, std::move(image)), LabelMap(H, W, std::move(mask)), sample.id};
}

Sample augment(const Sample& sample, Rng& rng) {
  const AugmentParams params = draw_augment_params(rng);
  return apply_augment(sample, params);
}

void save_dataset(const std::filesystem::path& dir, const DatasetSpec& spec) {
  spec.validate();
  std::filesystem::create_directories(dir);
  {
    Json j;
    j["spec"] = spec.to_json();
    std::ofstream os(dir / "dataset.json");
    if (!os) throw std::runtime_error("save_dataset: cannot write " + (dir / "dataset.json").string());
    os << j.dump(2) << '\n';
  }
  for (const char* split : {"train", "val", "test"}) {
    const auto split_dir = dir / split;
    std::filesystem::create_directories(split_dir);
    std::vector<Sample> samples = generate_split(spec, split);
    Json ids = Json::array();
    for (const Sample& s : samples) {
      ids.push_back(s.id);
      write_stf_f32(split_dir / (s.id + ".image.stf"), s.image);
      write_stf_u8(split_dir / (s.id + ".mask.stf"), s.mask);
    }
    Json manifest;
    manifest["ids"] = ids;
    std::ofstream os(split_dir / "manifest.json");
    if (!os) throw std::runtime_error("save_dataset: cannot write manifest for split " + std::string(split));
    os << manifest.dump(2) << '\n';
  }
}

std::vector<Sample> load_split(const std::filesystem::path& dir, std::string_view split) {
  const auto split_dir = dir / split;
  std::ifstream is(split_dir / "manifest.json");
  if (!is)
    throw std::runtime_error("load_split: missing manifest " + (split_dir / "manifest.json").string());
  Json manifest = Json::parse(is, nullptr, false);
  if (manifest.is_discarded())
    throw std::runtime_error("load_split: manifest is not valid JSON in " + split_dir.string());
  require_known_keys(manifest, {"ids"}, split_dir.string() + "/manifest.json");

  std::vector<Sample> out;
  for (const auto& id : manifest.at("ids").get<std::vector<std::string>>()) {
    Sample s;
    s.id = id;
    s.image = read_stf_tensor(split_dir / (id + ".image.stf"));
    s.mask = read_stf_labelmap(split_dir / (id + ".mask.stf"));
    out.push_back(std::move(s));
  }
  return out;
}

DatasetSpec load_dataset_spec(const std::filesystem::path& dir) {
  std::ifstream is(dir / "dataset.json");
  if (!is) throw std::runtime_error("load_dataset_spec: missing " + (dir / "dataset.json").string());
  Json j = Json::parse(is, nullptr, false);
  if (j.is_discarded()) throw std::runtime_error("load_dataset_spec: invalid JSON in " + dir.string());
  require_known_keys(j, {"spec"}, (dir / "dataset.json").string());
  return DatasetSpec::from_json(j.at("spec"), (dir / "dataset.json").string());
}

std::vector<double> class_presence(const std::vector<Sample>& samples, int num_classes) {
  std::vector<double> presence(num_classes, 0.0);
  for (const Sample& s : samples) {
    std::vector<bool> seen(num_classes, false);
    for (std::size_t i = 0; i < s.mask.numel(); ++i)
      if (s.mask[i] != LabelMap::kIgnore) seen[s.mask[i]] = true;
    for (int c = 0; c < num_classes; ++c)
      if (seen[c]) presence[c] += 1.0;
  }
  if (!samples.empty())
    for (double& p : presence) p /= static_cast<double>(samples.size());
  return presence;
}

}  // namespace i2ckd
