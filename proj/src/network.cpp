#include "i2ckd/network.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "i2ckd/stf.hpp"

namespace i2ckd {

void NetConfig::validate() const {
  if (in_channels < 1) throw std::invalid_argument("NetConfig: in_channels must be >= 1");
  if (widths.empty()) throw std::invalid_argument("NetConfig: widths must be non-empty");
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("NetConfig: block width must be >= 1");
  if (num_classes < 2) throw std::invalid_argument("NetConfig: num_classes must be >= 2");
  if (feature_tap < 0 || feature_tap >= static_cast<int>(widths.size()))
    throw std::invalid_argument("NetConfig: feature_tap out of range");
}

Json NetConfig::to_json() const {
  Json j;
  j["in_channels"] = in_channels;
  j["widths"] = widths;
  j["num_classes"] = num_classes;
  j["feature_tap"] = feature_tap;
  return j;
}

NetConfig NetConfig::from_json(const Json& j, const std::string& context) {
  require_known_keys(j, {"in_channels", "widths", "num_classes", "feature_tap"}, context);
  NetConfig cfg;
  cfg.in_channels = json_get_or(j, "in_channels", 3);
  if (!j.contains("widths")) throw std::invalid_argument(context + ": missing 'widths'");
  cfg.widths = j.at("widths").get<std::vector<int>>();
  if (!j.contains("num_classes")) throw std::invalid_argument(context + ": missing 'num_classes'");
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.feature_tap = json_get_or(j, "feature_tap", static_cast<int>(cfg.widths.size()) - 1);
  cfg.validate();
  return cfg;
}

namespace {

std::string block_weight_name(int i) { return "block" + std::to_string(i) + ".weight"; }
std::string block_bias_name(int i) { return "block" + std::to_string(i) + ".bias"; }

Tensor kaiming_weights(const Shape& shape, std::size_t fan_in, Rng rng) {
  const double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<double> data(shape.numel());
  for (double& v : data) v = rng.normal(0.0, sigma);
  return Tensor(shape, std::move(data));
}

}  // namespace

SegNetwork::SegNetwork(NetConfig config, bool trainable) : config_(std::move(config)), trainable_(trainable) {
  config_.validate();
  int cin = config_.in_channels;
  for (std::size_t i = 0; i < config_.widths.size(); ++i) {
    const int cout = config_.widths[i];
    params_.push_back({block_weight_name(static_cast<int>(i)),
                       ad::leaf(Tensor(Shape{static_cast<std::size_t>(cout), static_cast<std::size_t>(cin), 3, 3}, 0.0), trainable)});
    params_.push_back({block_bias_name(static_cast<int>(i)),
                       ad::leaf(Tensor(Shape{static_cast<std::size_t>(cout)}, 0.0), trainable)});
    cin = cout;
  }
  params_.push_back({"head.weight",
                     ad::leaf(Tensor(Shape{static_cast<std::size_t>(config_.num_classes), static_cast<std::size_t>(cin)}, 0.0), trainable)});
  params_.push_back({"head.bias",
                     ad::leaf(Tensor(Shape{static_cast<std::size_t>(config_.num_classes)}, 0.0), trainable)});
}

void SegNetwork::init_weights(const Rng& rng) {
  for (Parameter& p : params_) {
    const Shape& s = p.node->value.shape();
    if (p.name.ends_with(".bias")) {
      p.node->value = Tensor(s, 0.0);
    } else {
      std::size_t fan_in = 1;
      for (std::size_t i = 1; i < s.rank(); ++i) fan_in *= s.extent(i);
      p.node->value = kaiming_weights(s, fan_in, rng.derive(p.name));
    }
  }
}

void SegNetwork::add_projection(int out_channels, const Rng& rng) {
  if (has_projection()) throw std::invalid_argument("SegNetwork: projection already present");
  if (out_channels < 1) throw std::invalid_argument("SegNetwork: projection channels must be >= 1");
  const int k_in = config_.widths[config_.feature_tap];
  projection_channels_ = out_channels;
  Shape ws{static_cast<std::size_t>(out_channels), static_cast<std::size_t>(k_in)};
  params_.push_back({"proj.weight", ad::leaf(kaiming_weights(ws, k_in, rng.derive("proj.weight")), trainable_)});
  params_.push_back({"proj.bias", ad::leaf(Tensor(Shape{static_cast<std::size_t>(out_channels)}, 0.0), trainable_)});
}

Parameter& SegNetwork::parameter(const std::string& name) {
  for (Parameter& p : params_)
    if (p.name == name) return p;
  throw std::invalid_argument("SegNetwork: no parameter named '" + name + "'");
}

void SegNetwork::zero_grads() {
  for (Parameter& p : params_)
    if (p.node->requires_grad) p.node->zero_grad();
}

void SegNetwork::set_trainable(bool trainable) {
  trainable_ = trainable;
  for (Parameter& p : params_) {
    p.node->requires_grad = trainable;
    if (trainable) p.node->ensure_grad();
  }
}

int SegNetwork::feature_channels() const {
  return has_projection() ? projection_channels_ : config_.widths[config_.feature_tap];
}

void SegNetwork::check_batch(const Shape& s) const {
  if (s.rank() != 4 || s.extent(1) != static_cast<std::size_t>(config_.in_channels))
    throw std::invalid_argument("SegNetwork: batch must be [B," + std::to_string(config_.in_channels) +
                                ",H,W], got " + s.str());
}

SegNetwork::ForwardNodes SegNetwork::forward(const Tensor& batch) const {
  check_batch(batch.shape());
  ad::NodeRef x = ad::constant(batch);
  ad::NodeRef tap;
  int pi = 0;
  for (std::size_t i = 0; i < config_.widths.size(); ++i) {
    x = ad::relu(ad::conv2d_3x3(x, params_[pi].node, params_[pi + 1].node));
    pi += 2;
    if (static_cast<int>(i) == config_.feature_tap) tap = x;
  }
  ad::NodeRef scores = ad::conv2d_1x1(x, params_[pi].node, params_[pi + 1].node);
  pi += 2;
  ad::NodeRef features = tap;
  if (has_projection())
    features = ad::conv2d_1x1(tap, params_[pi].node, params_[pi + 1].node);
  return {features, scores};
}

SegNetwork::ForwardValues SegNetwork::forward_values(const Tensor& batch) const {
  ForwardNodes nodes = forward(batch);
  return {nodes.features->value, nodes.scores->value};
}

void save_checkpoint(const std::filesystem::path& dir, const SegNetwork& net, const TrainingState* state) {
  std::filesystem::create_directories(dir);
  Json manifest;
  manifest["config"] = net.config().to_json();
  manifest["projection_channels"] = net.projection_channels();
  std::vector<std::string> names;
  for (const Parameter& p : net.parameters()) {
    names.push_back(p.name);
    write_stf_f64(dir / (p.name + ".stf"), p.value());
  }
  manifest["parameters"] = names;
  Json ts;
  ts["iter"] = state ? state->iter : 0;
  ts["has_velocity"] = state && !state->velocity.empty();
  manifest["training_state"] = ts;
  if (state) {
    std::filesystem::create_directories(dir / "velocity");
    for (const auto& [name, v] : state->velocity) write_stf_f64(dir / "velocity" / (name + ".stf"), v);
  }
  std::ofstream os(dir / "manifest.json");
  if (!os) throw std::runtime_error("checkpoint: cannot write manifest in " + dir.string());
  os << manifest.dump(2) << '\n';
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream is(manifest_path);
  if (!is) throw std::runtime_error("checkpoint: missing manifest " + manifest_path.string());
  Json manifest = Json::parse(is, nullptr, false);
  if (manifest.is_discarded())
    throw std::runtime_error("checkpoint: manifest is not valid JSON: " + manifest_path.string());
  require_known_keys(manifest, {"config", "projection_channels", "parameters", "training_state"},
                     manifest_path.string());

  LoadedCheckpoint out;
  out.config = NetConfig::from_json(manifest.at("config"), manifest_path.string() + " config");
  out.projection_channels = json_get_or(manifest, "projection_channels", 0);
  for (const auto& name : manifest.at("parameters").get<std::vector<std::string>>())
    out.parameters.emplace_back(name, read_stf_tensor(dir / (name + ".stf")));

  const Json& ts = manifest.at("training_state");
  require_known_keys(ts, {"iter", "has_velocity"}, manifest_path.string() + " training_state");
  TrainingState state;
  state.iter = json_get_or(ts, "iter", 0);
  if (json_get_or(ts, "has_velocity", false)) {
    for (const auto& [name, _] : out.parameters)
      state.velocity.emplace_back(name, read_stf_tensor(dir / "velocity" / (name + ".stf")));
    out.state = std::move(state);
  } else if (state.iter != 0) {
    out.state = std::move(state);
  }
  return out;
}

SegNetwork network_from_checkpoint(const LoadedCheckpoint& ckpt, bool trainable) {
  SegNetwork net(ckpt.config, trainable);
  if (ckpt.projection_channels > 0) net.add_projection(ckpt.projection_channels, Rng(0));
  for (const auto& [name, value] : ckpt.parameters) {
    Parameter& p = net.parameter(name);
    if (!(p.value().shape() == value.shape()))
      throw std::runtime_error("checkpoint: shape mismatch for parameter '" + name + "'");
    p.node->value = value;
  }
  return net;
}

}  // namespace i2ckd
