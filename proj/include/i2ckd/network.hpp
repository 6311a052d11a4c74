#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "i2ckd/autodiff.hpp"
#include "i2ckd/jsonutil.hpp"
#include "i2ckd/rng.hpp"
#include "i2ckd/tensor.hpp"

namespace i2ckd {

// Stride-1 segmentation net: a chain of 3x3 conv + ReLU blocks followed by
// a 1x1 classifier head. Feature maps keep the input resolution, so masks
// never need resampling on the default path.
struct NetConfig {
  int in_channels = 3;
  std::vector<int> widths;
  int num_classes = 0;
  int feature_tap = -1;  // index of the block whose output is the feature map

  void validate() const;
  Json to_json() const;
  static NetConfig from_json(const Json& j, const std::string& context);
};

struct Parameter {
  std::string name;
  ad::NodeRef node;  // leaf; requires_grad reflects trainability

  const Tensor& value() const { return node->value; }
  Tensor grad() const { return node->grad_tensor(); }
};

class SegNetwork {
 public:
  SegNetwork(NetConfig config, bool trainable);

  // Kaiming fan-in init from streams derived per parameter name; biases 0.
  void init_weights(const Rng& rng);

  // When the student's feature channels differ from the teacher's, a
  // learned 1x1 projection maps them into the teacher's channel space; it
  // trains jointly with the rest of the network.
  void add_projection(int out_channels, const Rng& rng);
  bool has_projection() const { return projection_channels_ > 0; }
  int projection_channels() const { return projection_channels_; }

  struct ForwardNodes {
    ad::NodeRef features;  // [B,K,h,w]; post-projection when one is present
    ad::NodeRef scores;    // [B,C,H,W]
  };
  // Graph-building forward for training.
  ForwardNodes forward(const Tensor& batch) const;

  struct ForwardValues {
    Tensor features;
    Tensor scores;
  };
  // Plain value forward for frozen teachers and evaluation; runs the same
  // kernels, so values are bit-identical to the graph path.
  ForwardValues forward_values(const Tensor& batch) const;

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  Parameter& parameter(const std::string& name);

  void zero_grads();
  void set_trainable(bool trainable);
  bool trainable() const { return trainable_; }

  const NetConfig& config() const { return config_; }
  int feature_channels() const;  // channels of the (possibly projected) feature map

 private:
  void check_batch(const Shape& s) const;

  NetConfig config_;
  bool trainable_;
  int projection_channels_ = 0;
  std::vector<Parameter> params_;
};

// Checkpoint directory: manifest.json plus one STF1 f64 file per parameter
// (and per velocity slot when optimizer state is saved).
struct TrainingState {
  int iter = 0;
  std::vector<std::pair<std::string, Tensor>> velocity;
};

void save_checkpoint(const std::filesystem::path& dir, const SegNetwork& net,
                     const TrainingState* state = nullptr);

struct LoadedCheckpoint {
  NetConfig config;
  int projection_channels = 0;
  std::vector<std::pair<std::string, Tensor>> parameters;
  std::optional<TrainingState> state;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

// Builds a network from a checkpoint; trainable=false freezes it.
SegNetwork network_from_checkpoint(const LoadedCheckpoint& ckpt, bool trainable);

}  // namespace i2ckd
