#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "i2ckd/dataset.hpp"
#include "i2ckd/jsonutil.hpp"
#include "i2ckd/losses.hpp"
#include "i2ckd/metrics.hpp"
#include "i2ckd/network.hpp"

namespace i2ckd {

struct OptimConfig {
  double lr0 = 0.02;
  double momentum = 0.9;
  int total_iter = 2000;
  double poly_power = 0.9;
  int batch_size = 8;

  void validate() const;
  Json to_json() const;
  static OptimConfig from_json(const Json& j, const std::string& context);
};

// lr0 * (1 - iter/total_iter)^poly_power for iter in [0, total_iter].
double poly_lr(const OptimConfig& cfg, int iter);

// Classic momentum: v <- momentum*v + g; p <- p - lr*v. Velocities are
// keyed by parameter name and created lazily as zeros. Throws on a
// non-finite gradient before touching any parameter.
struct SgdState {
  std::vector<std::pair<std::string, std::vector<double>>> velocity;
  std::vector<double>& slot(const std::string& name, std::size_t size);
};
void sgd_step(std::vector<Parameter>& params, SgdState& state, double lr, double momentum);

struct EvalRecord {
  int iter = 0;
  double lr = 0.0;
  double l_task = 0.0;
  double l_sm = 0.0;
  double l_i2ckd = 0.0;
  double l_total = 0.0;
  double val_miou = 0.0;
  Json to_json() const;
};

struct TrainOptions {
  OptimConfig optim;
  std::uint64_t seed = 1;
  int eval_every = 250;
  bool augment_train = true;
};

// Present only when distilling; training with no setup (or with both
// lambdas zero) is plain task-loss training.
struct DistillSetup {
  const SegNetwork* teacher = nullptr;  // frozen
  LossWeights weights;
};

struct TrainOutcome {
  double final_val_miou = 0.0;
  std::vector<EvalRecord> records;
  std::filesystem::path checkpoint_dir;
  std::filesystem::path metrics_path;
};

// The shared training loop. Per iteration: assemble a deterministic
// augmented batch, forward the student, forward the frozen teacher when a
// distillation loss is active, combine the weighted losses, backpropagate
// and apply one SGD step under polynomial decay. Writes metrics.jsonl and
// a final checkpoint under out_dir.
TrainOutcome train_network(SegNetwork& net, const std::vector<Sample>& train_data,
                           const std::vector<Sample>& val_data, const TrainOptions& opts,
                           const DistillSetup* distill, const std::filesystem::path& out_dir);

struct EvalResult {
  std::vector<std::optional<double>> per_class_iou;
  double miou = 0.0;
  std::uint64_t pixels_scored = 0;
};
EvalResult evaluate_network(const SegNetwork& net, const std::vector<Sample>& data, int batch_size);

// Task-only training of a fresh network (used for teachers and baselines).
TrainOutcome train_teacher(const std::vector<Sample>& train_data, const std::vector<Sample>& val_data,
                           const NetConfig& net_cfg, const TrainOptions& opts,
                           const std::filesystem::path& out_dir);

struct DistillRunConfig {
  NetConfig student;
  LossWeights weights;
  std::filesystem::path teacher_checkpoint;
  bool allow_projection = true;
};

// Loads and freezes the teacher, builds the student (adding the channel
// projection when the prototype loss is active and the feature widths
// differ), and runs the loop. The teacher checkpoint is never written.
TrainOutcome distill_student(const std::vector<Sample>& train_data, const std::vector<Sample>& val_data,
                             const DistillRunConfig& cfg, const TrainOptions& opts,
                             const std::filesystem::path& out_dir);

}  // namespace i2ckd
