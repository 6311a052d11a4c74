#include "i2ckd/trainer.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace i2ckd {

void OptimConfig::validate() const {
  if (lr0 <= 0.0) throw std::invalid_argument("OptimConfig: lr0 must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("OptimConfig: momentum must be in [0,1)");
  if (total_iter < 1) throw std::invalid_argument("OptimConfig: total_iter must be >= 1");
  if (poly_power < 0.0) throw std::invalid_argument("OptimConfig: poly_power must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("OptimConfig: batch_size must be >= 1");
}

Json OptimConfig::to_json() const {
  Json j;
  j["lr0"] = lr0;
  j["momentum"] = momentum;
  j["total_iter"] = total_iter;
  j["poly_power"] = poly_power;
  j["batch_size"] = batch_size;
  return j;
}

OptimConfig OptimConfig::from_json(const Json& j, const std::string& context) {
  require_known_keys(j, {"lr0", "momentum", "total_iter", "poly_power", "batch_size"}, context);
  OptimConfig c;
  c.lr0 = json_get_or(j, "lr0", c.lr0);
  c.momentum = json_get_or(j, "momentum", c.momentum);
  c.total_iter = json_get_or(j, "total_iter", c.total_iter);
  c.poly_power = json_get_or(j, "poly_power", c.poly_power);
  c.batch_size = json_get_or(j, "batch_size", c.batch_size);
  c.validate();
  return c;
}

double poly_lr(const OptimConfig& cfg, int iter) {
  cfg.validate();
  if (iter < 0 || iter > cfg.total_iter)
    throw std::invalid_argument("poly_lr: iter " + std::to_string(iter) + " outside [0, total_iter]");
  return cfg.lr0 * std::pow(1.0 - static_cast<double>(iter) / cfg.total_iter, cfg.poly_power);
}

std::vector<double>& SgdState::slot(const std::string& name, std::size_t size) {
  for (auto& [n, v] : velocity)
    if (n == name) return v;
  velocity.emplace_back(name, std::vector<double>(size, 0.0));
  return velocity.back().second;
}

void sgd_step(std::vector<Parameter>& params, SgdState& state, double lr, double momentum) {
  // Validate first so a bad gradient aborts the step before any update.
  for (Parameter& p : params) {
    if (!p.node->requires_grad) continue;
    const auto& g = p.node->ensure_grad();
    for (double v : g)
      if (!std::isfinite(v))
        throw std::runtime_error("sgd_step: non-finite gradient in parameter '" + p.name + "'");
  }
  for (Parameter& p : params) {
    if (!p.node->requires_grad) continue;
    const auto& g = p.node->grad;
    std::vector<double>& v = state.slot(p.name, g.size());
    std::vector<double> next(p.node->value.numel());
    const double* cur = p.node->value.data();
    for (std::size_t i = 0; i < next.size(); ++i) {
      v[i] = momentum * v[i] + g[i];
      next[i] = cur[i] - lr * v[i];
    }
    p.node->value = Tensor::from_raw(p.node->value.shape(), std::move(next));
  }
}

Json EvalRecord::to_json() const {
  Json j;
  j["iter"] = iter;
  j["lr"] = lr;
  j["l_task"] = l_task;
  j["l_sm"] = l_sm;
  j["l_i2ckd"] = l_i2ckd;
  j["l_total"] = l_total;
  j["val_miou"] = val_miou;
  return j;
}

namespace {

Tensor assemble_batch(const std::vector<Sample>& samples) {
  const std::size_t B = samples.size();
  const auto& s0 = samples[0].image.shape();
  const std::size_t plane = s0.numel();
  std::vector<double> data(B * plane);
  for (std::size_t b = 0; b < B; ++b) {
    if (!(samples[b].image.shape() == s0))
      throw std::invalid_argument("assemble_batch: inconsistent image shapes");
    const double* src = samples[b].image.data();
    std::copy(src, src + plane, data.begin() + b * plane);
  }
  return Tensor::from_raw(Shape{B, s0.extent(0), s0.extent(1), s0.extent(2)}, std::move(data));
}

Tensor slice_batch(const Tensor& batch, std::size_t b) {
  const auto& s = batch.shape();
  const std::size_t plane = s.extent(1) * s.extent(2) * s.extent(3);
  std::vector<double> data(batch.data() + b * plane, batch.data() + (b + 1) * plane);
  return Tensor::from_raw(Shape{s.extent(1), s.extent(2), s.extent(3)}, std::move(data));
}

}  // namespace

EvalResult evaluate_network(const SegNetwork& net, const std::vector<Sample>& data, int batch_size) {
  if (data.empty()) throw std::invalid_argument("evaluate_network: empty dataset");
  ConfusionMatrix cm(net.config().num_classes);
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    std::vector<Sample> chunk(data.begin() + start, data.begin() + end);
    Tensor batch = assemble_batch(chunk);
    Tensor scores = net.forward_values(batch).scores;
    for (std::size_t b = 0; b < chunk.size(); ++b)
      cm.update(argmax_scores(slice_batch(scores, b)), chunk[b].mask);
  }
  EvalResult r;
  r.per_class_iou = cm.iou_per_class();
  r.miou = cm.miou();
  r.pixels_scored = cm.pixels_scored();
  return r;
}

TrainOutcome train_network(SegNetwork& net, const std::vector<Sample>& train_data,
                           const std::vector<Sample>& val_data, const TrainOptions& opts,
                           const DistillSetup* distill, const std::filesystem::path& out_dir) {
  opts.optim.validate();
  if (train_data.empty()) throw std::invalid_argument("train_network: empty training set");
  if (!net.trainable()) throw std::invalid_argument("train_network: network is frozen");

  const bool use_sm = distill && distill->weights.lambda_sm > 0.0;
  const bool use_proto = distill && distill->weights.lambda_i2ckd > 0.0;
  LossWeights weights = distill ? distill->weights : LossWeights{0.0, 0.0, 2.0, 0.0};
  weights.validate();
  if (distill) {
    if (!distill->teacher) throw std::invalid_argument("train_network: distillation without a teacher");
    if (distill->teacher->config().num_classes != net.config().num_classes)
      throw std::invalid_argument("train_network: teacher/student class count mismatch");
    if (use_proto && distill->teacher->feature_channels() != net.feature_channels())
      throw std::invalid_argument("train_network: feature channel mismatch (projection required)");
  }

  std::filesystem::create_directories(out_dir);
  const auto metrics_path = out_dir / "metrics.jsonl";
  std::ofstream log(metrics_path);
  if (!log) throw std::runtime_error("train_network: cannot write " + metrics_path.string());

  const Rng root(opts.seed);
  const int B = opts.optim.batch_size;
  const int C = net.config().num_classes;
  SgdState sgd;
  TrainOutcome outcome;

  for (int iter = 0; iter < opts.optim.total_iter; ++iter) {
    // Deterministic batch: indices and augmentations derive from
    // (seed, iter, slot) so reruns and ablation rows see identical data.
    Rng batch_rng = root.derive("batch").derive(static_cast<std::uint64_t>(iter));
    std::vector<Sample> batch_samples;
    batch_samples.reserve(B);
    for (int s = 0; s < B; ++s) {
      const Sample& base = train_data[batch_rng.next_below(train_data.size())];
      if (opts.augment_train) {
        Rng aug_rng = root.derive("aug").derive(static_cast<std::uint64_t>(iter)).derive(static_cast<std::uint64_t>(s));
        batch_samples.push_back(augment(base, aug_rng));
      } else {
        batch_samples.push_back(base);
      }
    }
    Tensor batch = assemble_batch(batch_samples);
    std::vector<const LabelMap*> masks;
    for (const Sample& s : batch_samples) masks.push_back(&s.mask);

    SegNetwork::ForwardNodes student = net.forward(batch);
    ad::NodeRef l_task = task_ce_node(student.scores, masks);
    ad::NodeRef l_sm = ad::constant(Tensor(Shape{}, 0.0));
    ad::NodeRef l_proto = ad::constant(Tensor(Shape{}, 0.0));

    if (use_sm || use_proto) {
      SegNetwork::ForwardValues teacher = distill->teacher->forward_values(batch);
      if (use_sm) l_sm = channel_kld_node(student.scores, teacher.scores, weights.temperature);
      if (use_proto) {
        std::vector<PrototypeMatrix> protos_t;
        for (std::size_t b = 0; b < masks.size(); ++b)
          protos_t.push_back(compute_prototypes(slice_batch(teacher.features, b), *masks[b], C));
        l_proto = triplet_node(student.features, masks, protos_t, weights.margin, C);
      }
    }

    ad::NodeRef total = total_loss_node(l_task, l_sm, l_proto, weights);
    if (!std::isfinite(total->value[0]))
      throw std::runtime_error("train_network: training diverged (non-finite loss at iter " +
                               std::to_string(iter) + ")");

    ad::backward(total);
    const double lr = poly_lr(opts.optim, iter);
    sgd_step(net.parameters(), sgd, lr, opts.optim.momentum);
    net.zero_grads();

    const int done = iter + 1;
    if (done % opts.eval_every == 0 || done == opts.optim.total_iter) {
      EvalRecord rec;
      rec.iter = done;
      rec.lr = lr;
      rec.l_task = l_task->value[0];
      rec.l_sm = l_sm->value[0];
      rec.l_i2ckd = l_proto->value[0];
      rec.l_total = total->value[0];
      rec.val_miou = val_data.empty() ? 0.0 : evaluate_network(net, val_data, B).miou;
      log << rec.to_json().dump() << '\n';
      log.flush();
      outcome.records.push_back(rec);
    }
  }

  outcome.final_val_miou = outcome.records.empty() ? 0.0 : outcome.records.back().val_miou;
  outcome.metrics_path = metrics_path;
  outcome.checkpoint_dir = out_dir / "checkpoint";
  TrainingState state;
  state.iter = opts.optim.total_iter;
  for (const auto& [name, v] : sgd.velocity)
    state.velocity.emplace_back(name, Tensor(net.parameter(name).value().shape(), v));
  save_checkpoint(outcome.checkpoint_dir, net, &state);
  return outcome;
}

TrainOutcome train_teacher(const std::vector<Sample>& train_data, const std::vector<Sample>& val_data,
                           const NetConfig& net_cfg, const TrainOptions& opts,
                           const std::filesystem::path& out_dir) {
  SegNetwork net(net_cfg, true);
  net.init_weights(Rng(opts.seed).derive("init"));
  return train_network(net, train_data, val_data, opts, nullptr, out_dir);
}

TrainOutcome distill_student(const std::vector<Sample>& train_data, const std::vector<Sample>& val_data,
                             const DistillRunConfig& cfg, const TrainOptions& opts,
                             const std::filesystem::path& out_dir) {
  cfg.weights.validate();
  LoadedCheckpoint teacher_ckpt = load_checkpoint(cfg.teacher_checkpoint);
  SegNetwork teacher = network_from_checkpoint(teacher_ckpt, /*trainable=*/false);

  SegNetwork student(cfg.student, true);
  student.init_weights(Rng(opts.seed).derive("init"));
  if (cfg.weights.lambda_i2ckd > 0.0) {
    const int k_s = student.feature_channels();
    const int k_t = teacher.feature_channels();
    if (k_s != k_t) {
      if (!cfg.allow_projection)
        throw std::invalid_argument("distill_student: feature channels " + std::to_string(k_s) + " vs " +
                                    std::to_string(k_t) + " differ and projection is disabled");
      student.add_projection(k_t, Rng(opts.seed).derive("init"));
    }
  }

  DistillSetup setup{&teacher, cfg.weights};
  return train_network(student, train_data, val_data, opts, &setup, out_dir);
}

}  // namespace i2ckd
