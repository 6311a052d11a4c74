#include "i2ckd/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace i2ckd {

void LossWeights::validate() const {
  if (temperature <= 0.0) throw std::invalid_argument("LossWeights: temperature must be > 0");
  if (margin < 0.0) throw std::invalid_argument("LossWeights: margin must be >= 0");
  if (lambda_i2ckd < 0.0 || lambda_sm < 0.0)
    throw std::invalid_argument("LossWeights: loss weights must be >= 0");
}

Json LossWeights::to_json() const {
  Json j;
  j["lambda_i2ckd"] = lambda_i2ckd;
  j["lambda_sm"] = lambda_sm;
  j["temperature"] = temperature;
  j["margin"] = margin;
  return j;
}

LossWeights LossWeights::from_json(const Json& j, const std::string& context) {
  require_known_keys(j, {"lambda_i2ckd", "lambda_sm", "temperature", "margin"}, context);
  LossWeights w;
  w.lambda_i2ckd = json_get_or(j, "lambda_i2ckd", w.lambda_i2ckd);
  w.lambda_sm = json_get_or(j, "lambda_sm", w.lambda_sm);
  w.temperature = json_get_or(j, "temperature", w.temperature);
  w.margin = json_get_or(j, "margin", w.margin);
  w.validate();
  return w;
}

LabelMap downsample_mask_nearest(const LabelMap& mask, std::size_t target_h, std::size_t target_w) {
  if (target_h == 0 || target_w == 0)
    throw std::invalid_argument("downsample_mask_nearest: zero target extent");
  if (target_h > mask.height() || target_w > mask.width())
    throw std::invalid_argument("downsample_mask_nearest: target larger than source");
  std::vector<std::uint8_t> out(target_h * target_w);
  for (std::size_t y = 0; y < target_h; ++y) {
    const std::size_t sy = y * mask.height() / target_h;
    for (std::size_t x = 0; x < target_w; ++x) {
      const std::size_t sx = x * mask.width() / target_w;
      out[y * target_w + x] = mask.at(sy, sx);
    }
  }
  return LabelMap(target_h, target_w, std::move(out));
}

PrototypeMatrix compute_prototypes(const Tensor& features, const LabelMap& mask, int num_classes) {
  const auto& s = features.shape();
  if (s.rank() != 3) throw std::invalid_argument("compute_prototypes: features must be [K,h,w]");
  const std::size_t K = s.extent(0), h = s.extent(1), w = s.extent(2);
  if (mask.height() != h || mask.width() != w)
    throw std::invalid_argument("compute_prototypes: mask extent mismatch, features " + s.str());
  mask.validate_labels(num_classes);

  const std::size_t C = static_cast<std::size_t>(num_classes);
  const std::size_t n = h * w;
  std::vector<std::size_t> counts(C, 0);
  for (std::size_t p = 0; p < n; ++p)
    if (mask[p] != LabelMap::kIgnore) ++counts[mask[p]];

  // Pixel-ascending accumulation per (class, channel); this matches the
  // brute-force reference oracle bit for bit.
  std::vector<double> sums(C * K, 0.0);
  const double* f = features.data();
  for (std::size_t k = 0; k < K; ++k) {
    const double* plane = f + k * n;
    for (std::size_t p = 0; p < n; ++p) {
      const std::uint8_t label = mask[p];
      if (label != LabelMap::kIgnore) sums[label * K + k] += plane[p];
    }
  }

  std::vector<bool> present(C, false);
  for (std::size_t c = 0; c < C; ++c) {
    if (counts[c] > 0) {
      present[c] = true;
      for (std::size_t k = 0; k < K; ++k) sums[c * K + k] /= static_cast<double>(counts[c]);
    }
  }
  return {Tensor::from_raw(Shape{C, K}, std::move(sums)), std::move(present)};
}

Tensor prototype_backward(const Tensor& grad_protos, const LabelMap& mask, int num_classes,
                          std::size_t h, std::size_t w) {
  const std::size_t C = static_cast<std::size_t>(num_classes);
  const std::size_t K = grad_protos.shape().extent(1);
  if (!(grad_protos.shape() == Shape{C, K}))
    throw std::invalid_argument("prototype_backward: gradient must be [C,K]");
  const std::size_t n = h * w;
  std::vector<std::size_t> counts(C, 0);
  for (std::size_t p = 0; p < n; ++p)
    if (mask[p] != LabelMap::kIgnore) ++counts[mask[p]];

  std::vector<double> out(K * n, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    double* plane = out.data() + k * n;
    for (std::size_t p = 0; p < n; ++p) {
      const std::uint8_t label = mask[p];
      if (label == LabelMap::kIgnore) continue;
      plane[p] = grad_protos[label * K + k] / static_cast<double>(counts[label]);
    }
  }
  return Tensor::from_raw(Shape{K, h, w}, std::move(out));
}

TripletResult triplet_prototype_loss(const PrototypeMatrix& student, const PrototypeMatrix& teacher,
                                     double margin) {
  const std::size_t C = student.num_classes(), K = student.channels();
  if (teacher.num_classes() != C || teacher.channels() != K)
    throw std::invalid_argument("triplet_prototype_loss: prototype matrix dimension mismatch");
  if (student.present != teacher.present)
    throw std::invalid_argument("triplet_prototype_loss: present flags differ; prototypes must come from the same mask");

  const double* ps = student.values.data();
  const double* pt = teacher.values.data();

  auto distance = [&](std::size_t c, std::size_t j) {
    double sq = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double diff = ps[c * K + k] - pt[j * K + k];
      sq += diff * diff;
    }
    return std::sqrt(sq);
  };

  TripletResult result;
  std::vector<double> grad(C * K, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    if (!student.present[c]) continue;
    for (std::size_t j = 0; j < C; ++j) {
      if (j == c || !student.present[j]) continue;
      ++result.pair_count;
      const double d_same = distance(c, c);
      const double d_other = distance(c, j);
      const double arg = margin + d_same - d_other;
      if (arg <= 0.0) continue;
      ++result.active_pairs;
      result.loss += arg;
      // d||ps_c - pt_x|| / d ps_c = (ps_c - pt_x) / ||.||; zero at the singularity
      if (d_same > 0.0)
        for (std::size_t k = 0; k < K; ++k)
          grad[c * K + k] += (ps[c * K + k] - pt[c * K + k]) / d_same;
      if (d_other > 0.0)
        for (std::size_t k = 0; k < K; ++k)
          grad[c * K + k] -= (ps[c * K + k] - pt[j * K + k]) / d_other;
    }
  }
  if (result.pair_count > 0) {
    const double inv = 1.0 / static_cast<double>(result.pair_count);
    result.loss *= inv;
    for (double& g : grad) g *= inv;
  }
  result.grad_student = Tensor::from_raw(Shape{C, K}, std::move(grad));
  return result;
}

ScalarWithGrad channel_kld_loss(const Tensor& scores_t, const Tensor& scores_s, double temperature) {
  if (temperature <= 0.0) throw std::invalid_argument("channel_kld_loss: temperature must be > 0");
  if (!(scores_t.shape() == scores_s.shape()))
    throw std::invalid_argument("channel_kld_loss: shape mismatch " + scores_t.shape().str() + " vs " +
                                scores_s.shape().str());
  const auto& s = scores_t.shape();
  if (s.rank() != 3) throw std::invalid_argument("channel_kld_loss: scores must be [C,H,W]");
  const std::size_t C = s.extent(0), N = s.extent(1) * s.extent(2);

  const double T = temperature;
  const double scale = T * T / static_cast<double>(C);
  std::vector<double> grad(C * N);
  std::vector<double> log_pt(N), log_ps(N);
  double loss = 0.0;

  auto log_softmax = [&](const double* y, std::vector<double>& out) {
    double m = y[0];
    for (std::size_t i = 1; i < N; ++i) m = std::max(m, y[i]);
    m /= T;
    double z = 0.0;
    for (std::size_t i = 0; i < N; ++i) z += std::exp(y[i] / T - m);
    const double lse = std::log(z) + m;
    for (std::size_t i = 0; i < N; ++i) out[i] = y[i] / T - lse;
  };

  for (std::size_t c = 0; c < C; ++c) {
    const double* yt = scores_t.data() + c * N;
    const double* ys = scores_s.data() + c * N;
    log_softmax(yt, log_pt);
    log_softmax(ys, log_ps);
    double channel = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double pt = std::exp(log_pt[i]);
      if (pt > 0.0) channel += pt * (log_pt[i] - log_ps[i]);
      grad[c * N + i] = scale / T * (std::exp(log_ps[i]) - pt);
    }
    loss += channel;
  }
  return {scale * loss, Tensor::from_raw(s, std::move(grad))};
}

ScalarWithGrad task_cross_entropy(const Tensor& scores, const LabelMap& mask) {
  const auto& s = scores.shape();
  if (s.rank() != 3) throw std::invalid_argument("task_cross_entropy: scores must be [C,H,W]");
  const std::size_t C = s.extent(0), H = s.extent(1), W = s.extent(2);
  if (mask.height() != H || mask.width() != W)
    throw std::invalid_argument("task_cross_entropy: mask extent mismatch");
  mask.validate_labels(static_cast<int>(C));

  const std::size_t N = H * W;
  std::size_t scored = 0;
  for (std::size_t p = 0; p < N; ++p)
    if (mask[p] != LabelMap::kIgnore) ++scored;

  std::vector<double> grad(C * N, 0.0);
  if (scored == 0) return {0.0, Tensor::from_raw(s, std::move(grad))};

  const double* y = scores.data();
  const double inv = 1.0 / static_cast<double>(scored);
  double loss = 0.0;
  std::vector<double> prob(C);
  for (std::size_t p = 0; p < N; ++p) {
    if (mask[p] == LabelMap::kIgnore) continue;
    double m = y[p];
    for (std::size_t c = 1; c < C; ++c) m = std::max(m, y[c * N + p]);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      prob[c] = std::exp(y[c * N + p] - m);
      z += prob[c];
    }
    const double lse = std::log(z) + m;
    loss += lse - y[mask[p] * N + p];
    for (std::size_t c = 0; c < C; ++c) grad[c * N + p] = prob[c] / z * inv;
    grad[mask[p] * N + p] -= inv;
  }
  return {loss * inv, Tensor::from_raw(s, std::move(grad))};
}

double total_loss(const LossParts& parts, const LossWeights& weights) {
  weights.validate();
  if (!std::isfinite(parts.l_task) || !std::isfinite(parts.l_sm) || !std::isfinite(parts.l_i2ckd))
    throw std::invalid_argument("total_loss: non-finite loss part");
  return weights.lambda_i2ckd * parts.l_i2ckd + weights.lambda_sm * parts.l_sm + parts.l_task;
}

// ---------------------------------------------------------------------------
// Batched graph nodes

namespace {

struct BatchDims {
  std::size_t B, C, H, W;
};

BatchDims batch_dims(const Shape& s, const char* what) {
  if (s.rank() != 4) throw std::invalid_argument(std::string(what) + ": expected rank-4 batch, got " + s.str());
  return {s.extent(0), s.extent(1), s.extent(2), s.extent(3)};
}

Tensor slice_image(const Tensor& batch, std::size_t b) {
  const auto& s = batch.shape();
  const std::size_t plane = s.extent(1) * s.extent(2) * s.extent(3);
  std::vector<double> data(batch.data() + b * plane, batch.data() + (b + 1) * plane);
  return Tensor::from_raw(Shape{s.extent(1), s.extent(2), s.extent(3)}, std::move(data));
}

void check_masks(const std::vector<const LabelMap*>& masks, const BatchDims& d, const char* what) {
  if (masks.size() != d.B) throw std::invalid_argument(std::string(what) + ": mask count != batch size");
  for (const LabelMap* m : masks)
    if (m->height() != d.H || m->width() != d.W)
      throw std::invalid_argument(std::string(what) + ": mask extent mismatch");
}

}  // namespace

ad::NodeRef task_ce_node(const ad::NodeRef& scores, const std::vector<const LabelMap*>& masks) {
  const BatchDims d = batch_dims(scores->value.shape(), "task_ce_node");
  check_masks(masks, d, "task_ce_node");

  double loss = 0.0;
  auto grads = std::make_shared<std::vector<Tensor>>();
  for (std::size_t b = 0; b < d.B; ++b) {
    ScalarWithGrad r = task_cross_entropy(slice_image(scores->value, b), *masks[b]);
    loss += r.loss;
    grads->push_back(std::move(r.grad));
  }
  loss /= static_cast<double>(d.B);

  return ad::make_op(Tensor(Shape{}, loss), {scores}, [grads, d](ad::Node& self) {
    const ad::NodeRef& scores = self.parents[0];
    if (!scores->requires_grad) return;
    auto& g = scores->ensure_grad();
    const double seed = self.grad[0] / static_cast<double>(d.B);
    const std::size_t plane = d.C * d.H * d.W;
    for (std::size_t b = 0; b < d.B; ++b) {
      const Tensor& gb = (*grads)[b];
      for (std::size_t i = 0; i < plane; ++i) g[b * plane + i] += seed * gb[i];
    }
  });
}

ad::NodeRef channel_kld_node(const ad::NodeRef& scores_s, const Tensor& scores_t, double temperature) {
  const BatchDims d = batch_dims(scores_s->value.shape(), "channel_kld_node");
  if (!(scores_t.shape() == scores_s->value.shape()))
    throw std::invalid_argument("channel_kld_node: teacher/student score shape mismatch");

  double loss = 0.0;
  auto grads = std::make_shared<std::vector<Tensor>>();
  for (std::size_t b = 0; b < d.B; ++b) {
    ScalarWithGrad r = channel_kld_loss(slice_image(scores_t, b), slice_image(scores_s->value, b), temperature);
    loss += r.loss;
    grads->push_back(std::move(r.grad));
  }
  loss /= static_cast<double>(d.B);

  return ad::make_op(Tensor(Shape{}, loss), {scores_s}, [grads, d](ad::Node& self) {
    const ad::NodeRef& scores = self.parents[0];
    if (!scores->requires_grad) return;
    auto& g = scores->ensure_grad();
    const double seed = self.grad[0] / static_cast<double>(d.B);
    const std::size_t plane = d.C * d.H * d.W;
    for (std::size_t b = 0; b < d.B; ++b) {
      const Tensor& gb = (*grads)[b];
      for (std::size_t i = 0; i < plane; ++i) g[b * plane + i] += seed * gb[i];
    }
  });
}

ad::NodeRef triplet_node(const ad::NodeRef& features_s, const std::vector<const LabelMap*>& masks,
                         const std::vector<PrototypeMatrix>& teacher_protos, double margin,
                         int num_classes) {
  const BatchDims d = batch_dims(features_s->value.shape(), "triplet_node");
  check_masks(masks, d, "triplet_node");
  if (teacher_protos.size() != d.B)
    throw std::invalid_argument("triplet_node: teacher prototype count != batch size");

  double loss = 0.0;
  auto grads = std::make_shared<std::vector<Tensor>>();  // [K,h,w] per image
  for (std::size_t b = 0; b < d.B; ++b) {
    PrototypeMatrix protos_s = compute_prototypes(slice_image(features_s->value, b), *masks[b], num_classes);
    TripletResult r = triplet_prototype_loss(protos_s, teacher_protos[b], margin);
    loss += r.loss;
    grads->push_back(prototype_backward(r.grad_student, *masks[b], num_classes, d.H, d.W));
  }
  loss /= static_cast<double>(d.B);

  return ad::make_op(Tensor(Shape{}, loss), {features_s}, [grads, d](ad::Node& self) {
    const ad::NodeRef& features = self.parents[0];
    if (!features->requires_grad) return;
    auto& g = features->ensure_grad();
    const double seed = self.grad[0] / static_cast<double>(d.B);
    const std::size_t plane = d.C * d.H * d.W;
    for (std::size_t b = 0; b < d.B; ++b) {
      const Tensor& gb = (*grads)[b];
      for (std::size_t i = 0; i < plane; ++i) g[b * plane + i] += seed * gb[i];
    }
  });
}

ad::NodeRef total_loss_node(const ad::NodeRef& l_task, const ad::NodeRef& l_sm,
                            const ad::NodeRef& l_i2ckd, const LossWeights& weights) {
  weights.validate();
  return ad::linear_combination({{l_i2ckd, weights.lambda_i2ckd}, {l_sm, weights.lambda_sm}, {l_task, 1.0}});
}

}  // namespace i2ckd
