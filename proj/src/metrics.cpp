#include "i2ckd/metrics.hpp"

#include <stdexcept>

namespace i2ckd {

ConfusionMatrix::ConfusionMatrix(int num_classes) : c_(num_classes) {
  if (num_classes < 1) throw std::invalid_argument("ConfusionMatrix: need at least one class");
  counts_.assign(static_cast<std::size_t>(c_) * c_, 0);
}

void ConfusionMatrix::update(const LabelMap& pred, const LabelMap& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width())
    throw std::invalid_argument("ConfusionMatrix::update: extent mismatch");
  for (std::size_t i = 0; i < gt.numel(); ++i) {
    const std::uint8_t g = gt[i];
    if (g == LabelMap::kIgnore) continue;
    const std::uint8_t p = pred[i];
    if (g >= c_ || p >= c_)
      throw std::invalid_argument("ConfusionMatrix::update: label out of range for C=" + std::to_string(c_));
    ++counts_[static_cast<std::size_t>(g) * c_ + p];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.c_ != c_) throw std::invalid_argument("ConfusionMatrix::merge: class count mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::pixels_scored() const {
  std::uint64_t total = 0;
  for (std::uint64_t v : counts_) total += v;
  return total;
}

std::vector<std::optional<double>> ConfusionMatrix::iou_per_class() const {
  std::vector<std::optional<double>> out(c_);
  for (int c = 0; c < c_; ++c) {
    const std::uint64_t tp = count(c, c);
    std::uint64_t fp = 0, fn = 0;
    for (int o = 0; o < c_; ++o) {
      if (o == c) continue;
      fp += count(o, c);
      fn += count(c, o);
    }
    const std::uint64_t denom = tp + fp + fn;
    if (denom > 0) out[c] = static_cast<double>(tp) / static_cast<double>(denom);
  }
  return out;
}

double ConfusionMatrix::miou() const {
  double sum = 0.0;
  int defined = 0;
  for (const auto& iou : iou_per_class()) {
    if (iou) {
      sum += *iou;
      ++defined;
    }
  }
  if (defined == 0) throw std::runtime_error("ConfusionMatrix::miou: no class has a defined IoU");
  return sum / defined;
}

LabelMap argmax_scores(const Tensor& scores) {
  const auto& s = scores.shape();
  if (s.rank() != 3) throw std::invalid_argument("argmax_scores: scores must be [C,H,W]");
  const std::size_t C = s.extent(0), N = s.extent(1) * s.extent(2);
  std::vector<std::uint8_t> out(N);
  const double* y = scores.data();
  for (std::size_t p = 0; p < N; ++p) {
    std::size_t best = 0;
    double best_v = y[p];
    for (std::size_t c = 1; c < C; ++c) {
      const double v = y[c * N + p];
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    out[p] = static_cast<std::uint8_t>(best);
  }
  return LabelMap(s.extent(1), s.extent(2), std::move(out));
}

}  // namespace i2ckd
