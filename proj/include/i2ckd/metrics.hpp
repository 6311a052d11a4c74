#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "i2ckd/tensor.hpp"

namespace i2ckd {

// Row = ground truth, column = prediction. Ignore pixels are never scored.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  // Increments counts[gt][pred] per scored pixel. Predictions must hold
  // real labels (no ignore values).
  void update(const LabelMap& pred, const LabelMap& gt);
  // Exact integer addition, so shards merge in any order.
  void merge(const ConfusionMatrix& other);

  int num_classes() const { return c_; }
  std::uint64_t count(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt) * c_ + pred]; }
  std::uint64_t pixels_scored() const;

  // IoU_c = tp / (tp + fp + fn); classes with an empty union are undefined.
  std::vector<std::optional<double>> iou_per_class() const;
  // Mean of the defined per-class IoUs; throws when none is defined.
  double miou() const;

 private:
  int c_;
  std::vector<std::uint64_t> counts_;
};

// Argmax over the class axis of a [C,H,W] score map.
LabelMap argmax_scores(const Tensor& scores);

}  // namespace i2ckd
