#pragma once

#include <vector>

#include "i2ckd/tensor.hpp"

namespace i2ckd::reference {

// Direct textbook evaluations of every distillation quantity, kept
// deliberately independent of the production kernels. These back the
// loss-eval --reference mode and the oracle comparisons in the test suite.
// Do not "optimize" them toward the production code paths.

// Full gather loop per output element, explicit zero padding.
Tensor conv2d_3x3_naive(const Tensor& in, const Tensor& w, const Tensor& bias);
Tensor conv2d_1x1_naive(const Tensor& in, const Tensor& w, const Tensor& bias);

// Per-class per-channel per-pixel accumulation of feature means.
// values is [C, K]; present[c] is false when class c has no scored pixel.
struct NaivePrototypes {
  Tensor values;
  std::vector<bool> present;
};
NaivePrototypes compute_prototypes_naive(const Tensor& features, const LabelMap& mask, int num_classes);

// Hinged prototype pair sum normalized by the number of present ordered pairs.
double triplet_loss_naive(const Tensor& proto_s, const Tensor& proto_t,
                          const std::vector<bool>& present, double margin);

// Temperature softmax across spatial positions per channel, then the
// teacher-weighted log ratio summed directly.
double channel_kld_naive(const Tensor& scores_t, const Tensor& scores_s, double temperature);

// Mean over scored pixels of -log softmax at the true class.
double task_cross_entropy_naive(const Tensor& scores, const LabelMap& mask);

}  // namespace i2ckd::reference
