#pragma once

#include <vector>

#include "i2ckd/autodiff.hpp"
#include "i2ckd/jsonutil.hpp"
#include "i2ckd/tensor.hpp"

namespace i2ckd {

// Per-class per-channel feature centroids. Rows of absent classes (no
// scored pixel in the mask) are zero and excluded from all pair sums.
struct PrototypeMatrix {
  Tensor values;              // [C, K]
  std::vector<bool> present;  // size C

  std::size_t num_classes() const { return values.shape().extent(0); }
  std::size_t channels() const { return values.shape().extent(1); }
};

struct LossWeights {
  double lambda_i2ckd = 0.6;
  double lambda_sm = 3.0;
  double temperature = 2.0;
  double margin = 0.1;

  void validate() const;
  Json to_json() const;
  static LossWeights from_json(const Json& j, const std::string& context);
};

// Nearest-neighbor label downsampling (source coordinate = floor of the
// scaled target coordinate). Never invents labels.
LabelMap downsample_mask_nearest(const LabelMap& mask, std::size_t target_h, std::size_t target_w);

// Mean of features[k] over pixels with mask == c, per class; ignore pixels
// contribute to no class.
PrototypeMatrix compute_prototypes(const Tensor& features, const LabelMap& mask, int num_classes);

// Chain rule companion of compute_prototypes: scatters a [C,K] prototype
// gradient back to [K,h,w] feature space (divided by per-class counts).
Tensor prototype_backward(const Tensor& grad_protos, const LabelMap& mask, int num_classes,
                          std::size_t h, std::size_t w);

struct TripletResult {
  double loss = 0.0;
  Tensor grad_student;       // [C,K] d loss / d student prototypes
  std::size_t pair_count = 0;    // |V|: ordered present pairs
  std::size_t active_pairs = 0;  // pairs with a strictly positive hinge
};

// Hinged prototype alignment over all ordered pairs of distinct present
// classes, normalized by the pair count; empty V gives loss 0. Subgradient
// 0 at hinge boundaries and zero-distance singularities.
TripletResult triplet_prototype_loss(const PrototypeMatrix& student, const PrototypeMatrix& teacher,
                                     double margin);

struct ScalarWithGrad {
  double loss = 0.0;
  Tensor grad;
};

// Temperature-softmax KLD between per-channel spatial distributions of the
// teacher and student score maps, scaled by T^2 and normalized by the
// number of channels. Gradient is w.r.t. the student scores.
ScalarWithGrad channel_kld_loss(const Tensor& scores_t, const Tensor& scores_s, double temperature);

// Mean over non-ignore pixels of -log softmax at the true class.
ScalarWithGrad task_cross_entropy(const Tensor& scores, const LabelMap& mask);

struct LossParts {
  double l_task = 0.0;
  double l_sm = 0.0;
  double l_i2ckd = 0.0;
};

double total_loss(const LossParts& parts, const LossWeights& weights);

// --- Batched graph nodes (losses averaged over the batch in index order) ---

ad::NodeRef task_ce_node(const ad::NodeRef& scores, const std::vector<const LabelMap*>& masks);

ad::NodeRef channel_kld_node(const ad::NodeRef& scores_s, const Tensor& scores_t, double temperature);

// Computes student prototypes per image from the feature node and applies
// the triplet loss against fixed teacher prototypes.
ad::NodeRef triplet_node(const ad::NodeRef& features_s, const std::vector<const LabelMap*>& masks,
                         const std::vector<PrototypeMatrix>& teacher_protos, double margin,
                         int num_classes);

ad::NodeRef total_loss_node(const ad::NodeRef& l_task, const ad::NodeRef& l_sm,
                            const ad::NodeRef& l_i2ckd, const LossWeights& weights);

}  // namespace i2ckd
