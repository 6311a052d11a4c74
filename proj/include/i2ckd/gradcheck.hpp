#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "i2ckd/jsonutil.hpp"

namespace i2ckd {

// Central finite-difference verification of analytic gradients.
// Relative error per coordinate: |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t worst_coord = 0;
  std::size_t coords = 0;
  bool pass = false;
  Json to_json() const;
};

GradCheckResult fd_check(const std::string& name,
                         const std::function<double(const std::vector<double>&)>& f,
                         const std::vector<double>& x0, const std::vector<double>& analytic,
                         double perturb, double tol);

// The standard battery: both convolution shapes, relu, the task
// cross-entropy, the channel KLD, the prototype triplet loss, and a
// composite weighted loss differentiated through a small student network
// (projection included).
std::vector<GradCheckResult> run_standard_grad_checks(std::uint64_t seed, double perturb, double tol);

}  // namespace i2ckd
