#include "i2ckd/reference.hpp"

#include <cmath>
#include <stdexcept>

namespace i2ckd::reference {

Tensor conv2d_3x3_naive(const Tensor& in, const Tensor& w, const Tensor& bias) {
  const auto& s = in.shape();
  if (s.rank() != 4) throw std::invalid_argument("conv2d_3x3_naive: input must be [B,Cin,H,W]");
  const std::size_t B = s.extent(0), Cin = s.extent(1), H = s.extent(2), W = s.extent(3);
  const std::size_t Cout = w.shape().extent(0);
  if (!(w.shape() == Shape{Cout, Cin, 3, 3}))
    throw std::invalid_argument("conv2d_3x3_naive: weight must be [Cout,Cin,3,3]");
  std::vector<double> out(B * Cout * H * W);
  std::size_t idx = 0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t co = 0; co < Cout; ++co)
      for (std::size_t oy = 0; oy < H; ++oy)
        for (std::size_t ox = 0; ox < W; ++ox) {
          double acc = bias[co];
          for (std::size_t ci = 0; ci < Cin; ++ci)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const long iy = static_cast<long>(oy) + ky - 1;
                const long ix = static_cast<long>(ox) + kx - 1;
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
                acc += w[((co * Cin + ci) * 3 + ky) * 3 + kx] * in[((b * Cin + ci) * H + iy) * W + ix];
              }
          out[idx++] = acc;
        }
  return Tensor::from_raw(Shape{B, Cout, H, W}, std::move(out));
}

Tensor conv2d_1x1_naive(const Tensor& in, const Tensor& w, const Tensor& bias) {
  const auto& s = in.shape();
  if (s.rank() != 4) throw std::invalid_argument("conv2d_1x1_naive: input must be [B,Cin,H,W]");
  const std::size_t B = s.extent(0), Cin = s.extent(1), H = s.extent(2), W = s.extent(3);
  const std::size_t Cout = w.shape().extent(0);
  std::vector<double> out(B * Cout * H * W);
  std::size_t idx = 0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t co = 0; co < Cout; ++co)
      for (std::size_t p = 0; p < H * W; ++p) {
        double acc = bias[co];
        for (std::size_t ci = 0; ci < Cin; ++ci)
          acc += w[co * Cin + ci] * in[(b * Cin + ci) * H * W + p];
        out[idx++] = acc;
      }
  return Tensor::from_raw(Shape{B, Cout, H, W}, std::move(out));
}

NaivePrototypes compute_prototypes_naive(const Tensor& features, const LabelMap& mask, int num_classes) {
  const auto& s = features.shape();
  if (s.rank() != 3) throw std::invalid_argument("compute_prototypes_naive: features must be [K,h,w]");
  const std::size_t K = s.extent(0), h = s.extent(1), w = s.extent(2);
  if (mask.height() != h || mask.width() != w)
    throw std::invalid_argument("compute_prototypes_naive: mask extent mismatch");

  const std::size_t C = static_cast<std::size_t>(num_classes);
  std::vector<double> values(C * K, 0.0);
  std::vector<bool> present(C, false);
  for (std::size_t c = 0; c < C; ++c) {
    std::size_t count = 0;
    for (std::size_t k = 0; k < K; ++k) {
      double sum = 0.0;
      count = 0;
      for (std::size_t p = 0; p < h * w; ++p) {
        if (mask[p] == c) {
          sum += features[k * h * w + p];
          ++count;
        }
      }
      if (count > 0) values[c * K + k] = sum / static_cast<double>(count);
    }
    present[c] = count > 0;
  }
  return {Tensor::from_raw(Shape{C, K}, std::move(values)), std::move(present)};
}

double triplet_loss_naive(const Tensor& proto_s, const Tensor& proto_t,
                          const std::vector<bool>& present, double margin) {
  const std::size_t C = proto_s.shape().extent(0), K = proto_s.shape().extent(1);
  auto dist = [&](const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
    double sq = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double diff = a[i * K + k] - b[j * K + k];
      sq += diff * diff;
    }
    return std::sqrt(sq);
  };
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t j = 0; j < C; ++j) {
      if (j == c || !present[c] || !present[j]) continue;
      ++pairs;
      const double arg = margin + dist(proto_s, c, proto_t, c) - dist(proto_s, c, proto_t, j);
      if (arg > 0.0) total += arg;
    }
  return pairs == 0 ? 0.0 : total / static_cast<double>(pairs);
}

double channel_kld_naive(const Tensor& scores_t, const Tensor& scores_s, double temperature) {
  if (!(scores_t.shape() == scores_s.shape()))
    throw std::invalid_argument("channel_kld_naive: shape mismatch");
  const auto& s = scores_t.shape();
  if (s.rank() != 3) throw std::invalid_argument("channel_kld_naive: scores must be [C,H,W]");
  const std::size_t C = s.extent(0), N = s.extent(1) * s.extent(2);

  auto softmax = [&](const Tensor& y, std::size_t c) {
    std::vector<double> phi(N);
    double z = 0.0;
    for (std::size_t i = 0; i < N; ++i) z += std::exp(y[c * N + i] / temperature);
    for (std::size_t i = 0; i < N; ++i) phi[i] = std::exp(y[c * N + i] / temperature) / z;
    return phi;
  };

  double total = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    const std::vector<double> pt = softmax(scores_t, c);
    const std::vector<double> ps = softmax(scores_s, c);
    for (std::size_t i = 0; i < N; ++i) {
      if (pt[i] > 0.0) total += pt[i] * std::log(pt[i] / ps[i]);
    }
  }
  return temperature * temperature / static_cast<double>(C) * total;
}

double task_cross_entropy_naive(const Tensor& scores, const LabelMap& mask) {
  const auto& s = scores.shape();
  if (s.rank() != 3) throw std::invalid_argument("task_cross_entropy_naive: scores must be [C,H,W]");
  const std::size_t C = s.extent(0), N = s.extent(1) * s.extent(2);
  double total = 0.0;
  std::size_t scored = 0;
  for (std::size_t p = 0; p < N; ++p) {
    if (mask[p] == LabelMap::kIgnore) continue;
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(scores[c * N + p]);
    total += -std::log(std::exp(scores[mask[p] * N + p]) / z);
    ++scored;
  }
  return scored == 0 ? 0.0 : total / static_cast<double>(scored);
}

}  // namespace i2ckd::reference
