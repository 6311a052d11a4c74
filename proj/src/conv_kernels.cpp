#include "i2ckd/conv_kernels.hpp"

#include <omp.h>

#include <cstring>
#include <stdexcept>
#include <vector>

namespace i2ckd::kern {

namespace {

// Copies [planes, h, w] into a buffer with a one-pixel zero border per plane
// so the tap loops below never branch on image edges.
std::vector<double> pad_planes(const double* src, int planes, int h, int w) {
  const int ph = h + 2, pw = w + 2;
  std::vector<double> out(static_cast<std::size_t>(planes) * ph * pw, 0.0);
  for (int p = 0; p < planes; ++p) {
    const double* s = src + static_cast<std::size_t>(p) * h * w;
    double* dst = out.data() + static_cast<std::size_t>(p) * ph * pw;
    for (int y = 0; y < h; ++y) std::memcpy(dst + (y + 1) * pw + 1, s + y * w, sizeof(double) * w);
  }
  return out;
}

// One output row of a 3x3 correlation over padded planes. The accumulator
// row lives in registers when WIDTH is a compile-time constant, which is
// where the training-resolution fast path gets its throughput.
template <int WIDTH>
void conv3x3_row_fixed(const double* plane0, int pw, std::size_t plane_stride, int cin,
                       const double* w9, int oy, double init, double* out_row) {
  double acc[WIDTH];
  for (int x = 0; x < WIDTH; ++x) acc[x] = init;
  for (int ci = 0; ci < cin; ++ci) {
    const double* plane = plane0 + ci * plane_stride;
    const double* wk = w9 + ci * 9;
    for (int ky = 0; ky < 3; ++ky) {
      const double* row = plane + static_cast<std::size_t>(oy + ky) * pw;
      const double w0 = wk[ky * 3 + 0], w1 = wk[ky * 3 + 1], w2 = wk[ky * 3 + 2];
      for (int x = 0; x < WIDTH; ++x) acc[x] += w0 * row[x];
      for (int x = 0; x < WIDTH; ++x) acc[x] += w1 * row[x + 1];
      for (int x = 0; x < WIDTH; ++x) acc[x] += w2 * row[x + 2];
    }
  }
  for (int x = 0; x < WIDTH; ++x) out_row[x] = acc[x];
}

void conv3x3_row_generic(const double* plane0, int pw, std::size_t plane_stride, int cin,
                         const double* w9, int oy, int width, double init, double* out_row) {
  constexpr int kMaxW = 512;
  if (width > kMaxW) throw std::invalid_argument("conv3x3: width exceeds kernel row buffer");
  double acc[kMaxW];
  for (int x = 0; x < width; ++x) acc[x] = init;
  for (int ci = 0; ci < cin; ++ci) {
    const double* plane = plane0 + ci * plane_stride;
    const double* wk = w9 + ci * 9;
    for (int ky = 0; ky < 3; ++ky) {
      const double* row = plane + static_cast<std::size_t>(oy + ky) * pw;
      const double w0 = wk[ky * 3 + 0], w1 = wk[ky * 3 + 1], w2 = wk[ky * 3 + 2];
      for (int x = 0; x < width; ++x) acc[x] += w0 * row[x];
      for (int x = 0; x < width; ++x) acc[x] += w1 * row[x + 1];
      for (int x = 0; x < width; ++x) acc[x] += w2 * row[x + 2];
    }
  }
  for (int x = 0; x < width; ++x) out_row[x] = acc[x];
}

// One (image, output-channel) plane of the forward pass.
[[gnu::noinline]] void conv3x3_forward_plane(const double* padded, const double* w3, double bias,
                                             double* out, const ConvDims& d, int b, int co) {
  const int pw = d.w + 2;
  const std::size_t plane_stride = static_cast<std::size_t>(d.h + 2) * pw;
  const double* image = padded + static_cast<std::size_t>(b) * d.cin * plane_stride;
  const double* w9 = w3 + static_cast<std::size_t>(co) * d.cin * 9;
  double* out_plane = out + (static_cast<std::size_t>(b) * d.cout + co) * d.h * d.w;
  for (int oy = 0; oy < d.h; ++oy) {
    double* out_row = out_plane + static_cast<std::size_t>(oy) * d.w;
    if (d.w == 64)
      conv3x3_row_fixed<64>(image, pw, plane_stride, d.cin, w9, oy, bias, out_row);
    else
      conv3x3_row_generic(image, pw, plane_stride, d.cin, w9, oy, d.w, bias, out_row);
  }
}

// One (image, input-channel) plane of the input gradient, as a gather over
// padded output gradients with the kernel taps flipped.
[[gnu::noinline]] void conv3x3_backward_input_plane(const double* gout_padded, const double* w3,
                                                    double* gin, const ConvDims& d, int b, int ci) {
  const int pw = d.w + 2;
  const std::size_t plane_stride = static_cast<std::size_t>(d.h + 2) * pw;
  const double* gimage = gout_padded + static_cast<std::size_t>(b) * d.cout * plane_stride;
  double* gin_plane = gin + (static_cast<std::size_t>(b) * d.cin + ci) * d.h * d.w;

  constexpr int kMaxW = 512;
  double acc[kMaxW];
  if (d.w > kMaxW) throw std::invalid_argument("conv3x3: width exceeds kernel row buffer");

  for (int iy = 0; iy < d.h; ++iy) {
    for (int x = 0; x < d.w; ++x) acc[x] = 0.0;
    for (int co = 0; co < d.cout; ++co) {
      const double* plane = gimage + co * plane_stride;
      const double* wk = w3 + (static_cast<std::size_t>(co) * d.cin + ci) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        // out[oy][ox] consumed in[oy+ky-1][ox+kx-1]; invert and shift into pad space
        const double* row = plane + static_cast<std::size_t>(iy + 2 - ky) * pw;
        const double w0 = wk[ky * 3 + 0], w1 = wk[ky * 3 + 1], w2 = wk[ky * 3 + 2];
        for (int x = 0; x < d.w; ++x) acc[x] += w0 * row[x + 2];
        for (int x = 0; x < d.w; ++x) acc[x] += w1 * row[x + 1];
        for (int x = 0; x < d.w; ++x) acc[x] += w2 * row[x];
      }
    }
    double* gin_row = gin_plane + static_cast<std::size_t>(iy) * d.w;
    for (int x = 0; x < d.w; ++x) gin_row[x] += acc[x];
  }
}

// All nine weight gradients of one (output-channel, input-channel) pair.
// Row-wise partial sums keep the final reduction order fixed.
[[gnu::noinline]] void conv3x3_backward_weights_pair(const double* gout, const double* in_padded,
                                                     double* gw, const ConvDims& d, int co, int ci) {
  const int pw = d.w + 2;
  const std::size_t in_plane_stride = static_cast<std::size_t>(d.h + 2) * pw;
  constexpr int kMaxW = 512;
  double acc[kMaxW];
  if (d.w > kMaxW) throw std::invalid_argument("conv3x3: width exceeds kernel row buffer");

  for (int ky = 0; ky < 3; ++ky) {
    for (int kx = 0; kx < 3; ++kx) {
      for (int x = 0; x < d.w; ++x) acc[x] = 0.0;
      for (int b = 0; b < d.batch; ++b) {
        const double* gout_plane = gout + (static_cast<std::size_t>(b) * d.cout + co) * d.h * d.w;
        const double* in_plane = in_padded + (static_cast<std::size_t>(b) * d.cin + ci) * in_plane_stride;
        for (int oy = 0; oy < d.h; ++oy) {
          const double* grow = gout_plane + static_cast<std::size_t>(oy) * d.w;
          const double* irow = in_plane + static_cast<std::size_t>(oy + ky) * pw + kx;
          for (int x = 0; x < d.w; ++x) acc[x] += grow[x] * irow[x];
        }
      }
      double total = 0.0;
      for (int x = 0; x < d.w; ++x) total += acc[x];
      gw[(static_cast<std::size_t>(co) * d.cin + ci) * 9 + ky * 3 + kx] += total;
    }
  }
}

[[gnu::noinline]] void conv_backward_bias_one(const double* gout, double* gb, const ConvDims& d, int co) {
  constexpr int kMaxW = 512;
  double acc[kMaxW];
  if (d.w > kMaxW) throw std::invalid_argument("conv: width exceeds kernel row buffer");
  for (int x = 0; x < d.w; ++x) acc[x] = 0.0;
  for (int b = 0; b < d.batch; ++b) {
    const double* plane = gout + (static_cast<std::size_t>(b) * d.cout + co) * d.h * d.w;
    for (int oy = 0; oy < d.h; ++oy) {
      const double* row = plane + static_cast<std::size_t>(oy) * d.w;
      for (int x = 0; x < d.w; ++x) acc[x] += row[x];
    }
  }
  double total = 0.0;
  for (int x = 0; x < d.w; ++x) total += acc[x];
  gb[co] += total;
}

[[gnu::noinline]] void conv1x1_forward_plane(const double* in, const double* w1, double bias,
                                             double* out, const ConvDims& d, int b, int co) {
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
  const double* image = in + static_cast<std::size_t>(b) * d.cin * plane;
  double* out_plane = out + (static_cast<std::size_t>(b) * d.cout + co) * plane;
  for (std::size_t p = 0; p < plane; ++p) out_plane[p] = bias;
  for (int ci = 0; ci < d.cin; ++ci) {
    const double wv = w1[static_cast<std::size_t>(co) * d.cin + ci];
    const double* src = image + ci * plane;
    for (std::size_t p = 0; p < plane; ++p) out_plane[p] += wv * src[p];
  }
}

[[gnu::noinline]] void conv1x1_backward_input_plane(const double* gout, const double* w1,
                                                    double* gin, const ConvDims& d, int b, int ci) {
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
  const double* gimage = gout + static_cast<std::size_t>(b) * d.cout * plane;
  double* gin_plane = gin + (static_cast<std::size_t>(b) * d.cin + ci) * plane;
  for (int co = 0; co < d.cout; ++co) {
    const double wv = w1[static_cast<std::size_t>(co) * d.cin + ci];
    const double* src = gimage + co * plane;
    for (std::size_t p = 0; p < plane; ++p) gin_plane[p] += wv * src[p];
  }
}

[[gnu::noinline]] void conv1x1_backward_weights_pair(const double* gout, const double* in,
                                                     double* gw, const ConvDims& d, int co, int ci) {
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
  constexpr int kMaxW = 512;
  double acc[kMaxW];
  if (d.w > kMaxW) throw std::invalid_argument("conv1x1: width exceeds kernel row buffer");
  for (int x = 0; x < d.w; ++x) acc[x] = 0.0;
  for (int b = 0; b < d.batch; ++b) {
    const double* gplane = gout + (static_cast<std::size_t>(b) * d.cout + co) * plane;
    const double* iplane = in + (static_cast<std::size_t>(b) * d.cin + ci) * plane;
    for (int y = 0; y < d.h; ++y) {
      const double* grow = gplane + static_cast<std::size_t>(y) * d.w;
      const double* irow = iplane + static_cast<std::size_t>(y) * d.w;
      for (int x = 0; x < d.w; ++x) acc[x] += grow[x] * irow[x];
    }
  }
  double total = 0.0;
  for (int x = 0; x < d.w; ++x) total += acc[x];
  gw[static_cast<std::size_t>(co) * d.cin + ci] += total;
}

[[gnu::noinline]] void relu_forward_chunk(const double* x, double* out, std::size_t lo, std::size_t hi) {
  for (std::size_t i = lo; i < hi; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

[[gnu::noinline]] void relu_backward_chunk(const double* x, const double* gout, double* gin,
                                           std::size_t lo, std::size_t hi) {
  for (std::size_t i = lo; i < hi; ++i) gin[i] += x[i] > 0.0 ? gout[i] : 0.0;
}

constexpr std::size_t kReluChunk = 1 << 14;

}  // namespace

namespace serial {

void conv3x3_forward(const double* in, const double* w3, const double* bias, double* out, const ConvDims& d) {
  std::vector<double> padded = pad_planes(in, d.batch * d.cin, d.h, d.w);
  for (int b = 0; b < d.batch; ++b)
    for (int co = 0; co < d.cout; ++co)
      conv3x3_forward_plane(padded.data(), w3, bias[co], out, d, b, co);
}

void conv3x3_backward_input(const double* gout, const double* w3, double* gin, const ConvDims& d) {
  std::vector<double> gpadded = pad_planes(gout, d.batch * d.cout, d.h, d.w);
  for (int b = 0; b < d.batch; ++b)
    for (int ci = 0; ci < d.cin; ++ci)
      conv3x3_backward_input_plane(gpadded.data(), w3, gin, d, b, ci);
}

void conv3x3_backward_weights(const double* gout, const double* in, double* gw, double* gb, const ConvDims& d) {
  std::vector<double> padded = pad_planes(in, d.batch * d.cin, d.h, d.w);
  for (int co = 0; co < d.cout; ++co)
    for (int ci = 0; ci < d.cin; ++ci)
      conv3x3_backward_weights_pair(gout, padded.data(), gw, d, co, ci);
  for (int co = 0; co < d.cout; ++co) conv_backward_bias_one(gout, gb, d, co);
}

void conv1x1_forward(const double* in, const double* w1, const double* bias, double* out, const ConvDims& d) {
  for (int b = 0; b < d.batch; ++b)
    for (int co = 0; co < d.cout; ++co)
      conv1x1_forward_plane(in, w1, bias[co], out, d, b, co);
}

void conv1x1_backward_input(const double* gout, const double* w1, double* gin, const ConvDims& d) {
  for (int b = 0; b < d.batch; ++b)
    for (int ci = 0; ci < d.cin; ++ci)
      conv1x1_backward_input_plane(gout, w1, gin, d, b, ci);
}

void conv1x1_backward_weights(const double* gout, const double* in, double* gw, double* gb, const ConvDims& d) {
  for (int co = 0; co < d.cout; ++co)
    for (int ci = 0; ci < d.cin; ++ci)
      conv1x1_backward_weights_pair(gout, in, gw, d, co, ci);
  for (int co = 0; co < d.cout; ++co) conv_backward_bias_one(gout, gb, d, co);
}

void relu_forward(const double* x, double* out, std::size_t n) { relu_forward_chunk(x, out, 0, n); }

void relu_backward(const double* x, const double* gout, double* gin, std::size_t n) {
  relu_backward_chunk(x, gout, gin, 0, n);
}

}  // namespace serial

namespace par {

void conv3x3_forward(const double* in, const double* w3, const double* bias, double* out, const ConvDims& d) {
  std::vector<double> padded = pad_planes(in, d.batch * d.cin, d.h, d.w);
  const int total = d.batch * d.cout;
#pragma omp parallel for schedule(static)
  for (int t = 0; t < total; ++t)
    conv3x3_forward_plane(padded.data(), w3, bias[t % d.cout], out, d, t / d.cout, t % d.cout);
}

void conv3x3_backward_input(const double* gout, const double* w3, double* gin, const ConvDims& d) {
  std::vector<double> gpadded = pad_planes(gout, d.batch * d.cout, d.h, d.w);
  const int total = d.batch * d.cin;
#pragma omp parallel for schedule(static)
  for (int t = 0; t < total; ++t)
    conv3x3_backward_input_plane(gpadded.data(), w3, gin, d, t / d.cin, t % d.cin);
}

void conv3x3_backward_weights(const double* gout, const double* in, double* gw, double* gb, const ConvDims& d) {
  std::vector<double> padded = pad_planes(in, d.batch * d.cin, d.h, d.w);
  const int total = d.cout * d.cin;
#pragma omp parallel for schedule(static)
  for (int t = 0; t < total; ++t)
    conv3x3_backward_weights_pair(gout, padded.data(), gw, d, t / d.cin, t % d.cin);
#pragma omp parallel for schedule(static)
  for (int co = 0; co < d.cout; ++co) conv_backward_bias_one(gout, gb, d, co);
}

void conv1x1_forward(const double* in, const double* w1, const double* bias, double* out, const ConvDims& d) {
  const int total = d.batch * d.cout;
#pragma omp parallel for schedule(static)
  for (int t = 0; t < total; ++t)
    conv1x1_forward_plane(in, w1, bias[t % d.cout], out, d, t / d.cout, t % d.cout);
}

void conv1x1_backward_input(const double* gout, const double* w1, double* gin, const ConvDims& d) {
  const int total = d.batch * d.cin;
#pragma omp parallel for schedule(static)
  for (int t = 0; t < total; ++t)
    conv1x1_backward_input_plane(gout, w1, gin, d, t / d.cin, t % d.cin);
}

void conv1x1_backward_weights(const double* gout, const double* in, double* gw, double* gb, const ConvDims& d) {
  const int total = d.cout * d.cin;
#pragma omp parallel for schedule(static)
  for (int t = 0; t < total; ++t)
    conv1x1_backward_weights_pair(gout, in, gw, d, t / d.cin, t % d.cin);
#pragma omp parallel for schedule(static)
  for (int co = 0; co < d.cout; ++co) conv_backward_bias_one(gout, gb, d, co);
}

void relu_forward(const double* x, double* out, std::size_t n) {
  const std::size_t chunks = (n + kReluChunk - 1) / kReluChunk;
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < chunks; ++c)
    relu_forward_chunk(x, out, c * kReluChunk, std::min(n, (c + 1) * kReluChunk));
}

void relu_backward(const double* x, const double* gout, double* gin, std::size_t n) {
  const std::size_t chunks = (n + kReluChunk - 1) / kReluChunk;
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < chunks; ++c)
    relu_backward_chunk(x, gout, gin, c * kReluChunk, std::min(n, (c + 1) * kReluChunk));
}

}  // namespace par

}  // namespace i2ckd::kern
