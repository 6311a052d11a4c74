#pragma once

#include <cstddef>

namespace i2ckd::kern {

// Dimensions for stride-1 convolutions. 3x3 kernels use zero padding 1, so
// spatial extents are preserved; 1x1 kernels need no padding.
struct ConvDims {
  int batch;
  int cin;
  int h;
  int w;
  int cout;
};

// Layouts (row-major):
//   in    [batch, cin,  h, w]
//   w3    [cout,  cin,  3, 3]
//   w1    [cout,  cin]
//   bias  [cout]
//   out   [batch, cout, h, w]
//
// Forward kernels overwrite `out`. Backward kernels accumulate (+=) into
// their gradient outputs so a node feeding several consumers sums correctly.
//
// Each output element is produced by exactly one worker invocation with a
// fixed internal accumulation order, so the parallel drivers are
// bit-identical to the serial ones for any thread count.

namespace serial {

void conv3x3_forward(const double* in, const double* w3, const double* bias, double* out, const ConvDims& d);
void conv3x3_backward_input(const double* gout, const double* w3, double* gin, const ConvDims& d);
void conv3x3_backward_weights(const double* gout, const double* in, double* gw, double* gb, const ConvDims& d);

void conv1x1_forward(const double* in, const double* w1, const double* bias, double* out, const ConvDims& d);
void conv1x1_backward_input(const double* gout, const double* w1, double* gin, const ConvDims& d);
void conv1x1_backward_weights(const double* gout, const double* in, double* gw, double* gb, const ConvDims& d);

void relu_forward(const double* x, double* out, std::size_t n);
void relu_backward(const double* x, const double* gout, double* gin, std::size_t n);

}  // namespace serial

namespace par {

void conv3x3_forward(const double* in, const double* w3, const double* bias, double* out, const ConvDims& d);
void conv3x3_backward_input(const double* gout, const double* w3, double* gin, const ConvDims& d);
void conv3x3_backward_weights(const double* gout, const double* in, double* gw, double* gb, const ConvDims& d);

void conv1x1_forward(const double* in, const double* w1, const double* bias, double* out, const ConvDims& d);
void conv1x1_backward_input(const double* gout, const double* w1, double* gin, const ConvDims& d);
void conv1x1_backward_weights(const double* gout, const double* in, double* gw, double* gb, const ConvDims& d);

void relu_forward(const double* x, double* out, std::size_t n);
void relu_backward(const double* x, const double* gout, double* gin, std::size_t n);

}  // namespace par

}  // namespace i2ckd::kern
