#pragma once

// Data-parallel compute kernels. Each kernel in `egmsynth::kernels` is the
// production path (OpenMP over independent outputs, GEMM through Eigen);
// `egmsynth::kernels::reference` holds the direct serial definitions that the
// tests and the benchmark compare against.
//
// Tensors are dense C x H x W blocks of doubles, row-major in (h, w).

#include <span>

#include "egmsynth/signal.hpp"

namespace egmsynth::kernels {

struct ConvGeometry {
  int kernel_h = 1;
  int kernel_w = 1;
  int stride_h = 1;
  int stride_w = 1;
  int pad_h = 0;
  int pad_w = 0;

  int out_h(int h) const { return (h + 2 * pad_h - kernel_h) / stride_h + 1; }
  int out_w(int w) const { return (w + 2 * pad_w - kernel_w) / stride_w + 1; }
  /// Spatial size whose convolution with this geometry yields `h` (transposed conv output).
  int transposed_h(int h) const { return (h - 1) * stride_h - 2 * pad_h + kernel_h; }
  int transposed_w(int w) const { return (w - 1) * stride_w - 2 * pad_w + kernel_w; }
};

/// cols has (channels * kh * kw) rows and (out_h * out_w) columns.
void im2col(const double* image, int channels, int h, int w, const ConvGeometry& g, double* cols);
/// Adjoint of im2col; accumulates into image.
void col2im(const double* cols, int channels, int h, int w, const ConvGeometry& g, double* image);

/// y[oc] = sum_ic W[oc, ic] * x[ic] + b[oc]; weight layout (oc, ic, kh, kw).
void conv2d_forward(const double* x, int in_c, int h, int w, const double* weight, const double* bias,
                    int out_c, const ConvGeometry& g, double* y);
/// Accumulates into gx (may be null), gw and gb.
void conv2d_backward(const double* x, int in_c, int h, int w, const double* weight, int out_c,
                     const ConvGeometry& g, const double* gy, double* gx, double* gw, double* gb);

/// Transposed convolution; weight layout (in_c, out_c, kh, kw), output spatial
/// size g.transposed_h(h) x g.transposed_w(w).
void conv_transpose2d_forward(const double* x, int in_c, int h, int w, const double* weight,
                              const double* bias, int out_c, const ConvGeometry& g, double* y);
void conv_transpose2d_backward(const double* x, int in_c, int h, int w, const double* weight,
                               int out_c, const ConvGeometry& g, const double* gy, double* gx,
                               double* gw, double* gb);

/// scores(i, j) = RMSE(a[i], b[j]). All signals must share one shape.
Matrix pairwise_rmse(std::span<const EgmTensor> a, std::span<const EgmTensor> b);

/// K(i, j) = exp(-|x_i - y_j|^2 / (2 bandwidth^2)) over the rows of x and y.
Matrix rbf_gram(const Matrix& x, const Matrix& y, double bandwidth);

namespace reference {

void conv2d_forward(const double* x, int in_c, int h, int w, const double* weight, const double* bias,
                    int out_c, const ConvGeometry& g, double* y);
void conv2d_backward(const double* x, int in_c, int h, int w, const double* weight, int out_c,
                     const ConvGeometry& g, const double* gy, double* gx, double* gw, double* gb);
void conv_transpose2d_forward(const double* x, int in_c, int h, int w, const double* weight,
                              const double* bias, int out_c, const ConvGeometry& g, double* y);
void conv_transpose2d_backward(const double* x, int in_c, int h, int w, const double* weight,
                               int out_c, const ConvGeometry& g, const double* gy, double* gx,
                               double* gw, double* gb);
Matrix pairwise_rmse(std::span<const EgmTensor> a, std::span<const EgmTensor> b);
Matrix rbf_gram(const Matrix& x, const Matrix& y, double bandwidth);

}  // namespace reference

}  // namespace egmsynth::kernels
