#include "egmsynth/kernels.hpp"

#include <cmath>
#include <vector>

#include "egmsynth/errors.hpp"

namespace egmsynth::kernels {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

void check_same_shape(std::span<const EgmTensor> a, std::span<const EgmTensor> b) {
  require(!a.empty() && !b.empty(), ErrorCode::EmptySet, "pairwise RMSE needs nonempty sets");
  const auto t = a[0].samples(), n = a[0].channels();
  for (const auto* set : {&a, &b})
    for (const auto& s : *set)
      require(s.samples() == t && s.channels() == n, ErrorCode::ShapeMismatch,
              "pairwise RMSE over signals of different shapes");
}

}  // namespace

void im2col(const double* image, int channels, int h, int w, const ConvGeometry& g, double* cols) {
  const int oh = g.out_h(h), ow = g.out_w(w);
  const int rows = channels * g.kernel_h * g.kernel_w;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const int kj = r % g.kernel_w;
    const int ki = (r / g.kernel_w) % g.kernel_h;
    const int c = r / (g.kernel_w * g.kernel_h);
    const double* src = image + static_cast<std::size_t>(c) * h * w;
    double* dst = cols + static_cast<std::size_t>(r) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const int iy = y * g.stride_h - g.pad_h + ki;
      double* out_row = dst + static_cast<std::size_t>(y) * ow;
      if (iy < 0 || iy >= h) {
        std::fill(out_row, out_row + ow, 0.0);
        continue;
      }
      const double* in_row = src + static_cast<std::size_t>(iy) * w;
      for (int x = 0; x < ow; ++x) {
        const int ix = x * g.stride_w - g.pad_w + kj;
        out_row[x] = (ix >= 0 && ix < w) ? in_row[ix] : 0.0;
      }
    }
  }
}

void col2im(const double* cols, int channels, int h, int w, const ConvGeometry& g, double* image) {
  const int oh = g.out_h(h), ow = g.out_w(w);
  // Channels own disjoint slices of the image, so the per-channel accumulation
  // order is fixed regardless of thread count.
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    double* dst = image + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < g.kernel_h; ++ki) {
      for (int kj = 0; kj < g.kernel_w; ++kj) {
        const int r = (c * g.kernel_h + ki) * g.kernel_w + kj;
        const double* src = cols + static_cast<std::size_t>(r) * oh * ow;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * g.stride_h - g.pad_h + ki;
          if (iy < 0 || iy >= h) continue;
          double* row = dst + static_cast<std::size_t>(iy) * w;
          const double* col_row = src + static_cast<std::size_t>(y) * ow;
          for (int x = 0; x < ow; ++x) {
            const int ix = x * g.stride_w - g.pad_w + kj;
            if (ix >= 0 && ix < w) row[ix] += col_row[x];
          }
        }
      }
    }
  }
}

void conv2d_forward(const double* x, int in_c, int h, int w, const double* weight, const double* bias,
                    int out_c, const ConvGeometry& g, double* y) {
  const int oh = g.out_h(h), ow = g.out_w(w);
  const int k = in_c * g.kernel_h * g.kernel_w;
  const int p = oh * ow;
  std::vector<double> cols(static_cast<std::size_t>(k) * p);
  im2col(x, in_c, h, w, g, cols.data());
  MutMap out(y, out_c, p);
  out.noalias() = ConstMap(weight, out_c, k) * ConstMap(cols.data(), k, p);
  if (bias)
    for (int o = 0; o < out_c; ++o) out.row(o).array() += bias[o];
}

void conv2d_backward(const double* x, int in_c, int h, int w, const double* weight, int out_c,
                     const ConvGeometry& g, const double* gy, double* gx, double* gw, double* gb) {
  const int oh = g.out_h(h), ow = g.out_w(w);
  const int k = in_c * g.kernel_h * g.kernel_w;
  const int p = oh * ow;
  ConstMap grad_out(gy, out_c, p);
  std::vector<double> cols(static_cast<std::size_t>(k) * p);
  if (gw) {
    im2col(x, in_c, h, w, g, cols.data());
    MutMap(gw, out_c, k).noalias() += grad_out * ConstMap(cols.data(), k, p).transpose();
  }
  if (gb)
    for (int o = 0; o < out_c; ++o) gb[o] += grad_out.row(o).sum();
  if (gx) {
    MutMap gcols(cols.data(), k, p);
    gcols.noalias() = ConstMap(weight, out_c, k).transpose() * grad_out;
    col2im(cols.data(), in_c, h, w, g, gx);
  }
}

void conv_transpose2d_forward(const double* x, int in_c, int h, int w, const double* weight,
                              const double* bias, int out_c, const ConvGeometry& g, double* y) {
  const int oh = g.transposed_h(h), ow = g.transposed_w(w);
  const int k = out_c * g.kernel_h * g.kernel_w;
  const int p = h * w;
  std::vector<double> cols(static_cast<std::size_t>(k) * p);
  MutMap(cols.data(), k, p).noalias() =
      ConstMap(weight, in_c, k).transpose() * ConstMap(x, in_c, p);
  std::fill(y, y + static_cast<std::size_t>(out_c) * oh * ow, 0.0);
  col2im(cols.data(), out_c, oh, ow, g, y);
  if (bias) {
    MutMap out(y, out_c, oh * ow);
    for (int o = 0; o < out_c; ++o) out.row(o).array() += bias[o];
  }
}

void conv_transpose2d_backward(const double* x, int in_c, int h, int w, const double* weight,
                               int out_c, const ConvGeometry& g, const double* gy, double* gx,
                               double* gw, double* gb) {
  const int oh = g.transposed_h(h), ow = g.transposed_w(w);
  const int k = out_c * g.kernel_h * g.kernel_w;
  const int p = h * w;
  std::vector<double> cols(static_cast<std::size_t>(k) * p);
  im2col(gy, out_c, oh, ow, g, cols.data());
  ConstMap gcols(cols.data(), k, p);
  if (gx) MutMap(gx, in_c, p).noalias() += ConstMap(weight, in_c, k) * gcols;
  if (gw) MutMap(gw, in_c, k).noalias() += ConstMap(x, in_c, p) * gcols.transpose();
  if (gb) {
    ConstMap grad_out(gy, out_c, oh * ow);
    for (int o = 0; o < out_c; ++o) gb[o] += grad_out.row(o).sum();
  }
}

Matrix pairwise_rmse(std::span<const EgmTensor> a, std::span<const EgmTensor> b) {
  check_same_shape(a, b);
  const double count = static_cast<double>(a[0].values.size());
  Matrix scores(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  const int na = static_cast<int>(a.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < na; ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      scores(i, j) = std::sqrt((a[i].values - b[j].values).squaredNorm() / count);
  return scores;
}

Matrix rbf_gram(const Matrix& x, const Matrix& y, double bandwidth) {
  require(x.cols() == y.cols(), ErrorCode::ShapeMismatch, "feature dimensions differ");
  require(bandwidth > 0.0, ErrorCode::InvalidConfig, "bandwidth must be positive");
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  Matrix k(x.rows(), y.rows());
  const auto nx = static_cast<int>(x.rows());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < nx; ++i)
    for (Eigen::Index j = 0; j < y.rows(); ++j)
      k(i, j) = std::exp(-(x.row(i) - y.row(j)).squaredNorm() * inv);
  return k;
}

namespace reference {

void conv2d_forward(const double* x, int in_c, int h, int w, const double* weight, const double* bias,
                    int out_c, const ConvGeometry& g, double* y) {
  const int oh = g.out_h(h), ow = g.out_w(w);
  for (int o = 0; o < out_c; ++o)
    for (int yy = 0; yy < oh; ++yy)
      for (int xx = 0; xx < ow; ++xx) {
        double acc = bias ? bias[o] : 0.0;
        for (int c = 0; c < in_c; ++c)
          for (int ki = 0; ki < g.kernel_h; ++ki)
            for (int kj = 0; kj < g.kernel_w; ++kj) {
              const int iy = yy * g.stride_h - g.pad_h + ki;
              const int ix = xx * g.stride_w - g.pad_w + kj;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += weight[((o * in_c + c) * g.kernel_h + ki) * g.kernel_w + kj] *
                     x[(c * h + iy) * w + ix];
            }
        y[(o * oh + yy) * ow + xx] = acc;
      }
}

void conv2d_backward(const double* x, int in_c, int h, int w, const double* weight, int out_c,
                     const ConvGeometry& g, const double* gy, double* gx, double* gw, double* gb) {
  const int oh = g.out_h(h), ow = g.out_w(w);
  for (int o = 0; o < out_c; ++o)
    for (int yy = 0; yy < oh; ++yy)
      for (int xx = 0; xx < ow; ++xx) {
        const double go = gy[(o * oh + yy) * ow + xx];
        if (gb) gb[o] += go;
        for (int c = 0; c < in_c; ++c)
          for (int ki = 0; ki < g.kernel_h; ++ki)
            for (int kj = 0; kj < g.kernel_w; ++kj) {
              const int iy = yy * g.stride_h - g.pad_h + ki;
              const int ix = xx * g.stride_w - g.pad_w + kj;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              const int wi = ((o * in_c + c) * g.kernel_h + ki) * g.kernel_w + kj;
              const int xi = (c * h + iy) * w + ix;
              if (gw) gw[wi] += go * x[xi];
              if (gx) gx[xi] += go * weight[wi];
            }
      }
}

void conv_transpose2d_forward(const double* x, int in_c, int h, int w, const double* weight,
                              const double* bias, int out_c, const ConvGeometry& g, double* y) {
  const int oh = g.transposed_h(h), ow = g.transposed_w(w);
  for (int o = 0; o < out_c; ++o)
    for (int i = 0; i < oh * ow; ++i) y[o * oh * ow + i] = bias ? bias[o] : 0.0;
  // scatter form: input pixel (c, iy, ix) spreads through the kernel
  for (int c = 0; c < in_c; ++c)
    for (int iy = 0; iy < h; ++iy)
      for (int ix = 0; ix < w; ++ix)
        for (int o = 0; o < out_c; ++o)
          for (int ki = 0; ki < g.kernel_h; ++ki)
            for (int kj = 0; kj < g.kernel_w; ++kj) {
              const int yy = iy * g.stride_h - g.pad_h + ki;
              const int xx = ix * g.stride_w - g.pad_w + kj;
              if (yy < 0 || yy >= oh || xx < 0 || xx >= ow) continue;
              y[(o * oh + yy) * ow + xx] +=
                  weight[((c * out_c + o) * g.kernel_h + ki) * g.kernel_w + kj] * x[(c * h + iy) * w + ix];
            }
}

void conv_transpose2d_backward(const double* x, int in_c, int h, int w, const double* weight,
                               int out_c, const ConvGeometry& g, const double* gy, double* gx,
                               double* gw, double* gb) {
  const int oh = g.transposed_h(h), ow = g.transposed_w(w);
  if (gb)
    for (int o = 0; o < out_c; ++o)
      for (int i = 0; i < oh * ow; ++i) gb[o] += gy[o * oh * ow + i];
  for (int c = 0; c < in_c; ++c)
    for (int iy = 0; iy < h; ++iy)
      for (int ix = 0; ix < w; ++ix)
        for (int o = 0; o < out_c; ++o)
          for (int ki = 0; ki < g.kernel_h; ++ki)
            for (int kj = 0; kj < g.kernel_w; ++kj) {
              const int yy = iy * g.stride_h - g.pad_h + ki;
              const int xx = ix * g.stride_w - g.pad_w + kj;
              if (yy < 0 || yy >= oh || xx < 0 || xx >= ow) continue;
              const int wi = ((c * out_c + o) * g.kernel_h + ki) * g.kernel_w + kj;
              const int xi = (c * h + iy) * w + ix;
              const double go = gy[(o * oh + yy) * ow + xx];
              if (gx) gx[xi] += weight[wi] * go;
              if (gw) gw[wi] += x[xi] * go;
            }
}

Matrix pairwise_rmse(std::span<const EgmTensor> a, std::span<const EgmTensor> b) {
  check_same_shape(a, b);
  Matrix scores(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      double acc = 0.0;
      for (int t = 0; t < a[i].samples(); ++t)
        for (int n = 0; n < a[i].channels(); ++n) {
          const double d = a[i].values(t, n) - b[j].values(t, n);
          acc += d * d;
        }
      scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          std::sqrt(acc / static_cast<double>(a[i].values.size()));
    }
  return scores;
}

Matrix rbf_gram(const Matrix& x, const Matrix& y, double bandwidth) {
  require(x.cols() == y.cols(), ErrorCode::ShapeMismatch, "feature dimensions differ");
  require(bandwidth > 0.0, ErrorCode::InvalidConfig, "bandwidth must be positive");
  Matrix k(x.rows(), y.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < y.rows(); ++j) {
      double d2 = 0.0;
      for (Eigen::Index f = 0; f < x.cols(); ++f) d2 += (x(i, f) - y(j, f)) * (x(i, f) - y(j, f));
      k(i, j) = std::exp(-d2 / (2.0 * bandwidth * bandwidth));
    }
  return k;
}

}  // namespace reference

}  // namespace egmsynth::kernels
