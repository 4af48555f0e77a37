#include "egmsynth/nn.hpp"

#include <algorithm>
#include <cmath>

#include "egmsynth/errors.hpp"

namespace egmsynth::nn {

std::string Shape::str() const {
  return "(" + std::to_string(c) + ", " + std::to_string(h) + ", " + std::to_string(w) + ")";
}

void round_to_float(std::span<double> values) {
  for (double& v : values) v = static_cast<float>(v);
}

namespace {

Shape out_shape(const Conv2d& l, Shape in) {
  require(in.c == l.in_c, ErrorCode::ShapeMismatch, "conv expects " + std::to_string(l.in_c) + " channels, got " + in.str());
  const auto g = l.geometry();
  Shape s{l.out_c, g.out_h(in.h), g.out_w(in.w)};
  require(s.h > 0 && s.w > 0, ErrorCode::ShapeMismatch, "conv kernel larger than input " + in.str());
  return s;
}
Shape out_shape(const ConvTranspose2d& l, Shape in) {
  require(in.c == l.in_c, ErrorCode::ShapeMismatch, "transposed conv expects " + std::to_string(l.in_c) + " channels, got " + in.str());
  const auto g = l.geometry();
  return {l.out_c, g.transposed_h(in.h), g.transposed_w(in.w)};
}
Shape out_shape(const MaxPool2d& l, Shape in) {
  require(in.h % l.pool_h == 0 && in.w % l.pool_w == 0, ErrorCode::ShapeMismatch,
          "pool window does not divide input " + in.str());
  return {in.c, in.h / l.pool_h, in.w / l.pool_w};
}
Shape out_shape(const Smooth2d&, Shape in) { return in; }
Shape out_shape(const Dense& l, Shape) { return l.out; }
Shape out_shape(const LeakyRelu&, Shape in) { return in; }
Shape out_shape(const Tanh&, Shape in) { return in; }

std::size_t param_count(const Conv2d& l, Shape) {
  return static_cast<std::size_t>(l.out_c) * l.in_c * l.kernel_h * l.kernel_w + l.out_c;
}
std::size_t param_count(const ConvTranspose2d& l, Shape) {
  return static_cast<std::size_t>(l.in_c) * l.out_c * l.kernel_h * l.kernel_w + l.out_c;
}
std::size_t param_count(const Dense& l, Shape in) { return l.out.size() * in.size() + l.out.size(); }
template <class L>
std::size_t param_count(const L&, Shape) { return 0; }

void glorot(std::span<double> w, double fan_in, double fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : w) v = dist(rng);
}

void init(const Conv2d& l, Shape, std::span<double> p, Rng& rng) {
  const std::size_t nw = p.size() - l.out_c;
  const double rf = l.kernel_h * l.kernel_w;
  glorot(p.first(nw), l.in_c * rf, l.out_c * rf, rng);
  std::fill(p.begin() + nw, p.end(), 0.0);
}
void init(const ConvTranspose2d& l, Shape, std::span<double> p, Rng& rng) {
  const std::size_t nw = p.size() - l.out_c;
  const double rf = l.kernel_h * l.kernel_w;
  // each output pixel sees roughly rf / stride^2 taps per input channel
  const double taps = rf / (l.stride_h * l.stride_w);
  glorot(p.first(nw), l.in_c * taps, l.out_c * taps, rng);
  std::fill(p.begin() + nw, p.end(), 0.0);
}
void init(const Dense& l, Shape in, std::span<double> p, Rng& rng) {
  const std::size_t nw = l.out.size() * in.size();
  glorot(p.first(nw), static_cast<double>(in.size()), static_cast<double>(l.out.size()), rng);
  std::fill(p.begin() + nw, p.end(), 0.0);
}
template <class L>
void init(const L&, Shape, std::span<double>, Rng&) {}

std::vector<std::pair<std::string, std::vector<int>>> param_dims(const Conv2d& l, Shape) {
  return {{"weight", {l.out_c, l.in_c, l.kernel_h, l.kernel_w}}, {"bias", {l.out_c}}};
}
std::vector<std::pair<std::string, std::vector<int>>> param_dims(const ConvTranspose2d& l, Shape) {
  return {{"weight", {l.in_c, l.out_c, l.kernel_h, l.kernel_w}}, {"bias", {l.out_c}}};
}
std::vector<std::pair<std::string, std::vector<int>>> param_dims(const Dense& l, Shape in) {
  return {{"weight", {static_cast<int>(l.out.size()), static_cast<int>(in.size())}},
          {"bias", {static_cast<int>(l.out.size())}}};
}
template <class L>
std::vector<std::pair<std::string, std::vector<int>>> param_dims(const L&, Shape) { return {}; }

// forward -------------------------------------------------------------------

void forward(const Conv2d& l, const Tensor& x, std::span<const double> p, Tensor& y) {
  const std::size_t nw = p.size() - l.out_c;
  kernels::conv2d_forward(x.data.data(), x.shape.c, x.shape.h, x.shape.w, p.data(), p.data() + nw,
                          l.out_c, l.geometry(), y.data.data());
}
void forward(const ConvTranspose2d& l, const Tensor& x, std::span<const double> p, Tensor& y) {
  const std::size_t nw = p.size() - l.out_c;
  kernels::conv_transpose2d_forward(x.data.data(), x.shape.c, x.shape.h, x.shape.w, p.data(),
                                    p.data() + nw, l.out_c, l.geometry(), y.data.data());
}
void forward(const MaxPool2d& l, const Tensor& x, std::span<const double>, Tensor& y) {
  const Shape in = x.shape, out = y.shape;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < in.c; ++c)
    for (int i = 0; i < out.h; ++i)
      for (int j = 0; j < out.w; ++j) {
        double best = -INFINITY;
        for (int a = 0; a < l.pool_h; ++a)
          for (int b = 0; b < l.pool_w; ++b)
            best = std::max(best, x.data[(static_cast<std::size_t>(c) * in.h + i * l.pool_h + a) * in.w +
                                         j * l.pool_w + b]);
        y.data[(static_cast<std::size_t>(c) * out.h + i) * out.w + j] = best;
      }
}

constexpr double kBinomial[3] = {0.25, 0.5, 0.25};

// y = S x for the separable binomial filter; `adjoint` applies S^T (same taps, symmetric).
void smooth(const Smooth2d& l, const std::vector<double>& in, Shape s, std::vector<double>& out) {
  std::vector<double> tmp = in;
  if (l.along_h) {
    std::fill(out.begin(), out.end(), 0.0);
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < s.h; ++i)
        for (int d = -1; d <= 1; ++d) {
          const int ii = i + d;
          if (ii < 0 || ii >= s.h) continue;
          const double k = kBinomial[d + 1];
          const double* src = &tmp[(static_cast<std::size_t>(c) * s.h + ii) * s.w];
          double* dst = &out[(static_cast<std::size_t>(c) * s.h + i) * s.w];
          for (int j = 0; j < s.w; ++j) dst[j] += k * src[j];
        }
    tmp = out;
  }
  if (l.along_w) {
    std::fill(out.begin(), out.end(), 0.0);
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < s.h; ++i) {
        const double* src = &tmp[(static_cast<std::size_t>(c) * s.h + i) * s.w];
        double* dst = &out[(static_cast<std::size_t>(c) * s.h + i) * s.w];
        for (int j = 0; j < s.w; ++j)
          for (int d = -1; d <= 1; ++d) {
            const int jj = j + d;
            if (jj >= 0 && jj < s.w) dst[j] += kBinomial[d + 1] * src[jj];
          }
      }
    tmp = out;
  }
  out = std::move(tmp);
}

void forward(const Smooth2d& l, const Tensor& x, std::span<const double>, Tensor& y) {
  smooth(l, x.data, x.shape, y.data);
}
void forward(const Dense& l, const Tensor& x, std::span<const double> p, Tensor& y) {
  const auto out = static_cast<Eigen::Index>(l.out.size());
  const auto in = static_cast<Eigen::Index>(x.shape.size());
  Eigen::Map<const Matrix> w(p.data(), out, in);
  Eigen::Map<const Vector> b(p.data() + out * in, out);
  Eigen::Map<Vector>(y.data.data(), out).noalias() = w * Eigen::Map<const Vector>(x.data.data(), in) + b;
}
void forward(const LeakyRelu& l, const Tensor& x, std::span<const double>, Tensor& y) {
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double v = x.data[i];
    y.data[i] = v > 0.0 ? v : l.slope * v;
  }
}
void forward(const Tanh&, const Tensor& x, std::span<const double>, Tensor& y) {
  for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = std::tanh(x.data[i]);
}

// backward ------------------------------------------------------------------

void backward(const Conv2d& l, const Tensor& x, const Tensor&, const Tensor& gy, std::span<const double> p,
              std::span<double> gp, Tensor& gx) {
  const std::size_t nw = p.size() - l.out_c;
  kernels::conv2d_backward(x.data.data(), x.shape.c, x.shape.h, x.shape.w, p.data(), l.out_c,
                           l.geometry(), gy.data.data(), gx.data.data(), gp.data(), gp.data() + nw);
}
void backward(const ConvTranspose2d& l, const Tensor& x, const Tensor&, const Tensor& gy,
              std::span<const double> p, std::span<double> gp, Tensor& gx) {
  const std::size_t nw = p.size() - l.out_c;
  kernels::conv_transpose2d_backward(x.data.data(), x.shape.c, x.shape.h, x.shape.w, p.data(),
                                     l.out_c, l.geometry(), gy.data.data(), gx.data.data(), gp.data(),
                                     gp.data() + nw);
}
void backward(const MaxPool2d& l, const Tensor& x, const Tensor&, const Tensor& gy, std::span<const double>,
              std::span<double>, Tensor& gx) {
  const Shape in = x.shape, out = gy.shape;
  for (int c = 0; c < in.c; ++c)
    for (int i = 0; i < out.h; ++i)
      for (int j = 0; j < out.w; ++j) {
        std::size_t arg = 0;
        double best = -INFINITY;
        for (int a = 0; a < l.pool_h; ++a)
          for (int b = 0; b < l.pool_w; ++b) {
            const std::size_t idx =
                (static_cast<std::size_t>(c) * in.h + i * l.pool_h + a) * in.w + j * l.pool_w + b;
            if (x.data[idx] > best) {
              best = x.data[idx];
              arg = idx;
            }
          }
        gx.data[arg] += gy.data[(static_cast<std::size_t>(c) * out.h + i) * out.w + j];
      }
}
void backward(const Smooth2d& l, const Tensor&, const Tensor&, const Tensor& gy, std::span<const double>,
              std::span<double>, Tensor& gx) {
  // the binomial filter is symmetric, so its adjoint under zero padding is itself
  std::vector<double> tmp(gy.data.size());
  smooth(l, gy.data, gy.shape, tmp);
  for (std::size_t i = 0; i < tmp.size(); ++i) gx.data[i] += tmp[i];
}
void backward(const Dense& l, const Tensor& x, const Tensor&, const Tensor& gy, std::span<const double> p,
              std::span<double> gp, Tensor& gx) {
  const auto out = static_cast<Eigen::Index>(l.out.size());
  const auto in = static_cast<Eigen::Index>(x.shape.size());
  Eigen::Map<const Matrix> w(p.data(), out, in);
  Eigen::Map<const Vector> g(gy.data.data(), out);
  Eigen::Map<Matrix>(gp.data(), out, in).noalias() += g * Eigen::Map<const Vector>(x.data.data(), in).transpose();
  Eigen::Map<Vector>(gp.data() + out * in, out) += g;
  Eigen::Map<Vector>(gx.data.data(), in).noalias() += w.transpose() * g;
}
void backward(const LeakyRelu& l, const Tensor& x, const Tensor&, const Tensor& gy, std::span<const double>,
              std::span<double>, Tensor& gx) {
  for (std::size_t i = 0; i < x.data.size(); ++i)
    gx.data[i] += x.data[i] > 0.0 ? gy.data[i] : l.slope * gy.data[i];
}
void backward(const Tanh&, const Tensor&, const Tensor& y, const Tensor& gy, std::span<const double>,
              std::span<double>, Tensor& gx) {
  for (std::size_t i = 0; i < y.data.size(); ++i) gx.data[i] += gy.data[i] * (1.0 - y.data[i] * y.data[i]);
}

}  // namespace

Sequential::Sequential(Shape input, std::string name) : input_(input), name_(std::move(name)) {
  require(input.size() > 0, ErrorCode::ShapeMismatch, "empty network input");
  shapes_.push_back(input);
}

void Sequential::add(Layer layer) {
  const Shape in = shapes_.back();
  const Shape out = std::visit([&](const auto& l) { return out_shape(l, in); }, layer);
  offsets_.push_back(param_count_);
  param_count_ += std::visit([&](const auto& l) { return nn::param_count(l, in); }, layer);
  layers_.push_back(std::move(layer));
  shapes_.push_back(out);
}

void Sequential::init(std::span<double> params, Rng& rng) const {
  require(params.size() == param_count_, ErrorCode::ShapeMismatch, "parameter vector size mismatch");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::size_t end = i + 1 < layers_.size() ? offsets_[i + 1] : param_count_;
    auto slice = params.subspan(offsets_[i], end - offsets_[i]);
    std::visit([&](const auto& l) { nn::init(l, shapes_[i], slice, rng); }, layers_[i]);
  }
  round_to_float(params);
}

std::vector<Tensor> Sequential::forward(const Tensor& x, std::span<const double> params) const {
  require(x.shape == input_, ErrorCode::ShapeMismatch,
          name_ + " expects input " + input_.str() + ", got " + x.shape.str());
  require(params.size() == param_count_, ErrorCode::ShapeMismatch, "parameter vector size mismatch");
  std::vector<Tensor> acts;
  acts.reserve(layers_.size() + 1);
  acts.push_back(x);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::size_t end = i + 1 < layers_.size() ? offsets_[i + 1] : param_count_;
    auto slice = params.subspan(offsets_[i], end - offsets_[i]);
    Tensor y = Tensor::zeros(shapes_[i + 1]);
    std::visit([&](const auto& l) { nn::forward(l, acts.back(), slice, y); }, layers_[i]);
    acts.push_back(std::move(y));
  }
  return acts;
}

Tensor Sequential::infer(const Tensor& x, std::span<const double> params) const {
  require(x.shape == input_, ErrorCode::ShapeMismatch,
          name_ + " expects input " + input_.str() + ", got " + x.shape.str());
  require(params.size() == param_count_, ErrorCode::ShapeMismatch, "parameter vector size mismatch");
  Tensor cur = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::size_t end = i + 1 < layers_.size() ? offsets_[i + 1] : param_count_;
    auto slice = params.subspan(offsets_[i], end - offsets_[i]);
    Tensor y = Tensor::zeros(shapes_[i + 1]);
    std::visit([&](const auto& l) { nn::forward(l, cur, slice, y); }, layers_[i]);
    cur = std::move(y);
  }
  return cur;
}

Tensor Sequential::backward(const std::vector<Tensor>& acts, const Tensor& grad_out,
                            std::span<const double> params, std::span<double> grads) const {
  require(acts.size() == layers_.size() + 1, ErrorCode::ShapeMismatch, "activation count mismatch");
  require(grad_out.shape == output_shape(), ErrorCode::ShapeMismatch, "output gradient shape mismatch");
  require(grads.size() == param_count_, ErrorCode::ShapeMismatch, "gradient vector size mismatch");
  Tensor g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const std::size_t end = i + 1 < layers_.size() ? offsets_[i + 1] : param_count_;
    auto p = params.subspan(offsets_[i], end - offsets_[i]);
    auto gp = grads.subspan(offsets_[i], end - offsets_[i]);
    Tensor gx = Tensor::zeros(shapes_[i]);
    std::visit([&](const auto& l) { nn::backward(l, acts[i], acts[i + 1], g, p, gp, gx); }, layers_[i]);
    g = std::move(gx);
  }
  return g;
}

std::vector<ParamSlot> Sequential::param_slots() const {
  std::vector<ParamSlot> slots;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    std::size_t offset = offsets_[i];
    const auto dims = std::visit([&](const auto& l) { return param_dims(l, shapes_[i]); }, layers_[i]);
    for (const auto& [suffix, d] : dims) {
      std::size_t count = 1;
      for (int v : d) count *= static_cast<std::size_t>(v);
      slots.push_back({name_ + "." + std::to_string(i) + "." + suffix, d, offset, count});
      offset += count;
    }
  }
  return slots;
}

}  // namespace egmsynth::nn
