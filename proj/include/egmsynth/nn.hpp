#pragma once

// Minimal layer library for the VAE and the reconstruction network. Layers are
// stateless: parameters live in one flat vector owned by the caller, and
// activations are returned to the caller so that independent samples can run
// forward/backward concurrently over shared, read-only parameters.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "egmsynth/kernels.hpp"

namespace egmsynth::nn {

struct Shape {
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
  std::string str() const;
  friend bool operator==(const Shape&, const Shape&) = default;
};

struct Tensor {
  Shape shape;
  std::vector<double> data;

  static Tensor zeros(Shape s) { return {s, std::vector<double>(s.size(), 0.0)}; }
};

struct ParamSlot {
  std::string name;
  std::vector<int> dims;
  std::size_t offset = 0;
  std::size_t count = 0;
};

using Rng = std::mt19937_64;

/// Stride-1 convolution with zero padding.
struct Conv2d {
  int in_c, out_c, kernel_h, kernel_w, pad_h, pad_w;
  kernels::ConvGeometry geometry() const { return {kernel_h, kernel_w, 1, 1, pad_h, pad_w}; }
};

/// Learned upsampling; weight layout (in_c, out_c, kh, kw).
struct ConvTranspose2d {
  int in_c, out_c, kernel_h, kernel_w, stride_h, stride_w, pad_h, pad_w;
  kernels::ConvGeometry geometry() const {
    return {kernel_h, kernel_w, stride_h, stride_w, pad_h, pad_w};
  }
};

/// Non-overlapping max pooling; input dims must be divisible by the window.
struct MaxPool2d {
  int pool_h, pool_w;
};

/// Fixed [1 2 1]/4 binomial low-pass per channel (the decoder's anti-aliasing filter).
struct Smooth2d {
  bool along_h = true;
  bool along_w = true;
};

/// Fully connected map from the flattened input onto `out` (any shape).
struct Dense {
  Shape out;
};

struct LeakyRelu {
  double slope = 0.2;
};

struct Tanh {};

using Layer = std::variant<Conv2d, ConvTranspose2d, MaxPool2d, Smooth2d, Dense, LeakyRelu, Tanh>;

class Sequential {
 public:
  Sequential() = default;
  Sequential(Shape input, std::string name);

  /// Throws ShapeMismatch when the layer cannot consume the current output shape.
  void add(Layer layer);

  Shape input_shape() const { return input_; }
  Shape output_shape() const { return shapes_.back(); }
  std::size_t param_count() const { return param_count_; }
  const std::vector<Layer>& layers() const { return layers_; }
  const std::vector<Shape>& shapes() const { return shapes_; }

  void init(std::span<double> params, Rng& rng) const;

  /// Activations of every layer, front() == x and back() == output.
  std::vector<Tensor> forward(const Tensor& x, std::span<const double> params) const;
  Tensor infer(const Tensor& x, std::span<const double> params) const;
  /// Accumulates parameter gradients into `grads`; returns the input gradient.
  Tensor backward(const std::vector<Tensor>& activations, const Tensor& grad_out,
                  std::span<const double> params, std::span<double> grads) const;

  std::vector<ParamSlot> param_slots() const;

 private:
  Shape input_;
  std::string name_;
  std::vector<Layer> layers_;
  std::vector<Shape> shapes_;  // shapes_[i] is the input of layer i; back() is the output
  std::vector<std::size_t> offsets_;
  std::size_t param_count_ = 0;
};

/// Rounds every value to the nearest float32 so parameters survive a float32 checkpoint exactly.
void round_to_float(std::span<double> values);

}  // namespace egmsynth::nn
