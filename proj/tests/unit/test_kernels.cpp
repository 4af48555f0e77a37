#include <doctest.h>

#include <random>

#include "egmsynth/kernels.hpp"
#include "egmsynth/nn.hpp"
#include "oracles.hpp"

using namespace egmsynth;
using kernels::ConvGeometry;

namespace {

std::vector<double> randv(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("conv2d matches the serial reference") {
  std::mt19937_64 rng(1);
  for (const ConvGeometry g : {ConvGeometry{5, 5, 1, 1, 2, 2}, ConvGeometry{3, 1, 1, 1, 1, 0}, ConvGeometry{3, 3, 2, 2, 1, 1}}) {
    const int ic = 3, oc = 4, h = 12, w = 10;
    const auto x = randv(ic * h * w, rng), wt = randv(oc * ic * g.kernel_h * g.kernel_w, rng), b = randv(oc, rng);
    const std::size_t ny = static_cast<std::size_t>(oc) * g.out_h(h) * g.out_w(w);
    std::vector<double> y1(ny), y2(ny);
    kernels::conv2d_forward(x.data(), ic, h, w, wt.data(), b.data(), oc, g, y1.data());
    kernels::reference::conv2d_forward(x.data(), ic, h, w, wt.data(), b.data(), oc, g, y2.data());
    CHECK(max_diff(y1, y2) < 1e-12);

    const auto gy = randv(ny, rng);
    std::vector<double> gx1(x.size()), gx2(x.size()), gw1(wt.size()), gw2(wt.size()), gb1(oc), gb2(oc);
    kernels::conv2d_backward(x.data(), ic, h, w, wt.data(), oc, g, gy.data(), gx1.data(), gw1.data(), gb1.data());
    kernels::reference::conv2d_backward(x.data(), ic, h, w, wt.data(), oc, g, gy.data(), gx2.data(), gw2.data(), gb2.data());
    CHECK(max_diff(gx1, gx2) < 1e-12);
    CHECK(max_diff(gw1, gw2) < 1e-12);
    CHECK(max_diff(gb1, gb2) < 1e-12);
  }
}

TEST_CASE("transposed conv matches the serial reference") {
  std::mt19937_64 rng(2);
  for (const ConvGeometry g : {ConvGeometry{4, 4, 2, 2, 1, 1}, ConvGeometry{4, 1, 2, 1, 1, 0}}) {
    const int ic = 3, oc = 2, h = 5, w = 4;
    const auto x = randv(ic * h * w, rng), wt = randv(ic * oc * g.kernel_h * g.kernel_w, rng), b = randv(oc, rng);
    const std::size_t ny = static_cast<std::size_t>(oc) * g.transposed_h(h) * g.transposed_w(w);
    std::vector<double> y1(ny), y2(ny);
    kernels::conv_transpose2d_forward(x.data(), ic, h, w, wt.data(), b.data(), oc, g, y1.data());
    kernels::reference::conv_transpose2d_forward(x.data(), ic, h, w, wt.data(), b.data(), oc, g, y2.data());
    CHECK(max_diff(y1, y2) < 1e-12);

    const auto gy = randv(ny, rng);
    std::vector<double> gx1(x.size()), gx2(x.size()), gw1(wt.size()), gw2(wt.size()), gb1(oc), gb2(oc);
    kernels::conv_transpose2d_backward(x.data(), ic, h, w, wt.data(), oc, g, gy.data(), gx1.data(), gw1.data(), gb1.data());
    kernels::reference::conv_transpose2d_backward(x.data(), ic, h, w, wt.data(), oc, g, gy.data(), gx2.data(), gw2.data(), gb2.data());
    CHECK(max_diff(gx1, gx2) < 1e-12);
    CHECK(max_diff(gw1, gw2) < 1e-12);
    CHECK(max_diff(gb1, gb2) < 1e-12);
  }
}

TEST_CASE("pairwise RMSE and RBF gram match the references") {
  std::mt19937_64 rng(3);
  std::vector<EgmTensor> a, b;
  for (int i = 0; i < 6; ++i) a.push_back({oracle::random_matrix(9, 4, rng), 1.0, RhythmClass::Sinus});
  for (int i = 0; i < 4; ++i) b.push_back({oracle::random_matrix(9, 4, rng), 1.0, RhythmClass::Sinus});
  CHECK((kernels::pairwise_rmse(a, b) - kernels::reference::pairwise_rmse(a, b)).cwiseAbs().maxCoeff() < 1e-14);
  const Matrix x = oracle::random_matrix(7, 3, rng), y = oracle::random_matrix(5, 3, rng);
  CHECK((kernels::rbf_gram(x, y, 0.8) - kernels::reference::rbf_gram(x, y, 0.8)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("sequential backward matches finite differences") {
  nn::Sequential net({2, 8, 6}, "t");
  net.add(nn::Conv2d{2, 3, 3, 3, 1, 1});
  net.add(nn::LeakyRelu{0.2});
  net.add(nn::MaxPool2d{2, 2});
  net.add(nn::ConvTranspose2d{3, 2, 4, 4, 2, 2, 1, 1});
  net.add(nn::Smooth2d{});
  net.add(nn::Dense{{3, 1, 1}});
  net.add(nn::Tanh{});
  CHECK(net.output_shape() == nn::Shape{3, 1, 1});

  std::vector<double> params(net.param_count());
  nn::Rng rng(4);
  net.init(params, rng);
  std::mt19937_64 r2(5);
  nn::Tensor x{net.input_shape(), randv(net.input_shape().size(), r2)};
  const std::vector<double> wout{0.3, -1.1, 0.7};
  auto objective = [&](const std::vector<double>& p, const nn::Tensor& in) {
    const auto y = net.infer(in, p);
    double s = 0.0;
    for (int i = 0; i < 3; ++i) s += wout[i] * y.data[i];
    return s;
  };
  const auto acts = net.forward(x, params);
  std::vector<double> grad(params.size(), 0.0);
  const auto gx = net.backward(acts, {net.output_shape(), wout}, params, grad);

  const double h = 1e-6;
  for (std::size_t i = 0; i < params.size(); i += 7) {
    auto p = params, m = params;
    p[i] += h;
    m[i] -= h;
    const double fd = (objective(p, x) - objective(m, x)) / (2 * h);
    CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-5).scale(1e-3));
  }
  for (std::size_t i = 0; i < x.data.size(); i += 5) {
    auto p = x, m = x;
    p.data[i] += h;
    m.data[i] -= h;
    const double fd = (objective(params, p) - objective(params, m)) / (2 * h);
    CHECK(gx.data[i] == doctest::Approx(fd).epsilon(1e-5).scale(1e-3));
  }
}

TEST_CASE("layers that cannot consume the shape are rejected") {
  nn::Sequential net({1, 5, 4}, "bad");
  CHECK_THROWS(net.add(nn::MaxPool2d{2, 2}));
  CHECK_THROWS(net.add(nn::Conv2d{2, 1, 3, 3, 1, 1}));
}
