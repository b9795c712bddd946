// Finite-difference checks of every differentiable op, in double precision.

#include <functional>
#include <random>

#include "doctest.h"
#include "sim2seg/nn/autograd.hpp"
#include "sim2seg/nn/layers.hpp"
#include "sim2seg/nn/optim.hpp"

using namespace sim2seg::nn;
using T = Tensor<double>;
using V = Var<double>;

namespace {

T random_tensor(int n, int c, int h, int w, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  T t(n, c, h, w);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

/// Largest relative difference between the analytic gradient of `loss` with
/// respect to each input and a central difference.
double gradcheck(const std::vector<V>& inputs, const std::function<V()>& loss, double h = 1e-6) {
  for (const auto& in : inputs) in->zero_grad();
  backward(loss());
  double worst = 0;
  for (const auto& in : inputs) {
    const auto analytic = in->has_grad() ? in->grad.values() : T::Array::Zero(in->value.size()).eval();
    for (Eigen::Index i = 0; i < in->value.size(); ++i) {
      const double saved = in->value.values()[i];
      in->value.values()[i] = saved + h;
      const double up = item(loss());
      in->value.values()[i] = saved - h;
      const double down = item(loss());
      in->value.values()[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double err = std::abs(numeric - analytic[i]) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

/// Projects an arbitrary tensor to a scalar with fixed random weights, so
/// every output element gets a distinct upstream gradient.
V project(const V& x, std::uint64_t seed = 42) {
  std::mt19937_64 rng(seed);
  const auto shape = x->value.shape();
  const V w = constant(random_tensor(shape[0], shape[1], shape[2], shape[3], rng));
  // mean((x + w)^2) has gradient 2 (x + w) / n.
  return mse_to(add(x, w), 0.0);
}

constexpr double kTol = 1e-6;

}  // namespace

TEST_CASE("conv2d gradients") {
  std::mt19937_64 rng(1);
  for (auto [stride, pad] : {std::pair{1, 1}, std::pair{2, 1}, std::pair{1, 0}, std::pair{2, 0}}) {
    const V x = parameter(random_tensor(2, 3, 6, 6, rng));
    const V w = parameter(random_tensor(4, 3, 3, 3, rng));
    const V b = parameter(random_tensor(1, 4, 1, 1, rng));
    CHECK(gradcheck({x, w, b}, [&] { return project(conv2d(x, w, b, stride, pad)); }) < kTol);
  }
  const V x = parameter(random_tensor(1, 2, 5, 5, rng));
  const V w = parameter(random_tensor(3, 2, 4, 4, rng));
  CHECK(gradcheck({x, w}, [&] { return project(conv2d(x, w, V{}, 2, 1)); }) < kTol);
}

TEST_CASE("conv2d forward on a hand example") {
  // 3x3 input of ones, 2x2 kernel of ones, no padding: every output is 4.
  const V x = constant(T::constant({1, 1, 3, 3}, 1.0));
  const V w = constant(T::constant({1, 1, 2, 2}, 1.0));
  const V b = constant(T::constant({1, 1, 1, 1}, 0.5));
  const auto y = conv2d(x, w, b, 1, 0);
  REQUIRE(y->value.shape() == T::Shape{1, 1, 2, 2});
  CHECK((y->value.values() == 4.5).all());
}

TEST_CASE("conv_transpose2d gradients and output size") {
  std::mt19937_64 rng(2);
  const V x = parameter(random_tensor(2, 3, 4, 4, rng));
  const V w = parameter(random_tensor(3, 2, 3, 3, rng));
  const V b = parameter(random_tensor(1, 2, 1, 1, rng));
  const auto y = conv_transpose2d(x, w, b, 2, 1, 1);
  CHECK(y->value.shape() == T::Shape{2, 2, 8, 8});
  CHECK(gradcheck({x, w, b}, [&] { return project(conv_transpose2d(x, w, b, 2, 1, 1)); }) < kTol);
  const V w4 = parameter(random_tensor(3, 2, 4, 4, rng));
  CHECK(conv_transpose2d(x, w4, V{}, 2, 1, 0)->value.h() == 8);
  CHECK(gradcheck({x, w4}, [&] { return project(conv_transpose2d(x, w4, V{}, 2, 1, 0)); }) < kTol);
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d") {
  // <conv(x), y> == <x, convT(y)> for the same weights.
  std::mt19937_64 rng(8);
  const T x = random_tensor(1, 2, 8, 8, rng);
  const T wt = random_tensor(3, 2, 4, 4, rng);  // conv: [Co, Ci, k, k]
  const auto cx = conv2d(constant(x), constant(wt), V{}, 2, 1)->value;
  const T y = random_tensor(1, 3, cx.h(), cx.w(), rng);
  const auto ty = conv_transpose2d(constant(y), constant(wt), V{}, 2, 1, 0)->value;
  const double lhs = (cx.values() * y.values()).sum();
  const double rhs = (x.values() * ty.values()).sum();
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("padding, normalization and pointwise gradients") {
  std::mt19937_64 rng(3);
  const V x = parameter(random_tensor(2, 3, 5, 4, rng));
  CHECK(gradcheck({x}, [&] { return project(reflect_pad(x, 2)); }) < kTol);
  CHECK(gradcheck({x}, [&] { return project(instance_norm(x, 1e-5)); }) < 1e-5);
  CHECK(gradcheck({x}, [&] { return project(tanh(x)); }) < kTol);
  CHECK(gradcheck({x}, [&] { return project(scale(x, -2.5)); }) < kTol);
  CHECK(gradcheck({x}, [&] { return project(add(x, x)); }) < kTol);
  // Keep inputs away from the kink.
  const V pos = parameter(random_tensor(1, 2, 3, 3, rng, 0.1, 1.0));
  const V neg = parameter(random_tensor(1, 2, 3, 3, rng, -1.0, -0.1));
  CHECK(gradcheck({pos, neg}, [&] { return project(add(leaky_relu(pos, 0.2), leaky_relu(neg, 0.2))); }) < kTol);
  CHECK(gradcheck({pos, neg}, [&] { return project(add(relu(pos), relu(neg))); }) < kTol);
  const V y = parameter(random_tensor(2, 1, 5, 4, rng));
  CHECK(gradcheck({x, y}, [&] { return project(concat_channels(x, y)); }) < kTol);
}

TEST_CASE("reflect padding mirrors without repeating the edge") {
  T t(1, 1, 3, 3);
  t.values() << 1, 2, 3, 1, 2, 3, 1, 2, 3;
  const auto p = reflect_pad(constant(t), 2)->value;
  REQUIRE(p.w() == 7);
  const double want[7] = {3, 2, 1, 2, 3, 2, 1};
  for (int i = 0; i < 7; ++i) CHECK(p.at(0, 0, 2, i) == want[i]);
}

TEST_CASE("instance norm gives zero mean and unit variance per plane") {
  std::mt19937_64 rng(4);
  const auto y = instance_norm(constant(random_tensor(2, 3, 6, 6, rng, -5, 9)), 0.0)->value;
  for (int n = 0; n < 2; ++n) {
    for (int c = 0; c < 3; ++c) {
      double m = 0, v = 0;
      for (int i = 0; i < 36; ++i) m += y.at(n, c, i / 6, i % 6);
      m /= 36;
      for (int i = 0; i < 36; ++i) v += std::pow(y.at(n, c, i / 6, i % 6) - m, 2);
      CHECK(m == doctest::Approx(0).epsilon(1e-12));
      CHECK(v / 36 == doctest::Approx(1).epsilon(1e-9));
    }
  }
}

TEST_CASE("dropout") {
  std::mt19937_64 rng(5);
  const V x = parameter(random_tensor(1, 4, 8, 8, rng));
  SUBCASE("inactive is the identity") {
    std::mt19937_64 r(1);
    CHECK((dropout(x, 0.5, false, r)->value.values() == x->value.values()).all());
  }
  SUBCASE("active keeps or rescales each element") {
    std::mt19937_64 r(1);
    const auto y = dropout(x, 0.5, true, r)->value.values();
    int zeros = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (y[i] == 0) ++zeros;
      else CHECK(y[i] == doctest::Approx(2 * x->value.values()[i]));
    }
    CHECK(zeros > 0);
    CHECK(zeros < y.size());
  }
  SUBCASE("gradient through a fixed mask") {
    CHECK(gradcheck({x}, [&] {
            std::mt19937_64 r(9);
            return project(dropout(x, 0.3, true, r));
          }) < kTol);
  }
}

TEST_CASE("loss gradients") {
  std::mt19937_64 rng(6);
  const V x = parameter(random_tensor(2, 1, 4, 4, rng));
  const T other = random_tensor(2, 1, 4, 4, rng);
  CHECK(gradcheck({x}, [&] { return mse_to(x, 1.0); }) < kTol);
  CHECK(gradcheck({x}, [&] { return bce_with_logits_to(x, 1.0); }) < kTol);
  CHECK(gradcheck({x}, [&] { return bce_with_logits_to(x, 0.0); }) < kTol);
  CHECK(gradcheck({x}, [&] { return l1(x, constant(other)); }) < kTol);
  CHECK(gradcheck({x}, [&] {
          return weighted_sum<double>({{0.5, mse_to(x, 0.0)}, {3.0, l1(x, constant(other))}});
        }) < kTol);
}

TEST_CASE("loss values") {
  const V half = constant(T::constant({1, 1, 4, 4}, 0.5));
  CHECK(item(mse_to(half, 1.0)) == doctest::Approx(0.25));
  CHECK(item(bce_with_logits_to(constant(T::constant({1, 1, 4, 4}, 0.0)), 1.0)) == doctest::Approx(std::log(2.0)));
  // Large logits stay finite.
  CHECK(std::isfinite(item(bce_with_logits_to(constant(T::constant({1, 1, 2, 2}, 800.0)), 0.0))));
  CHECK(item(bce_with_logits_to(constant(T::constant({1, 1, 2, 2}, 800.0)), 0.0)) == doctest::Approx(800));
}

TEST_CASE("no-grad scopes record nothing") {
  std::mt19937_64 rng(7);
  const V x = parameter(random_tensor(1, 1, 3, 3, rng));
  {
    NoGradGuard guard;
    const auto y = tanh(x);
    CHECK_FALSE(y->requires_grad);
    CHECK(y->parents.empty());
  }
  CHECK(tanh(x)->requires_grad);
  CHECK(grad_enabled());
}

TEST_CASE("shared subgraphs accumulate gradients") {
  const V x = parameter(T::constant({1, 1, 1, 1}, 0.3));
  const auto t = tanh(x);
  // d/dx [tanh(x) + 2 tanh(x)] = 3 (1 - tanh^2 x)
  const auto y = weighted_sum<double>({{1.0, mse_to(scale(t, 1.0), 0.0)}, {2.0, mse_to(t, 0.0)}});
  backward(y);
  const double th = std::tanh(0.3);
  CHECK(x->grad.values()[0] == doctest::Approx(3 * 2 * th * (1 - th * th)));
}

TEST_CASE("generator and discriminator gradients") {
  std::mt19937_64 rng(10);
  SUBCASE("resnet generator") {
    ResnetGenerator<double> g(3, 3, 2, 1, rng);
    const V x = parameter(random_tensor(1, 3, 8, 8, rng));
    std::vector<V> params{x};
    for (const auto& p : g.parameters()) params.push_back(p.var);
    CHECK(g(x)->value.shape() == x->value.shape());
    CHECK(gradcheck(params, [&] { return project(g(x)); }) < 1e-5);
  }
  SUBCASE("patch discriminator") {
    PatchDiscriminator<double> d(2, 2, 3, rng);
    const V x = parameter(random_tensor(1, 2, 32, 32, rng));
    std::vector<V> params;
    for (const auto& p : d.parameters()) params.push_back(p.var);
    CHECK(gradcheck(params, [&] { return project(d(x)); }) < 1e-5);
  }
  SUBCASE("u-net generator") {
    UNetGenerator<double> u(1, 1, 2, 3, 0.0, rng);
    const V x = parameter(random_tensor(1, 1, 8, 8, rng));
    std::vector<V> params{x};
    for (const auto& p : u.parameters()) params.push_back(p.var);
    ForwardOptions opt;
    CHECK(u(x, opt)->value.shape() == x->value.shape());
    CHECK(gradcheck(params, [&] { return project(u(x, opt)); }) < 1e-5);
  }
}

TEST_CASE("adam") {
  SUBCASE("first step moves each parameter by about the learning rate") {
    const V p = parameter(T::constant({1, 1, 1, 2}, 1.0));
    Adam<double> opt({{"p", p}}, 0.5);
    p->grad_values() << 3.0, -0.01;
    opt.step(0.1);
    CHECK(p->value.values()[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(p->value.values()[1] == doctest::Approx(1.1).epsilon(1e-4));
    CHECK(opt.steps() == 1);
  }
  SUBCASE("minimizes a quadratic") {
    const V p = parameter(T::constant({1, 1, 1, 1}, 5.0));
    Adam<double> opt({{"p", p}}, 0.9);
    for (int i = 0; i < 2000; ++i) {
      opt.zero_grad();
      backward(mse_to(p, 2.0));
      opt.step(0.05);
    }
    CHECK(p->value.values()[0] == doctest::Approx(2.0).epsilon(1e-3));
  }
}

TEST_CASE("linear learning-rate decay over the second half") {
  CHECK(linear_decay_lr(1.0, 0, 100) == 1.0);
  CHECK(linear_decay_lr(1.0, 49, 100) == 1.0);
  double prev = 1.0;
  for (int s = 50; s < 100; ++s) {
    const double lr = linear_decay_lr(1.0, s, 100);
    CHECK(lr < prev);
    CHECK(lr > 0);
    prev = lr;
  }
  CHECK(linear_decay_lr(1.0, 99, 100) < 0.05);
  CHECK(linear_decay_lr(1.0, 100, 100) == 0.0);
}

TEST_CASE("finiteness check") {
  const V p = parameter(T::constant({1, 1, 1, 2}, 1.0));
  ParamList<double> params{{"p", p}};
  CHECK(all_finite(params));
  p->value.values()[1] = std::nan("");
  CHECK_FALSE(all_finite(params));
}
