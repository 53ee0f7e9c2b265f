#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "advscore/neural.hpp"

using namespace advscore;

namespace {

double dot_output(const DenseNet& net, const std::vector<double>& x, const std::vector<double>& c) {
  const auto y = forward(net, x);
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += c[i] * y[i];
  return s;
}

bool close_rel(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) + 1e-9;
}

struct Shape {
  std::vector<std::size_t> dims;
  std::vector<Activation> acts;
};

// The shapes the policy is built from (cloud sizes, bank sizes).
std::vector<Shape> policy_shapes() {
  using A = Activation;
  return {
      {{5, 32}, {A::Tanh}},
      {{4, 32}, {A::Tanh}},
      {{32, 64, 64, 3}, {A::Tanh, A::Tanh, A::Softmax}},
      {{32, 64, 64, 4}, {A::Tanh, A::Tanh, A::Softmax}},
      {{35, 64, 64, 3}, {A::Tanh, A::Tanh, A::Identity}},
      {{36, 64, 64, 5}, {A::Tanh, A::Tanh, A::Identity}},
      {{32, 64, 64, 1}, {A::Tanh, A::Tanh, A::Identity}},
  };
}

}  // namespace

TEST(Neural, IdentityLayerPassesInput) {
  DenseNet net({3, 3}, {Activation::Identity});
  auto& w = net.layers()[0].weight;
  w = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  const std::vector<double> x = {0.3, -2.0, 7.5};
  EXPECT_EQ(forward(net, x), x);
}

TEST(Neural, SoftmaxOfZerosIsUniform) {
  DenseNet net({2, 6}, {Activation::Softmax});
  for (double p : forward(net, std::vector<double>{1.0, -1.0})) EXPECT_DOUBLE_EQ(p, 1.0 / 6.0);
}

TEST(Neural, FixedTanhNetMatchesScalarOracle) {
  DenseNet net({2, 3, 1}, {Activation::Tanh, Activation::Tanh});
  net.layers()[0].weight = {0.1, -0.2, 0.3, 0.4, -0.5, 0.6};
  net.layers()[0].bias = {0.01, 0.02, -0.03};
  net.layers()[1].weight = {0.7, -0.8, 0.9};
  net.layers()[1].bias = {0.05};
  const double x0 = 0.5, x1 = -1.5;
  const double h0 = std::tanh(0.1 * x0 - 0.2 * x1 + 0.01);
  const double h1 = std::tanh(0.3 * x0 + 0.4 * x1 + 0.02);
  const double h2 = std::tanh(-0.5 * x0 + 0.6 * x1 - 0.03);
  const double want = std::tanh(0.7 * h0 - 0.8 * h1 + 0.9 * h2 + 0.05);
  EXPECT_NEAR(forward(net, std::vector<double>{x0, x1})[0], want, 1e-15);
}

TEST(Neural, ShapeErrors) {
  DenseNet net({2, 3}, {Activation::Tanh});
  EXPECT_THROW(forward(net, std::vector<double>{1.0}), UsageError);
  EXPECT_THROW(DenseNet({2, 3, 1}, {Activation::Softmax, Activation::Tanh}), UsageError);
  ForwardCache cache;
  forward(net, std::vector<double>{1.0, 2.0}, &cache);
  EXPECT_THROW(backward(net, cache, std::vector<double>{1.0}), UsageError);
  DenseNet deeper({2, 3, 3}, {Activation::Tanh, Activation::Tanh});
  EXPECT_THROW(backward(deeper, cache, std::vector<double>{1.0, 1.0, 1.0}), UsageError);
}

TEST(Neural, ZeroOutputGradGivesZeroGradients) {
  Rng rng(1);
  const auto net = DenseNet::random({4, 5, 2}, {Activation::Tanh, Activation::Identity}, rng);
  ForwardCache cache;
  forward(net, std::vector<double>{1, 2, 3, 4}, &cache);
  GradBuffer g = net.make_grad_buffer();
  const auto gx = backward(net, cache, std::vector<double>{0.0, 0.0}, g);
  EXPECT_EQ(g.squared_norm(), 0.0);
  for (double v : gx) EXPECT_EQ(v, 0.0);
}

TEST(Neural, LinearNetWeightGradIsInput) {
  Rng rng(2);
  const auto net = DenseNet::random({3, 1}, {Activation::Identity}, rng);
  const std::vector<double> x = {0.5, -1.0, 2.0};
  ForwardCache cache;
  forward(net, x, &cache);
  const auto g = backward(net, cache, std::vector<double>{1.0});
  EXPECT_EQ(g.weight[0], x);
  EXPECT_EQ(g.bias[0], std::vector<double>{1.0});
}

TEST(Neural, GradientsMatchFiniteDifferences) {
  Rng rng(3);
  const auto shapes = policy_shapes();
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double h = 1e-5;
  for (int inst = 0; inst < 100; ++inst) {
    const auto& sh = shapes[static_cast<std::size_t>(inst) % shapes.size()];
    auto net = DenseNet::random(sh.dims, sh.acts, rng);
    std::vector<double> x(sh.dims.front()), c(sh.dims.back());
    for (double& v : x) v = u(rng);
    for (double& v : c) v = u(rng);
    ForwardCache cache;
    const auto y = forward(net, x, &cache);
    GradBuffer g = net.make_grad_buffer();
    const auto gx = backward(net, cache, c, g);

    // Every input coordinate, and a random sample of 150 parameters per net.
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fd = (dot_output(net, xp, c) - dot_output(net, xm, c)) / (2 * h);
      ASSERT_TRUE(close_rel(gx[i], fd, 1e-5)) << "input " << i << ": " << gx[i] << " vs " << fd;
    }
    for (int s = 0; s < 150; ++s) {
      const std::size_t l = rng() % net.layers().size();
      const bool bias = rng() % 4 == 0;
      auto& params = bias ? net.layers()[l].bias : net.layers()[l].weight;
      const std::size_t j = rng() % params.size();
      const double saved = params[j];
      params[j] = saved + h;
      const double fp = dot_output(net, x, c);
      params[j] = saved - h;
      const double fm = dot_output(net, x, c);
      params[j] = saved;
      const double fd = (fp - fm) / (2 * h);
      const double an = bias ? g.bias[l][j] : g.weight[l][j];
      ASSERT_TRUE(close_rel(an, fd, 1e-5)) << "layer " << l << (bias ? " bias " : " weight ") << j << ": " << an
                                           << " vs " << fd;
    }
    if (sh.acts.back() == Activation::Softmax) {
      double sum = 0;
      for (double p : y) {
        ASSERT_GT(p, 0.0);
        sum += p;
      }
      ASSERT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(Neural, ForwardBackwardDeterministic) {
  Rng a(4), b(4);
  const auto na = DenseNet::random({5, 8, 3}, {Activation::Relu, Activation::Softmax}, a);
  const auto nb = DenseNet::random({5, 8, 3}, {Activation::Relu, Activation::Softmax}, b);
  ASSERT_EQ(na, nb);
  const std::vector<double> x = {0.1, 0.2, -0.3, 0.4, 0.5};
  ForwardCache ca, cb;
  EXPECT_EQ(forward(na, x, &ca), forward(nb, x, &cb));
  const std::vector<double> g = {1.0, -2.0, 0.5};
  EXPECT_EQ(backward(na, ca, g).weight, backward(nb, cb, g).weight);
}

TEST(Neural, AdamZeroGradientLeavesParameters) {
  Rng rng(5);
  auto net = DenseNet::random({3, 4, 2}, {Activation::Tanh, Activation::Identity}, rng);
  const auto before = net;
  auto state = AdamState::for_net(net);
  for (int i = 0; i < 3; ++i) adam_step(net, net.make_grad_buffer(), 1e-3, state);
  EXPECT_EQ(net, before);
}

TEST(Neural, AdamMatchesScalarRecurrence) {
  DenseNet net({1, 1}, {Activation::Identity});
  net.layers()[0].weight = {0.5};
  auto state = AdamState::for_net(net);
  const double lr = 0.01;
  const double grads[] = {0.3, -0.1};
  // Independent recurrence.
  double p = 0.5, m = 0, v = 0;
  for (int t = 1; t <= 2; ++t) {
    const double g = grads[t - 1];
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    p -= lr * mh / (std::sqrt(vh) + 1e-8);
    GradBuffer gb = net.make_grad_buffer();
    gb.weight[0][0] = g;
    const double before = net.layers()[0].weight[0];
    adam_step(net, gb, lr, state);
    if (t == 1) {
      EXPECT_LT(net.layers()[0].weight[0], before);
    }
    EXPECT_NEAR(net.layers()[0].weight[0], p, 1e-15);
  }
}

TEST(Neural, GaussianLogprob) {
  const double sigma = 0.7;
  EXPECT_NEAR(gaussian_logprob(1.3, 1.3, sigma), -std::log(sigma * std::sqrt(2 * std::numbers::pi)), 1e-15);
  EXPECT_NEAR(gaussian_logprob(2.0, 1.0, 1.0), -std::log(std::sqrt(2 * std::numbers::pi)) - 0.5, 1e-15);
  EXPECT_THROW(gaussian_logprob(0.0, 0.0, 0.0), UsageError);
  Rng rng(6);
  EXPECT_THROW(gaussian_sample(0.0, -1.0, rng), UsageError);
}

TEST(Neural, GaussianSampleMean) {
  Rng rng(7);
  const int n = 100000;
  const double mu = -0.4, sigma = 0.6;
  double sum = 0;
  for (int i = 0; i < n; ++i) sum += gaussian_sample(mu, sigma, rng);
  EXPECT_NEAR(sum / n, mu, 3 * sigma / std::sqrt(double(n)));
}
