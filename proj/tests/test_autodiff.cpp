#include <cmath>
#include <complex>

#include <gtest/gtest.h>

#include "cds/autodiff.hpp"
#include "cds/gradcheck.hpp"
#include "cds/layers.hpp"

using namespace cds;
using cd = std::complex<double>;
using T = ComplexTensor<double>;

namespace {

EconvLayer<double> scalar_econv(cd w) {
  T weight(Shape{1, 1, 1, 1});
  weight.set(0, w);
  return EconvLayer<double>(ConvSpec{1, 1, 1, 1, 0, 1}, weight);
}

T pixel(cd z) {
  T t(Shape{1, 1, 1, 1});
  t.set(0, z);
  return t;
}

double projected(const T& y, const T& r) { return (y.re() * r.re()).sum() + (y.im() * r.im()).sum(); }

}  // namespace

TEST(Backward, RealPartOfProduct) {
  auto layer = scalar_econv({0.4, -0.7});
  Tape<double> tape;
  ForwardContext<double> ctx{&tape};
  auto y = layer.forward(pixel({1, 0}), ctx);
  T seed(y.shape());
  seed.re()[0] = 1;
  tape.backward(seed);
  EXPECT_NEAR(layer.weight().grad.re()[0], 1, 1e-15);
  EXPECT_NEAR(layer.weight().grad.im()[0], 0, 1e-15);
}

TEST(Backward, SquaredModulus) {
  const cd w(0.4, -0.7);
  auto layer = scalar_econv(w);
  Tape<double> tape;
  ForwardContext<double> ctx{&tape};
  auto y = layer.forward(pixel({1, 0}), ctx);
  // d|y|^2 = 2 y_re dy_re + 2 y_im dy_im
  T seed(y.shape());
  seed.set(0, 2.0 * y[0]);
  tape.backward(seed);
  EXPECT_NEAR(layer.weight().grad.re()[0], 2 * w.real(), 1e-15);
  EXPECT_NEAR(layer.weight().grad.im()[0], 2 * w.imag(), 1e-15);
}

TEST(Backward, EmptyTapeThrows) {
  Tape<double> tape;
  EXPECT_THROW(tape.backward(), StateError);
}

TEST(Backward, InputCotangent) {
  auto layer = scalar_econv({0, 1});
  Tape<double> tape;
  ForwardContext<double> ctx{&tape};
  layer.forward(pixel({2, 3}), ctx);
  T seed(Shape{1, 1, 1, 1});
  seed.re()[0] = 1;
  auto gx = tape.backward(seed);
  // y = i z, re(y) = -im(z)
  EXPECT_NEAR(gx.re()[0], 0, 1e-15);
  EXPECT_NEAR(gx.im()[0], -1, 1e-15);
}

TEST(Backward, CotangentsAreLinearInSeed) {
  Rng rng(4);
  EconvLayer<double> layer(ConvSpec{2, 3, 3, 1, 1, 1}, rng);
  auto x = make_tensor<double>({2, 2, 5, 5}, Fill::gaussian(rng));
  auto run = [&](const T& seed) {
    layer.zero_grad();
    Tape<double> tape;
    ForwardContext<double> ctx{&tape};
    layer.forward(x, ctx);
    auto gx = tape.backward(seed);
    return std::make_pair(gx, layer.weight().grad);
  };
  auto a = make_tensor<double>({2, 3, 5, 5}, Fill::gaussian(rng));
  auto b = make_tensor<double>({2, 3, 5, 5}, Fill::gaussian(rng));
  auto [ga, wa] = run(a);
  auto [gb, wb] = run(b);
  auto [gab, wab] = run(a + b);
  EXPECT_LE(max_rel_diff(gab, ga + gb), 1e-13);
  EXPECT_LE(max_rel_diff(wab, wa + wb), 1e-13);
}

TEST(Backward, GradientsAccumulateUntilZeroed) {
  auto layer = scalar_econv({1, 0});
  for (int k = 0; k < 2; ++k) {
    Tape<double> tape;
    ForwardContext<double> ctx{&tape};
    layer.forward(pixel({1, 0}), ctx);
    T seed(Shape{1, 1, 1, 1});
    seed.re()[0] = 1;
    tape.backward(seed);
  }
  EXPECT_NEAR(layer.weight().grad.re()[0], 2, 1e-15);
  layer.zero_grad();
  EXPECT_EQ(layer.weight().grad.re()[0], 0);
}

TEST(Backward, TwoEconvChainMatchesFiniteDifferences) {
  Rng rng(3);
  EconvLayer<double> a(ConvSpec{2, 3, 3, 1, 1, 1}, rng);
  EconvLayer<double> b(ConvSpec{3, 2, 3, 2, 0, 1}, rng);
  auto x = make_tensor<double>({2, 2, 7, 7}, Fill::gaussian(rng));
  ForwardContext<double> plain;
  auto y0 = b.forward(a.forward(x, plain), plain);
  auto r = make_tensor<double>(y0.shape(), Fill::gaussian(rng));

  Tape<double> tape;
  ForwardContext<double> ctx{&tape};
  b.forward(a.forward(x, ctx), ctx);
  tape.backward(r);

  std::vector<Parameter<double>*> params{&a.weight(), &b.weight()};
  auto fd = finite_diff_grad<double>(
      [&] {
        ForwardContext<double> c;
        return projected(b.forward(a.forward(x, c), c), r);
      },
      params, 1e-5);
  for (std::size_t i = 0; i < params.size(); ++i)
    EXPECT_LE(max_rel_diff(params[i]->grad, fd[i]), 1e-4) << params[i]->name;
}

TEST(FiniteDiff, Quadratic) {
  Parameter<double> p("p", pixel({3, 0}));
  auto g = finite_diff_grad<double>([&] { return p.value.re()[0] * p.value.re()[0]; }, {&p}, 1e-5);
  EXPECT_NEAR(g[0].re()[0], 6.0, 1e-9);
}

TEST(FiniteDiff, Constant) {
  Parameter<double> p("p", pixel({3, -1}));
  auto g = finite_diff_grad<double>([] { return 2.5; }, {&p}, 1e-5);
  EXPECT_NEAR(g[0].re()[0], 0, 1e-10);
  EXPECT_NEAR(g[0].im()[0], 0, 1e-10);
}

TEST(FiniteDiff, Norm) {
  Parameter<double> p("p", pixel({1, 1}));
  auto g = finite_diff_grad<double>([&] { return std::abs(p.value[0]); }, {&p}, 1e-5);
  EXPECT_NEAR(g[0].re()[0], 1 / std::sqrt(2.0), 1e-8);
  EXPECT_NEAR(g[0].im()[0], 1 / std::sqrt(2.0), 1e-8);
}

TEST(FiniteDiff, RealParameterSkipsImaginary) {
  Parameter<double> p("p", pixel({2, 0}), true);
  auto g = finite_diff_grad<double>([&] { return p.value.re()[0] + p.value.im()[0]; }, {&p}, 1e-5);
  EXPECT_NEAR(g[0].re()[0], 1, 1e-9);
  EXPECT_EQ(g[0].im()[0], 0);
}

TEST(FiniteDiff, Errors) {
  Parameter<double> p("p", pixel({1, 0}));
  EXPECT_THROW(finite_diff_grad<double>([] { return 1.0; }, {&p}, 0), ParameterError);
  EXPECT_THROW(finite_diff_grad<double>([] { return std::nan(""); }, {&p}, 1e-5), EvaluationError);
}

TEST(Gradcheck, CheckGradientsOnEconvChain) {
  Rng rng(3);
  EconvLayer<double> a(ConvSpec{2, 3, 3, 1, 1, 1}, rng);
  EconvLayer<double> b(ConvSpec{3, 2, 3, 1, 1, 1}, rng);
  ForwardFn f = [&](const T& x, ForwardContext<double>& ctx) { return b.forward(a.forward(x, ctx), ctx); };
  auto report = check_gradients("econv_chain", f, {&a.weight(), &b.weight()}, {2, 2, 6, 6}, 3);
  EXPECT_EQ(report.status, CheckStatus::pass) << report.max_rel_err;
  EXPECT_LE(report.max_rel_err, 1e-4);
}

TEST(Gradcheck, DetectsAWrongGradient) {
  Rng rng(1);
  EconvLayer<double> a(ConvSpec{1, 1, 3, 1, 1, 1}, rng);
  ForwardFn f = [&](const T& x, ForwardContext<double>& ctx) {
    auto y = a.forward(x, ctx);
    if (ctx.recording())
      ctx.tape->record("bogus", [](const T& g) { return 2.0 * g; });
    return y;
  };
  auto report = check_gradients("bogus", f, {&a.weight()}, {1, 1, 4, 4}, 1);
  EXPECT_EQ(report.status, CheckStatus::fail);
}
