#include <cmath>
#include <complex>
#include <numbers>
#include <set>

#include <gtest/gtest.h>

#include "cds/gradcheck.hpp"
#include "cds/layers.hpp"
#include "properties.hpp"

using namespace cds;
using cd = std::complex<double>;
using T = ComplexTensor<double>;
using std::numbers::pi;

namespace {

T values(Shape shape, std::initializer_list<cd> v) {
  T t(std::move(shape));
  Index i = 0;
  for (cd z : v) t.set(i++, z);
  return t;
}

T channel_values(std::initializer_list<cd> v) {
  return values({static_cast<Index>(v.size())}, v);
}

void expect_close(cd a, cd b, double tol = 1e-12) { EXPECT_LE(std::abs(a - b), tol) << a << " vs " << b; }

ForwardContext<double> train_ctx() {
  ForwardContext<double> ctx;
  ctx.mode = Mode::train;
  return ctx;
}

}  // namespace

TEST(Econv, IdentityKernel) {
  EconvLayer<double> layer(ConvSpec{1, 1, 1, 1, 0, 1}, values({1, 1, 1, 1}, {{1, 0}}));
  Rng rng(1);
  auto z = make_tensor<double>({1, 4, 4}, Fill::gaussian(rng));
  EXPECT_LE(max_rel_diff(econv_forward(z, layer), z), 1e-15);
}

TEST(Econv, RotatesWithInput) {
  Rng rng(2);
  EconvLayer<double> layer(ConvSpec{3, 4, 3, 1, 1, 1}, rng);
  auto z = make_tensor<double>({2, 3, 6, 6}, Fill::gaussian(rng));
  const cd i(0, 1);
  EXPECT_LE(max_rel_diff(econv_forward(T(i * z), layer), T(i * econv_forward(z, layer))), 1e-12);
}

TEST(Econv, NoBias) {
  Rng rng(3);
  EconvLayer<double> layer(ConvSpec{2, 3, 3, 1, 1, 1}, rng);
  EXPECT_EQ(layer.parameters().size(), 1u);
  EXPECT_EQ(max_abs(econv_forward(T(Shape{1, 2, 5, 5}), layer)), 0);
}

TEST(Econv, InitVariance) {
  Rng rng(4);
  auto w = init_complex_weight<double>({64, 32, 3, 3}, 32 * 9, rng);
  const double mean_sq = (w.re().square() + w.im().square()).mean();
  EXPECT_NEAR(mean_sq * 32 * 9, 1.0, 0.05);
}

TEST(Crelu, Examples) {
  auto y = crelu(channel_values({{1, -2}, {-1, -1}, {3, 4}}));
  EXPECT_EQ(y[0], cd(1, 0));
  EXPECT_EQ(y[1], cd(0, 0));
  EXPECT_EQ(y[2], cd(3, 4));
}

TEST(Gtrelu, Examples) {
  const T one = channel_values({{1, 0}});
  const T w = channel_values({{1, 0}});
  expect_close(gtrelu(channel_values({std::polar(1.0, pi / 4)}), 0.0, one, w)[0], std::polar(1.0, pi / 4));
  expect_close(gtrelu(channel_values({std::polar(1.0, -pi / 2)}), 0.0, one, w)[0], {1, 0});
  expect_close(gtrelu(channel_values({{0.1, 0}}), 0.5, one, w)[0], {0.5, 0});
}

TEST(Gtrelu, ScaleAndPhaseFactor) {
  // c = 2i rotates x = 1 to phase pi/2, omega = 0.5 halves it
  auto y = gtrelu(channel_values({{1, 0}}), 0.0, channel_values({{0, 2}}), channel_values({{0.5, 0}}));
  expect_close(y[0], std::polar(2.0, pi / 4));
}

TEST(Gtrelu, LayerInit) {
  GTReluLayer<double> layer(3, 0.1);
  for (Index k = 0; k < 3; ++k) {
    EXPECT_EQ(layer.scale().value[k], cd(1, 0));
    EXPECT_EQ(layer.omega().value[k], cd(1, 0));
  }
  EXPECT_TRUE(layer.omega().real);
  EXPECT_EQ(layer.threshold(), 0.1);
}

TEST(EquivariantWrap, IdentityNonlinearity) {
  Rng rng(5);
  auto f = make_tensor<double>({2, 3, 4, 4}, Fill::gaussian(rng));
  auto y = equivariant_wrap<double>(f, [](const T& x) { return x; });
  EXPECT_LE(max_rel_diff(y, f), 1e-15);
}

TEST(EquivariantWrap, TwoChannelCrelu) {
  // m = (1+i)/2, m_hat = (1+i)/sqrt2; f conj(m_hat) = ((1-i)/sqrt2, (1+i)/sqrt2);
  // crelu -> (1/sqrt2, (1+i)/sqrt2); times m_hat -> (0.5+0.5i, i)
  auto y = equivariant_wrap<double>(values({2, 1, 1}, {{1, 0}, {0, 1}}), [](const T& x) { return crelu(x); });
  expect_close(y[0], {0.5, 0.5}, 1e-15);
  expect_close(y[1], {0, 1}, 1e-15);
}

TEST(EquivariantWrap, Rotation) {
  Rng rng(6);
  auto f = make_tensor<double>({3, 5, 5}, Fill::gaussian(rng));
  const cd u = std::polar(1.0, 1.234);
  const std::function<T(const T&)> n = [](const T& x) { return crelu(x); };
  EXPECT_LE(max_rel_diff(equivariant_wrap(T(u * f), n), T(u * equivariant_wrap(f, n))), 1e-12);
}

TEST(EqMaxPool, LargestMagnitude) {
  auto r = eq_maxpool(values({1, 2, 2}, {{1, 0}, {0, 3}, {-2, 0}, {0.5, 0}}), 2, 2);
  EXPECT_EQ(r.output[0], cd(0, 3));
  EXPECT_EQ(r.argmax[0], 1);
}

TEST(EqMaxPool, TieGoesToFirst) {
  auto r = eq_maxpool(values({1, 2, 2}, {{1, 0}, {0, 1}, {-1, 0}, {0, -1}}), 2, 2);
  EXPECT_EQ(r.argmax[0], 0);
  EXPECT_EQ(r.output[0], cd(1, 0));
}

TEST(EqMaxPool, ScaledInput) {
  Rng rng(7);
  auto f = make_tensor<double>({2, 6, 6}, Fill::gaussian(rng));
  const cd s = std::polar(0.3, 2.0);
  auto a = eq_maxpool(f, 2, 2), b = eq_maxpool(T(s * f), 2, 2);
  EXPECT_EQ(a.argmax, b.argmax);
  EXPECT_LE(max_rel_diff(b.output, T(s * a.output)), 1e-15);
}

TEST(EqBatchNorm, ScalarOracle) {
  EqBatchNormLayer<double> bn(1);
  auto ctx = train_ctx();
  auto y = bn.forward(values({2, 1, 1, 1}, {{0, 1}, {3, 0}}), ctx);
  // magnitudes {1,3}: mean 2, biased variance 1, offset eps * mean^2
  const double scale = 1 / std::sqrt(1 + 1e-5 * 4);
  expect_close(y[0], cd(0, -1) * scale, 1e-15);
  expect_close(y[1], cd(1, 0) * scale, 1e-15);
}

TEST(EqBatchNorm, RunningStatsOnlyInTrainMode) {
  EqBatchNormLayer<double> bn(1);
  auto x = values({2, 1, 1, 1}, {{1, 0}, {3, 0}});
  ForwardContext<double> eval;
  eval.mode = Mode::eval;
  bn.forward(x, eval);
  EXPECT_EQ(bn.updates(), 0);
  EXPECT_EQ(bn.running_mean().value.re()[0], 0);
  auto ctx = train_ctx();
  bn.forward(x, ctx);
  EXPECT_EQ(bn.updates(), 1);
  EXPECT_NEAR(bn.running_mean().value.re()[0], 0.1 * 2, 1e-15);
  EXPECT_NEAR(bn.running_var().value.re()[0], 0.9 + 0.1 * 2, 1e-15);
  EXPECT_FALSE(bn.running_mean().trainable);
}

TEST(EqBatchNorm, TrainModeInvariances) {
  Rng rng(8);
  EqBatchNormLayer<double> bn(3);
  auto x = make_tensor<double>({4, 3, 2, 2}, Fill::gaussian(rng));
  auto ctx = train_ctx();
  auto y = bn.forward(x, ctx);
  const cd u = std::polar(1.0, 0.7);
  EXPECT_LE(max_rel_diff(bn.forward(T(u * x), ctx), T(u * y)), 1e-13);
  EXPECT_LE(max_rel_diff(bn.forward(T(3.7 * x), ctx), y), 1e-12);
}

TEST(Division, Examples) {
  auto d = division_layer(channel_values({{0, 2}}), channel_values({{1, 0}}));
  expect_close(d[0], cd(0, 2) / (1 + 1e-7), 1e-15);

  Rng rng(9);
  auto z1 = make_tensor<double>({3, 4}, Fill::gaussian(rng));
  T z2(z1.shape());
  for (Index i = 0; i < z2.size(); ++i) z2.set(i, std::polar(1.0, rng.uniform(-pi, pi)));
  const cd s = std::polar(3.0, pi / 3);
  EXPECT_LE(max_rel_diff(division_layer(T(s * z1), T(s * z2)), division_layer(z1, z2)), 1e-6);

  auto self = division_layer(z1, z1);
  for (Index i = 0; i < self.size(); ++i) {
    EXPECT_NEAR(std::abs(self[i]), std::abs(z1[i]) / (std::abs(z1[i]) + 1e-7), 1e-15);
    EXPECT_NEAR(std::arg(self[i]), 0, 1e-15);
  }
}

TEST(Division, EpsLawUnderScaling) {
  // Div(s z1, s z2) = |z1| / (|z2| + eps/|s|) * exp(i(arg z1 - arg z2))
  Rng rng(10);
  for (int t = 0; t < 100; ++t) {
    auto z1 = make_tensor<double>({2, 3, 4, 4}, Fill::gaussian(rng));
    auto z2 = props::bounded_below(rng, z1.shape(), 1e-2);
    const cd s = props::random_scale(rng);
    auto got = division_layer(T(s * z1), T(s * z2));
    T want(z1.shape());
    for (Index i = 0; i < want.size(); ++i)
      want.set(i, std::polar(std::abs(z1[i]) / (std::abs(z2[i]) + 1e-7 / std::abs(s)),
                             std::arg(z1[i]) - std::arg(z2[i])));
    ASSERT_LE(max_rel_diff(got, want), 1e-13);
  }
}

TEST(Division, ZeroEpsIsInvariant) {
  Rng rng(11);
  for (int t = 0; t < 100; ++t) {
    auto z1 = make_tensor<double>({2, 3, 4, 4}, Fill::gaussian(rng));
    auto z2 = props::bounded_below(rng, z1.shape(), 1e-2);
    const cd s = props::random_scale(rng);
    ASSERT_LE(max_rel_diff(division_layer(T(s * z1), T(s * z2), 0.0), division_layer(z1, z2, 0.0)), 1e-13);
  }
}

TEST(Division, InvariantForUnitAndLargerScales) {
  // eps/|z2| <= 1e-5 once |z2| >= 1e-2 and |s| >= 1
  Rng rng(12);
  for (int t = 0; t < 100; ++t) {
    auto z1 = make_tensor<double>({2, 3, 4, 4}, Fill::gaussian(rng));
    auto z2 = props::bounded_below(rng, z1.shape(), 1e-2);
    const cd s = props::random_scale(rng, 1.0, 10.0);
    ASSERT_LE(max_rel_diff(division_layer(T(s * z1), T(s * z2)), division_layer(z1, z2)), 1e-5);
  }
}

TEST(Division, LayerIsInvariant) {
  Rng rng(13);
  DivisionLayer<double> layer(3, 3, rng, 0.0);
  auto x = make_tensor<double>({2, 3, 5, 5}, Fill::gaussian(rng));
  ForwardContext<double> ctx;
  const cd s = std::polar(0.4, -2.5);
  EXPECT_LE(max_rel_diff(layer.forward(T(s * x), ctx), layer.forward(x, ctx)), 1e-12);
}

TEST(Conjugate, Examples) {
  EXPECT_EQ(conjugate_layer(channel_values({{1, 1}}), channel_values({{1, 1}}))[0], cd(2, 0));
  Rng rng(14);
  auto z1 = make_tensor<double>({3, 4}, Fill::gaussian(rng));
  auto z2 = make_tensor<double>({3, 4}, Fill::gaussian(rng));
  const cd u = std::polar(1.0, 0.9);
  EXPECT_LE(max_rel_diff(conjugate_layer(T(u * z1), T(u * z2)), conjugate_layer(z1, z2)), 1e-15);
  EXPECT_LE(max_rel_diff(conjugate_layer(T(2.0 * z1), T(2.0 * z2)), T(4.0 * conjugate_layer(z1, z2))), 0);
}

TEST(ManifoldDistance, Examples) {
  EXPECT_EQ(manifold_distance<double>({1, 0}, {1, 0}), 0);
  EXPECT_NEAR(manifold_distance<double>({1, 0}, {-1, 0}), pi, 1e-15);
  EXPECT_NEAR(manifold_distance<double>({std::numbers::e, 0}, {1, 0}), 1, 1e-15);
  EXPECT_NEAR(arcdist(3.0, -3.0), 2 * pi - 6, 1e-15);
}

TEST(ManifoldDistance, MetricAxioms) {
  Rng rng(15);
  auto draw = [&] { return std::polar(std::exp(rng.normal()), rng.uniform(-pi, pi)); };
  for (int t = 0; t < 10000; ++t) {
    const cd a = draw(), b = draw(), c = draw();
    const double ab = manifold_distance(a, b), ba = manifold_distance(b, a);
    ASSERT_GE(ab, 0);
    ASSERT_NEAR(ab, ba, 1e-12);
    ASSERT_LE(manifold_distance(a, c), ab + manifold_distance(b, c) + 1e-12);
    ASSERT_LE(manifold_distance(a, a), 1e-12);
    ASSERT_GT(ab, 0);
  }
}

TEST(Prototype, SelfDistanceAndAlpha) {
  Rng rng(16);
  auto p = make_tensor<double>({4, 6}, Fill::gaussian(rng));
  T f(Shape{6});
  f.re() = p.re().segment(2 * 6, 6);
  f.im() = p.im().segment(2 * 6, 6);
  for (Metric m : {Metric::manifold, Metric::euclidean}) {
    auto l = prototype_logits(f, p, 1.5, m, false);
    EXPECT_NEAR(l[2], 0, 1e-15);
    EXPECT_LE(l.maxCoeff(), 0);
    auto l2 = prototype_logits(f, p, 3.0, m, false);
    EXPECT_LE((l2 - 2 * l).abs().maxCoeff(), 1e-13);
  }
}

TEST(Prototype, InvariantHead) {
  Rng rng(17);
  auto f = make_tensor<double>({8}, Fill::gaussian(rng));
  auto p = make_tensor<double>({5, 8}, Fill::gaussian(rng));
  const cd s = std::polar(1.7, -0.9);
  auto a = prototype_logits(f, p, 1.0, Metric::manifold, true);
  auto b = prototype_logits(T(s * f), p, 1.0, Metric::manifold, true);
  EXPECT_LE((a - b).abs().maxCoeff(), 1e-10);
}

TEST(Prototype, LayerMatchesFunction) {
  Rng rng(18);
  PrototypeLayer<double> layer(6, 4, Metric::manifold, false, rng);
  EXPECT_NEAR(layer.log_alpha().value.re()[0], -std::log(6.0) / 2, 1e-15);
  for (Index i = 0; i < layer.prototypes().value.size(); ++i)
    EXPECT_NEAR(std::abs(layer.prototypes().value[i]), 1, 1e-12);
  auto x = make_tensor<double>({2, 6}, Fill::gaussian(rng));
  ForwardContext<double> ctx;
  auto y = layer.forward(x, ctx);
  ASSERT_EQ(y.shape(), (Shape{2, 4}));
  const double alpha = std::exp(layer.log_alpha().value.re()[0]);
  for (Index n = 0; n < 2; ++n) {
    T f(Shape{6});
    f.re() = x.re().segment(n * 6, 6);
    f.im() = x.im().segment(n * 6, 6);
    auto l = prototype_logits(f, layer.prototypes().value, alpha, Metric::manifold, false);
    for (Index k = 0; k < 4; ++k) EXPECT_NEAR(y.re()[n * 4 + k], l[k], 1e-12);
  }
}

TEST(ComplexToReal, Examples) {
  auto y = complex_to_real(values({1, 3, 1, 1}, {{1, 0}, {0, std::numbers::e}, {0, 0}}));
  ASSERT_EQ(y.shape(), (Shape{1, 9, 1, 1}));
  const double want[9] = {0, 0, 1, 1, 1, 0, std::log(1e-12), 0, 1};
  for (int k = 0; k < 9; ++k) EXPECT_NEAR(y.re()[k], want[k], 1e-15) << k;
  EXPECT_EQ(max_abs(T(Shape{9}, y.im(), y.im())), 0);
}

TEST(Wfm, Examples) {
  auto m = wfm_layer<double>({{1, 0}, {std::exp(2.0), 0}}, {0.5, 0.5});
  EXPECT_NEAR(std::abs(m), std::numbers::e, 1e-12);
  const cd z(0.3, -1.1);
  expect_close(wfm_layer<double>({z, z, z}, {0.2, 0.3, 0.5}), z, 1e-9);
  expect_close(wfm_layer<double>({z}, {1.0}), z, 1e-9);
  EXPECT_THROW(wfm_layer<double>({z, z}, {0.5, 0.6}), ParameterError);
}

TEST(Wfm, MagnitudeMatchesBruteForce) {
  Rng rng(19);
  for (int t = 0; t < 20; ++t) {
    const int k = 2 + static_cast<int>(rng.below(5));
    std::vector<cd> z;
    std::vector<double> w;
    double total = 0;
    for (int i = 0; i < k; ++i) {
      z.push_back(std::polar(std::exp(rng.normal()), rng.uniform(-pi, pi)));
      w.push_back(rng.uniform(0.1, 1));
      total += w.back();
    }
    for (double& x : w) x /= total;
    // log-magnitude objective sum w (r - ln|z|)^2 on a 1e4 grid, then refine
    auto obj = [&](double r) {
      double s = 0;
      for (int i = 0; i < k; ++i) s += w[i] * std::pow(r - std::log(std::abs(z[i])), 2);
      return s;
    };
    double best = -5, best_v = obj(best);
    for (int g = 0; g <= 10000; ++g) {
      const double r = -5 + 10.0 * g / 10000;
      if (obj(r) < best_v) best_v = obj(r), best = r;
    }
    const double r = golden_section_min(obj, best - 1e-3, best + 1e-3);
    EXPECT_NEAR(std::log(std::abs(wfm_layer(z, w))), r, 1e-3);
  }
}

TEST(Wfm, CircleMinimizer) {
  EXPECT_NEAR(minimize_on_circle([](double t) { return std::pow(std::sin((t - 1.0) / 2), 2); }), 1.0, 1e-6);
  EXPECT_NEAR(wfm_phase_objective({0.5}, {1.0}, 0.5), 0, 1e-15);
}

TEST(RealLayers, Suite) {
  ReluLayer<double> relu;
  ForwardContext<double> ctx;
  auto r = relu.forward(values({1, 2}, {{-1, 0}, {2, 0}}), ctx);
  EXPECT_EQ(r.re()[0], 0);
  EXPECT_EQ(r.re()[1], 2);

  T eye(Shape{3, 3});
  for (Index i = 0; i < 3; ++i) eye.re()[i * 3 + i] = 1;
  LinearLayer<double> fc(eye, T(Shape{3}));
  auto x = values({1, 3}, {{0.5, 0}, {-2, 0}, {7, 0}});
  EXPECT_EQ(max_abs_diff(fc.forward(x, ctx), x), 0);

  AvgPoolLayer<double> pool(2, 2);
  T c(Shape{1, 1, 4, 4});
  c.re().setConstant(1.25);
  auto p = pool.forward(c, ctx);
  ASSERT_EQ(p.shape(), (Shape{1, 1, 2, 2}));
  for (Index i = 0; i < p.size(); ++i) EXPECT_DOUBLE_EQ(p.re()[i], 1.25);
}

TEST(Factory, RoundTripsSpecs) {
  Rng rng(20);
  for (const auto& c : default_gradcheck_cases()) {
    auto layer = make_layer<double>(c.spec, rng);
    const LayerSpec s = layer->spec();
    EXPECT_EQ(s.kind, c.spec.kind);
    auto again = make_layer<double>(LayerSpec::from_json(s.to_json()), rng);
    EXPECT_EQ(again->spec().to_json(), s.to_json());
  }
  EXPECT_THROW(make_layer<double>(LayerSpec{"nope", {}, {}}, rng), ConfigError);
  EXPECT_THROW(make_layer<double>(LayerSpec{"econv", {}, {}}, rng), ConfigError);
}

TEST(Factory, EveryKindHasAGradcheckCase) {
  std::set<std::string> covered;
  for (const auto& c : default_gradcheck_cases()) covered.insert(c.spec.kind);
  for (const auto& k : layer_kinds()) EXPECT_TRUE(covered.count(k)) << k;
}

// Randomized properties, 100 trials each

class Property : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(Property, Equivariance) {
  const auto seed = GetParam();
  for (const auto& c : {props::econv_equivariance(seed), props::wrap_crelu_equivariance(seed),
                        props::gtrelu_homogeneity(seed), props::maxpool_argmax_invariance(seed),
                        props::batchnorm_phase_equivariance(seed), props::batchnorm_scale_invariance(seed)})
    EXPECT_TRUE(c.passed()) << c.name << ": " << c.worst << " > " << c.tolerance;
}

TEST_P(Property, Invariance) {
  const auto seed = GetParam();
  for (const auto& c : {props::conjugate_phase_invariance(seed), props::prototype_invariance(seed)})
    EXPECT_TRUE(c.passed()) << c.name << ": " << c.worst << " > " << c.tolerance;
}

INSTANTIATE_TEST_SUITE_P(Seeds, Property, ::testing::Values(1, 2, 3));

class LayerGradcheck : public ::testing::TestWithParam<GradcheckCase> {};

TEST_P(LayerGradcheck, TenSeeds) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const GradReport r = gradcheck(GetParam(), seed);
    EXPECT_EQ(r.status, CheckStatus::pass)
        << GetParam().label << " seed " << seed << " err " << r.max_rel_err << " at " << r.worst_coordinate;
    EXPECT_LE(r.max_rel_err, 1e-4);
  }
}

INSTANTIATE_TEST_SUITE_P(AllKinds, LayerGradcheck, ::testing::ValuesIn(default_gradcheck_cases()),
                         [](const auto& info) { return info.param.label; });
