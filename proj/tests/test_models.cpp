#include <gtest/gtest.h>

#include "cds/gradcheck.hpp"
#include "cds/models.hpp"
#include "properties.hpp"

using namespace cds;
using cd = std::complex<double>;
using T = ComplexTensor<double>;

namespace {

// per-layer sums, complex entries counted once:
// econv C*16*9, division reference 16*9, gtrelu 2*width, econv 16*32*9,
// econv 32*64*9, depthwise pool 64*4*4, linear 64*128, prototypes 10*128 + alpha
Index type_i_count(Index c) {
  return c * 16 * 9 + 16 * 9 + 2 * 16 + 16 * 32 * 9 + 2 * 32 + 32 * 64 * 9 + 2 * 64 + 64 * 16 + 64 * 128 +
         10 * 128 + 1;
}

Index type_e_count(Index c) { return type_i_count(c) - 16 * 9 + 2 * 128; }

ModelConfig config(const std::string& builder, Index channels = 2, std::uint64_t seed = 0) {
  ModelConfig cfg;
  cfg.builder = builder;
  cfg.in_channels = channels;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(Models, ForwardShapes) {
  Rng rng(1);
  for (const auto& b : model_builders()) {
    for (Index c : {2, 3}) {
      ModelGraph<double> m(config(b, c));
      auto x = make_tensor<double>({3, c, 32, 32}, Fill::gaussian(rng));
      EXPECT_EQ(m.forward(x).shape(), (Shape{3, 10})) << b;
    }
  }
  ModelGraph<float> f(config("type_i", 3));
  EXPECT_EQ(f.forward(ComplexTensor<float>(Shape{1, 3, 32, 32})).shape(), (Shape{1, 10}));
}

TEST(Models, ParameterCounts) {
  for (Index c : {2, 3}) {
    EXPECT_EQ(build_type_i_cifarnet<double>(10, c).parameter_count(), type_i_count(c));
    EXPECT_EQ(build_type_e_cifarnet<double>(10, c).parameter_count(), type_e_count(c));
  }
  EXPECT_EQ(type_i_count(3), 34337);
  EXPECT_EQ(type_e_count(3), 34449);
  // dcn: complex convs with bias, then two real linear layers
  const Index dcn = (16 * 3 * 9 + 16) + (32 * 16 * 9 + 32) + (64 * 32 * 9 + 64) + (64 * 16 + 64) +
                    (128 * 128 + 128) + (10 * 128 + 10);
  EXPECT_EQ(build_baseline<double>("dcn", 10, 3).parameter_count(), dcn);
  // real: 2C real channels in
  const Index real = (16 * 6 * 9 + 16) + (32 * 16 * 9 + 32) + (64 * 32 * 9 + 64) + (64 * 16 + 64) +
                     (128 * 64 + 128) + (10 * 128 + 10);
  EXPECT_EQ(build_baseline<double>("real", 10, 3).parameter_count(), real);
  const Index wfm = 16 * 3 * 9 + 32 * 16 * 9 + 64 * 32 * 9 + 64 + (64 * 16 + 64) + (128 * 64 + 128) + (10 * 128 + 10);
  EXPECT_EQ(build_baseline<double>("surreal_wfm", 10, 3).parameter_count(), wfm);
}

TEST(Models, SeedDeterminesWeights) {
  Rng rng(2);
  auto x = make_tensor<double>({2, 2, 32, 32}, Fill::gaussian(rng));
  ModelGraph<double> a(config("type_e", 2, 5)), b(config("type_e", 2, 5)), c(config("type_e", 2, 6));
  EXPECT_EQ(max_abs_diff(a.forward(x), b.forward(x)), 0);
  EXPECT_GT(max_abs_diff(a.forward(x), c.forward(x)), 0);
}

TEST(Models, ConfigJson) {
  ModelConfig cfg = config("surreal_wfm", 3, 9);
  cfg.widths = {8, 8, 16};
  cfg.gtrelu_r = 0.1;
  EXPECT_EQ(ModelConfig::from_json(cfg.to_json()), cfg);
  EXPECT_THROW(ModelGraph<double>(config("resnet")), ConfigError);
  auto bad = config("type_i");
  bad.widths = {16, 32};
  EXPECT_THROW(ModelGraph<double>{bad}, ConfigError);
  EXPECT_THROW(ModelGraph<double>(config("type_i", 4)), ConfigError);
}

TEST(Models, InputShapeChecked) {
  ModelGraph<double> m(config("type_i"));
  EXPECT_THROW(m.forward(T(Shape{1, 3, 32, 32})), ShapeError);
}

TEST(Models, DeclaredInvariance) {
  EXPECT_EQ(model_invariance("type_i"), Invariance::full);
  EXPECT_EQ(model_invariance("type_e"), Invariance::full);
  EXPECT_EQ(model_invariance("surreal_wfm"), Invariance::full);
  EXPECT_EQ(model_invariance("dcn"), Invariance::none);
  EXPECT_EQ(model_invariance("real"), Invariance::none);
}

TEST(Invariance, TypeIHalfToDouble) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    ModelGraph<double> m(config("type_i", 2, seed));
    Rng rng(seed);
    for (int t = 0; t < 10; ++t) {
      auto x = make_tensor<double>({4, 2, 32, 32}, Fill::gaussian(rng));
      const cd s = props::random_scale(rng, 0.5, 2.0);
      EXPECT_LE((m.forward(x).re() - m.forward(T(s * x)).re()).abs().maxCoeff(), 1e-4);
    }
  }
}

TEST(Invariance, TypeIWithoutDivisionOffsetIsExact) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto c = props::model_invariance<double>("type_i", seed, 20, 1e-8, 0.0);
    EXPECT_TRUE(c.passed()) << c.worst;
  }
}

TEST(Invariance, TypeIDefaultOffsetFp64) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto c = props::model_invariance<double>("type_i", seed, 20, 1e-4);
    EXPECT_TRUE(c.passed()) << c.worst;
  }
}

TEST(Invariance, TypeEFp64) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto c = props::model_invariance<double>("type_e", seed, 20, 1e-8);
    EXPECT_TRUE(c.passed()) << c.worst;
  }
}

TEST(Invariance, SurrealWfmFp64) {
  auto c = props::model_invariance<double>("surreal_wfm", 1, 10, 1e-8);
  EXPECT_TRUE(c.passed()) << c.worst;
}

TEST(Invariance, DcnAndRealAreNot) {
  for (const std::string b : {"dcn", "real"}) {
    ModelGraph<double> m(config(b));
    Rng rng(3);
    auto x = make_tensor<double>({4, 2, 32, 32}, Fill::gaussian(rng));
    EXPECT_GT((m.forward(x).re() - m.forward(T(cd(0, 1) * x)).re()).abs().maxCoeff(), 1e-3) << b;
  }
}

TEST(Invariance, ZeroOffsetStaysFinite) {
  ModelGraph<float> m([] {
    auto c = config("type_i");
    c.division_eps = 0;
    return c;
  }());
  Rng rng(4);
  auto y = m.forward(make_tensor<double>({2, 2, 32, 32}, Fill::gaussian(rng)).cast<float>());
  EXPECT_TRUE(y.re().isFinite().all());
}

TEST(Models, TypeEEvalModeUsesRunningStats) {
  ModelGraph<double> m(config("type_e"));
  Rng rng(5);
  auto x = make_tensor<double>({4, 2, 32, 32}, Fill::gaussian(rng));
  auto train = m.forward(x, Mode::train);
  auto eval = m.forward(x, Mode::eval);
  EXPECT_GT(max_abs_diff(train, eval), 0);
}

class ModelGradcheck : public ::testing::TestWithParam<std::string> {};

TEST_P(ModelGradcheck, TenSeeds) {
  ModelConfig cfg = config(GetParam());
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const GradReport r = gradcheck_model(cfg, seed, 2, model_gradcheck_options());
    EXPECT_EQ(r.status, CheckStatus::pass) << "seed " << seed << " err " << r.max_rel_err << " at " << r.worst_coordinate;
    EXPECT_LE(r.max_rel_err, 1e-4);
  }
}

INSTANTIATE_TEST_SUITE_P(CifarNets, ModelGradcheck, ::testing::Values("type_i", "type_e"));
