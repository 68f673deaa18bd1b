#include <random>

#include <gtest/gtest.h>

#include "hmap/recon.hpp"
#include "test_support.hpp"

using namespace hmap;
using hmap::testing::max_abs_diff;

using hmap::testing::brute_force_prox_1d;
using hmap::testing::optimality_residual;

TEST(TvProx, MatchesBruteForceOn1dFixtures) {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> nd(0.0, 1.0);
  TvProxOptions opts{50000, 1e-15};
  for (std::size_t len = 1; len <= 8; ++len) {
    for (int rep = 0; rep < 4; ++rep) {
      for (double weight : {0.05, 0.3, 1.0}) {
        ImageGrid z(1, len);
        std::vector<double> re(len), im(len);
        for (std::size_t j = 0; j < len; ++j) {
          re[j] = rep == 0 ? (j < len / 2 ? 0.0 : 1.0) : nd(gen);
          im[j] = nd(gen);
          z[j] = Complex{re[j], im[j]};
        }
        auto x = tv_prox(z, weight, TvFlavor::Isotropic, opts);
        auto br = brute_force_prox_1d(re, weight);
        auto bi = brute_force_prox_1d(im, weight);
        for (std::size_t j = 0; j < len; ++j) {
          EXPECT_NEAR(x[j].real(), br[j], 1e-6) << "len " << len << " w " << weight;
          EXPECT_NEAR(x[j].imag(), bi[j], 1e-6) << "len " << len << " w " << weight;
        }
        // Columns behave the same way.
        ImageGrid zt(len, 1, std::vector<Complex>(z.data().begin(), z.data().end()));
        auto xt = tv_prox(zt, weight, TvFlavor::Anisotropic, opts);
        for (std::size_t j = 0; j < len; ++j) EXPECT_NEAR(xt[j].real(), br[j], 1e-6);
      }
    }
  }
}

TEST(TvProx, ZeroWeightIsIdentityAndConstantIsFixed) {
  std::mt19937_64 gen(12);
  auto z = hmap::testing::random_image(6, 5, gen);
  EXPECT_EQ(tv_prox(z, 0.0), z);
  ImageGrid c(6, 5);
  for (auto& v : c.data()) v = Complex{0.7, -0.2};
  EXPECT_LE(max_abs_diff(tv_prox(c, 2.0), c), 1e-12);
  EXPECT_THROW(tv_prox(z, -1.0), ParameterError);
}

TEST(TvNorm, KnownValues) {
  ImageGrid step(4, 4);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 2; c < 4; ++c) step(r, c) = Complex{1.0, 2.0};
  // One vertical edge of length 4; jump 1 in real and 2 in imaginary.
  EXPECT_NEAR(tv_norm(step), 4.0 + 8.0, 1e-12);
  ImageGrid diag(2, 2);
  diag(0, 0) = 1.0;
  EXPECT_NEAR(tv_norm(diag, TvFlavor::Isotropic), std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(tv_norm(diag, TvFlavor::Anisotropic), 2.0, 1e-12);
}

TEST(TvOperators, DivergenceIsNegativeAdjointOfGradient) {
  std::mt19937_64 gen(13);
  std::normal_distribution<double> nd;
  const std::size_t h = 7, w = 5;
  std::vector<double> x(h * w), px(h * w), py(h * w), gx, gy, div;
  for (auto& v : x) v = nd(gen);
  for (auto& v : px) v = nd(gen);
  for (auto& v : py) v = nd(gen);
  tv::gradient(x, h, w, gx, gy);
  tv::divergence(px, py, h, w, div);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < h * w; ++i) {
    // The last column/row differences are structurally zero.
    lhs += gx[i] * ((i % w) + 1 < w ? px[i] : 0.0) + gy[i] * (i / w + 1 < h ? py[i] : 0.0);
    rhs -= x[i] * div[i];
  }
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(OperatorNorm, FftMaskIsOne) {
  auto op = OperatorDescriptor::fft_mask(make_uniform_mask(12, 12, 3, 1));
  EXPECT_NEAR(operator_norm_sq(op), 1.0, 1e-8);
}

TEST(OperatorNorm, DenseMatchesLargestSingularValue) {
  std::mt19937_64 gen(14);
  std::normal_distribution<double> nd;
  Eigen::MatrixXcd a(5, 12);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = Complex{nd(gen), nd(gen)};
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(a);
  auto op = OperatorDescriptor::dense(a, 3, 4);
  const double s = svd.singularValues()(0);
  EXPECT_NEAR(operator_norm_sq(op, 2000, 1e-14), s * s, 1e-6 * s * s);
}

TEST(PlsTv, LambdaZeroFullMaskRecoversNoiselessObject) {
  auto theta = hmap::testing::piecewise_phantom(16, 16, 3);
  auto mask = make_uniform_mask(16, 16, 1, 0);
  auto op = OperatorDescriptor::fft_mask(mask);
  auto g = apply_forward(op, theta);
  PlsTvConfig cfg;
  cfg.lambda = 0.0;
  auto res = recon_plstv(g, op, cfg);
  EXPECT_LE(max_abs_diff(res.image, theta), 1e-6);
  EXPECT_NEAR(res.step_size, 0.5, 1e-8);
}

TEST(PlsTv, ConstantObjectIsRecovered) {
  ImageGrid theta(16, 16);
  for (auto& z : theta.data()) z = 0.8;
  auto op = OperatorDescriptor::fft_mask(make_uniform_mask(16, 16, 2, 0));
  auto res = recon_plstv(apply_forward(op, theta), op, PlsTvConfig{.lambda = 0.05});
  EXPECT_LE(max_abs_diff(res.image, theta), 1e-6);
}

TEST(PlsTv, ObjectiveIsMonotone) {
  std::mt19937_64 gen(15);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    auto theta = hmap::testing::piecewise_phantom(16, 16, seed);
    auto mask = make_uniform_mask(16, 16, 2 + seed % 2, 0);
    auto op = OperatorDescriptor::fft_mask(mask);
    auto g = simulate_measurement(theta, mask, NoiseConfig{0.02, 0.0, seed}, "m");
    for (double lambda : {0.0, 0.01, 0.1}) {
      auto res = recon_plstv(g, op, PlsTvConfig{.lambda = lambda, .max_iters = 200});
      ASSERT_FALSE(res.objective.empty());
      const double start = plstv_objective(op, g, apply_adjoint(op, g), lambda, TvFlavor::Isotropic);
      EXPECT_LE(res.objective.front(), start);
      for (std::size_t k = 1; k < res.objective.size(); ++k) EXPECT_LE(res.objective[k], res.objective[k - 1]);
      EXPECT_NEAR(res.objective.back(), plstv_objective(op, g, res.image, lambda, TvFlavor::Isotropic), 1e-12);
    }
  }
}

TEST(PlsTv, FirstOrderOptimalityOnPhantom) {
  auto theta = hmap::testing::piecewise_phantom(16, 16, 1);
  auto mask = make_uniform_mask(16, 16, 2, 0);
  auto op = OperatorDescriptor::fft_mask(mask);
  auto g = simulate_measurement(theta, mask, NoiseConfig{0.01, 0.0, 5}, "opt");
  const double lambda = 0.05;
  PlsTvConfig cfg{.lambda = lambda, .max_iters = 5000, .tolerance = 0.0};
  cfg.prox = {2000, 1e-13};
  auto res = recon_plstv(g, op, cfg);
  const double r = optimality_residual(op, g, res.image, lambda, 1e-6);
  EXPECT_LE(r, 1e-4);
  RecordProperty("residual", std::to_string(r));
}

TEST(PlsTv, TooLargeStepRaises) {
  auto theta = hmap::testing::piecewise_phantom(16, 16, 2);
  auto op = OperatorDescriptor::fft_mask(make_uniform_mask(16, 16, 2, 0));
  auto g = apply_forward(op, theta);
  for (auto& z : g) z += Complex{0.3, -0.1};
  PlsTvConfig cfg{.lambda = 0.1, .max_iters = 100, .step_size = 5.0};
  EXPECT_THROW(recon_plstv(g, op, cfg), SolverError);
}

TEST(PlsTv, InvalidInputs) {
  auto op = OperatorDescriptor::fft_mask(make_uniform_mask(8, 8, 2, 0));
  Measurement g(op.range_size());
  EXPECT_THROW(recon_plstv(g, op, PlsTvConfig{.lambda = -1.0}), ParameterError);
  EXPECT_THROW(recon_plstv(Measurement(3), op, PlsTvConfig{}), DimensionError);
  EXPECT_THROW(recon_plstv(g, op, PlsTvConfig{.max_iters = 0}), ParameterError);
}

TEST(ReconTp, IsZeroFilledInverse) {
  std::mt19937_64 gen(16);
  auto mask = make_uniform_mask(10, 8, 2, 1);
  auto op = OperatorDescriptor::fft_mask(mask);
  auto dec = compute_svd(op, kDefaultEpsilon);
  auto g = hmap::testing::random_measurement(op.range_size(), gen);
  EXPECT_LE(max_abs_diff(recon_tp(g, dec), apply_adjoint(op, g)), 1e-12);
}

namespace {

std::vector<SweepSample> sweep_dataset(std::size_t count) {
  std::vector<SweepSample> data;
  auto mask = make_uniform_mask(16, 16, 2, 0);
  for (std::size_t i = 0; i < count; ++i) {
    auto theta = hmap::testing::piecewise_phantom(16, 16, 40 + i);
    auto g = simulate_measurement(theta, mask, NoiseConfig{0.05, 0.0, i}, "s");
    data.push_back({g, theta});
  }
  return data;
}

}  // namespace

TEST(SweepLambda, SingleCandidateIsChosen) {
  auto data = sweep_dataset(2);
  auto op = OperatorDescriptor::fft_mask(make_uniform_mask(16, 16, 2, 0));
  std::vector<double> c{0.03};
  auto res = sweep_lambda(data, op, c, PlsTvConfig{.max_iters = 50});
  EXPECT_EQ(res.chosen_lambda, 0.03);
  ASSERT_EQ(res.table.size(), 1u);
}

TEST(SweepLambda, NoiselessFullMaskPrefersZero) {
  auto mask = make_uniform_mask(16, 16, 1, 0);
  auto op = OperatorDescriptor::fft_mask(mask);
  std::vector<SweepSample> data;
  for (std::uint64_t s = 0; s < 2; ++s) {
    auto theta = hmap::testing::piecewise_phantom(16, 16, s);
    data.push_back({apply_forward(op, theta), theta});
  }
  std::vector<double> c{10.0, 0.0};
  auto res = sweep_lambda(data, op, c, PlsTvConfig{.max_iters = 100});
  EXPECT_EQ(res.chosen_lambda, 0.0);
  EXPECT_EQ(res.table[0].lambda, 10.0);
}

TEST(SweepLambda, TableMatchesIndependentRuns) {
  auto data = sweep_dataset(3);
  auto op = OperatorDescriptor::fft_mask(make_uniform_mask(16, 16, 2, 0));
  std::vector<double> c{0.0, 0.02, 0.2};
  PlsTvConfig base{.max_iters = 60};
  auto serial = sweep_lambda(data, op, c, base, 1);
  auto threaded = sweep_lambda(data, op, c, base, 3);
  double best = std::numeric_limits<double>::infinity(), best_lambda = -1.0;
  for (std::size_t li = 0; li < c.size(); ++li) {
    double sum = 0.0;
    for (std::size_t di = 0; di < data.size(); ++di) {
      PlsTvConfig cfg = base;
      cfg.lambda = c[li];
      const double e = rmse(recon_plstv(data[di].meas, op, cfg).image, data[di].theta);
      EXPECT_EQ(serial.table[li].rmse[di], e);
      EXPECT_EQ(threaded.table[li].rmse[di], e);
      sum += e;
    }
    if (sum / 3.0 < best) {
      best = sum / 3.0;
      best_lambda = c[li];
    }
  }
  EXPECT_EQ(serial.chosen_lambda, best_lambda);
  EXPECT_EQ(threaded.chosen_lambda, best_lambda);
  // More regularization gives a flatter reconstruction.
  EXPECT_GE(serial.table[0].mean_tv, serial.table[1].mean_tv);
  EXPECT_GE(serial.table[1].mean_tv, serial.table[2].mean_tv);
}

TEST(SweepLambda, Errors) {
  auto op = OperatorDescriptor::fft_mask(make_uniform_mask(16, 16, 2, 0));
  std::vector<double> none;
  auto data = sweep_dataset(1);
  EXPECT_THROW(sweep_lambda(data, op, none), ParameterError);
  std::vector<double> c{0.1};
  EXPECT_THROW(sweep_lambda(std::span<const SweepSample>{}, op, c), ParameterError);
}
