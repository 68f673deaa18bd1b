#include <random>

#include <gtest/gtest.h>

#include "hmap/transform.hpp"
#include "test_support.hpp"

using namespace hmap;
using hmap::testing::block_map;
using hmap::testing::square_object;

namespace {

// Flood fill from a seed pixel over an 8-connected binary image.
std::vector<std::pair<std::size_t, std::size_t>> flood(const ImageGrid& mask, std::size_t r0, std::size_t c0) {
  std::vector<std::pair<std::size_t, std::size_t>> out, stack{{r0, c0}};
  std::vector<bool> seen(mask.size(), false);
  while (!stack.empty()) {
    auto [r, c] = stack.back();
    stack.pop_back();
    if (seen[r * mask.width() + c] || mask(r, c).real() != 1.0) continue;
    seen[r * mask.width() + c] = true;
    out.emplace_back(r, c);
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        const long rr = static_cast<long>(r) + dr, cc = static_cast<long>(c) + dc;
        if (rr >= 0 && cc >= 0 && rr < 64 && cc < 64) stack.emplace_back(rr, cc);
      }
  }
  return out;
}

}  // namespace

TEST(Otsu, BimodalSeparatesExactly) {
  ImageGrid img(4, 4);
  for (std::size_t i = 0; i < 16; ++i) img[i] = (i % 2) ? 10.0 : 0.0;
  const double t = otsu_threshold(img);
  EXPECT_GT(t, 0.0);
  EXPECT_LE(t, 10.0);
  auto mask = otsu_support(img);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(mask[i], (i % 2) ? 1 : 0);
}

TEST(Otsu, ConstantImageIsDegenerate) {
  ImageGrid img(3, 3);
  for (auto& z : img.data()) z = 4.0;
  EXPECT_EQ(otsu_threshold(img), 4.0);
  auto mask = otsu_support(img);
  EXPECT_TRUE(std::all_of(mask.begin(), mask.end(), [](auto v) { return v == 0; }));
}

TEST(Otsu, MatchesExhaustiveBetweenClassVarianceSearch) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> lo(0.3, 0.08), hi(0.8, 0.05);
  ImageGrid img(32, 32);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = (i % 3 == 0) ? hi(rng) : std::abs(lo(rng));
  const auto res = otsu(img, 256);

  // Oracle: for each of the 256 bins as split point, compute between-class
  // variance directly from the pixels' bin centers.
  std::vector<double> mags(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) mags[i] = std::abs(img[i]);
  const double mn = *std::min_element(mags.begin(), mags.end());
  const double mx = *std::max_element(mags.begin(), mags.end());
  const double w = (mx - mn) / 256.0;
  std::vector<std::size_t> bin(mags.size());
  for (std::size_t i = 0; i < mags.size(); ++i)
    bin[i] = std::min<std::size_t>(255, static_cast<std::size_t>(std::max(0.0, std::floor((mags[i] - mn) / w))));
  double best = -1.0;
  std::size_t best_k = 0;
  for (std::size_t k = 0; k < 256; ++k) {
    double n0 = 0, n1 = 0, m0 = 0, m1 = 0;
    for (std::size_t i = 0; i < mags.size(); ++i) {
      const double center = mn + (bin[i] + 0.5) * w;
      if (bin[i] <= k) { n0 += 1; m0 += center; } else { n1 += 1; m1 += center; }
    }
    if (n0 == 0 || n1 == 0) continue;
    const double total = n0 + n1;
    const double var = (n0 / total) * (n1 / total) * std::pow(m0 / n0 - m1 / n1, 2);
    if (var > best * (1 + 1e-12)) { best = var; best_k = k; }
  }
  EXPECT_EQ(res.last_background_bin, best_k);
  EXPECT_NEAR(res.threshold, mn + (best_k + 1) * w, 1e-12);
}

TEST(HistogramEqualize, UniformInputIsNearIdentity) {
  ImageGrid img(16, 16);
  for (std::size_t i = 0; i < 256; ++i) img[i] = static_cast<double>(i);
  auto eq = histogram_equalize(img, 256);
  for (std::size_t i = 0; i < 256; ++i) EXPECT_LE(std::abs(eq[i].real() - i / 255.0), 1.0 / 255.0);
}

TEST(HistogramEqualize, TwoLevelImage) {
  ImageGrid img(4, 4);
  for (std::size_t i = 0; i < 16; ++i) img[i] = i < 4 ? 0.2 : 0.9;
  auto eq = histogram_equalize(img, 256);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_DOUBLE_EQ(eq[i].real(), i < 4 ? 0.25 : 1.0);
}

TEST(HistogramEqualize, MonotoneAndConstantCase) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  ImageGrid img(20, 20);
  for (auto& z : img.data()) z = u(rng);
  auto eq = histogram_equalize(img, 64);
  for (std::size_t i = 0; i < img.size(); ++i)
    for (std::size_t j = 0; j < img.size(); ++j)
      if (std::abs(img[i]) < std::abs(img[j])) ASSERT_LE(eq[i].real(), eq[j].real());

  ImageGrid flat(3, 3);
  for (auto& z : flat.data()) z = 2.0;
  const auto eq_flat = histogram_equalize(flat, 16);
  for (auto z : eq_flat.data()) EXPECT_EQ(z.real(), 1.0);
  EXPECT_THROW(histogram_equalize(flat, 1), ParameterError);
}

TEST(Percentile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4}, 50), 2.5);
  EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 100), 4.0);
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4, 5}, 95), 4.8);
  EXPECT_THROW(percentile({}, 50), ParameterError);
}

TEST(GaussianKernel, NormalizedAndSymmetric) {
  auto k = gaussian_kernel(7, 1.5);
  double sum = 0.0;
  for (double v : k) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-14);
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t c = 0; c < 7; ++c) EXPECT_DOUBLE_EQ(k[r * 7 + c], k[c * 7 + r]);
  EXPECT_THROW(gaussian_kernel(6, 1.5), ParameterError);
}

TEST(ConnectedComponents, ConnectivityMatters) {
  // Two diagonal pixels touch only under 8-connectivity.
  BinaryMask m{1, 0, 0, 0, 1, 0, 0, 0, 0};
  EXPECT_EQ(connected_components(m, 3, 3, 8).regions.size(), 1u);
  auto four = connected_components(m, 3, 3, 4);
  ASSERT_EQ(four.regions.size(), 2u);
  EXPECT_EQ(four.regions[0].first_pixel, 0u);
  EXPECT_EQ(four.regions[1].first_pixel, 4u);
  EXPECT_DOUBLE_EQ(four.regions[1].centroid_row, 1.0);
}

TEST(SpecificMap, ZeroInputGivesEmptyMask) {
  auto out = specific_map(ImageGrid(64, 64), square_object());
  EXPECT_TRUE(out.regions.empty());
  EXPECT_EQ(norm2(out.mask.data()), 0.0);
}

TEST(SpecificMap, ConstantReferenceIsDegenerate) {
  ImageGrid flat(64, 64);
  for (auto& z : flat.data()) z = 1.0;
  auto out = specific_map(block_map(12, 26, 26), flat);
  EXPECT_TRUE(out.regions.empty());
  EXPECT_EQ(norm2(out.mask.data()), 0.0);
}

TEST(SpecificMap, LargeBlockSurvivesAtItsCenter) {
  auto out = specific_map(block_map(12, 26, 30), square_object());
  ASSERT_EQ(out.regions.size(), 1u);
  EXPECT_GE(out.regions[0].area, 100u);
  // Block center is (31.5, 35.5).
  EXPECT_NEAR(out.regions[0].centroid_row, 31.5, 1.0);
  EXPECT_NEAR(out.regions[0].centroid_col, 35.5, 1.0);
  // Independent flood fill from the block center reproduces the component.
  auto pixels = flood(out.mask, 31, 35);
  EXPECT_EQ(pixels.size(), out.regions[0].area);
  double sr = 0, sc = 0;
  for (auto [r, c] : pixels) { sr += r; sc += c; }
  EXPECT_NEAR(sr / pixels.size(), out.regions[0].centroid_row, 1e-12);
  EXPECT_NEAR(sc / pixels.size(), out.regions[0].centroid_col, 1e-12);
}

TEST(SpecificMap, SmallBlockIsRemoved) {
  auto out = specific_map(block_map(5, 30, 30), square_object());
  EXPECT_TRUE(out.regions.empty());
  EXPECT_EQ(norm2(out.mask.data()), 0.0);
}

TEST(SpecificMap, ThresholdKeepsAtMostTopFivePercent) {
  for (std::size_t side : {5, 12, 20}) {
    auto out = specific_map(block_map(side, 20, 22), square_object());
    std::size_t support = 0, above = 0;
    for (std::size_t i = 0; i < out.support.size(); ++i) {
      support += out.support[i];
      above += out.thresholded[i];
    }
    EXPECT_LE(static_cast<double>(above) / support, 0.05 + 1.0 / 256.0);
  }
}

TEST(SpecificMap, DeterministicBytewise) {
  auto a = specific_map(block_map(12, 26, 26), square_object());
  auto b = specific_map(block_map(12, 26, 26), square_object());
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(a.threshold, b.threshold);
}

TEST(TransformConfig, Validation) {
  TransformConfig cfg;
  cfg.gaussian_kernel_size = 4;
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg = {};
  cfg.percentile = 100.0;
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg = {};
  cfg.connectivity = 6;
  EXPECT_THROW(cfg.validate(), ParameterError);
  EXPECT_THROW(specific_map(ImageGrid(4, 4), ImageGrid(4, 5)), DimensionError);
}
