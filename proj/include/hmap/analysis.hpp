#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hmap/halmap.hpp"

namespace hmap {

/// sqrt(mean |a - b|^2).
inline double rmse(const ImageGrid& a, const ImageGrid& b) {
  require_same_shape(a, b, "rmse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::norm(a[i] - b[i]);
  return std::sqrt(acc / static_cast<double>(a.size()));
}

// ---------------------------------------------------------------------------
// Structural similarity on magnitudes
// ---------------------------------------------------------------------------

struct SsimConfig {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  std::optional<double> data_range;  ///< default: max magnitude over both images
};

struct SsimResult {
  double mean = 0.0;
  ImageGrid map;        ///< per-pixel SSIM (real)
  double data_range = 0.0;
};

/// Gaussian-windowed SSIM of |a| and |b|. Local statistics at each pixel use
/// the part of the window inside the image, renormalized.
inline SsimResult ssim(const ImageGrid& a, const ImageGrid& b, const SsimConfig& cfg = {}) {
  require_same_shape(a, b, "ssim");
  if (cfg.window == 0 || cfg.window % 2 == 0) throw ParameterError("SSIM window must be odd");
  if (cfg.window > a.height() || cfg.window > a.width())
    throw ParameterError("SSIM window " + std::to_string(cfg.window) + " larger than image " +
                         shape_string(a.height(), a.width()));
  const auto x = magnitudes(a);
  const auto y = magnitudes(b);
  double range = 0.0;
  if (cfg.data_range) {
    range = *cfg.data_range;
    if (!(range > 0.0)) throw ParameterError("SSIM data_range must be positive");
  } else {
    range = std::max(*std::max_element(x.begin(), x.end()), *std::max_element(y.begin(), y.end()));
    if (!(range > 0.0)) range = 1.0;
  }
  const double c1 = std::pow(cfg.k1 * range, 2);
  const double c2 = std::pow(cfg.k2 * range, 2);

  const auto kernel = gaussian_kernel(cfg.window, cfg.sigma);
  const auto half = static_cast<long>(cfg.window / 2);
  const auto h = static_cast<long>(a.height()), w = static_cast<long>(a.width());
  SsimResult res{0.0, ImageGrid(a.height(), a.width()), range};
  double total = 0.0;
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c) {
      double ws = 0.0, mx = 0.0, my = 0.0, mxx = 0.0, myy = 0.0, mxy = 0.0;
      for (long dy = -half; dy <= half; ++dy) {
        const long rr = r + dy;
        if (rr < 0 || rr >= h) continue;
        for (long dx = -half; dx <= half; ++dx) {
          const long cc = c + dx;
          if (cc < 0 || cc >= w) continue;
          const double k = kernel[static_cast<std::size_t>((dy + half) * static_cast<long>(cfg.window) + dx + half)];
          const auto i = static_cast<std::size_t>(rr * w + cc);
          ws += k;
          mx += k * x[i];
          my += k * y[i];
          mxx += k * x[i] * x[i];
          myy += k * y[i] * y[i];
          mxy += k * x[i] * y[i];
        }
      }
      mx /= ws;
      my /= ws;
      const double vx = mxx / ws - mx * mx;
      const double vy = myy / ws - my * my;
      const double cxy = mxy / ws - mx * my;
      const double s = ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      res.map(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = s;
      total += s;
    }
  res.mean = total / static_cast<double>(a.size());
  return res;
}

struct RegionSsim {
  std::optional<double> region_mean;      ///< absent when the region is empty
  std::optional<double> background_mean;  ///< support minus region; absent when empty
  double global = 0.0;
};

/// Mean SSIM inside a region mask and over the rest of the object support.
/// Without a support mask the whole image is the support.
inline RegionSsim region_ssim(const ImageGrid& a, const ImageGrid& b, const ImageGrid& region_mask,
                              const ImageGrid* support = nullptr, const SsimConfig& cfg = {}) {
  require_same_shape(a, region_mask, "region ssim mask");
  if (support) require_same_shape(a, *support, "region ssim support");
  const auto s = ssim(a, b, cfg);
  RegionSsim out;
  out.global = s.mean;
  double sr = 0.0, sb = 0.0;
  std::size_t nr = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool in_region = std::abs(region_mask[i]) > 0.5;
    const bool in_support = !support || std::abs((*support)[i]) > 0.5;
    if (in_region) {
      sr += s.map[i].real();
      ++nr;
    } else if (in_support) {
      sb += s.map[i].real();
      ++nb;
    }
  }
  if (nr > 0) out.region_mean = sr / static_cast<double>(nr);
  if (nb > 0) out.background_mean = sb / static_cast<double>(nb);
  return out;
}

// ---------------------------------------------------------------------------
// Centroid scatter and empirical densities
// ---------------------------------------------------------------------------

enum class ScatterSource { SpecificHm, SpecificError };

struct CentroidRow {
  std::string image_id;
  std::size_t component_id = 0;
  double centroid_row = 0.0;
  double centroid_col = 0.0;
  std::size_t area = 0;
};

/// One row per component per report, reports in input order and components in
/// raster order of their first pixel.
inline std::vector<CentroidRow> export_centroid_scatter(std::span<const HallucinationReport> reports,
                                                        ScatterSource which) {
  std::vector<CentroidRow> rows;
  for (const auto& rep : reports) {
    const auto& regions = which == ScatterSource::SpecificHm ? rep.shm_regions : rep.specific_error_regions;
    for (std::size_t k = 0; k < regions.size(); ++k)
      rows.push_back({rep.image_id, k, regions[k].centroid_row, regions[k].centroid_col, regions[k].area});
  }
  return rows;
}

/// Total 2D variance (trace of the covariance) of a set of centroids.
inline double centroid_variance(std::span<const CentroidRow> rows) {
  if (rows.size() < 2) return 0.0;
  double mr = 0.0, mc = 0.0;
  for (const auto& r : rows) {
    mr += r.centroid_row;
    mc += r.centroid_col;
  }
  mr /= static_cast<double>(rows.size());
  mc /= static_cast<double>(rows.size());
  double v = 0.0;
  for (const auto& r : rows) v += std::pow(r.centroid_row - mr, 2) + std::pow(r.centroid_col - mc, 2);
  return v / static_cast<double>(rows.size() - 1);
}

struct PdfBin {
  double left = 0.0;
  double right = 0.0;
  double density = 0.0;
};

/// Normalized histogram: sum(density * width) = 1. A single distinct value is
/// placed in a unit-width range centred on it.
inline std::vector<PdfBin> empirical_pdf(std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw ParameterError("empirical pdf needs at least one bin");
  if (values.empty()) throw ParameterError("empirical pdf of an empty sample");
  auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  double lo = *mn, hi = *mx;
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    auto b = static_cast<std::size_t>(std::max(0.0, std::floor((v - lo) / width)));
    ++counts[std::min(b, bins - 1)];
  }
  std::vector<PdfBin> out(bins);
  const double n = static_cast<double>(values.size());
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].left = lo + static_cast<double>(b) * width;
    out[b].right = b + 1 == bins ? hi : lo + static_cast<double>(b + 1) * width;
    out[b].density = static_cast<double>(counts[b]) / (n * width);
  }
  return out;
}

/// Median of a sample (mean of the two middle values for even sizes).
inline double median(std::vector<double> values) {
  if (values.empty()) throw ParameterError("median of an empty sample");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

struct LabeledValue {
  std::string method;
  std::string distribution;  ///< e.g. "IND" / "OOD"
  double value = 0.0;
};

struct MedianCell {
  std::string method;
  std::string distribution;
  double median = 0.0;
  std::size_t count = 0;
};

/// Method x distribution table of medians, cells sorted by (method, distribution).
inline std::vector<MedianCell> median_table(std::span<const LabeledValue> samples) {
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  for (const auto& s : samples) groups[{s.method, s.distribution}].push_back(s.value);
  std::vector<MedianCell> out;
  for (auto& [key, vals] : groups) out.push_back({key.first, key.second, median(vals), vals.size()});
  return out;
}

}  // namespace hmap
