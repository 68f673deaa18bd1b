#pragma once

// Image-processing transform that turns a hallucination (or error) map into a
// binary map of localized task-relevant regions: object support by Otsu,
// histogram equalization, Gaussian smoothing, percentile threshold and
// small-component removal.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numbers>
#include <vector>

#include "hmap/image.hpp"

namespace hmap {

struct TransformConfig {
  std::size_t gaussian_kernel_size = 7;
  double gaussian_sigma = 1.5;
  double percentile = 95.0;
  std::size_t min_component_area = 100;
  int connectivity = 8;
  std::size_t histogram_bins = 256;

  void validate() const {
    if (gaussian_kernel_size == 0 || gaussian_kernel_size % 2 == 0)
      throw ParameterError("gaussian_kernel_size must be a positive odd integer");
    if (!(gaussian_sigma > 0.0)) throw ParameterError("gaussian_sigma must be positive");
    if (!(percentile > 0.0 && percentile < 100.0)) throw ParameterError("percentile must lie in (0, 100)");
    if (min_component_area == 0) throw ParameterError("min_component_area must be positive");
    if (connectivity != 4 && connectivity != 8) throw ParameterError("connectivity must be 4 or 8");
    if (histogram_bins < 2) throw ParameterError("histogram_bins must be at least 2");
  }
};

/// Pixel mask, one byte per pixel, row-major.
using BinaryMask = std::vector<std::uint8_t>;

inline ImageGrid mask_to_image(const BinaryMask& mask, std::size_t h, std::size_t w) {
  ImageGrid out(h, w);
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] ? 1.0 : 0.0;
  return out;
}

inline BinaryMask image_to_mask(const ImageGrid& img) {
  BinaryMask out(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = std::abs(img[i]) > 0.5 ? 1 : 0;
  return out;
}

/// Equal-width histogram over [lo, hi]; a zero-width range puts everything in bin 0.
class Histogram {
 public:
  Histogram(std::span<const double> values, std::size_t bins) : bins_(bins), counts_(bins, 0) {
    if (bins == 0) throw ParameterError("histogram needs at least one bin");
    if (values.empty()) throw ParameterError("histogram of an empty sample");
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    lo_ = *mn;
    hi_ = *mx;
    width_ = (hi_ - lo_) / static_cast<double>(bins);
    for (double v : values) ++counts_[bin_of(v)];
  }

  std::size_t bin_of(double v) const {
    if (!(width_ > 0.0)) return 0;
    const double f = std::floor((v - lo_) / width_);
    if (f <= 0.0) return 0;
    return std::min(bins_ - 1, static_cast<std::size_t>(f));
  }

  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  double bin_width() const noexcept { return width_; }
  std::size_t bins() const noexcept { return bins_; }
  const std::vector<std::size_t>& counts() const noexcept { return counts_; }
  bool degenerate() const noexcept { return !(width_ > 0.0); }

 private:
  std::size_t bins_;
  std::vector<std::size_t> counts_;
  double lo_ = 0.0, hi_ = 0.0, width_ = 0.0;
};

struct OtsuResult {
  double threshold = 0.0;     ///< lower edge of the first foreground bin
  std::size_t last_background_bin = 0;
  bool degenerate = false;    ///< constant input: no foreground
};

/// Otsu's method on pixel magnitudes: the split maximizing between-class
/// variance over the histogram, ties resolved toward the lower bin.
inline OtsuResult otsu(const ImageGrid& image, std::size_t bins = 256) {
  if (image.empty()) throw ParameterError("otsu threshold of an empty image");
  const auto mags = magnitudes(image);
  Histogram hist(mags, bins);
  OtsuResult res;
  if (hist.degenerate()) {
    res.threshold = hist.lo();
    res.degenerate = true;
    return res;
  }
  const auto& c = hist.counts();
  double total_n = 0.0, total_s = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    total_n += static_cast<double>(c[b]);
    total_s += static_cast<double>(b) * static_cast<double>(c[b]);
  }
  double n0 = 0.0, s0 = 0.0, best = -1.0;
  std::size_t best_k = 0;
  for (std::size_t k = 0; k + 1 < bins; ++k) {
    n0 += static_cast<double>(c[k]);
    s0 += static_cast<double>(k) * static_cast<double>(c[k]);
    const double n1 = total_n - n0;
    if (n0 == 0.0 || n1 == 0.0) continue;
    const double d = s0 / n0 - (total_s - s0) / n1;
    const double var = n0 * n1 * d * d;
    if (var > best) {
      best = var;
      best_k = k;
    }
  }
  res.last_background_bin = best_k;
  res.threshold = hist.lo() + static_cast<double>(best_k + 1) * hist.bin_width();
  return res;
}

inline double otsu_threshold(const ImageGrid& image, std::size_t bins = 256) { return otsu(image, bins).threshold; }

/// Foreground (object support) mask from Otsu's split. Empty for constant images.
inline BinaryMask otsu_support(const ImageGrid& image, std::size_t bins = 256) {
  const auto res = otsu(image, bins);
  BinaryMask mask(image.size(), 0);
  if (res.degenerate) return mask;
  const auto mags = magnitudes(image);
  Histogram hist(mags, bins);
  for (std::size_t i = 0; i < mags.size(); ++i) mask[i] = hist.bin_of(mags[i]) > res.last_background_bin ? 1 : 0;
  return mask;
}

/// CDF remap of magnitudes onto [0, 1]. With a mask, only masked pixels form
/// the histogram and unmasked pixels are set to 0. A constant sample maps to 1.
inline ImageGrid histogram_equalize(const ImageGrid& image, std::size_t bins, const BinaryMask* mask = nullptr) {
  if (bins < 2) throw ParameterError("histogram equalization needs at least 2 bins");
  if (mask && mask->size() != image.size()) throw DimensionError("equalization mask size mismatch");
  ImageGrid out(image.height(), image.width());
  std::vector<double> sample;
  sample.reserve(image.size());
  for (std::size_t i = 0; i < image.size(); ++i)
    if (!mask || (*mask)[i]) sample.push_back(std::abs(image[i]));
  if (sample.empty()) return out;

  Histogram hist(sample, bins);
  std::vector<double> cdf(bins);
  std::size_t run = 0;
  for (std::size_t b = 0; b < bins; ++b) {
    run += hist.counts()[b];
    cdf[b] = static_cast<double>(run) / static_cast<double>(sample.size());
  }
  for (std::size_t i = 0; i < image.size(); ++i)
    if (!mask || (*mask)[i]) out[i] = cdf[hist.bin_of(std::abs(image[i]))];
  return out;
}

/// Normalized size x size Gaussian kernel, row-major.
inline std::vector<double> gaussian_kernel(std::size_t size, double sigma) {
  if (size == 0 || size % 2 == 0) throw ParameterError("kernel size must be odd");
  if (!(sigma > 0.0)) throw ParameterError("kernel sigma must be positive");
  const auto half = static_cast<long>(size / 2);
  std::vector<double> k(size * size);
  double sum = 0.0;
  for (long dy = -half; dy <= half; ++dy)
    for (long dx = -half; dx <= half; ++dx) {
      const double v = std::exp(-static_cast<double>(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      k[static_cast<std::size_t>((dy + half) * static_cast<long>(size) + dx + half)] = v;
      sum += v;
    }
  for (auto& v : k) v /= sum;
  return k;
}

/// Real-valued Gaussian smoothing with zero padding outside the grid.
inline ImageGrid gaussian_blur(const ImageGrid& image, std::size_t size, double sigma) {
  const auto k = gaussian_kernel(size, sigma);
  const auto half = static_cast<long>(size / 2);
  const auto h = static_cast<long>(image.height());
  const auto w = static_cast<long>(image.width());
  ImageGrid out(image.height(), image.width());
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c) {
      double acc = 0.0;
      for (long dy = -half; dy <= half; ++dy) {
        const long rr = r + dy;
        if (rr < 0 || rr >= h) continue;
        for (long dx = -half; dx <= half; ++dx) {
          const long cc = c + dx;
          if (cc < 0 || cc >= w) continue;
          acc += k[static_cast<std::size_t>((dy + half) * static_cast<long>(size) + dx + half)] *
                 image(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)).real();
        }
      }
      out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = acc;
    }
  return out;
}

/// p-th percentile with linear interpolation between order statistics.
inline double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw ParameterError("percentile of an empty sample");
  if (!(p >= 0.0 && p <= 100.0)) throw ParameterError("percentile must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

struct Region {
  double centroid_row = 0.0;
  double centroid_col = 0.0;
  std::size_t area = 0;
  std::size_t first_pixel = 0;  ///< raster index of the component's top-left pixel
};

struct Components {
  std::vector<int> labels;  ///< -1 for background, else index into regions
  std::vector<Region> regions;
};

/// Connected components of a binary mask, ordered by their first pixel in
/// raster order.
inline Components connected_components(const BinaryMask& mask, std::size_t h, std::size_t w, int connectivity = 8) {
  if (mask.size() != h * w) throw DimensionError("component mask size mismatch");
  if (connectivity != 4 && connectivity != 8) throw ParameterError("connectivity must be 4 or 8");
  Components out;
  out.labels.assign(mask.size(), -1);
  std::deque<std::size_t> queue;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask[start] || out.labels[start] >= 0) continue;
    const int label = static_cast<int>(out.regions.size());
    Region reg;
    reg.first_pixel = start;
    double sr = 0.0, sc = 0.0;
    out.labels[start] = label;
    queue.push_back(start);
    while (!queue.empty()) {
      const auto idx = queue.front();
      queue.pop_front();
      const auto r = static_cast<long>(idx / w), c = static_cast<long>(idx % w);
      ++reg.area;
      sr += static_cast<double>(r);
      sc += static_cast<double>(c);
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          if (dy == 0 && dx == 0) continue;
          if (connectivity == 4 && dy != 0 && dx != 0) continue;
          const long rr = r + dy, cc = c + dx;
          if (rr < 0 || cc < 0 || rr >= static_cast<long>(h) || cc >= static_cast<long>(w)) continue;
          const auto n = static_cast<std::size_t>(rr) * w + static_cast<std::size_t>(cc);
          if (mask[n] && out.labels[n] < 0) {
            out.labels[n] = label;
            queue.push_back(n);
          }
        }
    }
    reg.centroid_row = sr / static_cast<double>(reg.area);
    reg.centroid_col = sc / static_cast<double>(reg.area);
    out.regions.push_back(reg);
  }
  return out;
}

struct SpecificMap {
  ImageGrid mask;                  ///< {0,1} real values
  std::vector<Region> regions;     ///< surviving components in raster order
  BinaryMask support;              ///< object support used for the analysis
  double threshold = 0.0;          ///< percentile cut-off on the smoothed map
  BinaryMask thresholded;          ///< before small-component removal
};

/// Applies the localization transform to a map, using support_reference (the
/// object) to define the region of support.
inline SpecificMap specific_map(const ImageGrid& map, const ImageGrid& support_reference, const TransformConfig& cfg = {}) {
  cfg.validate();
  require_same_shape(map, support_reference, "specific map");
  const auto h = map.height(), w = map.width();
  SpecificMap out{ImageGrid(h, w), {}, otsu_support(support_reference, cfg.histogram_bins), 0.0, BinaryMask(map.size(), 0)};

  if (std::none_of(out.support.begin(), out.support.end(), [](std::uint8_t v) { return v != 0; })) return out;

  const auto equalized = histogram_equalize(magnitude(map), cfg.histogram_bins, &out.support);
  const auto smooth = gaussian_blur(equalized, cfg.gaussian_kernel_size, cfg.gaussian_sigma);

  std::vector<double> in_support;
  for (std::size_t i = 0; i < map.size(); ++i)
    if (out.support[i]) in_support.push_back(smooth[i].real());
  out.threshold = percentile(in_support, cfg.percentile);
  for (std::size_t i = 0; i < map.size(); ++i)
    out.thresholded[i] = (out.support[i] && smooth[i].real() > out.threshold) ? 1 : 0;

  auto comps = connected_components(out.thresholded, h, w, cfg.connectivity);
  std::vector<bool> keep(comps.regions.size(), false);
  for (std::size_t k = 0; k < comps.regions.size(); ++k) {
    if (comps.regions[k].area >= cfg.min_component_area) {
      keep[k] = true;
      out.regions.push_back(comps.regions[k]);
    }
  }
  for (std::size_t i = 0; i < map.size(); ++i)
    if (comps.labels[i] >= 0 && keep[static_cast<std::size_t>(comps.labels[i])]) out.mask[i] = 1.0;
  return out;
}

}  // namespace hmap
