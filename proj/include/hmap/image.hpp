#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmap {

using Complex = std::complex<double>;

/// Measurement vector in the operator's range (k-space samples for FftMask).
using Measurement = std::vector<Complex>;

// ---------------------------------------------------------------------------
// Error hierarchy. Every failure raised by the library derives from Error so
// the CLI can map categories onto exit codes.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class SizeError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

inline std::string shape_string(std::size_t h, std::size_t w) {
  return std::to_string(h) + "x" + std::to_string(w);
}

/// Row-major 2D raster of complex samples. The grid is the coefficient vector
/// of a pixel-basis object, so linear algebra on images is linear algebra on
/// its data() span.
class ImageGrid {
 public:
  ImageGrid() = default;

  ImageGrid(std::size_t height, std::size_t width)
      : height_(height), width_(width), data_(height * width, Complex{0.0, 0.0}) {
    if (height == 0 || width == 0) throw DimensionError("image dimensions must be positive");
  }

  ImageGrid(std::size_t height, std::size_t width, std::vector<Complex> data)
      : height_(height), width_(width), data_(std::move(data)) {
    if (height == 0 || width == 0) throw DimensionError("image dimensions must be positive");
    if (data_.size() != height * width)
      throw DimensionError("image data length " + std::to_string(data_.size()) + " does not match " +
                           shape_string(height, width));
  }

  /// Lifts real samples with zero imaginary part.
  static ImageGrid from_real(std::size_t height, std::size_t width, std::span<const double> values) {
    if (values.size() != height * width)
      throw DimensionError("real data length does not match " + shape_string(height, width));
    std::vector<Complex> data(values.size());
    std::transform(values.begin(), values.end(), data.begin(), [](double v) { return Complex{v, 0.0}; });
    return ImageGrid(height, width, std::move(data));
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  Complex& operator()(std::size_t row, std::size_t col) { return data_[row * width_ + col]; }
  const Complex& operator()(std::size_t row, std::size_t col) const { return data_[row * width_ + col]; }
  Complex& operator[](std::size_t i) { return data_[i]; }
  const Complex& operator[](std::size_t i) const { return data_[i]; }

  std::span<Complex> data() noexcept { return data_; }
  std::span<const Complex> data() const noexcept { return data_; }
  const std::vector<Complex>& values() const noexcept { return data_; }

  bool same_shape(const ImageGrid& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(),
                       [](const Complex& z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); });
  }

  friend bool operator==(const ImageGrid&, const ImageGrid&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<Complex> data_;
};

inline void require_same_shape(const ImageGrid& a, const ImageGrid& b, const char* what) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(what) + ": shape " + shape_string(a.height(), a.width()) + " vs " +
                         shape_string(b.height(), b.width()));
}

// ---------------------------------------------------------------------------
// Small vector helpers shared by every module. The inner product is
// conjugate-linear in its first argument: <x, y> = sum conj(x_i) y_i.
// ---------------------------------------------------------------------------

inline Complex inner(std::span<const Complex> x, std::span<const Complex> y) {
  if (x.size() != y.size()) throw DimensionError("inner product of vectors with different lengths");
  Complex acc{0.0, 0.0};
  for (std::size_t i = 0; i < x.size(); ++i) acc += std::conj(x[i]) * y[i];
  return acc;
}

inline double norm2(std::span<const Complex> x) {
  double acc = 0.0;
  for (const auto& z : x) acc += std::norm(z);
  return std::sqrt(acc);
}

inline double norm_inf(std::span<const Complex> x) {
  double m = 0.0;
  for (const auto& z : x) m = std::max(m, std::abs(z));
  return m;
}

inline ImageGrid operator+(const ImageGrid& a, const ImageGrid& b) {
  require_same_shape(a, b, "image addition");
  ImageGrid out(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline ImageGrid operator-(const ImageGrid& a, const ImageGrid& b) {
  require_same_shape(a, b, "image subtraction");
  ImageGrid out(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline ImageGrid operator*(double s, const ImageGrid& a) {
  ImageGrid out(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i];
  return out;
}

inline ImageGrid magnitude(const ImageGrid& a) {
  ImageGrid out(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = Complex{std::abs(a[i]), 0.0};
  return out;
}

inline std::vector<double> magnitudes(const ImageGrid& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::abs(a[i]);
  return out;
}

inline ImageGrid real_part(const ImageGrid& a) {
  ImageGrid out(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = Complex{a[i].real(), 0.0};
  return out;
}

inline ImageGrid imag_part(const ImageGrid& a) {
  ImageGrid out(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = Complex{a[i].imag(), 0.0};
  return out;
}

}  // namespace hmap
