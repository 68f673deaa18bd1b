#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "hmap/fft.hpp"
#include "hmap/image.hpp"
#include "hmap/mask.hpp"

namespace hmap {

enum class OperatorKind { DenseMatrix, FftMask };

/// Linear imaging operator from an image grid (object space, N = height*width)
/// to a measurement vector (range, M entries). Immutable; copies share the
/// dense payload.
class OperatorDescriptor {
 public:
  /// Dense M x N matrix acting on images of the given shape (N = height*width).
  static OperatorDescriptor dense(Eigen::MatrixXcd matrix, std::size_t height, std::size_t width) {
    if (height == 0 || width == 0) throw DimensionError("operator object dimensions must be positive");
    if (static_cast<std::size_t>(matrix.cols()) != height * width)
      throw DimensionError("dense operator has " + std::to_string(matrix.cols()) + " columns but object is " +
                           shape_string(height, width));
    if (matrix.rows() == 0) throw DimensionError("dense operator must have at least one row");
    OperatorDescriptor op;
    op.height_ = height;
    op.width_ = width;
    op.payload_ = std::make_shared<const Eigen::MatrixXcd>(std::move(matrix));
    return op;
  }

  /// Dense operator acting on a 1 x N row image.
  static OperatorDescriptor dense(Eigen::MatrixXcd matrix) {
    const auto n = static_cast<std::size_t>(matrix.cols());
    return dense(std::move(matrix), 1, n);
  }

  /// Unitary 2D DFT followed by retaining the mask's sampled rows.
  static OperatorDescriptor fft_mask(MaskSpec mask) {
    OperatorDescriptor op;
    op.height_ = mask.height();
    op.width_ = mask.width();
    op.payload_ = std::move(mask);
    return op;
  }

  OperatorKind kind() const noexcept {
    return std::holds_alternative<MaskSpec>(payload_) ? OperatorKind::FftMask : OperatorKind::DenseMatrix;
  }

  std::size_t object_height() const noexcept { return height_; }
  std::size_t object_width() const noexcept { return width_; }
  std::size_t domain_size() const noexcept { return height_ * width_; }

  std::size_t range_size() const {
    if (kind() == OperatorKind::FftMask) return mask().sample_count();
    return static_cast<std::size_t>(matrix().rows());
  }

  const Eigen::MatrixXcd& matrix() const {
    if (kind() != OperatorKind::DenseMatrix) throw ParameterError("operator has no dense payload");
    return *std::get<std::shared_ptr<const Eigen::MatrixXcd>>(payload_);
  }

  const MaskSpec& mask() const {
    if (kind() != OperatorKind::FftMask) throw ParameterError("operator has no mask payload");
    return std::get<MaskSpec>(payload_);
  }

  void check_image(const ImageGrid& image) const {
    if (image.height() != height_ || image.width() != width_)
      throw DimensionError("image shape " + shape_string(image.height(), image.width()) +
                           " does not match operator object shape " + shape_string(height_, width_));
  }

  void check_measurement(std::span<const Complex> meas) const {
    if (meas.size() != range_size())
      throw DimensionError("measurement length " + std::to_string(meas.size()) + " does not match operator range " +
                           std::to_string(range_size()));
  }

 private:
  OperatorDescriptor() = default;

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::variant<std::shared_ptr<const Eigen::MatrixXcd>, MaskSpec> payload_;
};

namespace detail {

inline Eigen::Map<const Eigen::VectorXcd> as_vector(std::span<const Complex> v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

// Keeps only sampled rows of a full k-space grid, row-major over sampled rows.
inline Measurement select_rows(const ImageGrid& kspace, const MaskSpec& mask) {
  Measurement out;
  out.reserve(mask.sample_count());
  for (auto r : mask.sampled_rows())
    for (std::size_t c = 0; c < mask.width(); ++c) out.push_back(kspace(r, c));
  return out;
}

inline ImageGrid zero_fill(std::span<const Complex> meas, const MaskSpec& mask) {
  ImageGrid kspace(mask.height(), mask.width());
  std::size_t i = 0;
  for (auto r : mask.sampled_rows())
    for (std::size_t c = 0; c < mask.width(); ++c) kspace(r, c) = meas[i++];
  return kspace;
}

}  // namespace detail

/// H theta. For FftMask: unitary FFT, then the sampled rows (|rows| * width entries).
inline Measurement apply_forward(const OperatorDescriptor& op, const ImageGrid& image) {
  op.check_image(image);
  if (op.kind() == OperatorKind::FftMask) return detail::select_rows(fft::forward(image), op.mask());
  Eigen::VectorXcd y = op.matrix() * detail::as_vector(image.data());
  return Measurement(y.data(), y.data() + y.size());
}

/// H^dagger g. For FftMask: zero-fill unsampled rows, then unitary inverse FFT.
inline ImageGrid apply_adjoint(const OperatorDescriptor& op, std::span<const Complex> meas) {
  op.check_measurement(meas);
  if (op.kind() == OperatorKind::FftMask) return fft::inverse(detail::zero_fill(meas, op.mask()));
  Eigen::VectorXcd x = op.matrix().adjoint() * detail::as_vector(meas);
  return ImageGrid(op.object_height(), op.object_width(), std::vector<Complex>(x.data(), x.data() + x.size()));
}

/// Explicit M x N matrix of any operator, built column by column from
/// canonical basis images.
inline Eigen::MatrixXcd materialize(const OperatorDescriptor& op) {
  if (op.kind() == OperatorKind::DenseMatrix) return op.matrix();
  const auto n = op.domain_size();
  Eigen::MatrixXcd out(static_cast<Eigen::Index>(op.range_size()), static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    ImageGrid e(op.object_height(), op.object_width());
    e[j] = 1.0;
    auto col = apply_forward(op, e);
    out.col(static_cast<Eigen::Index>(j)) = detail::as_vector(col);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spectral decomposition H = sum_n sqrt(mu_n) v_n u_n^dagger with u_n in
// object space and v_n in measurement space.
// ---------------------------------------------------------------------------

struct SvdOptions {
  /// Largest M*N accepted by the dense factorization.
  std::size_t max_dense_entries = std::size_t{4096} * 4096;
};

/// Number of leading modes kept under the rule mu_P > 1/eps^2 >= mu_{P+1}.
/// A mode with mu exactly 1/eps^2 is truncated.
inline std::size_t truncation_index(std::span<const double> singular_values, double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ParameterError("epsilon must be positive and finite");
  const double cutoff = 1.0 / (epsilon * epsilon);
  std::size_t p = 0;
  while (p < singular_values.size() && singular_values[p] * singular_values[p] > cutoff) ++p;
  return p;
}

class SpectralDecomposition {
 public:
  const OperatorDescriptor& op() const noexcept { return op_; }

  /// sqrt(mu_1) >= ... >= sqrt(mu_R) > 0.
  const std::vector<double>& singular_values() const noexcept { return singular_values_; }
  std::size_t rank() const noexcept { return singular_values_.size(); }
  std::size_t truncation() const noexcept { return truncation_; }
  double epsilon() const noexcept { return epsilon_; }

  /// Right singular vector u_n (object space), 0-based.
  ImageGrid right_vector(std::size_t n) const {
    if (n >= rank()) throw ParameterError("singular index out of range");
    if (op_.kind() == OperatorKind::FftMask) {
      // u_n = H^dagger e_n: inverse FFT of one sampled frequency.
      Measurement e(rank(), Complex{0.0, 0.0});
      e[n] = 1.0;
      return apply_adjoint(op_, e);
    }
    const auto col = right_.col(static_cast<Eigen::Index>(n));
    return ImageGrid(op_.object_height(), op_.object_width(), std::vector<Complex>(col.data(), col.data() + col.size()));
  }

  /// Left singular vector v_n (measurement space), 0-based.
  Measurement left_vector(std::size_t n) const {
    if (n >= rank()) throw ParameterError("singular index out of range");
    if (op_.kind() == OperatorKind::FftMask) {
      Measurement e(rank(), Complex{0.0, 0.0});
      e[n] = 1.0;
      return e;
    }
    const auto col = left_.col(static_cast<Eigen::Index>(n));
    return Measurement(col.data(), col.data() + col.size());
  }

  /// Dense factors (DenseMatrix only): columns are u_n (N x R) and v_n (M x R).
  const Eigen::MatrixXcd& right_factors() const noexcept { return right_; }
  const Eigen::MatrixXcd& left_factors() const noexcept { return left_; }

  /// Same factorization with a different truncation tolerance.
  SpectralDecomposition with_epsilon(double epsilon) const {
    SpectralDecomposition out = *this;
    out.truncation_ = truncation_index(singular_values_, epsilon);
    out.epsilon_ = epsilon;
    return out;
  }

 private:
  friend SpectralDecomposition compute_svd(const OperatorDescriptor&, double, const SvdOptions&);

  explicit SpectralDecomposition(OperatorDescriptor op) : op_(std::move(op)) {}

  OperatorDescriptor op_;
  std::vector<double> singular_values_;
  std::size_t truncation_ = 0;
  double epsilon_ = 0.0;
  Eigen::MatrixXcd right_;
  Eigen::MatrixXcd left_;
};

/// Singular system of op with truncation index chosen for epsilon. The FftMask
/// path is analytic: every singular value is 1 and R is the sample count.
inline SpectralDecomposition compute_svd(const OperatorDescriptor& op, double epsilon, const SvdOptions& options = {}) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ParameterError("epsilon must be positive and finite");
  SpectralDecomposition dec(op);
  dec.epsilon_ = epsilon;

  if (op.kind() == OperatorKind::FftMask) {
    dec.singular_values_.assign(op.range_size(), 1.0);
    dec.truncation_ = truncation_index(dec.singular_values_, epsilon);
    return dec;
  }

  const auto& h = op.matrix();
  const auto entries = static_cast<std::size_t>(h.rows()) * static_cast<std::size_t>(h.cols());
  if (entries > options.max_dense_entries)
    throw SizeError("dense operator with " + std::to_string(entries) + " entries exceeds the factorization guard of " +
                    std::to_string(options.max_dense_entries));

  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(h, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double smax = s.size() > 0 ? s(0) : 0.0;
  const double tol = smax * static_cast<double>(std::max(h.rows(), h.cols())) * std::numeric_limits<double>::epsilon();
  Eigen::Index r = 0;
  while (r < s.size() && s(r) > tol) ++r;

  dec.singular_values_.assign(s.data(), s.data() + r);
  dec.right_ = svd.matrixV().leftCols(r);
  dec.left_ = svd.matrixU().leftCols(r);
  dec.truncation_ = truncation_index(dec.singular_values_, epsilon);
  return dec;
}

}  // namespace hmap
