#pragma once

#include <cmath>
#include <span>

#include "hmap/linop.hpp"

namespace hmap {

/// Truncation tolerance that keeps every mode above 1e-6.
inline constexpr double kDefaultEpsilon = 1e6;

/// Truncated pseudoinverse estimate H_P^+ g = sum_{n<=P} mu_n^-1/2 u_n v_n^dagger g.
/// For FftMask with P = R this is zero-fill + unitary inverse FFT. P = 0
/// returns the zero image.
inline ImageGrid truncated_pinv(const SpectralDecomposition& dec, std::span<const Complex> meas) {
  const auto& op = dec.op();
  op.check_measurement(meas);
  const auto p = dec.truncation();
  if (p == 0) return ImageGrid(op.object_height(), op.object_width());

  if (op.kind() == OperatorKind::FftMask) {
    // All singular values are 1, so P is either 0 or R.
    return apply_adjoint(op, meas);
  }

  const auto pi = static_cast<Eigen::Index>(p);
  Eigen::VectorXcd coeffs = dec.left_factors().leftCols(pi).adjoint() * detail::as_vector(meas);
  for (Eigen::Index n = 0; n < pi; ++n) coeffs(n) /= dec.singular_values()[static_cast<std::size_t>(n)];
  Eigen::VectorXcd x = dec.right_factors().leftCols(pi) * coeffs;
  return ImageGrid(op.object_height(), op.object_width(), std::vector<Complex>(x.data(), x.data() + x.size()));
}

/// theta_meas = H_P^+ H theta, evaluated as composed applies.
inline ImageGrid project_meas(const SpectralDecomposition& dec, const ImageGrid& image) {
  dec.op().check_image(image);
  return truncated_pinv(dec, apply_forward(dec.op(), image));
}

/// theta_null = theta - theta_meas.
inline ImageGrid project_null(const SpectralDecomposition& dec, const ImageGrid& image) {
  return image - project_meas(dec, image);
}

struct StabilityReport {
  double lhs = 0.0;    ///< ||H_P^+ g1 - H_P^+ g2||
  double rhs = 0.0;    ///< ||g1 - g2||
  double alpha = 0.0;  ///< 1 / sqrt(mu_P), 0 when P = 0
  bool holds = true;   ///< lhs <= alpha * rhs + 1e-12
};

/// Checks the Lipschitz bound of the truncated pseudoinverse on one pair.
inline StabilityReport verify_stability(const SpectralDecomposition& dec, std::span<const Complex> g1,
                                        std::span<const Complex> g2) {
  if (g1.size() != g2.size()) throw DimensionError("stability check on measurements of different lengths");
  StabilityReport rep;
  Measurement diff(g1.size());
  for (std::size_t i = 0; i < g1.size(); ++i) diff[i] = g1[i] - g2[i];
  rep.rhs = norm2(diff);
  const auto p = dec.truncation();
  if (p == 0) {
    dec.op().check_measurement(g1);
    return rep;
  }
  rep.alpha = 1.0 / dec.singular_values()[p - 1];
  const auto a = truncated_pinv(dec, g1);
  const auto b = truncated_pinv(dec, g2);
  rep.lhs = norm2((a - b).data());
  rep.holds = rep.lhs <= rep.alpha * rep.rhs + 1e-12;
  return rep;
}

}  // namespace hmap
