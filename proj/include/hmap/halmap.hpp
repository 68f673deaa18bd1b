#pragma once

#include <span>
#include <string>
#include <vector>

#include "hmap/subspace.hpp"
#include "hmap/transform.hpp"

namespace hmap {

/// Relative zero-tolerance of the pixelwise indicator: a null-component pixel
/// counts as nonzero when its magnitude exceeds this times ||theta_hat||_inf.
inline constexpr double kIndicatorTolerance = 1e-12;

/// theta_hat - theta.
inline ImageGrid error_map(const ImageGrid& theta_hat, const ImageGrid& theta) {
  require_same_shape(theta_hat, theta, "error map");
  return theta_hat - theta;
}

/// Measurement-space hallucination map P_meas(theta_hat) - H_P^+ g. Needs no
/// knowledge of the true object.
inline ImageGrid meas_hallucination_map(const ImageGrid& theta_hat, const SpectralDecomposition& dec,
                                        std::span<const Complex> meas) {
  return project_meas(dec, theta_hat) - truncated_pinv(dec, meas);
}

/// Measurement-component error map P_meas(theta_hat) - P_meas(theta).
inline ImageGrid meas_error_map(const ImageGrid& theta_hat, const ImageGrid& theta, const SpectralDecomposition& dec) {
  require_same_shape(theta_hat, theta, "measurement error map");
  return project_meas(dec, theta_hat) - project_meas(dec, theta);
}

namespace detail {

inline ImageGrid indicator_product(const ImageGrid& null_hat, const ImageGrid& null_true, double scale) {
  const double tau = kIndicatorTolerance * scale;
  ImageGrid out(null_hat.height(), null_hat.width());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (std::abs(null_hat[i]) > tau) out[i] = null_hat[i] - null_true[i];
  return out;
}

}  // namespace detail

/// Null-space hallucination map 1(theta_hat_null) . (theta_hat_null - theta_null).
/// Pixels where the estimate has no null component are exactly zero.
inline ImageGrid null_hallucination_map(const ImageGrid& theta_hat, const ImageGrid& theta,
                                        const SpectralDecomposition& dec) {
  require_same_shape(theta_hat, theta, "null hallucination map");
  return detail::indicator_product(project_null(dec, theta_hat), project_null(dec, theta), norm_inf(theta_hat.data()));
}

/// Sample bias (1/K) sum theta_hat_k - theta.
inline ImageGrid bias_map(std::span<const ImageGrid> estimates, const ImageGrid& theta) {
  if (estimates.empty()) throw ParameterError("bias map needs at least one estimate");
  ImageGrid mean(theta.height(), theta.width());
  for (const auto& e : estimates) {
    require_same_shape(e, theta, "bias map");
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += e[i];
  }
  const double inv = 1.0 / static_cast<double>(estimates.size());
  for (auto& z : mean.data()) z *= inv;
  return mean - theta;
}

/// Everything Algorithm-style analysis produces for one reconstructed image.
struct HallucinationReport {
  std::string image_id;
  ImageGrid theta_tp;          ///< truncated pseudoinverse solution
  ImageGrid error_map;         ///< theta_hat - theta
  ImageGrid meas_hm;           ///< theta_hat_meas - theta_tp
  ImageGrid meas_error_map;    ///< theta_hat_meas - theta_meas
  ImageGrid null_hm;           ///< 1(theta_hat_null) . (theta_hat_null - theta_null)
  ImageGrid shm_mask;          ///< specific null-space hallucination map
  std::vector<Region> shm_regions;
  ImageGrid specific_error_mask;  ///< same transform applied to the error map
  std::vector<Region> specific_error_regions;
};

/// Runs the full procedure: truncated pseudoinverse, measurement and null
/// components, both hallucination maps, then the specific map. The error map
/// and its specific counterpart are produced alongside for comparison.
inline HallucinationReport compute_report(const ImageGrid& theta_hat, const ImageGrid& theta,
                                          std::span<const Complex> meas, const SpectralDecomposition& dec,
                                          const TransformConfig& cfg = {}, std::string image_id = {}) {
  require_same_shape(theta_hat, theta, "hallucination report");
  dec.op().check_image(theta);
  HallucinationReport rep;
  rep.image_id = std::move(image_id);

  // 1. stable estimate from the data
  rep.theta_tp = truncated_pinv(dec, meas);
  // 2. measurement component of the estimate
  const auto hat_meas = project_meas(dec, theta_hat);
  // 3. null components of the object and the estimate
  const auto true_meas = project_meas(dec, theta);
  const auto true_null = theta - true_meas;
  const auto hat_null = theta_hat - hat_meas;
  // 4. measurement-space hallucination map
  rep.meas_hm = hat_meas - rep.theta_tp;
  // 5. null-space hallucination map
  rep.null_hm = detail::indicator_product(hat_null, true_null, norm_inf(theta_hat.data()));
  // 6. specific hallucination map
  auto shm = specific_map(rep.null_hm, theta, cfg);
  rep.shm_mask = std::move(shm.mask);
  rep.shm_regions = std::move(shm.regions);

  rep.error_map = theta_hat - theta;
  rep.meas_error_map = hat_meas - true_meas;
  auto sem = specific_map(rep.error_map, theta, cfg);
  rep.specific_error_mask = std::move(sem.mask);
  rep.specific_error_regions = std::move(sem.regions);
  return rep;
}

}  // namespace hmap
