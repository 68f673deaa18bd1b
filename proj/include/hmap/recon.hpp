#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hmap/analysis.hpp"
#include "hmap/parallel.hpp"
#include "hmap/simulate.hpp"
#include "hmap/subspace.hpp"

namespace hmap {

/// Truncated-pseudoinverse reconstruction (zero-filled inverse FFT for FftMask).
inline ImageGrid recon_tp(std::span<const Complex> meas, const SpectralDecomposition& dec) {
  return truncated_pinv(dec, meas);
}

// ---------------------------------------------------------------------------
// Total variation
// ---------------------------------------------------------------------------

enum class TvFlavor { Isotropic, Anisotropic };

namespace tv {

/// Forward differences with a zero difference on the last row/column.
inline void gradient(std::span<const double> x, std::size_t h, std::size_t w, std::vector<double>& dx,
                     std::vector<double>& dy) {
  dx.assign(h * w, 0.0);
  dy.assign(h * w, 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    const auto row = r * w;
    for (std::size_t c = 0; c + 1 < w; ++c) dx[row + c] = x[row + c + 1] - x[row + c];
    if (r + 1 < h)
      for (std::size_t c = 0; c < w; ++c) dy[row + c] = x[row + w + c] - x[row + c];
  }
}

/// Negative adjoint of gradient().
inline void divergence(std::span<const double> px, std::span<const double> py, std::size_t h, std::size_t w,
                       std::vector<double>& out) {
  out.assign(h * w, 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    const auto row = r * w;
    if (w > 1) {
      out[row] += px[row];
      for (std::size_t c = 1; c + 1 < w; ++c) out[row + c] += px[row + c] - px[row + c - 1];
      out[row + w - 1] -= px[row + w - 2];
    }
    if (r + 1 < h)
      for (std::size_t c = 0; c < w; ++c) out[row + c] += py[row + c];
    if (r > 0)
      for (std::size_t c = 0; c < w; ++c) out[row + c] -= py[row - w + c];
  }
}

inline double channel_norm(std::span<const double> x, std::size_t h, std::size_t w, TvFlavor flavor) {
  std::vector<double> dx, dy;
  gradient(x, h, w, dx, dy);
  double acc = 0.0;
  for (std::size_t i = 0; i < dx.size(); ++i)
    acc += flavor == TvFlavor::Isotropic ? std::hypot(dx[i], dy[i]) : std::abs(dx[i]) + std::abs(dy[i]);
  return acc;
}

inline void project_dual(std::vector<double>& px, std::vector<double>& py, TvFlavor flavor) {
  for (std::size_t i = 0; i < px.size(); ++i) {
    if (flavor == TvFlavor::Isotropic) {
      const double n2 = px[i] * px[i] + py[i] * py[i];
      if (n2 > 1.0) {
        const double inv = 1.0 / std::sqrt(n2);
        px[i] *= inv;
        py[i] *= inv;
      }
    } else {
      px[i] = std::clamp(px[i], -1.0, 1.0);
      py[i] = std::clamp(py[i], -1.0, 1.0);
    }
  }
}

}  // namespace tv

/// TV seminorm of a complex image: real and imaginary channels summed.
inline double tv_norm(const ImageGrid& image, TvFlavor flavor = TvFlavor::Isotropic) {
  std::vector<double> re(image.size()), im(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    re[i] = image[i].real();
    im[i] = image[i].imag();
  }
  return tv::channel_norm(re, image.height(), image.width(), flavor) +
         tv::channel_norm(im, image.height(), image.width(), flavor);
}

struct TvProxOptions {
  std::size_t max_iters = 200;
  double tolerance = 1e-10;  ///< stop when the dual step's max change drops below this
};

/// Proximal map of weight * TV, argmin_x 1/2 ||x - z||^2 + weight * TV(x),
/// solved by accelerated projected gradient on the dual (Beck-Teboulle FGP).
/// Keeps its dual variables between calls so a sequence of nearby prox
/// problems is warm-started.
class TvProx {
 public:
  TvProx(std::size_t height, std::size_t width, TvFlavor flavor, TvProxOptions options = {})
      : h_(height), w_(width), flavor_(flavor), opts_(options) {
    for (auto& ch : channels_) {
      ch.px.assign(h_ * w_, 0.0);
      ch.py.assign(h_ * w_, 0.0);
    }
  }

  ImageGrid operator()(const ImageGrid& z, double weight) {
    if (z.height() != h_ || z.width() != w_) throw DimensionError("TV prox shape mismatch");
    if (weight < 0.0) throw ParameterError("TV prox weight must be nonnegative");
    if (weight == 0.0) return z;
    std::vector<double> re(z.size()), im(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      re[i] = z[i].real();
      im[i] = z[i].imag();
    }
    auto xr = solve(re, weight, channels_[0]);
    auto xi = solve(im, weight, channels_[1]);
    ImageGrid out(h_, w_);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = Complex{xr[i], xi[i]};
    return out;
  }

 private:
  struct Dual {
    std::vector<double> px, py;
  };

  std::vector<double> solve(const std::vector<double>& z, double weight, Dual& dual) {
    const std::size_t n = z.size();
    std::vector<double> x(n), div, gx, gy, nx(n), ny(n);
    std::vector<double> qx = dual.px, qy = dual.py;  // extrapolated point
    std::vector<double> prev_x = dual.px, prev_y = dual.py;
    double t = 1.0;
    const double step = 1.0 / (8.0 * weight);

    auto primal = [&](const std::vector<double>& px, const std::vector<double>& py) {
      tv::divergence(px, py, h_, w_, div);
      for (std::size_t i = 0; i < n; ++i) x[i] = z[i] + weight * div[i];
    };

    for (std::size_t it = 0; it < opts_.max_iters; ++it) {
      primal(qx, qy);
      tv::gradient(x, h_, w_, gx, gy);
      for (std::size_t i = 0; i < n; ++i) {
        nx[i] = qx[i] + step * gx[i];
        ny[i] = qy[i] + step * gy[i];
      }
      tv::project_dual(nx, ny, flavor_);
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      const double mom = (t - 1.0) / t_next;
      double change = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        // Distance to the extrapolated point is the gradient-mapping size; it is
        // zero only at a fixed point, unlike the change between iterates.
        const double sx = nx[i] - prev_x[i], sy = ny[i] - prev_y[i];
        change = std::max(change, std::max(std::max(std::abs(sx), std::abs(sy)),
                                           std::max(std::abs(nx[i] - qx[i]), std::abs(ny[i] - qy[i]))));
        qx[i] = nx[i] + mom * sx;
        qy[i] = ny[i] + mom * sy;
      }
      prev_x.swap(nx);
      prev_y.swap(ny);
      t = t_next;
      if (change < opts_.tolerance) break;
    }
    dual.px = prev_x;
    dual.py = prev_y;
    primal(prev_x, prev_y);
    return x;
  }

  std::size_t h_, w_;
  TvFlavor flavor_;
  TvProxOptions opts_;
  Dual channels_[2];
};

/// One-shot TV prox.
inline ImageGrid tv_prox(const ImageGrid& z, double weight, TvFlavor flavor = TvFlavor::Isotropic,
                         TvProxOptions options = {}) {
  TvProx prox(z.height(), z.width(), flavor, options);
  return prox(z, weight);
}

// ---------------------------------------------------------------------------
// Penalized least squares with TV
// ---------------------------------------------------------------------------

struct PlsTvConfig {
  double lambda = 0.0;
  std::size_t max_iters = 500;
  std::optional<double> step_size;  ///< nullopt = auto, 1/(2L) with L = ||H||^2
  TvFlavor tv_flavor = TvFlavor::Isotropic;
  double tolerance = 1e-6;          ///< relative objective change for stopping
  TvProxOptions prox{};

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ParameterError("lambda must be nonnegative");
    if (max_iters == 0) throw ParameterError("max_iters must be positive");
    if (step_size && !(*step_size > 0.0)) throw ParameterError("step_size must be positive");
    if (!(tolerance >= 0.0)) throw ParameterError("tolerance must be nonnegative");
  }
};

struct PlsTvResult {
  ImageGrid image;
  std::vector<double> objective;  ///< objective of the accepted iterate, per iteration
  std::size_t iterations = 0;
  double step_size = 0.0;
  double operator_norm_sq = 0.0;
  bool converged = false;
};

/// Squared operator norm ||H||^2 by power iteration on H^dagger H.
inline double operator_norm_sq(const OperatorDescriptor& op, std::size_t iters = 50, double tol = 1e-8) {
  rng::Stream stream(0x5eed);
  ImageGrid v(op.object_height(), op.object_width());
  for (auto& z : v.data()) z = stream.normal_pair();
  double estimate = 0.0;
  for (std::size_t k = 0; k < iters; ++k) {
    const double nv = norm2(v.data());
    if (nv == 0.0) return 0.0;
    for (auto& z : v.data()) z /= nv;
    auto w = apply_adjoint(op, apply_forward(op, v));
    const double next = inner(v.data(), w.data()).real();
    v = std::move(w);
    if (k > 0 && std::abs(next - estimate) <= tol * std::abs(next)) {
      estimate = next;
      break;
    }
    estimate = next;
  }
  return estimate;
}

inline double plstv_objective(const OperatorDescriptor& op, std::span<const Complex> meas, const ImageGrid& x,
                              double lambda, TvFlavor flavor) {
  auto hx = apply_forward(op, x);
  double fit = 0.0;
  for (std::size_t i = 0; i < hx.size(); ++i) fit += std::norm(meas[i] - hx[i]);
  return fit + (lambda > 0.0 ? lambda * tv_norm(x, flavor) : 0.0);
}

/// Approximately minimizes ||g - H x||^2 + lambda TV(x) by monotone FISTA
/// with momentum restart, starting from H^dagger g.
inline PlsTvResult recon_plstv(std::span<const Complex> meas, const OperatorDescriptor& op, const PlsTvConfig& cfg) {
  cfg.validate();
  op.check_measurement(meas);

  PlsTvResult res;
  res.operator_norm_sq = operator_norm_sq(op);
  if (cfg.step_size) {
    res.step_size = *cfg.step_size;
  } else {
    if (!(res.operator_norm_sq > 0.0)) throw SolverError("operator norm is zero; cannot choose a step size");
    res.step_size = 1.0 / (2.0 * res.operator_norm_sq);
  }
  const double s = res.step_size;

  TvProx prox(op.object_height(), op.object_width(), cfg.tv_flavor, cfg.prox);
  auto objective = [&](const ImageGrid& x) { return plstv_objective(op, meas, x, cfg.lambda, cfg.tv_flavor); };

  ImageGrid x = apply_adjoint(op, meas);
  ImageGrid x_prev = x;
  ImageGrid y = x;
  double fx = objective(x);
  double t = 1.0;
  int increases = 0;
  const double g_energy = std::max(norm2(meas) * norm2(meas), std::numeric_limits<double>::min());

  for (std::size_t k = 0; k < cfg.max_iters; ++k) {
    // Gradient step on the data term, then the TV prox.
    auto hy = apply_forward(op, y);
    for (std::size_t i = 0; i < hy.size(); ++i) hy[i] -= meas[i];
    auto grad = apply_adjoint(op, hy);
    ImageGrid v(y.height(), y.width());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = y[i] - 2.0 * s * grad[i];
    ImageGrid z = prox(v, s * cfg.lambda);
    const double fz = objective(z);

    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double f_old = fx;
    const double scale = std::max(fx, 1e-12 * g_energy);
    const bool accepted = fz <= fx;
    const bool restarted = t == 1.0;  // y == x, no momentum in this step
    if (fz > fx + 1e-6 * scale) {
      if (++increases >= 10)
        throw SolverError("PLS-TV diverged: objective increased for 10 consecutive steps with step size " +
                          std::to_string(s));
    } else {
      increases = 0;
    }

    if (accepted) {
      x_prev = x;
      x = z;
      fx = fz;
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] + (t - 1.0) / t_next * (x[i] - x_prev[i]);
      t = t_next;
    } else {
      // Monotone restart: drop momentum and restart from the best iterate.
      y = x;
      t = 1.0;
    }
    res.objective.push_back(fx);
    res.iterations = k + 1;

    // A plain prox-gradient step from x that cannot lower the objective
    // beyond rounding means x is stationary.
    const bool stalled = !accepted && restarted && fz <= fx + 1e-6 * scale;
    if (stalled || (accepted && (f_old - fx) <= cfg.tolerance * scale)) {
      res.converged = true;
      break;
    }
  }
  res.image = std::move(x);
  return res;
}

// ---------------------------------------------------------------------------
// Regularization parameter selection
// ---------------------------------------------------------------------------

struct SweepSample {
  Measurement meas;
  ImageGrid theta;
};

struct SweepRow {
  double lambda = 0.0;
  double mean_rmse = 0.0;
  double mean_tv = 0.0;
  std::vector<double> rmse;  ///< per dataset entry
};

struct SweepResult {
  double chosen_lambda = 0.0;
  std::vector<SweepRow> table;  ///< one row per candidate, in input order
};

/// Reconstructs every sample at every candidate lambda and picks the lambda
/// with lowest mean RMSE; ties go to the smaller lambda.
inline SweepResult sweep_lambda(std::span<const SweepSample> dataset, const OperatorDescriptor& op,
                                std::span<const double> candidates, PlsTvConfig base = {}, std::size_t jobs = 1) {
  if (dataset.empty()) throw ParameterError("lambda sweep needs at least one sample");
  if (candidates.empty()) throw ParameterError("lambda sweep needs at least one candidate");
  const std::size_t n = dataset.size();
  std::vector<double> rmse_cells(candidates.size() * n), tv_cells(candidates.size() * n);
  parallel_for(candidates.size() * n, jobs, [&](std::size_t cell) {
    const std::size_t li = cell / n, di = cell % n;
    PlsTvConfig cfg = base;
    cfg.lambda = candidates[li];
    auto rec = recon_plstv(dataset[di].meas, op, cfg);
    rmse_cells[cell] = rmse(rec.image, dataset[di].theta);
    tv_cells[cell] = tv_norm(rec.image, cfg.tv_flavor);
  });

  SweepResult out;
  for (std::size_t li = 0; li < candidates.size(); ++li) {
    SweepRow row;
    row.lambda = candidates[li];
    double sr = 0.0, st = 0.0;
    for (std::size_t di = 0; di < n; ++di) {
      row.rmse.push_back(rmse_cells[li * n + di]);
      sr += rmse_cells[li * n + di];
      st += tv_cells[li * n + di];
    }
    row.mean_rmse = sr / static_cast<double>(n);
    row.mean_tv = st / static_cast<double>(n);
    out.table.push_back(std::move(row));
  }
  const SweepRow* best = &out.table.front();
  for (const auto& row : out.table)
    if (row.mean_rmse < best->mean_rmse || (row.mean_rmse == best->mean_rmse && row.lambda < best->lambda))
      best = &row;
  out.chosen_lambda = best->lambda;
  return out;
}

}  // namespace hmap
