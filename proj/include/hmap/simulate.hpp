#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

#include "hmap/linop.hpp"

namespace hmap {

struct NoiseConfig {
  double gaussian_sigma = 0.0;         ///< std of iid Gaussian noise per real/imag channel
  double phase_noise_amplitude = 0.0;  ///< uniform phase in [-a, a] radians
  std::uint64_t seed = 0;

  void validate() const {
    if (!(gaussian_sigma >= 0.0) || !std::isfinite(gaussian_sigma))
      throw ParameterError("gaussian_sigma must be nonnegative");
    if (!(phase_noise_amplitude >= 0.0) || phase_noise_amplitude > std::numbers::pi)
      throw ParameterError("phase_noise_amplitude must lie in [0, pi]");
  }
};

namespace rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Seed of the substream identified by (seed, image_id, tag).
inline std::uint64_t substream_seed(std::uint64_t seed, std::string_view image_id, std::string_view tag) {
  return splitmix64(splitmix64(seed) ^ fnv1a64(image_id) ^ splitmix64(fnv1a64(tag)));
}

/// Portable stream: mt19937_64 output is fixed by the standard, and the
/// uniform/normal transforms below avoid implementation-defined distributions.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}

  Stream(std::uint64_t seed, std::string_view image_id, std::string_view tag)
      : engine_(substream_seed(seed, image_id, tag)) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1].
  double uniform_open0() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }

  /// Two independent N(0, 1) draws (Box-Muller) packed as a complex number.
  Complex normal_pair() {
    const double r = std::sqrt(-2.0 * std::log(uniform_open0()));
    const double t = 2.0 * std::numbers::pi * uniform();
    return {r * std::cos(t), r * std::sin(t)};
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace rng

/// Pixelwise uniform phase in [-a, a] over the full k-space grid, row-major.
inline ImageGrid draw_phase_field(std::size_t height, std::size_t width, double amplitude, rng::Stream& stream) {
  ImageGrid phase(height, width);
  for (auto& z : phase.data()) z = amplitude * (2.0 * stream.uniform() - 1.0);
  return phase;
}

/// g = Mask(e^{i phi} . FFT(theta)) + n for an explicit phase field and
/// Gaussian stream. phase may be empty (no model error).
inline Measurement simulate_measurement(const ImageGrid& theta, const MaskSpec& mask, const ImageGrid* phase,
                                        double gaussian_sigma, rng::Stream& gauss) {
  if (theta.height() != mask.height() || theta.width() != mask.width())
    throw DimensionError("image shape " + shape_string(theta.height(), theta.width()) + " does not match mask " +
                         shape_string(mask.height(), mask.width()));
  auto kspace = fft::forward(theta);
  if (phase) {
    require_same_shape(*phase, kspace, "phase field");
    for (std::size_t i = 0; i < kspace.size(); ++i) kspace[i] *= std::polar(1.0, (*phase)[i].real());
  }
  auto g = detail::select_rows(kspace, mask);
  if (gaussian_sigma > 0.0)
    for (auto& z : g) z += gaussian_sigma * gauss.normal_pair();
  return g;
}

/// Simulates one acquisition with substreams keyed by (noise.seed, image_id):
/// tag "phase" for the phase field, tag "gauss" for additive noise.
inline Measurement simulate_measurement(const ImageGrid& theta, const MaskSpec& mask, const NoiseConfig& noise,
                                        std::string_view image_id = {}) {
  noise.validate();
  rng::Stream gauss(noise.seed, image_id, "gauss");
  if (noise.phase_noise_amplitude > 0.0) {
    rng::Stream ph(noise.seed, image_id, "phase");
    const auto phase = draw_phase_field(mask.height(), mask.width(), noise.phase_noise_amplitude, ph);
    return simulate_measurement(theta, mask, &phase, noise.gaussian_sigma, gauss);
  }
  return simulate_measurement(theta, mask, nullptr, noise.gaussian_sigma, gauss);
}

/// The perturbed operator H~ theta = Mask(e^{i phi} . FFT(theta)) without additive noise.
inline Measurement apply_perturbed(const ImageGrid& theta, const MaskSpec& mask, const ImageGrid& phase) {
  rng::Stream unused(0);
  return simulate_measurement(theta, mask, &phase, 0.0, unused);
}

}  // namespace hmap
