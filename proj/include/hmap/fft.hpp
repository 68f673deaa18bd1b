#pragma once

#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include <fftw3.h>

#include "hmap/image.hpp"

namespace hmap::fft {

namespace detail {

// FFTW planning is not thread-safe, execution is. Plans are created once per
// (height, width, direction) and executed with the new-array interface.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(int height, int width, int sign) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto key = std::make_tuple(height, width, sign);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    std::vector<std::complex<double>> a(static_cast<std::size_t>(height) * width);
    std::vector<std::complex<double>> b(a.size());
    fftw_plan p = fftw_plan_dft_2d(height, width, reinterpret_cast<fftw_complex*>(a.data()),
                                   reinterpret_cast<fftw_complex*>(b.data()), sign,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_.emplace(key, p);
    return p;
  }

  PlanCache(const PlanCache&) = delete;
  PlanCache& operator=(const PlanCache&) = delete;

  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  PlanCache() = default;
  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

inline ImageGrid transform(const ImageGrid& in, int sign) {
  ImageGrid out(in.height(), in.width());
  fftw_plan p = PlanCache::instance().get(static_cast<int>(in.height()), static_cast<int>(in.width()), sign);
  // FFTW never writes to the input of an out-of-place complex DFT.
  auto* src = reinterpret_cast<fftw_complex*>(const_cast<Complex*>(in.data().data()));
  auto* dst = reinterpret_cast<fftw_complex*>(out.data().data());
  fftw_execute_dft(p, src, dst);
  const double scale = 1.0 / std::sqrt(static_cast<double>(in.size()));
  for (auto& z : out.data()) z *= scale;
  return out;
}

}  // namespace detail

/// Unitary forward 2D DFT, DC-first ordering: X[k,l] = N^-1/2 sum x[r,c] e^{-2 pi i (kr/H + lc/W)}.
inline ImageGrid forward(const ImageGrid& image) { return detail::transform(image, FFTW_FORWARD); }

/// Unitary inverse 2D DFT; exact inverse of forward().
inline ImageGrid inverse(const ImageGrid& kspace) { return detail::transform(kspace, FFTW_BACKWARD); }

}  // namespace hmap::fft
