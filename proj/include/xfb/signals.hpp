#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "xfb/errors.hpp"

// Fourier-method resampling and fixed band-power featurization of raw epochs.

namespace xfb {

struct Epoch {
  std::vector<double> samples;
  std::uint32_t rate_hz = 0;
};

namespace detail {

// One FFT object per thread so kissfft plans are reused across calls without
// locking; all entry points stay safe to call from concurrent workers.
inline Eigen::FFT<double>& fft_engine() {
  thread_local Eigen::FFT<double> fft = [] {
    Eigen::FFT<double> f;
    f.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    return f;
  }();
  return fft;
}

}  // namespace detail

// Resamples by real-FFT half-spectrum truncation (down) or zero-padding (up).
// Output length = round(n * target/source); amplitudes are rescaled by
// new_len/old_len so an in-band sinusoid keeps its amplitude; the shared
// Nyquist bin is doubled/halved when the smaller length is even, which keeps
// real signals real and preserves energy at the fold.
inline Epoch fourier_resample(const Epoch& epoch, std::uint32_t target_rate_hz) {
  if (epoch.rate_hz < 1 || target_rate_hz < 1)
    throw InvalidRate("fourier_resample: rates must be positive");
  if (epoch.samples.size() < 2)
    throw InvalidRate("fourier_resample: need at least 2 samples");
  if (target_rate_hz == epoch.rate_hz) return epoch;

  const std::size_t n = epoch.samples.size();
  const auto m = static_cast<std::size_t>(std::llround(
      static_cast<double>(n) * target_rate_hz / epoch.rate_hz));
  if (m < 1) throw InvalidRate("fourier_resample: output would be empty");

  auto& fft = detail::fft_engine();
  std::vector<std::complex<double>> spectrum;
  fft.fwd(spectrum, epoch.samples);

  std::vector<std::complex<double>> resized(m / 2 + 1, {0.0, 0.0});
  const std::size_t shared = std::min(m, n);
  for (std::size_t k = 0; k < shared / 2 + 1; ++k) resized[k] = spectrum[k];
  if (shared % 2 == 0) {
    if (m < n)
      resized[shared / 2] *= 2.0;  // fold the dropped conjugate half in
    else if (m > n)
      resized[shared / 2] *= 0.5;  // split between bin and new conjugate
  }

  Epoch out;
  out.rate_hz = target_rate_hz;
  fft.inv(out.samples, resized, static_cast<int>(m));
  const double scale = static_cast<double>(m) / static_cast<double>(n);
  for (double& v : out.samples) v *= scale;
  return out;
}

// delta, theta, alpha, sigma, beta in Hz
inline constexpr std::array<std::pair<double, double>, 5> kBands = {
    {{0.5, 4.0}, {4.0, 8.0}, {8.0, 13.0}, {12.0, 16.0}, {16.0, 30.0}}};

inline constexpr double kBandLogFloor = -12.0;
inline constexpr std::uint32_t kMinFeatureRate = 64;  // beta top below Nyquist

// log10 of mean one-sided periodogram power per band (Hann window over the
// full epoch, no segment averaging). The periodogram is normalized so its
// bin sum estimates the signal's mean-square power.
inline std::array<double, 5> bandpower_features(const Epoch& epoch) {
  if (epoch.rate_hz < kMinFeatureRate)
    throw RateTooLow("bandpower_features: rate below 64 Hz");
  const std::size_t n = epoch.samples.size();
  if (n < 2) throw InvalidRate("bandpower_features: need at least 2 samples");

  std::vector<double> windowed(n);
  double wsq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w =
        0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                              static_cast<double>(n)));
    windowed[i] = epoch.samples[i] * w;
    wsq += w * w;
  }

  auto& fft = detail::fft_engine();
  std::vector<std::complex<double>> spectrum;
  fft.fwd(spectrum, windowed);

  const double denom = static_cast<double>(n) * wsq;
  std::array<double, 5> features{};
  for (std::size_t b = 0; b < kBands.size(); ++b) {
    const auto [lo, hi] = kBands[b];
    double power = 0.0;
    std::size_t bins = 0;
    for (std::size_t k = 0; k < spectrum.size(); ++k) {
      const double f = static_cast<double>(k) * epoch.rate_hz /
                       static_cast<double>(n);
      if (f < lo || f > hi) continue;
      const bool one_sided_unique = k == 0 || (n % 2 == 0 && k == n / 2);
      const double c = one_sided_unique ? 1.0 : 2.0;
      power += c * std::norm(spectrum[k]) / denom;
      ++bins;
    }
    const double mean = bins > 0 ? power / static_cast<double>(bins) : 0.0;
    features[b] = std::log10(std::max(mean, std::pow(10.0, kBandLogFloor)));
  }
  return features;
}

// Total one-sided periodogram power (same normalization); exposed for sanity
// checks like a unit sine integrating to ~0.5.
inline double periodogram_total_power(const Epoch& epoch) {
  const std::size_t n = epoch.samples.size();
  if (n < 2) throw InvalidRate("periodogram_total_power: need at least 2 samples");
  std::vector<double> windowed(n);
  double wsq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w =
        0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                              static_cast<double>(n)));
    windowed[i] = epoch.samples[i] * w;
    wsq += w * w;
  }
  auto& fft = detail::fft_engine();
  std::vector<std::complex<double>> spectrum;
  fft.fwd(spectrum, windowed);
  const double denom = static_cast<double>(n) * wsq;
  double total = 0.0;
  for (std::size_t k = 0; k < spectrum.size(); ++k) {
    const bool one_sided_unique = k == 0 || (n % 2 == 0 && k == n / 2);
    total += (one_sided_unique ? 1.0 : 2.0) * std::norm(spectrum[k]) / denom;
  }
  return total;
}

}  // namespace xfb
