#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace nvctl {

// Real-valued spectrum on an increasing frequency grid (MHz).
struct Spectrum {
  std::vector<double> freq_mhz;
  std::vector<double> amplitude;
  std::string window = "none";
  int zerofill_factor = 1;
  double record_length_us = 0.0;

  std::size_t size() const { return freq_mhz.size(); }

  // Spacing of the frequency grid; equals 1/(zero-filled record length) for DFT spectra.
  double resolution() const {
    return freq_mhz.size() > 1 ? freq_mhz[1] - freq_mhz[0] : 0.0;
  }
};

// Indices of strict interior local maxima whose height exceeds rel_threshold * global max.
inline std::vector<std::size_t> local_maxima(const Spectrum& s, double rel_threshold = 0.0) {
  std::vector<std::size_t> out;
  if (s.size() < 3) return out;
  const double top = *std::max_element(s.amplitude.begin(), s.amplitude.end());
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    const double a = s.amplitude[i];
    if (a > s.amplitude[i - 1] && a >= s.amplitude[i + 1] && a > rel_threshold * top)
      out.push_back(i);
  }
  return out;
}

// Frequency of the tallest bin inside [lo, hi].
inline double peak_frequency(const Spectrum& s, double lo, double hi) {
  double best = -1.0, where = lo;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.freq_mhz[i] < lo || s.freq_mhz[i] > hi) continue;
    if (s.amplitude[i] > best) {
      best = s.amplitude[i];
      where = s.freq_mhz[i];
    }
  }
  return where;
}

// Full width at half maximum of the peak nearest to f0, linearly interpolated.
inline double peak_fwhm(const Spectrum& s, double f0) {
  std::size_t k = 0;
  double d = 1e300;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double di = std::abs(s.freq_mhz[i] - f0);
    if (di < d) { d = di; k = i; }
  }
  // climb to the local maximum
  while (k + 1 < s.size() && s.amplitude[k + 1] > s.amplitude[k]) ++k;
  while (k > 0 && s.amplitude[k - 1] > s.amplitude[k]) --k;
  const double half = 0.5 * s.amplitude[k];
  std::size_t lo = k, hi = k;
  while (lo > 0 && s.amplitude[lo] > half) --lo;
  while (hi + 1 < s.size() && s.amplitude[hi] > half) ++hi;
  auto cross = [&](std::size_t a, std::size_t b) {
    const double ya = s.amplitude[a], yb = s.amplitude[b];
    if (ya == yb) return s.freq_mhz[a];
    return s.freq_mhz[a] + (half - ya) * (s.freq_mhz[b] - s.freq_mhz[a]) / (yb - ya);
  };
  return cross(hi - 1, hi) - cross(lo, lo + 1);
}

}  // namespace nvctl
