#pragma once

// EEG preprocessing: fixed-length segmentation, Butterworth bandpass
// filtering (optionally zero-phase), per-channel normalization with DC
// removal, amplitude-based artifact rejection and five-band decomposition
// (per-band zero-phase Butterworth, or Db4 wavelet-packet reconstruction).

#include <nsk/core.hpp>
#include <nsk/dataio.hpp>

#include <array>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

namespace nsk::preprocess {

struct Epoch {
  std::string subject_id;
  int window_index = 0;
  double fs_hz = 0.0;
  Mat samples;  // n_samples x n_channels

  Eigen::Index n_samples() const { return samples.rows(); }
  Eigen::Index n_channels() const { return samples.cols(); }
};

struct BandEpoch {
  dataio::Band band;
  Epoch epoch;
};

struct BandSet {
  std::string subject_id;
  int window_index = 0;
  double fs_hz = 0.0;
  std::vector<BandEpoch> entries;  // one per configured band, config order
};

// ---------------------------------------------------------------------------
// Segmentation

inline std::vector<Epoch> segment(const dataio::EegRecording& rec, double window_s) {
  if (window_s <= 0.0) throw DataError("window_s must be positive");
  const auto win = static_cast<Eigen::Index>(std::llround(window_s * rec.fs_hz));
  if (win == 0) throw DataError("window shorter than one sample");
  const Eigen::Index count = rec.n_samples() / win;
  std::vector<Epoch> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index w = 0; w < count; ++w) {
    Epoch e;
    e.subject_id = rec.subject_id;
    e.window_index = static_cast<int>(w);
    e.fs_hz = rec.fs_hz;
    e.samples = rec.samples.middleRows(w * win, win);
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Butterworth bandpass as cascaded biquads
//
// Design: analog Butterworth lowpass prototype, lowpass-to-bandpass
// transform, bilinear transform with frequency prewarping. Gain is
// normalized to 1 at the (digital) center frequency. The realized filter
// order is 2x the prototype order.

struct Biquad {
  double b0 = 0, b1 = 0, b2 = 0;  // numerator
  double a1 = 0, a2 = 0;          // denominator, a0 = 1
};

inline std::vector<Biquad> design_butterworth_bandpass(int order, double lo_hz, double hi_hz,
                                                       double fs_hz) {
  if (order < 1) throw DataError("filter order must be >= 1");
  if (!(0.0 < lo_hz && lo_hz < hi_hz && hi_hz < fs_hz / 2.0))
    throw DataError("band edges must satisfy 0 < lo < hi < fs/2");

  using cd = std::complex<double>;
  const double k = 2.0 * fs_hz;
  const double wl = k * std::tan(M_PI * lo_hz / fs_hz);
  const double wh = k * std::tan(M_PI * hi_hz / fs_hz);
  const double w0 = std::sqrt(wl * wh);
  const double bw = wh - wl;

  // analog bandpass poles from the prototype
  std::vector<cd> poles;
  poles.reserve(static_cast<std::size_t>(2 * order));
  for (int i = 0; i < order; ++i) {
    const double theta = M_PI * (2.0 * i + order + 1.0) / (2.0 * order);
    const cd p(std::cos(theta), std::sin(theta));
    const cd bp = bw * p;
    const cd disc = std::sqrt(bp * bp - 4.0 * w0 * w0);
    poles.push_back((bp + disc) / 2.0);
    poles.push_back((bp - disc) / 2.0);
  }

  // bilinear transform
  std::vector<cd> zpoles;
  for (const cd& s : poles) zpoles.push_back((k + s) / (k - s));

  // pair into real-coefficient sections: conjugate pairs, then real poles in order
  const double eps = 1e-10;
  std::vector<cd> cplx, real;
  for (const cd& p : zpoles) {
    if (p.imag() > eps)
      cplx.push_back(p);
    else if (p.imag() >= -eps)
      real.push_back(p);
  }
  auto by_re_im = [](const cd& a, const cd& b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  };
  std::sort(cplx.begin(), cplx.end(), by_re_im);
  std::sort(real.begin(), real.end(), by_re_im);

  std::vector<Biquad> sections;
  for (const cd& p : cplx) {
    Biquad s;
    s.b0 = 1.0;
    s.b1 = 0.0;
    s.b2 = -1.0;  // zeros at z = +1 and z = -1
    s.a1 = -2.0 * p.real();
    s.a2 = std::norm(p);
    sections.push_back(s);
  }
  for (std::size_t i = 0; i + 1 < real.size(); i += 2) {
    Biquad s;
    s.b0 = 1.0;
    s.b1 = 0.0;
    s.b2 = -1.0;
    s.a1 = -(real[i].real() + real[i + 1].real());
    s.a2 = real[i].real() * real[i + 1].real();
    sections.push_back(s);
  }
  if (sections.size() != static_cast<std::size_t>(order))
    throw DataError("butterworth design failed to pair poles");

  // unit gain at the digital center frequency
  const double theta0 = 2.0 * std::atan(w0 / k);
  const cd z = std::polar(1.0, theta0);
  const cd z2 = z * z;
  cd h(1.0, 0.0);
  for (const Biquad& s : sections) h *= (s.b0 * z2 + s.b1 * z + s.b2) / (z2 + s.a1 * z + s.a2);
  const double g = 1.0 / std::abs(h);
  sections.front().b0 *= g;
  sections.front().b1 *= g;
  sections.front().b2 *= g;
  return sections;
}

// Direct form II transposed, zero initial state.
inline Vec sosfilt(const std::vector<Biquad>& sections, Vec x) {
  for (const Biquad& s : sections) {
    double s1 = 0.0, s2 = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double in = x[i];
      const double out = s.b0 * in + s1;
      s1 = s.b1 * in - s.a1 * out + s2;
      s2 = s.b2 * in - s.a2 * out;
      x[i] = out;
    }
  }
  return x;
}

// Forward-backward filtering with odd-reflection padding at both ends.
// Doubles the effective order and cancels group delay.
inline Vec filtfilt(const std::vector<Biquad>& sections, const Vec& x) {
  const Eigen::Index n = x.size();
  if (n < 2) return x;
  const Eigen::Index pad =
      std::min<Eigen::Index>(n - 1, static_cast<Eigen::Index>(6 * sections.size()));
  Vec ext(n + 2 * pad);
  for (Eigen::Index i = 0; i < pad; ++i) ext[i] = 2.0 * x[0] - x[pad - i];
  ext.segment(pad, n) = x;
  for (Eigen::Index i = 0; i < pad; ++i) ext[n + pad + i] = 2.0 * x[n - 1] - x[n - 2 - i];

  ext = sosfilt(sections, std::move(ext));
  ext.reverseInPlace();
  ext = sosfilt(sections, std::move(ext));
  ext.reverseInPlace();
  return ext.segment(pad, n);
}

inline Epoch butterworth_bandpass(const Epoch& e, double lo_hz, double hi_hz, int order = 3,
                                  bool zero_phase = true) {
  const auto sections = design_butterworth_bandpass(order, lo_hz, hi_hz, e.fs_hz);
  Epoch out = e;
  for (Eigen::Index c = 0; c < e.n_channels(); ++c) {
    Vec ch = e.samples.col(c);
    out.samples.col(c) = zero_phase ? filtfilt(sections, ch) : sosfilt(sections, std::move(ch));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization: per channel, subtract mean then divide by the population
// standard deviation. Constant channels become all-zero and are flagged.

struct NormalizeResult {
  Epoch epoch;
  std::vector<bool> degenerate;  // per channel

  bool any_degenerate() const {
    for (bool d : degenerate)
      if (d) return true;
    return false;
  }
};

inline NormalizeResult normalize_epoch(const Epoch& e) {
  NormalizeResult res;
  res.epoch = e;
  res.degenerate.assign(static_cast<std::size_t>(e.n_channels()), false);
  const double n = static_cast<double>(e.n_samples());
  for (Eigen::Index c = 0; c < e.n_channels(); ++c) {
    const double mean = e.samples.col(c).mean();
    Vec centered = e.samples.col(c).array() - mean;
    const double sd = std::sqrt(centered.squaredNorm() / n);
    if (sd == 0.0) {
      res.epoch.samples.col(c).setZero();
      res.degenerate[static_cast<std::size_t>(c)] = true;
    } else {
      res.epoch.samples.col(c) = centered / sd;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Artifact rejection on raw microvolt data; bounds inclusive.

enum class ArtifactDecision { keep, drop };

inline ArtifactDecision reject_artifacts(const Epoch& e, double limit_uv = 150.0) {
  return e.samples.cwiseAbs().maxCoeff() > limit_uv ? ArtifactDecision::drop
                                                    : ArtifactDecision::keep;
}

// ---------------------------------------------------------------------------
// Db4 wavelet packets (periodized, orthonormal)

namespace db4 {

// rec_lo scaling coefficients; sum = sqrt(2), unit energy
inline constexpr std::array<double, 8> kScaling = {
    0.23037781330885523, 0.7148465705525415,   0.6308807679295904,  -0.02798376941698385,
    -0.18703481171888114, 0.030841381835986965, 0.032883011666982945, -0.010597401784997278};

inline double wavelet_tap(int m) {
  return (m % 2 == 0 ? 1.0 : -1.0) * kScaling[static_cast<std::size_t>(7 - m)];
}

// one periodized analysis step: x (even length) -> [approx | detail]
inline void analysis_step(const std::vector<double>& x, std::vector<double>& a,
                          std::vector<double>& d) {
  const std::size_t n = x.size(), half = n / 2;
  a.assign(half, 0.0);
  d.assign(half, 0.0);
  for (std::size_t k = 0; k < half; ++k) {
    double sa = 0.0, sd = 0.0;
    for (int m = 0; m < 8; ++m) {
      const double v = x[(2 * k + static_cast<std::size_t>(m)) % n];
      sa += kScaling[static_cast<std::size_t>(m)] * v;
      sd += wavelet_tap(m) * v;
    }
    a[k] = sa;
    d[k] = sd;
  }
}

// inverse of analysis_step
inline std::vector<double> synthesis_step(const std::vector<double>& a,
                                          const std::vector<double>& d) {
  const std::size_t half = a.size(), n = 2 * half;
  std::vector<double> x(n, 0.0);
  for (std::size_t k = 0; k < half; ++k) {
    for (int m = 0; m < 8; ++m) {
      const std::size_t i = (2 * k + static_cast<std::size_t>(m)) % n;
      x[i] += a[k] * kScaling[static_cast<std::size_t>(m)] + d[k] * wavelet_tap(m);
    }
  }
  return x;
}

// Full packet tree to the given depth. Leaves are stored in natural order
// (recursive [approx, detail]); the frequency interval of each leaf is
// tracked explicitly since detail branches mirror the spectrum.
struct PacketLeaf {
  std::vector<double> coeffs;
  double lo_hz = 0.0;
  double hi_hz = 0.0;
};

inline void decompose_rec(const std::vector<double>& x, int depth, double lo, double hi,
                          bool flipped, std::vector<PacketLeaf>& leaves) {
  if (depth == 0) {
    leaves.push_back({x, lo, hi});
    return;
  }
  std::vector<double> a, d;
  analysis_step(x, a, d);
  const double mid = 0.5 * (lo + hi);
  if (!flipped) {
    decompose_rec(a, depth - 1, lo, mid, false, leaves);
    decompose_rec(d, depth - 1, mid, hi, true, leaves);
  } else {
    decompose_rec(a, depth - 1, mid, hi, true, leaves);
    decompose_rec(d, depth - 1, lo, mid, false, leaves);
  }
}

inline std::vector<double> reconstruct_rec(std::vector<PacketLeaf>::const_iterator& it, int depth) {
  if (depth == 0) {
    return (it++)->coeffs;
  }
  std::vector<double> a = reconstruct_rec(it, depth - 1);
  std::vector<double> d = reconstruct_rec(it, depth - 1);
  return synthesis_step(a, d);
}

}  // namespace db4

// Reconstructs the signal from packet leaves whose frequency intervals have
// their midpoint inside [lo_hz, hi_hz). Approximate: dyadic bins rarely
// align with requested band edges.
inline Vec db4_packet_bandpass(const Vec& x, double fs_hz, double lo_hz, double hi_hz, int depth) {
  const std::size_t n = static_cast<std::size_t>(x.size());
  const std::size_t block = std::size_t{1} << depth;
  const std::size_t padded = (n + block - 1) / block * block;
  std::vector<double> sig(padded);
  for (std::size_t i = 0; i < n; ++i) sig[i] = x[static_cast<Eigen::Index>(i)];
  for (std::size_t i = n; i < padded; ++i) {
    // odd reflection continuation to fill the last block
    const std::size_t j = n >= 2 ? (n - 2 - ((i - n) % (n - 1))) : 0;
    sig[i] = 2.0 * sig[n - 1] - sig[j];
  }
  std::vector<db4::PacketLeaf> leaves;
  db4::decompose_rec(sig, depth, 0.0, fs_hz / 2.0, false, leaves);
  for (auto& leaf : leaves) {
    const double mid = 0.5 * (leaf.lo_hz + leaf.hi_hz);
    if (!(lo_hz <= mid && mid < hi_hz))
      std::fill(leaf.coeffs.begin(), leaf.coeffs.end(), 0.0);
  }
  auto it = leaves.cbegin();
  std::vector<double> rec = db4::reconstruct_rec(it, depth);
  Vec out(x.size());
  for (std::size_t i = 0; i < n; ++i) out[static_cast<Eigen::Index>(i)] = rec[i];
  return out;
}

// ---------------------------------------------------------------------------
// Band decomposition

inline BandSet band_decompose(const Epoch& e, const std::vector<dataio::Band>& bands,
                              dataio::Decomposition method = dataio::Decomposition::bandpass) {
  for (const auto& b : bands)
    if (!(0.0 < b.lo_hz && b.lo_hz < b.hi_hz && b.hi_hz < e.fs_hz / 2.0))
      throw DataError("band '" + b.name + "' invalid against fs = " + std::to_string(e.fs_hz));

  BandSet set;
  set.subject_id = e.subject_id;
  set.window_index = e.window_index;
  set.fs_hz = e.fs_hz;

  if (method == dataio::Decomposition::bandpass) {
    for (const auto& b : bands)
      set.entries.push_back({b, butterworth_bandpass(e, b.lo_hz, b.hi_hz, 3, true)});
    return set;
  }

  // Db4 packet mode: depth chosen so dyadic bins are no wider than the
  // narrowest configured band (capped for cost and signal length).
  double min_width = e.fs_hz;
  for (const auto& b : bands) min_width = std::min(min_width, b.hi_hz - b.lo_hz);
  int depth = 1;
  while (depth < 10 && e.fs_hz / 2.0 / (1 << depth) > min_width &&
         (Eigen::Index{1} << (depth + 1)) <= e.n_samples())
    ++depth;

  for (const auto& b : bands) {
    Epoch be = e;
    for (Eigen::Index c = 0; c < e.n_channels(); ++c)
      be.samples.col(c) = db4_packet_bandpass(e.samples.col(c), e.fs_hz, b.lo_hz, b.hi_hz, depth);
    set.entries.push_back({b, std::move(be)});
  }
  return set;
}

}  // namespace nsk::preprocess
