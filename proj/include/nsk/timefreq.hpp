#pragma once

// GFP-to-image pipeline: moving-average smoothing, z-scoring, complex
// Morlet CWT (127 scales by default) and bilinear resize to a normalized
// 128x128 image.
//
// Morlet convention: center frequency 1.0, bandwidth 1.0 ("cmor1.0-1.0"),
// L1-normalized so a pure sinusoid's ridge sits at the scale whose
// pseudo-frequency (fs / scale) matches the tone. Scales are geometric,
// spanning pseudo-frequencies [0.5, 0.45 * fs]. Edges are zero-padded.

#include <nsk/core.hpp>
#include <nsk/dataio.hpp>
#include <nsk/microstate.hpp>

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <map>
#include <vector>

namespace nsk::timefreq {

struct Scalogram {
  Mat magnitudes;  // n_scales x n_samples
  Vec scales;      // ascending, in samples
  double fs_hz = 0.0;

  double pseudo_freq(Eigen::Index row) const { return fs_hz / scales[row]; }
};

struct TfImage {
  Mat pixels;  // 128 x 128, values in [0,1]
};

inline constexpr int kImageSize = 128;
inline constexpr int kDefaultScales = 127;

// ---------------------------------------------------------------------------

inline microstate::GfpSeries smooth_moving_average(const microstate::GfpSeries& g, int w = 5) {
  if (w < 1 || w % 2 == 0) throw DataError("moving-average window must be odd and >= 1");
  if (g.values.size() < w) throw DataError("signal shorter than smoothing window");
  const Eigen::Index n = g.values.size();
  const Eigen::Index half = w / 2;
  microstate::GfpSeries out;
  out.fs_hz = g.fs_hz;
  out.values.resize(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, t - half);
    const Eigen::Index hi = std::min<Eigen::Index>(n - 1, t + half);
    out.values[t] = g.values.segment(lo, hi - lo + 1).mean();
  }
  return out;
}

struct ZscoreResult {
  Vec values;
  bool degenerate = false;
};

inline ZscoreResult zscore(const Vec& x) {
  ZscoreResult res;
  const double mean = x.mean();
  Vec centered = x.array() - mean;
  const double sd = std::sqrt(centered.squaredNorm() / static_cast<double>(x.size()));
  if (sd == 0.0) {
    res.values = Vec::Zero(x.size());
    res.degenerate = true;
  } else {
    res.values = centered / sd;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Complex Morlet CWT

namespace detail {

inline Eigen::Index next_pow2(Eigen::Index n) {
  Eigen::Index p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace detail

inline Scalogram cwt_morlet(const Vec& x, double fs_hz, int n_scales = kDefaultScales) {
  if (x.size() < 8) throw DataError("CWT needs at least 8 samples");
  if (n_scales < 2) throw DataError("need at least two scales");
  const Eigen::Index n = x.size();

  Scalogram s;
  s.fs_hz = fs_hz;
  s.scales.resize(n_scales);
  const double f_hi = 0.45 * fs_hz;
  const double f_lo = 0.5;
  // smallest scale first (highest pseudo-frequency)
  for (int i = 0; i < n_scales; ++i) {
    const double f = f_hi * std::pow(f_lo / f_hi, static_cast<double>(i) / (n_scales - 1));
    s.scales[i] = fs_hz / f;
  }
  s.magnitudes.resize(n_scales, n);

  using cvec = std::vector<std::complex<double>>;
  Eigen::FFT<double> fft;
  std::map<Eigen::Index, cvec> x_spectra;  // cached forward FFT of x per size

  for (int si = 0; si < n_scales; ++si) {
    const double a = s.scales[si];
    const Eigen::Index half = static_cast<Eigen::Index>(std::ceil(5.0 * a));
    const Eigen::Index m = detail::next_pow2(n + 2 * half + 1);

    auto found = x_spectra.find(m);
    if (found == x_spectra.end()) {
      cvec xt(static_cast<std::size_t>(m), {0.0, 0.0});
      for (Eigen::Index i = 0; i < n; ++i) xt[static_cast<std::size_t>(i)] = x[i];
      cvec xf;
      fft.fwd(xf, xt);
      found = x_spectra.emplace(m, std::move(xf)).first;
    }

    // convolution kernel k[u] = psi*(-u/a)/a, shifted by +half
    cvec kt(static_cast<std::size_t>(m), {0.0, 0.0});
    const double inv_sqrt_pi = 1.0 / std::sqrt(M_PI);
    for (Eigen::Index j = 0; j <= 2 * half; ++j) {
      const double u = static_cast<double>(j - half) / a;
      kt[static_cast<std::size_t>(j)] =
          std::polar(inv_sqrt_pi * std::exp(-u * u), 2.0 * M_PI * u) / a;
    }
    cvec kf;
    fft.fwd(kf, kt);
    for (Eigen::Index i = 0; i < m; ++i)
      kf[static_cast<std::size_t>(i)] *= found->second[static_cast<std::size_t>(i)];
    cvec conv;
    fft.inv(conv, kf);
    for (Eigen::Index b = 0; b < n; ++b)
      s.magnitudes(si, b) = std::abs(conv[static_cast<std::size_t>(b + half)]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Bilinear resize + min-max normalization. A constant scalogram maps to the
// all-zero image.

namespace detail {

inline double bilinear_at(const Mat& src, double y, double x) {
  const Eigen::Index r0 = static_cast<Eigen::Index>(std::floor(y));
  const Eigen::Index c0 = static_cast<Eigen::Index>(std::floor(x));
  const Eigen::Index r1 = std::min(r0 + 1, src.rows() - 1);
  const Eigen::Index c1 = std::min(c0 + 1, src.cols() - 1);
  const double fy = y - static_cast<double>(r0);
  const double fx = x - static_cast<double>(c0);
  return src(r0, c0) * (1 - fy) * (1 - fx) + src(r0, c1) * (1 - fy) * fx +
         src(r1, c0) * fy * (1 - fx) + src(r1, c1) * fy * fx;
}

inline Mat resize_bilinear(const Mat& src, Eigen::Index rows, Eigen::Index cols) {
  Mat dst(rows, cols);
  const double sy = static_cast<double>(src.rows()) / static_cast<double>(rows);
  const double sx = static_cast<double>(src.cols()) / static_cast<double>(cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    double y = (static_cast<double>(r) + 0.5) * sy - 0.5;
    y = std::clamp(y, 0.0, static_cast<double>(src.rows() - 1));
    for (Eigen::Index c = 0; c < cols; ++c) {
      double x = (static_cast<double>(c) + 0.5) * sx - 0.5;
      x = std::clamp(x, 0.0, static_cast<double>(src.cols() - 1));
      dst(r, c) = bilinear_at(src, y, x);
    }
  }
  return dst;
}

}  // namespace detail

inline TfImage to_image(const Scalogram& s) {
  TfImage img;
  img.pixels = detail::resize_bilinear(s.magnitudes, kImageSize, kImageSize);
  const double lo = img.pixels.minCoeff();
  const double hi = img.pixels.maxCoeff();
  if (hi == lo) {
    img.pixels.setZero();
  } else {
    img.pixels = (img.pixels.array() - lo) / (hi - lo);
  }
  return img;
}

// ---------------------------------------------------------------------------
// Raw f32 export with JSON sidecar, plus PGM preview via dataio.

inline void save_tf_image(const TfImage& img, const std::filesystem::path& path) {
  dataio::json meta;
  meta["width"] = kImageSize;
  meta["height"] = kImageSize;
  dataio::detail::save_json(meta, dataio::detail::sidecar_path(path));
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  for (Eigen::Index r = 0; r < img.pixels.rows(); ++r)
    for (Eigen::Index c = 0; c < img.pixels.cols(); ++c)
      dataio::detail::put_f32(os, static_cast<float>(img.pixels(r, c)));
  if (!os) throw IoError("short write to " + path.string());
}

inline TfImage load_tf_image(const std::filesystem::path& path) {
  dataio::json meta = dataio::detail::load_json(dataio::detail::sidecar_path(path));
  int w = 0, h = 0;
  try {
    w = meta.at("width").get<int>();
    h = meta.at("height").get<int>();
  } catch (const dataio::json::exception& e) {
    throw MalformedInput("sidecar for " + path.string() + ": " + e.what());
  }
  if (w != kImageSize || h != kImageSize)
    throw MalformedInput("tf image must be 128x128 in " + path.string());
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  TfImage img;
  img.pixels.resize(h, w);
  for (Eigen::Index r = 0; r < h; ++r)
    for (Eigen::Index c = 0; c < w; ++c) {
      float v;
      if (!dataio::detail::get_f32(is, v)) throw MalformedInput("truncated " + path.string());
      if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
        throw MalformedInput("pixel outside [0,1] in " + path.string());
      img.pixels(r, c) = v;
    }
  return img;
}

}  // namespace nsk::timefreq
