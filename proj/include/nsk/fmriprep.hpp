#pragma once

// fMRI slice preprocessing (intensity normalization, 3x3 median filter,
// CLAHE over a 3x3 tile grid) and max-intensity-difference maps with
// per-slice group statistics.

#include <nsk/core.hpp>
#include <nsk/dataio.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace nsk::fmriprep {

// ---------------------------------------------------------------------------

inline Mat normalize_intensity(const Mat& raw) {
  if ((raw.array() < 0.0).any() || (raw.array() > 255.0).any())
    throw DataError("raw intensities must lie in [0, 255]");
  return raw / 255.0;
}

inline Mat median_filter_3x3(const Mat& img) {
  const Eigen::Index h = img.rows(), w = img.cols();
  Mat out(h, w);
  std::array<double, 9> window;
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) {
      int i = 0;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const Eigen::Index rr = std::clamp<Eigen::Index>(r + dr, 0, h - 1);
          const Eigen::Index cc = std::clamp<Eigen::Index>(c + dc, 0, w - 1);
          window[static_cast<std::size_t>(i++)] = img(rr, cc);
        }
      std::nth_element(window.begin(), window.begin() + 4, window.end());
      out(r, c) = window[4];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CLAHE: per-tile 256-bin histograms, clip relative to the mean bin count,
// excess redistributed uniformly, bilinear interpolation between tile
// mappings. Constant tiles map identically (their CDF is degenerate).

namespace detail {

inline int bin_of(double v) {
  return std::min(255, static_cast<int>(v * 256.0));
}

struct TileMap {
  bool identity = false;
  std::array<double, 256> lut{};  // cdf per bin

  double apply(double v) const { return identity ? v : lut[static_cast<std::size_t>(bin_of(v))]; }
};

}  // namespace detail

inline Mat clahe(const Mat& img, double clip, int grid_rows, int grid_cols) {
  if (clip < 1.0) throw DataError("CLAHE clip limit must be >= 1");
  if (grid_rows < 1 || grid_cols < 1) throw DataError("CLAHE grid must be >= 1x1");
  if ((img.array() < 0.0).any() || (img.array() > 1.0).any())
    throw DataError("CLAHE input must lie in [0, 1]");
  const Eigen::Index h = img.rows(), w = img.cols();
  const int gr = std::min<int>(grid_rows, static_cast<int>(h));
  const int gc = std::min<int>(grid_cols, static_cast<int>(w));

  std::vector<detail::TileMap> tiles(static_cast<std::size_t>(gr * gc));
  std::vector<double> cy(static_cast<std::size_t>(gr)), cx(static_cast<std::size_t>(gc));

  for (int ti = 0; ti < gr; ++ti) {
    const Eigen::Index y0 = h * ti / gr, y1 = h * (ti + 1) / gr;
    cy[static_cast<std::size_t>(ti)] = 0.5 * static_cast<double>(y0 + y1 - 1);
    for (int tj = 0; tj < gc; ++tj) {
      const Eigen::Index x0 = w * tj / gc, x1 = w * (tj + 1) / gc;
      if (ti == 0) cx[static_cast<std::size_t>(tj)] = 0.5 * static_cast<double>(x0 + x1 - 1);
      auto& tile = tiles[static_cast<std::size_t>(ti * gc + tj)];

      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      std::array<double, 256> hist{};
      const double count = static_cast<double>((y1 - y0) * (x1 - x0));
      for (Eigen::Index r = y0; r < y1; ++r)
        for (Eigen::Index c = x0; c < x1; ++c) {
          const double v = img(r, c);
          lo = std::min(lo, v);
          hi = std::max(hi, v);
          hist[static_cast<std::size_t>(detail::bin_of(v))] += 1.0;
        }
      if (hi == lo) {
        tile.identity = true;
        continue;
      }
      if (std::isfinite(clip)) {
        const double limit = clip * count / 256.0;
        double excess = 0.0;
        for (double& b : hist)
          if (b > limit) {
            excess += b - limit;
            b = limit;
          }
        const double bonus = excess / 256.0;
        for (double& b : hist) b += bonus;
      }
      double acc = 0.0;
      for (int b = 0; b < 256; ++b) {
        acc += hist[static_cast<std::size_t>(b)];
        tile.lut[static_cast<std::size_t>(b)] = acc / count;
      }
    }
  }

  Mat out(h, w);
  for (Eigen::Index r = 0; r < h; ++r) {
    // surrounding tile rows and vertical weight
    int ti0 = 0;
    while (ti0 + 1 < gr && cy[static_cast<std::size_t>(ti0 + 1)] < static_cast<double>(r)) ++ti0;
    int ti1 = std::min(ti0 + 1, gr - 1);
    double fy = 0.0;
    if (ti1 != ti0) {
      fy = (static_cast<double>(r) - cy[static_cast<std::size_t>(ti0)]) /
           (cy[static_cast<std::size_t>(ti1)] - cy[static_cast<std::size_t>(ti0)]);
      fy = std::clamp(fy, 0.0, 1.0);
    }
    for (Eigen::Index c = 0; c < w; ++c) {
      int tj0 = 0;
      while (tj0 + 1 < gc && cx[static_cast<std::size_t>(tj0 + 1)] < static_cast<double>(c)) ++tj0;
      int tj1 = std::min(tj0 + 1, gc - 1);
      double fx = 0.0;
      if (tj1 != tj0) {
        fx = (static_cast<double>(c) - cx[static_cast<std::size_t>(tj0)]) /
             (cx[static_cast<std::size_t>(tj1)] - cx[static_cast<std::size_t>(tj0)]);
        fx = std::clamp(fx, 0.0, 1.0);
      }
      const double v = img(r, c);
      const double m00 = tiles[static_cast<std::size_t>(ti0 * gc + tj0)].apply(v);
      const double m01 = tiles[static_cast<std::size_t>(ti0 * gc + tj1)].apply(v);
      const double m10 = tiles[static_cast<std::size_t>(ti1 * gc + tj0)].apply(v);
      const double m11 = tiles[static_cast<std::size_t>(ti1 * gc + tj1)].apply(v);
      out(r, c) = (1 - fy) * ((1 - fx) * m00 + fx * m01) + fy * ((1 - fx) * m10 + fx * m11);
    }
  }
  return out;
}

inline Mat clahe_3x3(const Mat& img, double clip = 2.0) { return clahe(img, clip, 3, 3); }

// ---------------------------------------------------------------------------
// Difference maps

struct DiffMap {
  int slice_index = 0;
  Mat values;  // non-negative
};

struct SliceStats {
  double mean = 0.0;
  double sd = 0.0;  // population
};

inline DiffMap max_diff_map(const dataio::FmriSeries& series, int slice_index) {
  if (!series.normalized) throw DataError("max_diff_map requires a normalized series");
  if (series.timepoints < 2) throw DataError("max_diff_map needs at least two timepoints");
  if (slice_index < 0 || slice_index >= series.slices) throw DataError("slice index out of range");
  DiffMap map;
  map.slice_index = slice_index;
  map.values = Mat::Zero(series.height, series.width);
  for (int t = 1; t < series.timepoints; ++t)
    for (int r = 0; r < series.height; ++r)
      for (int c = 0; c < series.width; ++c) {
        const double d = std::abs(static_cast<double>(series.at(t, slice_index, r, c)) -
                                  static_cast<double>(series.at(0, slice_index, r, c)));
        map.values(r, c) = std::max(map.values(r, c), d);
      }
  return map;
}

inline SliceStats slice_stats(const DiffMap& map) {
  SliceStats st;
  st.mean = map.values.mean();
  st.sd = std::sqrt((map.values.array() - st.mean).square().mean());
  return st;
}

// Group table: per (slice, group), the mean map over that group's subjects,
// reduced to mean/SD over pixels.
struct GroupSliceRow {
  int slice = 0;
  dataio::GroupLabel group = dataio::GroupLabel::healthy;
  double mean = 0.0;
  double sd = 0.0;
};

inline std::vector<GroupSliceRow> group_slice_table(
    const std::vector<dataio::FmriSeries>& subjects) {
  if (subjects.empty()) throw DataError("no subjects");
  const int slices = subjects.front().slices;
  const int h = subjects.front().height, w = subjects.front().width;
  for (const auto& s : subjects)
    if (s.slices != slices || s.height != h || s.width != w)
      throw DataError("subjects must share dimensions");

  std::vector<GroupSliceRow> rows;
  for (int sl = 0; sl < slices; ++sl) {
    for (dataio::GroupLabel group : {dataio::GroupLabel::healthy, dataio::GroupLabel::tinnitus}) {
      Mat acc = Mat::Zero(h, w);
      int n = 0;
      for (const auto& s : subjects) {
        if (s.label != group) continue;
        acc += max_diff_map(s, sl).values;
        ++n;
      }
      if (n == 0) continue;
      DiffMap mean_map{sl, acc / static_cast<double>(n)};
      const SliceStats st = slice_stats(mean_map);
      rows.push_back({sl, group, st.mean, st.sd});
    }
  }
  return rows;
}

// Full preprocessing of a raw 0-255 series: normalize, median filter, CLAHE.
inline dataio::FmriSeries preprocess_series(const dataio::FmriSeries& raw, double clip = 2.0) {
  if (raw.normalized) throw DataError("series already normalized");
  dataio::FmriSeries out = raw;
  out.normalized = true;
  for (int t = 0; t < raw.timepoints; ++t)
    for (int s = 0; s < raw.slices; ++s) {
      Mat img = clahe_3x3(median_filter_3x3(normalize_intensity(raw.slice_image(t, s))), clip);
      for (int r = 0; r < raw.height; ++r)
        for (int c = 0; c < raw.width; ++c) out.at(t, s, r, c) = static_cast<float>(img(r, c));
    }
  return out;
}

}  // namespace nsk::fmriprep
