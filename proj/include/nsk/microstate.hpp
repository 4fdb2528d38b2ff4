#pragma once

// Microstate analysis: global field power, GFP peak extraction,
// polarity-invariant K-means template fitting, backfitting and the
// duration/occurrence/coverage/mean-GFP feature set.
//
// Similarity throughout is squared spatial correlation: both vectors are
// average-referenced across channels, and sign is ignored. Template update
// is the first principal component of the assigned maps, so +x and -x
// reinforce the same template.

#include <nsk/core.hpp>
#include <nsk/dataio.hpp>
#include <nsk/preprocess.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

namespace nsk::microstate {

struct GfpSeries {
  double fs_hz = 0.0;
  Vec values;
};

struct MicrostateModel {
  int k = 0;
  Mat templates;             // n_channels x k, unit-norm average-referenced columns
  std::vector<char> labels;  // 'A', 'B', ... first k letters
  double gev = 0.0;          // global explained variance on the fitted maps
  std::uint64_t seed = 0;
};

struct LabelSequence {
  double fs_hz = 0.0;
  std::vector<int> states;  // one state index per sample, no gaps
};

struct StateFeatures {
  double duration_ms = 0.0;
  double occurrence_per_s = 0.0;
  double coverage_pct = 0.0;
  double mean_gfp_uv = 0.0;
};

// ---------------------------------------------------------------------------
// GFP

inline GfpSeries gfp(const preprocess::Epoch& e) {
  if (e.n_channels() < 2) throw DataError("GFP needs at least two channels");
  GfpSeries g;
  g.fs_hz = e.fs_hz;
  g.values.resize(e.n_samples());
  const double n = static_cast<double>(e.n_channels());
  for (Eigen::Index t = 0; t < e.n_samples(); ++t) {
    const double mean = e.samples.row(t).mean();
    g.values[t] = std::sqrt((e.samples.row(t).array() - mean).square().sum() / n);
  }
  return g;
}

// Interior local maxima; a plateau claims its first sample.
inline std::vector<Eigen::Index> find_gfp_peaks(const GfpSeries& g) {
  std::vector<Eigen::Index> peaks;
  for (Eigen::Index t = 1; t + 1 < g.values.size(); ++t)
    if (g.values[t] > g.values[t - 1] && g.values[t] >= g.values[t + 1]) peaks.push_back(t);
  return peaks;
}

inline Mat maps_at_indices(const preprocess::Epoch& e, const std::vector<Eigen::Index>& idx) {
  Mat maps(static_cast<Eigen::Index>(idx.size()), e.n_channels());
  for (std::size_t i = 0; i < idx.size(); ++i) maps.row(static_cast<Eigen::Index>(i)) = e.samples.row(idx[i]);
  return maps;
}

// ---------------------------------------------------------------------------
// Spatial correlation (average-referenced cosine). Zero for degenerate input.

inline double spatial_correlation(const Vec& a, const Vec& b) {
  const Vec a0 = a.array() - a.mean();
  const Vec b0 = b.array() - b.mean();
  const double na = a0.norm(), nb = b0.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a0.dot(b0) / (na * nb);
}

// ---------------------------------------------------------------------------
// Polarity-invariant K-means

namespace detail {

struct FitState {
  std::vector<int> assign;
  Mat templates;  // C x k
  double gev = 0.0;
};

// maps come in centered; rows with zero norm contribute nothing.
inline FitState run_once(const Mat& centered, const Vec& norms, int k, Rng& rng, int max_iter) {
  const Eigen::Index n = centered.rows(), c = centered.cols();

  std::vector<Eigen::Index> nonzero;
  for (Eigen::Index i = 0; i < n; ++i)
    if (norms[i] > 0.0) nonzero.push_back(i);

  // init templates from k distinct non-degenerate maps
  std::vector<Eigen::Index> pool = nonzero;
  rng.shuffle(pool);
  Mat tpl(c, k);
  for (int j = 0; j < k; ++j)
    tpl.col(j) = centered.row(pool[static_cast<std::size_t>(j)]).transpose().normalized();

  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  std::vector<int> prev;

  auto best_state = [&](Eigen::Index i) {
    int best = 0;
    double best_sim = -1.0;
    for (int j = 0; j < k; ++j) {
      const double dot = norms[i] > 0.0 ? centered.row(i).dot(tpl.col(j)) / norms[i] : 0.0;
      const double sim = dot * dot;  // templates are unit norm
      if (sim > best_sim) {
        best_sim = sim;
        best = j;
      }
    }
    return best;
  };

  for (int iter = 0; iter < max_iter; ++iter) {
    // assignment
    for (Eigen::Index i = 0; i < n; ++i) assign[static_cast<std::size_t>(i)] = best_state(i);

    // empty-cluster repair: reseed from the worst-fitting map
    for (int j = 0; j < k; ++j) {
      if (std::find(assign.begin(), assign.end(), j) != assign.end()) continue;
      Eigen::Index worst = nonzero.empty() ? 0 : nonzero.front();
      double worst_sim = 2.0;
      for (Eigen::Index i : nonzero) {
        const double dot = centered.row(i).dot(tpl.col(assign[static_cast<std::size_t>(i)])) / norms[i];
        if (dot * dot < worst_sim) {
          worst_sim = dot * dot;
          worst = i;
        }
      }
      tpl.col(j) = centered.row(worst).transpose().normalized();
      assign[static_cast<std::size_t>(worst)] = j;
    }

    if (assign == prev) break;
    prev = assign;

    // template update: first principal component of assigned maps
    for (int j = 0; j < k; ++j) {
      Mat s = Mat::Zero(c, c);
      for (Eigen::Index i = 0; i < n; ++i)
        if (assign[static_cast<std::size_t>(i)] == j)
          s.noalias() += centered.row(i).transpose() * centered.row(i);
      Eigen::SelfAdjointEigenSolver<Mat> eig(s);
      Vec v = eig.eigenvectors().col(c - 1);
      // canonical sign: largest-magnitude channel positive
      Eigen::Index arg = 0;
      v.cwiseAbs().maxCoeff(&arg);
      if (v[arg] < 0.0) v = -v;
      tpl.col(j) = v;
    }
  }

  // final assignment against final templates
  for (Eigen::Index i = 0; i < n; ++i) assign[static_cast<std::size_t>(i)] = best_state(i);

  // GEV with GFP^2 weights; norms are proportional to per-map GFP
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = norms[i] * norms[i];
    den += w;
    if (norms[i] > 0.0) {
      const double dot = centered.row(i).dot(tpl.col(assign[static_cast<std::size_t>(i)])) / norms[i];
      num += w * dot * dot;
    }
  }
  FitState st;
  st.assign = std::move(assign);
  st.templates = std::move(tpl);
  st.gev = den > 0.0 ? num / den : 0.0;
  return st;
}

}  // namespace detail

// maps: one topography per row. Best of n_init restarts by GEV;
// deterministic for a fixed seed.
inline MicrostateModel fit_microstates(const Mat& maps, int k, std::uint64_t seed,
                                       dataio::KmeansOpts opts = {}) {
  if (k < 1) throw DataError("k must be >= 1");
  if (maps.rows() < k) throw DataError("need at least k maps to fit k microstates");

  Mat centered = maps;
  for (Eigen::Index i = 0; i < maps.rows(); ++i)
    centered.row(i).array() -= maps.row(i).mean();
  Vec norms(maps.rows());
  for (Eigen::Index i = 0; i < maps.rows(); ++i) norms[i] = centered.row(i).norm();
  if ((norms.array() > 0.0).count() == 0) throw DataError("all maps are zero");
  if ((norms.array() > 0.0).count() < k) throw DataError("fewer non-degenerate maps than k");

  Rng base(seed);
  std::optional<detail::FitState> best;
  for (int r = 0; r < std::max(1, opts.n_init); ++r) {
    Rng rng = base.substream(static_cast<std::uint64_t>(r));
    detail::FitState st = detail::run_once(centered, norms, k, rng, std::max(1, opts.max_iter));
    if (!best || st.gev > best->gev) best = std::move(st);
  }

  // order clusters by descending GEV contribution; ties by first occurrence
  std::vector<double> contrib(static_cast<std::size_t>(k), 0.0);
  std::vector<Eigen::Index> first_seen(static_cast<std::size_t>(k), maps.rows());
  double den = 0.0;
  for (Eigen::Index i = 0; i < maps.rows(); ++i) {
    const int j = best->assign[static_cast<std::size_t>(i)];
    const double w = norms[i] * norms[i];
    den += w;
    if (norms[i] > 0.0) {
      const double dot = centered.row(i).dot(best->templates.col(j)) / norms[i];
      contrib[static_cast<std::size_t>(j)] += w * dot * dot;
    }
    first_seen[static_cast<std::size_t>(j)] = std::min(first_seen[static_cast<std::size_t>(j)], i);
  }
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (contrib[static_cast<std::size_t>(a)] != contrib[static_cast<std::size_t>(b)])
      return contrib[static_cast<std::size_t>(a)] > contrib[static_cast<std::size_t>(b)];
    return first_seen[static_cast<std::size_t>(a)] < first_seen[static_cast<std::size_t>(b)];
  });

  MicrostateModel model;
  model.k = k;
  model.seed = seed;
  model.templates.resize(maps.cols(), k);
  for (int j = 0; j < k; ++j) {
    model.templates.col(j) = best->templates.col(order[static_cast<std::size_t>(j)]);
    model.labels.push_back(static_cast<char>('A' + j));
  }
  model.gev = den > 0.0 ? std::accumulate(contrib.begin(), contrib.end(), 0.0) / den : 0.0;
  return model;
}

// ---------------------------------------------------------------------------
// Backfitting: every sample gets the template with max |spatial correlation|;
// ties (including degenerate samples) resolve to the lowest state index.

inline LabelSequence backfit(const MicrostateModel& m, const preprocess::Epoch& e) {
  if (e.n_channels() != m.templates.rows())
    throw DataError("channel count mismatch between epoch and model");
  LabelSequence seq;
  seq.fs_hz = e.fs_hz;
  seq.states.resize(static_cast<std::size_t>(e.n_samples()));
  for (Eigen::Index t = 0; t < e.n_samples(); ++t) {
    const double mean = e.samples.row(t).mean();
    Vec x0 = e.samples.row(t).transpose().array() - mean;
    const double nx = x0.norm();
    int best = 0;
    double best_sim = -1.0;
    for (int j = 0; j < m.k; ++j) {
      const double dot = nx > 0.0 ? x0.dot(m.templates.col(j)) / nx : 0.0;
      if (dot * dot > best_sim) {
        best_sim = dot * dot;
        best = j;
      }
    }
    seq.states[static_cast<std::size_t>(t)] = best;
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Per-state features over one window. States absent from the sequence get
// all-zero features.

inline std::vector<StateFeatures> extract_features(const LabelSequence& labels,
                                                   const GfpSeries& g, int k) {
  if (static_cast<Eigen::Index>(labels.states.size()) != g.values.size())
    throw DataError("label sequence and GFP series length mismatch");
  if (labels.states.empty()) throw DataError("empty label sequence");

  const std::size_t n = labels.states.size();
  const double total_s = static_cast<double>(n) / labels.fs_hz;

  std::vector<double> seg_samples(static_cast<std::size_t>(k), 0.0);
  std::vector<double> seg_count(static_cast<std::size_t>(k), 0.0);
  std::vector<double> gfp_sum(static_cast<std::size_t>(k), 0.0);
  std::vector<double> sample_count(static_cast<std::size_t>(k), 0.0);

  std::size_t run_start = 0;
  for (std::size_t t = 0; t <= n; ++t) {
    if (t == n || labels.states[t] != labels.states[run_start]) {
      const int s = labels.states[run_start];
      if (s >= 0 && s < k) {
        seg_samples[static_cast<std::size_t>(s)] += static_cast<double>(t - run_start);
        seg_count[static_cast<std::size_t>(s)] += 1.0;
      }
      run_start = t;
    }
    if (t < n) {
      const int s = labels.states[t];
      if (s >= 0 && s < k) {
        gfp_sum[static_cast<std::size_t>(s)] += g.values[static_cast<Eigen::Index>(t)];
        sample_count[static_cast<std::size_t>(s)] += 1.0;
      }
    }
  }

  std::vector<StateFeatures> out(static_cast<std::size_t>(k));
  for (int s = 0; s < k; ++s) {
    auto& f = out[static_cast<std::size_t>(s)];
    const double segs = seg_count[static_cast<std::size_t>(s)];
    if (segs == 0.0) continue;
    const double samples = seg_samples[static_cast<std::size_t>(s)];
    f.duration_ms = samples / segs / labels.fs_hz * 1000.0;
    f.occurrence_per_s = segs / total_s;
    f.coverage_pct = samples / static_cast<double>(n) * 100.0;
    f.mean_gfp_uv = gfp_sum[static_cast<std::size_t>(s)] / sample_count[static_cast<std::size_t>(s)];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature vector assembly: canonical (band, k, state, feature) order.

struct FeatureVector {
  std::vector<dataio::FeatureKey> keys;
  Vec values;
};

inline std::vector<dataio::FeatureKey> feature_keys(const std::vector<dataio::Band>& bands,
                                                    const std::vector<int>& ks) {
  std::vector<dataio::FeatureKey> keys;
  for (const auto& band : bands)
    for (int k : ks)
      for (int s = 0; s < k; ++s)
        for (const auto& f : dataio::feature_names())
          keys.push_back({band.name, k, static_cast<char>('A' + s), f});
  return keys;
}

// One (band, k) block: 4 features per state in canonical order.
inline void append_state_features(const std::vector<StateFeatures>& fs, std::vector<double>& out) {
  for (const auto& f : fs) {
    out.push_back(f.duration_ms);
    out.push_back(f.occurrence_per_s);
    out.push_back(f.coverage_pct);
    out.push_back(f.mean_gfp_uv);
  }
}

// Per-band models supplied by the caller (subject-scope fitting). An absent
// model yields an all-zero block, as do windows without usable GFP peaks.
using ModelGrid = std::vector<std::vector<std::optional<MicrostateModel>>>;  // [band][k_index]

inline FeatureVector build_feature_vector_prefit(const preprocess::BandSet& set,
                                                 const std::vector<int>& ks,
                                                 const ModelGrid& models) {
  FeatureVector fv;
  std::vector<dataio::Band> bands;
  for (const auto& e : set.entries) bands.push_back(e.band);
  fv.keys = feature_keys(bands, ks);
  std::vector<double> vals;
  vals.reserve(fv.keys.size());
  for (std::size_t bi = 0; bi < set.entries.size(); ++bi) {
    const auto& epoch = set.entries[bi].epoch;
    GfpSeries g = gfp(epoch);
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
      const int k = ks[ki];
      const auto& model = models[bi][ki];
      if (!model) {
        vals.insert(vals.end(), static_cast<std::size_t>(4 * k), 0.0);
        continue;
      }
      LabelSequence labels = backfit(*model, epoch);
      append_state_features(extract_features(labels, g, k), vals);
    }
  }
  fv.values = Eigen::Map<Vec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  return fv;
}

// Window-scope fitting: templates are fit on this window's own GFP peaks.
inline FeatureVector build_feature_vector(const preprocess::BandSet& set,
                                          const std::vector<int>& ks, std::uint64_t seed,
                                          dataio::KmeansOpts opts = {}) {
  ModelGrid models(set.entries.size(), std::vector<std::optional<MicrostateModel>>(ks.size()));
  for (std::size_t bi = 0; bi < set.entries.size(); ++bi) {
    const auto& epoch = set.entries[bi].epoch;
    GfpSeries g = gfp(epoch);
    std::vector<Eigen::Index> peaks = find_gfp_peaks(g);
    Mat maps = maps_at_indices(epoch, peaks);
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
      const int k = ks[ki];
      Mat use = maps;
      if (opts.peak_cap > 0 && maps.rows() > opts.peak_cap) {
        Rng rng = Rng(seed).substream(Rng::mix(0xCAFE, bi * 64 + ki));
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(maps.rows()));
        std::iota(idx.begin(), idx.end(), 0);
        rng.shuffle(idx);
        idx.resize(static_cast<std::size_t>(opts.peak_cap));
        std::sort(idx.begin(), idx.end());
        use.resize(opts.peak_cap, maps.cols());
        for (std::size_t i = 0; i < idx.size(); ++i)
          use.row(static_cast<Eigen::Index>(i)) = maps.row(idx[i]);
      }
      bool usable = use.rows() >= k;
      if (usable) {
        Eigen::Index live = 0;
        for (Eigen::Index i = 0; i < use.rows(); ++i) {
          Vec row = use.row(i);
          if ((row.array() - row.mean()).matrix().norm() > 0.0) ++live;
        }
        usable = live >= k;
      }
      if (usable)
        models[bi][ki] = fit_microstates(use, k, Rng::mix(seed, bi * 64 + ki), opts);
    }
  }
  return build_feature_vector_prefit(set, ks, models);
}

}  // namespace nsk::microstate
