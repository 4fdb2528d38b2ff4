#include <nsk/microstate.hpp>

#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace nsk;
using namespace nsk::microstate;
using Catch::Matchers::WithinAbs;

namespace {

preprocess::Epoch make_epoch(const Mat& samples, double fs) {
  preprocess::Epoch e;
  e.subject_id = "s";
  e.fs_hz = fs;
  e.samples = samples;
  return e;
}

// Random zero-mean orthonormal topographies (channels x k).
Mat random_templates(int channels, int k, Rng& rng) {
  Mat t(channels, k);
  for (int j = 0; j < k; ++j) {
    Vec v(channels);
    for (int c = 0; c < channels; ++c) v[c] = rng.normal();
    v.array() -= v.mean();
    for (int p = 0; p < j; ++p) v -= v.dot(t.col(p)) * t.col(p);
    t.col(j) = v.normalized();
  }
  return t;
}

// Maps drawn noise-free from the templates, random polarity and amplitude.
Mat draw_maps(const Mat& templates, int n, Rng& rng, double noise_sd = 0.0) {
  Mat maps(n, templates.rows());
  for (int i = 0; i < n; ++i) {
    const int j = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(templates.cols())));
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double amp = rng.uniform(0.5, 2.0);
    Vec m = sign * amp * templates.col(j);
    for (int c = 0; c < templates.rows(); ++c) m[c] += noise_sd * rng.normal();
    maps.row(i) = m.transpose();
  }
  return maps;
}

}  // namespace

TEST_CASE("gfp") {
  SECTION("equal channels give zero") {
    Mat m(1, 4);
    m << 3, 3, 3, 3;
    REQUIRE(gfp(make_epoch(m, 10)).values[0] == 0.0);
  }
  SECTION("[1,-1] gives 1") {
    Mat m(1, 2);
    m << 1, -1;
    REQUIRE_THAT(gfp(make_epoch(m, 10)).values[0], WithinAbs(1.0, 1e-15));
  }
  SECTION("adding a constant across channels changes nothing") {
    Rng rng(1);
    Mat m(20, 6);
    for (int t = 0; t < 20; ++t)
      for (int c = 0; c < 6; ++c) m(t, c) = rng.normal();
    Vec base = gfp(make_epoch(m, 10)).values;
    Mat shifted = m.array() + 17.5;
    Vec after = gfp(make_epoch(shifted, 10)).values;
    REQUIRE((base - after).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("scale equivariance: gfp(a*e) = |a|*gfp(e)") {
    Rng rng(2);
    Mat m(10, 4);
    for (int t = 0; t < 10; ++t)
      for (int c = 0; c < 4; ++c) m(t, c) = rng.normal();
    Vec base = gfp(make_epoch(m, 10)).values;
    Vec scaled = gfp(make_epoch(Mat(-2.5 * m), 10)).values;
    REQUIRE((scaled - 2.5 * base).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("single channel is a DataError") {
    REQUIRE_THROWS_AS(gfp(make_epoch(Mat::Zero(5, 1), 10)), DataError);
  }
}

TEST_CASE("find_gfp_peaks") {
  auto series = [](std::initializer_list<double> v) {
    GfpSeries g;
    g.fs_hz = 1.0;
    g.values = Eigen::Map<const Vec>(v.begin(), static_cast<Eigen::Index>(v.size()));
    return g;
  };
  SECTION("strictly increasing has no interior maxima") {
    REQUIRE(find_gfp_peaks(series({0, 1, 2, 3, 4})).empty());
  }
  SECTION("[0,1,0,2,0] peaks at 1 and 3") {
    auto p = find_gfp_peaks(series({0, 1, 0, 2, 0}));
    REQUIRE(p == std::vector<Eigen::Index>{1, 3});
  }
  SECTION("plateau claims its first sample") {
    auto p = find_gfp_peaks(series({0, 1, 1, 0}));
    REQUIRE(p == std::vector<Eigen::Index>{1});
  }
  SECTION("endpoints are never peaks") {
    REQUIRE(find_gfp_peaks(series({5, 1, 0, 1, 9})).empty());
  }
}

TEST_CASE("fit_microstates") {
  Rng rng(42);
  SECTION("recovers two orthogonal templates from noise-free draws") {
    Mat truth = random_templates(8, 2, rng);
    Mat maps = draw_maps(truth, 80, rng);
    MicrostateModel model = fit_microstates(maps, 2, 7);
    for (int j = 0; j < 2; ++j) {
      double best = 0;
      for (int g = 0; g < 2; ++g)
        best = std::max(best, std::abs(spatial_correlation(model.templates.col(j), truth.col(g))));
      REQUIRE(best > 0.999);
    }
    REQUIRE(model.labels == std::vector<char>{'A', 'B'});
    REQUIRE(model.gev >= 0.0);
    REQUIRE(model.gev <= 1.0);
  }
  SECTION("polarity invariance: flipping map signs changes nothing") {
    Mat truth = random_templates(10, 3, rng);
    Mat maps = draw_maps(truth, 60, rng, 0.05);
    Mat flipped = maps;
    Rng flips(5);
    for (int i = 0; i < flipped.rows(); ++i)
      if (flips.uniform() < 0.5) flipped.row(i) = -flipped.row(i);
    MicrostateModel a = fit_microstates(maps, 3, 11);
    MicrostateModel b = fit_microstates(flipped, 3, 11);
    for (int j = 0; j < 3; ++j)
      REQUIRE_THAT(std::abs(spatial_correlation(a.templates.col(j), b.templates.col(j))),
                   WithinAbs(1.0, 1e-9));
    // identical assignment partition
    LabelSequence la = backfit(a, make_epoch(maps, 10));
    LabelSequence lb = backfit(b, make_epoch(flipped, 10));
    REQUIRE(la.states == lb.states);
  }
  SECTION("four generating templates reach GEV >= 0.99") {
    Mat truth = random_templates(12, 4, rng);
    Mat maps = draw_maps(truth, 200, rng);
    MicrostateModel model = fit_microstates(maps, 4, 3);
    REQUIRE(model.gev >= 0.99);
  }
  SECTION("fixed seed is bit-deterministic") {
    Mat truth = random_templates(6, 3, rng);
    Mat maps = draw_maps(truth, 50, rng, 0.2);
    MicrostateModel a = fit_microstates(maps, 3, 123);
    MicrostateModel b = fit_microstates(maps, 3, 123);
    REQUIRE(a.templates == b.templates);
    REQUIRE(a.gev == b.gev);
  }
  SECTION("too few maps or all-zero maps raise DataError") {
    REQUIRE_THROWS_AS(fit_microstates(Mat::Zero(3, 8), 4, 1), DataError);
    REQUIRE_THROWS_AS(fit_microstates(Mat::Zero(10, 8), 2, 1), DataError);
  }
}

TEST_CASE("backfit") {
  Rng rng(17);
  Mat truth = random_templates(9, 4, rng);
  Mat maps = draw_maps(truth, 120, rng);
  MicrostateModel model = fit_microstates(maps, 4, 99);

  SECTION("a template maps to its own label, either polarity") {
    Mat probe(2 * model.k, model.templates.rows());
    for (int j = 0; j < model.k; ++j) {
      probe.row(2 * j) = model.templates.col(j).transpose();
      probe.row(2 * j + 1) = -3.0 * model.templates.col(j).transpose();
    }
    LabelSequence seq = backfit(model, make_epoch(probe, 10));
    for (int j = 0; j < model.k; ++j) {
      REQUIRE(seq.states[static_cast<std::size_t>(2 * j)] == j);
      REQUIRE(seq.states[static_cast<std::size_t>(2 * j + 1)] == j);
    }
  }
  SECTION("matches a brute-force argmax oracle on random samples") {
    Mat samples(10, 9);
    for (int i = 0; i < 10; ++i)
      for (int c = 0; c < 9; ++c) samples(i, c) = rng.normal();
    LabelSequence seq = backfit(model, make_epoch(samples, 10));
    for (int i = 0; i < 10; ++i) {
      int best = 0;
      double best_abs = -1;
      for (int j = 0; j < model.k; ++j) {
        const double corr =
            std::abs(spatial_correlation(samples.row(i).transpose(), model.templates.col(j)));
        if (corr > best_abs + 1e-15) {
          best_abs = corr;
          best = j;
        }
      }
      REQUIRE(seq.states[static_cast<std::size_t>(i)] == best);
    }
  }
  SECTION("labels invariant under global sign flip and positive rescale") {
    Mat samples(25, 9);
    for (int i = 0; i < 25; ++i)
      for (int c = 0; c < 9; ++c) samples(i, c) = rng.normal();
    auto base = backfit(model, make_epoch(samples, 10)).states;
    REQUIRE(backfit(model, make_epoch(Mat(-samples), 10)).states == base);
    REQUIRE(backfit(model, make_epoch(Mat(0.037 * samples), 10)).states == base);
  }
  SECTION("channel mismatch raises DataError") {
    REQUIRE_THROWS_AS(backfit(model, make_epoch(Mat::Zero(5, 3), 10)), DataError);
  }
}

namespace {

// Independent segment-enumeration oracle for the per-state features.
std::vector<StateFeatures> oracle_features(const std::vector<int>& states, const Vec& g,
                                           double fs, int k) {
  std::vector<StateFeatures> out(static_cast<std::size_t>(k));
  const double total_s = static_cast<double>(states.size()) / fs;
  for (int s = 0; s < k; ++s) {
    std::vector<int> seg_lengths;
    double gsum = 0;
    int gcount = 0;
    std::size_t i = 0;
    while (i < states.size()) {
      if (states[i] != s) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < states.size() && states[j] == s) ++j;
      seg_lengths.push_back(static_cast<int>(j - i));
      i = j;
    }
    for (std::size_t t = 0; t < states.size(); ++t)
      if (states[t] == s) {
        gsum += g[static_cast<Eigen::Index>(t)];
        ++gcount;
      }
    if (seg_lengths.empty()) continue;
    double total_samples = 0;
    for (int len : seg_lengths) total_samples += len;
    auto& f = out[static_cast<std::size_t>(s)];
    f.duration_ms = total_samples / static_cast<double>(seg_lengths.size()) / fs * 1000.0;
    f.occurrence_per_s = static_cast<double>(seg_lengths.size()) / total_s;
    f.coverage_pct = total_samples / static_cast<double>(states.size()) * 100.0;
    f.mean_gfp_uv = gsum / gcount;
  }
  return out;
}

}  // namespace

TEST_CASE("extract_features") {
  SECTION("[A,A,B,B,B,A] at 1 Hz") {
    LabelSequence seq;
    seq.fs_hz = 1.0;
    seq.states = {0, 0, 1, 1, 1, 0};
    GfpSeries g;
    g.fs_hz = 1.0;
    g.values = Vec::Ones(6);
    auto f = extract_features(seq, g, 2);
    REQUIRE_THAT(f[0].duration_ms, WithinAbs(1500.0, 1e-9));
    REQUIRE_THAT(f[0].occurrence_per_s, WithinAbs(2.0 / 6.0, 1e-9));
    REQUIRE_THAT(f[0].coverage_pct, WithinAbs(50.0, 1e-9));
    REQUIRE_THAT(f[1].duration_ms, WithinAbs(3000.0, 1e-9));
    REQUIRE_THAT(f[1].occurrence_per_s, WithinAbs(1.0 / 6.0, 1e-9));
    REQUIRE_THAT(f[1].coverage_pct, WithinAbs(50.0, 1e-9));
  }
  SECTION("single state covering the window") {
    LabelSequence seq;
    seq.fs_hz = 4.0;
    seq.states.assign(40, 2);  // 10 s
    GfpSeries g;
    g.fs_hz = 4.0;
    g.values = Vec::Constant(40, 2.5);
    auto f = extract_features(seq, g, 4);
    REQUIRE_THAT(f[2].duration_ms, WithinAbs(10000.0, 1e-9));
    REQUIRE_THAT(f[2].occurrence_per_s, WithinAbs(0.1, 1e-12));
    REQUIRE_THAT(f[2].coverage_pct, WithinAbs(100.0, 1e-12));
    REQUIRE_THAT(f[2].mean_gfp_uv, WithinAbs(2.5, 1e-12));
    for (int s : {0, 1, 3}) {
      REQUIRE(f[static_cast<std::size_t>(s)].duration_ms == 0.0);
      REQUIRE(f[static_cast<std::size_t>(s)].occurrence_per_s == 0.0);
      REQUIRE(f[static_cast<std::size_t>(s)].coverage_pct == 0.0);
      REQUIRE(f[static_cast<std::size_t>(s)].mean_gfp_uv == 0.0);
    }
  }
  SECTION("random sequences match the brute-force oracle exactly") {
    Rng rng(7);
    for (int iter = 0; iter < 200; ++iter) {
      const int k = 2 + static_cast<int>(rng.uniform_int(6));
      const int n = 1 + static_cast<int>(rng.uniform_int(500));
      const double fs = 10.0 + rng.uniform(0, 100);
      LabelSequence seq;
      seq.fs_hz = fs;
      GfpSeries g;
      g.fs_hz = fs;
      g.values.resize(n);
      for (int t = 0; t < n; ++t) {
        seq.states.push_back(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(k))));
        g.values[t] = rng.uniform(0, 10);
      }
      auto got = extract_features(seq, g, k);
      auto want = oracle_features(seq.states, g.values, fs, k);
      for (int s = 0; s < k; ++s) {
        REQUIRE(got[static_cast<std::size_t>(s)].duration_ms ==
                want[static_cast<std::size_t>(s)].duration_ms);
        REQUIRE(got[static_cast<std::size_t>(s)].occurrence_per_s ==
                want[static_cast<std::size_t>(s)].occurrence_per_s);
        REQUIRE(got[static_cast<std::size_t>(s)].coverage_pct ==
                want[static_cast<std::size_t>(s)].coverage_pct);
        REQUIRE(got[static_cast<std::size_t>(s)].mean_gfp_uv ==
                want[static_cast<std::size_t>(s)].mean_gfp_uv);
      }
    }
  }
  SECTION("coverage sums to 100 and O*D recovers C") {
    Rng rng(13);
    const int k = 5, n = 997;
    LabelSequence seq;
    seq.fs_hz = 123.0;
    GfpSeries g;
    g.fs_hz = 123.0;
    g.values = Vec::Ones(n);
    for (int t = 0; t < n; ++t)
      seq.states.push_back(static_cast<int>(rng.uniform_int(k)));
    auto f = extract_features(seq, g, k);
    double cov = 0;
    for (const auto& sf : f) {
      cov += sf.coverage_pct;
      REQUIRE_THAT(sf.occurrence_per_s * sf.duration_ms / 1000.0 * 100.0,
                   WithinAbs(sf.coverage_pct, 1e-9));
    }
    REQUIRE_THAT(cov, WithinAbs(100.0, 1e-9));
  }
}

TEST_CASE("build_feature_vector") {
  Rng rng(21);
  const double fs = 100.0;
  const auto bands = dataio::default_bands();

  // synthetic microstate-like epoch: template segments + mild noise
  Mat truth = random_templates(8, 4, rng);
  Mat samples(1000, 8);
  int t = 0;
  while (t < 1000) {
    const int j = static_cast<int>(rng.uniform_int(4));
    const int dwell = 5 + static_cast<int>(rng.uniform_int(20));
    for (int i = 0; i < dwell && t < 1000; ++i, ++t) {
      const double amp = 1.0 + 0.3 * rng.normal();
      samples.row(t) = (amp * truth.col(j)).transpose();
      for (int c = 0; c < 8; ++c) samples(t, c) += 0.05 * rng.normal();
    }
  }
  preprocess::Epoch epoch = make_epoch(samples, fs);
  preprocess::BandSet set = preprocess::band_decompose(epoch, bands);

  SECTION("five bands and ks 4..7 give exactly 440 features") {
    auto fv = build_feature_vector(set, {4, 5, 6, 7}, 1);
    REQUIRE(fv.values.size() == 440);
    REQUIRE(fv.keys.size() == 440);
    REQUIRE((fv.values.array().isFinite()).all());
    // per-k block sizes across the 5 bands: 80/100/120/140
    auto count_for_k = [&](int k) {
      int n = 0;
      for (const auto& key : fv.keys)
        if (key.k == k) ++n;
      return n;
    };
    REQUIRE(count_for_k(4) == 80);
    REQUIRE(count_for_k(5) == 100);
    REQUIRE(count_for_k(6) == 120);
    REQUIRE(count_for_k(7) == 140);
  }
  SECTION("ks {4} gives 80") {
    auto fv = build_feature_vector(set, {4}, 1);
    REQUIRE(fv.values.size() == 80);
  }
  SECTION("zero epoch yields an all-zero vector of the right length") {
    preprocess::Epoch zero = make_epoch(Mat::Zero(500, 8), fs);
    preprocess::BandSet zset = preprocess::band_decompose(zero, bands);
    auto fv = build_feature_vector(zset, {4, 5, 6, 7}, 1);
    REQUIRE(fv.values.size() == 440);
    REQUIRE(fv.values.cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("keys follow canonical (band, k, state, feature) order") {
    auto fv = build_feature_vector(set, {4, 5}, 1);
    REQUIRE(fv.keys[0].band == "delta");
    REQUIRE(fv.keys[0].k == 4);
    REQUIRE(fv.keys[0].state == 'A');
    REQUIRE(fv.keys[0].feature == "duration_ms");
    REQUIRE(fv.keys[3].feature == "mean_gfp_uv");
    REQUIRE(fv.keys[4].state == 'B');
    REQUIRE(fv.keys[16].k == 5);       // k=4 block is 4 states x 4 features
    REQUIRE(fv.keys[36].band == "theta");  // first band holds (16+20) entries
  }
}
