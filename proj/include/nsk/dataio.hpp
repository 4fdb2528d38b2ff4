#pragma once

// On-disk formats and loaders for EEG recordings, fMRI volume series,
// feature matrices and the pipeline configuration.
//
// EEGR binary layout: magic "EEGR", u32 version=1, u32 n_channels,
// f64 fs_hz, u64 n_samples, then f32 little-endian samples in
// channel-major order. A JSON sidecar <name>.meta.json carries
// subject_id, label and (for the headerless CSV variant) fs_hz.
//
// fMRI volumes: raw f32 little-endian in (t, slice, row, col) order plus
// a JSON sidecar with the dimensions.
//
// Feature matrices: CSV with subject_id, label and one column per
// feature, named `<band>.k<k>.<state>.<feature>`.

#include <nsk/core.hpp>
#include <nsk/learn/params.hpp>

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace nsk::dataio {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Domain types

enum class GroupLabel { healthy, tinnitus };

inline std::string to_string(GroupLabel l) {
  return l == GroupLabel::healthy ? "healthy" : "tinnitus";
}

inline GroupLabel label_from_string(const std::string& s) {
  if (s == "healthy") return GroupLabel::healthy;
  if (s == "tinnitus") return GroupLabel::tinnitus;
  throw MalformedInput("unknown label '" + s + "'");
}

struct EegRecording {
  std::string subject_id;
  GroupLabel label = GroupLabel::healthy;
  double fs_hz = 0.0;
  Mat samples;  // n_samples x n_channels, microvolts

  Eigen::Index n_samples() const { return samples.rows(); }
  Eigen::Index n_channels() const { return samples.cols(); }

  void validate() const {
    if (fs_hz <= 0.0) throw DataError("fs_hz must be positive");
    if (samples.cols() < 1) throw DataError("recording needs at least one channel");
    if (samples.rows() < 1) throw DataError("recording needs at least one sample");
    require_finite(samples, "recording samples");
  }
};

struct FmriSeries {
  std::string subject_id;
  GroupLabel label = GroupLabel::healthy;
  int width = 0, height = 0, slices = 0, timepoints = 0;
  std::vector<float> voxels;  // (t, slice, row, col) order
  bool normalized = false;

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(width) * height * slices * timepoints;
  }

  float& at(int t, int s, int r, int c) {
    return voxels[((static_cast<std::size_t>(t) * slices + s) * height + r) * width + c];
  }
  float at(int t, int s, int r, int c) const {
    return voxels[((static_cast<std::size_t>(t) * slices + s) * height + r) * width + c];
  }

  Mat slice_image(int t, int s) const {
    Mat img(height, width);
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c) img(r, c) = at(t, s, r, c);
    return img;
  }

  void validate() const {
    if (width < 1 || height < 1 || slices < 1 || timepoints < 1)
      throw DataError("all fMRI dimensions must be >= 1");
    if (voxels.size() != voxel_count()) throw DataError("voxel buffer does not match dimensions");
    for (float v : voxels)
      if (!std::isfinite(v)) throw MalformedInput("non-finite voxel value");
    if (normalized)
      for (float v : voxels)
        if (v < 0.0f || v > 1.0f) throw DataError("normalized series has voxel outside [0,1]");
  }
};

struct Band {
  std::string name;
  double lo_hz = 0.0;
  double hi_hz = 0.0;
};

inline std::vector<Band> default_bands() {
  return {{"delta", 1.0, 4.0},
          {"theta", 4.0, 8.0},
          {"alpha", 8.0, 13.0},
          {"beta", 13.0, 30.0},
          {"gamma", 30.0, 45.0}};
}

enum class Decomposition { bandpass, db4_packet };
enum class MicrostateScope { window, subject };

struct KmeansOpts {
  int n_init = 20;
  int max_iter = 100;
  int peak_cap = 0;  // 0: use all GFP-peak maps
};

struct PipelineConfig {
  double window_s = 10.0;
  std::vector<Band> bands = default_bands();
  std::vector<int> microstate_ks = {4, 5, 6, 7};
  double artifact_limit_uv = 150.0;
  std::uint64_t seed = 1;
  int cv_folds = 5;
  std::vector<std::string> learners = {"rf"};
  Decomposition decomposition = Decomposition::bandpass;
  MicrostateScope microstate_scope = MicrostateScope::window;
  KmeansOpts kmeans;
  double broadband_lo_hz = 0.5;
  double broadband_hi_hz = 50.0;
  int filter_order = 3;
  learn::DtParams dt;
  learn::RfParams rf;
  learn::SvmParams svm;
  learn::MlpParams mlp;

  void validate() const {
    if (window_s <= 0.0) throw ConfigError("window_s must be positive");
    if (bands.empty()) throw ConfigError("at least one band required");
    for (const auto& b : bands) {
      if (!(0.0 < b.lo_hz && b.lo_hz < b.hi_hz))
        throw ConfigError("band '" + b.name + "' edges must satisfy 0 < lo < hi");
    }
    if (microstate_ks.empty()) throw ConfigError("at least one microstate k required");
    for (int k : microstate_ks)
      if (k < 2 || k > 12) throw ConfigError("microstate k must be in [2, 12]");
    if (cv_folds < 2) throw ConfigError("cv_folds must be >= 2");
    if (artifact_limit_uv <= 0.0) throw ConfigError("artifact_limit_uv must be positive");
    static const std::set<std::string> known = {"dt", "rf", "svm", "mlp"};
    for (const auto& l : learners)
      if (!known.count(l)) throw ConfigError("unknown learner '" + l + "'");
  }
};

// ---------------------------------------------------------------------------
// Little-endian primitives

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f32(std::ostream& os, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(os, u);
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  put_u64(os, u);
}

inline bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = b[0] | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
  return true;
}

inline bool get_u64(std::istream& is, std::uint64_t& v) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
  v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return true;
}

inline bool get_f32(std::istream& is, float& v) {
  std::uint32_t u;
  if (!get_u32(is, u)) return false;
  std::memcpy(&v, &u, 4);
  return true;
}

inline bool get_f64(std::istream& is, double& v) {
  std::uint64_t u;
  if (!get_u64(is, u)) return false;
  std::memcpy(&v, &u, 8);
  return true;
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& p) {
  std::filesystem::path s = p;
  s += ".meta.json";
  return s;
}

inline json load_json(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw MalformedInput("missing sidecar " + p.string());
  json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw MalformedInput("bad JSON in " + p.string() + ": " + e.what());
  }
  return j;
}

inline void save_json(const json& j, const std::filesystem::path& p) {
  std::ofstream os(p);
  if (!os) throw IoError("cannot write " + p.string());
  os << j.dump(2) << "\n";
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw MalformedInput("trailing characters in number '" + s + "' in " + where);
    if (!std::isfinite(v)) throw MalformedInput("non-finite value in " + where);
    return v;
  } catch (const MalformedInput&) {
    throw;
  } catch (const std::exception&) {
    throw MalformedInput("cannot parse number '" + s + "' in " + where);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// EEG recordings

enum class RecordingFormat { csv, eegr };

inline void write_recording(const EegRecording& rec, const std::filesystem::path& path,
                            RecordingFormat format) {
  rec.validate();
  json meta;
  meta["subject_id"] = rec.subject_id;
  meta["label"] = to_string(rec.label);
  meta["fs_hz"] = rec.fs_hz;
  detail::save_json(meta, detail::sidecar_path(path));

  if (format == RecordingFormat::eegr) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    os.write("EEGR", 4);
    detail::put_u32(os, 1u);
    detail::put_u32(os, static_cast<std::uint32_t>(rec.n_channels()));
    detail::put_f64(os, rec.fs_hz);
    detail::put_u64(os, static_cast<std::uint64_t>(rec.n_samples()));
    for (Eigen::Index c = 0; c < rec.n_channels(); ++c)
      for (Eigen::Index t = 0; t < rec.n_samples(); ++t)
        detail::put_f32(os, static_cast<float>(rec.samples(t, c)));
    if (!os) throw IoError("short write to " + path.string());
  } else {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    for (Eigen::Index c = 0; c < rec.n_channels(); ++c)
      os << (c ? "," : "") << "ch" << (c + 1);
    os << "\n";
    for (Eigen::Index t = 0; t < rec.n_samples(); ++t) {
      for (Eigen::Index c = 0; c < rec.n_channels(); ++c)
        os << (c ? "," : "") << detail::fmt_double(rec.samples(t, c));
      os << "\n";
    }
    if (!os) throw IoError("short write to " + path.string());
  }
}

inline EegRecording read_recording(const std::filesystem::path& path, RecordingFormat format) {
  json meta = detail::load_json(detail::sidecar_path(path));
  EegRecording rec;
  try {
    rec.subject_id = meta.at("subject_id").get<std::string>();
    rec.label = label_from_string(meta.at("label").get<std::string>());
  } catch (const json::exception& e) {
    throw MalformedInput("sidecar for " + path.string() + ": " + e.what());
  }

  if (format == RecordingFormat::eegr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "EEGR", 4) != 0)
      throw MalformedInput("bad magic in " + path.string());
    std::uint32_t version = 0, n_channels = 0;
    std::uint64_t n_samples = 0;
    double fs = 0.0;
    if (!detail::get_u32(is, version) || version != 1)
      throw MalformedInput("unsupported EEGR version in " + path.string());
    if (!detail::get_u32(is, n_channels) || !detail::get_f64(is, fs) ||
        !detail::get_u64(is, n_samples))
      throw MalformedInput("truncated header in " + path.string());
    if (n_channels == 0) throw DataError("zero channels in " + path.string());
    if (!(fs > 0.0)) throw DataError("fs_hz must be positive in " + path.string());
    if (n_samples == 0) throw DataError("zero samples in " + path.string());
    rec.fs_hz = fs;
    rec.samples.resize(static_cast<Eigen::Index>(n_samples), static_cast<Eigen::Index>(n_channels));
    for (std::uint32_t c = 0; c < n_channels; ++c)
      for (std::uint64_t t = 0; t < n_samples; ++t) {
        float v;
        if (!detail::get_f32(is, v)) throw MalformedInput("truncated payload in " + path.string());
        if (!std::isfinite(v)) throw MalformedInput("non-finite sample in " + path.string());
        rec.samples(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = v;
      }
  } else {
    double fs = 0.0;
    try {
      fs = meta.at("fs_hz").get<double>();
    } catch (const json::exception&) {
      throw MalformedInput("csv sidecar must carry fs_hz for " + path.string());
    }
    if (!(fs > 0.0)) throw DataError("fs_hz must be positive in " + path.string());
    rec.fs_hz = fs;
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || line.empty())
      throw MalformedInput("empty file " + path.string());
    auto header = detail::split_csv_line(line);
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] != "ch" + std::to_string(i + 1))
        throw MalformedInput("bad channel header in " + path.string());
    const std::size_t n_channels = header.size();
    std::vector<double> values;
    std::size_t n_rows = 0;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      auto cells = detail::split_csv_line(line);
      if (cells.size() != n_channels)
        throw MalformedInput("row width mismatch in " + path.string());
      for (const auto& c : cells) values.push_back(detail::parse_double(c, path.string()));
      ++n_rows;
    }
    if (n_rows == 0) throw DataError("zero samples in " + path.string());
    rec.samples.resize(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(n_channels));
    for (std::size_t t = 0; t < n_rows; ++t)
      for (std::size_t c = 0; c < n_channels; ++c)
        rec.samples(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) =
            values[t * n_channels + c];
  }
  rec.validate();
  return rec;
}

// ---------------------------------------------------------------------------
// fMRI volume series

inline void write_volume_series(const FmriSeries& s, const std::filesystem::path& path) {
  s.validate();
  json meta;
  meta["subject_id"] = s.subject_id;
  meta["label"] = to_string(s.label);
  meta["width"] = s.width;
  meta["height"] = s.height;
  meta["slices"] = s.slices;
  meta["timepoints"] = s.timepoints;
  meta["normalized"] = s.normalized;
  detail::save_json(meta, detail::sidecar_path(path));

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  for (float v : s.voxels) detail::put_f32(os, v);
  if (!os) throw IoError("short write to " + path.string());
}

inline FmriSeries read_volume_series(const std::filesystem::path& path) {
  json meta = detail::load_json(detail::sidecar_path(path));
  FmriSeries s;
  try {
    s.subject_id = meta.at("subject_id").get<std::string>();
    s.label = label_from_string(meta.at("label").get<std::string>());
    s.width = meta.at("width").get<int>();
    s.height = meta.at("height").get<int>();
    s.slices = meta.at("slices").get<int>();
    s.timepoints = meta.at("timepoints").get<int>();
    s.normalized = meta.at("normalized").get<bool>();
  } catch (const json::exception& e) {
    throw MalformedInput("sidecar for " + path.string() + ": " + e.what());
  }
  if (s.width < 1 || s.height < 1 || s.slices < 1 || s.timepoints < 1)
    throw MalformedInput("bad dimensions in sidecar for " + path.string());

  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  s.voxels.resize(s.voxel_count());
  for (std::size_t i = 0; i < s.voxels.size(); ++i) {
    if (!detail::get_f32(is, s.voxels[i]))
      throw MalformedInput("payload shorter than descriptor for " + path.string());
    if (!std::isfinite(s.voxels[i]))
      throw MalformedInput("non-finite voxel in " + path.string());
  }
  char extra;
  if (is.read(&extra, 1)) throw MalformedInput("payload longer than descriptor for " + path.string());
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// PGM (P5, 8-bit)

inline void write_pgm_unit(const std::filesystem::path& path, const Mat& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << "P5\n" << img.cols() << " " << img.rows() << "\n255\n";
  for (Eigen::Index r = 0; r < img.rows(); ++r)
    for (Eigen::Index c = 0; c < img.cols(); ++c) {
      double v = std::clamp(img(r, c), 0.0, 1.0);
      os.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  if (!os) throw IoError("short write to " + path.string());
}

inline Mat read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::string magic;
  is >> magic;
  if (magic != "P5") throw MalformedInput("not a P5 PGM: " + path.string());
  long w = 0, h = 0, maxval = 0;
  is >> w >> h >> maxval;
  if (!is || w < 1 || h < 1 || maxval < 1 || maxval > 255)
    throw MalformedInput("bad PGM header in " + path.string());
  is.get();  // single whitespace after maxval
  Mat img(h, w);
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c) {
      int v = is.get();
      if (v == EOF) throw MalformedInput("truncated PGM " + path.string());
      img(r, c) = static_cast<double>(v);
    }
  return img;
}

// ---------------------------------------------------------------------------
// Feature matrices

inline const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = {"duration_ms", "occurrence_per_s",
                                                 "coverage_pct", "mean_gfp_uv"};
  return names;
}

struct FeatureKey {
  std::string band;
  int k = 0;
  char state = 'A';
  std::string feature;

  bool operator==(const FeatureKey&) const = default;
};

inline std::string feature_column_name(const FeatureKey& key) {
  return key.band + ".k" + std::to_string(key.k) + "." + std::string(1, key.state) + "." +
         key.feature;
}

inline FeatureKey parse_feature_column(const std::string& name) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : name) {
    if (c == '.') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  if (parts.size() != 4) throw SchemaError("unknown column '" + name + "'");
  FeatureKey key;
  key.band = parts[0];
  if (key.band.empty()) throw SchemaError("empty band in column '" + name + "'");
  if (parts[1].size() < 2 || parts[1][0] != 'k')
    throw SchemaError("bad k segment in column '" + name + "'");
  try {
    key.k = std::stoi(parts[1].substr(1));
  } catch (const std::exception&) {
    throw SchemaError("bad k segment in column '" + name + "'");
  }
  if (key.k < 2 || key.k > 12) throw SchemaError("k out of range in column '" + name + "'");
  if (parts[2].size() != 1 || parts[2][0] < 'A' || parts[2][0] >= 'A' + key.k)
    throw SchemaError("bad state letter in column '" + name + "'");
  key.state = parts[2][0];
  const auto& known = feature_names();
  if (std::find(known.begin(), known.end(), parts[3]) == known.end())
    throw SchemaError("unknown feature in column '" + name + "'");
  key.feature = parts[3];
  return key;
}

struct FeatureMatrix {
  std::vector<std::string> columns;  // feature column names
  std::vector<std::string> subject_ids;
  std::vector<GroupLabel> labels;
  Mat values;  // n_rows x columns.size()

  Eigen::Index n_rows() const { return values.rows(); }

  void validate_schema() const {
    std::set<std::string> seen;
    for (const auto& c : columns) {
      parse_feature_column(c);
      if (!seen.insert(c).second) throw SchemaError("duplicate column '" + c + "'");
    }
    if (values.cols() != static_cast<Eigen::Index>(columns.size()) ||
        values.rows() != static_cast<Eigen::Index>(subject_ids.size()) ||
        subject_ids.size() != labels.size())
      throw SchemaError("feature matrix shape mismatch");
  }
};

inline void write_feature_matrix(const FeatureMatrix& fm, const std::filesystem::path& path) {
  fm.validate_schema();
  require_finite(fm.values, "feature matrix");
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "subject_id,label";
  for (const auto& c : fm.columns) os << "," << c;
  os << "\n";
  for (Eigen::Index r = 0; r < fm.n_rows(); ++r) {
    os << fm.subject_ids[r] << "," << to_string(fm.labels[r]);
    for (Eigen::Index c = 0; c < fm.values.cols(); ++c)
      os << "," << detail::fmt_double(fm.values(r, c));
    os << "\n";
  }
  if (!os) throw IoError("short write to " + path.string());
}

inline FeatureMatrix read_feature_matrix(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line.empty()) throw MalformedInput("empty file " + path.string());
  auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "subject_id" || header[1] != "label")
    throw MalformedInput("feature matrix must start with subject_id,label");
  FeatureMatrix fm;
  fm.columns.assign(header.begin() + 2, header.end());
  {
    std::set<std::string> seen;
    for (const auto& c : fm.columns) {
      parse_feature_column(c);
      if (!seen.insert(c).second) throw SchemaError("duplicate column '" + c + "'");
    }
  }
  std::vector<double> values;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) throw MalformedInput("row width mismatch in " + path.string());
    fm.subject_ids.push_back(cells[0]);
    fm.labels.push_back(label_from_string(cells[1]));
    for (std::size_t i = 2; i < cells.size(); ++i)
      values.push_back(detail::parse_double(cells[i], path.string()));
  }
  fm.values.resize(static_cast<Eigen::Index>(fm.subject_ids.size()),
                   static_cast<Eigen::Index>(fm.columns.size()));
  for (Eigen::Index r = 0; r < fm.values.rows(); ++r)
    for (Eigen::Index c = 0; c < fm.values.cols(); ++c)
      fm.values(r, c) = values[static_cast<std::size_t>(r) * fm.columns.size() + c];
  fm.validate_schema();
  return fm;
}

// ---------------------------------------------------------------------------
// Pipeline configuration (JSON, field for field)

inline json config_to_json(const PipelineConfig& cfg) {
  json j;
  j["window_s"] = cfg.window_s;
  j["bands"] = json::array();
  for (const auto& b : cfg.bands)
    j["bands"].push_back({{"name", b.name}, {"lo_hz", b.lo_hz}, {"hi_hz", b.hi_hz}});
  j["microstate_ks"] = cfg.microstate_ks;
  j["artifact_limit_uv"] = cfg.artifact_limit_uv;
  j["seed"] = cfg.seed;
  j["cv_folds"] = cfg.cv_folds;
  j["learners"] = cfg.learners;
  j["decomposition"] = cfg.decomposition == Decomposition::bandpass ? "bandpass" : "db4_packet";
  j["microstate_scope"] = cfg.microstate_scope == MicrostateScope::window ? "window" : "subject";
  j["kmeans"] = {{"n_init", cfg.kmeans.n_init},
                 {"max_iter", cfg.kmeans.max_iter},
                 {"peak_cap", cfg.kmeans.peak_cap}};
  j["broadband"] = {{"lo_hz", cfg.broadband_lo_hz},
                    {"hi_hz", cfg.broadband_hi_hz},
                    {"order", cfg.filter_order}};
  j["dt"] = {{"min_samples_split", cfg.dt.min_samples_split}, {"max_depth", cfg.dt.max_depth}};
  j["rf"] = {{"n_trees", cfg.rf.n_trees}, {"max_features", cfg.rf.max_features}};
  j["svm"] = {{"c", cfg.svm.c}, {"gamma", cfg.svm.gamma}, {"tol", cfg.svm.tol}};
  j["mlp"] = {{"hidden", cfg.mlp.hidden}, {"epochs", cfg.mlp.epochs},   {"batch", cfg.mlp.batch},
              {"dropout", cfg.mlp.dropout}, {"l1", cfg.mlp.l1},         {"l2", cfg.mlp.l2},
              {"lr", cfg.mlp.lr}};
  return j;
}

inline PipelineConfig config_from_json(const json& j) {
  PipelineConfig cfg;
  try {
    if (j.contains("window_s")) cfg.window_s = j.at("window_s").get<double>();
    if (j.contains("bands")) {
      cfg.bands.clear();
      for (const auto& b : j.at("bands"))
        cfg.bands.push_back({b.at("name").get<std::string>(), b.at("lo_hz").get<double>(),
                             b.at("hi_hz").get<double>()});
    }
    if (j.contains("microstate_ks"))
      cfg.microstate_ks = j.at("microstate_ks").get<std::vector<int>>();
    if (j.contains("artifact_limit_uv"))
      cfg.artifact_limit_uv = j.at("artifact_limit_uv").get<double>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("cv_folds")) cfg.cv_folds = j.at("cv_folds").get<int>();
    if (j.contains("learners")) cfg.learners = j.at("learners").get<std::vector<std::string>>();
    if (j.contains("decomposition")) {
      std::string d = j.at("decomposition").get<std::string>();
      if (d == "bandpass")
        cfg.decomposition = Decomposition::bandpass;
      else if (d == "db4_packet")
        cfg.decomposition = Decomposition::db4_packet;
      else
        throw ConfigError("unknown decomposition '" + d + "'");
    }
    if (j.contains("microstate_scope")) {
      std::string s = j.at("microstate_scope").get<std::string>();
      if (s == "window")
        cfg.microstate_scope = MicrostateScope::window;
      else if (s == "subject")
        cfg.microstate_scope = MicrostateScope::subject;
      else
        throw ConfigError("unknown microstate_scope '" + s + "'");
    }
    if (j.contains("kmeans")) {
      const auto& k = j.at("kmeans");
      if (k.contains("n_init")) cfg.kmeans.n_init = k.at("n_init").get<int>();
      if (k.contains("max_iter")) cfg.kmeans.max_iter = k.at("max_iter").get<int>();
      if (k.contains("peak_cap")) cfg.kmeans.peak_cap = k.at("peak_cap").get<int>();
    }
    if (j.contains("broadband")) {
      const auto& b = j.at("broadband");
      if (b.contains("lo_hz")) cfg.broadband_lo_hz = b.at("lo_hz").get<double>();
      if (b.contains("hi_hz")) cfg.broadband_hi_hz = b.at("hi_hz").get<double>();
      if (b.contains("order")) cfg.filter_order = b.at("order").get<int>();
    }
    if (j.contains("dt")) {
      const auto& d = j.at("dt");
      if (d.contains("min_samples_split"))
        cfg.dt.min_samples_split = d.at("min_samples_split").get<int>();
      if (d.contains("max_depth")) cfg.dt.max_depth = d.at("max_depth").get<int>();
    }
    if (j.contains("rf")) {
      const auto& r = j.at("rf");
      if (r.contains("n_trees")) cfg.rf.n_trees = r.at("n_trees").get<int>();
      if (r.contains("max_features")) cfg.rf.max_features = r.at("max_features").get<int>();
    }
    if (j.contains("svm")) {
      const auto& s = j.at("svm");
      if (s.contains("c")) cfg.svm.c = s.at("c").get<double>();
      if (s.contains("gamma")) cfg.svm.gamma = s.at("gamma").get<double>();
      if (s.contains("tol")) cfg.svm.tol = s.at("tol").get<double>();
    }
    if (j.contains("mlp")) {
      const auto& m = j.at("mlp");
      if (m.contains("hidden")) cfg.mlp.hidden = m.at("hidden").get<std::vector<int>>();
      if (m.contains("epochs")) cfg.mlp.epochs = m.at("epochs").get<int>();
      if (m.contains("batch")) cfg.mlp.batch = m.at("batch").get<int>();
      if (m.contains("dropout")) cfg.mlp.dropout = m.at("dropout").get<double>();
      if (m.contains("l1")) cfg.mlp.l1 = m.at("l1").get<double>();
      if (m.contains("l2")) cfg.mlp.l2 = m.at("l2").get<double>();
      if (m.contains("lr")) cfg.mlp.lr = m.at("lr").get<double>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return config_from_json(j);
}

inline void save_config(const PipelineConfig& cfg, const std::filesystem::path& path) {
  detail::save_json(config_to_json(cfg), path);
}

}  // namespace nsk::dataio
