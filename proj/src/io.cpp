// SPDX-License-Identifier: Apache-2.0

#include "epr/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace fs = std::filesystem;

namespace epr {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& context) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw DataError(context + ": not a number: '" + s + "'");
  return v;
}

long parse_long(const std::string& s, const std::string& context) {
  long v = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw DataError(context + ": not an integer: '" + s + "'");
  return v;
}

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw DataError("CSV is missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

CsvTable read_csv(const std::string& path, bool has_header) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  CsvTable t;
  std::string line;
  std::size_t width = 0, line_no = 0;
  bool first = true;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (first) {
      width = fields.size();
      first = false;
      if (has_header) {
        t.header = std::move(fields);
        continue;
      }
    }
    if (fields.size() != width)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) + " fields, found " +
                      std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
  }
  if (first) throw DataError(path + " is empty");
  return t;
}

std::string csv_line(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += fields[i];
  }
  out += '\n';
  return out;
}

std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw DataError("cannot create directory " + p.parent_path().string() + ": " + ec.message());
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write " + path);
    os << content;
    os.flush();
    if (!os) throw DataError("write failed: " + path);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move " + tmp + " into place: " + ec.message());
}

void check_identifier(const std::string& id, const std::string& what) {
  const bool ok = !id.empty() && id.front() != '.' && std::all_of(id.begin(), id.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-' || c == '.';
  });
  if (!ok) throw DataError(what + " '" + id + "' must be non-empty and use only [A-Za-z0-9_.-]");
}

// --- Manifests ----------------------------------------------------------------

int CorpusManifest::label_index(const std::string& label) const {
  const auto it = std::find(class_names.begin(), class_names.end(), label);
  if (it == class_names.end()) throw DataError("label '" + label + "' is not in the class table");
  return static_cast<int>(it - class_names.begin());
}

std::string CorpusManifest::resolve(const ManifestEntry& e) const {
  const fs::path p(e.path);
  if (p.is_absolute() || base_dir.empty()) return p.string();
  return (fs::path(base_dir) / p).string();
}

void CorpusManifest::validate() const {
  if (class_names.size() < 2) throw DataError("manifest needs at least 2 classes");
  std::unordered_set<std::string> classes;
  for (const auto& c : class_names) {
    check_identifier(c, "class name");
    if (!classes.insert(c).second) throw DataError("duplicate class name '" + c + "'");
  }
  std::unordered_set<std::string> seen;
  for (const auto& e : entries) {
    check_identifier(e.utterance_id, "utterance id");
    if (!seen.insert(e.utterance_id).second) throw DataError("duplicate utterance id '" + e.utterance_id + "'");
    if (!classes.count(e.label))
      throw DataError("utterance '" + e.utterance_id + "' has label '" + e.label + "' outside the class table");
    if (e.path.empty()) throw DataError("utterance '" + e.utterance_id + "' has no path");
    if (e.speaker.find(',') != std::string::npos) throw DataError("speaker ids must not contain commas");
  }
}

CorpusManifest read_manifest(const std::string& path) {
  const CsvTable t = read_csv(path);
  const std::size_t ci = t.column("utterance_id"), cp = t.column("path"), cl = t.column("label"),
                    cs = t.column("speaker");
  CorpusManifest m;
  m.base_dir = fs::path(path).parent_path().string();
  for (const auto& r : t.rows) m.entries.push_back({r[ci], r[cp], r[cl], r[cs]});
  const fs::path classes = fs::path(path).parent_path() / "classes.txt";
  if (fs::exists(classes)) {
    std::istringstream ss(read_text(classes.string()));
    std::string line;
    while (std::getline(ss, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) m.class_names.push_back(line);
    }
  } else {
    for (const auto& e : m.entries)
      if (std::find(m.class_names.begin(), m.class_names.end(), e.label) == m.class_names.end())
        m.class_names.push_back(e.label);
  }
  m.validate();
  return m;
}

void write_manifest(const CorpusManifest& m, const std::string& dir) {
  m.validate();
  std::string csv = csv_line({"utterance_id", "path", "label", "speaker"});
  for (const auto& e : m.entries) csv += csv_line({e.utterance_id, e.path, e.label, e.speaker});
  write_text_atomic((fs::path(dir) / "manifest.csv").string(), csv);
  std::string classes;
  for (const auto& c : m.class_names) classes += c + "\n";
  write_text_atomic((fs::path(dir) / "classes.txt").string(), classes);
}

CorpusConvention parse_convention(const std::string& name) {
  if (name == "casia") return CorpusConvention::kCasia;
  if (name == "emodb") return CorpusConvention::kEmoDb;
  if (name == "savee") return CorpusConvention::kSavee;
  throw ConfigError("unknown corpus convention '" + name + "' (expected casia, emodb or savee)");
}

std::vector<std::string> convention_classes(CorpusConvention c) {
  switch (c) {
    case CorpusConvention::kCasia:
      return {"angry", "fear", "happy", "neutral", "sad", "surprise"};
    case CorpusConvention::kEmoDb:
      return {"anger", "boredom", "disgust", "fear", "happiness", "sadness", "neutral"};
    case CorpusConvention::kSavee:
      return {"anger", "disgust", "fear", "happiness", "neutral", "sadness", "surprise"};
  }
  return {};
}

namespace {

std::string lower(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (unsigned char ch : s) out += (std::isalnum(ch) || ch == '_' || ch == '-' || ch == '.') ? static_cast<char>(ch) : '_';
  if (!out.empty() && out.front() == '.') out.front() = '_';
  return out;
}

}  // namespace

ManifestEntry parse_corpus_filename(CorpusConvention c, const std::string& path) {
  const fs::path p(path);
  const std::string stem = p.stem().string();
  const auto bad = [&](const std::string& why) {
    return DataError("file name '" + p.filename().string() + "' does not follow the convention: " + why);
  };
  ManifestEntry e;
  e.path = path;
  switch (c) {
    case CorpusConvention::kCasia: {
      // <emotion>_<speaker>_<id>
      const auto parts = split_fields([&] {
        std::string s = stem;
        std::replace(s.begin(), s.end(), '_', ',');
        return s;
      }());
      if (parts.size() < 3) throw bad("expected <emotion>_<speaker>_<id>");
      e.label = lower(parts[0]);
      e.speaker = sanitize(parts[1]);
      e.utterance_id = sanitize(stem);
      break;
    }
    case CorpusConvention::kEmoDb: {
      // <speaker:2 digits><text:3 chars><emotion letter><version>, e.g. 03a01Fa
      if (stem.size() < 7) throw bad("expected e.g. 03a01Fa");
      static const std::map<char, std::string> codes = {{'W', "anger"},   {'L', "boredom"}, {'E', "disgust"},
                                                        {'A', "fear"},    {'F', "happiness"}, {'T', "sadness"},
                                                        {'N', "neutral"}};
      const auto it = codes.find(stem[5]);
      if (it == codes.end()) throw bad(std::string("unknown emotion code '") + stem[5] + "'");
      e.label = it->second;
      e.speaker = stem.substr(0, 2);
      e.utterance_id = sanitize(stem);
      break;
    }
    case CorpusConvention::kSavee: {
      // <speaker>_<code><nn> or <speaker>/<code><nn>; codes a d f h n sa su
      std::string speaker, code = stem;
      if (const auto us = stem.find('_'); us != std::string::npos) {
        speaker = stem.substr(0, us);
        code = stem.substr(us + 1);
      } else {
        speaker = p.parent_path().filename().string();
      }
      std::size_t n = 0;
      while (n < code.size() && std::isalpha(static_cast<unsigned char>(code[n]))) ++n;
      static const std::map<std::string, std::string> codes = {{"a", "anger"},     {"d", "disgust"}, {"f", "fear"},
                                                               {"h", "happiness"}, {"n", "neutral"}, {"sa", "sadness"},
                                                               {"su", "surprise"}};
      const auto it = codes.find(lower(code.substr(0, n)));
      if (it == codes.end() || n == code.size()) throw bad("expected <speaker>_<code><number>");
      if (speaker.empty()) throw bad("speaker could not be determined");
      e.label = it->second;
      e.speaker = sanitize(speaker);
      e.utterance_id = sanitize(speaker + "_" + code);
      break;
    }
  }
  return e;
}

CorpusManifest build_manifest(CorpusConvention c, const std::string& root) {
  if (!fs::is_directory(root)) throw DataError("not a directory: " + root);
  std::vector<fs::path> files;
  for (const auto& de : fs::recursive_directory_iterator(root))
    if (de.is_regular_file() && lower(de.path().extension().string()) == ".wav") files.push_back(de.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .wav files below " + root);
  CorpusManifest m;
  m.class_names = convention_classes(c);
  m.base_dir = root;
  for (const auto& f : files) {
    ManifestEntry e = parse_corpus_filename(c, f.string());
    e.path = fs::relative(f, root).string();
    m.entries.push_back(std::move(e));
  }
  m.validate();
  return m;
}

// --- Feature store ------------------------------------------------------------

void write_spectrogram_csv(const LogMelSpectrogram& s, const std::string& path) {
  std::string out;
  out.reserve(static_cast<std::size_t>(s.values.size()) * 24);
  for (Eigen::Index r = 0; r < s.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < s.values.cols(); ++c) {
      if (c) out += ',';
      out += format_double(s.values(r, c));
    }
    out += '\n';
  }
  write_text_atomic(path, out);
}

LogMelSpectrogram read_spectrogram_csv(const std::string& path, const std::string& utterance_id) {
  const CsvTable t = read_csv(path, false);
  LogMelSpectrogram s;
  s.utterance_id = utterance_id;
  s.values.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.rows.front().size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t c = 0; c < t.rows[r].size(); ++c) {
      const double v = parse_double(t.rows[r][c], path);
      if (!std::isfinite(v)) throw DataError(path + ": non-finite spectrogram value");
      s.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  return s;
}

void write_store_info(const FeatureStoreInfo& info, const std::string& dir) {
  nlohmann::ordered_json j;
  j["format"] = "epr-feature-store";
  j["version"] = 1;
  j["frames"] = {{"win_ms", info.frames.win_ms},
                 {"hop_ms", info.frames.hop_ms},
                 {"fft_len", info.frames.fft_len},
                 {"n_mels", info.frames.n_mels}};
  j["segment"] = {{"seg_frames", info.segment.seg_frames}, {"seg_hop_ms", info.segment.seg_hop_ms}};
  write_text_atomic((fs::path(dir) / "store.json").string(), j.dump(2) + "\n");
}

FeatureStoreInfo read_store_info(const std::string& dir) {
  const std::string path = (fs::path(dir) / "store.json").string();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  if (j.value("format", "") != "epr-feature-store") throw DataError(path + " is not a feature store description");
  FeatureStoreInfo info;
  try {
    const auto& f = j.at("frames");
    info.frames.win_ms = f.at("win_ms").get<int>();
    info.frames.hop_ms = f.at("hop_ms").get<int>();
    info.frames.fft_len = f.at("fft_len").get<int>();
    info.frames.n_mels = f.at("n_mels").get<int>();
    const auto& s = j.at("segment");
    info.segment.seg_frames = s.at("seg_frames").get<int>();
    info.segment.seg_hop_ms = s.at("seg_hop_ms").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return info;
}

std::string segment_index_csv(const std::vector<std::pair<std::string, int>>& utterance_frames,
                              const SegmentSpec& seg, const FrameSpec& frames) {
  std::string out = csv_line({"utterance_id", "segment_index", "start_frame", "end_frame"});
  const int hop = seg.hop_frames(frames);
  for (const auto& [id, n_frames] : utterance_frames) {
    const int n = segment_count(n_frames, seg, frames);
    for (int i = 0; i < n; ++i)
      out += csv_line({id, std::to_string(i), std::to_string(i * hop), std::to_string(i * hop + seg.seg_frames)});
  }
  return out;
}

Dataset load_feature_store(const std::string& dir, const SegmentSpec& seg) {
  const FeatureStoreInfo info = read_store_info(dir);
  seg.validate(info.frames);
  const CorpusManifest m = read_manifest((fs::path(dir) / "manifest.csv").string());
  if (m.entries.empty()) throw DataError("feature store " + dir + " lists no utterances");
  Dataset ds;
  ds.class_names = m.class_names;
  for (const auto& e : m.entries) {
    const LogMelSpectrogram s = read_spectrogram_csv(m.resolve(e), e.utterance_id);
    if (s.values.rows() != info.frames.n_mels)
      throw DataError("utterance '" + e.utterance_id + "' has " + std::to_string(s.values.rows()) +
                      " mel bins, store declares " + std::to_string(info.frames.n_mels));
    Utterance u;
    u.id = e.utterance_id;
    u.label = m.label_index(e.label);
    u.speaker = e.speaker;
    u.segments = segment_spectrogram(s, seg, info.frames);
    ds.utterances.push_back(std::move(u));
  }
  ds.validate();
  return ds;
}

// --- Run exports --------------------------------------------------------------

namespace {

std::vector<std::string> prob_header(int k, const std::string& first_cols) {
  std::vector<std::string> h = split_fields(first_cols);
  for (int c = 1; c <= k; ++c) h.push_back("p_" + std::to_string(c));
  return h;
}

}  // namespace

std::string ep_csv(const EpMap& eps) {
  if (eps.empty()) throw DataError("no emotion profiles to export");
  const int k = eps.begin()->second.n_classes();
  std::string out = csv_line(prob_header(k, "utterance_id,segment_index,generation"));
  for (const auto& [id, ep] : eps)
    for (int i = 0; i < ep.n_segments(); ++i) {
      std::vector<std::string> row{id, std::to_string(i), std::to_string(ep.generation)};
      for (int c = 0; c < k; ++c) row.push_back(format_double(ep.values(c, i)));
      out += csv_line(row);
    }
  return out;
}

std::string targets_csv(const RefineryGeneration& gen) {
  if (gen.targets.empty()) throw DataError("no targets to export");
  const int k = static_cast<int>(gen.targets.begin()->second.front().size());
  std::string out = csv_line(prob_header(k, "utterance_id,segment_index,generation"));
  for (const auto& [id, tg] : gen.targets)
    for (std::size_t i = 0; i < tg.size(); ++i) {
      std::vector<std::string> row{id, std::to_string(i), std::to_string(gen.t)};
      for (int c = 0; c < k; ++c) row.push_back(format_double(tg[i][static_cast<std::size_t>(c)]));
      out += csv_line(row);
    }
  return out;
}

EpMap read_ep_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  if (t.header.size() < 5 || t.header[0] != "utterance_id" || t.header[1] != "segment_index" ||
      t.header[2] != "generation")
    throw DataError(path + " is not an emotion-profile CSV");
  const int k = static_cast<int>(t.header.size()) - 3;
  std::map<std::string, std::vector<std::vector<double>>> cols;
  std::map<std::string, int> gens;
  for (const auto& r : t.rows) {
    auto& c = cols[r[0]];
    const long idx = parse_long(r[1], path);
    if (idx != static_cast<long>(c.size()))
      throw DataError(path + ": segments of '" + r[0] + "' are not listed in order");
    gens[r[0]] = static_cast<int>(parse_long(r[2], path));
    std::vector<double> p(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) p[static_cast<std::size_t>(j)] = parse_double(r[static_cast<std::size_t>(3 + j)], path);
    c.push_back(std::move(p));
  }
  EpMap eps;
  for (auto& [id, c] : cols) {
    EmotionProfile ep;
    ep.utterance_id = id;
    ep.generation = gens[id];
    ep.values.resize(k, static_cast<Eigen::Index>(c.size()));
    for (std::size_t i = 0; i < c.size(); ++i)
      for (int j = 0; j < k; ++j) ep.values(j, static_cast<Eigen::Index>(i)) = c[i][static_cast<std::size_t>(j)];
    eps.emplace(id, std::move(ep));
  }
  return eps;
}

std::string representation_csv(const std::vector<UtteranceRepresentation>& reps) {
  if (reps.empty()) throw DataError("no representations to export");
  std::vector<std::string> header{"utterance_id"};
  for (std::size_t f = 1; f <= reps.front().features.size(); ++f) header.push_back("f_" + std::to_string(f));
  std::string out = csv_line(header);
  for (const auto& r : reps) {
    std::vector<std::string> row{r.utterance_id};
    for (double v : r.features) row.push_back(format_double(v));
    out += csv_line(row);
  }
  return out;
}

std::vector<UtteranceRepresentation> read_representation_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  if (t.header.size() < 2 || t.header[0] != "utterance_id") throw DataError(path + " is not a representation CSV");
  std::vector<UtteranceRepresentation> out;
  for (const auto& r : t.rows) {
    UtteranceRepresentation u;
    u.utterance_id = r[0];
    for (std::size_t i = 1; i < r.size(); ++i) u.features.push_back(parse_double(r[i], path));
    out.push_back(std::move(u));
  }
  return out;
}

std::string predictions_csv(const std::vector<std::string>& ids, const std::vector<int>& truth,
                            const std::vector<int>& pred, const std::vector<std::string>& class_names) {
  if (ids.size() != truth.size() || ids.size() != pred.size()) throw ConfigError("prediction columns differ in length");
  std::string out = csv_line({"utterance_id", "true", "pred"});
  for (std::size_t i = 0; i < ids.size(); ++i)
    out += csv_line({ids[i], class_names.at(static_cast<std::size_t>(truth[i])),
                     class_names.at(static_cast<std::size_t>(pred[i]))});
  return out;
}

std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
  if (static_cast<int>(class_names.size()) != cm.n_classes()) throw ConfigError("class names do not match the matrix");
  std::vector<std::string> header{"true\\pred"};
  header.insert(header.end(), class_names.begin(), class_names.end());
  std::string out = csv_line(header);
  for (int r = 0; r < cm.n_classes(); ++r) {
    std::vector<std::string> row{class_names[static_cast<std::size_t>(r)]};
    for (int c = 0; c < cm.n_classes(); ++c) row.push_back(std::to_string(cm.count(r, c)));
    out += csv_line(row);
  }
  return out;
}

}  // namespace epr
