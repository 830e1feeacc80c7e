// SPDX-License-Identifier: Apache-2.0
//
// On-disk formats: CSV tables, corpus manifests, the feature store and the
// per-generation exports of a run.

#ifndef EPR_IO_HPP_
#define EPR_IO_HPP_

#include <string>
#include <vector>

#include "epr/eval.hpp"
#include "epr/features.hpp"
#include "epr/refinery.hpp"
#include "epr/representation.hpp"

namespace epr {

/// Shortest round-trip text for a double ("%.17g").
std::string format_double(double v);
double parse_double(const std::string& s, const std::string& context);
long parse_long(const std::string& s, const std::string& context);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index of a header name; throws DataError if absent.
  std::size_t column(const std::string& name) const;
};

/// Plain comma-separated values without quoting. Every row must have as many
/// fields as the header (or as the first row when has_header is false).
CsvTable read_csv(const std::string& path, bool has_header = true);
std::string csv_line(const std::vector<std::string>& fields);

std::string read_text(const std::string& path);
/// Writes to a sibling temporary file and renames it into place.
void write_text_atomic(const std::string& path, const std::string& content);

/// Identifiers end up in file names and CSV fields, so they are restricted to
/// [A-Za-z0-9_.-] and must not start with a dot.
void check_identifier(const std::string& id, const std::string& what);

// --- Manifests ----------------------------------------------------------------

struct ManifestEntry {
  std::string utterance_id;
  std::string path;  // audio or feature file, relative to the manifest directory unless absolute
  std::string label;
  std::string speaker;
};

struct CorpusManifest {
  std::vector<std::string> class_names;
  std::vector<ManifestEntry> entries;
  std::string base_dir;  // directory the relative paths resolve against

  int label_index(const std::string& label) const;
  std::string resolve(const ManifestEntry& e) const;
  /// Unique ids, every label in the class table, at least two classes.
  void validate() const;
};

/// Reads manifest.csv (utterance_id,path,label,speaker). The class table is
/// taken from classes.txt beside it when present, otherwise from the labels
/// in order of first appearance.
CorpusManifest read_manifest(const std::string& path);
void write_manifest(const CorpusManifest& m, const std::string& dir);

enum class CorpusConvention { kCasia, kEmoDb, kSavee };

CorpusConvention parse_convention(const std::string& name);
/// Label and speaker from a corpus file name (and its parent directory for
/// SAVEE). Throws DataError when the name does not follow the convention.
ManifestEntry parse_corpus_filename(CorpusConvention c, const std::string& path);
std::vector<std::string> convention_classes(CorpusConvention c);
/// Manifest for every .wav file below root, sorted by path.
CorpusManifest build_manifest(CorpusConvention c, const std::string& root);

// --- Feature store ------------------------------------------------------------

/// A directory holding manifest.csv/classes.txt whose paths point at
/// per-utterance spectrogram CSVs (row = mel bin), plus segments.csv and
/// store.json recording the framing and segmentation used.
struct FeatureStoreInfo {
  FrameSpec frames;
  SegmentSpec segment;
};

void write_spectrogram_csv(const LogMelSpectrogram& s, const std::string& path);
LogMelSpectrogram read_spectrogram_csv(const std::string& path, const std::string& utterance_id = "");
void write_store_info(const FeatureStoreInfo& info, const std::string& dir);
FeatureStoreInfo read_store_info(const std::string& dir);
/// segments.csv: utterance_id,segment_index,start_frame,end_frame.
std::string segment_index_csv(const std::vector<std::pair<std::string, int>>& utterance_frames,
                              const SegmentSpec& seg, const FrameSpec& frames);
/// Loads and segments every utterance listed in the store's manifest.
Dataset load_feature_store(const std::string& dir, const SegmentSpec& seg);

// --- Run exports --------------------------------------------------------------

/// utterance_id,segment_index,generation,p_1..p_K
std::string ep_csv(const EpMap& eps);
std::string targets_csv(const RefineryGeneration& gen);
EpMap read_ep_csv(const std::string& path);

/// utterance_id,f_1..f_D
std::string representation_csv(const std::vector<UtteranceRepresentation>& reps);
std::vector<UtteranceRepresentation> read_representation_csv(const std::string& path);

/// utterance_id,true,pred with class names.
std::string predictions_csv(const std::vector<std::string>& ids, const std::vector<int>& truth,
                            const std::vector<int>& pred, const std::vector<std::string>& class_names);
/// Rows are true classes, columns predicted classes.
std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names);

}  // namespace epr

#endif  // EPR_IO_HPP_
