#pragma once

// Synthetic multi-label data with held-out unknown classes, plus the
// dataset / CIW file formats.
//
// Dataset file (UTF-8):
//   #edlset v1 D=<d> K=<k> classes=<c1,c2,...> [unknown=<cu1,...>]
//   <id>\t<f1,f2,...>\t<label indices, may be empty>\t<0|1>
//
// CIW file (UTF-8): one `class_name<TAB>weight` per line; blank lines and
// lines starting with '#' are ignored.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "edl/ebra.hpp"
#include "edl/net.hpp"

namespace edl {

inline constexpr int kDatasetVersion = 1;

struct Sample {
  std::string id;
  std::vector<double> features;
  std::vector<std::size_t> labels;  // indices into the full class list
  bool is_unknown = false;

  friend bool operator==(const Sample&, const Sample&) = default;
};

// Metadata shared by every file of one dataset.
struct DatasetSchema {
  std::size_t dim = 0;
  std::vector<std::string> class_names;     // all K_total classes
  std::vector<std::string> unknown_classes;  // subset held out of training

  std::vector<std::string> known_classes() const;
  bool is_unknown_class(std::size_t index) const;

  friend bool operator==(const DatasetSchema&, const DatasetSchema&) = default;
};

struct DatasetSplit {
  DatasetSchema schema;
  std::vector<Sample> train;
  std::vector<Sample> validation;

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

struct GenConfig {
  std::size_t k_known = 6;
  std::size_t k_unknown = 2;
  std::size_t dim = 16;
  std::size_t n_train = 2000;
  std::size_t n_val = 600;
  double separation = 6.0;       // prototype norm
  double noise = 1.0;            // per-dimension noise std-dev
  double cooccurrence = 0.2;     // chance a defective sample has a 2nd label
  double normal_fraction = 0.4;  // label-free samples among known ones
  double unknown_fraction = 0.25;  // share of validation samples that are unknown
  // Unknown prototype j = unknown_anchor * (mean of unknown_blend known
  // prototypes, taken cyclically from index j * unknown_blend)
  //                     + unknown_distance * separation * (fresh direction).
  double unknown_anchor = 1.0;
  double unknown_distance = 0.0;
  std::size_t unknown_blend = 3;
  std::uint64_t seed = 7;

  void validate() const;
};

struct GeneratedData {
  DatasetSplit split;
  CiwTable ciw;                             // all classes, file order
  std::vector<std::vector<double>> prototypes;  // one per class
};

// Deterministic given cfg.seed. The K_unknown classes with the highest drawn
// CIW (uniform in [0.1, 1.0]) become the unknown classes; they occupy the
// last K_unknown class indices.
GeneratedData generate_synthetic(const GenConfig& cfg);

// Single-file I/O.
void save_samples(const std::filesystem::path& path, const DatasetSchema& schema,
                  const std::vector<Sample>& samples);
std::string samples_to_string(const DatasetSchema& schema,
                              const std::vector<Sample>& samples);
struct SampleFile {
  DatasetSchema schema;
  std::vector<Sample> samples;
};
SampleFile load_samples(const std::filesystem::path& path);
SampleFile samples_from_string(const std::string& text);

// Directory I/O: <dir>/train.edl and <dir>/val.edl.
void save_dataset(const std::filesystem::path& dir, const DatasetSplit& split);
DatasetSplit load_dataset(const std::filesystem::path& dir);

// Throws kData if any training sample is unknown or labelled with an
// unknown class.
void check_train_split(const DatasetSchema& schema, const std::vector<Sample>& train);

void save_ciw_config(const std::filesystem::path& path, const CiwTable& ciw);
CiwTable load_ciw_config(const std::filesystem::path& path);
CiwTable ciw_from_string(const std::string& text);

// Multi-hot labels over the known classes (in schema order). Labels of
// unknown classes are dropped.
TrainingSet make_training_set(const DatasetSchema& schema,
                              const std::vector<Sample>& samples);
MultiLabel known_label_vector(const DatasetSchema& schema, const Sample& s);

// Sewer-ML style annotation CSV: header `<filename column>,<class>,...`,
// rows of 0/1 flags. Columns not in `schema.class_names` are ignored.
// Features come from `lookup(filename)`; a missing entry is a kData error.
using FeatureLookup =
    std::function<std::optional<std::vector<double>>(const std::string&)>;
std::vector<Sample> load_annotation_csv(const std::filesystem::path& path,
                                        const DatasetSchema& schema,
                                        const FeatureLookup& lookup);

}  // namespace edl
