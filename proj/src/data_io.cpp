#include "edl/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "edl/error.hpp"
#include "edl/text.hpp"

namespace edl {

namespace {

std::string read_file(const std::filesystem::path& path, ErrorKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(kind, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kData, "cannot write " + path.string());
  out << body;
  if (!out) fail(ErrorKind::kData, "failed writing " + path.string());
}

// Lines without their terminator; a final empty line is dropped.
std::vector<std::string> split_lines(const std::string& body) {
  std::vector<std::string> lines;
  std::istringstream in(body);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

void check_class_name(const std::string& name, ErrorKind kind) {
  if (name.empty() || name.find_first_of(" \t\r\n,=") != std::string::npos) {
    fail(kind, "invalid class name '" + name + "'");
  }
}

std::vector<double> random_direction(std::mt19937_64& rng, std::size_t dim,
                                     const std::vector<std::vector<double>>& basis) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  for (double& x : v) x = normal(rng);
  // Gram-Schmidt against the existing directions while room remains.
  if (basis.size() < dim) {
    for (const auto& b : basis) {
      const double dot = std::inner_product(v.begin(), v.end(), b.begin(), 0.0);
      for (std::size_t i = 0; i < dim; ++i) v[i] -= dot * b[i];
    }
  }
  const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  for (double& x : v) x /= norm;
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Schema

std::vector<std::string> DatasetSchema::known_classes() const {
  std::vector<std::string> out;
  for (const auto& c : class_names) {
    if (std::find(unknown_classes.begin(), unknown_classes.end(), c) ==
        unknown_classes.end()) {
      out.push_back(c);
    }
  }
  return out;
}

bool DatasetSchema::is_unknown_class(std::size_t index) const {
  return std::find(unknown_classes.begin(), unknown_classes.end(),
                   class_names.at(index)) != unknown_classes.end();
}

void check_train_split(const DatasetSchema& schema, const std::vector<Sample>& train) {
  for (const auto& s : train) {
    if (s.is_unknown) {
      fail(ErrorKind::kData, "training split contains unknown sample " + s.id);
    }
    for (auto l : s.labels) {
      if (schema.is_unknown_class(l)) {
        fail(ErrorKind::kData, "training sample " + s.id + " carries unknown class " +
                                   schema.class_names[l]);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Generation

void GenConfig::validate() const {
  const std::size_t k_total = k_known + k_unknown;
  if (k_unknown >= k_total) {
    fail(ErrorKind::kConfig, "K_unknown (" + std::to_string(k_unknown) +
                                 ") must be smaller than K_total (" +
                                 std::to_string(k_total) + ")");
  }
  if (dim == 0) fail(ErrorKind::kConfig, "feature dimension must be >= 1");
  if (!(separation > 0.0)) fail(ErrorKind::kConfig, "separation must be > 0");
  if (!(noise >= 0.0)) fail(ErrorKind::kConfig, "noise must be >= 0");
  auto check_fraction = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
      fail(ErrorKind::kConfig, std::string(name) + " must lie in [0,1]");
    }
  };
  check_fraction(cooccurrence, "cooccurrence");
  check_fraction(normal_fraction, "normal_fraction");
  check_fraction(unknown_fraction, "unknown_fraction");
  if (unknown_blend == 0) fail(ErrorKind::kConfig, "unknown_blend must be >= 1");
  if (!std::isfinite(unknown_anchor) || !std::isfinite(unknown_distance)) {
    fail(ErrorKind::kConfig, "unknown placement parameters must be finite");
  }
}

GeneratedData generate_synthetic(const GenConfig& cfg) {
  cfg.validate();
  const std::size_t k_total = cfg.k_known + cfg.k_unknown;
  std::mt19937_64 rng(cfg.seed);

  // Class-importance weights; the highest ones go to the unknown classes.
  std::uniform_real_distribution<double> ciw_dist(0.1, 1.0);
  std::vector<double> drawn(k_total);
  for (double& w : drawn) w = ciw_dist(rng);
  std::vector<std::size_t> order(k_total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return drawn[a] > drawn[b]; });
  std::vector<double> ciw(k_total);
  {
    std::vector<bool> taken(k_total, false);
    for (std::size_t j = 0; j < cfg.k_unknown; ++j) {
      ciw[cfg.k_known + j] = drawn[order[j]];
      taken[order[j]] = true;
    }
    std::size_t next = 0;
    for (std::size_t i = 0; i < k_total; ++i) {
      if (!taken[i]) ciw[next++] = drawn[i];
    }
  }

  GeneratedData out;
  DatasetSchema& schema = out.split.schema;
  schema.dim = cfg.dim;
  std::vector<CiwEntry> entries;
  for (std::size_t k = 0; k < k_total; ++k) {
    schema.class_names.push_back("class" + std::to_string(k));
    if (k >= cfg.k_known) schema.unknown_classes.push_back(schema.class_names.back());
    entries.push_back({schema.class_names.back(), ciw[k]});
  }
  out.ciw = CiwTable(std::move(entries));

  std::vector<std::vector<double>> directions;
  for (std::size_t k = 0; k < k_total; ++k) {
    directions.push_back(random_direction(rng, cfg.dim, directions));
  }
  out.prototypes.resize(k_total, std::vector<double>(cfg.dim));
  for (std::size_t k = 0; k < cfg.k_known; ++k) {
    for (std::size_t i = 0; i < cfg.dim; ++i) {
      out.prototypes[k][i] = cfg.separation * directions[k][i];
    }
  }
  for (std::size_t j = 0; j < cfg.k_unknown; ++j) {
    std::vector<double> anchor(cfg.dim, 0.0);
    for (std::size_t m = 0; m < cfg.unknown_blend; ++m) {
      const auto& p = out.prototypes[(j * cfg.unknown_blend + m) % cfg.k_known];
      for (std::size_t i = 0; i < cfg.dim; ++i) anchor[i] += p[i] / cfg.unknown_blend;
    }
    const auto& dir = directions[cfg.k_known + j];
    for (std::size_t i = 0; i < cfg.dim; ++i) {
      out.prototypes[cfg.k_known + j][i] =
          cfg.unknown_anchor * anchor[i] + cfg.unknown_distance * cfg.separation * dir[i];
    }
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_known(0, cfg.k_known - 1);
  std::uniform_int_distribution<std::size_t> pick_unknown(0, cfg.k_unknown ? cfg.k_unknown - 1 : 0);

  auto make_sample = [&](std::string id, bool allow_unknown) {
    Sample s;
    s.id = std::move(id);
    if (allow_unknown && cfg.k_unknown > 0 && unit(rng) < cfg.unknown_fraction) {
      s.is_unknown = true;
      s.labels.push_back(cfg.k_known + pick_unknown(rng));
      if (unit(rng) < cfg.cooccurrence) s.labels.push_back(pick_known(rng));
    } else if (unit(rng) >= cfg.normal_fraction) {
      const std::size_t first = pick_known(rng);
      s.labels.push_back(first);
      if (cfg.k_known > 1 && unit(rng) < cfg.cooccurrence) {
        std::size_t second = pick_known(rng);
        while (second == first) second = pick_known(rng);
        s.labels.push_back(second);
      }
    }
    std::sort(s.labels.begin(), s.labels.end());
    s.features.assign(cfg.dim, 0.0);
    if (!s.labels.empty()) {
      for (auto l : s.labels) {
        for (std::size_t i = 0; i < cfg.dim; ++i) s.features[i] += out.prototypes[l][i];
      }
      const double n = static_cast<double>(s.labels.size());
      for (double& x : s.features) x /= n;
    }
    for (double& x : s.features) x += cfg.noise * normal(rng);
    return s;
  };

  auto padded = [](const char* prefix, std::size_t i) {
    std::string digits = std::to_string(i);
    return std::string(prefix) + std::string(digits.size() < 6 ? 6 - digits.size() : 0, '0') + digits;
  };
  for (std::size_t i = 0; i < cfg.n_train; ++i) {
    out.split.train.push_back(make_sample(padded("train-", i), false));
  }
  for (std::size_t i = 0; i < cfg.n_val; ++i) {
    out.split.validation.push_back(make_sample(padded("val-", i), true));
  }
  check_train_split(schema, out.split.train);
  return out;
}

// ---------------------------------------------------------------------------
// Dataset files

std::string samples_to_string(const DatasetSchema& schema,
                              const std::vector<Sample>& samples) {
  for (const auto& c : schema.class_names) check_class_name(c, ErrorKind::kInvalidInput);
  std::string out = "#edlset v" + std::to_string(kDatasetVersion) +
                    " D=" + std::to_string(schema.dim) +
                    " K=" + std::to_string(schema.class_names.size()) + " classes=";
  for (std::size_t k = 0; k < schema.class_names.size(); ++k) {
    if (k) out += ',';
    out += schema.class_names[k];
  }
  if (!schema.unknown_classes.empty()) {
    out += " unknown=";
    for (std::size_t k = 0; k < schema.unknown_classes.size(); ++k) {
      if (k) out += ',';
      out += schema.unknown_classes[k];
    }
  }
  out += '\n';
  for (const auto& s : samples) {
    if (s.id.empty() || s.id.find_first_of("\t\r\n") != std::string::npos) {
      fail(ErrorKind::kInvalidInput, "sample id must be non-empty without tabs/newlines");
    }
    if (s.features.size() != schema.dim) {
      fail(ErrorKind::kInvalidInput, "sample " + s.id + " has wrong feature count");
    }
    out += s.id;
    out += '\t';
    out += text::join_doubles(s.features, ',');
    out += '\t';
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
      if (i) out += ',';
      out += std::to_string(s.labels[i]);
    }
    out += '\t';
    out += s.is_unknown ? '1' : '0';
    out += '\n';
  }
  return out;
}

void save_samples(const std::filesystem::path& path, const DatasetSchema& schema,
                  const std::vector<Sample>& samples) {
  write_file(path, samples_to_string(schema, samples));
}

namespace {

[[noreturn]] void parse_error(std::size_t line_no, const std::string& what) {
  fail(ErrorKind::kData, "dataset line " + std::to_string(line_no) + ": " + what);
}

std::size_t parse_count(std::string_view tok, std::size_t line_no) {
  const auto v = text::parse_int(tok);
  if (!v || *v < 0) parse_error(line_no, "bad integer '" + std::string(tok) + "'");
  return static_cast<std::size_t>(*v);
}

DatasetSchema parse_header(const std::string& line) {
  const auto tokens = text::split(line, ' ');
  if (tokens.empty() || tokens[0] != "#edlset") parse_error(1, "missing #edlset header");
  if (tokens.size() < 2 || tokens[1] != "v" + std::to_string(kDatasetVersion)) {
    parse_error(1, "unsupported dataset version '" +
                       std::string(tokens.size() > 1 ? tokens[1] : "") + "'");
  }
  DatasetSchema schema;
  std::optional<std::size_t> k;
  bool have_dim = false, have_classes = false;
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    const auto tok = tokens[i];
    const auto eq = tok.find('=');
    if (eq == std::string_view::npos) parse_error(1, "malformed header field");
    const auto key = tok.substr(0, eq);
    const auto value = tok.substr(eq + 1);
    if (key == "D") {
      schema.dim = parse_count(value, 1);
      have_dim = true;
    } else if (key == "K") {
      k = parse_count(value, 1);
    } else if (key == "classes") {
      have_classes = true;
      if (!value.empty()) {
        for (auto c : text::split(value, ',')) schema.class_names.emplace_back(c);
      }
    } else if (key == "unknown") {
      for (auto c : text::split(value, ',')) schema.unknown_classes.emplace_back(c);
    } else {
      parse_error(1, "unknown header field '" + std::string(key) + "'");
    }
  }
  if (!have_dim || !k || !have_classes) parse_error(1, "header needs D, K and classes");
  if (*k != schema.class_names.size()) parse_error(1, "K does not match the class list");
  for (const auto& c : schema.class_names) {
    if (c.empty()) parse_error(1, "empty class name");
    if (std::count(schema.class_names.begin(), schema.class_names.end(), c) > 1) {
      parse_error(1, "duplicate class name " + c);
    }
  }
  for (const auto& u : schema.unknown_classes) {
    if (std::find(schema.class_names.begin(), schema.class_names.end(), u) ==
        schema.class_names.end()) {
      parse_error(1, "unknown class " + u + " is not in the class list");
    }
  }
  return schema;
}

}  // namespace

SampleFile samples_from_string(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty()) parse_error(1, "empty file");
  SampleFile out;
  out.schema = parse_header(lines[0]);
  const std::size_t k_total = out.schema.class_names.size();
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const std::size_t line_no = n + 1;
    const auto fields = text::split(lines[n], '\t');
    if (fields.size() != 4) {
      parse_error(line_no, "expected 4 tab-separated fields, got " + std::to_string(fields.size()));
    }
    Sample s;
    s.id = std::string(fields[0]);
    if (s.id.empty()) parse_error(line_no, "empty sample id");
    const auto feats = text::split(fields[1], ',');
    if (feats.size() != out.schema.dim || fields[1].empty()) {
      parse_error(line_no, "expected " + std::to_string(out.schema.dim) + " features");
    }
    s.features.reserve(feats.size());
    for (auto f : feats) {
      const auto v = text::parse_double(f);
      if (!v || !std::isfinite(*v)) parse_error(line_no, "bad feature value '" + std::string(f) + "'");
      s.features.push_back(*v);
    }
    if (!fields[2].empty()) {
      for (auto l : text::split(fields[2], ',')) {
        const std::size_t idx = parse_count(l, line_no);
        if (idx >= k_total) parse_error(line_no, "label index out of range");
        s.labels.push_back(idx);
      }
    }
    if (fields[3] == "1") {
      s.is_unknown = true;
    } else if (fields[3] != "0") {
      parse_error(line_no, "unknown flag must be 0 or 1");
    }
    const bool has_unknown_label =
        std::any_of(s.labels.begin(), s.labels.end(),
                    [&](std::size_t l) { return out.schema.is_unknown_class(l); });
    if (s.is_unknown != has_unknown_label) {
      parse_error(line_no, s.is_unknown ? "unknown sample carries no unknown-class label"
                                        : "sample with unknown-class label not flagged unknown");
    }
    out.samples.push_back(std::move(s));
  }
  return out;
}

SampleFile load_samples(const std::filesystem::path& path) {
  return samples_from_string(read_file(path, ErrorKind::kData));
}

void save_dataset(const std::filesystem::path& dir, const DatasetSplit& split) {
  check_train_split(split.schema, split.train);
  std::filesystem::create_directories(dir);
  save_samples(dir / "train.edl", split.schema, split.train);
  save_samples(dir / "val.edl", split.schema, split.validation);
}

DatasetSplit load_dataset(const std::filesystem::path& dir) {
  SampleFile train = load_samples(dir / "train.edl");
  SampleFile val = load_samples(dir / "val.edl");
  if (!(train.schema == val.schema)) {
    fail(ErrorKind::kData, "train.edl and val.edl headers disagree");
  }
  check_train_split(train.schema, train.samples);
  return {std::move(train.schema), std::move(train.samples), std::move(val.samples)};
}

// ---------------------------------------------------------------------------
// CIW config

void save_ciw_config(const std::filesystem::path& path, const CiwTable& ciw) {
  std::string out;
  for (const auto& e : ciw.entries()) {
    check_class_name(e.class_name, ErrorKind::kInvalidInput);
    out += e.class_name + '\t' + text::format_double(e.weight) + '\n';
  }
  write_file(path, out);
}

CiwTable ciw_from_string(const std::string& body) {
  const auto lines = split_lines(body);
  std::vector<CiwEntry> entries;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const auto line = text::trim(lines[n]);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = text::split(line, '\t');
    const std::string where = "CIW config line " + std::to_string(n + 1) + ": ";
    if (fields.size() != 2) fail(ErrorKind::kConfig, where + "expected class<TAB>weight");
    const std::string name(text::trim(fields[0]));
    if (name.empty()) fail(ErrorKind::kConfig, where + "empty class name");
    const auto w = text::parse_double(text::trim(fields[1]));
    if (!w || !std::isfinite(*w)) {
      fail(ErrorKind::kConfig, where + "non-numeric weight '" + std::string(fields[1]) + "'");
    }
    entries.push_back({name, *w});
  }
  return CiwTable(std::move(entries));
}

CiwTable load_ciw_config(const std::filesystem::path& path) {
  return ciw_from_string(read_file(path, ErrorKind::kConfig));
}

// ---------------------------------------------------------------------------
// Conversions

MultiLabel known_label_vector(const DatasetSchema& schema, const Sample& s) {
  std::vector<std::size_t> head_of(schema.class_names.size(), SIZE_MAX);
  std::size_t head = 0;
  for (std::size_t k = 0; k < schema.class_names.size(); ++k) {
    if (!schema.is_unknown_class(k)) head_of[k] = head++;
  }
  MultiLabel y(head, 0);
  for (auto l : s.labels) {
    if (head_of.at(l) != SIZE_MAX) y[head_of[l]] = 1;
  }
  return y;
}

TrainingSet make_training_set(const DatasetSchema& schema,
                              const std::vector<Sample>& samples) {
  TrainingSet out;
  out.features.reserve(samples.size());
  out.labels.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.features.size() != schema.dim) {
      fail(ErrorKind::kData, "sample " + s.id + " has wrong feature count");
    }
    out.features.push_back(s.features);
    out.labels.push_back(known_label_vector(schema, s));
  }
  return out;
}

std::vector<Sample> load_annotation_csv(const std::filesystem::path& path,
                                        const DatasetSchema& schema,
                                        const FeatureLookup& lookup) {
  const auto lines = split_lines(read_file(path, ErrorKind::kData));
  if (lines.empty()) fail(ErrorKind::kData, "annotation CSV is empty");
  const auto header = text::split(lines[0], ',');
  std::vector<std::pair<std::size_t, std::size_t>> columns;  // csv column -> class
  for (std::size_t c = 1; c < header.size(); ++c) {
    const auto name = text::trim(header[c]);
    for (std::size_t k = 0; k < schema.class_names.size(); ++k) {
      if (schema.class_names[k] == name) columns.emplace_back(c, k);
    }
  }
  std::vector<Sample> out;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    if (text::trim(lines[n]).empty()) continue;
    const std::string where = "annotation CSV line " + std::to_string(n + 1) + ": ";
    const auto fields = text::split(lines[n], ',');
    if (fields.size() != header.size()) fail(ErrorKind::kData, where + "wrong column count");
    Sample s;
    s.id = std::string(text::trim(fields[0]));
    for (auto [c, k] : columns) {
      const auto v = text::trim(fields[c]);
      if (v == "1") {
        s.labels.push_back(k);
      } else if (v != "0") {
        fail(ErrorKind::kData, where + "class flags must be 0 or 1");
      }
    }
    std::sort(s.labels.begin(), s.labels.end());
    s.is_unknown = std::any_of(s.labels.begin(), s.labels.end(),
                               [&](std::size_t l) { return schema.is_unknown_class(l); });
    auto features = lookup(s.id);
    if (!features) fail(ErrorKind::kData, where + "no features for " + s.id);
    if (features->size() != schema.dim) fail(ErrorKind::kData, where + "feature size mismatch");
    s.features = std::move(*features);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace edl
