#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "edl/error.hpp"
#include "edl/net.hpp"
#include "edl/text.hpp"

namespace edl {

namespace {

constexpr std::string_view kMagic = "edl-checkpoint";

void check_name(const std::string& name) {
  if (name.empty() || name.find_first_of(" \t\r\n,") != std::string::npos) {
    fail(ErrorKind::kInvalidInput,
         "class name '" + name + "' must be non-empty without whitespace or commas");
  }
}

void write_values(std::ostream& os, std::string_view key, const std::vector<double>& v) {
  os << key;
  for (double x : v) os << ' ' << text::format_double(x);
  os << '\n';
}

void write_layer(std::ostream& os, const std::string& header, const DenseLayer& l) {
  os << header << ' ' << l.in << ' ' << l.out << '\n';
  write_values(os, "weight", l.weight);
  write_values(os, "bias", l.bias);
}

class Reader {
 public:
  explicit Reader(const std::string& text) : in_(text) {}

  // Next line split on spaces; the first token must equal `key`.
  std::vector<std::string_view> expect(std::string_view key) {
    if (!std::getline(in_, line_)) {
      error("unexpected end of file, expected '" + std::string(key) + "'");
    }
    ++line_no_;
    auto tokens = text::split(line_, ' ');
    if (tokens.empty() || tokens[0] != key) {
      error("expected '" + std::string(key) + "'");
    }
    tokens.erase(tokens.begin());
    return tokens;
  }

  std::string_view peek_key() {
    const auto pos = in_.tellg();
    std::string next;
    if (!std::getline(in_, next)) return {};
    in_.seekg(pos);
    peeked_ = next.substr(0, next.find(' '));
    return peeked_;
  }

  std::size_t size(std::string_view tok) {
    const auto v = text::parse_int(tok);
    if (!v || *v < 0) error("bad integer '" + std::string(tok) + "'");
    return static_cast<std::size_t>(*v);
  }

  double real(std::string_view tok) {
    const auto v = text::parse_double(tok);
    if (!v || !std::isfinite(*v)) error("bad number '" + std::string(tok) + "'");
    return *v;
  }

  std::vector<double> values(std::string_view key, std::size_t n) {
    const auto tokens = expect(key);
    if (tokens.size() != n) {
      error("expected " + std::to_string(n) + " values, got " + std::to_string(tokens.size()));
    }
    std::vector<double> out;
    out.reserve(n);
    for (auto t : tokens) out.push_back(real(t));
    return out;
  }

  DenseLayer layer(std::string_view key, std::size_t in, std::size_t out) {
    const auto dims = expect(key);
    if (dims.size() != 2 || size(dims[0]) != in || size(dims[1]) != out) {
      error("layer dimensions do not match header");
    }
    DenseLayer l(in, out);
    l.weight = values("weight", in * out);
    l.bias = values("bias", out);
    return l;
  }

  [[noreturn]] void error(const std::string& what) const {
    fail(ErrorKind::kData, "checkpoint line " + std::to_string(line_no_) + ": " + what);
  }

 private:
  std::istringstream in_;
  std::string line_;
  std::string peeked_;
  std::size_t line_no_ = 0;
};

}  // namespace

std::string checkpoint_to_string(const Model& model) {
  const ModelShape shape = model.shape();
  if (model.class_names.size() != shape.classes || model.base_rates.size() != shape.classes) {
    fail(ErrorKind::kInvalidInput, "model needs one class name and base rate per head");
  }
  std::ostringstream os;
  os << kMagic << " v" << kCheckpointVersion << '\n';
  os << "input_dim " << shape.input_dim << '\n';
  os << "hidden";
  for (auto h : shape.hidden) os << ' ' << h;
  os << '\n';
  os << "channels " << shape.channels << '\n';
  os << "classes " << shape.classes << '\n';
  os << "evidence_weight " << text::format_double(model.evidence_weight) << '\n';
  for (std::size_t k = 0; k < shape.classes; ++k) {
    check_name(model.class_names[k]);
    os << "class " << model.class_names[k] << ' '
       << text::format_double(model.base_rates[k].pos()) << ' '
       << text::format_double(model.base_rates[k].neg()) << '\n';
  }
  for (std::size_t l = 0; l < model.backbone.layers.size(); ++l) {
    write_layer(os, "layer", model.backbone.layers[l]);
  }
  write_layer(os, "egm", model.egm);
  if (model.logit_head) write_layer(os, "logit_head", *model.logit_head);
  os << "end\n";
  return os.str();
}

Model checkpoint_from_string(const std::string& text) {
  Reader r(text);
  const auto magic = r.expect(kMagic);
  if (magic.size() != 1) r.error("malformed header");
  if (magic[0] != "v" + std::to_string(kCheckpointVersion)) {
    r.error("unsupported checkpoint version '" + std::string(magic[0]) + "'");
  }
  ModelShape shape;
  auto tok = r.expect("input_dim");
  if (tok.size() != 1) r.error("malformed input_dim");
  shape.input_dim = r.size(tok[0]);
  shape.hidden.clear();
  for (auto h : r.expect("hidden")) shape.hidden.push_back(r.size(h));
  tok = r.expect("channels");
  if (tok.size() != 1) r.error("malformed channels");
  shape.channels = r.size(tok[0]);
  tok = r.expect("classes");
  if (tok.size() != 1) r.error("malformed classes");
  shape.classes = r.size(tok[0]);
  if (shape.input_dim == 0 || shape.channels == 0 || shape.classes == 0) {
    r.error("dimensions must be >= 1");
  }
  tok = r.expect("evidence_weight");
  if (tok.size() != 1) r.error("malformed evidence_weight");

  Model m;
  m.evidence_weight = r.real(tok[0]);
  for (std::size_t k = 0; k < shape.classes; ++k) {
    tok = r.expect("class");
    if (tok.size() != 3) r.error("malformed class line");
    m.class_names.emplace_back(tok[0]);
    try {
      m.base_rates.emplace_back(r.real(tok[1]), r.real(tok[2]));
    } catch (const Error& e) {
      r.error(e.what());
    }
  }
  std::size_t prev = shape.input_dim;
  for (std::size_t h : shape.hidden) {
    m.backbone.layers.push_back(r.layer("layer", prev, h));
    prev = h;
  }
  m.backbone.layers.push_back(r.layer("layer", prev, shape.channels));
  m.egm = r.layer("egm", shape.channels, 2 * shape.classes);
  if (r.peek_key() == "logit_head") {
    m.logit_head = r.layer("logit_head", shape.channels, shape.classes);
  }
  r.expect("end");
  return m;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const std::string body = checkpoint_to_string(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kData, "cannot write checkpoint " + path.string());
  out << body;
  if (!out) fail(ErrorKind::kData, "failed writing checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kData, "cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_string(buf.str());
}

}  // namespace edl
