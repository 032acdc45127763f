#pragma once

/// Run configuration read from a TOML file.
///
/// The reader covers the part of TOML the configs use: `[table]` headers,
/// `key = value` pairs with bare keys, basic and literal strings, integers,
/// floats (including inf and nan), booleans, arrays (which may span lines)
/// and `#` comments. Inline tables, dotted keys and dates are rejected.

#include "gnh/field_models.hpp"
#include "gnh/io.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace gnh::config {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Value {
  enum class Type { Bool, Int, Float, String, Array };
  Type type = Type::Int;
  bool b = false;
  long long i = 0;
  double f = 0.0;
  std::string s;
  std::vector<Value> items;

  bool is_number() const { return type == Type::Int || type == Type::Float; }
  double number() const { return type == Type::Int ? static_cast<double>(i) : f; }
};

/// Flat map from `table.key` to value. Keys before the first header have no prefix.
using Document = std::map<std::string, Value>;

namespace detail {

class Parser {
 public:
  Parser(std::string text, std::string where) : text_(std::move(text)), where_(std::move(where)) {}

  Document run() {
    Document doc;
    std::string table;
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        ++pos_;
        skip_ws();
        const std::string name = bare_key();
        skip_ws();
        expect(']');
        table = name;
        if (!tables_.insert(table).second) fail("table [" + table + "] defined twice");
      } else {
        const std::string key = bare_key();
        skip_ws();
        expect('=');
        skip_ws();
        Value v = value();
        const std::string full = table.empty() ? key : table + "." + key;
        if (!doc.emplace(full, std::move(v)).second) fail("duplicate key " + full);
      }
      end_of_line();
    }
    return doc;
  }

  Value single_value() {
    skip_ws();
    Value v = value();
    skip_ws();
    if (!eof()) fail("trailing characters after value");
    return v;
  }

 private:
  bool eof() const { return pos_ >= text_.size(); }
  char peek() const { return eof() ? '\0' : text_[pos_]; }

  [[noreturn]] void fail(const std::string& msg) const {
    int line = 1;
    for (std::size_t k = 0; k < pos_ && k < text_.size(); ++k) line += text_[k] == '\n';
    throw ConfigError(where_ + ":" + std::to_string(line) + ": " + msg);
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }

  void skip_comment() {
    if (peek() == '#')
      while (!eof() && peek() != '\n') ++pos_;
  }

  void skip_blank_lines() {
    while (!eof()) {
      skip_ws();
      skip_comment();
      if (peek() == '\r') ++pos_;
      if (peek() == '\n') {
        ++pos_;
        continue;
      }
      break;
    }
  }

  // whitespace, comments and newlines inside arrays
  void skip_array_space() {
    while (!eof()) {
      const char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos_;
      } else if (c == '#') {
        skip_comment();
      } else {
        break;
      }
    }
  }

  void end_of_line() {
    skip_ws();
    skip_comment();
    if (peek() == '\r') ++pos_;
    if (eof()) return;
    if (peek() != '\n') fail("unexpected characters at end of line");
    ++pos_;
  }

  std::string bare_key() {
    const std::size_t start = pos_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-')) ++pos_;
    if (start == pos_) fail("expected a key");
    if (peek() == '.') fail("dotted keys are not supported");
    return text_.substr(start, pos_ - start);
  }

  Value value() {
    const char c = peek();
    if (c == '"' || c == '\'') return string_value();
    if (c == '[') return array_value();
    if (c == '{') fail("inline tables are not supported");
    return scalar_value();
  }

  Value string_value() {
    const char quote = peek();
    ++pos_;
    Value v;
    v.type = Value::Type::String;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      char c = text_[pos_++];
      if (c == quote) break;
      if (c == '\\' && quote == '"') {
        if (eof()) fail("unterminated escape");
        const char e = text_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case 'r': c = '\r'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      }
      v.s += c;
    }
    return v;
  }

  Value array_value() {
    ++pos_;
    Value v;
    v.type = Value::Type::Array;
    while (true) {
      skip_array_space();
      if (peek() == ']') {
        ++pos_;
        break;
      }
      v.items.push_back(value());
      skip_array_space();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      if (peek() != ']') fail("expected ',' or ']' in array");
    }
    return v;
  }

  Value scalar_value() {
    const std::size_t start = pos_;
    while (!eof()) {
      const char c = peek();
      if (c == ',' || c == ']' || c == '#' || c == '\n' || c == '\r' || c == ' ' || c == '\t') break;
      ++pos_;
    }
    std::string tok = text_.substr(start, pos_ - start);
    if (tok.empty()) fail("expected a value");
    Value v;
    if (tok == "true" || tok == "false") {
      v.type = Value::Type::Bool;
      v.b = tok == "true";
      return v;
    }
    std::string digits;
    for (char c : tok)
      if (c != '_') digits += c;
    const std::string body = (digits[0] == '+' || digits[0] == '-') ? digits.substr(1) : digits;
    if (body == "inf" || body == "nan") {
      v.type = Value::Type::Float;
      v.f = body == "inf" ? INFINITY : NAN;
      if (digits[0] == '-') v.f = -v.f;
      return v;
    }
    const bool is_float = digits.find_first_of(".eE") != std::string::npos;
    char* end = nullptr;
    if (is_float) {
      v.type = Value::Type::Float;
      v.f = std::strtod(digits.c_str(), &end);
    } else {
      v.type = Value::Type::Int;
      errno = 0;
      v.i = std::strtoll(digits.c_str(), &end, 10);
      if (errno == ERANGE) fail("integer out of range: " + tok);
    }
    if (end == digits.c_str() || *end != '\0') fail("cannot parse value '" + tok + "'");
    return v;
  }

  std::string text_;
  std::string where_;
  std::size_t pos_ = 0;
  std::set<std::string> tables_;
};

}  // namespace detail

inline Document parse(const std::string& text, const std::string& where = "config") {
  return detail::Parser(text, where).run();
}

/// One value in TOML syntax, as given on the command line. Text that does not
/// parse as a TOML value is taken as a bare string.
inline Value parse_value(const std::string& text) {
  try {
    return detail::Parser(text, "--set").single_value();
  } catch (const ConfigError&) {
    Value v;
    v.type = Value::Type::String;
    v.s = text;
    return v;
  }
}

/// Apply `table.key=value`.
inline void apply_override(Document& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like table.key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  Value v = parse_value(assignment.substr(eq + 1));
  const auto it = doc.find(key);
  if (it != doc.end() && it->second.type == Value::Type::Array && v.type != Value::Type::Array)
    throw ConfigError("override of array key " + key + " needs an array value");
  doc[key] = std::move(v);
}

enum class ModelKind { Scalar, Maxwell, Raw };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Scalar: return "scalar";
    case ModelKind::Maxwell: return "maxwell";
    case ModelKind::Raw: return "raw";
  }
  return "?";
}

struct RunConfig {
  ModelKind model = ModelKind::Scalar;
  FieldSign sign = FieldSign::Lorentzian;
  GridSpec grid = GridSpec::unit(1, 16);
  BoundaryConditionSpec bc;

  // raw systems
  std::filesystem::path omega_file, hessian_file, linear_file;

  // tolerances; negative means the library default
  double tol = -1.0;
  double ktol = -1.0;
  double rtol = 1e-9;
  double ctol = 1e-8;
  double complement_tol = 1e-8;
  ComplementPolicy complement = ComplementPolicy::Refuse;

  // command parameters
  std::vector<double> times{0.0};
  std::string initial = "mode";  // mode | random | file | harmonic
  int mode_index = 0;
  std::filesystem::path state_file;
  std::filesystem::path input_field;
  int max_steps = 64;
  Index mode_budget = 0;
  Index dense_cutoff = 4000;
  double gauge_rate = 0.0;

  std::filesystem::path output_dir = "out";

  EigenOptions eigen() const {
    EigenOptions o;
    o.ktol = ktol;
    o.rtol = rtol;
    o.mode_budget = mode_budget;
    o.dense_cutoff = dense_cutoff;
    return o;
  }

  /// Everything that determines a cached decomposition, in canonical text.
  std::string fingerprint_text() const {
    std::string s = "model=" + to_string(model);
    s += ";sign=" + std::string(sign == FieldSign::Lorentzian ? "lorentzian" : "euclidean");
    s += ";dim=" + std::to_string(grid.dim);
    for (int a = 0; a < grid.dim; ++a) s += ";cells" + std::to_string(a) + "=" + std::to_string(grid.cells[a]);
    for (int a = 0; a < grid.dim; ++a) s += ";h" + std::to_string(a) + "=" + io::format_double(grid.spacing[a]);
    if (grid.hole)
      s += ";hole=" + std::to_string(grid.hole->lo[0]) + "," + std::to_string(grid.hole->lo[1]) + "," +
           std::to_string(grid.hole->hi[0]) + "," + std::to_string(grid.hole->hi[1]);
    if (model == ModelKind::Scalar) {
      s += ";scalar_bc=" + gnh::to_string(bc.scalar);
      if (bc.scalar == ScalarBc::Robin)
        for (double b : bc.robin_b) s += ";B=" + io::format_double(b);
    } else {
      s += ";vector_bc=" + gnh::to_string(bc.vector);
    }
    s += ";ktol=" + io::format_double(ktol) + ";rtol=" + io::format_double(rtol);
    s += ";dense_cutoff=" + std::to_string(dense_cutoff) + ";mode_budget=" + std::to_string(mode_budget);
    return s;
  }

  std::string fingerprint() const { return io::hex64(io::fnv1a(fingerprint_text())); }
};

namespace detail {

inline const Value* find(const Document& doc, const std::string& key) {
  const auto it = doc.find(key);
  return it == doc.end() ? nullptr : &it->second;
}

inline double as_number(const Value& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError(key + " must be a number");
  return v.number();
}

inline long long as_int(const Value& v, const std::string& key) {
  if (v.type != Value::Type::Int) throw ConfigError(key + " must be an integer");
  return v.i;
}

inline std::string as_string(const Value& v, const std::string& key) {
  if (v.type != Value::Type::String) throw ConfigError(key + " must be a string");
  return v.s;
}

inline bool as_bool(const Value& v, const std::string& key) {
  if (v.type != Value::Type::Bool) throw ConfigError(key + " must be true or false");
  return v.b;
}

inline std::vector<double> as_numbers(const Value& v, const std::string& key) {
  if (v.is_number()) return {v.number()};
  if (v.type != Value::Type::Array) throw ConfigError(key + " must be a number or an array of numbers");
  std::vector<double> out;
  for (const auto& x : v.items) out.push_back(as_number(x, key));
  return out;
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace detail

/// Build and validate a RunConfig. Relative input paths resolve against `base`.
inline RunConfig from_document(const Document& doc, const std::filesystem::path& base = {}) {
  using namespace detail;
  static const std::set<std::string> known = {
      "model.kind",         "model.sign",        "model.omega",       "model.hessian",     "model.linear",
      "grid.dim",           "grid.cells",        "grid.length",       "grid.spacing",      "grid.hole_lo",
      "grid.hole_hi",       "bc.scalar",         "bc.robin_b",        "bc.vector",         "tolerances.tol",
      "tolerances.ktol",    "tolerances.rtol",   "tolerances.ctol",   "tolerances.complement_tol",
      "tolerances.complement", "run.times",      "run.initial",       "run.mode_index",    "run.state_file",
      "run.input_field",    "run.max_steps",     "run.mode_budget",   "run.dense_cutoff",  "run.gauge_rate",
      "output.dir"};
  for (const auto& [k, v] : doc)
    if (!known.count(k)) throw ConfigError("unknown key " + k);

  RunConfig c;
  if (auto v = find(doc, "model.kind")) {
    const std::string s = as_string(*v, "model.kind");
    if (s == "scalar") c.model = ModelKind::Scalar;
    else if (s == "maxwell") c.model = ModelKind::Maxwell;
    else if (s == "raw") c.model = ModelKind::Raw;
    else throw ConfigError("model.kind must be scalar, maxwell or raw");
  }
  if (auto v = find(doc, "model.sign")) {
    const std::string s = as_string(*v, "model.sign");
    if (s == "lorentzian") c.sign = FieldSign::Lorentzian;
    else if (s == "euclidean") c.sign = FieldSign::Euclidean;
    else throw ConfigError("model.sign must be lorentzian or euclidean");
  }
  if (auto v = find(doc, "model.omega")) c.omega_file = resolve(base, as_string(*v, "model.omega"));
  if (auto v = find(doc, "model.hessian")) c.hessian_file = resolve(base, as_string(*v, "model.hessian"));
  if (auto v = find(doc, "model.linear")) c.linear_file = resolve(base, as_string(*v, "model.linear"));
  if (c.model == ModelKind::Raw && (c.omega_file.empty() || c.hessian_file.empty()))
    throw ConfigError("raw model needs model.omega and model.hessian files");

  // grid
  int dim = 1;
  if (auto v = find(doc, "grid.dim")) dim = static_cast<int>(as_int(*v, "grid.dim"));
  if (dim < 1 || dim > 3) throw ConfigError("grid.dim must be 1, 2 or 3");
  auto per_axis = [&](const std::string& key, double fallback) {
    std::vector<double> vals(dim, fallback);
    if (auto v = find(doc, key)) {
      const auto xs = as_numbers(*v, key);
      if (xs.size() == 1) std::fill(vals.begin(), vals.end(), xs[0]);
      else if (static_cast<int>(xs.size()) == dim) vals = xs;
      else throw ConfigError(key + " needs one value or one per axis");
    }
    return vals;
  };
  const auto cells = per_axis("grid.cells", 16);
  const auto length = per_axis("grid.length", 1.0);
  GridSpec g;
  g.dim = dim;
  for (int a = 0; a < 3; ++a) {
    if (a < dim) {
      if (cells[a] != std::floor(cells[a])) throw ConfigError("grid.cells must be integers");
      g.cells[a] = static_cast<int>(cells[a]);
      g.spacing[a] = length[a] / cells[a];
    } else {
      g.cells[a] = 1;
      g.spacing[a] = 1.0;
    }
  }
  if (find(doc, "grid.spacing")) {
    if (find(doc, "grid.length")) throw ConfigError("give grid.length or grid.spacing, not both");
    const auto h = per_axis("grid.spacing", 1.0);
    for (int a = 0; a < dim; ++a) g.spacing[a] = h[a];
  }
  const Value* lo = find(doc, "grid.hole_lo");
  const Value* hi = find(doc, "grid.hole_hi");
  if ((lo == nullptr) != (hi == nullptr)) throw ConfigError("grid.hole_lo and grid.hole_hi go together");
  if (lo) {
    const auto l = as_numbers(*lo, "grid.hole_lo"), h = as_numbers(*hi, "grid.hole_hi");
    if (l.size() != 2 || h.size() != 2) throw ConfigError("hole corners need two cell indices each");
    g.hole = CellBox{{static_cast<int>(l[0]), static_cast<int>(l[1]), 0}, {static_cast<int>(h[0]), static_cast<int>(h[1]), 1}};
  }
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
  c.grid = g;

  // boundary conditions
  if (auto v = find(doc, "bc.scalar")) {
    const std::string s = as_string(*v, "bc.scalar");
    if (s == "dirichlet") c.bc.scalar = ScalarBc::Dirichlet;
    else if (s == "neumann") c.bc.scalar = ScalarBc::Neumann;
    else if (s == "robin") c.bc.scalar = ScalarBc::Robin;
    else throw ConfigError("bc.scalar must be dirichlet, neumann or robin");
  }
  if (auto v = find(doc, "bc.robin_b")) c.bc.robin_b = as_numbers(*v, "bc.robin_b");
  if (c.bc.scalar == ScalarBc::Robin && c.bc.robin_b.empty()) throw ConfigError("robin bc needs bc.robin_b");
  if (auto v = find(doc, "bc.vector")) {
    const std::string s = as_string(*v, "bc.vector");
    if (s == "relative") c.bc.vector = VectorBc::Relative;
    else if (s == "absolute") c.bc.vector = VectorBc::Absolute;
    else throw ConfigError("bc.vector must be relative or absolute");
  }
  if (c.model == ModelKind::Maxwell && dim < 2) throw ConfigError("maxwell model needs grid.dim 2 or 3");

  // tolerances
  auto positive = [&](const std::string& key, double& out) {
    if (auto v = find(doc, key)) {
      out = as_number(*v, key);
      if (!(out > 0.0) || !std::isfinite(out)) throw ConfigError(key + " must be positive");
    }
  };
  positive("tolerances.tol", c.tol);
  positive("tolerances.ktol", c.ktol);
  positive("tolerances.rtol", c.rtol);
  positive("tolerances.ctol", c.ctol);
  positive("tolerances.complement_tol", c.complement_tol);
  if (auto v = find(doc, "tolerances.complement")) {
    const std::string s = as_string(*v, "tolerances.complement");
    if (s == "refuse") c.complement = ComplementPolicy::Refuse;
    else if (s == "drop") c.complement = ComplementPolicy::Drop;
    else throw ConfigError("tolerances.complement must be refuse or drop");
  }

  // run parameters
  if (auto v = find(doc, "run.times")) c.times = as_numbers(*v, "run.times");
  if (c.times.empty()) throw ConfigError("run.times must not be empty");
  for (std::size_t k = 0; k < c.times.size(); ++k) {
    if (!std::isfinite(c.times[k])) throw ConfigError("run.times must be finite");
    if (k && !(c.times[k] > c.times[k - 1])) throw ConfigError("run.times must be strictly increasing");
  }
  if (auto v = find(doc, "run.initial")) {
    c.initial = as_string(*v, "run.initial");
    if (c.initial != "mode" && c.initial != "random" && c.initial != "file" && c.initial != "harmonic")
      throw ConfigError("run.initial must be mode, random, file or harmonic");
  }
  if (auto v = find(doc, "run.mode_index")) c.mode_index = static_cast<int>(as_int(*v, "run.mode_index"));
  if (c.mode_index < 0) throw ConfigError("run.mode_index must be nonnegative");
  if (auto v = find(doc, "run.state_file")) c.state_file = resolve(base, as_string(*v, "run.state_file"));
  if (c.initial == "file" && c.state_file.empty()) throw ConfigError("run.initial = \"file\" needs run.state_file");
  if (auto v = find(doc, "run.input_field")) c.input_field = resolve(base, as_string(*v, "run.input_field"));
  if (auto v = find(doc, "run.max_steps")) c.max_steps = static_cast<int>(as_int(*v, "run.max_steps"));
  if (c.max_steps < 1) throw ConfigError("run.max_steps must be at least 1");
  if (auto v = find(doc, "run.mode_budget")) c.mode_budget = as_int(*v, "run.mode_budget");
  if (auto v = find(doc, "run.dense_cutoff")) c.dense_cutoff = as_int(*v, "run.dense_cutoff");
  if (c.mode_budget < 0 || c.dense_cutoff < 1) throw ConfigError("run.mode_budget and run.dense_cutoff must be nonnegative");
  if (auto v = find(doc, "run.gauge_rate")) c.gauge_rate = as_number(*v, "run.gauge_rate");

  if (auto v = find(doc, "output.dir")) c.output_dir = as_string(*v, "output.dir");
  return c;
}

inline RunConfig load(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
  Document doc = parse(io::read_file(path), path.string());
  for (const auto& o : overrides) apply_override(doc, o);
  return from_document(doc, path.parent_path());
}

}  // namespace gnh::config
