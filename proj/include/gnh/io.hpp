#pragma once

/// Text and binary formats.
///
/// Dense matrix text: header line `rows cols`, then one whitespace separated
/// row per line. Sparse triplet text: header `rows cols nnz`, then `row col value`
/// per entry, 0-based, sorted by row then column. Lines starting with `#` are
/// comments. Fields are CSV `entity_index,value`; states are CSV
/// `component,entity_index,value`. Every double is written with %.17g, so a
/// value read back and written again gives the same bytes.
///
/// Spectral cache: magic `GNHS`, u32 version, u64 n, u64 modes, u64 kernel_count,
/// f64 ktol, then the eigenvalues and the column-major eigenvectors as f64, all
/// little endian. A JSON sidecar carries the fingerprint of the generating
/// configuration and a hash of the binary payload.

#include "gnh/errors.hpp"
#include "gnh/spectral.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace gnh::io {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s, const std::string& where) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') throw ShapeError(where + ": not a number: '" + s + "'");
  return v;
}

inline long long parse_int(const std::string& s, const std::string& where) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const long long v = std::strtoll(begin, &end, 10);
  if (end == begin || *end != '\0') throw ShapeError(where + ": not an integer: '" + s + "'");
  return v;
}

inline std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Write to a sibling temporary and rename over the target.
inline void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

namespace detail {

// Non-empty, non-comment lines split on whitespace.
inline std::vector<std::vector<std::string>> tokenize_lines(const std::string& text) {
  std::vector<std::vector<std::string>> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::vector<std::string> toks;
    for (std::string t; ls >> t;) toks.push_back(t);
    out.push_back(std::move(toks));
  }
  return out;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r' && c != ' ') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

inline std::string dense_to_text(const Matrix& A) {
  std::string out = std::to_string(A.rows()) + " " + std::to_string(A.cols()) + "\n";
  for (Index i = 0; i < A.rows(); ++i) {
    for (Index j = 0; j < A.cols(); ++j) {
      if (j) out += ' ';
      out += format_double(A(i, j));
    }
    out += '\n';
  }
  return out;
}

inline std::string triplets_to_text(const SparseMatrix& A) {
  const Eigen::SparseMatrix<double, Eigen::RowMajor> R(A);
  std::string body;
  Index nnz = 0;
  for (Index i = 0; i < R.outerSize(); ++i)
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(R, i); it; ++it) {
      body += std::to_string(it.row()) + " " + std::to_string(it.col()) + " " + format_double(it.value()) + "\n";
      ++nnz;
    }
  return std::to_string(A.rows()) + " " + std::to_string(A.cols()) + " " + std::to_string(nnz) + "\n" + body;
}

inline Matrix dense_from_text(const std::string& text, const std::string& where = "dense matrix") {
  const auto lines = detail::tokenize_lines(text);
  if (lines.empty() || lines[0].size() != 2) throw ShapeError(where + ": header must be 'rows cols'");
  const auto rows = parse_int(lines[0][0], where), cols = parse_int(lines[0][1], where);
  if (rows < 0 || cols < 0) throw ShapeError(where + ": negative size");
  if (static_cast<long long>(lines.size()) != rows + 1)
    throw ShapeError(where + ": expected " + std::to_string(rows) + " rows, found " + std::to_string(lines.size() - 1));
  Matrix A(rows, cols);
  for (long long i = 0; i < rows; ++i) {
    const auto& row = lines[i + 1];
    if (static_cast<long long>(row.size()) != cols)
      throw ShapeError(where + ": row " + std::to_string(i) + " has " + std::to_string(row.size()) + " entries, expected " +
                       std::to_string(cols));
    for (long long j = 0; j < cols; ++j) A(i, j) = parse_double(row[j], where);
  }
  return A;
}

inline SparseMatrix triplets_from_text(const std::string& text, const std::string& where = "triplet matrix") {
  const auto lines = detail::tokenize_lines(text);
  if (lines.empty() || lines[0].size() != 3) throw ShapeError(where + ": header must be 'rows cols nnz'");
  const auto rows = parse_int(lines[0][0], where), cols = parse_int(lines[0][1], where);
  const auto nnz = parse_int(lines[0][2], where);
  if (rows < 0 || cols < 0 || nnz < 0) throw ShapeError(where + ": negative size");
  if (static_cast<long long>(lines.size()) != nnz + 1)
    throw ShapeError(where + ": header announces " + std::to_string(nnz) + " entries, found " + std::to_string(lines.size() - 1));
  std::vector<Triplet> trip;
  std::vector<std::pair<long long, long long>> seen;
  for (long long k = 0; k < nnz; ++k) {
    const auto& e = lines[k + 1];
    if (e.size() != 3) throw ShapeError(where + ": entry line " + std::to_string(k) + " needs 'row col value'");
    const auto r = parse_int(e[0], where), c = parse_int(e[1], where);
    if (r < 0 || r >= rows || c < 0 || c >= cols)
      throw ShapeError(where + ": index (" + e[0] + ", " + e[1] + ") outside " + std::to_string(rows) + "x" + std::to_string(cols));
    trip.emplace_back(static_cast<int>(r), static_cast<int>(c), parse_double(e[2], where));
    seen.emplace_back(r, c);
  }
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) throw ShapeError(where + ": duplicate (row, col) entry");
  SparseMatrix A(rows, cols);
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

/// Dense or triplet text, told apart by the number of header fields.
inline Matrix read_matrix(const fs::path& path) {
  const std::string text = read_file(path);
  const auto lines = detail::tokenize_lines(text);
  if (lines.empty()) throw ShapeError(path.string() + ": empty matrix file");
  if (lines[0].size() == 3) return Matrix(triplets_from_text(text, path.string()));
  return dense_from_text(text, path.string());
}

inline std::string field_to_csv(const Vector& v) {
  std::string out = "entity_index,value\n";
  for (Index i = 0; i < v.size(); ++i) out += std::to_string(i) + "," + format_double(v(i)) + "\n";
  return out;
}

/// Every index in 0..n-1 must appear exactly once.
inline Vector field_from_csv(const std::string& text, const std::string& where = "field") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || detail::split_csv(line) != std::vector<std::string>{"entity_index", "value"})
    throw ShapeError(where + ": header must be 'entity_index,value'");
  std::map<long long, double> vals;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 2) throw ShapeError(where + ": expected 2 columns in '" + line + "'");
    const auto i = parse_int(f[0], where);
    if (!vals.emplace(i, parse_double(f[1], where)).second) throw ShapeError(where + ": duplicate index " + f[0]);
  }
  Vector v(static_cast<Index>(vals.size()));
  Index k = 0;
  for (const auto& [i, x] : vals) {
    if (i != k) throw ShapeError(where + ": entity indices must cover 0.." + std::to_string(vals.size() - 1));
    v(k++) = x;
  }
  return v;
}

/// Named components in a fixed order.
using StateTable = std::vector<std::pair<std::string, Vector>>;

inline std::string state_to_csv(const StateTable& s) {
  std::string out = "component,entity_index,value\n";
  for (const auto& [name, v] : s)
    for (Index i = 0; i < v.size(); ++i) out += name + "," + std::to_string(i) + "," + format_double(v(i)) + "\n";
  return out;
}

inline StateTable state_from_csv(const std::string& text, const std::string& where = "state") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) ||
      detail::split_csv(line) != std::vector<std::string>{"component", "entity_index", "value"})
    throw ShapeError(where + ": header must be 'component,entity_index,value'");
  std::vector<std::string> order;
  std::map<std::string, std::map<long long, double>> vals;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 3) throw ShapeError(where + ": expected 3 columns in '" + line + "'");
    if (!vals.count(f[0])) order.push_back(f[0]);
    if (!vals[f[0]].emplace(parse_int(f[1], where), parse_double(f[2], where)).second)
      throw ShapeError(where + ": duplicate entry " + f[0] + "," + f[1]);
  }
  StateTable out;
  for (const auto& name : order) {
    const auto& m = vals[name];
    Vector v(static_cast<Index>(m.size()));
    Index k = 0;
    for (const auto& [i, x] : m) {
      if (i != k) throw ShapeError(where + ": component " + name + " has a gap in its entity indices");
      v(k++) = x;
    }
    out.emplace_back(name, std::move(v));
  }
  return out;
}

inline const Vector& component(const StateTable& s, const std::string& name, Index expected, const std::string& where) {
  for (const auto& [n, v] : s) {
    if (n != name) continue;
    if (v.size() != expected)
      throw ShapeError(where + ": component " + name + " has " + std::to_string(v.size()) + " entries, the model has " +
                       std::to_string(expected));
    return v;
  }
  throw ShapeError(where + ": missing component " + name);
}

inline std::string json_text(const Json& j) { return j.dump(2) + "\n"; }

inline void write_json(const fs::path& path, const Json& j) { write_file_atomic(path, json_text(j)); }

/// Vector as a JSON array.
inline Json json_array(const Vector& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

static_assert(std::endian::native == std::endian::little, "the cache format is little endian");

constexpr std::uint32_t kCacheVersion = 1;

namespace detail {

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get(const std::string& in, std::size_t& pos, const std::string& where) {
  if (pos + sizeof(T) > in.size()) throw ShapeError(where + ": truncated spectral cache");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace detail

inline std::string cache_payload(const SpectralDecomposition& d) {
  std::string out = "GNHS";
  detail::put<std::uint32_t>(out, kCacheVersion);
  detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(d.size()));
  detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(d.modes()));
  detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(d.kernel_count));
  detail::put<double>(out, d.ktol);
  for (Index k = 0; k < d.modes(); ++k) detail::put<double>(out, d.eigenvalues(k));
  const Matrix& V = d.eigenvectors;
  out.append(reinterpret_cast<const char*>(V.data()), static_cast<std::size_t>(V.size()) * sizeof(double));
  return out;
}

/// Parses the payload. mass, rtol, op_norm and complete come from the caller.
inline SpectralDecomposition decomposition_from_payload(const std::string& bytes, const std::string& where) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "GNHS") != 0) throw ShapeError(where + ": not a GNHS cache");
  std::size_t pos = 4;
  const auto version = detail::get<std::uint32_t>(bytes, pos, where);
  if (version != kCacheVersion) throw ShapeError(where + ": unsupported cache version " + std::to_string(version));
  const auto n = detail::get<std::uint64_t>(bytes, pos, where);
  const auto nev = detail::get<std::uint64_t>(bytes, pos, where);
  const auto kc = detail::get<std::uint64_t>(bytes, pos, where);
  SpectralDecomposition d;
  d.ktol = detail::get<double>(bytes, pos, where);
  if (nev > n || kc > nev) throw ShapeError(where + ": inconsistent cache header");
  if (bytes.size() != pos + 8 * (nev + n * nev)) throw ShapeError(where + ": cache payload has the wrong length");
  d.kernel_count = static_cast<Index>(kc);
  d.eigenvalues.resize(static_cast<Index>(nev));
  for (Index k = 0; k < d.eigenvalues.size(); ++k) d.eigenvalues(k) = detail::get<double>(bytes, pos, where);
  d.eigenvectors.resize(static_cast<Index>(n), static_cast<Index>(nev));
  std::memcpy(d.eigenvectors.data(), bytes.data() + pos, static_cast<std::size_t>(n * nev) * sizeof(double));
  return d;
}

/// Cache entry on disk: `<stem>.gnhs` plus `<stem>.json`.
struct SpectralCache {
  fs::path dir;
  std::string stem;

  fs::path binary() const { return dir / (stem + ".gnhs"); }
  fs::path sidecar() const { return dir / (stem + ".json"); }

  void store(const SpectralDecomposition& d, const std::string& fingerprint, const std::string& description) const {
    const std::string payload = cache_payload(d);
    Json meta;
    meta["format"] = "GNHS";
    meta["version"] = kCacheVersion;
    meta["fingerprint"] = fingerprint;
    meta["payload_fnv1a"] = hex64(fnv1a(payload));
    meta["description"] = description;
    meta["n"] = d.size();
    meta["modes"] = d.modes();
    meta["kernel_count"] = d.kernel_count;
    meta["ktol"] = d.ktol;
    meta["rtol"] = d.rtol;
    meta["op_norm"] = d.op_norm;
    meta["complete"] = d.complete;
    write_file_atomic(binary(), payload);
    write_json(sidecar(), meta);
  }

  /// The stored decomposition if present and generated for `fingerprint`;
  /// otherwise nullopt with the reason in `why`.
  std::optional<SpectralDecomposition> load(const std::string& fingerprint, const Vector& mass, std::string& why) const {
    if (!fs::exists(binary()) || !fs::exists(sidecar())) {
      why = "no cache entry";
      return std::nullopt;
    }
    try {
      const Json meta = Json::parse(read_file(sidecar()));
      if (meta.value("fingerprint", std::string()) != fingerprint) {
        why = "fingerprint mismatch (cache " + meta.value("fingerprint", std::string("?")) + ", expected " + fingerprint + ")";
        return std::nullopt;
      }
      const std::string payload = read_file(binary());
      if (meta.value("payload_fnv1a", std::string()) != hex64(fnv1a(payload))) {
        why = "payload hash mismatch";
        return std::nullopt;
      }
      auto d = decomposition_from_payload(payload, binary().string());
      if (d.eigenvectors.rows() != mass.size()) {
        why = "size mismatch";
        return std::nullopt;
      }
      d.mass = mass;
      d.rtol = meta.at("rtol").get<double>();
      d.op_norm = meta.at("op_norm").get<double>();
      d.complete = meta.at("complete").get<bool>();
      return d;
    } catch (const std::exception& e) {
      why = std::string("unreadable cache: ") + e.what();
      return std::nullopt;
    }
  }
};

}  // namespace gnh::io
