#include "saplma/activation_store.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "saplma/error.hpp"
#include "saplma/io.hpp"

namespace saplma::store {

// ---------------------------------------------------------------- index

DatasetIndex::DatasetIndex(std::vector<IndexEntry> entries) : entries_(std::move(entries)) {
  by_id_.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!by_id_.emplace(entries_[i].id, i).second) {
      fail(ErrorKind::validation, "index: duplicate id " + entries_[i].id);
    }
  }
}

DatasetIndex DatasetIndex::from_statements(const std::vector<forge::LabeledStatement>& statements) {
  std::vector<IndexEntry> entries;
  entries.reserve(statements.size());
  for (const auto& s : statements) {
    entries.push_back({s.id, s.topic, s.label, s.text});
  }
  return DatasetIndex(std::move(entries));
}

DatasetIndex DatasetIndex::load(const std::filesystem::path& jsonl_path) {
  return from_statements(forge::read_dataset(jsonl_path));
}

std::optional<std::size_t> DatasetIndex::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) {
    return std::nullopt;
  }
  return it->second;
}

std::vector<std::string> DatasetIndex::topics() const {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& e : entries_) {
    if (seen.insert(e.topic).second) {
      out.push_back(e.topic);
    }
  }
  return out;
}

std::vector<bool> DatasetIndex::labels() const {
  std::vector<bool> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) {
    out.push_back(e.label);
  }
  return out;
}

// ---------------------------------------------------------------- binary

namespace {

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t b = 0; b < sizeof(U); ++b) {
    out.push_back(static_cast<char>((value >> (8 * b)) & 0xff));
  }
}

template <typename U>
U get_le(const char* p) {
  U value = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) {
    value |= static_cast<U>(static_cast<unsigned char>(p[b])) << (8 * b);
  }
  return value;
}

std::string header_bytes(std::uint32_t version, std::uint32_t dim, std::uint64_t count) {
  std::string out(kMagic);
  put_le<std::uint32_t>(out, version);
  put_le<std::uint32_t>(out, dim);
  put_le<std::uint64_t>(out, count);
  return out;
}

std::uint64_t payload_bytes(const MatrixHeader& h, std::size_t elem) {
  const std::uint64_t n = static_cast<std::uint64_t>(h.dim) * h.count;
  if (h.dim != 0 && n / h.dim != h.count) {
    fail(ErrorKind::truncated, "activation header: dim*count overflows");
  }
  if (n > UINT64_MAX / elem) {
    fail(ErrorKind::truncated, "activation header: payload size overflows");
  }
  return n * elem;
}

} // namespace

MatrixHeader read_header(std::string_view bytes, std::uint32_t expected_version) {
  if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic) {
    fail(ErrorKind::bad_magic, "not an activation file (bad magic)");
  }
  if (bytes.size() < kHeaderBytes) {
    fail(ErrorKind::truncated, "activation header truncated: " + std::to_string(bytes.size()) +
                                   " of " + std::to_string(kHeaderBytes) + " bytes");
  }
  MatrixHeader h;
  h.version = get_le<std::uint32_t>(bytes.data() + 8);
  h.dim = get_le<std::uint32_t>(bytes.data() + 12);
  h.count = get_le<std::uint64_t>(bytes.data() + 16);
  if (h.version != expected_version) {
    fail(ErrorKind::version_mismatch, "activation file version " + std::to_string(h.version) +
                                          ", expected " + std::to_string(expected_version));
  }
  return h;
}

std::string encode_activation_matrix(const ActivationMatrix& matrix) {
  const std::uint64_t n = static_cast<std::uint64_t>(matrix.dim) * matrix.count;
  if (matrix.data.size() != n) {
    fail(ErrorKind::validation, "activation matrix holds " + std::to_string(matrix.data.size()) +
                                    " values, header says " + std::to_string(matrix.count) + "x" +
                                    std::to_string(matrix.dim));
  }
  if (auto bad = nonfinite_rows(matrix); !bad.empty()) {
    fail(ErrorKind::validation, "activation matrix has non-finite value in row " +
                                    std::to_string(bad.front()));
  }
  std::string out = header_bytes(kVersionF32, matrix.dim, matrix.count);
  out.reserve(kHeaderBytes + 4 * n);
  for (float v : matrix.data) {
    put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

ActivationMatrix decode_activation_matrix(std::string_view bytes) {
  const MatrixHeader h = read_header(bytes, kVersionF32);
  const std::uint64_t need = payload_bytes(h, 4);
  const std::uint64_t have = bytes.size() - kHeaderBytes;
  if (have < need) {
    fail(ErrorKind::truncated, "activation payload truncated: " + std::to_string(have) + " of " +
                                   std::to_string(need) + " bytes");
  }
  if (have > need) {
    fail(ErrorKind::trailing_data, "activation file has " + std::to_string(have - need) +
                                       " bytes past the payload");
  }
  ActivationMatrix m(h.dim, h.count);
  const char* p = bytes.data() + kHeaderBytes;
  for (std::size_t i = 0; i < m.data.size(); ++i, p += 4) {
    m.data[i] = std::bit_cast<float>(get_le<std::uint32_t>(p));
  }
  return m;
}

void write_activation_matrix(const ActivationMatrix& matrix, const std::filesystem::path& path) {
  write_file_atomic(path, encode_activation_matrix(matrix));
}

ActivationMatrix read_activation_matrix(const std::filesystem::path& path) {
  try {
    return decode_activation_matrix(read_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::io) throw;
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::string encode_f64_block(std::span<const double> values, std::uint32_t dim, std::uint64_t count) {
  if (values.size() != static_cast<std::uint64_t>(dim) * count) {
    fail(ErrorKind::shape, "parameter block size disagrees with its shape");
  }
  std::string out = header_bytes(kVersionF64, dim, count);
  for (double v : values) {
    put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

std::vector<double> decode_f64_block(std::string_view& bytes, std::uint32_t dim, std::uint64_t count) {
  const MatrixHeader h = read_header(bytes, kVersionF64);
  if (h.dim != dim || h.count != count) {
    fail(ErrorKind::shape, "parameter block is " + std::to_string(h.count) + "x" +
                               std::to_string(h.dim) + ", expected " + std::to_string(count) + "x" +
                               std::to_string(dim));
  }
  const std::uint64_t need = payload_bytes(h, 8);
  if (bytes.size() - kHeaderBytes < need) {
    fail(ErrorKind::truncated, "parameter block truncated");
  }
  std::vector<double> out(static_cast<std::size_t>(need / 8));
  const char* p = bytes.data() + kHeaderBytes;
  for (std::size_t i = 0; i < out.size(); ++i, p += 8) {
    out[i] = std::bit_cast<double>(get_le<std::uint64_t>(p));
  }
  bytes.remove_prefix(kHeaderBytes + static_cast<std::size_t>(need));
  return out;
}

std::vector<std::size_t> nonfinite_rows(const ActivationMatrix& matrix) {
  std::vector<std::size_t> bad;
  if (matrix.dim == 0) {
    return bad;
  }
  const std::size_t rows = matrix.data.size() / matrix.dim;
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = matrix.row(r);
    if (std::any_of(row.begin(), row.end(), [](float v) { return !std::isfinite(v); })) {
      bad.push_back(r);
    }
  }
  return bad;
}

void check_binding(const DatasetIndex& index, const ActivationMatrix& matrix) {
  if (matrix.count != index.size()) {
    fail(ErrorKind::validation, "matrix count " + std::to_string(matrix.count) +
                                    " != index count " + std::to_string(index.size()));
  }
  if (auto bad = nonfinite_rows(matrix); !bad.empty()) {
    fail(ErrorKind::validation, "non-finite activation in row " + std::to_string(bad.front()) +
                                    " (id " + index[bad.front()].id + ")");
  }
}

// ---------------------------------------------------------------- layers

LayerSet LayerSet::standard(int depth) {
  if (depth < 13) {
    fail(ErrorKind::parameter, "model depth " + std::to_string(depth) + " too shallow for the standard layer set");
  }
  LayerSet set{{depth, depth - 4, depth - 8, depth - 12}};
  // At depth 24 the middle layer is also last-12.
  if (depth / 2 != depth - 12) set.layers.push_back(depth / 2);
  return set;
}

void LayerSet::validate(int depth) const {
  if (layers.empty()) {
    fail(ErrorKind::parameter, "layer set is empty");
  }
  const auto allowed = standard(depth).layers;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const int l = layers[i];
    if (std::find(layers.begin(), layers.begin() + static_cast<std::ptrdiff_t>(i), l) != layers.begin() + static_cast<std::ptrdiff_t>(i)) {
      fail(ErrorKind::parameter, "layer " + std::to_string(l) + " listed twice");
    }
    if (std::find(allowed.begin(), allowed.end(), l) == allowed.end()) {
      fail(ErrorKind::parameter, "layer " + std::to_string(l) + " is not one of last, last-4, "
                                 "last-8, last-12, middle for depth " + std::to_string(depth));
    }
  }
}

Split split_by_topic(const DatasetIndex& index, std::string_view held_out) {
  Split s;
  for (std::size_t i = 0; i < index.size(); ++i) {
    (index[i].topic == held_out ? s.test : s.train).push_back(i);
  }
  if (s.test.empty()) {
    fail(ErrorKind::lookup, "topic '" + std::string(held_out) + "' not in index");
  }
  return s;
}

// ---------------------------------------------------------------- few-shot

namespace {

double parse_double(const std::string& field, const char* what, std::size_t line) {
  const std::string t = trim(field);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size()) {
    fail(ErrorKind::schema, std::string("few-shot line ") + std::to_string(line) + ": bad " + what +
                                " '" + t + "'");
  }
  return v;
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

} // namespace

std::vector<FewShotRecord> parse_few_shot_csv(std::string_view text) {
  auto rows = parse_csv(text);
  const CsvRow expected{"id", "p_true", "p_false", "shots"};
  if (rows.empty() || rows[0] != expected) {
    fail(ErrorKind::schema, "few-shot file: expected header 'id,p_true,p_false,shots'");
  }
  std::vector<FewShotRecord> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != 4) {
      fail(ErrorKind::schema, "few-shot line " + std::to_string(r + 1) + ": expected 4 fields");
    }
    FewShotRecord rec;
    rec.id = trim(row[0]);
    rec.p_true = parse_double(row[1], "p_true", r + 1);
    rec.p_false = parse_double(row[2], "p_false", r + 1);
    rec.shots = static_cast<int>(parse_double(row[3], "shots", r + 1));
    out.push_back(std::move(rec));
  }
  return out;
}

std::string to_few_shot_csv(const std::vector<FewShotRecord>& records) {
  std::string out = "id,p_true,p_false,shots\n";
  for (const auto& r : records) {
    out += csv_escape(r.id) + ',' + format_double(r.p_true) + ',' + format_double(r.p_false) + ',' +
           std::to_string(r.shots) + '\n';
  }
  return out;
}

std::vector<FewShotRecord> read_few_shot(const std::filesystem::path& path) {
  return parse_few_shot_csv(read_file(path));
}

void write_few_shot(const std::vector<FewShotRecord>& records, const std::filesystem::path& path) {
  write_file_atomic(path, to_few_shot_csv(records));
}

std::vector<std::string> validate_few_shot(const DatasetIndex& index,
                                           const std::vector<FewShotRecord>& records) {
  std::vector<std::string> problems;
  std::unordered_set<std::string> seen;
  for (const auto& r : records) {
    if (!index.find(r.id)) {
      problems.push_back("few-shot id " + r.id + " not in index");
    }
    if (!seen.insert(r.id + '/' + std::to_string(r.shots)).second) {
      problems.push_back("few-shot id " + r.id + " repeated for " + std::to_string(r.shots) + " shots");
    }
    if (!(r.p_true > 0.0 && r.p_true <= 1.0) || !(r.p_false > 0.0 && r.p_false <= 1.0)) {
      problems.push_back("few-shot id " + r.id + ": probabilities must lie in (0,1]");
    }
    if (r.shots != 3 && r.shots != 5) {
      problems.push_back("few-shot id " + r.id + ": shots must be 3 or 5, got " + std::to_string(r.shots));
    }
  }
  return problems;
}

} // namespace saplma::store
