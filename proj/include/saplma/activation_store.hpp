#pragma once

// On-disk store binding statements to per-layer activation vectors.
//
// Activation file layout (little-endian):
//   offset 0   8 bytes   magic "SAPLACT1"
//   offset 8   u32       version (1 = binary32 payload)
//   offset 12  u32       dim
//   offset 16  u64       count
//   offset 24  count*dim values, row-major; row i belongs to index entry i
//
// Version 2 carries a binary64 payload and is used only for probe checkpoint
// parameter blocks; read_activation_matrix rejects it.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "saplma/dataset_forge.hpp"

namespace saplma::store {

inline constexpr std::string_view kMagic = "SAPLACT1";
inline constexpr std::uint32_t kVersionF32 = 1;
inline constexpr std::uint32_t kVersionF64 = 2;
inline constexpr std::size_t kHeaderBytes = 24;

struct IndexEntry {
  std::string id;
  std::string topic;
  bool label = false;
  std::string text;
};

class DatasetIndex {
public:
  DatasetIndex() = default;
  // Throws Error{validation} on duplicate ids.
  explicit DatasetIndex(std::vector<IndexEntry> entries);

  static DatasetIndex from_statements(const std::vector<forge::LabeledStatement>& statements);
  static DatasetIndex load(const std::filesystem::path& jsonl_path);

  std::size_t size() const { return entries_.size(); }
  const std::vector<IndexEntry>& entries() const { return entries_; }
  const IndexEntry& operator[](std::size_t i) const { return entries_[i]; }

  std::optional<std::size_t> find(std::string_view id) const;

  // Distinct topics in order of first appearance.
  std::vector<std::string> topics() const;
  std::vector<bool> labels() const;

private:
  std::vector<IndexEntry> entries_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

struct ActivationMatrix {
  std::string source_model;
  int layer = 0;
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
  std::vector<float> data; // count * dim, row-major

  ActivationMatrix() = default;
  ActivationMatrix(std::uint32_t dim_, std::uint64_t count_)
      : dim(dim_), count(count_), data(static_cast<std::size_t>(dim_ * count_)) {}

  std::span<const float> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
  std::span<float> row(std::size_t i) { return {data.data() + i * dim, dim}; }

  bool operator==(const ActivationMatrix&) const = default;
};

// Rows holding any NaN or infinity.
std::vector<std::size_t> nonfinite_rows(const ActivationMatrix& matrix);

// Encode / decode the file image. Encoding rejects non-finite values and a
// data length that disagrees with dim*count (Error{validation}).
std::string encode_activation_matrix(const ActivationMatrix& matrix);
// Distinct Error kinds: bad_magic, version_mismatch, truncated, trailing_data.
// Values are restored exactly and not screened for finiteness.
ActivationMatrix decode_activation_matrix(std::string_view bytes);

void write_activation_matrix(const ActivationMatrix& matrix, const std::filesystem::path& path);
ActivationMatrix read_activation_matrix(const std::filesystem::path& path);

struct MatrixHeader {
  std::uint32_t version = 0;
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
};
// Header only; throws bad_magic / version_mismatch / truncated.
MatrixHeader read_header(std::string_view bytes, std::uint32_t expected_version = kVersionF32);

// Binary64 parameter block used by probe checkpoints.
std::string encode_f64_block(std::span<const double> values, std::uint32_t dim, std::uint64_t count);
// Decodes a block at the front of `bytes`, advancing past it.
std::vector<double> decode_f64_block(std::string_view& bytes, std::uint32_t dim, std::uint64_t count);

// Throws Error{validation} naming both counts unless the matrix has one row
// per index entry, and Error{validation} naming the row id if any row is
// non-finite. Called before any training.
void check_binding(const DatasetIndex& index, const ActivationMatrix& matrix);

// Hidden-layer choices for a decoder of the given depth: last, last-4,
// last-8, last-12 and middle.
struct LayerSet {
  std::vector<int> layers;

  static LayerSet standard(int depth);
  // Throws Error{parameter} if empty or any id is outside the standard set.
  void validate(int depth) const;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Rows of `held_out` form the test set, every other row the train set; both
// in index order. Throws Error{lookup} for an unknown topic.
Split split_by_topic(const DatasetIndex& index, std::string_view held_out);

struct FewShotRecord {
  std::string id;
  double p_true = 0.0;
  double p_false = 0.0;
  int shots = 0;

  bool operator==(const FewShotRecord&) const = default;
};

// CSV with header "id,p_true,p_false,shots". Parsing checks the header and
// numeric fields; validate_few_shot checks ranges, id membership and that each
// (id, shots) pair appears once.
std::vector<FewShotRecord> parse_few_shot_csv(std::string_view text);
std::string to_few_shot_csv(const std::vector<FewShotRecord>& records);
std::vector<FewShotRecord> read_few_shot(const std::filesystem::path& path);
void write_few_shot(const std::vector<FewShotRecord>& records, const std::filesystem::path& path);

// One message per violation; empty means valid.
std::vector<std::string> validate_few_shot(const DatasetIndex& index,
                                           const std::vector<FewShotRecord>& records);

} // namespace saplma::store
