#pragma once

// Balanced true/false statement datasets minted from property tables.
//
// A true statement substitutes an entity and one of its attribute values into
// a template. Its false counterpart keeps the entity and takes the attribute
// value from a uniformly drawn different row, redrawing until the value differs
// (after whitespace trimming) from the true one.

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "saplma/rng.hpp"

namespace saplma::forge {

enum class Origin { table_true, table_false, curated, generated };

std::string_view to_string(Origin origin);
Origin parse_origin(std::string_view text);

struct Record {
  std::string entity;
  std::map<std::string, std::string, std::less<>> values; // includes the entity column
};

struct PropertyTable {
  std::string topic;
  std::vector<std::string> columns;
  std::string entity_column;
  std::vector<Record> rows;
};

struct StatementTemplate {
  static constexpr std::string_view entity_placeholder = "{e}";
  static constexpr std::string_view value_placeholder = "{v}";

  std::string attribute;
  std::string pattern;

  // Throws Error{validation} unless the pattern holds exactly one of each
  // placeholder.
  void validate() const;
  std::string render(std::string_view entity, std::string_view value) const;
};

struct LabeledStatement {
  std::string id;
  std::string topic;
  std::string text;
  bool label = false;
  Origin origin = Origin::table_true;

  bool operator==(const LabeledStatement&) const = default;
};

// First 16 hex chars of SHA-256 over topic, a 0x1f separator, and text.
std::string statement_id(std::string_view topic, std::string_view text);

LabeledStatement make_statement(std::string topic, std::string text, bool label, Origin origin);

// Reads a comma-separated table with a header row. Values are trimmed.
// Errors: schema (missing entity column, ragged row), validation (duplicate
// or empty entity), size (< 2 rows), io.
PropertyTable load_property_table(const std::filesystem::path& path, std::string topic,
                                  std::string entity_column);
PropertyTable parse_property_table(std::string_view csv_text, std::string topic,
                                   std::string entity_column);

LabeledStatement make_true_statement(std::string_view topic, const Record& row,
                                     const StatementTemplate& tmpl);

// Throws Error{no_distinct_value} if no other row carries a different value.
LabeledStatement make_false_statement(const PropertyTable& table, std::size_t row,
                                      const StatementTemplate& tmpl, Rng& rng);

struct Skip {
  std::string entity;
  std::string attribute;
  std::string reason;
};

struct TopicDataset {
  std::vector<LabeledStatement> statements;
  std::vector<Skip> skips;

  std::size_t count(bool label) const;
};

// Row-major over (row, template); each true statement is immediately followed
// by its false counterpart unless that pair was skipped.
TopicDataset generate_topic_dataset(const PropertyTable& table,
                                    const std::vector<StatementTemplate>& templates, Rng& rng);

// Curated statements: CSV with header "text,label", label in {0,1,true,false}.
std::vector<LabeledStatement> load_curated_statements(const std::filesystem::path& path,
                                                      const std::string& topic);

// JSON-lines dataset file: {"id","topic","text","label":0|1,"origin"} per line.
std::string to_jsonl(const std::vector<LabeledStatement>& statements);
std::vector<LabeledStatement> parse_jsonl(std::string_view text);
void write_dataset(const std::filesystem::path& path, const std::vector<LabeledStatement>& statements);
std::vector<LabeledStatement> read_dataset(const std::filesystem::path& path);

// Throws Error{validation} on duplicate ids or empty text.
void check_unique_ids(const std::vector<LabeledStatement>& statements);

} // namespace saplma::forge
