#include "saplma/dataset_forge.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include "json.hpp"

#include "saplma/error.hpp"
#include "saplma/hash.hpp"
#include "saplma/io.hpp"

namespace saplma::forge {

std::string_view to_string(Origin origin) {
  switch (origin) {
  case Origin::table_true: return "table-true";
  case Origin::table_false: return "table-false";
  case Origin::curated: return "curated";
  case Origin::generated: return "generated";
  }
  return "unknown";
}

Origin parse_origin(std::string_view text) {
  for (Origin o : {Origin::table_true, Origin::table_false, Origin::curated, Origin::generated}) {
    if (to_string(o) == text) {
      return o;
    }
  }
  fail(ErrorKind::schema, "unknown origin '" + std::string(text) + "'");
}

namespace {

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

const std::string& value_of(const Record& row, const std::string& attribute) {
  auto it = row.values.find(attribute);
  if (it == row.values.end() || it->second.empty()) {
    fail(ErrorKind::validation,
         "row '" + row.entity + "' has no value for attribute '" + attribute + "'");
  }
  return it->second;
}

} // namespace

void StatementTemplate::validate() const {
  if (count_occurrences(pattern, entity_placeholder) != 1 ||
      count_occurrences(pattern, value_placeholder) != 1) {
    fail(ErrorKind::validation, "template '" + pattern +
                                    "' must contain exactly one {e} and one {v} placeholder");
  }
}

std::string StatementTemplate::render(std::string_view entity, std::string_view value) const {
  validate();
  std::string out = pattern;
  // Substitute the later placeholder first so the earlier offset stays valid.
  auto e = out.find(entity_placeholder);
  auto v = out.find(value_placeholder);
  if (e > v) {
    out.replace(e, entity_placeholder.size(), entity);
    out.replace(v, value_placeholder.size(), value);
  } else {
    out.replace(v, value_placeholder.size(), value);
    out.replace(e, entity_placeholder.size(), entity);
  }
  return out;
}

std::string statement_id(std::string_view topic, std::string_view text) {
  std::string key;
  key.reserve(topic.size() + text.size() + 1);
  key.append(topic).push_back('\x1f');
  key.append(text);
  return sha256_hex(key).substr(0, 16);
}

LabeledStatement make_statement(std::string topic, std::string text, bool label, Origin origin) {
  if (text.empty()) {
    fail(ErrorKind::validation, "statement text is empty");
  }
  LabeledStatement s;
  s.id = statement_id(topic, text);
  s.topic = std::move(topic);
  s.text = std::move(text);
  s.label = label;
  s.origin = origin;
  return s;
}

PropertyTable parse_property_table(std::string_view csv_text, std::string topic,
                                   std::string entity_column) {
  auto rows = parse_csv(csv_text);
  if (rows.empty()) {
    fail(ErrorKind::schema, "table '" + topic + "' has no header row");
  }
  PropertyTable table;
  table.topic = std::move(topic);
  table.entity_column = std::move(entity_column);
  for (const auto& name : rows.front()) {
    table.columns.push_back(trim(name));
  }
  auto entity_pos = std::find(table.columns.begin(), table.columns.end(), table.entity_column);
  if (entity_pos == table.columns.end()) {
    fail(ErrorKind::schema,
         "table '" + table.topic + "' has no entity column '" + table.entity_column + "'");
  }
  const auto entity_idx = static_cast<std::size_t>(entity_pos - table.columns.begin());

  std::unordered_set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& raw = rows[r];
    if (raw.size() != table.columns.size()) {
      fail(ErrorKind::schema, "table '" + table.topic + "' line " + std::to_string(r + 1) +
                                  ": expected " + std::to_string(table.columns.size()) +
                                  " fields, got " + std::to_string(raw.size()));
    }
    Record rec;
    for (std::size_t c = 0; c < raw.size(); ++c) {
      std::string value = trim(raw[c]);
      if (value.empty()) {
        fail(ErrorKind::schema, "table '" + table.topic + "' line " + std::to_string(r + 1) +
                                    ": empty value in column '" + table.columns[c] + "'");
      }
      rec.values.emplace(table.columns[c], std::move(value));
    }
    rec.entity = rec.values.at(table.columns[entity_idx]);
    if (!seen.insert(rec.entity).second) {
      fail(ErrorKind::validation,
           "table '" + table.topic + "': duplicate entity '" + rec.entity + "'");
    }
    table.rows.push_back(std::move(rec));
  }
  if (table.rows.size() < 2) {
    fail(ErrorKind::size, "table '" + table.topic + "' needs at least 2 rows, has " +
                              std::to_string(table.rows.size()));
  }
  return table;
}

PropertyTable load_property_table(const std::filesystem::path& path, std::string topic,
                                  std::string entity_column) {
  return parse_property_table(read_file(path), std::move(topic), std::move(entity_column));
}

LabeledStatement make_true_statement(std::string_view topic, const Record& row,
                                     const StatementTemplate& tmpl) {
  tmpl.validate();
  const auto& value = value_of(row, tmpl.attribute);
  return make_statement(std::string(topic), tmpl.render(row.entity, value), true,
                        Origin::table_true);
}

LabeledStatement make_false_statement(const PropertyTable& table, std::size_t row,
                                      const StatementTemplate& tmpl, Rng& rng) {
  tmpl.validate();
  if (row >= table.rows.size()) {
    fail(ErrorKind::parameter, "row index out of range");
  }
  const Record& self = table.rows[row];
  const std::string true_value = trim(value_of(self, tmpl.attribute));

  const bool any_distinct = std::any_of(table.rows.begin(), table.rows.end(), [&](const Record& r) {
    return trim(value_of(r, tmpl.attribute)) != true_value;
  });
  if (!any_distinct) {
    fail(ErrorKind::no_distinct_value, "no row of '" + table.topic + "' has a value of '" +
                                           tmpl.attribute + "' other than '" + true_value +
                                           "' (entity '" + self.entity + "')");
  }

  const std::size_t others = table.rows.size() - 1;
  for (;;) {
    auto pick = static_cast<std::size_t>(rng.uniform_index(others));
    if (pick >= row) {
      ++pick;
    }
    const std::string candidate = trim(value_of(table.rows[pick], tmpl.attribute));
    if (candidate != true_value) {
      return make_statement(table.topic, tmpl.render(self.entity, candidate), false,
                            Origin::table_false);
    }
  }
}

std::size_t TopicDataset::count(bool label) const {
  return static_cast<std::size_t>(std::count_if(statements.begin(), statements.end(),
                                                [&](const auto& s) { return s.label == label; }));
}

TopicDataset generate_topic_dataset(const PropertyTable& table,
                                    const std::vector<StatementTemplate>& templates, Rng& rng) {
  if (templates.empty()) {
    fail(ErrorKind::parameter, "topic '" + table.topic + "': no templates");
  }
  if (table.rows.size() < 2) {
    fail(ErrorKind::size, "table '" + table.topic + "' needs at least 2 rows");
  }
  for (const auto& t : templates) {
    t.validate();
    if (std::find(table.columns.begin(), table.columns.end(), t.attribute) == table.columns.end()) {
      fail(ErrorKind::schema,
           "template attribute '" + t.attribute + "' is not a column of '" + table.topic + "'");
    }
  }

  TopicDataset out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    for (const auto& t : templates) {
      out.statements.push_back(make_true_statement(table.topic, table.rows[r], t));
      try {
        out.statements.push_back(make_false_statement(table, r, t, rng));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::no_distinct_value) {
          throw;
        }
        out.skips.push_back({table.rows[r].entity, t.attribute, e.what()});
      }
    }
  }
  return out;
}

namespace {

bool parse_label(const std::string& raw) {
  const std::string v = trim(raw);
  if (v == "1" || v == "true" || v == "True" || v == "TRUE") return true;
  if (v == "0" || v == "false" || v == "False" || v == "FALSE") return false;
  fail(ErrorKind::schema, "bad label '" + v + "'");
}

} // namespace

std::vector<LabeledStatement> load_curated_statements(const std::filesystem::path& path,
                                                      const std::string& topic) {
  auto rows = parse_csv(read_file(path));
  if (rows.empty() || rows[0].size() != 2 || trim(rows[0][0]) != "text" ||
      trim(rows[0][1]) != "label") {
    fail(ErrorKind::schema, path.string() + ": expected header 'text,label'");
  }
  std::vector<LabeledStatement> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 2) {
      fail(ErrorKind::schema, path.string() + " line " + std::to_string(r + 1) + ": expected 2 fields");
    }
    out.push_back(make_statement(topic, trim(rows[r][0]), parse_label(rows[r][1]), Origin::curated));
  }
  return out;
}

void check_unique_ids(const std::vector<LabeledStatement>& statements) {
  std::unordered_set<std::string> ids;
  for (const auto& s : statements) {
    if (s.text.empty()) {
      fail(ErrorKind::validation, "statement " + s.id + " has empty text");
    }
    if (!ids.insert(s.id).second) {
      fail(ErrorKind::validation, "duplicate statement id " + s.id + " ('" + s.text + "')");
    }
  }
}

std::string to_jsonl(const std::vector<LabeledStatement>& statements) {
  std::string out;
  for (const auto& s : statements) {
    nlohmann::ordered_json j;
    j["id"] = s.id;
    j["topic"] = s.topic;
    j["text"] = s.text;
    j["label"] = s.label ? 1 : 0;
    j["origin"] = to_string(s.origin);
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<LabeledStatement> parse_jsonl(std::string_view text) {
  std::vector<LabeledStatement> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (trim(line).empty()) {
      continue;
    }
    try {
      const auto j = nlohmann::json::parse(line);
      LabeledStatement s;
      s.id = j.at("id").get<std::string>();
      s.topic = j.at("topic").get<std::string>();
      s.text = j.at("text").get<std::string>();
      const auto& label = j.at("label");
      s.label = label.is_boolean() ? label.get<bool>() : label.get<int>() != 0;
      s.origin = j.contains("origin") ? parse_origin(j["origin"].get<std::string>())
                                      : Origin::generated;
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::schema, "dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, const std::vector<LabeledStatement>& statements) {
  check_unique_ids(statements);
  write_file_atomic(path, to_jsonl(statements));
}

std::vector<LabeledStatement> read_dataset(const std::filesystem::path& path) {
  return parse_jsonl(read_file(path));
}

} // namespace saplma::forge
