#include "saplma/io.hpp"

#include <fstream>
#include <sstream>

#include "saplma/error.hpp"

namespace saplma {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    fail(ErrorKind::io, "cannot open " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) {
    fail(ErrorKind::io, "read failed: " + path.string());
  }
  return std::move(buf).str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) {
      fail(ErrorKind::io, "cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      fail(ErrorKind::io, "cannot write " + tmp.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      fail(ErrorKind::io, "write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorKind::io, "cannot rename onto " + path.string());
  }
}

std::vector<CsvRow> parse_csv(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) {
    text.remove_prefix(3);
  }
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) {
      rows.push_back(std::move(row));
    }
    row.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
    case '"':
      if (field_started && !field.empty()) {
        fail(ErrorKind::schema, "csv: stray quote inside unquoted field");
      }
      in_quotes = true;
      field_started = true;
      break;
    case ',':
      end_field();
      break;
    case '\r':
      break;
    case '\n':
      end_row();
      break;
    default:
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) {
    fail(ErrorKind::schema, "csv: unterminated quoted field");
  }
  if (field_started || !field.empty() || !row.empty()) {
    end_row();
  }
  return rows;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string trim(std::string_view text) {
  constexpr std::string_view ws = " \t\r\n\v\f";
  const auto first = text.find_first_not_of(ws);
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = text.find_last_not_of(ws);
  return std::string(text.substr(first, last - first + 1));
}

} // namespace saplma
