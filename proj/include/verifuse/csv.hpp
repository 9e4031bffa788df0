#pragma once

#include <istream>
#include <string>
#include <vector>

#include "verifuse/common.hpp"

namespace verifuse::csv {

struct Row {
  std::size_t line = 0;  // physical line on which the record starts (1-based)
  std::vector<std::string> fields;
};

/// RFC 4180 reader: quoted fields may contain separators, doubled quotes and
/// newlines; CRLF and a leading UTF-8 BOM are accepted. An unterminated quote
/// or text after a closing quote throws DataError naming the line.
inline std::vector<Row> parse(std::istream& in, char sep = ',') {
  std::vector<Row> rows;
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t i = 0;
  if (content.size() >= 3 && content.compare(0, 3, "\xEF\xBB\xBF") == 0) i = 3;

  std::size_t line = 1;
  Row row;
  row.line = line;
  std::string field;
  bool field_started = false;

  auto end_field = [&] {
    row.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    // A blank physical line yields a single empty field; skip it.
    if (!(row.fields.size() == 1 && row.fields[0].empty())) rows.push_back(std::move(row));
    row = Row{};
    row.line = line;
  };

  while (i < content.size()) {
    const char c = content[i];
    if (c == '"' && !field_started) {
      const std::size_t quote_line = line;
      field_started = true;
      ++i;
      bool closed = false;
      while (i < content.size()) {
        const char q = content[i];
        if (q == '"') {
          if (i + 1 < content.size() && content[i + 1] == '"') {
            field.push_back('"');
            i += 2;
            continue;
          }
          closed = true;
          ++i;
          break;
        }
        if (q == '\n') ++line;
        field.push_back(q);
        ++i;
      }
      if (!closed) throw DataError("malformed CSV: unterminated quoted field starting on line " + std::to_string(quote_line));
      if (i < content.size() && content[i] != sep && content[i] != '\n' && content[i] != '\r') {
        throw DataError("malformed CSV: unexpected character after closing quote on line " + std::to_string(line));
      }
      continue;
    }
    if (c == sep) {
      end_field();
      ++i;
      continue;
    }
    if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < content.size() && content[i + 1] == '\n') ++i;
      ++i;
      ++line;
      end_row();
      continue;
    }
    field.push_back(c);
    field_started = true;
    ++i;
  }
  if (field_started || !row.fields.empty()) end_row();
  return rows;
}

}  // namespace verifuse::csv
