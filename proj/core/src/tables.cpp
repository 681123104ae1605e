#include "metakit/tables.h"

#include <cmath>
#include <cstdio>
#include <limits>

#include "metakit/errors.h"

namespace metakit {

std::size_t TableColumn::size() const {
  switch (type) {
    case CellType::real: return real.size();
    case CellType::integer: return integer.size();
    case CellType::text: return text.size();
    case CellType::boolean: return boolean.size();
  }
  return 0;
}

void TableColumn::push_real(double x) {
  real.push_back(x);
  missing.push_back(!std::isfinite(x));
}

void TableColumn::push_integer(long long x) {
  integer.push_back(x);
  missing.push_back(0);
}

void TableColumn::push_text(const std::string& s) {
  text.push_back(s);
  missing.push_back(0);
}

void TableColumn::push_boolean(bool b) {
  boolean.push_back(b ? 1 : 0);
  missing.push_back(0);
}

void TableColumn::push_missing() {
  switch (type) {
    case CellType::real: real.push_back(std::numeric_limits<double>::quiet_NaN()); break;
    case CellType::integer: integer.push_back(0); break;
    case CellType::text: text.emplace_back(); break;
    case CellType::boolean: boolean.push_back(0); break;
  }
  missing.push_back(1);
}

TableColumn& ResultTable::add_column(const std::string& col, CellType type,
                                     const std::string& label) {
  TableColumn c;
  c.name = col;
  c.label = label.empty() ? col : label;
  c.type = type;
  columns.push_back(std::move(c));
  return columns.back();
}

TableColumn* ResultTable::find(const std::string& col) {
  for (auto& c : columns)
    if (c.name == col) return &c;
  return nullptr;
}

const TableColumn* ResultTable::find(const std::string& col) const {
  for (const auto& c : columns)
    if (c.name == col) return &c;
  return nullptr;
}

TableColumn& ResultTable::column(const std::string& col) {
  if (TableColumn* c = find(col)) return *c;
  throw SchemaError("table '" + name + "' has no column '" + col + "'");
}

const TableColumn& ResultTable::column(const std::string& col) const {
  if (const TableColumn* c = find(col)) return *c;
  throw SchemaError("table '" + name + "' has no column '" + col + "'");
}

std::size_t ResultTable::nrow() const {
  if (columns.empty()) return 0;
  const std::size_t n = columns.front().size();
  for (const auto& c : columns) {
    if (c.size() != n || c.missing.size() != c.size())
      throw SchemaError("table '" + name + "': ragged column '" + c.name + "'");
  }
  return n;
}

std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 8);
  for (unsigned char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (ch < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", ch);
          out += buf;
        } else {
          out += static_cast<char>(ch);
        }
    }
  }
  return out;
}

std::string json_number(double x) {
  if (!std::isfinite(x)) return "null";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

namespace {

const char* cell_type_name(CellType t) {
  switch (t) {
    case CellType::real: return "real";
    case CellType::integer: return "integer";
    case CellType::text: return "text";
    case CellType::boolean: return "boolean";
  }
  return "real";
}

void append_values(std::string& out, const TableColumn& c) {
  const std::size_t n = c.size();
  out += '[';
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ", ";
    if (c.missing[i]) {
      out += "null";
      continue;
    }
    switch (c.type) {
      case CellType::real: out += json_number(c.real[i]); break;
      case CellType::integer: out += std::to_string(c.integer[i]); break;
      case CellType::text: out += '"' + json_escape(c.text[i]) + '"'; break;
      case CellType::boolean: out += c.boolean[i] ? "true" : "false"; break;
    }
  }
  out += ']';
}

}  // namespace

std::string table_to_json(const ResultTable& t, int indent) {
  const std::size_t n = t.nrow();  // also validates shape
  const std::string pad(static_cast<std::size_t>(indent < 0 ? 0 : indent), ' ');
  const std::string pad2 = pad + pad;
  const std::string nl = indent < 0 ? "" : "\n";

  std::string out = "{" + nl;
  out += pad + "\"name\": \"" + json_escape(t.name) + "\"," + nl;
  out += pad + "\"title\": \"" + json_escape(t.title) + "\"," + nl;
  out += pad + "\"nrow\": " + std::to_string(n) + "," + nl;
  out += pad + "\"footnotes\": [";
  for (std::size_t i = 0; i < t.footnotes.size(); ++i) {
    if (i) out += ", ";
    out += '"' + json_escape(t.footnotes[i]) + '"';
  }
  out += "]," + nl;
  out += pad + "\"columns\": [" + nl;
  for (std::size_t j = 0; j < t.columns.size(); ++j) {
    const TableColumn& c = t.columns[j];
    out += pad2 + "{\"name\": \"" + json_escape(c.name) + "\", \"label\": \"" +
           json_escape(c.label) + "\", \"type\": \"" + cell_type_name(c.type) + "\"";
    if (c.type == CellType::real)
      out += ", \"decimals\": " + std::to_string(c.decimals);
    out += ", \"values\": ";
    append_values(out, c);
    out += "}";
    if (j + 1 < t.columns.size()) out += ",";
    out += nl;
  }
  out += pad + "]" + nl + "}";
  return out;
}

}  // namespace metakit
