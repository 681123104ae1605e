#pragma once

#include <cstddef>
#include <deque>
#include <string>
#include <vector>

namespace metakit {

enum class CellType { real, integer, text, boolean };

// One typed, ordered output column. Only the slot matching `type` is
// populated; `missing` is aligned per row and wins over the value slots.
struct TableColumn {
  std::string name;
  std::string label;  // display label, defaults to name
  CellType type = CellType::real;
  int decimals = 3;  // display-rounding hint for real columns
  std::vector<double> real;
  std::vector<long long> integer;
  std::vector<std::string> text;
  std::vector<unsigned char> boolean;
  std::vector<unsigned char> missing;

  std::size_t size() const;

  void push_real(double x);  // NaN is stored as a missing cell
  void push_integer(long long x);
  void push_text(const std::string& s);
  void push_boolean(bool b);
  void push_missing();
};

// Ordered named-column table mirroring one output table; serializable to
// JSON with lossless (17 significant digit) numbers.
struct ResultTable {
  std::string name;   // catalog key, e.g. "component_inclusion_tests"
  std::string title;  // human-readable heading
  std::deque<TableColumn> columns;  // deque: references survive add_column
  std::vector<std::string> footnotes;

  TableColumn& add_column(const std::string& col, CellType type,
                          const std::string& label = "");
  TableColumn* find(const std::string& col);
  const TableColumn* find(const std::string& col) const;
  TableColumn& column(const std::string& col);
  const TableColumn& column(const std::string& col) const;

  std::size_t nrow() const;  // throws SchemaError on ragged columns
};

// JSON object for one table; numbers use 17 significant digits, missing
// cells are null. Deterministic byte-for-byte for identical inputs.
std::string table_to_json(const ResultTable& t, int indent = 2);

// Escape a string for inclusion in a JSON document (without quotes).
std::string json_escape(const std::string& s);

// Format a double as a JSON value: 17 significant digits, null for
// non-finite values.
std::string json_number(double x);

}  // namespace metakit
