#include "metakit/dataset.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "metakit/errors.h"

namespace metakit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool is_missing_token(const std::string& raw) {
  const std::string t = lower(trim(raw));
  return t.empty() || t == "na" || t == "nan";
}

bool parse_real(const std::string& raw, double* out) {
  const std::string t = trim(raw);
  if (t.empty()) return false;
  const char* begin = t.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end != begin + t.size()) return false;
  *out = v;
  return true;
}

// RFC 4180 record reader: handles quoted fields, doubled quotes, embedded
// newlines and CRLF. Returns false at EOF with no data consumed.
bool read_record(std::istream& in, std::vector<std::string>* fields, long* line_no) {
  fields->clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  int c;
  while ((c = in.get()) != EOF) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        int peek = in.peek();
        if (peek == '"') {
          in.get();
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++*line_no;
        field.push_back(static_cast<char>(c));
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty()) throw ParseError("stray quote inside unquoted field", *line_no);
        in_quotes = true;
        break;
      case ',':
        fields->push_back(field);
        field.clear();
        break;
      case '\r':
        if (in.peek() == '\n') in.get();
        fields->push_back(field);
        ++*line_no;
        return true;
      case '\n':
        fields->push_back(field);
        ++*line_no;
        return true;
      default:
        field.push_back(static_cast<char>(c));
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted field", *line_no);
  if (!any) return false;
  fields->push_back(field);
  return true;
}

}  // namespace

int Dataset::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<int>(i);
  }
  throw SchemaError("unknown column: " + name);
}

bool Dataset::has(const std::string& name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

ColType Dataset::type(const std::string& name) const {
  return cols_[index_of(name)].type;
}

const Column& Dataset::column(const std::string& name) const {
  return cols_[index_of(name)];
}

Dataset Dataset::load_csv(const std::string& path,
                          const std::map<std::string, ColType>& type_hints) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open file: " + path);

  long line_no = 1;
  std::vector<std::string> header;
  if (!read_record(in, &header, &line_no)) throw ParseError("empty file, header row required", 1);
  for (auto& h : header) h = trim(h);
  {
    std::set<std::string> seen;
    for (const auto& h : header) {
      if (h.empty()) throw SchemaError("empty column name in header");
      if (!seen.insert(h).second) throw SchemaError("duplicate header: " + h);
    }
  }

  const std::size_t ncol = header.size();
  std::vector<std::vector<std::string>> raw(ncol);
  std::vector<std::string> rec;
  while (read_record(in, &rec, &line_no)) {
    if (rec.size() == 1 && trim(rec[0]).empty()) continue;  // trailing blank line
    if (rec.size() != ncol) {
      throw ParseError("expected " + std::to_string(ncol) + " fields, got " +
                           std::to_string(rec.size()),
                       line_no);
    }
    for (std::size_t j = 0; j < ncol; ++j) raw[j].push_back(rec[j]);
  }
  const std::size_t nrow = raw.empty() ? 0 : raw[0].size();

  Dataset d;
  d.names_ = header;
  d.cols_.resize(ncol);
  d.row_ids_.resize(nrow);
  for (std::size_t i = 0; i < nrow; ++i) d.row_ids_[i] = static_cast<int>(i);

  for (std::size_t j = 0; j < ncol; ++j) {
    Column& col = d.cols_[j];
    auto hint = type_hints.find(header[j]);
    bool numeric = hint == type_hints.end() || hint->second == ColType::real;
    if (hint == type_hints.end()) {
      for (const auto& cell : raw[j]) {
        double v;
        if (!is_missing_token(cell) && !parse_real(cell, &v)) {
          numeric = false;
          break;
        }
      }
    } else if (hint->second != ColType::real) {
      numeric = false;
    }

    col.miss.resize(nrow, 0);
    if (numeric) {
      col.type = ColType::real;
      col.num.resize(nrow, kNaN);
      for (std::size_t i = 0; i < nrow; ++i) {
        if (is_missing_token(raw[j][i])) {
          col.miss[i] = 1;
        } else {
          double v;
          if (!parse_real(raw[j][i], &v)) {
            throw SchemaError("column " + header[j] + " hinted real but value '" +
                              raw[j][i] + "' is not numeric");
          }
          col.num[i] = v;
        }
      }
    } else if (hint != type_hints.end() && hint->second == ColType::text) {
      col.type = ColType::text;
      col.txt.resize(nrow);
      for (std::size_t i = 0; i < nrow; ++i) {
        if (is_missing_token(raw[j][i])) {
          col.miss[i] = 1;
        } else {
          col.txt[i] = trim(raw[j][i]);
        }
      }
    } else {
      col.type = ColType::categorical;
      std::set<std::string> lv;
      for (std::size_t i = 0; i < nrow; ++i) {
        if (!is_missing_token(raw[j][i])) lv.insert(trim(raw[j][i]));
      }
      col.levels.assign(lv.begin(), lv.end());  // std::set is already ordered
      col.cat.resize(nrow, -1);
      for (std::size_t i = 0; i < nrow; ++i) {
        if (is_missing_token(raw[j][i])) {
          col.miss[i] = 1;
        } else {
          const std::string v = trim(raw[j][i]);
          auto it = std::lower_bound(col.levels.begin(), col.levels.end(), v);
          col.cat[i] = static_cast<int>(it - col.levels.begin());
        }
      }
    }
  }
  return d;
}

Dataset Dataset::from_columns(const std::vector<std::string>& names,
                              const std::vector<Column>& cols,
                              const std::vector<int>& row_ids) {
  if (names.size() != cols.size()) throw SchemaError("names/columns size mismatch");
  Dataset d;
  d.names_ = names;
  d.cols_ = cols;
  d.row_ids_ = row_ids;
  return d;
}

std::vector<double> Dataset::numeric(const std::string& name) const {
  const Column& col = cols_[index_of(name)];
  if (col.type != ColType::real) throw SchemaError("column " + name + " is not real");
  return col.num;
}

bool Dataset::is_missing(const std::string& name, int i) const {
  const Column& col = cols_[index_of(name)];
  return col.miss[static_cast<std::size_t>(i)] != 0;
}

std::string Dataset::cell_text(const std::string& name, int i) const {
  const Column& col = cols_[index_of(name)];
  const auto u = static_cast<std::size_t>(i);
  if (col.miss[u]) return "NA";
  switch (col.type) {
    case ColType::real: {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.15g", col.num[u]);
      return buf;
    }
    case ColType::categorical:
      return col.levels[static_cast<std::size_t>(col.cat[u])];
    case ColType::text:
      return col.txt[u];
  }
  return "";
}

Dataset Dataset::subset(const std::string& column,
                        const std::vector<std::string>& allowed) const {
  const Column& col = cols_[index_of(column)];
  std::set<std::string> allow(allowed.begin(), allowed.end());
  std::vector<int> keep;
  for (int i = 0; i < nrow(); ++i) {
    const auto u = static_cast<std::size_t>(i);
    if (col.miss[u]) continue;
    std::string v;
    if (col.type == ColType::real) {
      // Numeric membership: match if the value equals any allowed token.
      bool ok = false;
      for (const auto& a : allowed) {
        double x;
        if (parse_real(a, &x) && col.num[u] == x) {
          ok = true;
          break;
        }
      }
      if (ok) keep.push_back(i);
      continue;
    }
    v = col.type == ColType::categorical ? col.levels[static_cast<std::size_t>(col.cat[u])]
                                         : col.txt[u];
    if (allow.count(v)) keep.push_back(i);
  }
  return keep_rows(keep);
}

CompleteCaseReport Dataset::complete_cases(const std::vector<std::string>& required) const {
  std::vector<const Column*> cols;
  cols.reserve(required.size());
  for (const auto& r : required) cols.push_back(&cols_[index_of(r)]);
  CompleteCaseReport rep;
  for (int i = 0; i < nrow(); ++i) {
    const auto u = static_cast<std::size_t>(i);
    bool ok = true;
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (cols[j]->miss[u]) {
        rep.omitted_reasons[row_ids_[u]] = required[j];
        ok = false;
        break;
      }
    }
    if (ok) rep.kept_row_ids.push_back(row_ids_[u]);
  }
  rep.n_omitted = nrow() - static_cast<int>(rep.kept_row_ids.size());
  return rep;
}

Dataset Dataset::keep_rows(const std::vector<int>& view_indices) const {
  Dataset d;
  d.names_ = names_;
  d.cols_.resize(cols_.size());
  d.row_ids_.reserve(view_indices.size());
  for (int i : view_indices) d.row_ids_.push_back(row_ids_[static_cast<std::size_t>(i)]);
  for (std::size_t j = 0; j < cols_.size(); ++j) {
    const Column& src = cols_[j];
    Column& dst = d.cols_[j];
    dst.type = src.type;
    dst.levels = src.levels;
    for (int i : view_indices) {
      const auto u = static_cast<std::size_t>(i);
      dst.miss.push_back(src.miss[u]);
      switch (src.type) {
        case ColType::real:
          dst.num.push_back(src.num[u]);
          break;
        case ColType::categorical:
          dst.cat.push_back(src.cat[u]);
          break;
        case ColType::text:
          dst.txt.push_back(src.txt[u]);
          break;
      }
    }
  }
  return d;
}

Dataset Dataset::drop_incomplete(const std::vector<std::string>& required,
                                 CompleteCaseReport* report) const {
  CompleteCaseReport rep = complete_cases(required);
  std::set<int> kept(rep.kept_row_ids.begin(), rep.kept_row_ids.end());
  std::vector<int> view;
  for (int i = 0; i < nrow(); ++i) {
    if (kept.count(row_ids_[static_cast<std::size_t>(i)])) view.push_back(i);
  }
  if (report) *report = std::move(rep);
  return keep_rows(view);
}

Dataset Dataset::with_transform(const std::string& source, Transform f,
                                const std::string& target,
                                int* domain_violations) const {
  if (has(target)) throw SchemaError("target column already exists: " + target);
  const Column& src = cols_[index_of(source)];
  if (src.type != ColType::real) throw SchemaError("column " + source + " is not real");

  Column out;
  out.type = ColType::real;
  out.num.resize(src.num.size(), kNaN);
  out.miss.resize(src.num.size(), 0);
  int violations = 0;
  for (std::size_t i = 0; i < src.num.size(); ++i) {
    if (src.miss[i]) {
      out.miss[i] = 1;
      continue;
    }
    const double x = src.num[i];
    double y = std::numeric_limits<double>::quiet_NaN();
    bool ok = true;
    switch (f) {
      case Transform::sqrt_t:
        ok = x >= 0.0;
        y = std::sqrt(x);
        break;
      case Transform::square:
        y = x * x;
        break;
      case Transform::log_t:
        ok = x > 0.0;
        y = std::log(x);
        break;
      case Transform::exp_t:
        y = std::exp(x);
        break;
    }
    if (!ok) {
      out.miss[i] = 1;
      ++violations;
    } else {
      out.num[i] = y;
    }
  }
  if (domain_violations) *domain_violations = violations;

  Dataset d = *this;
  d.names_.push_back(target);
  d.cols_.push_back(std::move(out));
  return d;
}

Dataset Dataset::with_real_column(const std::string& name,
                                  const std::vector<double>& values) const {
  if (values.size() != row_ids_.size()) throw SchemaError("column length mismatch: " + name);
  Dataset d = *this;
  if (d.has(name)) {
    Column& col = d.cols_[static_cast<std::size_t>(d.index_of(name))];
    col = Column{};
    col.type = ColType::real;
  } else {
    d.names_.push_back(name);
    d.cols_.emplace_back();
    d.cols_.back().type = ColType::real;
  }
  Column& col = d.cols_[static_cast<std::size_t>(d.index_of(name))];
  col.num = values;
  col.miss.assign(values.size(), 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (std::isnan(values[i])) col.miss[i] = 1;
  }
  return d;
}

}  // namespace metakit
