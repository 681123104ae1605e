#pragma once

#include <map>
#include <string>
#include <vector>

namespace metakit {

enum class ColType { real, categorical, text };

enum class Transform { sqrt_t, square, log_t, exp_t };

struct Column {
  ColType type = ColType::real;
  // Parallel storage; only the slot matching `type` is populated.
  std::vector<double> num;        // real values, NaN = missing
  std::vector<int> cat;           // level index, -1 = missing
  std::vector<std::string> txt;   // raw text, "" + miss flag = missing
  std::vector<unsigned char> miss;
  std::vector<std::string> levels;  // categorical levels, lexicographic
};

struct CompleteCaseReport {
  std::vector<int> kept_row_ids;
  int n_omitted = 0;
  // row_id -> first required column that was missing for that row
  std::map<int, std::string> omitted_reasons;
};

// Immutable study-level table. Row ids are assigned 0..k-1 at load and are
// preserved by subset/complete-case views so downstream diagnostics can
// always name the original row.
class Dataset {
 public:
  Dataset() = default;

  static Dataset load_csv(const std::string& path,
                          const std::map<std::string, ColType>& type_hints = {});
  static Dataset from_columns(const std::vector<std::string>& names,
                              const std::vector<Column>& cols,
                              const std::vector<int>& row_ids);

  int nrow() const { return static_cast<int>(row_ids_.size()); }
  int ncol() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  bool has(const std::string& name) const;
  ColType type(const std::string& name) const;
  const Column& column(const std::string& name) const;
  const std::vector<int>& row_ids() const { return row_ids_; }

  // Real column as a dense vector (NaN for missing).
  std::vector<double> numeric(const std::string& name) const;
  bool is_missing(const std::string& name, int i) const;
  // Display string of cell (row index i in current view).
  std::string cell_text(const std::string& name, int i) const;

  Dataset subset(const std::string& column,
                 const std::vector<std::string>& allowed) const;
  CompleteCaseReport complete_cases(const std::vector<std::string>& required) const;
  Dataset keep_rows(const std::vector<int>& view_indices) const;
  // Convenience: complete_cases + keep.
  Dataset drop_incomplete(const std::vector<std::string>& required,
                          CompleteCaseReport* report = nullptr) const;

  Dataset with_transform(const std::string& source, Transform f,
                         const std::string& target,
                         int* domain_violations = nullptr) const;
  Dataset with_real_column(const std::string& name,
                           const std::vector<double>& values) const;

 private:
  std::vector<std::string> names_;
  std::vector<Column> cols_;
  std::vector<int> row_ids_;

  int index_of(const std::string& name) const;
};

}  // namespace metakit
