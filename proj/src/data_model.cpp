#include "mtmatch/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "mtmatch/format.hpp"

namespace mtmatch {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      cells.push_back(was_quoted ? cur : trim(cur));
      cur.clear();
      was_quoted = false;
    } else {
      cur += c;
    }
  }
  cells.push_back(was_quoted ? cur : trim(cur));
  return cells;
}

bool is_missing_token(const std::string& s) {
  return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan" || s == "NAN" ||
         s == "null";
}

// Parses a full cell as a double; nullopt when the text is not numeric.
std::optional<double> parse_double(const std::string& s) {
  if (is_missing_token(s)) return std::nan("");
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return v;
}

int column_index(const std::vector<std::string>& header, const std::string& name) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ValidationError("column '" + name + "' not found in header");
  return static_cast<int>(it - header.begin());
}

}  // namespace

RawTable parse_csv(std::istream& in) {
  RawTable table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw ValidationError("row " + std::to_string(table.rows.size() + 1) + " has " +
                            std::to_string(cells.size()) + " cells, header has " +
                            std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  if (!have_header) throw ValidationError("CSV input has no header row");
  return table;
}

RawTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  return parse_csv(in);
}

Dataset::Dataset(MatrixXd covariates, std::vector<int> treatments, VectorXd outcomes,
                 std::vector<std::string> labels, std::vector<std::string> covariate_names)
    : covariates_(std::move(covariates)),
      treatments_(std::move(treatments)),
      outcomes_(std::move(outcomes)),
      labels_(std::move(labels)),
      covariate_names_(std::move(covariate_names)) {
  const int n = static_cast<int>(treatments_.size());
  if (outcomes_.size() != n) throw ValidationError("outcomes and treatments differ in length");
  if (covariates_.cols() > 0 && covariates_.rows() != n) {
    throw ValidationError("covariate rows and treatments differ in length");
  }
  if (covariates_.cols() == 0) covariates_.resize(n, 0);
  int z = 0;
  for (int w : treatments_) {
    if (w < 0) throw ValidationError("negative treatment code");
    z = std::max(z, w + 1);
  }
  if (!labels_.empty()) {
    if (static_cast<int>(labels_.size()) < z) throw ValidationError("fewer labels than treatment codes");
    z = static_cast<int>(labels_.size());
  } else {
    for (int w = 0; w < z; ++w) labels_.push_back(std::to_string(w + 1));
  }
  if (z < 2) throw ValidationError("fewer than 2 treatments");
  groups_.assign(z, {});
  for (int i = 0; i < n; ++i) groups_[treatments_[i]].push_back(i);
  for (int w = 0; w < z; ++w) {
    if (groups_[w].empty()) throw ValidationError("treatment '" + labels_[w] + "' has no units");
  }
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(outcomes_(i))) {
      throw ValidationError("non-finite outcome at row " + std::to_string(i + 1));
    }
    for (int c = 0; c < covariates_.cols(); ++c) {
      if (!std::isfinite(covariates_(i, c))) {
        throw ValidationError("non-finite covariate at row " + std::to_string(i + 1) + ", column " +
                              std::to_string(c + 1));
      }
    }
  }
  if (covariate_names_.empty()) {
    for (int c = 0; c < covariates_.cols(); ++c) covariate_names_.push_back("x" + std::to_string(c + 1));
  } else if (static_cast<int>(covariate_names_.size()) != covariates_.cols()) {
    throw ValidationError("covariate name count does not match covariate columns");
  }
  source_rows_.resize(n);
  std::iota(source_rows_.begin(), source_rows_.end(), 0);
}

Dataset Dataset::with_source_rows(std::vector<int> rows) const {
  if (static_cast<int>(rows.size()) != n()) throw ValidationError("source row count mismatch");
  Dataset copy = *this;
  copy.source_rows_ = std::move(rows);
  return copy;
}

bool operator==(const Dataset& a, const Dataset& b) {
  return a.covariates_.rows() == b.covariates_.rows() && a.covariates_.cols() == b.covariates_.cols() &&
         a.covariates_ == b.covariates_ && a.treatments_ == b.treatments_ && a.outcomes_ == b.outcomes_ &&
         a.labels_ == b.labels_ && a.covariate_names_ == b.covariate_names_;
}

std::vector<Pair> EstimandSpec::resolved_pairs(int num_treatments) const {
  return pairs.empty() ? all_pairs(num_treatments) : pairs;
}

void EstimandSpec::check(int num_treatments) const {
  if (reference && (*reference < 0 || *reference >= num_treatments)) {
    throw ValidationError("reference treatment out of range");
  }
  for (std::size_t a = 0; a < pairs.size(); ++a) {
    const auto& p = pairs[a];
    if (p.j == p.k) throw ValidationError("pair with identical treatments");
    if (p.j < 0 || p.k < 0 || p.j >= num_treatments || p.k >= num_treatments) {
      throw ValidationError("pair label out of range");
    }
    for (std::size_t b = 0; b < a; ++b) {
      if (pairs[b] == p) throw ValidationError("duplicate pair in estimand spec");
    }
  }
}

Dataset validate(const RawTable& raw, const ColumnMapping& columns) {
  const int treat_col = column_index(raw.header, columns.treatment);
  const int out_col = column_index(raw.header, columns.outcome);
  if (treat_col == out_col) throw ValidationError("treatment and outcome name the same column");

  std::vector<int> cov_cols;
  if (!columns.covariates.empty()) {
    for (const auto& name : columns.covariates) {
      int c = column_index(raw.header, name);
      if (c == treat_col || c == out_col) {
        throw ValidationError("column '" + name + "' cannot be both covariate and treatment/outcome");
      }
      cov_cols.push_back(c);
    }
  } else {
    for (int c = 0; c < static_cast<int>(raw.header.size()); ++c) {
      if (c == treat_col || c == out_col) continue;
      bool numeric = std::all_of(raw.rows.begin(), raw.rows.end(),
                                 [&](const auto& row) { return parse_double(row[c]).has_value(); });
      if (numeric) cov_cols.push_back(c);
    }
  }

  const int n = static_cast<int>(raw.rows.size());
  MatrixXd x(n, static_cast<int>(cov_cols.size()));
  VectorXd y(n);
  std::vector<int> codes(n);
  std::vector<std::string> labels;
  std::map<std::string, int> code_of;
  for (int i = 0; i < n; ++i) {
    const auto& row = raw.rows[i];
    const std::string row_tag = "row " + std::to_string(i + 1);
    auto yv = parse_double(row[out_col]);
    if (!yv) {
      throw ValidationError(row_tag + ": outcome '" + row[out_col] + "' is not numeric");
    }
    if (!std::isfinite(*yv)) {
      throw ValidationError(row_tag + ": non-finite value in column '" + raw.header[out_col] + "'");
    }
    y(i) = *yv;
    for (std::size_t c = 0; c < cov_cols.size(); ++c) {
      auto v = parse_double(row[cov_cols[c]]);
      if (!v) {
        throw ValidationError(row_tag + ": covariate '" + raw.header[cov_cols[c]] + "' is not numeric");
      }
      if (!std::isfinite(*v)) {
        throw ValidationError(row_tag + ": non-finite value in column '" + raw.header[cov_cols[c]] + "'");
      }
      x(i, static_cast<int>(c)) = *v;
    }
    const std::string& label = row[treat_col];
    if (label.empty()) throw ValidationError(row_tag + ": empty treatment label");
    auto [it, inserted] = code_of.emplace(label, static_cast<int>(labels.size()));
    if (inserted) labels.push_back(label);
    codes[i] = it->second;
  }
  if (labels.size() < 2) throw ValidationError("fewer than 2 treatments");
  std::vector<int> counts(labels.size(), 0);
  for (int c : codes) ++counts[c];
  for (std::size_t w = 0; w < labels.size(); ++w) {
    if (counts[w] < 2) {
      throw ValidationError("treatment '" + labels[w] + "' has fewer than 2 units");
    }
  }
  std::vector<std::string> names;
  for (int c : cov_cols) names.push_back(raw.header[c]);
  Dataset ds(std::move(x), std::move(codes), std::move(y), std::move(labels), std::move(names));
  ds.treatment_column = columns.treatment;
  ds.outcome_column = columns.outcome;
  return ds;
}

std::vector<Dataset> subsample_by_discrete(const Dataset& ds, int column) {
  if (column < 0 || column >= ds.num_covariates()) throw ValidationError("covariate column out of range");
  std::vector<double> values;
  for (int i = 0; i < ds.n(); ++i) {
    double v = ds.covariates()(i, column);
    if (std::find(values.begin(), values.end(), v) == values.end()) {
      values.push_back(v);
      if (values.size() > 10) {
        throw ValidationError("column '" + ds.covariate_names()[column] +
                              "' has more than 10 distinct values; treat it as continuous");
      }
    }
  }
  std::sort(values.begin(), values.end());

  std::vector<Dataset> out;
  const int p = ds.num_covariates();
  for (double v : values) {
    std::vector<int> rows;
    for (int i = 0; i < ds.n(); ++i) {
      if (ds.covariates()(i, column) == v) rows.push_back(i);
    }
    const int m = static_cast<int>(rows.size());
    MatrixXd x(m, p - 1);
    VectorXd y(m);
    std::vector<int> w(m);
    std::vector<int> source(m);
    for (int r = 0; r < m; ++r) {
      int i = rows[r];
      for (int c = 0, cc = 0; c < p; ++c) {
        if (c != column) x(r, cc++) = ds.covariates()(i, c);
      }
      y(r) = ds.outcomes()(i);
      w[r] = ds.treatment(i);
      source[r] = ds.source_rows()[i];
    }
    auto names = ds.covariate_names();
    names.erase(names.begin() + column);
    try {
      Dataset sub(std::move(x), std::move(w), std::move(y), ds.labels(), std::move(names));
      sub.treatment_column = ds.treatment_column;
      sub.outcome_column = ds.outcome_column;
      out.push_back(sub.with_source_rows(std::move(source)));
    } catch (const ValidationError& e) {
      throw ValidationError("subsample " + ds.covariate_names()[column] + "=" + format_double(v) + ": " +
                            e.what());
    }
  }
  return out;
}

RawTable to_table(const Dataset& ds) {
  RawTable t;
  t.header = ds.covariate_names();
  t.header.push_back(ds.treatment_column);
  t.header.push_back(ds.outcome_column);
  for (int i = 0; i < ds.n(); ++i) {
    std::vector<std::string> row;
    for (int c = 0; c < ds.num_covariates(); ++c) row.push_back(format_double(ds.covariates()(i, c)));
    row.push_back(ds.labels()[ds.treatment(i)]);
    row.push_back(format_double(ds.outcomes()(i)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_csv(std::ostream& out, const Dataset& ds) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  auto t = to_table(ds);
  for (std::size_t c = 0; c < t.header.size(); ++c) out << (c ? "," : "") << quote(t.header[c]);
  out << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << quote(row[c]);
    out << '\n';
  }
}

}  // namespace mtmatch
