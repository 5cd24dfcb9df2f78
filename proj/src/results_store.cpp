#include "mtmatch/results_store.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mtmatch/data_model.hpp"
#include "mtmatch/format.hpp"
#include "mtmatch/json_io.hpp"

namespace mtmatch {

namespace fs = std::filesystem;

namespace {

const char* kMetrics[] = {"region", "interval", "abs_bias", "width", "se_ratio"};

std::string csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t a = 0; a < fields.size(); ++a) out += (a ? "," : "") + fields[a];
  return out + "\n";
}

bool is_id(const std::string& s) {
  if (s.size() != 16) return false;
  for (char c : s) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  }
  return true;
}

bool is_number(const std::string& s) {
  if (s.empty() || s == "nan") return true;
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

fs::path cell_path(const fs::path& dir, const std::string& id) { return dir / "cells" / (id + ".json"); }

SimReport read_cell(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("missing cell file " + path.string());
  return sim_report_from_json(Json::parse(in));
}

}  // namespace

std::vector<std::string> ResultsStore::header() {
  std::vector<std::string> h = {"id", "f", "g", "P", "b", "gamma", "n1", "sigma2sq", "sigma3sq", "lambda", "theta",
                                "replications", "completed", "failures"};
  for (const auto& e : all_sim_estimators()) {
    for (const char* m : kMetrics) h.push_back(e + "_" + m);
  }
  return h;
}

ResultsStore::ResultsStore(fs::path dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_ / "cells");
  const fs::path csv = dir_ / "results.csv";
  if (!fs::exists(csv)) {
    std::ofstream out(csv);
    out << csv_row(header());
    if (!out) throw StoreError("cannot write " + csv.string());
    return;
  }
  auto refuse = [&](const std::string& what) {
    throw StoreError("results store " + dir_.string() + ": " + what +
                     "; remove the directory (or its results.csv) to start over");
  };
  std::ifstream in(csv);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (!text.empty() && text.back() != '\n') refuse("last row of results.csv is truncated");
  RawTable table;
  try {
    std::istringstream is(text);
    table = parse_csv(is);
  } catch (const std::exception& e) {
    refuse(std::string("results.csv cannot be parsed (") + e.what() + ")");
  }
  if (table.header != header()) refuse("results.csv has an unexpected header");
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string name = "row " + std::to_string(r + 2) + " of results.csv";
    if (row.empty() || !is_id(row[0])) refuse(name + " has a malformed cell id");
    for (std::size_t c = 3; c < row.size(); ++c) {
      if (!is_number(row[c])) refuse(name + " has a non-numeric " + table.header[c] + " field '" + row[c] + "'");
    }
    try {
      const SimReport rep = read_cell(cell_path(dir_, row[0]));
      if (rep.id != row[0]) refuse(name + " points at a cell file with a different id");
    } catch (const StoreError&) {
      throw;
    } catch (const std::exception& e) {
      refuse(name + " is malformed (" + e.what() + ")");
    }
    if (!ids_.insert(row[0]).second) refuse(name + " repeats cell " + row[0]);
    order_.push_back(row[0]);
  }
}

void ResultsStore::append(const SimReport& report) {
  if (contains(report.id)) throw StoreError("cell " + report.id + " is already stored");
  const fs::path final_path = cell_path(dir_, report.id);
  const fs::path tmp = final_path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << dump(to_json(report));
    if (!out) throw StoreError("cannot write " + tmp.string());
  }
  fs::rename(tmp, final_path);

  const auto& c = report.config;
  std::vector<std::string> row = {report.id,
                                  to_string(c.f),
                                  to_string(c.g),
                                  std::to_string(c.P),
                                  format_double(c.b),
                                  format_double(c.gamma),
                                  std::to_string(c.n1),
                                  format_double(c.sigma2sq),
                                  format_double(c.sigma3sq),
                                  format_double(c.lambda),
                                  format_double(c.theta),
                                  std::to_string(report.replications),
                                  std::to_string(report.completed),
                                  std::to_string(report.failures)};
  for (const auto& name : all_sim_estimators()) {
    const EstimatorMetrics* e = report.find(name);
    if (!e) {
      for (std::size_t a = 0; a < std::size(kMetrics); ++a) row.push_back("");
      continue;
    }
    for (double v : {e->region_coverage, e->interval_coverage_mean, e->abs_bias, e->width, e->se_ratio}) {
      row.push_back(format_double(v));
    }
  }
  std::ofstream out(dir_ / "results.csv", std::ios::app);
  out << csv_row(row);
  out.flush();
  if (!out) throw StoreError("cannot append to results.csv");
  ids_.insert(report.id);
  order_.push_back(report.id);
}

std::vector<SimReport> ResultsStore::load() const {
  std::vector<SimReport> out;
  for (const auto& id : order_) out.push_back(read_cell(cell_path(dir_, id)));
  return out;
}

}  // namespace mtmatch
