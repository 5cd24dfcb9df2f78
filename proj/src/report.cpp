#include "mtmatch/report.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "mtmatch/format.hpp"

namespace mtmatch {

namespace {

using Rows = std::vector<std::vector<std::string>>;
using Pick = std::function<bool(const SimReport&)>;
using Metric = std::function<double(const EstimatorMetrics&)>;

const char* kLevelsNote = "factor levels beyond those named in the design are reconstructed; see the grid config";

std::vector<double> collect(const std::vector<SimReport>& reports, const std::string& estimator, const Pick& pick,
                            const Metric& metric) {
  std::vector<double> v;
  for (const auto& r : reports) {
    if (!pick(r)) continue;
    if (const auto* e = r.find(estimator)) v.push_back(metric(*e));
  }
  return v;
}

std::string csv_text(const Rows& rows) {
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t a = 0; a < row.size(); ++a) out += (a ? "," : "") + row[a];
    out += "\n";
  }
  return out;
}

std::string fmt(double v) { return format_fixed(v, 2); }
std::string full(double v) { return std::isnan(v) ? "" : format_double(v); }

template <class F>
std::vector<double> levels(const std::vector<SimReport>& reports, F get) {
  std::set<double> s;
  for (const auto& r : reports) s.insert(get(r.config));
  return {s.begin(), s.end()};
}

std::string failures_note(const std::vector<SimReport>& reports) {
  int flagged = 0;
  for (const auto& r : reports) flagged += r.failure_limit_exceeded ? 1 : 0;
  std::string out = std::to_string(reports.size()) + " cells";
  if (flagged) out += ", " + std::to_string(flagged) + " with more than 5% failed replications";
  return out;
}

RenderedTable finish(std::string name, const std::string& title, const Rows& csv, const Rows& text,
                     const std::vector<SimReport>& reports) {
  RenderedTable t;
  t.name = std::move(name);
  t.csv = csv_text(csv);
  t.text = title + "\n" + align_columns(text) + "(" + failures_note(reports) + "; " + kLevelsNote + ")\n";
  return t;
}

const Metric kRegion = [](const EstimatorMetrics& e) { return e.region_coverage; };
const Metric kInterval = [](const EstimatorMetrics& e) { return e.interval_coverage_mean; };
const Metric kBias = [](const EstimatorMetrics& e) { return e.abs_bias; };
const Metric kWidth = [](const EstimatorMetrics& e) { return e.width; };
const Metric kRatio = [](const EstimatorMetrics& e) { return e.se_ratio; };

}  // namespace

std::string align_columns(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    if (row.size() > width.size()) width.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::string pad(width[c] - row[c].size(), ' ');
      if (c) line += "  ";
      line += c == 0 ? row[c] + pad : pad + row[c];
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

RenderedTable coverage_summary_table(const std::vector<SimReport>& reports) {
  Rows csv = {{"method", "region_median", "region_q25", "region_q75", "interval_median", "interval_q25",
               "interval_q75"}};
  Rows text = {{"", "Region", "", "", "Interval", "", ""}, {"Method", "Median", "25%", "75%", "Median", "25%", "75%"}};
  const Pick all = [](const SimReport&) { return true; };
  for (const auto& name : all_sim_estimators()) {
    const auto reg = collect(reports, name, all, kRegion);
    if (reg.empty()) continue;
    const Quantiles r = quantiles(reg);
    const Quantiles i = quantiles(collect(reports, name, all, kInterval));
    csv.push_back({name, full(r.median), full(r.q25), full(r.q75), full(i.median), full(i.q25), full(i.q75)});
    text.push_back({name, fmt(r.median), fmt(r.q25), fmt(r.q75), fmt(i.median), fmt(i.q25), fmt(i.q75)});
  }
  return finish("table1", "Region and Bonferroni interval coverage across cells (median, quartiles)", csv, text,
                reports);
}

RenderedTable coverage_by_design_table(const std::vector<SimReport>& reports) {
  const std::vector<std::string> methods = {"B-N", "BC-N", "B-R", "BC-R"};
  const auto gammas = levels(reports, [](const SimConfig& c) { return c.gamma; });
  const auto bs = levels(reports, [](const SimConfig& c) { return c.b; });
  const auto ps = levels(reports, [](const SimConfig& c) { return static_cast<double>(c.P); });
  Rows csv = {{"gamma", "b", "method", "P", "region_median", "cells"}};
  Rows text;
  std::vector<std::string> h1 = {"", ""}, h2 = {"gamma", "b"};
  for (const auto& m : methods) {
    for (double p : ps) {
      h1.push_back(m);
      h2.push_back("P=" + format_double(p));
    }
  }
  text.push_back(h1);
  text.push_back(h2);
  for (double g : gammas) {
    for (double b : bs) {
      std::vector<std::string> row = {format_double(g), format_fixed(b, 2)};
      for (const auto& m : methods) {
        for (double p : ps) {
          const Pick pick = [&](const SimReport& r) {
            return r.config.gamma == g && r.config.b == b && r.config.P == static_cast<int>(p);
          };
          const auto v = collect(reports, m, pick, kRegion);
          const double med = quantiles(v).median;
          csv.push_back({format_double(g), format_double(b), m, format_double(p), full(med), std::to_string(v.size())});
          row.push_back(fmt(med));
        }
      }
      text.push_back(row);
    }
  }
  return finish("table2", "Median region coverage by gamma, b and P", csv, text, reports);
}

RenderedTable coverage_by_distribution_table(const std::vector<SimReport>& reports) {
  const std::vector<std::string> methods = {"B-N", "BC-N", "IPW", "DR"};
  const std::vector<CovariateDist> fs = {CovariateDist::Normal, CovariateDist::T7};
  const auto bs = levels(reports, [](const SimConfig& c) { return c.b; });
  Rows csv = {{"b", "method", "f", "interval_median", "cells"}};
  Rows text;
  std::vector<std::string> h1 = {""}, h2 = {"b"};
  for (const auto& m : methods) {
    for (auto f : fs) {
      h1.push_back(m);
      h2.push_back("f=" + to_string(f));
    }
  }
  text.push_back(h1);
  text.push_back(h2);
  for (double b : bs) {
    std::vector<std::string> row = {format_fixed(b, 2)};
    for (const auto& m : methods) {
      for (auto f : fs) {
        const Pick pick = [&](const SimReport& r) { return r.config.b == b && r.config.f == f; };
        const auto v = collect(reports, m, pick, kInterval);
        const double med = quantiles(v).median;
        csv.push_back({format_double(b), m, to_string(f), full(med), std::to_string(v.size())});
        row.push_back(fmt(med));
      }
    }
    text.push_back(row);
  }
  return finish("table3", "Median Bonferroni interval coverage by b and covariate distribution", csv, text, reports);
}

RenderedTable bias_width_table(const std::vector<SimReport>& reports) {
  struct Line {
    std::string quantity, method, estimator;
    Metric metric;
    bool iqr;
  };
  // Bias and SE ratio of the basic estimate use the B-N combination (B-N and
  // B-R share the point estimate); width of N and R come from B-N and B-R.
  const std::vector<Line> lines = {
      {"bias", "B", "B-N", kBias, true},       {"bias", "BC", "BC-N", kBias, true},
      {"bias", "IPW", "IPW", kBias, true},     {"bias", "DR", "DR", kBias, true},
      {"width", "N", "B-N", kWidth, true},     {"width", "R", "B-R", kWidth, true},
      {"width", "IPW", "IPW", kWidth, true},   {"width", "DR", "DR", kWidth, true},
      {"se_ratio", "N", "B-N", kRatio, false}, {"se_ratio", "R", "B-R", kRatio, false},
      {"se_ratio", "IPW", "IPW", kRatio, false}, {"se_ratio", "DR", "DR", kRatio, false},
  };
  const auto bs = levels(reports, [](const SimConfig& c) { return c.b; });
  Rows csv = {{"quantity", "method", "b", "median", "iqr", "cells"}};
  Rows text;
  std::vector<std::string> head = {"", "Method"};
  for (double b : bs) head.push_back("b=" + format_fixed(b, 2));
  text.push_back(head);
  std::string last;
  for (const auto& line : lines) {
    std::vector<std::string> row = {line.quantity == last ? "" : line.quantity, line.method};
    last = line.quantity;
    for (double b : bs) {
      const Pick pick = [&](const SimReport& r) { return r.config.b == b; };
      const auto v = collect(reports, line.estimator, pick, line.metric);
      const Quantiles q = quantiles(v);
      const double iqr = q.q75 - q.q25;
      csv.push_back({line.quantity, line.method, format_double(b), full(q.median), line.iqr ? full(iqr) : "",
                     std::to_string(v.size())});
      row.push_back(line.iqr ? fmt(q.median) + " (" + fmt(iqr) + ")" : fmt(q.median));
    }
    text.push_back(row);
  }
  return finish("table4", "Median absolute bias, interval width (IQR in parentheses) and SE ratio by b", csv, text,
                reports);
}

std::vector<RenderedTable> render_tables(const std::vector<SimReport>& reports, int table) {
  if (reports.empty()) throw ValidationError("results store is empty");
  if (table < 0 || table > 4) throw ValidationError("table must be 1, 2, 3 or 4");
  std::vector<RenderedTable> out;
  if (table == 0 || table == 1) out.push_back(coverage_summary_table(reports));
  if (table == 0 || table == 2) out.push_back(coverage_by_design_table(reports));
  if (table == 0 || table == 3) out.push_back(coverage_by_distribution_table(reports));
  if (table == 0 || table == 4) out.push_back(bias_width_table(reports));
  return out;
}

}  // namespace mtmatch
