#pragma once

#include <string>
#include <vector>

#include "mtmatch/simulation.hpp"

namespace mtmatch {

/// One summary table rendered twice: machine-readable CSV and aligned text.
struct RenderedTable {
  std::string name;  // table1 ... table4
  std::string csv;
  std::string text;
};

// Median and quartiles of region / interval coverage per estimator across cells.
RenderedTable coverage_summary_table(const std::vector<SimReport>& reports);
// Median region coverage by gamma, b and P for the four matching combinations.
RenderedTable coverage_by_design_table(const std::vector<SimReport>& reports);
// Median interval coverage by b and covariate distribution.
RenderedTable coverage_by_distribution_table(const std::vector<SimReport>& reports);
// Median absolute bias, interval width and SE ratio by b.
RenderedTable bias_width_table(const std::vector<SimReport>& reports);

// table = 0 renders all four.
std::vector<RenderedTable> render_tables(const std::vector<SimReport>& reports, int table = 0);

// Right-aligned columns separated by two spaces; the first column is left-aligned.
std::string align_columns(const std::vector<std::vector<std::string>>& rows);

}  // namespace mtmatch
