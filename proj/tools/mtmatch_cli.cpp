// Command-line front end: analyze, simulate, report.
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "mtmatch/analyze.hpp"
#include "mtmatch/grid_config.hpp"
#include "mtmatch/report.hpp"
#include "mtmatch/results_store.hpp"
#include "mtmatch/simulation.hpp"

namespace fs = std::filesystem;
using namespace mtmatch;

namespace {

constexpr int kValidation = 2;
constexpr int kNumerical = 3;

void write_tables(const fs::path& dir, const std::vector<RenderedTable>& tables, bool print) {
  fs::create_directories(dir);
  for (const auto& t : tables) {
    std::ofstream(dir / (t.name + ".csv")) << t.csv;
    std::ofstream(dir / (t.name + ".txt")) << t.text;
    if (print) std::cout << t.text << "\n";
  }
}

int run_simulate(const fs::path& grid_path, const fs::path& out, int workers, std::optional<std::uint64_t> seed,
                 std::optional<int> stop_after) {
  std::string stage = "grid config";
  try {
    const GridSpec grid = read_grid(grid_path, seed);
    for (const auto& s : grid.skipped) std::cerr << "skipping invalid cell: " << s << "\n";
    stage = "results store";
    ResultsStore store(out);
    std::vector<std::string> done = store.ids();
    int todo = 0;
    for (const auto& c : grid.cells) todo += store.contains(c.id()) ? 0 : 1;
    std::cerr << grid.cells.size() << " cells, " << (grid.cells.size() - todo) << " already stored, " << todo
              << " to run\n";
    stage = "simulation";
    int finished = 0;
    RunOptions ro;
    ro.workers = workers;
    run_factorial(grid.cells, ro, done, [&](const SimReport& r) {
      store.append(r);
      ++finished;
      std::cerr << "[" << finished << "/" << todo << "] cell " << r.id << " done";
      if (r.failures) std::cerr << " (" << r.failures << " failed replications)";
      std::cerr << "\n";
    }, stop_after);
    stage = "report";
    write_tables(out / "tables", render_tables(store.load()), false);
    return 0;
  } catch (const NumericalError& e) {
    std::cerr << "error during " << stage << ": " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error during " << stage << ": " << e.what() << "\n";
    return kValidation;
  }
}

int run_report(const fs::path& dir, int table) {
  try {
    if (!fs::exists(dir / "results.csv")) throw ValidationError("no results store at " + dir.string());
    const ResultsStore store(dir);
    write_tables(dir / "tables", render_tables(store.load(), table), true);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-treatment matching estimators and simulation harness"};
  app.require_subcommand(1);

  AnalyzeOptions ao;
  std::string covariates;
  auto* analyze_cmd = app.add_subcommand("analyze", "Estimate pairwise effects from a CSV file");
  analyze_cmd->add_option("--data", ao.data, "Input CSV with a header row")->required();
  analyze_cmd->add_option("--treatment", ao.treatment, "Treatment column")->required();
  analyze_cmd->add_option("--outcome", ao.outcome, "Outcome column")->required();
  analyze_cmd->add_option("--covariates", covariates, "Comma-separated covariate columns (default: all numeric)");
  analyze_cmd->add_option("--reference", ao.reference, "Reference treatment label, or 'all' for the ATE");
  analyze_cmd->add_option("--estimator", ao.estimator, "basic or bc")->capture_default_str();
  analyze_cmd->add_option("--se", ao.se, "new or randomization")->capture_default_str();
  analyze_cmd->add_option("--distance", ao.distance, "vector, logit-gps, mahalanobis or euclid")->capture_default_str();
  analyze_cmd->add_option("--sigma2", ao.sigma2, "auto, raw or residual")->capture_default_str();
  analyze_cmd->add_option("--m", ao.m, "Matches per unit")->capture_default_str();
  analyze_cmd->add_option("--J", ao.J, "Within-group matches for conditional variances")->capture_default_str();
  analyze_cmd->add_option("--K", ao.K, "k-means clusters for vector matching")->capture_default_str();
  analyze_cmd->add_option("--alpha", ao.alpha, "Significance level")->capture_default_str();
  analyze_cmd->add_option("--eta", ao.eta, "Overlap threshold")->capture_default_str();
  analyze_cmd->add_option("--seed", ao.seed, "k-means seed")->capture_default_str();
  analyze_cmd->add_option("--ridge", ao.ridge, "L2 penalty for the GPS fit")->capture_default_str();
  analyze_cmd->add_flag("--interactions", ao.interactions, "Pairwise interactions in outcome regressions");
  analyze_cmd->add_flag("--pseudo-inverse", ao.pseudo_inverse, "Allow a singular covariance (df = rank)");
  analyze_cmd->add_option("--out", ao.out, "Output directory")->capture_default_str();

  fs::path grid, sim_out;
  int workers = 1;
  std::optional<std::uint64_t> seed;
  std::optional<int> stop_after;
  auto* sim_cmd = app.add_subcommand("simulate", "Run a factorial simulation grid into a results store");
  sim_cmd->add_option("--grid", grid, "Grid config file")->required();
  sim_cmd->add_option("--out", sim_out, "Results store directory")->required();
  sim_cmd->add_option("--workers", workers, "Worker threads per cell")->capture_default_str();
  sim_cmd->add_option("--seed", seed, "Override the base seed of every grid section");
  sim_cmd->add_option("--stop-after", stop_after, "Stop after computing this many new cells");

  fs::path store;
  int table = 0;
  auto* report_cmd = app.add_subcommand("report", "Print summary tables from a results store");
  report_cmd->add_option("--store", store, "Results store directory")->required();
  report_cmd->add_option("--table", table, "Table 1-4 (default: all)")->check(CLI::Range(1, 4));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  if (*analyze_cmd) {
    if (!covariates.empty()) {
      std::stringstream ss(covariates);
      for (std::string c; std::getline(ss, c, ',');) ao.covariates.push_back(c);
    }
    const AnalyzeOutcome res = analyze(ao);
    (res.exit_code == 0 ? std::cout : std::cerr) << res.message << "\n";
    return res.exit_code;
  }
  if (*sim_cmd) return run_simulate(grid, sim_out, workers, seed, stop_after);
  return run_report(store, table);
}
