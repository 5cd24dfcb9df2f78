#include <gtest/gtest.h>
#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mtmatch/analyze.hpp"
#include "mtmatch/grid_config.hpp"
#include "mtmatch/json_io.hpp"
#include "mtmatch/report.hpp"
#include "mtmatch/results_store.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace mtmatch;

namespace {

const fs::path kSource = MTMATCH_SOURCE_DIR;
const std::string kCli = MTMATCH_CLI;

fs::path scratch() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  const fs::path dir = fs::temp_directory_path() / ("mtmatch_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

int run(const std::string& args, const fs::path& log) {
  const int status = std::system((kCli + " " + args + " >" + log.string() + " 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

GridSpec grid_from(const std::string& text) {
  std::istringstream in(text);
  return parse_grid(in);
}

const char* kTinyGrid = R"(# three cheap cells
n1 = 30
replications = 3
seed = 9
estimators = B-N BC-N B-R IPW

[grid]
b = 0, 0.5, 1
)";

}  // namespace

TEST(GridConfig, CartesianProductInKeyOrder) {
  const GridSpec g = grid_from("P = 3\n[grid]\nb = 0, 1\ngamma = 1, 2\n[grid]\nf = t7\n");
  ASSERT_EQ(g.cells.size(), 5u);
  EXPECT_EQ(g.cells[0].b, 0.0);
  EXPECT_EQ(g.cells[0].gamma, 1.0);
  EXPECT_EQ(g.cells[1].gamma, 2.0);
  EXPECT_EQ(g.cells[2].b, 1.0);
  EXPECT_EQ(g.cells[4].f, CovariateDist::T7);
  EXPECT_EQ(g.cells[4].b, 0.0);
  for (const auto& c : g.cells) EXPECT_EQ(c.P, 3);
}

TEST(GridConfig, SeedsAreDerivedPerCellAndOverridable) {
  const GridSpec a = grid_from("seed = 5\n[grid]\nb = 0, 1\n");
  EXPECT_NE(a.cells[0].seed, a.cells[1].seed);
  EXPECT_EQ(a.cells[0].seed, cell_seed(a.cells[0], 5));
  const GridSpec again = grid_from("seed = 5\n[grid]\nb = 0, 1\n");
  EXPECT_EQ(a.cells[1].id(), again.cells[1].id());
  std::istringstream in("seed = 5\n[grid]\nb = 0, 1\n");
  const GridSpec other = parse_grid(in, 6);
  EXPECT_NE(other.cells[0].seed, a.cells[0].seed);
}

TEST(GridConfig, SharedSigmaKeyAndEstimatorList) {
  const GridSpec g = grid_from("[grid]\nsigma_sq = 0.5, 2\nestimators = B-N DR\n");
  ASSERT_EQ(g.cells.size(), 2u);
  EXPECT_EQ(g.cells[1].sigma2sq, 2.0);
  EXPECT_EQ(g.cells[1].sigma3sq, 2.0);
  EXPECT_EQ(g.cells[0].estimators, (std::vector<std::string>{"B-N", "DR"}));
}

TEST(GridConfig, NonPositiveDefiniteCombinationsAreSkipped) {
  const GridSpec g = grid_from("[grid]\nsigma_sq = 0.25, 1\nlambda = 0, 0.5\n");
  // sigma^2 = 0.25 with lambda = 0.5 is not PD for P = 3.
  EXPECT_EQ(g.cells.size(), 3u);
  ASSERT_EQ(g.skipped.size(), 1u);
}

TEST(GridConfig, ErrorsNameTheLine) {
  auto message = [](const std::string& text) {
    try {
      grid_from(text);
    } catch (const ValidationError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_EQ(message("[grid]\nb = 0\nwat = 1\n").rfind("grid config line 3:", 0), 0u);
  EXPECT_EQ(message("b = 0, 1\n[grid]\nP = 3\n").rfind("grid config line 1:", 0), 0u);
  EXPECT_EQ(message("[grid]\nP = three\n").rfind("grid config line 2:", 0), 0u);
  EXPECT_EQ(message("[grid\n").rfind("grid config line 1:", 0), 0u);
  EXPECT_EQ(message("[other]\n").rfind("grid config line 1:", 0), 0u);
  EXPECT_EQ(message("[grid]\nb\n").rfind("grid config line 2:", 0), 0u);
  EXPECT_NE(message("b = 1\n").find("no [grid] section"), std::string::npos);
}

TEST(JsonIo, SimReportRoundTrip) {
  SimConfig cfg;
  cfg.n1 = 30;
  cfg.replications = 3;
  const SimReport rep = run_cell(cfg);
  const std::string text = dump(to_json(rep));
  const SimReport back = sim_report_from_json(Json::parse(text));
  EXPECT_EQ(dump(to_json(back)), text);
  EXPECT_EQ(back.id, cfg.id());
  Json bad = Json::parse(text);
  bad["id"] = "0000000000000000";
  EXPECT_THROW(sim_report_from_json(bad), ValidationError);
}

TEST(JsonIo, NanIsWrittenAsNull) {
  EstimatorMetrics em;
  em.name = "IPW";
  em.region_coverage = std::nan("");
  EXPECT_TRUE(to_json(em)["region_coverage"].is_null());
}

TEST(ResultsStore, AppendReloadAndResume) {
  const fs::path dir = scratch() / "store";
  const GridSpec g = grid_from(kTinyGrid);
  {
    ResultsStore store(dir);
    EXPECT_EQ(store.size(), 0u);
    store.append(run_cell(g.cells[0]));
    EXPECT_THROW(store.append(run_cell(g.cells[0])), StoreError);
  }
  ResultsStore reopened(dir);
  EXPECT_TRUE(reopened.contains(g.cells[0].id()));
  EXPECT_EQ(reopened.load().size(), 1u);
  EXPECT_EQ(dump(to_json(reopened.load()[0])), dump(to_json(run_cell(g.cells[0]))));
}

TEST(ResultsStore, CorruptionIsRefusedWithTheRow) {
  const fs::path base = scratch();
  const GridSpec g = grid_from(kTinyGrid);
  const fs::path dir = base / "store";
  {
    ResultsStore store(dir);
    store.append(run_cell(g.cells[0]));
  }
  const std::string good = slurp(dir / "results.csv");
  auto refusal = [&](const std::string& csv) {
    write(dir / "results.csv", csv);
    try {
      ResultsStore s(dir);
    } catch (const StoreError& e) {
      return std::string(e.what());
    }
    return std::string("accepted");
  };
  EXPECT_NE(refusal(good.substr(0, good.size() - 5)).find("truncated"), std::string::npos);
  std::string bad_id = good;
  bad_id.replace(bad_id.find('\n') + 1, 3, "zzz");
  EXPECT_NE(refusal(bad_id).find("row 2"), std::string::npos);
  EXPECT_NE(refusal(good + good.substr(good.find('\n') + 1)).find("repeats"), std::string::npos);
  std::string bad_num = good;
  const auto row = bad_num.find('\n') + 1;
  const auto last = bad_num.rfind(',');
  bad_num.replace(last + 1, bad_num.size() - last - 2, "abc");
  ASSERT_GT(last, row);
  EXPECT_NE(refusal(bad_num).find("non-numeric"), std::string::npos);
  EXPECT_NE(refusal("nope\n").find("header"), std::string::npos);
  EXPECT_NE(refusal(good).find("accepted"), std::string::npos);
  fs::remove(dir / "cells" / (g.cells[0].id() + ".json"));
  EXPECT_NE(refusal(good).find("start over"), std::string::npos);
}

TEST(Report, SingleCellQuantilesEqualTheCell) {
  SimConfig cfg;
  cfg.n1 = 30;
  cfg.replications = 4;
  const SimReport rep = run_cell(cfg);
  const auto tables = render_tables({rep});
  ASSERT_EQ(tables.size(), 4u);
  const RenderedTable& t1 = tables[0];
  EXPECT_EQ(t1.name, "table1");
  const EstimatorMetrics& bn = *rep.find("B-N");
  // Median and both quartiles print the same value.
  std::istringstream csv(t1.csv);
  std::string line;
  bool found = false;
  while (std::getline(csv, line)) {
    if (line.rfind("B-N,", 0) != 0) continue;
    found = true;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    ASSERT_GE(cells.size(), 7u);
    EXPECT_EQ(cells[1], cells[2]);
    EXPECT_EQ(cells[1], cells[3]);
    EXPECT_NEAR(std::stod(cells[1]), bn.region_coverage, 5e-5);
    EXPECT_EQ(cells[4], cells[5]);
    EXPECT_NEAR(std::stod(cells[4]), bn.interval_coverage_mean, 5e-5);
  }
  EXPECT_TRUE(found);
  EXPECT_THROW(render_tables({}), ValidationError);
  EXPECT_THROW(render_tables({rep}, 5), ValidationError);
}

TEST(Analyze, GoldenFilesAreReproducedByteForByte) {
  const fs::path base = scratch();
  struct Case {
    std::string name;
    std::string args;
  } cases[] = {{"toy3_bc", ""},
               {"toy3_ate_basic", " --reference all --estimator basic --distance euclid --se randomization"}};
  for (const auto& c : cases) {
    const fs::path out = base / c.name;
    ASSERT_EQ(run("analyze --data " + (kSource / "tests/fixtures/toy3.csv").string() +
                      " --treatment group --outcome y --out " + out.string() + c.args,
                  base / "log.txt"),
              0)
        << slurp(base / "log.txt");
    for (const char* f : {"estimate.json", "inference.json", "overlap.json", "summary.txt"}) {
      EXPECT_EQ(slurp(out / f), slurp(kSource / "tests/golden" / c.name / f)) << c.name << "/" << f;
    }
  }
}

TEST(Analyze, ToyAteMatchesBruteForce) {
  std::ifstream in(kSource / "tests/fixtures/toy3.csv");
  const Dataset ds = validate(parse_csv(in), ColumnMapping{"group", "y", {"x1", "x2"}});
  AnalyzeOptions opts;
  opts.reference = "all";
  opts.estimator = "basic";
  opts.distance = "euclid";
  opts.se = "randomization";
  const AnalysisResult res = run_analysis(ds, opts);
  ASSERT_TRUE(res.ate.has_value());
  // Brute-force nearest neighbours on raw covariates, lowest index on ties.
  VectorXd ate = VectorXd::Zero(3);
  const auto pairs = all_pairs(3);
  for (int t = 0; t < 3; ++t) {
    VectorXd tau = VectorXd::Zero(3);
    for (int i : ds.group(t)) {
      VectorXd yhat(3);
      for (int w = 0; w < 3; ++w) {
        if (w == t) {
          yhat(w) = ds.outcomes()(i);
          continue;
        }
        int best = -1;
        double bd = 0;
        for (int l : ds.group(w)) {
          const double d = (ds.covariates().row(i) - ds.covariates().row(l)).squaredNorm();
          if (best < 0 || d < bd) best = l, bd = d;
        }
        yhat(w) = ds.outcomes()(best);
      }
      for (int q = 0; q < 3; ++q) tau(q) += (yhat(pairs[q].j) - yhat(pairs[q].k)) / ds.group_size(t);
    }
    EXPECT_LT((tau - res.per_reference[t].estimate.tau_hat).cwiseAbs().maxCoeff(), 1e-12);
    ate += tau * ds.group_size(t) / ds.n();
  }
  EXPECT_LT((ate - res.ate->tau_hat).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Cli, ExitCodesAndMessages) {
  const fs::path base = scratch();
  const std::string data = (kSource / "tests/fixtures/toy3.csv").string();
  const fs::path log = base / "log.txt";
  EXPECT_EQ(run("analyze --data " + data + " --treatment group --outcome nope --out " + (base / "a").string(), log), 2);
  EXPECT_NE(slurp(log).find("nope"), std::string::npos);
  EXPECT_EQ(run("analyze --data " + data + " --treatment group --outcome y --alpha 1.5 --out " + (base / "b").string(), log), 2);
  EXPECT_EQ(run("analyze --data " + (base / "missing.csv").string() + " --treatment g --outcome y", log), 2);
  EXPECT_EQ(run("report --store " + (base / "nowhere").string(), log), 2);
  EXPECT_EQ(run("frobnicate", log), 2);
  write(base / "bad.cfg", "[grid]\nP = x\n");
  EXPECT_EQ(run("simulate --grid " + (base / "bad.cfg").string() + " --out " + (base / "s").string(), log), 2);
  EXPECT_NE(slurp(log).find("line 2"), std::string::npos);
}

TEST(Cli, SimulateIsResumableAndIdempotent) {
  const fs::path base = scratch();
  write(base / "grid.cfg", kTinyGrid);
  const std::string args = "simulate --grid " + (base / "grid.cfg").string() + " --out " + (base / "store").string();
  const fs::path log = base / "log.txt";
  // Interrupted run: only the first cell is computed.
  ASSERT_EQ(run(args + " --stop-after 1", log), 0) << slurp(log);
  EXPECT_EQ(ResultsStore(base / "store").size(), 1u);
  ASSERT_EQ(run(args, log), 0) << slurp(log);
  EXPECT_NE(slurp(log).find("1 already stored, 2 to run"), std::string::npos) << slurp(log);
  const std::string csv = slurp(base / "store/results.csv");
  const std::string table = slurp(base / "store/tables/table1.csv");
  EXPECT_EQ(ResultsStore(base / "store").size(), 3u);
  ASSERT_EQ(run(args, log), 0);
  EXPECT_NE(slurp(log).find("3 already stored, 0 to run"), std::string::npos) << slurp(log);
  EXPECT_EQ(slurp(base / "store/results.csv"), csv);
  EXPECT_EQ(slurp(base / "store/tables/table1.csv"), table);
  // An uninterrupted run in a fresh store gives the same rows.
  const std::string fresh = "simulate --grid " + (base / "grid.cfg").string() + " --out " + (base / "fresh").string();
  ASSERT_EQ(run(fresh + " --workers 2", log), 0);
  EXPECT_EQ(slurp(base / "fresh/results.csv"), csv);
  // report reads the store back.
  ASSERT_EQ(run("report --store " + (base / "store").string() + " --table 4", log), 0);
  EXPECT_NE(slurp(log).find("SE ratio"), std::string::npos) << slurp(log);
  // Corrupt store: refused with exit 2.
  write(base / "store/results.csv", csv.substr(0, csv.size() - 3));
  EXPECT_EQ(run(args, log), 2);
  EXPECT_NE(slurp(log).find("start over"), std::string::npos);
}
