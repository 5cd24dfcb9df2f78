#include "mtmatch/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "mtmatch/comparators.hpp"
#include "mtmatch/distributions.hpp"
#include "mtmatch/estimators.hpp"
#include "mtmatch/format.hpp"
#include "mtmatch/gps.hpp"
#include "mtmatch/inference.hpp"
#include "mtmatch/matching.hpp"
#include "mtmatch/variance.hpp"

namespace mtmatch {

namespace {

constexpr int kGroups = 3;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kKeptFailureMessages = 5;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool is_comparator(const std::string& name) { return name == "IPW" || name == "DR"; }

}  // namespace

std::string to_string(CovariateDist f) { return f == CovariateDist::Normal ? "normal" : "t7"; }
std::string to_string(ResponseLink g) { return g == ResponseLink::Identity ? "identity" : "exp"; }

CovariateDist parse_covariate_dist(const std::string& text) {
  if (text == "normal" || text == "N") return CovariateDist::Normal;
  if (text == "t7") return CovariateDist::T7;
  throw ValidationError("unknown covariate distribution '" + text + "' (expected normal or t7)");
}

ResponseLink parse_response_link(const std::string& text) {
  if (text == "identity" || text == "X") return ResponseLink::Identity;
  if (text == "exp") return ResponseLink::Exp;
  throw ValidationError("unknown response link '" + text + "' (expected identity or exp)");
}

const std::vector<std::string>& all_sim_estimators() {
  static const std::vector<std::string> names = {"B-N", "BC-N", "B-R", "BC-R", "IPW", "DR"};
  return names;
}

std::vector<int> SimConfig::group_sizes() const {
  std::vector<int> sizes(kGroups);
  for (int w = 0; w < kGroups; ++w) sizes[w] = static_cast<int>(std::lround(n1 * std::pow(gamma, w)));
  return sizes;
}

MatrixXd SimConfig::covariance(int w) const {
  const double diag = w == 0 ? 1.0 : (w == 1 ? sigma2sq : sigma3sq);
  MatrixXd s = MatrixXd::Constant(P, P, lambda);
  s.diagonal().setConstant(diag);
  return s;
}

VectorXd SimConfig::mean(int w) const {
  VectorXd mu = VectorXd::Zero(P);
  for (int c = w; c < P; c += kGroups) mu(c) = b;
  return mu;
}

void SimConfig::check() const {
  if (P < 1 || P % kGroups != 0) throw ValidationError("P must be a positive multiple of 3");
  if (n1 < 2) throw ValidationError("n1 must be at least 2");
  if (!(gamma >= 1.0) || !std::isfinite(gamma)) throw ValidationError("gamma must be >= 1");
  if (!std::isfinite(b)) throw ValidationError("b must be finite");
  if (!(theta >= 0.0) || !std::isfinite(theta)) throw ValidationError("theta must be >= 0");
  if (replications < 1) throw ValidationError("replications must be >= 1");
  if (m < 1 || J < 1 || clusters < 1) throw ValidationError("m, J and the cluster count must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
  if (estimators.empty()) throw ValidationError("no estimators requested");
  std::set<std::string> seen;
  for (const auto& e : estimators) {
    if (std::find(all_sim_estimators().begin(), all_sim_estimators().end(), e) == all_sim_estimators().end()) {
      throw ValidationError("unknown estimator '" + e + "'");
    }
    if (!seen.insert(e).second) throw ValidationError("estimator '" + e + "' listed twice");
  }
  for (int w = 0; w < kGroups; ++w) {
    const MatrixXd s = covariance(w);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(s);
    if (!(eig.eigenvalues().minCoeff() > 0.0)) {
      throw ValidationError("covariance of group " + std::to_string(w + 1) +
                            " is not positive definite (smallest eigenvalue " +
                            format_double(eig.eigenvalues().minCoeff()) + ")");
    }
  }
}

std::string SimConfig::canonical() const {
  std::ostringstream os;
  os << "f=" << to_string(f) << ";g=" << to_string(g) << ";P=" << P << ";b=" << format_double(b)
     << ";gamma=" << format_double(gamma) << ";n1=" << n1 << ";sigma2sq=" << format_double(sigma2sq)
     << ";sigma3sq=" << format_double(sigma3sq) << ";lambda=" << format_double(lambda)
     << ";theta=" << format_double(theta) << ";replications=" << replications << ";seed=" << seed << ";m=" << m
     << ";J=" << J << ";clusters=" << clusters << ";estimators=";
  for (std::size_t a = 0; a < estimators.size(); ++a) os << (a ? "," : "") << estimators[a];
  os << ";standardize_t=" << standardize_t << ";redraw_beta=" << redraw_beta << ";alpha=" << format_double(alpha);
  return os.str();
}

std::string SimConfig::id() const {
  static const char* hex = "0123456789abcdef";
  std::uint64_t h = fnv1a(canonical());
  std::string out(16, '0');
  for (int a = 15; a >= 0; --a) {
    out[a] = hex[h & 0xf];
    h >>= 4;
  }
  return out;
}

std::uint64_t beta_seed(const SimConfig& cfg, int rep) {
  return cfg.redraw_beta ? derive_seed(cfg.seed, static_cast<std::uint64_t>(rep) + 1, 3) : derive_seed(cfg.seed, 0, 3);
}

MatrixXd draw_beta(const SimConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-cfg.theta, cfg.theta);
  MatrixXd beta(cfg.P, kGroups);
  for (int w = 0; w < kGroups; ++w) {
    for (int c = 0; c < cfg.P; ++c) beta(c, w) = cfg.theta > 0.0 ? unif(rng) : 0.0;
  }
  return beta;
}

SimDataset generate_dataset(const SimConfig& cfg, int rep) {
  return generate_dataset(cfg, rep, draw_beta(cfg, beta_seed(cfg, rep)));
}

SimDataset generate_dataset(const SimConfig& cfg, int rep, const MatrixXd& beta) {
  cfg.check();
  if (beta.rows() != cfg.P || beta.cols() != kGroups) throw ValidationError("beta must be P x 3");
  std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(rep) + 1, 1));
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto sizes = cfg.group_sizes();
  int n = 0;
  for (int s : sizes) n += s;

  MatrixXd x(n, cfg.P);
  std::vector<int> treatments(n);
  int row = 0;
  for (int w = 0; w < kGroups; ++w) {
    const MatrixXd chol = cfg.covariance(w).llt().matrixL();
    const VectorXd mu = cfg.mean(w);
    for (int a = 0; a < sizes[w]; ++a, ++row) {
      VectorXd zv(cfg.P);
      for (int c = 0; c < cfg.P; ++c) zv(c) = normal(rng);
      VectorXd draw = chol * zv;
      if (cfg.f == CovariateDist::T7) {
        double chi2 = 0.0;
        for (int d = 0; d < 7; ++d) {
          const double e = normal(rng);
          chi2 += e * e;
        }
        draw /= std::sqrt(chi2 / 7.0);
        if (cfg.standardize_t) draw *= std::sqrt(5.0 / 7.0);
      }
      x.row(row) = (mu + draw).transpose();
      treatments[row] = w;
    }
  }

  const MatrixXd gx = cfg.g == ResponseLink::Exp ? MatrixXd(x.array().exp()) : x;
  const MatrixXd mu = gx * beta;
  MatrixXd potential = mu;
  for (int i = 0; i < n; ++i) {
    for (int w = 0; w < kGroups; ++w) potential(i, w) += normal(rng);
  }
  VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = potential(i, treatments[i]);
  std::vector<std::string> names;
  for (int c = 0; c < cfg.P; ++c) names.push_back("x" + std::to_string(c + 1));
  return {Dataset(std::move(x), std::move(treatments), std::move(y), {"1", "2", "3"}, std::move(names)),
          std::move(potential), mu, beta};
}

VectorXd true_estimands(const MatrixXd& potential, const std::vector<int>& treatments, int t) {
  const int z = static_cast<int>(potential.cols());
  if (static_cast<Eigen::Index>(treatments.size()) != potential.rows()) {
    throw ValidationError("potential-outcome table and treatments differ in length");
  }
  if (t < 0 || t >= z) throw ValidationError("reference treatment out of range");
  VectorXd mean = VectorXd::Zero(z);
  int nt = 0;
  for (std::size_t i = 0; i < treatments.size(); ++i) {
    if (treatments[i] != t) continue;
    mean += potential.row(static_cast<Eigen::Index>(i)).transpose();
    ++nt;
  }
  if (nt == 0) throw ValidationError("reference group is empty");
  mean /= nt;
  return contrasts(mean, all_pairs(z));
}

ReplicationResult run_replication(const SimConfig& cfg, int rep, const MatrixXd& beta) {
  ReplicationResult r;
  const int t = 0;
  try {
    const SimDataset sim = generate_dataset(cfg, rep, beta);
    const Dataset& ds = sim.data;
    const auto pairs = all_pairs(kGroups);
    r.true_tau = true_estimands(sim.potential, ds.treatments(), t);

    const GpsModel gps = fit_gps(ds);
    VectorMatchOptions vopt;
    vopt.clusters = cfg.clusters;
    vopt.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(rep) + 1, 2);
    const MatchResult matches =
        with_within(vector_match(ds, gps, t, cfg.m, vopt), within_group_match(ds, gps, cfg.J));
    const GroupRegression regs = fit_group_regressions(ds);
    const ConditionalVariances sig = sigma2_residual(ds, matches, regs);

    // Conditional bias of the basic estimator, computable because mu_w is known.
    VectorXd cond_bias = VectorXd::Zero(kGroups);
    for (int w = 0; w < kGroups; ++w) {
      if (w == t) continue;
      for (int i : ds.group(t)) {
        double s = 0.0;
        for (int l : matches.cross(i, w)) s += sim.mu(l, w) - sim.mu(i, w);
        cond_bias(w) += s / cfg.m;
      }
      cond_bias(w) /= ds.group_size(t);
    }
    r.true_conditional_bias = contrasts(cond_bias, pairs);

    const int df = structural_rank(pairs);
    const double radius2 = chi2_quantile(1.0 - cfg.alpha, df);
    std::optional<ImputedOutcomes> basic, corrected;
    for (const auto& name : cfg.estimators) {
      if (is_comparator(name)) {
        const ComparatorEstimate ce =
            name == "IPW" ? ipw_att(ds, gps, t, pairs) : dr_att(ds, gps, regs, t, pairs);
        if (name == "IPW") r.ipw_max_weight = ce.max_weight.maxCoeff();
        r.tau_hat.push_back(ce.tau_hat);
        r.se.push_back(ce.se);
        r.region_covered.push_back(kNaN);
        continue;
      }
      const bool bc = name.rfind("BC", 0) == 0;
      const bool new_se = name.back() == 'N';
      std::optional<ImputedOutcomes>& imp = bc ? corrected : basic;
      if (!imp) imp = bc ? impute_bias_corrected(ds, matches, regs) : impute_basic(ds, matches);
      EffectEstimate est = estimate_att(ds, *imp, matches, t, pairs);
      est.estimator = bc ? EstimatorKind::BiasCorrected : EstimatorKind::Basic;
      if (new_se) {
        attach_new_covariance(est, ds, *imp, matches, sig);
      } else {
        attach_randomization_covariance(est, ds, *imp);
      }
      int rank = 0;
      const double z2 = quadratic_form(*est.covariance, est.tau_hat - r.true_tau, {}, &rank, df);
      if (rank != df) throw NumericalError("covariance rank " + std::to_string(rank) + " below " + std::to_string(df));
      r.tau_hat.push_back(est.tau_hat);
      r.se.push_back(est.covariance->diagonal().cwiseSqrt());
      r.region_covered.push_back(z2 <= radius2 ? 1.0 : 0.0);
    }
    r.ok = true;
  } catch (const std::exception& e) {
    r = ReplicationResult{};
    r.error = "replication " + std::to_string(rep) + ": " + e.what();
  }
  return r;
}

const EstimatorMetrics* SimReport::find(const std::string& name) const {
  for (const auto& e : estimators) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

Quantiles quantiles(std::vector<double> values) {
  values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return std::isnan(v); }), values.end());
  if (values.empty()) return {kNaN, kNaN, kNaN};
  std::sort(values.begin(), values.end());
  auto at = [&](double prob) {
    const double h = prob * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  return {at(0.5), at(0.25), at(0.75)};
}

SimReport aggregate(const SimConfig& cfg, const std::vector<ReplicationResult>& reps) {
  SimReport out;
  out.config = cfg;
  out.id = cfg.id();
  out.replications = static_cast<int>(reps.size());
  const int p = kGroups * (kGroups - 1) / 2;
  std::vector<const ReplicationResult*> ok;
  for (const auto& r : reps) {
    if (r.ok) {
      ok.push_back(&r);
    } else {
      ++out.failures;
      if (out.failure_messages.size() < kKeptFailureMessages) out.failure_messages.push_back(r.error);
    }
  }
  out.completed = static_cast<int>(ok.size());
  out.failure_limit_exceeded = out.failures > 0.05 * out.replications;
  out.true_tau_mean = VectorXd::Constant(p, kNaN);
  out.true_conditional_bias = VectorXd::Constant(p, kNaN);
  const double nok = static_cast<double>(ok.size());
  if (!ok.empty()) {
    out.true_tau_mean.setZero();
    out.true_conditional_bias.setZero();
    for (const auto* r : ok) {
      out.true_tau_mean += r->true_tau / nok;
      out.true_conditional_bias += r->true_conditional_bias / nok;
      out.ipw_max_weight = std::max(out.ipw_max_weight, r->ipw_max_weight);
    }
  }

  const double zq = bonferroni_quantile(cfg.alpha, p);
  for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
    EstimatorMetrics em;
    em.name = cfg.estimators[e];
    em.replications = out.completed;
    em.interval_coverage = VectorXd::Constant(p, kNaN);
    em.bias = VectorXd::Constant(p, kNaN);
    em.median_abs_error = VectorXd::Constant(p, kNaN);
    em.se_mean = VectorXd::Constant(p, kNaN);
    em.empirical_sd = VectorXd::Constant(p, kNaN);
    em.region_coverage = em.interval_coverage_mean = em.abs_bias = em.width = em.se_ratio = kNaN;
    if (!ok.empty()) {
      double region = 0.0;
      bool region_defined = true;
      em.interval_coverage.setZero();
      em.bias.setZero();
      em.se_mean.setZero();
      VectorXd mean_tau = VectorXd::Zero(p);
      double width = 0.0;
      for (const auto* r : ok) {
        if (std::isnan(r->region_covered[e])) region_defined = false; else region += r->region_covered[e];
        const VectorXd err = r->tau_hat[e] - r->true_tau;
        for (int q = 0; q < p; ++q) {
          if (std::abs(err(q)) <= zq * r->se[e](q)) em.interval_coverage(q) += 1.0;
        }
        em.bias += err;
        em.se_mean += r->se[e];
        mean_tau += r->tau_hat[e];
        width += 2.0 * zq * r->se[e].mean();
      }
      em.region_coverage = region_defined ? region / nok : kNaN;
      em.interval_coverage /= nok;
      em.interval_coverage_mean = em.interval_coverage.mean();
      em.bias /= nok;
      em.abs_bias = em.bias.cwiseAbs().mean();
      em.se_mean /= nok;
      mean_tau /= nok;
      em.width = width / nok;
      for (int q = 0; q < p; ++q) {
        std::vector<double> abs_err;
        for (const auto* r : ok) abs_err.push_back(std::abs(r->tau_hat[e](q) - r->true_tau(q)));
        em.median_abs_error(q) = quantiles(abs_err).median;
      }
      if (ok.size() >= 2) {
        VectorXd ss = VectorXd::Zero(p);
        for (const auto* r : ok) ss += (r->tau_hat[e] - mean_tau).cwiseAbs2();
        em.empirical_sd = (ss / (nok - 1.0)).cwiseSqrt();
        double ratio = 0.0;
        bool defined = true;
        for (int q = 0; q < p; ++q) {
          if (!(em.empirical_sd(q) > 0.0)) defined = false; else ratio += em.se_mean(q) / em.empirical_sd(q);
        }
        em.se_ratio = defined ? ratio / p : kNaN;
      }
    }
    out.estimators.push_back(std::move(em));
  }
  return out;
}

SimReport run_cell(const SimConfig& cfg, const RunOptions& options) {
  cfg.check();
  if (options.workers < 1) throw ValidationError("workers must be >= 1");
  std::vector<ReplicationResult> reps(cfg.replications);
  const MatrixXd shared_beta = draw_beta(cfg, beta_seed(cfg, 0));
  auto one = [&](int rep) {
    reps[rep] = run_replication(cfg, rep, cfg.redraw_beta ? draw_beta(cfg, beta_seed(cfg, rep)) : shared_beta);
  };
  const int workers = std::min(options.workers, cfg.replications);
  if (workers == 1) {
    for (int rep = 0; rep < cfg.replications; ++rep) one(rep);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int rep = next++; rep < cfg.replications; rep = next++) one(rep);
      });
    }
    for (auto& th : pool) th.join();
  }
  return aggregate(cfg, reps);
}

std::vector<SimReport> run_factorial(const std::vector<SimConfig>& grid, const RunOptions& options,
                                     const std::vector<std::string>& skip, const CellCallback& done,
                                     std::optional<int> stop_after) {
  if (grid.empty()) throw ValidationError("empty simulation grid");
  std::set<std::string> ids;
  for (const auto& cfg : grid) {
    cfg.check();
    if (!ids.insert(cfg.id()).second) throw ValidationError("duplicate cell identifier " + cfg.id());
  }
  const std::set<std::string> skipped(skip.begin(), skip.end());
  std::vector<SimReport> out;
  int computed = 0;
  for (const auto& cfg : grid) {
    if (skipped.count(cfg.id())) continue;
    if (stop_after && computed >= *stop_after) break;
    out.push_back(run_cell(cfg, options));
    ++computed;
    if (done) done(out.back());
  }
  return out;
}

}  // namespace mtmatch
