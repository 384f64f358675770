// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "dmfa/checkpoint.hpp"
#include "dmfa/scenarios.hpp"
#include "dmfa/selection.hpp"
#include "support.hpp"

using namespace dmfa;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 3) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

void global_sweep(test::Problem &p, const SufficientStats &stats) {
  for (const auto &group : update_groups(p.arch)) {
    std::vector<Eigen::VectorXd> targets;
    for (const auto &id : group) targets.push_back(cavi_target(p.arch, id, p.prior, p.state.global, stats));
    for (std::size_t i = 0; i < group.size(); ++i) set_factor(p.state.global, group[i], targets[i]);
  }
}

Verdict conjugacy() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto s = test::scalar_case(seed);
    for (std::size_t k = 0; k + 1 < kFactorKindCount; ++k) {
      const auto kind = static_cast<FactorKind>(k);
      const auto id = test::scalar_id(kind);
      const auto got = to_natural(family_of(kind), update_global_factor(s.arch, id, s.data, s.prior, s.state.global,
                                                                         s.state.local));
      worst = std::max(worst, test::relative_error(got, test::symbolic_conditional(s, kind)));
    }
    // Dirichlet on two components: rho + sum of responsibilities
    const auto two = test::scalar_case(seed, 2);
    const auto alpha = update_global_factor(two.arch, {0, FactorKind::Weights, 0, 0, 0}, two.data, two.prior,
                                            two.state.global, two.state.local);
    const Eigen::VectorXd want = two.prior.concentration[0] + two.state.local.resp[0].colwise().sum().transpose();
    worst = std::max(worst, test::relative_error(to_natural(Family::Dirichlet, alpha),
                                                 to_natural(Family::Dirichlet, want)));
  }
  return {worst < 1e-10, "max relative error " + fmt(worst)};
}

Verdict cavi_monotone() {
  double worst = 0.0;
  std::size_t updates = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    auto p = test::random_problem(seed, 50, 5, 6, 0);
    update_local_categorical(p.arch, p.state.global, p.data.y, test::all_rows(p.data.rows()), p.state.local);
    double before = elbo(p.arch, p.data, p.prior, p.state.global, p.state.local).total;
    for (const auto &id : enumerate_factors(p.arch)) {
      set_factor(p.state.global, id,
                 update_global_factor(p.arch, id, p.data, p.prior, p.state.global, p.state.local));
      const double after = elbo(p.arch, p.data, p.prior, p.state.global, p.state.local).total;
      worst = std::max(worst, (before - after) / std::abs(before));
      before = after;
      ++updates;
    }
  }
  return {worst <= 1e-8, std::to_string(updates) + " updates, largest relative decrease " + fmt(worst)};
}

Verdict gradient_check() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto p = test::random_problem(seed + 1000, 30, 3, 4, 0);
    Rng rng(seed);
    test::randomize_globals(p.arch, p.state.global, rng);
    const auto stats = accumulate_stats(p.arch, p.data.y, p.state.local, {}, 1.0);
    for (const auto &id : enumerate_factors(p.arch)) {
      const Family family = family_of(id.kind);
      const Eigen::VectorXd u0 = to_unconstrained(family, get_factor(p.state.global, id));
      auto f = [&](const Eigen::VectorXd &u) {
        auto g = p.state.global;
        set_factor(g, id, from_unconstrained(family, u));
        return elbo(p.arch, p.data, p.prior, g, p.state.local).total;
      };
      const Eigen::VectorXd fd = test::central_difference(f, u0, 1e-5);
      const Eigen::VectorXd an = elbo_gradient_unconstrained(p.arch, id, p.prior, p.state.global, stats);
      worst = std::max(worst, test::relative_error(an, fd, 1e-3));
    }
  }
  return {worst < 1e-5, "max relative error " + fmt(worst)};
}

Verdict natural_gradient() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto p = test::random_problem(seed + 2000, 25, 3, 4, 2);
    const auto rows = test::all_rows(p.data.rows());
    const auto grad = estimate_gradient(p.arch, p.data, p.prior, p.state.global, p.state.local, rows);
    for (std::size_t f = 0; f < grad.ids.size(); ++f) {
      const auto &id = grad.ids[f];
      const Family family = family_of(id.kind);
      if (family == Family::Dirichlet && p.arch.components[static_cast<std::size_t>(id.layer)] == 1) continue;
      const Eigen::VectorXd x0 = get_factor(p.state.global, id);
      auto value = [&](const Eigen::VectorXd &x) {
        auto g = p.state.global;
        set_factor(g, id, x);
        return elbo(p.arch, p.data, p.prior, g, p.state.local).total;
      };
      const Eigen::VectorXd lhs =
          fisher_block(p.state.global, id).ldlt().solve(test::richardson_difference(value, x0, 1e-3));
      const Eigen::VectorXd rhs = natural_to_stored_jacobian(family, x0) * grad.increments[f];
      worst = std::max(worst, test::relative_error(lhs, rhs, 1e-3));
    }
  }
  double largest = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto p = test::random_problem(seed + 2100, 30, 3, 4, 3);
    const auto rows = test::all_rows(p.data.rows());
    const auto stats = accumulate_stats(p.arch, p.data.y, p.state.local, rows, 1.0);
    for (int sweep = 0; sweep < 20000; ++sweep) {
      global_sweep(p, stats);
      if (sweep % 100 == 0 &&
          estimate_gradient(p.arch, p.data, p.prior, p.state.global, p.state.local, rows).max_abs() < 1e-11)
        break;
    }
    largest = std::max(largest,
                       estimate_gradient(p.arch, p.data, p.prior, p.state.global, p.state.local, rows).max_abs());
  }
  return {worst < 1e-5 && largest < 1e-8,
          "identity error " + fmt(worst) + ", gradient at fixed points " + fmt(largest)};
}

Verdict unbiased() {
  test::Problem p;
  Rng rng(5);
  std::normal_distribution<double> normal;
  p.arch = Architecture{{3, 1, 1}, {2, 2}};
  p.data.y = Eigen::MatrixXd::NullaryExpr(6, 3, [&] { return normal(rng); });
  p.prior = PriorHyperparams::defaults(p.arch);
  p.state = init_variational(p.arch, p.data, p.prior, 2);
  const auto rows = test::all_rows(6);
  local_step(p.arch, p.state.global, p.data.y, rows, p.state.local);
  update_local_categorical(p.arch, p.state.global, p.data.y, rows, p.state.local);
  const auto full = estimate_gradient(p.arch, p.data, p.prior, p.state.global, p.state.local, rows);
  std::vector<Eigen::VectorXd> sum;
  for (const auto &v : full.increments) sum.push_back(Eigen::VectorXd::Zero(v.size()));
  int batches = 0;
  for (Eigen::Index i = 0; i < 6; ++i)
    for (Eigen::Index j = i + 1; j < 6; ++j, ++batches) {
      const auto g = estimate_gradient(p.arch, p.data, p.prior, p.state.global, p.state.local,
                                       std::vector<Eigen::Index>{i, j});
      for (std::size_t f = 0; f < sum.size(); ++f) sum[f] += g.increments[f];
    }
  double worst = 0.0;
  for (std::size_t f = 0; f < sum.size(); ++f)
    worst = std::max(worst, (sum[f] / batches - full.increments[f]).cwiseAbs().maxCoeff() /
                                std::max(1.0, full.increments[f].cwiseAbs().maxCoeff()));
  return {batches == 15 && worst < 1e-10, std::to_string(batches) + " batches, max error " + fmt(worst)};
}

Verdict collapsed_moments() {
  double worst = 0.0;
  Rng rng(6);
  for (int m = 0; m < 20; ++m) {
    const auto arch = test::random_arch(rng, 4, 3, 12);
    const auto params = random_params(arch, rng);
    const auto comps = collapse_to_gmm(arch, params);
    const Eigen::Index d = arch.observed_dim();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd second = Eigen::MatrixXd::Zero(d, d);
    for (const auto &c : comps) {
      mean += c.weight * c.mean;
      second += c.weight * (c.cov + c.mean * c.mean.transpose());
    }
    const Eigen::MatrixXd cov = second - mean * mean.transpose();
    const auto y = sample_dataset(arch, params, 200000, 100 + m).data.y;
    const Eigen::MatrixXd centered = y.rowwise() - y.colwise().mean();
    const Eigen::MatrixXd mc = centered.transpose() * centered / static_cast<double>(y.rows() - 1);
    worst = std::max(worst, (mc - cov).norm() / cov.norm());
  }
  return {worst < 0.02, "max relative Frobenius error " + fmt(worst)};
}

Verdict metric_oracles() {
  Rng rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 5000; ++trial) {
    const int n = 1 + trial % 10;
    const auto a = test::random_partition(rng, n, 6);
    const auto b = test::random_partition(rng, n, 6);
    worst = std::max(worst, std::abs(adjusted_rand_index(a, b) - test::brute_force_ari(a, b)));
    worst = std::max(worst, std::abs(misclassification_rate(a, b) - test::brute_force_mr(a, b)));
    worst = std::max(worst, std::abs(adjusted_mutual_information(a, b) - test::brute_force_ami(a, b)));
  }
  const PartitionLabels x{1, 1, 2, 2};
  const PartitionLabels y{1, 2, 1, 2};
  const bool fixed = std::abs(misclassification_rate(x, y) - 0.5) < 1e-15 &&
                     std::abs(adjusted_rand_index(x, y) + 0.5) < 1e-15 && adjusted_rand_index(x, x) == 1.0 &&
                     std::abs(adjusted_rand_index(PartitionLabels(6, 1), {1, 1, 2, 2, 3, 3})) < 1e-15;
  return {worst < 1e-9 && fixed, "max deviation from brute force " + fmt(worst)};
}

PartitionLabels first_layer_labels(const Dataset &data, const Architecture &arch, const FitResult &r) {
  return assign_clusters(data, arch, r.summary);
}

Verdict clustering_recovery() {
  const auto arch = parse_architecture("K=5,1;D=5,2", 50);
  std::vector<double> ours;
  std::vector<double> baseline;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto spec = builtin_scenario("s1");
    spec.seed = seed;
    const auto data = generate_scenario(spec);
    FitConfig c;
    c.max_iterations = 600;
    c.seed = seed;
    const auto r = fit(data, arch, PriorHyperparams::defaults(arch), c);
    ours.push_back(adjusted_rand_index(first_layer_labels(data, arch, r), *data.labels));
    baseline.push_back(adjusted_rand_index(test::diagonal_gmm_labels(data.y, 5, seed), *data.labels));
  }
  const double m = median(ours);
  const double b = median(baseline);
  return {m >= 0.8 && m > b, "median ARI " + fmt(m) + " vs diagonal GMM " + fmt(b)};
}

Verdict pruning() {
  const auto arch = parse_architecture("K=8,1;D=3,1", 50);
  auto spec = load_scenario(std::filesystem::path(DMFA_SCENARIO_DIR) / "s1-three-clusters.json");
  int hits = 0;
  std::string counts;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    spec.seed = seed;
    const auto data = generate_scenario(spec);
    FitConfig c;
    c.max_iterations = 1000;
    c.seed = seed;
    const auto r = fit(data, arch, PriorHyperparams::defaults(arch, true), c);
    const auto report = prune_components(arch, r.state.global, 0.01);
    const auto kept = report.layers[0].kept.size();
    hits += kept == 3 ? 1 : 0;
    counts += (counts.empty() ? "" : ",") + std::to_string(kept);
  }
  return {hits >= 7, std::to_string(hits) + "/10 seeds keep exactly 3 (kept: " + counts + ")"};
}

Verdict architecture_scoring() {
  const auto truth = parse_architecture("K=3,1;D=4,1", 17);
  const auto archs = enumerate_architectures(17, {2}, {truth.components});
  int hits = 0;
  std::string ranks;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const auto data = sample_dataset(truth, random_params(truth, rng), 1000, seed).data;
    ScoreOptions o;
    o.config.seed = seed * 100;
    const auto scored = score_candidates(data, archs, o, 1);
    const auto &mine = *std::find_if(scored.begin(), scored.end(), [&](const auto &c) { return c.arch == truth; });
    const auto better = std::count_if(scored.begin(), scored.end(), [&](const auto &c) {
      return c.status == CandidateStatus::Scored && c.score > mine.score;
    });
    const int rank = mine.status == CandidateStatus::Scored ? static_cast<int>(better) + 1 : 13;
    hits += rank <= 3 ? 1 : 0;
    ranks += (ranks.empty() ? "" : ",") + std::to_string(rank);
  }
  return {archs.size() == 12 && hits >= 7,
          std::to_string(hits) + "/10 seeds rank the truth in the top 3 of " + std::to_string(archs.size()) +
              " (ranks: " + ranks + ")"};
}

Verdict batch_rule() {
  const FitConfig c;
  const bool ok = batch_size(5, c) == 1 && batch_size(100, c) == 5 && batch_size(1000000, c) == 1024;
  return {ok, "|A| = " + std::to_string(batch_size(5, c)) + ", " + std::to_string(batch_size(100, c)) + ", " +
                  std::to_string(batch_size(1000000, c))};
}

Verdict determinism() {
  auto spec = builtin_scenario("s2");
  spec.n = 400;
  const auto data = generate_scenario(spec);
  const auto arch = parse_architecture("K=4,1;D=4,1", 17);
  const auto prior = PriorHyperparams::defaults(arch);
  FitConfig c;
  c.max_iterations = 120;
  c.seed = 77;
  const auto a = fit(data, arch, prior, c);
  const auto b = fit(data, arch, prior, c);
  const bool traces = trace_to_csv(a.trace) == trace_to_csv(b.trace);
  const bool ckpts = checkpoint_to_string(make_checkpoint(arch, prior, c, a)) ==
                     checkpoint_to_string(make_checkpoint(arch, prior, c, b));
  ScoreOptions o;
  o.config.seed = 5;
  const auto archs = enumerate_architectures(17, {1}, {{4}});
  const auto one = selection_report_csv(score_candidates(data, archs, o, 1));
  const auto four = selection_report_csv(score_candidates(data, archs, o, 4));
  return {traces && ckpts && one == four, std::string("traces ") + (traces ? "equal" : "differ") + ", checkpoints " +
                                              (ckpts ? "equal" : "differ") + ", jobs 1 vs 4 " +
                                              (one == four ? "equal" : "differ")};
}

} // namespace

int main(int argc, char **argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"conjugacy suite", conjugacy},
      {"CAVI monotonicity", cavi_monotone},
      {"gradient check", gradient_check},
      {"natural-gradient identity", natural_gradient},
      {"minibatch unbiasedness", unbiased},
      {"collapsed-GMM moments", collapsed_moments},
      {"metric oracles", metric_oracles},
      {"clustering recovery", clustering_recovery},
      {"overfitted pruning", pruning},
      {"architecture scoring", architecture_scoring},
      {"minibatch-size rule", batch_rule},
      {"determinism", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(number)) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception &e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %2d %-26s %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", number, criteria[i].first.c_str(),
                v.detail.c_str(), secs);
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
