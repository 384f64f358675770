#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "dmfa/kmeans.hpp"

namespace dmfa::test {

Architecture random_arch(Rng &rng, int max_d, int max_layers, int max_paths) {
  std::uniform_int_distribution<int> layers_dist(1, max_layers);
  for (;;) {
    Architecture arch;
    const int layers = layers_dist(rng);
    arch.dims.push_back(std::uniform_int_distribution<int>(1, max_d)(rng));
    for (int l = 0; l < layers; ++l)
      arch.dims.push_back(std::uniform_int_distribution<int>(1, std::max(1, arch.dims.back()))(rng));
    std::size_t paths = 1;
    for (int l = 0; l < layers; ++l) {
      const int k = std::uniform_int_distribution<int>(1, 3)(rng);
      arch.components.push_back(k);
      paths *= static_cast<std::size_t>(k);
    }
    if (paths <= static_cast<std::size_t>(max_paths)) return arch;
  }
}

std::vector<Eigen::Index> all_rows(Eigen::Index n) {
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  return rows;
}

void cavi_sweep(Problem &p, bool soft) {
  const auto rows = all_rows(p.data.rows());
  local_step(p.arch, p.state.global, p.data.y, rows, p.state.local);
  if (soft) update_local_categorical(p.arch, p.state.global, p.data.y, rows, p.state.local);
  const auto stats = accumulate_stats(p.arch, p.data.y, p.state.local, rows, 1.0);
  for (const auto &group : update_groups(p.arch)) {
    std::vector<Eigen::VectorXd> targets;
    for (const auto &id : group) targets.push_back(cavi_target(p.arch, id, p.prior, p.state.global, stats));
    for (std::size_t i = 0; i < group.size(); ++i) set_factor(p.state.global, group[i], targets[i]);
  }
}

Problem random_problem(std::uint64_t seed, int max_n, int max_d, int max_paths, int sweeps) {
  Rng rng(seed);
  Problem p;
  p.arch = random_arch(rng, max_d, 2, max_paths);
  const int lo = std::max(2, p.arch.components[0]);
  const auto n = std::uniform_int_distribution<int>(std::min(lo + 8, max_n), max_n)(rng);
  const auto params = random_params(p.arch, rng);
  p.data = sample_dataset(p.arch, params, n, seed + 17).data;
  p.prior = PriorHyperparams::defaults(p.arch);
  p.state = init_variational(p.arch, p.data, p.prior, seed);
  for (int s = 0; s < sweeps; ++s) cavi_sweep(p);
  return p;
}

Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd &)> &f, const Eigen::VectorXd &x,
                                   double h) {
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd up = x;
    Eigen::VectorXd down = x;
    up[i] += h;
    down[i] -= h;
    out[i] = (f(up) - f(down)) / (2.0 * h);
  }
  return out;
}

Eigen::VectorXd richardson_difference(const std::function<double(const Eigen::VectorXd &)> &f, const Eigen::VectorXd &x,
                                      double h) {
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double step = h * std::max(std::abs(x[i]), 1e-3);
    auto diff = [&](double s) {
      Eigen::VectorXd up = x;
      Eigen::VectorXd down = x;
      up[i] += s;
      down[i] -= s;
      return (f(up) - f(down)) / (2.0 * s);
    };
    out[i] = (4.0 * diff(0.5 * step) - diff(step)) / 3.0;
  }
  return out;
}

double relative_error(const Eigen::VectorXd &a, const Eigen::VectorXd &b, double floor) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

PartitionLabels random_partition(Rng &rng, int n, int max_k) {
  std::uniform_int_distribution<int> k_dist(1, max_k);
  const int k = k_dist(rng);
  std::uniform_int_distribution<int> label(1, k);
  PartitionLabels out(static_cast<std::size_t>(n));
  for (auto &v : out) v = label(rng);
  return out;
}

namespace {

std::vector<int> distinct(const PartitionLabels &x) {
  std::set<int> s(x.begin(), x.end());
  return {s.begin(), s.end()};
}

bool identical_partitions(const PartitionLabels &a, const PartitionLabels &b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j)
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
  return true;
}

double mutual_information(const PartitionLabels &a, const PartitionLabels &b) {
  const double n = static_cast<double>(a.size());
  std::map<int, double> ca;
  std::map<int, double> cb;
  std::map<std::pair<int, int>, double> cab;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ca[a[i]] += 1.0;
    cb[b[i]] += 1.0;
    cab[{a[i], b[i]}] += 1.0;
  }
  double mi = 0.0;
  for (const auto &[key, c] : cab) mi += c / n * std::log(n * c / (ca[key.first] * cb[key.second]));
  return mi;
}

double entropy_of(const PartitionLabels &a) {
  const double n = static_cast<double>(a.size());
  std::map<int, double> c;
  for (int v : a) c[v] += 1.0;
  double h = 0.0;
  for (const auto &[k, m] : c) h -= m / n * std::log(m / n);
  return h;
}

double log_choose(double n, double k) { return std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1); }

} // namespace

double brute_force_ari(const PartitionLabels &a, const PartitionLabels &b) {
  // count pairs directly
  double both = 0.0;
  double in_a = 0.0;
  double in_b = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const bool sa = a[i] == a[j];
      const bool sb = b[i] == b[j];
      both += sa && sb ? 1.0 : 0.0;
      in_a += sa ? 1.0 : 0.0;
      in_b += sb ? 1.0 : 0.0;
      pairs += 1.0;
    }
  const double expected = pairs > 0.0 ? in_a * in_b / pairs : 0.0;
  const double denom = 0.5 * (in_a + in_b) - expected;
  if (denom == 0.0) return identical_partitions(a, b) ? 1.0 : 0.0;
  return (both - expected) / denom;
}

double brute_force_mr(const PartitionLabels &pred, const PartitionLabels &truth) {
  // try every injective relabeling of the predicted clusters
  const auto p = distinct(pred);
  const auto t = distinct(truth);
  const std::size_t m = std::max(p.size(), t.size());
  std::vector<int> targets(m, -1);
  for (std::size_t j = 0; j < t.size(); ++j) targets[j] = t[j];
  std::sort(targets.begin(), targets.end());
  std::size_t best = 0;
  do {
    std::map<int, int> map;
    for (std::size_t i = 0; i < p.size(); ++i) map[p[i]] = targets[i];
    std::size_t agree = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) agree += map[pred[i]] == truth[i] ? 1 : 0;
    best = std::max(best, agree);
  } while (std::next_permutation(targets.begin(), targets.end()));
  return 1.0 - static_cast<double>(best) / static_cast<double>(pred.size());
}

double brute_force_emi(const PartitionLabels &a, const PartitionLabels &b) {
  // expectation of MI over the hypergeometric law of each cell count
  const double n = static_cast<double>(a.size());
  std::map<int, double> ca;
  std::map<int, double> cb;
  for (int v : a) ca[v] += 1.0;
  for (int v : b) cb[v] += 1.0;
  double emi = 0.0;
  for (const auto &[ka, ai] : ca)
    for (const auto &[kb, bj] : cb)
      for (double nij = std::max(1.0, ai + bj - n); nij <= std::min(ai, bj); nij += 1.0) {
        const double logp = log_choose(ai, nij) + log_choose(n - ai, bj - nij) - log_choose(n, bj);
        emi += std::exp(logp) * nij / n * std::log(n * nij / (ai * bj));
      }
  return emi;
}

double brute_force_ami(const PartitionLabels &a, const PartitionLabels &b) {
  const double emi = brute_force_emi(a, b);
  const double denom = 0.5 * (entropy_of(a) + entropy_of(b)) - emi;
  if (std::abs(denom) < 1e-15) return identical_partitions(a, b) ? 1.0 : 0.0;
  return (mutual_information(a, b) - emi) / denom;
}

PartitionLabels diagonal_gmm_labels(const Eigen::MatrixXd &y, int k, std::uint64_t seed, int restarts,
                                    int iterations) {
  const Eigen::Index n = y.rows();
  const Eigen::Index d = y.cols();
  const double floor = 1e-6 * std::max(1e-12, (y.rowwise() - y.colwise().mean()).array().square().mean());
  Rng rng(seed);
  PartitionLabels best_labels;
  double best_loglik = -std::numeric_limits<double>::infinity();
  Eigen::MatrixXd logp(n, k);
  for (int r = 0; r < restarts; ++r) {
    const auto km = kmeans(y, k, rng);
    Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(n, k);
    for (Eigen::Index i = 0; i < n; ++i) resp(i, km.labels[static_cast<std::size_t>(i)]) = 1.0;
    double loglik = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < iterations; ++it) {
      // M step
      const Eigen::VectorXd counts = resp.colwise().sum().transpose().cwiseMax(1e-10);
      const Eigen::MatrixXd means = (resp.transpose() * y).array().colwise() / counts.array();
      const Eigen::MatrixXd second = (resp.transpose() * y.array().square().matrix()).array().colwise() / counts.array();
      const Eigen::MatrixXd vars = (second.array() - means.array().square()).cwiseMax(floor);
      const Eigen::VectorXd weights = counts / counts.sum();
      // E step
      for (int c = 0; c < k; ++c) {
        const double norm = std::log(weights[c]) - 0.5 * (static_cast<double>(d) * std::log(2.0 * M_PI) +
                                                          vars.row(c).array().log().sum());
        const Eigen::RowVectorXd inv = vars.row(c).cwiseInverse();
        logp.col(c) = norm - 0.5 * ((y.rowwise() - means.row(c)).array().square().rowwise() * inv.array())
                                        .rowwise()
                                        .sum();
      }
      const Eigen::VectorXd top = logp.rowwise().maxCoeff();
      const Eigen::MatrixXd shifted = (logp.colwise() - top).array().exp();
      const Eigen::VectorXd total = shifted.rowwise().sum();
      resp = shifted.array().colwise() / total.array();
      const double next = (top.array() + total.array().log()).sum();
      const bool done = std::abs(next - loglik) < 1e-8 * std::abs(next);
      loglik = next;
      if (done) break;
    }
    if (loglik > best_loglik) {
      best_loglik = loglik;
      best_labels.assign(static_cast<std::size_t>(n), 1);
      for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index arg = 0;
        resp.row(i).maxCoeff(&arg);
        best_labels[static_cast<std::size_t>(i)] = static_cast<int>(arg) + 1;
      }
    }
  }
  return best_labels;
}

void randomize_globals(const Architecture &arch, GlobalFactors &g, Rng &rng) {
  std::uniform_real_distribution<double> pos(0.6, 3.0);
  std::normal_distribution<double> normal;
  for (const auto &id : enumerate_factors(arch)) {
    Eigen::VectorXd v = get_factor(g, id);
    switch (family_of(id.kind)) {
    case Family::Gaussian: v << normal(rng), 0.1 + 0.5 * pos(rng); break;
    case Family::InverseGamma:
    case Family::Gamma: v << pos(rng), pos(rng); break;
    case Family::Dirichlet:
      for (auto &a : v) a = pos(rng);
      break;
    }
    set_factor(g, id, v);
  }
}

void randomize_locals(LocalFactors &local, Rng &rng) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  for (std::size_t l = 0; l < local.z_mean.size(); ++l) {
    local.z_mean[l] = local.z_mean[l].unaryExpr([&](double) { return normal(rng); });
    local.z_var[l] = local.z_var[l].unaryExpr([&](double) { return unit(rng); });
    auto &r = local.resp[l];
    r = r.unaryExpr([&](double) { return unit(rng); });
    for (Eigen::Index i = 0; i < r.rows(); ++i) r.row(i) /= r.row(i).sum();
  }
}

ScalarCase scalar_case(std::uint64_t seed, int k) {
  Rng rng(seed);
  ScalarCase s;
  s.arch = Architecture{{1, 1}, {k}};
  s.data.y = Eigen::Vector3d(0.4, -1.1, 1.7);
  s.prior = PriorHyperparams::defaults(s.arch);
  s.state = {GlobalFactors::placeholder(s.arch), LocalFactors::zeros(s.arch, 3)};
  randomize_globals(s.arch, s.state.global, rng);
  randomize_locals(s.state.local, rng);
  return s;
}

namespace {

// Natural parameters written out by hand for each family.
Eigen::VectorXd gaussian_nat(double m, double v) { return Eigen::Vector2d(m / v, -0.5 / v); }
Eigen::VectorXd inv_gamma_nat(double a, double b) { return Eigen::Vector2d(-a - 1.0, -b); }
Eigen::VectorXd gamma_nat(double a, double b) { return Eigen::Vector2d(a - 1.0, -b); }

} // namespace

// exp(E[log complete conditional]) of each factor of the scalar one-component model, derived by hand.
Eigen::VectorXd symbolic_conditional(const ScalarCase &s, FactorKind kind) {
  const auto &c = s.state.global.layers[0].components[0];
  const double big_g = s.prior.mean_scale[0];
  const double nu = s.prior.global_scale[0];
  const double a_scale = s.prior.noise_scale[0];
  const double mu = c.mean.mean(0, 0);
  const double mu2 = mu * mu + c.mean.var(0, 0);
  const double b = c.loading.mean(0, 0);
  const double b2 = b * b + c.loading.var(0, 0);
  const double inv_delta = c.noise.shape(0, 0) / c.noise.scale(0, 0);
  const double inv_psi = c.noise_aux.shape(0, 0) / c.noise_aux.scale(0, 0);
  const double inv_g = c.mean_scale.shape(0, 0) / c.mean_scale.scale(0, 0);
  const double inv_tau = c.global_shrink.shape(0, 0) / c.global_shrink.scale(0, 0);
  const double inv_xi = c.global_shrink_aux.shape(0, 0) / c.global_shrink_aux.scale(0, 0);
  const double e_h = c.local_shrink.shape(0, 0) / c.local_shrink.rate(0, 0);
  const double e_c = c.local_shrink_aux.shape(0, 0) / c.local_shrink_aux.rate(0, 0);

  double s0 = 0, sy = 0, syy = 0, sz = 0, szz = 0, syz = 0;
  for (Eigen::Index i = 0; i < 3; ++i) {
    const double r = s.state.local.resp[0](i, 0);
    const double y = s.data.y(i, 0);
    const double z = s.state.local.z_mean[0](i, 0);
    const double zv = s.state.local.z_var[0](i, 0);
    s0 += r;
    sy += r * y;
    syy += r * y * y;
    sz += r * z;
    szz += r * (z * z + zv);
    syz += r * y * z;
  }
  switch (kind) {
  case FactorKind::Mean: {
    const double prec = inv_g / big_g + inv_delta * s0;
    return Eigen::Vector2d(inv_delta * (sy - b * sz), -0.5 * prec);
  }
  case FactorKind::Loading: {
    const double prec = e_h * inv_tau + inv_delta * szz;
    return Eigen::Vector2d(inv_delta * (syz - mu * sz), -0.5 * prec);
  }
  case FactorKind::Noise: {
    const double resid = syy - 2 * mu * sy - 2 * b * syz + s0 * mu2 + 2 * mu * b * sz + b2 * szz;
    return inv_gamma_nat(0.5 + 0.5 * s0, inv_psi + 0.5 * resid);
  }
  case FactorKind::NoiseAux: return inv_gamma_nat(1.0, inv_delta + 1.0 / (a_scale * a_scale));
  case FactorKind::MeanScale: return inv_gamma_nat(1.0, 0.5 + mu2 / (2.0 * big_g));
  case FactorKind::GlobalShrink: return inv_gamma_nat(1.0, inv_xi + 0.5 * e_h * b2);
  case FactorKind::GlobalShrinkAux: return inv_gamma_nat(1.0, inv_tau + 1.0 / (nu * nu));
  case FactorKind::LocalShrink: return gamma_nat(1.0, e_c + 0.5 * b2 * inv_tau);
  case FactorKind::LocalShrinkAux: return gamma_nat(1.0, 1.0 + e_h);
  case FactorKind::Weights: break;
  }
  throw Error("no scalar oracle for this kind");
}



std::filesystem::path fresh_dir(const std::string &name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dmfa_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

} // namespace dmfa::test
