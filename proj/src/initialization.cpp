#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "dmfa/kmeans.hpp"
#include "dmfa/variational.hpp"

namespace dmfa {

namespace {

Eigen::VectorXd squared_distances(const Eigen::MatrixXd &x, const Eigen::RowVectorXd &c) {
  return (x.rowwise() - c).rowwise().squaredNorm();
}

double uniform01(Rng &rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

} // namespace

KMeansResult kmeans(const Eigen::MatrixXd &x, int k, Rng &rng, int max_iterations) {
  const Eigen::Index n = x.rows();
  if (k < 1 || n < 1) throw Error("kmeans: need k >= 1 and at least one row");
  KMeansResult out;
  out.centers.resize(k, x.cols());
  out.labels.assign(static_cast<std::size_t>(n), 0);

  // k-means++ seeding
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  out.centers.row(0) = x.row(first(rng));
  Eigen::VectorXd best = squared_distances(x, out.centers.row(0));
  for (int c = 1; c < k; ++c) {
    const double total = best.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = uniform01(rng) * total;
      for (pick = 0; pick < n - 1; ++pick) {
        u -= best[pick];
        if (u < 0.0) break;
      }
    } else {
      pick = first(rng);
    }
    out.centers.row(c) = x.row(pick);
    best = best.cwiseMin(squared_distances(x, out.centers.row(c)));
  }

  Eigen::MatrixXd dist(n, k);
  for (int it = 0; it < max_iterations; ++it) {
    for (int c = 0; c < k; ++c) dist.col(c) = squared_distances(x, out.centers.row(c));
    bool changed = it == 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index arg = 0;
      dist.row(i).minCoeff(&arg);
      if (out.labels[i] != static_cast<int>(arg)) {
        out.labels[i] = static_cast<int>(arg);
        changed = true;
      }
    }
    if (!changed) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(out.labels[i]) += x.row(i);
      ++counts[out.labels[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        out.centers.row(c) = sums.row(c) / static_cast<double>(counts[c]);
        continue;
      }
      Eigen::Index far = 0;
      double far_dist = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double d = dist(i, out.labels[i]);
        if (d > far_dist && counts[out.labels[i]] > 1) {
          far_dist = d;
          far = i;
        }
      }
      if (far_dist >= 0.0) {
        --counts[out.labels[far]];
        out.labels[far] = c;
        counts[c] = 1;
        out.centers.row(c) = x.row(far);
        dist(far, c) = 0.0;
      }
    }
  }
  out.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) out.inertia += (x.row(i) - out.centers.row(out.labels[i])).squaredNorm();
  return out;
}

namespace {

struct Refined {
  std::vector<int> labels;
  double loglik = -std::numeric_limits<double>::infinity();
};

// Hard partition after EM for a Gaussian mixture with diagonal covariances,
// started from the given labels. Per-coordinate variances let noisy
// coordinates count for less than they do in k-means.
Refined refine_diagonal_em(const Eigen::MatrixXd &x, std::vector<int> labels, int k, int iterations) {
  const Eigen::Index n = x.rows();
  const Eigen::RowVectorXd spread = (x.rowwise() - x.colwise().mean()).array().square().colwise().mean();
  const Eigen::RowVectorXd floor = (1e-3 * spread).cwiseMax(1e-12);
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) resp(i, labels[static_cast<std::size_t>(i)]) = 1.0;
  Eigen::MatrixXd logp(n, k);
  double loglik = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < iterations; ++it) {
    const Eigen::VectorXd counts = resp.colwise().sum().transpose();
    // an emptied component cannot be re-estimated; keep the partition as it stands
    if (counts.minCoeff() < 1.0) break;
    const Eigen::MatrixXd means = (resp.transpose() * x).array().colwise() / counts.array();
    const Eigen::MatrixXd second = (resp.transpose() * x.array().square().matrix()).array().colwise() / counts.array();
    const Eigen::MatrixXd vars = (second.array() - means.array().square()).max(floor.replicate(k, 1).array()).matrix();
    for (int c = 0; c < k; ++c) {
      const double norm = std::log(counts[c] / static_cast<double>(n)) - 0.5 * vars.row(c).array().log().sum();
      const Eigen::RowVectorXd inv = vars.row(c).cwiseInverse();
      logp.col(c) = norm - 0.5 * ((x.rowwise() - means.row(c)).array().square().rowwise() * inv.array()).rowwise().sum();
    }
    const Eigen::VectorXd top = logp.rowwise().maxCoeff();
    const Eigen::MatrixXd shifted = (logp.colwise() - top).array().exp();
    const Eigen::VectorXd total = shifted.rowwise().sum();
    resp = shifted.array().colwise() / total.array();
    loglik = (top.array() + total.array().log()).sum();
  }
  bool moved = false;
  std::vector<int> out(static_cast<std::size_t>(n));
  std::vector<int> sizes(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index arg = 0;
    resp.row(i).maxCoeff(&arg);
    out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
    ++sizes[static_cast<std::size_t>(arg)];
    moved = moved || arg != labels[static_cast<std::size_t>(i)];
  }
  // never hand back a partition with an empty cluster
  if (!moved || *std::min_element(sizes.begin(), sizes.end()) == 0) return {std::move(labels), loglik};
  return {std::move(out), loglik};
}

struct LayerInit {
  std::vector<Eigen::VectorXd> mean;
  std::vector<Eigen::MatrixXd> loading;
  std::vector<Eigen::VectorXd> noise;
  std::vector<double> count;
  Eigen::MatrixXd latent; // n x D[l]
};

// Fits one layer of a mixture of factor analyzers by k-means plus a
// principal-component factor analysis per cluster, and returns projected latents.
LayerInit init_layer(const Eigen::MatrixXd &x, int k, int latent_dim, Rng &rng, const InitOptions &options) {
  const Eigen::Index n = x.rows();
  const Eigen::Index dim = x.cols();
  auto clusters = kmeans(x, k, rng, options.kmeans_iterations);
  const bool refine = options.diagonal_em_iterations > 0 && k > 1;
  Refined best;
  if (refine) best = refine_diagonal_em(x, clusters.labels, k, options.diagonal_em_iterations);
  for (int r = 1; r < options.kmeans_restarts; ++r) {
    auto other = kmeans(x, k, rng, options.kmeans_iterations);
    if (refine) {
      // restarts compete on mixture likelihood once EM is on
      auto em = refine_diagonal_em(x, other.labels, k, options.diagonal_em_iterations);
      if (em.loglik > best.loglik) {
        best = std::move(em);
        clusters = std::move(other);
      }
    } else if (other.inertia < clusters.inertia) {
      clusters = std::move(other);
    }
  }
  if (refine) {
    clusters.labels = std::move(best.labels);
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    Eigen::VectorXd sizes = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(clusters.labels[i]) += x.row(i);
      sizes[clusters.labels[i]] += 1.0;
    }
    for (int c = 0; c < k; ++c)
      if (sizes[c] > 0.0) clusters.centers.row(c) = sums.row(c) / sizes[c];
  }

  const Eigen::RowVectorXd grand = x.colwise().mean();
  const Eigen::MatrixXd centered_all = x.rowwise() - grand;
  Eigen::MatrixXd pooled = centered_all.transpose() * centered_all / std::max<double>(1.0, static_cast<double>(n - 1));
  const double floor = std::max(1e-6, 1e-3 * pooled.diagonal().mean());

  LayerInit out;
  out.latent = Eigen::MatrixXd::Zero(n, latent_dim);
  for (int c = 0; c < k; ++c) {
    std::vector<Eigen::Index> members;
    for (Eigen::Index i = 0; i < n; ++i)
      if (clusters.labels[i] == c) members.push_back(i);
    const auto m = static_cast<double>(members.size());
    Eigen::VectorXd mean = members.empty() ? Eigen::VectorXd(grand.transpose())
                                           : Eigen::VectorXd(clusters.centers.row(c).transpose());
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
    for (auto i : members) {
      const Eigen::VectorXd r = x.row(i).transpose() - mean;
      cov.noalias() += r * r.transpose();
    }
    // shrink small clusters toward the pooled covariance
    const double prior_weight = static_cast<double>(dim) + 1.0;
    cov = (cov + prior_weight * pooled) / (m + prior_weight);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::VectorXd values = eig.eigenvalues().reverse();
    const Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();
    const int q = std::min<int>(latent_dim, static_cast<int>(dim));
    const double residual =
        dim > q ? std::max(floor, values.tail(dim - q).mean()) : std::max(floor, 0.1 * values.mean());
    Eigen::MatrixXd loading = Eigen::MatrixXd::Zero(dim, latent_dim);
    for (int j = 0; j < q; ++j) loading.col(j) = vectors.col(j) * std::sqrt(std::max(values[j] - residual, floor));
    Eigen::VectorXd noise = (cov.diagonal() - loading.rowwise().squaredNorm()).cwiseMax(floor);

    // posterior means of the latent factors for this cluster's rows
    const Eigen::VectorXd inv_noise = noise.cwiseInverse();
    Eigen::MatrixXd precision = Eigen::MatrixXd::Identity(latent_dim, latent_dim);
    precision.noalias() += loading.transpose() * inv_noise.asDiagonal() * loading;
    const Eigen::LLT<Eigen::MatrixXd> llt(precision);
    const Eigen::MatrixXd gain = llt.solve(loading.transpose() * inv_noise.asDiagonal());
    for (auto i : members) out.latent.row(i) = (gain * (x.row(i).transpose() - mean)).transpose();

    out.mean.push_back(std::move(mean));
    out.loading.push_back(std::move(loading));
    out.noise.push_back(std::move(noise));
    out.count.push_back(m);
  }
  return out;
}

// Sets every auxiliary scale factor to its conditional target given the rest, a few passes.
void settle_auxiliaries(const Architecture &arch, const PriorHyperparams &prior, GlobalFactors &global) {
  const SufficientStats unused;
  const std::vector<FactorKind> order = {FactorKind::MeanScale, FactorKind::NoiseAux, FactorKind::LocalShrinkAux,
                                         FactorKind::LocalShrink, FactorKind::GlobalShrinkAux,
                                         FactorKind::GlobalShrink};
  const auto ids = enumerate_factors(arch);
  for (int pass = 0; pass < 5; ++pass)
    for (FactorKind kind : order)
      for (const auto &id : ids)
        if (id.kind == kind) set_factor(global, id, cavi_target(arch, id, prior, global, unused));
}

} // namespace

VariationalState init_variational(const Architecture &arch, const Dataset &data, const PriorHyperparams &prior,
                                  std::uint64_t seed, const InitOptions &options) {
  require_valid(arch);
  validate_prior(arch, prior);
  const Eigen::Index n = data.rows();
  if (data.cols() != arch.observed_dim()) throw Error("init: data dimension does not match architecture");
  if (n < arch.components[0]) {
    std::ostringstream os;
    os << "init: " << n << " observations cannot seed " << arch.components[0] << " first-layer components";
    throw Error(os.str());
  }

  Rng rng(seed);
  VariationalState state{GlobalFactors::placeholder(arch), LocalFactors::zeros(arch, n)};
  Eigen::MatrixXd x = data.y;
  for (int l = 0; l < arch.layers(); ++l) {
    const int k = arch.components[l];
    // deeper layers see at least as many rows as components only if n allows; pad by duplication otherwise
    Eigen::MatrixXd input = x;
    if (input.rows() < k) {
      input.conservativeResize(k, Eigen::NoChange);
      for (Eigen::Index i = x.rows(); i < k; ++i) input.row(i) = x.row(i % x.rows());
    }
    LayerInit init = init_layer(input, k, arch.latent_dim(l), rng, options);
    auto &layer = state.global.layers[l];
    layer.concentration = prior.concentration[l].array() + static_cast<double>(n) / k;
    for (int c = 0; c < k; ++c) {
      auto &f = layer.components[c];
      const double weight = std::max(init.count[c], options.min_cluster_weight);
      f.mean.mean.col(0) = init.mean[c].array();
      f.mean.var.col(0) = init.noise[c].array() / weight;
      f.loading.mean = init.loading[c].array();
      f.loading.var = (init.noise[c].array() / weight).replicate(1, arch.latent_dim(l));
      // E[1/delta] = 1/noise with the shape a full data update would give
      f.noise.shape.col(0).setConstant(0.5 + 0.5 * weight);
      f.noise.scale.col(0) = f.noise.shape.col(0) * init.noise[c].array();
    }
    x = init.latent.topRows(x.rows());
  }
  settle_auxiliaries(arch, prior, state.global);

  std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  local_step(arch, state.global, data.y, rows, state.local);
  return state;
}

} // namespace dmfa
