#include "dmfa/model.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace dmfa {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd> &values) {
  const double top = values.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((values.array() - top).exp().sum());
}

} // namespace

void validate_params(const Architecture &arch, const DmfaParams &params) {
  require_valid(arch);
  if (static_cast<int>(params.layers.size()) != arch.layers())
    throw Error("params: layer count does not match architecture");
  for (int l = 0; l < arch.layers(); ++l) {
    const auto &layer = params.layers[l];
    const int k = arch.components[l];
    const int rows = arch.input_dim(l);
    const int cols = arch.latent_dim(l);
    if (layer.weights.size() != k || static_cast<int>(layer.components.size()) != k) {
      std::ostringstream os;
      os << "params: layer " << l + 1 << " must have " << k << " components";
      throw Error(os.str());
    }
    if ((layer.weights.array() < 0.0).any() || std::abs(layer.weights.sum() - 1.0) > 1e-12) {
      std::ostringstream os;
      os << "params: layer " << l + 1 << " weights are not on the probability simplex";
      throw Error(os.str());
    }
    for (int c = 0; c < k; ++c) {
      const auto &comp = layer.components[c];
      if (comp.mean.size() != rows || comp.loading.rows() != rows || comp.loading.cols() != cols ||
          comp.noise.size() != rows) {
        std::ostringstream os;
        os << "params: layer " << l + 1 << " component " << c + 1 << " has wrong block shapes";
        throw Error(os.str());
      }
      if (!(comp.noise.array() > 0.0).all()) {
        std::ostringstream os;
        os << "params: layer " << l + 1 << " component " << c + 1 << " has non-positive noise variance";
        throw Error(os.str());
      }
    }
  }
}

std::vector<GmmComponent> collapse_to_gmm(const Architecture &arch, const DmfaParams &params) {
  validate_params(arch, params);
  std::vector<GmmComponent> out;
  out.reserve(arch.path_count());
  for (auto &path : enumerate_paths(arch)) {
    const auto &first = params.layers[0].components[path[0]];
    GmmComponent comp;
    comp.weight = params.layers[0].weights[path[0]];
    comp.mean = first.mean;
    comp.cov = first.noise.asDiagonal();
    Eigen::MatrixXd product = first.loading;
    for (int l = 1; l < arch.layers(); ++l) {
      const auto &fc = params.layers[l].components[path[l]];
      comp.weight *= params.layers[l].weights[path[l]];
      comp.mean.noalias() += product * fc.mean;
      comp.cov.noalias() += product * fc.noise.asDiagonal() * product.transpose();
      product = product * fc.loading;
    }
    comp.cov.noalias() += product * product.transpose();
    comp.path = std::move(path);
    out.push_back(std::move(comp));
  }
  return out;
}

CollapsedMixture::CollapsedMixture(const Architecture &arch, const DmfaParams &params)
    : components_(collapse_to_gmm(arch, params)), first_layer_components_(arch.components[0]) {
  cached_.reserve(components_.size());
  for (const auto &comp : components_) {
    Eigen::LLT<Eigen::MatrixXd> llt(comp.cov);
    if (llt.info() != Eigen::Success) {
      std::ostringstream os;
      os << "collapsed covariance is not positive definite for path (";
      for (std::size_t l = 0; l < comp.path.size(); ++l) os << (l ? "," : "") << comp.path[l] + 1;
      os << ")";
      throw Error(os.str());
    }
    Cached c;
    c.chol_lower = llt.matrixL();
    const double log_det = 2.0 * c.chol_lower.diagonal().array().log().sum();
    c.log_norm = std::log(comp.weight) - 0.5 * (static_cast<double>(comp.mean.size()) * kLog2Pi + log_det);
    cached_.push_back(std::move(c));
  }
}

double CollapsedMixture::log_density(const Eigen::Ref<const Eigen::VectorXd> &y) const {
  Eigen::VectorXd terms(static_cast<Eigen::Index>(components_.size()));
  for (std::size_t p = 0; p < components_.size(); ++p) {
    const Eigen::VectorXd white =
        cached_[p].chol_lower.triangularView<Eigen::Lower>().solve(y - components_[p].mean);
    terms[static_cast<Eigen::Index>(p)] = cached_[p].log_norm - 0.5 * white.squaredNorm();
  }
  return log_sum_exp(terms);
}

Eigen::VectorXd CollapsedMixture::cluster_log_scores(const Eigen::Ref<const Eigen::VectorXd> &y) const {
  // paths are enumerated with the first layer varying slowest
  const auto per_cluster = static_cast<Eigen::Index>(components_.size()) / first_layer_components_;
  Eigen::VectorXd terms(per_cluster);
  Eigen::VectorXd scores(first_layer_components_);
  for (int k = 0; k < first_layer_components_; ++k) {
    for (Eigen::Index j = 0; j < per_cluster; ++j) {
      const auto p = static_cast<std::size_t>(k * per_cluster + j);
      const Eigen::VectorXd white =
          cached_[p].chol_lower.triangularView<Eigen::Lower>().solve(y - components_[p].mean);
      terms[j] = cached_[p].log_norm - 0.5 * white.squaredNorm();
    }
    scores[k] = log_sum_exp(terms);
  }
  return scores;
}

double log_density(const Eigen::Ref<const Eigen::VectorXd> &y, const Architecture &arch, const DmfaParams &params) {
  return CollapsedMixture(arch, params).log_density(y);
}

Eigen::VectorXd cluster_scores(const Eigen::Ref<const Eigen::VectorXd> &y, const Architecture &arch,
                               const DmfaParams &params) {
  return CollapsedMixture(arch, params).cluster_log_scores(y).array().exp();
}

PartitionLabels assign_clusters(const Dataset &data, const Architecture &arch, const DmfaParams &params) {
  if (data.cols() != arch.observed_dim()) throw Error("assign_clusters: data dimension does not match architecture");
  const CollapsedMixture mixture(arch, params);
  PartitionLabels labels(static_cast<std::size_t>(data.rows()));
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    const Eigen::VectorXd scores = mixture.cluster_log_scores(data.y.row(i).transpose());
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < scores.size(); ++k)
      if (scores[k] > scores[best]) best = k;
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best) + 1;
  }
  return labels;
}

Sample sample_dataset(const Architecture &arch, const DmfaParams &params, Eigen::Index n, std::uint64_t seed) {
  validate_params(arch, params);
  if (n < 0) throw Error("sample_dataset: n must be non-negative");
  Rng rng(seed);
  std::normal_distribution<double> normal;
  const int layers = arch.layers();

  std::vector<std::discrete_distribution<int>> pick;
  for (const auto &layer : params.layers)
    pick.emplace_back(layer.weights.data(), layer.weights.data() + layer.weights.size());

  Sample out;
  out.data.y.resize(n, arch.observed_dim());
  out.latents.z.resize(static_cast<std::size_t>(layers));
  out.latents.components.assign(static_cast<std::size_t>(layers), std::vector<int>(static_cast<std::size_t>(n)));
  for (int l = 0; l < layers; ++l) out.latents.z[l].resize(n, arch.latent_dim(l));

  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd z(arch.latent_dim(layers - 1));
    for (auto &v : z) v = normal(rng);
    for (int l = layers - 1; l >= 0; --l) {
      out.latents.z[l].row(i) = z.transpose();
      const int k = pick[l](rng);
      out.latents.components[l][static_cast<std::size_t>(i)] = k;
      const auto &comp = params.layers[l].components[k];
      Eigen::VectorXd x = comp.mean + comp.loading * z;
      for (Eigen::Index j = 0; j < x.size(); ++j) x[j] += std::sqrt(comp.noise[j]) * normal(rng);
      z = std::move(x);
    }
    out.data.y.row(i) = z.transpose();
  }
  PartitionLabels labels(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) labels[i] = out.latents.components[0][i] + 1;
  out.data.labels = std::move(labels);
  return out;
}

DmfaParams random_params(const Architecture &arch, Rng &rng, const RandomParamsOptions &options) {
  require_valid(arch);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(options.noise_min, options.noise_max);
  std::gamma_distribution<double> gamma(options.dirichlet, 1.0);
  DmfaParams params;
  for (int l = 0; l < arch.layers(); ++l) {
    ModelLayer layer;
    const int k = arch.components[l];
    layer.weights.resize(k);
    for (int c = 0; c < k; ++c) layer.weights[c] = gamma(rng);
    layer.weights /= layer.weights.sum();
    for (int c = 0; c < k; ++c) {
      FactorComponent comp;
      comp.mean = Eigen::VectorXd::NullaryExpr(arch.input_dim(l), [&] { return options.mean_scale * normal(rng); });
      comp.loading = Eigen::MatrixXd::NullaryExpr(arch.input_dim(l), arch.latent_dim(l),
                                                  [&] { return options.loading_scale * normal(rng); });
      comp.noise = Eigen::VectorXd::NullaryExpr(arch.input_dim(l), [&] { return uniform(rng); });
      layer.components.push_back(std::move(comp));
    }
    params.layers.push_back(std::move(layer));
  }
  return params;
}

} // namespace dmfa
