#include "dmfa/variational.hpp"

#include <cmath>
#include <sstream>

#include "variational_detail.hpp"

namespace dmfa {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
const double kLgammaHalf = std::lgamma(0.5);

std::string layer_error(const char *what, int layer) {
  std::ostringstream os;
  os << what << " (layer " << layer + 1 << ")";
  return os.str();
}

} // namespace

PriorHyperparams PriorHyperparams::defaults(const Architecture &arch, bool overfitted) {
  require_valid(arch);
  PriorHyperparams prior;
  const auto layers = static_cast<std::size_t>(arch.layers());
  prior.mean_scale.assign(layers, 2.0);
  prior.global_scale.assign(layers, 1.0);
  prior.noise_scale.assign(layers, 2.5);
  for (int l = 0; l < arch.layers(); ++l)
    prior.concentration.push_back(Eigen::VectorXd::Constant(arch.components[l], overfitted ? 0.5 : 1.0));
  return prior;
}

void validate_prior(const Architecture &arch, const PriorHyperparams &prior) {
  const auto layers = static_cast<std::size_t>(arch.layers());
  if (prior.mean_scale.size() != layers || prior.global_scale.size() != layers ||
      prior.noise_scale.size() != layers || prior.concentration.size() != layers)
    throw Error("prior: one hyperparameter entry per layer is required");
  for (std::size_t l = 0; l < layers; ++l) {
    if (!(prior.mean_scale[l] > 0.0) || !(prior.global_scale[l] > 0.0) || !(prior.noise_scale[l] > 0.0))
      throw Error(layer_error("prior: G, nu and A must be strictly positive", static_cast<int>(l)));
    if (prior.concentration[l].size() != arch.components[l] || !(prior.concentration[l].array() > 0.0).all())
      throw Error(layer_error("prior: rho needs one positive entry per component", static_cast<int>(l)));
  }
}

GlobalFactors GlobalFactors::placeholder(const Architecture &arch) {
  require_valid(arch);
  GlobalFactors g;
  for (int l = 0; l < arch.layers(); ++l) {
    const int rows = arch.input_dim(l);
    const int cols = arch.latent_dim(l);
    LayerFactors layer;
    layer.concentration = Eigen::VectorXd::Ones(arch.components[l]);
    for (int k = 0; k < arch.components[l]; ++k) {
      ComponentFactors c;
      c.mean = {Eigen::ArrayXXd::Zero(rows, 1), Eigen::ArrayXXd::Ones(rows, 1)};
      c.loading = {Eigen::ArrayXXd::Zero(rows, cols), Eigen::ArrayXXd::Ones(rows, cols)};
      c.noise = {Eigen::ArrayXXd::Ones(rows, 1), Eigen::ArrayXXd::Ones(rows, 1)};
      c.noise_aux = c.noise;
      c.mean_scale = c.noise;
      c.global_shrink = {Eigen::ArrayXXd::Ones(1, 1), Eigen::ArrayXXd::Ones(1, 1)};
      c.global_shrink_aux = c.global_shrink;
      c.local_shrink = {Eigen::ArrayXXd::Ones(rows, cols), Eigen::ArrayXXd::Ones(rows, cols)};
      c.local_shrink_aux = c.local_shrink;
      layer.components.push_back(std::move(c));
    }
    g.layers.push_back(std::move(layer));
  }
  return g;
}

LocalFactors LocalFactors::zeros(const Architecture &arch, Eigen::Index n) {
  LocalFactors local;
  for (int l = 0; l < arch.layers(); ++l) {
    local.z_mean.push_back(Eigen::MatrixXd::Zero(n, arch.latent_dim(l)));
    local.z_var.push_back(Eigen::MatrixXd::Ones(n, arch.latent_dim(l)));
    local.resp.push_back(Eigen::MatrixXd::Constant(n, arch.components[l], 1.0 / arch.components[l]));
  }
  return local;
}

std::string_view kind_name(FactorKind kind) noexcept {
  switch (kind) {
  case FactorKind::Mean: return "mu";
  case FactorKind::Loading: return "B";
  case FactorKind::Noise: return "delta";
  case FactorKind::NoiseAux: return "psi";
  case FactorKind::MeanScale: return "g";
  case FactorKind::GlobalShrink: return "tau";
  case FactorKind::GlobalShrinkAux: return "xi";
  case FactorKind::LocalShrink: return "h";
  case FactorKind::LocalShrinkAux: return "c";
  case FactorKind::Weights: return "p";
  }
  return "?";
}

Family family_of(FactorKind kind) noexcept {
  switch (kind) {
  case FactorKind::Mean:
  case FactorKind::Loading: return Family::Gaussian;
  case FactorKind::LocalShrink:
  case FactorKind::LocalShrinkAux: return Family::Gamma;
  case FactorKind::Weights: return Family::Dirichlet;
  default: return Family::InverseGamma;
  }
}

std::string describe(const FactorId &id) {
  std::ostringstream os;
  os << kind_name(id.kind) << "[layer " << id.layer + 1;
  if (id.kind != FactorKind::Weights) {
    os << ", component " << id.component + 1;
    switch (id.kind) {
    case FactorKind::GlobalShrink:
    case FactorKind::GlobalShrinkAux: break;
    case FactorKind::Loading:
    case FactorKind::LocalShrink:
    case FactorKind::LocalShrinkAux: os << ", entry (" << id.row + 1 << "," << id.col + 1 << ")"; break;
    default: os << ", coordinate " << id.row + 1; break;
    }
  }
  os << "]";
  return os.str();
}

std::vector<FactorId> enumerate_factors(const Architecture &arch) {
  std::vector<FactorId> ids;
  for (int l = 0; l < arch.layers(); ++l) {
    const int rows = arch.input_dim(l);
    const int cols = arch.latent_dim(l);
    for (int k = 0; k < arch.components[l]; ++k) {
      for (FactorKind kind : {FactorKind::Mean, FactorKind::Noise, FactorKind::NoiseAux, FactorKind::MeanScale})
        for (int j = 0; j < rows; ++j) ids.push_back({l, kind, k, j, 0});
      for (FactorKind kind : {FactorKind::Loading, FactorKind::LocalShrink, FactorKind::LocalShrinkAux})
        for (int m = 0; m < cols; ++m)
          for (int j = 0; j < rows; ++j) ids.push_back({l, kind, k, j, m});
      ids.push_back({l, FactorKind::GlobalShrink, k, 0, 0});
      ids.push_back({l, FactorKind::GlobalShrinkAux, k, 0, 0});
    }
    ids.push_back({l, FactorKind::Weights, 0, 0, 0});
  }
  return ids;
}

namespace {

const ComponentFactors &component_of(const GlobalFactors &g, const FactorId &id) {
  return g.layers.at(id.layer).components.at(id.component);
}

ComponentFactors &component_of(GlobalFactors &g, const FactorId &id) {
  return g.layers.at(id.layer).components.at(id.component);
}

} // namespace

Eigen::VectorXd get_factor(const GlobalFactors &factors, const FactorId &id) {
  if (id.kind == FactorKind::Weights) return factors.layers.at(id.layer).concentration;
  const auto &c = component_of(factors, id);
  const int r = id.row;
  const int m = id.col;
  switch (id.kind) {
  case FactorKind::Mean: return Eigen::Vector2d(c.mean.mean(r, 0), c.mean.var(r, 0));
  case FactorKind::Loading: return Eigen::Vector2d(c.loading.mean(r, m), c.loading.var(r, m));
  case FactorKind::Noise: return Eigen::Vector2d(c.noise.shape(r, 0), c.noise.scale(r, 0));
  case FactorKind::NoiseAux: return Eigen::Vector2d(c.noise_aux.shape(r, 0), c.noise_aux.scale(r, 0));
  case FactorKind::MeanScale: return Eigen::Vector2d(c.mean_scale.shape(r, 0), c.mean_scale.scale(r, 0));
  case FactorKind::GlobalShrink: return Eigen::Vector2d(c.global_shrink.shape(0, 0), c.global_shrink.scale(0, 0));
  case FactorKind::GlobalShrinkAux:
    return Eigen::Vector2d(c.global_shrink_aux.shape(0, 0), c.global_shrink_aux.scale(0, 0));
  case FactorKind::LocalShrink: return Eigen::Vector2d(c.local_shrink.shape(r, m), c.local_shrink.rate(r, m));
  case FactorKind::LocalShrinkAux:
    return Eigen::Vector2d(c.local_shrink_aux.shape(r, m), c.local_shrink_aux.rate(r, m));
  case FactorKind::Weights: break;
  }
  throw Error("get_factor: unknown factor kind");
}

void set_factor(GlobalFactors &factors, const FactorId &id, const Eigen::VectorXd &s) {
  if (!in_domain(family_of(id.kind), s)) throw Error("set_factor: parameters outside the domain of " + describe(id));
  if (id.kind == FactorKind::Weights) {
    auto &alpha = factors.layers.at(id.layer).concentration;
    if (s.size() != alpha.size()) throw Error("set_factor: Dirichlet size mismatch");
    alpha = s;
    return;
  }
  auto &c = component_of(factors, id);
  const int r = id.row;
  const int m = id.col;
  auto assign = [&](Eigen::ArrayXXd &a, Eigen::ArrayXXd &b, int i, int j) {
    a(i, j) = s[0];
    b(i, j) = s[1];
  };
  switch (id.kind) {
  case FactorKind::Mean: assign(c.mean.mean, c.mean.var, r, 0); break;
  case FactorKind::Loading: assign(c.loading.mean, c.loading.var, r, m); break;
  case FactorKind::Noise: assign(c.noise.shape, c.noise.scale, r, 0); break;
  case FactorKind::NoiseAux: assign(c.noise_aux.shape, c.noise_aux.scale, r, 0); break;
  case FactorKind::MeanScale: assign(c.mean_scale.shape, c.mean_scale.scale, r, 0); break;
  case FactorKind::GlobalShrink: assign(c.global_shrink.shape, c.global_shrink.scale, 0, 0); break;
  case FactorKind::GlobalShrinkAux: assign(c.global_shrink_aux.shape, c.global_shrink_aux.scale, 0, 0); break;
  case FactorKind::LocalShrink: assign(c.local_shrink.shape, c.local_shrink.rate, r, m); break;
  case FactorKind::LocalShrinkAux: assign(c.local_shrink_aux.shape, c.local_shrink_aux.rate, r, m); break;
  case FactorKind::Weights: break;
  }
}

namespace detail {

ComponentMoments moments_of(const ComponentFactors &c) {
  ComponentMoments m;
  m.mu_mean = c.mean.mean.col(0).matrix();
  m.mu_var = c.mean.var.col(0).matrix();
  m.b_mean = c.loading.mean.matrix();
  m.b_var = c.loading.var.matrix();
  m.b_mean_sq = c.loading.mean.square().matrix();
  m.inv_noise = (c.noise.shape / c.noise.scale).col(0).matrix();
  m.log_noise = (c.noise.scale.log() - c.noise.shape.unaryExpr([](double a) { return digamma(a); })).col(0).matrix();
  return m;
}

Eigen::VectorXd expected_log_weights(const Eigen::VectorXd &alpha) {
  const double total = digamma(alpha.sum());
  return alpha.unaryExpr([total](double a) { return digamma(a) - total; });
}

double expected_component_loglik(const ComponentMoments &m, const Eigen::Ref<const Eigen::VectorXd> &x_mean,
                                 const Eigen::Ref<const Eigen::VectorXd> &x_var,
                                 const Eigen::Ref<const Eigen::VectorXd> &z_mean,
                                 const Eigen::Ref<const Eigen::VectorXd> &z_var) {
  const Eigen::VectorXd z_sq = z_mean.array().square() + z_var.array();
  Eigen::VectorXd resid = x_mean - m.mu_mean;
  resid.noalias() -= m.b_mean * z_mean;
  Eigen::VectorXd spread = x_var + m.mu_var;
  spread.noalias() += m.b_mean_sq * z_var;
  spread.noalias() += m.b_var * z_sq;
  const Eigen::ArrayXd e = resid.array().square() + spread.array();
  return -0.5 * (static_cast<double>(e.size()) * kLog2Pi + m.log_noise.sum() + (m.inv_noise.array() * e).sum());
}

} // namespace detail

SufficientStats accumulate_stats(const Architecture &arch, const Eigen::MatrixXd &y, const LocalFactors &local,
                                 std::span<const Eigen::Index> rows, double scale) {
  SufficientStats stats;
  const int layers = arch.layers();
  for (int l = 0; l < layers; ++l) {
    const int in = arch.input_dim(l);
    const int lat = arch.latent_dim(l);
    std::vector<ComponentStats> comps(static_cast<std::size_t>(arch.components[l]));
    for (auto &c : comps) {
      c.latent_sum = Eigen::VectorXd::Zero(lat);
      c.latent_outer = Eigen::MatrixXd::Zero(lat, lat);
      c.input_sum = Eigen::VectorXd::Zero(in);
      c.input_sq = Eigen::VectorXd::Zero(in);
      c.cross = Eigen::MatrixXd::Zero(in, lat);
    }
    stats.layers.push_back(std::move(comps));
  }
  const Eigen::Index n = rows.empty() ? y.rows() : static_cast<Eigen::Index>(rows.size());
  Eigen::VectorXd x_mean;
  Eigen::VectorXd x_var;
  for (Eigen::Index t = 0; t < n; ++t) {
    const Eigen::Index i = rows.empty() ? t : rows[static_cast<std::size_t>(t)];
    for (int l = 0; l < layers; ++l) {
      if (l == 0) {
        x_mean = y.row(i).transpose();
        x_var = Eigen::VectorXd::Zero(x_mean.size());
      } else {
        x_mean = local.z_mean[l - 1].row(i).transpose();
        x_var = local.z_var[l - 1].row(i).transpose();
      }
      const Eigen::VectorXd z_mean = local.z_mean[l].row(i).transpose();
      const Eigen::VectorXd z_var = local.z_var[l].row(i).transpose();
      const Eigen::VectorXd x_sq = x_mean.array().square() + x_var.array();
      Eigen::MatrixXd z_outer = z_mean * z_mean.transpose();
      z_outer.diagonal() += z_var;
      for (int k = 0; k < arch.components[l]; ++k) {
        const double r = local.resp[l](i, k);
        if (r <= 0.0) continue;
        const double w = scale * r;
        auto &c = stats.layers[l][k];
        c.count += w;
        c.latent_sum.noalias() += w * z_mean;
        c.latent_outer.noalias() += w * z_outer;
        c.input_sum.noalias() += w * x_mean;
        c.input_sq.noalias() += w * x_sq;
        c.cross.noalias() += (w * x_mean) * z_mean.transpose();
      }
    }
  }
  return stats;
}

namespace {

// Sum over rows of r * E[(x_j - mu_j - b_j^T z)^2] for one coordinate j.
double expected_residual_sum(const ComponentFactors &c, const ComponentStats &s, int j) {
  const double mu = c.mean.mean(j, 0);
  const double mu_sq = mu * mu + c.mean.var(j, 0);
  const Eigen::VectorXd b = c.loading.mean.row(j).transpose().matrix();
  const Eigen::VectorXd b_var = c.loading.var.row(j).transpose().matrix();
  return s.input_sq[j] - 2.0 * mu * s.input_sum[j] - 2.0 * b.dot(s.cross.row(j).transpose()) + s.count * mu_sq +
         2.0 * mu * b.dot(s.latent_sum) + b.dot(s.latent_outer * b) + b_var.dot(s.latent_outer.diagonal());
}

double expected_loading_square(const ComponentFactors &c, int j, int m) {
  const double b = c.loading.mean(j, m);
  return b * b + c.loading.var(j, m);
}

} // namespace

Eigen::VectorXd cavi_target(const Architecture &arch, const FactorId &id, const PriorHyperparams &prior,
                            const GlobalFactors &global, const SufficientStats &stats) {
  const int l = id.layer;
  if (id.kind == FactorKind::Weights) {
    Eigen::VectorXd alpha = prior.concentration.at(l);
    for (int k = 0; k < arch.components[l]; ++k) alpha[k] += stats.layers[l][k].count;
    return alpha;
  }
  const auto &c = component_of(global, id);
  auto data_stats = [&]() -> const ComponentStats & { return stats.layers.at(l).at(id.component); };
  const int j = id.row;
  const int m = id.col;
  const double inv_tau = c.global_shrink.shape(0, 0) / c.global_shrink.scale(0, 0);
  switch (id.kind) {
  case FactorKind::Mean: {
    const auto &s = data_stats();
    const double inv_g = c.mean_scale.shape(j, 0) / c.mean_scale.scale(j, 0);
    const double inv_delta = c.noise.shape(j, 0) / c.noise.scale(j, 0);
    const double precision = inv_g / prior.mean_scale[l] + inv_delta * s.count;
    const Eigen::VectorXd b = c.loading.mean.row(j).transpose().matrix();
    const double linear = inv_delta * (s.input_sum[j] - b.dot(s.latent_sum));
    return Eigen::Vector2d(linear / precision, 1.0 / precision);
  }
  case FactorKind::Loading: {
    const auto &s = data_stats();
    const double inv_delta = c.noise.shape(j, 0) / c.noise.scale(j, 0);
    const double h = c.local_shrink.shape(j, m) / c.local_shrink.rate(j, m);
    const double precision = h * inv_tau + inv_delta * s.latent_outer(m, m);
    double others = 0.0;
    for (int q = 0; q < arch.latent_dim(l); ++q)
      if (q != m) others += c.loading.mean(j, q) * s.latent_outer(q, m);
    const double linear = inv_delta * (s.cross(j, m) - c.mean.mean(j, 0) * s.latent_sum[m] - others);
    return Eigen::Vector2d(linear / precision, 1.0 / precision);
  }
  case FactorKind::Noise: {
    const auto &s = data_stats();
    const double inv_psi = c.noise_aux.shape(j, 0) / c.noise_aux.scale(j, 0);
    return Eigen::Vector2d(0.5 + 0.5 * s.count, inv_psi + 0.5 * expected_residual_sum(c, s, j));
  }
  case FactorKind::NoiseAux: {
    const double inv_delta = c.noise.shape(j, 0) / c.noise.scale(j, 0);
    const double a = prior.noise_scale[l];
    return Eigen::Vector2d(1.0, inv_delta + 1.0 / (a * a));
  }
  case FactorKind::MeanScale: {
    const double mu_sq = c.mean.mean(j, 0) * c.mean.mean(j, 0) + c.mean.var(j, 0);
    return Eigen::Vector2d(1.0, 0.5 + mu_sq / (2.0 * prior.mean_scale[l]));
  }
  case FactorKind::GlobalShrink: {
    const double inv_xi = c.global_shrink_aux.shape(0, 0) / c.global_shrink_aux.scale(0, 0);
    const Eigen::ArrayXXd h = c.local_shrink.shape / c.local_shrink.rate;
    const double weighted = (h * (c.loading.mean.square() + c.loading.var)).sum();
    return Eigen::Vector2d(0.5 + 0.5 * arch.loading_count(l), inv_xi + 0.5 * weighted);
  }
  case FactorKind::GlobalShrinkAux: {
    const double nu = prior.global_scale[l];
    return Eigen::Vector2d(1.0, inv_tau + 1.0 / (nu * nu));
  }
  case FactorKind::LocalShrink: {
    const double cc = c.local_shrink_aux.shape(j, m) / c.local_shrink_aux.rate(j, m);
    return Eigen::Vector2d(1.0, cc + 0.5 * inv_tau * expected_loading_square(c, j, m));
  }
  case FactorKind::LocalShrinkAux: {
    const double h = c.local_shrink.shape(j, m) / c.local_shrink.rate(j, m);
    return Eigen::Vector2d(1.0, h + 1.0);
  }
  case FactorKind::Weights: break;
  }
  throw Error("cavi_target: non-conjugate factor " + describe(id));
}

Eigen::VectorXd update_global_factor(const Architecture &arch, const FactorId &id, const Dataset &data,
                                     const PriorHyperparams &prior, const GlobalFactors &global,
                                     const LocalFactors &local) {
  const auto stats = accumulate_stats(arch, data.y, local, {}, 1.0);
  return cavi_target(arch, id, prior, global, stats);
}

double ElboBreakdown::global_part() const {
  double total = 0.0;
  for (std::size_t k = 0; k < kFactorKindCount; ++k) total += prior_terms[k] + entropies[k];
  return total;
}

ElboBreakdown elbo(const Architecture &arch, const Dataset &data, const PriorHyperparams &prior,
                   const GlobalFactors &global, const LocalFactors &local,
                   std::optional<std::span<const Eigen::Index>> subset) {
  validate_prior(arch, prior);
  ElboBreakdown out;
  auto add = [&](std::array<double, kFactorKindCount> &slot, const FactorId &id, double value) {
    if (!std::isfinite(value)) throw Error("elbo: non-finite term from factor " + describe(id));
    slot[static_cast<std::size_t>(id.kind)] += value;
  };

  for (int l = 0; l < arch.layers(); ++l) {
    const auto &layer = global.layers.at(l);
    const double big_g = prior.mean_scale[l];
    const double nu = prior.global_scale[l];
    const double a_scale = prior.noise_scale[l];
    for (int k = 0; k < arch.components[l]; ++k) {
      const auto &c = layer.components.at(k);
      const double tau_inv = c.global_shrink.shape(0, 0) / c.global_shrink.scale(0, 0);
      const double tau_log = moments::inv_gamma_mean_log(c.global_shrink.shape(0, 0), c.global_shrink.scale(0, 0));
      const double xi_inv = c.global_shrink_aux.shape(0, 0) / c.global_shrink_aux.scale(0, 0);
      const double xi_log =
          moments::inv_gamma_mean_log(c.global_shrink_aux.shape(0, 0), c.global_shrink_aux.scale(0, 0));

      for (int j = 0; j < arch.input_dim(l); ++j) {
        const FactorId mu_id{l, FactorKind::Mean, k, j, 0};
        const double g_inv = c.mean_scale.shape(j, 0) / c.mean_scale.scale(j, 0);
        const double g_log = moments::inv_gamma_mean_log(c.mean_scale.shape(j, 0), c.mean_scale.scale(j, 0));
        const double mu_sq = c.mean.mean(j, 0) * c.mean.mean(j, 0) + c.mean.var(j, 0);
        add(out.prior_terms, mu_id, -0.5 * (kLog2Pi + std::log(big_g) + g_log) - 0.5 * g_inv * mu_sq / big_g);
        add(out.entropies, mu_id, moments::gaussian_entropy(c.mean.var(j, 0)));

        const FactorId g_id{l, FactorKind::MeanScale, k, j, 0};
        add(out.prior_terms, g_id, 0.5 * std::log(0.5) - kLgammaHalf - 1.5 * g_log - 0.5 * g_inv);
        add(out.entropies, g_id, moments::inv_gamma_entropy(c.mean_scale.shape(j, 0), c.mean_scale.scale(j, 0)));

        const FactorId psi_id{l, FactorKind::NoiseAux, k, j, 0};
        const double psi_inv = c.noise_aux.shape(j, 0) / c.noise_aux.scale(j, 0);
        const double psi_log = moments::inv_gamma_mean_log(c.noise_aux.shape(j, 0), c.noise_aux.scale(j, 0));
        const double delta_inv = c.noise.shape(j, 0) / c.noise.scale(j, 0);
        const double delta_log = moments::inv_gamma_mean_log(c.noise.shape(j, 0), c.noise.scale(j, 0));

        const FactorId delta_id{l, FactorKind::Noise, k, j, 0};
        add(out.prior_terms, delta_id, -0.5 * psi_log - kLgammaHalf - 1.5 * delta_log - psi_inv * delta_inv);
        add(out.entropies, delta_id, moments::inv_gamma_entropy(c.noise.shape(j, 0), c.noise.scale(j, 0)));

        add(out.prior_terms, psi_id,
            -std::log(a_scale) - kLgammaHalf - 1.5 * psi_log - psi_inv / (a_scale * a_scale));
        add(out.entropies, psi_id, moments::inv_gamma_entropy(c.noise_aux.shape(j, 0), c.noise_aux.scale(j, 0)));

        for (int m = 0; m < arch.latent_dim(l); ++m) {
          const double h_mean = c.local_shrink.shape(j, m) / c.local_shrink.rate(j, m);
          const double h_log = moments::gamma_mean_log(c.local_shrink.shape(j, m), c.local_shrink.rate(j, m));
          const double c_mean = c.local_shrink_aux.shape(j, m) / c.local_shrink_aux.rate(j, m);
          const double c_log =
              moments::gamma_mean_log(c.local_shrink_aux.shape(j, m), c.local_shrink_aux.rate(j, m));

          const FactorId b_id{l, FactorKind::Loading, k, j, m};
          add(out.prior_terms, b_id,
              -0.5 * (kLog2Pi + tau_log - h_log) - 0.5 * h_mean * tau_inv * expected_loading_square(c, j, m));
          add(out.entropies, b_id, moments::gaussian_entropy(c.loading.var(j, m)));

          const FactorId h_id{l, FactorKind::LocalShrink, k, j, m};
          add(out.prior_terms, h_id, 0.5 * c_log - kLgammaHalf - 0.5 * h_log - c_mean * h_mean);
          add(out.entropies, h_id, moments::gamma_entropy(c.local_shrink.shape(j, m), c.local_shrink.rate(j, m)));

          const FactorId c_id{l, FactorKind::LocalShrinkAux, k, j, m};
          add(out.prior_terms, c_id, -kLgammaHalf - 0.5 * c_log - c_mean);
          add(out.entropies, c_id,
              moments::gamma_entropy(c.local_shrink_aux.shape(j, m), c.local_shrink_aux.rate(j, m)));
        }
      }

      const FactorId tau_id{l, FactorKind::GlobalShrink, k, 0, 0};
      add(out.prior_terms, tau_id, -0.5 * xi_log - kLgammaHalf - 1.5 * tau_log - xi_inv * tau_inv);
      add(out.entropies, tau_id, moments::inv_gamma_entropy(c.global_shrink.shape(0, 0), c.global_shrink.scale(0, 0)));

      const FactorId xi_id{l, FactorKind::GlobalShrinkAux, k, 0, 0};
      add(out.prior_terms, xi_id, -std::log(nu) - kLgammaHalf - 1.5 * xi_log - xi_inv / (nu * nu));
      add(out.entropies, xi_id,
          moments::inv_gamma_entropy(c.global_shrink_aux.shape(0, 0), c.global_shrink_aux.scale(0, 0)));
    }

    const FactorId p_id{l, FactorKind::Weights, 0, 0, 0};
    const Eigen::VectorXd &rho = prior.concentration[l];
    const Eigen::VectorXd elog_p = detail::expected_log_weights(layer.concentration);
    double log_norm = std::lgamma(rho.sum());
    for (Eigen::Index k = 0; k < rho.size(); ++k) log_norm -= std::lgamma(rho[k]);
    add(out.prior_terms, p_id, log_norm + ((rho.array() - 1.0) * elog_p.array()).sum());
    add(out.entropies, p_id, moments::dirichlet_entropy(layer.concentration));
  }

  // local part
  const Eigen::Index n = data.rows();
  std::vector<Eigen::Index> all_rows;
  std::span<const Eigen::Index> rows;
  double scale = 1.0;
  if (subset) {
    rows = *subset;
    if (rows.empty() && n > 0) throw Error("elbo: empty subset");
    if (!rows.empty()) scale = static_cast<double>(n) / static_cast<double>(rows.size());
  } else {
    all_rows.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) all_rows[static_cast<std::size_t>(i)] = i;
    rows = all_rows;
  }
  if (n > 0 && local.rows() != n) throw Error("elbo: local factors do not match the data rows");

  std::vector<std::vector<detail::ComponentMoments>> mom(static_cast<std::size_t>(arch.layers()));
  std::vector<Eigen::VectorXd> elog_w;
  for (int l = 0; l < arch.layers(); ++l) {
    for (const auto &c : global.layers[l].components) mom[l].push_back(detail::moments_of(c));
    elog_w.push_back(detail::expected_log_weights(global.layers[l].concentration));
  }

  double likelihood = 0.0;
  double assignment = 0.0;
  double top = 0.0;
  double entropy = 0.0;
  for (const Eigen::Index i : rows) {
    double row_lik = 0.0;
    double row_assign = 0.0;
    double row_entropy = 0.0;
    for (int l = 0; l < arch.layers(); ++l) {
      const Eigen::VectorXd x_mean = l == 0 ? Eigen::VectorXd(data.y.row(i).transpose())
                                            : Eigen::VectorXd(local.z_mean[l - 1].row(i).transpose());
      const Eigen::VectorXd x_var = l == 0 ? Eigen::VectorXd::Zero(x_mean.size())
                                           : Eigen::VectorXd(local.z_var[l - 1].row(i).transpose());
      const Eigen::VectorXd z_mean = local.z_mean[l].row(i).transpose();
      const Eigen::VectorXd z_var = local.z_var[l].row(i).transpose();
      for (int k = 0; k < arch.components[l]; ++k) {
        const double r = local.resp[l](i, k);
        if (r <= 0.0) continue;
        row_lik += r * detail::expected_component_loglik(mom[l][k], x_mean, x_var, z_mean, z_var);
        row_assign += r * elog_w[l][k];
        row_entropy -= r * std::log(r);
      }
      for (Eigen::Index j = 0; j < z_var.size(); ++j) row_entropy += moments::gaussian_entropy(z_var[j]);
    }
    const auto &z_top_mean = local.z_mean.back();
    const auto &z_top_var = local.z_var.back();
    const double row_top = -0.5 * (static_cast<double>(z_top_mean.cols()) * kLog2Pi +
                                   z_top_mean.row(i).squaredNorm() + z_top_var.row(i).sum());
    if (!std::isfinite(row_lik + row_assign + row_entropy + row_top)) {
      std::ostringstream os;
      os << "elbo: non-finite local term for observation " << i + 1;
      throw Error(os.str());
    }
    likelihood += row_lik;
    assignment += row_assign;
    entropy += row_entropy;
    top += row_top;
  }
  out.likelihood = scale * likelihood;
  out.assignment = scale * assignment;
  out.top_latent = scale * top;
  out.local_entropy = scale * entropy;
  out.total = out.sum_of_parts();
  return out;
}

Eigen::VectorXd elbo_gradient(const Architecture &arch, const FactorId &id, const PriorHyperparams &prior,
                              const GlobalFactors &global, const SufficientStats &stats) {
  const Family family = family_of(id.kind);
  const Eigen::VectorXd current = get_factor(global, id);
  const Eigen::VectorXd target = cavi_target(arch, id, prior, global, stats);
  const Eigen::VectorXd step = to_natural(family, target) - to_natural(family, current);
  return fisher_information_unchecked(family, current) * (natural_to_stored_jacobian(family, current) * step);
}

Eigen::VectorXd to_unconstrained(Family family, const Eigen::VectorXd &stored) {
  Eigen::VectorXd u = stored.array().log().matrix();
  if (family == Family::Gaussian) u[0] = stored[0];
  return u;
}

Eigen::VectorXd from_unconstrained(Family family, const Eigen::VectorXd &free) {
  Eigen::VectorXd s = free.array().exp().matrix();
  if (family == Family::Gaussian) s[0] = free[0];
  return s;
}

Eigen::VectorXd elbo_gradient_unconstrained(const Architecture &arch, const FactorId &id,
                                            const PriorHyperparams &prior, const GlobalFactors &global,
                                            const SufficientStats &stats) {
  const Family family = family_of(id.kind);
  Eigen::VectorXd chain = get_factor(global, id);
  if (family == Family::Gaussian) chain[0] = 1.0;
  return elbo_gradient(arch, id, prior, global, stats).cwiseProduct(chain);
}

namespace {

DmfaParams point_params(const GlobalFactors &global, bool noise_mode) {
  DmfaParams params;
  for (const auto &layer : global.layers) {
    ModelLayer out;
    out.weights = layer.concentration / layer.concentration.sum();
    for (const auto &c : layer.components) {
      FactorComponent fc;
      fc.mean = c.mean.mean.col(0).matrix();
      fc.loading = c.loading.mean.matrix();
      const Eigen::ArrayXXd denom = noise_mode ? Eigen::ArrayXXd(c.noise.shape + 1.0) : c.noise.shape;
      fc.noise = (c.noise.scale / denom).col(0).matrix();
      out.components.push_back(std::move(fc));
    }
    params.layers.push_back(std::move(out));
  }
  return params;
}

} // namespace

DmfaParams plugin_params(const GlobalFactors &global) { return point_params(global, false); }

DmfaParams posterior_summary(const GlobalFactors &global) { return point_params(global, true); }

} // namespace dmfa
