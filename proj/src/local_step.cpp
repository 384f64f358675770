#include <cmath>
#include <sstream>

#include "dmfa/variational.hpp"
#include "variational_detail.hpp"

namespace dmfa {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

struct PriorMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Moment-matched marginal of each latent z^(l), l = 1..L (index l-1), under
// the plug-in parameters. The top latent is N(0, I).
std::vector<PriorMoments> latent_marginals(const Architecture &arch, const DmfaParams &params) {
  const int layers = arch.layers();
  std::vector<PriorMoments> out(static_cast<std::size_t>(layers));
  out[layers - 1] = {Eigen::VectorXd::Zero(arch.latent_dim(layers - 1)),
                     Eigen::MatrixXd::Identity(arch.latent_dim(layers - 1), arch.latent_dim(layers - 1))};
  for (int l = layers - 1; l > 0; --l) {
    const auto &below = out[l];
    const auto &layer = params.layers[l];
    const int dim = arch.input_dim(l);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
    Eigen::MatrixXd second = Eigen::MatrixXd::Zero(dim, dim);
    for (int k = 0; k < arch.components[l]; ++k) {
      const auto &c = layer.components[k];
      const double w = layer.weights[k];
      const Eigen::VectorXd m = c.mean + c.loading * below.mean;
      Eigen::MatrixXd cov = c.loading * below.cov * c.loading.transpose();
      cov.diagonal() += c.noise;
      mean.noalias() += w * m;
      second.noalias() += w * (cov + m * m.transpose());
    }
    out[l - 1] = {mean, second - mean * mean.transpose()};
  }
  return out;
}

// Row-independent pieces for conditioning z^(l) on its input under one component.
struct Conditioner {
  double log_weight = 0.0;
  Eigen::VectorXd offset;           // mu + B m
  Eigen::VectorXd inv_noise;        // 1 / delta
  Eigen::MatrixXd weighted_loading; // diag(1/delta) B
  Eigen::LLT<Eigen::MatrixXd> precision;
  Eigen::VectorXd prior_term;       // S^-1 m
  Eigen::VectorXd mu;
  double log_det = 0.0;             // log det (B S B^T + diag delta)
};

std::vector<std::vector<Conditioner>> build_conditioners(const Architecture &arch, const DmfaParams &params,
                                                          const std::vector<PriorMoments> &marginals) {
  std::vector<std::vector<Conditioner>> out(static_cast<std::size_t>(arch.layers()));
  for (int l = 0; l < arch.layers(); ++l) {
    const auto &prior = marginals[l];
    Eigen::LLT<Eigen::MatrixXd> prior_llt(prior.cov);
    if (prior_llt.info() != Eigen::Success) {
      std::ostringstream os;
      os << "local step: latent marginal of layer " << l + 1 << " is not positive definite";
      throw Error(os.str());
    }
    const Eigen::MatrixXd prior_precision =
        prior_llt.solve(Eigen::MatrixXd::Identity(prior.cov.rows(), prior.cov.cols()));
    const double prior_log_det = 2.0 * Eigen::MatrixXd(prior_llt.matrixL()).diagonal().array().log().sum();
    for (int k = 0; k < arch.components[l]; ++k) {
      const auto &c = params.layers[l].components[k];
      Conditioner cond;
      cond.log_weight = std::log(params.layers[l].weights[k]);
      cond.offset = c.mean + c.loading * prior.mean;
      cond.inv_noise = c.noise.cwiseInverse();
      cond.weighted_loading = cond.inv_noise.asDiagonal() * c.loading;
      Eigen::MatrixXd precision = prior_precision;
      precision.noalias() += c.loading.transpose() * cond.weighted_loading;
      cond.precision.compute(precision);
      if (cond.precision.info() != Eigen::Success) {
        std::ostringstream os;
        os << "local step: posterior precision of layer " << l + 1 << " component " << k + 1
           << " is not positive definite";
        throw Error(os.str());
      }
      cond.prior_term = prior_precision * prior.mean;
      cond.mu = c.mean;
      const double precision_log_det =
          2.0 * Eigen::MatrixXd(cond.precision.matrixL()).diagonal().array().log().sum();
      cond.log_det = c.noise.array().log().sum() + prior_log_det + precision_log_det;
      out[l].push_back(std::move(cond));
    }
  }
  return out;
}

// log p_k + log N(x; offset, B S B^T + diag delta) through the Woodbury identity.
double score(const Conditioner &c, const Eigen::VectorXd &x) {
  const Eigen::VectorXd r = x - c.offset;
  const Eigen::VectorXd proj = c.weighted_loading.transpose() * r;
  const double quad = r.dot(c.inv_noise.cwiseProduct(r)) - proj.dot(c.precision.solve(proj));
  return c.log_weight - 0.5 * (static_cast<double>(x.size()) * kLog2Pi + c.log_det + quad);
}

} // namespace

void local_step(const Architecture &arch, const GlobalFactors &global, const Eigen::MatrixXd &y,
                std::span<const Eigen::Index> rows, LocalFactors &local) {
  if (y.cols() != arch.observed_dim()) throw Error("local step: data dimension does not match architecture");
  const DmfaParams params = plugin_params(global);
  const auto conditioners = build_conditioners(arch, params, latent_marginals(arch, params));

  for (const Eigen::Index i : rows) {
    Eigen::VectorXd x = y.row(i).transpose();
    for (int l = 0; l < arch.layers(); ++l) {
      const auto &conds = conditioners[l];
      int best = 0;
      double best_score = score(conds[0], x);
      for (int k = 1; k < static_cast<int>(conds.size()); ++k) {
        const double s = score(conds[k], x);
        if (s > best_score) {
          best_score = s;
          best = k;
        }
      }
      const auto &c = conds[best];
      const Eigen::VectorXd rhs = c.prior_term + c.weighted_loading.transpose() * (x - c.mu);
      Eigen::VectorXd z = c.precision.solve(rhs);
      const Eigen::MatrixXd cov = c.precision.solve(Eigen::MatrixXd::Identity(z.size(), z.size()));
      local.z_mean[l].row(i) = z.transpose();
      local.z_var[l].row(i) = cov.diagonal().cwiseMax(kLocalVarianceFloor).transpose();
      local.resp[l].row(i).setZero();
      local.resp[l](i, best) = 1.0;
      x = std::move(z);
    }
  }
}

void update_local_categorical(const Architecture &arch, const GlobalFactors &global, const Eigen::MatrixXd &y,
                              std::span<const Eigen::Index> rows, LocalFactors &local) {
  std::vector<std::vector<detail::ComponentMoments>> mom(static_cast<std::size_t>(arch.layers()));
  std::vector<Eigen::VectorXd> elog_w;
  for (int l = 0; l < arch.layers(); ++l) {
    for (const auto &c : global.layers[l].components) mom[l].push_back(detail::moments_of(c));
    elog_w.push_back(detail::expected_log_weights(global.layers[l].concentration));
  }
  for (const Eigen::Index i : rows) {
    for (int l = 0; l < arch.layers(); ++l) {
      const Eigen::VectorXd x_mean =
          l == 0 ? Eigen::VectorXd(y.row(i).transpose()) : Eigen::VectorXd(local.z_mean[l - 1].row(i).transpose());
      const Eigen::VectorXd x_var = l == 0 ? Eigen::VectorXd::Zero(x_mean.size())
                                           : Eigen::VectorXd(local.z_var[l - 1].row(i).transpose());
      const Eigen::VectorXd z_mean = local.z_mean[l].row(i).transpose();
      const Eigen::VectorXd z_var = local.z_var[l].row(i).transpose();
      Eigen::VectorXd logits(arch.components[l]);
      for (int k = 0; k < arch.components[l]; ++k)
        logits[k] = elog_w[l][k] + detail::expected_component_loglik(mom[l][k], x_mean, x_var, z_mean, z_var);
      const double top = logits.maxCoeff();
      Eigen::VectorXd r = (logits.array() - top).exp();
      r /= r.sum();
      local.resp[l].row(i) = r.transpose();
    }
  }
}

} // namespace dmfa
