#pragma once

#include <Eigen/Dense>

#include "dmfa/variational.hpp"

namespace dmfa::detail {

// Moments of one component's factors used by the local terms.
struct ComponentMoments {
  Eigen::VectorXd mu_mean;
  Eigen::VectorXd mu_var;
  Eigen::MatrixXd b_mean;
  Eigen::MatrixXd b_var;
  Eigen::MatrixXd b_mean_sq;
  Eigen::VectorXd inv_noise; // E[1/delta]
  Eigen::VectorXd log_noise; // E[log delta]
};

ComponentMoments moments_of(const ComponentFactors &c);

Eigen::VectorXd expected_log_weights(const Eigen::VectorXd &alpha);

// E[log N(x; mu + B z, diag delta)] under independent Gaussian x and z.
double expected_component_loglik(const ComponentMoments &m, const Eigen::Ref<const Eigen::VectorXd> &x_mean,
                                 const Eigen::Ref<const Eigen::VectorXd> &x_var,
                                 const Eigen::Ref<const Eigen::VectorXd> &z_mean,
                                 const Eigen::Ref<const Eigen::VectorXd> &z_var);

} // namespace dmfa::detail
