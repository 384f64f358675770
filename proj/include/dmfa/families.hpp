#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string_view>

namespace dmfa {

/// Exponential families used by the variational factors.
///
/// Stored parameterizations:
///   Gaussian       (mean, variance)
///   InverseGamma   (shape a, scale b), density ∝ x^(-a-1) exp(-b/x)
///   Gamma          (shape a, rate b),  density ∝ x^(a-1) exp(-b x)
///   Dirichlet      (alpha_1, ..., alpha_K)
///
/// Natural parameters pair with sufficient statistics (x, x^2), (log x, 1/x),
/// (log x, x) and (log p_1, ..., log p_K) respectively.
enum class Family { Gaussian, InverseGamma, Gamma, Dirichlet };

std::string_view family_name(Family family) noexcept;

double digamma(double x);
double trigamma(double x);

Eigen::VectorXd to_natural(Family family, const Eigen::VectorXd &stored);
Eigen::VectorXd from_natural(Family family, const Eigen::VectorXd &natural);

/// d(stored)/d(natural) evaluated at `stored`.
Eigen::MatrixXd natural_to_stored_jacobian(Family family, const Eigen::VectorXd &stored);

/// Fisher information in stored coordinates. Throws if it is singular.
Eigen::MatrixXd fisher_information(Family family, const Eigen::VectorXd &stored);

/// As above without the definiteness check (a one-component Dirichlet has a zero Fisher matrix).
Eigen::MatrixXd fisher_information_unchecked(Family family, const Eigen::VectorXd &stored);

/// True when every stored parameter lies in the family's domain.
bool in_domain(Family family, const Eigen::VectorXd &stored) noexcept;

namespace moments {

inline double inv_gamma_mean_inverse(double shape, double scale) { return shape / scale; }
inline double inv_gamma_mean_log(double shape, double scale) { return std::log(scale) - digamma(shape); }
inline double gamma_mean(double shape, double rate) { return shape / rate; }
inline double gamma_mean_log(double shape, double rate) { return digamma(shape) - std::log(rate); }

double gaussian_entropy(double var);
double inv_gamma_entropy(double shape, double scale);
double gamma_entropy(double shape, double rate);
double dirichlet_entropy(const Eigen::VectorXd &alpha);

} // namespace moments

} // namespace dmfa
