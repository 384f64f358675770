#include "dmfa/families.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <cmath>

#include "dmfa/architecture.hpp"

namespace dmfa {

namespace {
constexpr double kLog2PiE = 2.8378770664093454836;
}

std::string_view family_name(Family family) noexcept {
  switch (family) {
  case Family::Gaussian: return "gaussian";
  case Family::InverseGamma: return "inverse-gamma";
  case Family::Gamma: return "gamma";
  case Family::Dirichlet: return "dirichlet";
  }
  return "unknown";
}

double digamma(double x) { return boost::math::digamma(x); }
double trigamma(double x) { return boost::math::trigamma(x); }

Eigen::VectorXd to_natural(Family family, const Eigen::VectorXd &s) {
  switch (family) {
  case Family::Gaussian: return Eigen::Vector2d(s[0] / s[1], -0.5 / s[1]);
  case Family::InverseGamma: return Eigen::Vector2d(-(s[0] + 1.0), -s[1]);
  case Family::Gamma: return Eigen::Vector2d(s[0] - 1.0, -s[1]);
  case Family::Dirichlet: return (s.array() - 1.0).matrix();
  }
  throw Error("to_natural: unknown family");
}

Eigen::VectorXd from_natural(Family family, const Eigen::VectorXd &eta) {
  switch (family) {
  case Family::Gaussian: return Eigen::Vector2d(-eta[0] / (2.0 * eta[1]), -0.5 / eta[1]);
  case Family::InverseGamma: return Eigen::Vector2d(-eta[0] - 1.0, -eta[1]);
  case Family::Gamma: return Eigen::Vector2d(eta[0] + 1.0, -eta[1]);
  case Family::Dirichlet: return (eta.array() + 1.0).matrix();
  }
  throw Error("from_natural: unknown family");
}

Eigen::MatrixXd natural_to_stored_jacobian(Family family, const Eigen::VectorXd &s) {
  switch (family) {
  case Family::Gaussian: {
    const double m = s[0];
    const double v = s[1];
    Eigen::Matrix2d j;
    j << v, 2.0 * m * v, 0.0, 2.0 * v * v;
    return j;
  }
  case Family::InverseGamma: return -Eigen::Matrix2d::Identity();
  case Family::Gamma: return Eigen::Vector2d(1.0, -1.0).asDiagonal();
  case Family::Dirichlet: return Eigen::MatrixXd::Identity(s.size(), s.size());
  }
  throw Error("natural_to_stored_jacobian: unknown family");
}

Eigen::MatrixXd fisher_information_unchecked(Family family, const Eigen::VectorXd &s) {
  Eigen::MatrixXd f;
  switch (family) {
  case Family::Gaussian:
    f = Eigen::Vector2d(1.0 / s[1], 1.0 / (2.0 * s[1] * s[1])).asDiagonal();
    break;
  case Family::InverseGamma:
  case Family::Gamma:
    // identical in (shape, scale) for the inverse gamma and (shape, rate) for the gamma
    f.resize(2, 2);
    f << trigamma(s[0]), -1.0 / s[1], -1.0 / s[1], s[0] / (s[1] * s[1]);
    break;
  case Family::Dirichlet: {
    const auto k = s.size();
    f = Eigen::MatrixXd::Constant(k, k, -trigamma(s.sum()));
    for (Eigen::Index i = 0; i < k; ++i) f(i, i) += trigamma(s[i]);
    break;
  }
  }
  return f;
}

Eigen::MatrixXd fisher_information(Family family, const Eigen::VectorXd &s) {
  if (!in_domain(family, s)) throw Error("fisher_information: parameters outside the family domain");
  Eigen::MatrixXd f = fisher_information_unchecked(family, s);
  Eigen::LLT<Eigen::MatrixXd> llt(f);
  if (llt.info() != Eigen::Success || !f.allFinite())
    throw Error(std::string("fisher_information: singular Fisher matrix for ") + std::string(family_name(family)));
  return f;
}

bool in_domain(Family family, const Eigen::VectorXd &s) noexcept {
  if (!s.allFinite()) return false;
  switch (family) {
  case Family::Gaussian: return s.size() == 2 && s[1] > 0.0;
  case Family::InverseGamma:
  case Family::Gamma: return s.size() == 2 && s[0] > 0.0 && s[1] > 0.0;
  case Family::Dirichlet: return s.size() >= 1 && (s.array() > 0.0).all();
  }
  return false;
}

namespace moments {

double gaussian_entropy(double var) { return 0.5 * (kLog2PiE + std::log(var)); }

double inv_gamma_entropy(double shape, double scale) {
  return shape + std::log(scale) + std::lgamma(shape) - (1.0 + shape) * digamma(shape);
}

double gamma_entropy(double shape, double rate) {
  return shape - std::log(rate) + std::lgamma(shape) + (1.0 - shape) * digamma(shape);
}

double dirichlet_entropy(const Eigen::VectorXd &alpha) {
  const double total = alpha.sum();
  double log_beta = -std::lgamma(total);
  double tail = 0.0;
  for (Eigen::Index k = 0; k < alpha.size(); ++k) {
    log_beta += std::lgamma(alpha[k]);
    tail += (alpha[k] - 1.0) * digamma(alpha[k]);
  }
  return log_beta + (total - static_cast<double>(alpha.size())) * digamma(total) - tail;
}

} // namespace moments

} // namespace dmfa
