#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dmfa/architecture.hpp"
#include "dmfa/families.hpp"
#include "dmfa/model.hpp"

namespace dmfa {

/// Known scales of the prior hierarchy, one entry per layer.
///
///   mu        ~ N(0, G g),        g  ~ IG(1/2, 1/2)
///   vec(B)_j  ~ N(0, tau / h_j),  h_j ~ Ga(1/2, rate c_j), c_j ~ Ga(1/2, rate 1)
///   tau       ~ IG(1/2, 1/xi),    xi ~ IG(1/2, 1/nu^2)
///   delta     ~ IG(1/2, 1/psi),   psi ~ IG(1/2, 1/A^2)
///   p         ~ Dir(rho)
struct PriorHyperparams {
  std::vector<double> mean_scale;             // G
  std::vector<double> global_scale;           // nu
  std::vector<double> noise_scale;            // A
  std::vector<Eigen::VectorXd> concentration; // rho

  /// G = 2, nu = 1, A = 2.5 and rho = 1, or rho = 0.5 for overfitted layers.
  static PriorHyperparams defaults(const Architecture &arch, bool overfitted = false);
};

void validate_prior(const Architecture &arch, const PriorHyperparams &prior);

struct GaussianField {
  Eigen::ArrayXXd mean;
  Eigen::ArrayXXd var;
};

struct InverseGammaField {
  Eigen::ArrayXXd shape;
  Eigen::ArrayXXd scale;
};

struct GammaField {
  Eigen::ArrayXXd shape;
  Eigen::ArrayXXd rate;
};

/// Variational factors of one mixture component. Vector-valued blocks are
/// stored as single-column arrays; tau and xi are 1 x 1.
struct ComponentFactors {
  GaussianField mean;                   // q(mu), rows x 1
  GaussianField loading;                // q(B), rows x cols
  InverseGammaField noise;              // q(delta), rows x 1
  InverseGammaField noise_aux;          // q(psi), rows x 1
  InverseGammaField mean_scale;         // q(g), rows x 1
  InverseGammaField global_shrink;      // q(tau), 1 x 1
  InverseGammaField global_shrink_aux;  // q(xi), 1 x 1
  GammaField local_shrink;              // q(h), rows x cols
  GammaField local_shrink_aux;          // q(c), rows x cols
};

struct LayerFactors {
  std::vector<ComponentFactors> components;
  Eigen::VectorXd concentration; // q(p) = Dir(concentration)
};

/// lambda_G: every global unknown has exactly one factor.
struct GlobalFactors {
  std::vector<LayerFactors> layers;

  /// Shape-correct factor set filled with unit placeholders.
  static GlobalFactors placeholder(const Architecture &arch);
};

/// lambda_L: per observation, per layer l = 1..L (index l-1).
struct LocalFactors {
  std::vector<Eigen::MatrixXd> z_mean; // n x D[l]
  std::vector<Eigen::MatrixXd> z_var;  // n x D[l]
  std::vector<Eigen::MatrixXd> resp;   // n x K[l]

  static LocalFactors zeros(const Architecture &arch, Eigen::Index n);
  [[nodiscard]] Eigen::Index rows() const { return resp.empty() ? 0 : resp.front().rows(); }
};

enum class FactorKind {
  Mean,
  Loading,
  Noise,
  NoiseAux,
  MeanScale,
  GlobalShrink,
  GlobalShrinkAux,
  LocalShrink,
  LocalShrinkAux,
  Weights,
};

inline constexpr std::size_t kFactorKindCount = 10;

std::string_view kind_name(FactorKind kind) noexcept;
Family family_of(FactorKind kind) noexcept;

/// Addresses one scalar factor (or the per-layer Dirichlet when kind == Weights).
struct FactorId {
  int layer = 0;
  FactorKind kind = FactorKind::Mean;
  int component = 0;
  int row = 0;
  int col = 0;

  friend bool operator==(const FactorId &, const FactorId &) = default;
};

std::string describe(const FactorId &id);

/// Every factor of lambda_G in a fixed order.
std::vector<FactorId> enumerate_factors(const Architecture &arch);

/// Stored parameters of a factor, see `Family`.
Eigen::VectorXd get_factor(const GlobalFactors &factors, const FactorId &id);
void set_factor(GlobalFactors &factors, const FactorId &id, const Eigen::VectorXd &stored);

/// Expected sufficient statistics of one component, weighted by responsibilities.
/// "input" is z^(l-1) (y for the first layer), "latent" is z^(l).
struct ComponentStats {
  double count = 0.0;
  Eigen::VectorXd latent_sum;   // sum r E[z]
  Eigen::MatrixXd latent_outer; // sum r E[z z^T]
  Eigen::VectorXd input_sum;    // sum r E[x]
  Eigen::VectorXd input_sq;     // sum r E[x^2]
  Eigen::MatrixXd cross;        // sum r E[x] E[z]^T
};

struct SufficientStats {
  std::vector<std::vector<ComponentStats>> layers;
};

/// Statistics over `rows` (all rows when empty), each row weighted by `scale`.
SufficientStats accumulate_stats(const Architecture &arch, const Eigen::MatrixXd &y, const LocalFactors &local,
                                 std::span<const Eigen::Index> rows, double scale);

/// Coordinate-ascent target of one factor given all others: stored parameters
/// of the factor proportional to exp(E_{-factor}[log joint]).
Eigen::VectorXd cavi_target(const Architecture &arch, const FactorId &id, const PriorHyperparams &prior,
                            const GlobalFactors &global, const SufficientStats &stats);

/// Exact full-data update of a single global factor.
Eigen::VectorXd update_global_factor(const Architecture &arch, const FactorId &id, const Dataset &data,
                                     const PriorHyperparams &prior, const GlobalFactors &global,
                                     const LocalFactors &local);

struct ElboBreakdown {
  std::array<double, kFactorKindCount> prior_terms{}; // E[log p(.)] per global kind
  std::array<double, kFactorKindCount> entropies{};   // -E[log q(.)] per global kind
  double likelihood = 0.0;   // sum_i sum_l sum_k r E[log N(z^(l-1) | ...)]
  double assignment = 0.0;   // sum_i sum_l sum_k r E[log p_k]
  double top_latent = 0.0;   // sum_i E[log N(z^(L); 0, I)]
  double local_entropy = 0.0;
  double total = 0.0;

  [[nodiscard]] double global_part() const;
  [[nodiscard]] double local_part() const { return likelihood + assignment + top_latent + local_entropy; }
  [[nodiscard]] double sum_of_parts() const { return global_part() + local_part(); }
};

/// Closed-form ELBO. With `subset`, returns L^F + (n/|subset|) sum_{i in subset} L^i.
ElboBreakdown elbo(const Architecture &arch, const Dataset &data, const PriorHyperparams &prior,
                   const GlobalFactors &global, const LocalFactors &local,
                   std::optional<std::span<const Eigen::Index>> subset = std::nullopt);

/// Gradient of the ELBO with respect to a factor's stored parameters, from the
/// conjugate identity grad = F * J^{-1} (eta* - eta).
Eigen::VectorXd elbo_gradient(const Architecture &arch, const FactorId &id, const PriorHyperparams &prior,
                              const GlobalFactors &global, const SufficientStats &stats);

/// Same gradient in unconstrained coordinates: identity for Gaussian means,
/// log for every positive parameter.
Eigen::VectorXd elbo_gradient_unconstrained(const Architecture &arch, const FactorId &id,
                                            const PriorHyperparams &prior, const GlobalFactors &global,
                                            const SufficientStats &stats);

Eigen::VectorXd to_unconstrained(Family family, const Eigen::VectorXd &stored);
Eigen::VectorXd from_unconstrained(Family family, const Eigen::VectorXd &free);

/// Point values used by the local step: means of the Gaussian and Dirichlet
/// factors and 1/E[1/delta] for the noise.
DmfaParams plugin_params(const GlobalFactors &global);

/// Reported point estimate: Gaussian/Dirichlet means, inverse-gamma mode for the noise.
DmfaParams posterior_summary(const GlobalFactors &global);

/// Variance floor applied to local Gaussian factors.
inline constexpr double kLocalVarianceFloor = 1e-12;

/// Layerwise local approximation for the given rows: picks the most likely
/// path layer by layer and conditions each latent on the mean of the one
/// below, using the moment-matched deeper marginal as its prior. Sets one-hot
/// responsibilities along the chosen path.
void local_step(const Architecture &arch, const GlobalFactors &global, const Eigen::MatrixXd &y,
                std::span<const Eigen::Index> rows, LocalFactors &local);

/// Mean-field responsibilities given the current z factors:
/// r ∝ exp(E[log p_k] + E[log N(z^(l-1); mu_k + B_k z^(l), delta_k)]).
void update_local_categorical(const Architecture &arch, const GlobalFactors &global, const Eigen::MatrixXd &y,
                              std::span<const Eigen::Index> rows, LocalFactors &local);

struct InitOptions {
  int kmeans_iterations = 50;
  /// k-means runs per layer; the lowest within-cluster sum of squares wins.
  int kmeans_restarts = 10;
  /// EM sweeps of a diagonal-covariance mixture that refine the best k-means partition (0 skips).
  int diagonal_em_iterations = 50;
  /// Row count that sets the precision of the initial Gaussian factors.
  double min_cluster_weight = 1.0;
};

struct VariationalState {
  GlobalFactors global;
  LocalFactors local;
};

/// Data-driven starting point: recursive k-means++ partitions per layer
/// refined by diagonal-covariance EM,
/// principal directions of within-cluster residuals for loadings, auxiliary
/// scales at their conditional moments, Dirichlet at rho + n/K, then one
/// local step over all rows. Throws when n < K[1].
VariationalState init_variational(const Architecture &arch, const Dataset &data, const PriorHyperparams &prior,
                                  std::uint64_t seed, const InitOptions &options = {});

} // namespace dmfa
