#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "dmfa/architecture.hpp"

namespace dmfa {

using Rng = std::mt19937_64;

/// Cluster labels, one per observation, values in 1..K.
using PartitionLabels = std::vector<int>;

struct Dataset {
  Eigen::MatrixXd y; // n x d
  std::optional<PartitionLabels> labels;

  [[nodiscard]] Eigen::Index rows() const noexcept { return y.rows(); }
  [[nodiscard]] Eigen::Index cols() const noexcept { return y.cols(); }
};

struct FactorComponent {
  Eigen::VectorXd mean;    // D[l-1]
  Eigen::MatrixXd loading; // D[l-1] x D[l]
  Eigen::VectorXd noise;   // diagonal of delta, D[l-1]
};

struct ModelLayer {
  Eigen::VectorXd weights;
  std::vector<FactorComponent> components;
};

/// Point values of the global parameters (weights, means, loadings, noise) per layer.
struct DmfaParams {
  std::vector<ModelLayer> layers;
};

/// Throws `Error` unless weights are on the simplex, noise is positive and
/// every block has the shape the architecture implies.
void validate_params(const Architecture &arch, const DmfaParams &params);

struct GmmComponent {
  PathIndex path;
  double weight = 0.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Collapses the layered model into its equivalent Gaussian mixture, one
/// component per path. The covariance carries the innermost (prod B)(prod B)^T
/// term implied by the standard normal top-layer latent.
std::vector<GmmComponent> collapse_to_gmm(const Architecture &arch, const DmfaParams &params);

/// Collapsed mixture with cached Cholesky factors; evaluate many points cheaply.
class CollapsedMixture {
public:
  CollapsedMixture(const Architecture &arch, const DmfaParams &params);

  [[nodiscard]] double log_density(const Eigen::Ref<const Eigen::VectorXd> &y) const;
  /// log(p_k * p(y | first-layer component k)) for k = 1..K[1].
  [[nodiscard]] Eigen::VectorXd cluster_log_scores(const Eigen::Ref<const Eigen::VectorXd> &y) const;
  [[nodiscard]] const std::vector<GmmComponent> &components() const noexcept { return components_; }

private:
  struct Cached {
    Eigen::MatrixXd chol_lower;
    double log_norm = 0.0; // log weight - 0.5 * (d log 2pi + log det)
  };
  std::vector<GmmComponent> components_;
  std::vector<Cached> cached_;
  int first_layer_components_ = 0;
};

double log_density(const Eigen::Ref<const Eigen::VectorXd> &y, const Architecture &arch, const DmfaParams &params);
Eigen::VectorXd cluster_scores(const Eigen::Ref<const Eigen::VectorXd> &y, const Architecture &arch,
                               const DmfaParams &params);

/// Per-row argmax of the first-layer cluster scores; ties go to the lowest index.
PartitionLabels assign_clusters(const Dataset &data, const Architecture &arch, const DmfaParams &params);

struct LatentRecord {
  std::vector<Eigen::MatrixXd> z;            // layer l = 1..L at index l-1, n x D[l]
  std::vector<std::vector<int>> components;  // zero-based component chosen at each layer
};

struct Sample {
  Dataset data;
  LatentRecord latents;
};

/// Draws from the generative model top-down. Labels are set to the first-layer component (1-based).
Sample sample_dataset(const Architecture &arch, const DmfaParams &params, Eigen::Index n, std::uint64_t seed);

struct RandomParamsOptions {
  double mean_scale = 2.0;
  double loading_scale = 1.0;
  double noise_min = 0.2;
  double noise_max = 1.0;
  double dirichlet = 2.0;
};

/// Random valid parameters, used for simulation studies and property tests.
DmfaParams random_params(const Architecture &arch, Rng &rng, const RandomParamsOptions &options = {});

} // namespace dmfa
