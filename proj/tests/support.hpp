#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dmfa/metrics.hpp"
#include "dmfa/optimizer.hpp"

namespace dmfa::test {

/// Random valid architecture with observed dimension <= max_d, at most
/// max_layers layers and at most max_paths paths.
Architecture random_arch(Rng &rng, int max_d, int max_layers, int max_paths);

/// A small fitted-looking problem: data drawn from random parameters and a
/// variational state after initialization plus `sweeps` full-batch CAVI sweeps.
struct Problem {
  Architecture arch;
  Dataset data;
  PriorHyperparams prior;
  VariationalState state;
};

Problem random_problem(std::uint64_t seed, int max_n = 50, int max_d = 5, int max_paths = 6, int sweeps = 1);

/// One full-batch sweep: local step on every row, then every global factor set
/// to its coordinate-ascent target in update-group order.
void cavi_sweep(Problem &p, bool soft = true);

/// All rows 0..n-1.
std::vector<Eigen::Index> all_rows(Eigen::Index n);

/// Central finite difference of f along each coordinate of x.
Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd &)> &f, const Eigen::VectorXd &x,
                                   double h);

/// Richardson-extrapolated central difference with a step of h |x_i| per coordinate.
Eigen::VectorXd richardson_difference(const std::function<double(const Eigen::VectorXd &)> &f, const Eigen::VectorXd &x,
                                      double h);

double relative_error(const Eigen::VectorXd &a, const Eigen::VectorXd &b, double floor = 1e-8);

PartitionLabels random_partition(Rng &rng, int n, int max_k);

// brute-force oracles for the clustering metrics
double brute_force_ari(const PartitionLabels &a, const PartitionLabels &b);
double brute_force_mr(const PartitionLabels &pred, const PartitionLabels &truth);
double brute_force_emi(const PartitionLabels &a, const PartitionLabels &b);
double brute_force_ami(const PartitionLabels &a, const PartitionLabels &b);

/// Diagonal-covariance Gaussian mixture fitted by EM from the best of several
/// k-means starts; the comparison baseline for clustering recovery.
PartitionLabels diagonal_gmm_labels(const Eigen::MatrixXd &y, int k, std::uint64_t seed, int restarts = 5,
                                    int iterations = 200);

/// Random stored parameters for every global factor.
void randomize_globals(const Architecture &arch, GlobalFactors &g, Rng &rng);
/// Random latent moments and normalized responsibilities.
void randomize_locals(LocalFactors &local, Rng &rng);

/// Scalar one-layer model (d = D[1] = 1) on three fixed observations with
/// random factors; small enough to derive every conditional by hand.
struct ScalarCase {
  Architecture arch;
  Dataset data;
  PriorHyperparams prior;
  VariationalState state;
};

ScalarCase scalar_case(std::uint64_t seed, int k = 1);

/// Natural parameters of exp(E[log complete conditional]) for a factor of the
/// first component of a one-component ScalarCase, written out symbolically.
Eigen::VectorXd symbolic_conditional(const ScalarCase &s, FactorKind kind);

inline FactorId scalar_id(FactorKind kind) { return {0, kind, 0, 0, 0}; }

/// Fresh empty directory under the system temp path.
std::filesystem::path fresh_dir(const std::string &name);

} // namespace dmfa::test
