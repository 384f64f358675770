#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmfa/architecture.hpp"
#include "dmfa/model.hpp"
#include "dmfa/variational.hpp"

namespace dmfa {

enum class StepRule { Adaptive, RobbinsMonro, Constant };

std::string_view step_rule_name(StepRule rule) noexcept;
StepRule parse_step_rule(std::string_view name);

struct FitConfig {
  double batch_fraction = 0.05;
  Eigen::Index batch_min = 1;
  Eigen::Index batch_max = 1024;
  int max_iterations = 1000;
  std::uint64_t seed = 0;
  int elbo_record_stride = 1;
  /// Stop when the mean ELBO of the last `convergence_window` records moves by
  /// less than `convergence_tolerance` (relative) against the window before. 0 disables.
  int convergence_window = 0;
  double convergence_tolerance = 1e-5;

  StepRule step_rule = StepRule::Adaptive;
  int adaptive_window = 32;
  /// Adaptive steps never fall below the Robbins-Monro schedule a0 (1 + t/delay)^-power.
  double step_scale = 1.0;   // a0 for the schedule, the step for Constant
  double step_delay = 10.0;  // tau in a0 (1 + t/tau)^-0.75
  double step_power = 0.75;

  /// Feed mean-field responsibilities instead of the local step's hard path to the global updates.
  bool soft_responsibilities = true;
  /// Evaluate the full-data ELBO every this many iterations (0 never).
  int full_elbo_every = 0;
  /// Record wall-clock seconds in the trace. Off keeps traces byte-reproducible.
  bool timing = false;

  void validate() const;
};

/// clamp(ceil(fraction * n), batch_min, batch_max), never above n.
Eigen::Index batch_size(Eigen::Index n, const FitConfig &config);

/// Uniform subset without replacement, sorted ascending.
std::vector<Eigen::Index> draw_minibatch(Eigen::Index n, const FitConfig &config, Rng &rng);

/// Reuses a permutation buffer across draws (partial Fisher-Yates).
class MinibatchSampler {
public:
  MinibatchSampler(Eigen::Index n, Eigen::Index batch);
  std::span<const Eigen::Index> draw(Rng &rng);
  [[nodiscard]] Eigen::Index batch() const noexcept { return batch_; }

private:
  std::vector<Eigen::Index> perm_;
  std::vector<Eigen::Index> out_;
  Eigen::Index batch_;
};

struct TraceRecord {
  int iteration = 0;
  double elbo = 0.0;
  double step = 0.0; // mean step over update groups
  double seconds = 0.0;
  std::optional<double> full_elbo;
};

struct FitTrace {
  std::vector<TraceRecord> records;
};

/// Per-factor increments in natural coordinates.
struct NaturalGradient {
  std::vector<FactorId> ids;
  std::vector<Eigen::VectorXd> increments;

  [[nodiscard]] double max_abs() const;
};

/// eta*(scaled minibatch statistics) - eta for every global factor, all taken
/// at the same state. Locals for `batch` must already be refreshed.
NaturalGradient estimate_gradient(const Architecture &arch, const Dataset &data, const PriorHyperparams &prior,
                                  const GlobalFactors &global, const LocalFactors &local,
                                  std::span<const Eigen::Index> batch);

/// Fisher information of one factor in its stored parameterization.
Eigen::MatrixXd fisher_block(const GlobalFactors &global, const FactorId &id);

/// Step from exponentially weighted moments of a gradient vector:
/// a = |g_bar|^2 / h_bar with h_bar the running mean of |g|^2, clamped to (0, 1].
/// The averaging memory follows memory <- max(window, memory (1 - a) + 1).
class AdaptiveStep {
public:
  explicit AdaptiveStep(int window = 32) : window_(window) {}
  double update(const Eigen::VectorXd &gradient);
  [[nodiscard]] int count() const noexcept { return t_; }
  [[nodiscard]] double memory() const noexcept { return memory_; }

  /// g^T g / (tr V + g^T g) written as |mean|^2 / second moment.
  static double rule(const Eigen::VectorXd &mean, double second_moment);

private:
  int window_;
  int t_ = 0;
  Eigen::VectorXd mean_;
  double second_ = 0.0;
  double memory_ = 0.0;
};

/// Groups of mutually independent factors, in update order.
std::vector<std::vector<FactorId>> update_groups(const Architecture &arch);

class FitError : public Error {
public:
  FitError(const std::string &what, FitTrace trace) : Error(what), trace_(std::move(trace)) {}
  [[nodiscard]] const FitTrace &trace() const noexcept { return trace_; }

private:
  FitTrace trace_;
};

struct FitResult {
  DmfaParams summary;
  VariationalState state;
  FitTrace trace;
  int iterations = 0;
  bool converged = false;
  Rng rng;
};

/// Owns the global factors and runs the nested local/global iteration.
class Optimizer {
public:
  Optimizer(Architecture arch, const Dataset &data, PriorHyperparams prior, FitConfig config,
            VariationalState start);

  /// One iteration; returns the recorded stochastic ELBO.
  double step();
  /// Runs until max_iterations or convergence.
  FitResult run();

  [[nodiscard]] const VariationalState &state() const noexcept { return state_; }
  [[nodiscard]] int iteration() const noexcept { return t_; }
  [[nodiscard]] const FitTrace &trace() const noexcept { return trace_; }

private:
  double step_size(std::size_t group, const Eigen::VectorXd &gradient);
  bool converged() const;

  Architecture arch_;
  const Dataset &data_;
  PriorHyperparams prior_;
  FitConfig config_;
  VariationalState state_;
  Rng rng_;
  MinibatchSampler sampler_;
  std::vector<std::vector<FactorId>> groups_;
  std::vector<AdaptiveStep> adaptive_;
  FitTrace trace_;
  int t_ = 0;
};

/// Initializes from `config.seed` and fits.
FitResult fit(const Dataset &data, const Architecture &arch, const PriorHyperparams &prior, const FitConfig &config);

} // namespace dmfa
