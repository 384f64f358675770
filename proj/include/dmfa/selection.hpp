#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dmfa/optimizer.hpp"

namespace dmfa {

struct LayerPrune {
  int layer = 0;                  // 0-based
  std::vector<int> kept;          // 0-based component indices
  std::vector<int> removed;
  Eigen::VectorXd weights;        // variational-mean weights before pruning
  bool all_below = false;         // every weight was under the threshold; the largest was kept
};

struct PruneReport {
  std::vector<LayerPrune> layers;
  Architecture reduced;

  [[nodiscard]] bool changed() const;
};

/// Drops components whose mean weight alpha_k / sum(alpha) is below `threshold`.
PruneReport prune_components(const Architecture &arch, const GlobalFactors &global, double threshold = 0.01);

/// Keeps the listed components of every layer and renormalizes the Dirichlet.
GlobalFactors restrict_components(const GlobalFactors &global, const PruneReport &report);

/// Every (D[1], ..., D[L]) with 2 D[l+1] <= D[l] - 1, for each requested L,
/// crossed with every K proposal whose length matches L.
std::vector<Architecture> enumerate_architectures(int d, const std::vector<int> &layer_counts,
                                                  const std::vector<std::vector<int>> &k_proposals);

/// K proposals with `first` components in layer 1 and every combination of
/// `deeper` for the remaining layers.
std::vector<std::vector<int>> default_k_proposals(int first, const std::vector<int> &layer_counts,
                                                  const std::vector<int> &deeper = {1, 2, 3});

enum class CandidateStatus { Scored, Failed };

struct ArchitectureCandidate {
  Architecture arch;
  double score = 0.0;
  CandidateStatus status = CandidateStatus::Failed;
  std::string message;
  double seconds = 0.0;
};

inline constexpr int kScoreIterations = 250;
inline constexpr int kScoreFirst = 238;

/// Mean of records with iteration in [first, last].
double tail_mean(const FitTrace &trace, int first = kScoreFirst, int last = kScoreIterations);

struct ScoreOptions {
  FitConfig config;      // max_iterations is forced to 250, stride to 1
  bool overfitted = false;
};

ArchitectureCandidate score_architecture(const Dataset &data, const Architecture &arch, const ScoreOptions &options,
                                         const std::optional<PriorHyperparams> &prior = std::nullopt);

/// Scores every candidate with seed base + index on `jobs` worker threads.
/// Results are in input order and do not depend on `jobs`.
std::vector<ArchitectureCandidate> score_candidates(const Dataset &data, const std::vector<Architecture> &archs,
                                                    const ScoreOptions &options, int jobs = 1, bool timing = false);

/// Highest score; ties go to the smaller parameter count. Throws if none scored.
const ArchitectureCandidate &select_model(const std::vector<ArchitectureCandidate> &candidates);

/// CSV arch,score,status,params,seconds.
std::string selection_report_csv(const std::vector<ArchitectureCandidate> &candidates);

} // namespace dmfa
