#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dmfa/model.hpp"

namespace dmfa {

inline constexpr int kScenarioVersion = 1;

/// Synthetic generator settings. "s1": Gaussian clusters with sparse factor
/// loadings on the informative coordinates plus pure-noise coordinates.
/// "s2": unbalanced phase-shifted sinusoid profiles with random amplitude and
/// heteroscedastic noise, each row standardized.
struct ScenarioSpec {
  int version = kScenarioVersion;
  std::string id = "s1";
  Eigen::Index n = 1000;
  int d = 50;
  int clusters = 5;
  int noise_features = 30;
  std::vector<double> weights; // empty means equal weights
  std::uint64_t seed = 1;

  // s1
  double mean_scale = 0.5;        // sd of cluster means per informative coordinate
  int factors = 2;                // latent factors per cluster
  int loading_support = 6;        // nonzero loading entries per factor
  double loading_min = 1.5;
  double loading_max = 3.0;
  double informative_noise = 0.5; // idiosyncratic sd on informative coordinates
  double noise_feature_sd = 1.0;

  // s2
  double cycles = 1.0;            // sinusoid periods across the d time points
  double amplitude_shape = 4.0;   // gamma shape of the per-row amplitude (mean 1)
  double noise_min = 0.2;
  double noise_max = 0.8;

  void validate() const;
  friend bool operator==(const ScenarioSpec &, const ScenarioSpec &) = default;
};

/// Defaults for "s1" (n = 1000, 20 informative + 30 noise coordinates) and
/// "s2" (n = 2000, d = 17, weights 0.55/0.25/0.12/0.05/0.03).
ScenarioSpec builtin_scenario(const std::string &id);

std::string scenario_to_json(const ScenarioSpec &spec);
ScenarioSpec scenario_from_json(const std::string &text);
ScenarioSpec load_scenario(const std::filesystem::path &path);

Dataset generate_scenario(const ScenarioSpec &spec);

} // namespace dmfa
