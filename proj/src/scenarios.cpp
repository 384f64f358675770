#include "dmfa/scenarios.hpp"

#include <cmath>
#include <json.hpp>
#include <numbers>
#include <numeric>
#include <random>

#include "dmfa/checkpoint.hpp"
#include "dmfa/preprocessing.hpp"

namespace dmfa {

using nlohmann::json;

void ScenarioSpec::validate() const {
  if (version != kScenarioVersion) throw Error("scenario: unsupported version " + std::to_string(version));
  if (id != "s1" && id != "s2") throw Error("scenario: id must be 's1' or 's2', got '" + id + "'");
  if (n < 0) throw Error("scenario: n must be non-negative");
  if (clusters < 1) throw Error("scenario: need at least one cluster");
  if (noise_features < 0 || noise_features >= d) throw Error("scenario: need 0 <= noise_features < d");
  if (!weights.empty()) {
    if (static_cast<int>(weights.size()) != clusters) throw Error("scenario: one weight per cluster is required");
    for (double w : weights)
      if (!(w > 0.0)) throw Error("scenario: weights must be positive");
    if (std::abs(std::accumulate(weights.begin(), weights.end(), 0.0) - 1.0) > 1e-9)
      throw Error("scenario: weights must sum to 1");
  }
  if (id == "s1") {
    if (factors < 0 || loading_support < 0 || loading_support > d - noise_features)
      throw Error("scenario: loading support exceeds the informative coordinates");
    if (!(loading_min >= 0.0 && loading_max >= loading_min) || !(informative_noise > 0.0) ||
        !(noise_feature_sd > 0.0) || !(mean_scale >= 0.0))
      throw Error("scenario: invalid s1 scales");
  } else {
    if (d - noise_features < 2) throw Error("scenario: s2 needs at least 2 time points");
    if (!(amplitude_shape > 0.0) || !(noise_min > 0.0) || !(noise_max >= noise_min))
      throw Error("scenario: invalid s2 scales");
  }
}

ScenarioSpec builtin_scenario(const std::string &id) {
  ScenarioSpec s;
  s.id = id;
  if (id == "s2") {
    s.n = 2000;
    s.d = 17;
    s.noise_features = 0;
    s.weights = {0.55, 0.25, 0.12, 0.05, 0.03};
  } else if (id != "s1") {
    throw Error("unknown scenario '" + id + "' (s1, s2)");
  }
  return s;
}

std::string scenario_to_json(const ScenarioSpec &s) {
  json j{{"version", s.version},
         {"id", s.id},
         {"n", s.n},
         {"d", s.d},
         {"clusters", s.clusters},
         {"noise_features", s.noise_features},
         {"weights", s.weights},
         {"seed", s.seed}};
  if (s.id == "s1") {
    j["mean_scale"] = s.mean_scale;
    j["factors"] = s.factors;
    j["loading_support"] = s.loading_support;
    j["loading_min"] = s.loading_min;
    j["loading_max"] = s.loading_max;
    j["informative_noise"] = s.informative_noise;
    j["noise_feature_sd"] = s.noise_feature_sd;
  } else {
    j["cycles"] = s.cycles;
    j["amplitude_shape"] = s.amplitude_shape;
    j["noise_min"] = s.noise_min;
    j["noise_max"] = s.noise_max;
  }
  return j.dump(2) + "\n";
}

ScenarioSpec scenario_from_json(const std::string &text) {
  try {
    const auto j = json::parse(text);
    ScenarioSpec s = builtin_scenario(j.at("id").get<std::string>());
    s.version = j.at("version").get<int>();
    auto get = [&](const char *key, auto &field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("n", s.n);
    get("d", s.d);
    get("clusters", s.clusters);
    get("noise_features", s.noise_features);
    get("weights", s.weights);
    get("seed", s.seed);
    get("mean_scale", s.mean_scale);
    get("factors", s.factors);
    get("loading_support", s.loading_support);
    get("loading_min", s.loading_min);
    get("loading_max", s.loading_max);
    get("informative_noise", s.informative_noise);
    get("noise_feature_sd", s.noise_feature_sd);
    get("cycles", s.cycles);
    get("amplitude_shape", s.amplitude_shape);
    get("noise_min", s.noise_min);
    get("noise_max", s.noise_max);
    s.validate();
    return s;
  } catch (const json::exception &e) {
    throw Error(std::string("scenario: invalid document: ") + e.what());
  }
}

ScenarioSpec load_scenario(const std::filesystem::path &path) {
  try {
    return scenario_from_json(read_text_file(path));
  } catch (const Error &e) {
    throw Error(path.string() + ": " + e.what());
  }
}

namespace {

std::vector<int> draw_labels(const ScenarioSpec &s, Rng &rng) {
  std::vector<double> w = s.weights;
  if (w.empty()) w.assign(static_cast<std::size_t>(s.clusters), 1.0);
  std::discrete_distribution<int> pick(w.begin(), w.end());
  std::vector<int> labels(static_cast<std::size_t>(s.n));
  for (auto &l : labels) l = pick(rng);
  return labels;
}

Dataset generate_s1(const ScenarioSpec &s, Rng &rng) {
  const int p = s.d - s.noise_features;
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> magnitude(s.loading_min, s.loading_max);
  std::bernoulli_distribution sign;

  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> loadings;
  std::vector<int> coords(static_cast<std::size_t>(p));
  for (int k = 0; k < s.clusters; ++k) {
    means.push_back(Eigen::VectorXd::NullaryExpr(p, [&] { return s.mean_scale * normal(rng); }));
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(p, s.factors);
    for (int f = 0; f < s.factors; ++f) {
      std::iota(coords.begin(), coords.end(), 0);
      std::shuffle(coords.begin(), coords.end(), rng);
      for (int e = 0; e < s.loading_support; ++e) b(coords[e], f) = (sign(rng) ? 1.0 : -1.0) * magnitude(rng);
    }
    loadings.push_back(std::move(b));
  }

  const auto labels = draw_labels(s, rng);
  Dataset data;
  data.y.resize(s.n, s.d);
  Eigen::VectorXd f(s.factors);
  for (Eigen::Index i = 0; i < s.n; ++i) {
    const int k = labels[static_cast<std::size_t>(i)];
    for (auto &v : f) v = normal(rng);
    Eigen::VectorXd x = means[k] + loadings[k] * f;
    for (auto &v : x) v += s.informative_noise * normal(rng);
    data.y.row(i).head(p) = x.transpose();
    for (int j = p; j < s.d; ++j) data.y(i, j) = s.noise_feature_sd * normal(rng);
  }
  PartitionLabels truth(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) truth[i] = labels[i] + 1;
  data.labels = std::move(truth);
  return data;
}

Dataset generate_s2(const ScenarioSpec &s, Rng &rng) {
  const int p = s.d - s.noise_features;
  std::normal_distribution<double> normal;
  std::gamma_distribution<double> amplitude(s.amplitude_shape, 1.0 / s.amplitude_shape);
  const double two_pi = 2.0 * std::numbers::pi;

  const auto labels = draw_labels(s, rng);
  Dataset data;
  data.y.resize(s.n, s.d);
  for (Eigen::Index i = 0; i < s.n; ++i) {
    const int k = labels[static_cast<std::size_t>(i)];
    const double phase = two_pi * k / s.clusters;
    const double amp = amplitude(rng);
    const double offset = 0.5 * normal(rng);
    for (int j = 0; j < p; ++j) {
      const double t = static_cast<double>(j) / p;
      // noise level varies over time and differs per cluster
      const double sd = s.noise_min + (s.noise_max - s.noise_min) * 0.5 * (1.0 + std::sin(two_pi * t + k));
      data.y(i, j) = offset + amp * std::sin(two_pi * s.cycles * t + phase) + sd * normal(rng);
    }
    for (int j = p; j < s.d; ++j) data.y(i, j) = normal(rng);
  }
  PartitionLabels truth(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) truth[i] = labels[i] + 1;
  data.labels = std::move(truth);
  if (s.n > 0) data = standardize_rows(data);
  return data;
}

} // namespace

Dataset generate_scenario(const ScenarioSpec &spec) {
  spec.validate();
  Rng rng(spec.seed);
  return spec.id == "s1" ? generate_s1(spec, rng) : generate_s2(spec, rng);
}

} // namespace dmfa
