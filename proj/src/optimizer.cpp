#include "dmfa/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

namespace dmfa {

std::string_view step_rule_name(StepRule rule) noexcept {
  switch (rule) {
  case StepRule::Adaptive: return "adaptive";
  case StepRule::RobbinsMonro: return "robbins-monro";
  case StepRule::Constant: return "constant";
  }
  return "adaptive";
}

StepRule parse_step_rule(std::string_view name) {
  if (name == "adaptive") return StepRule::Adaptive;
  if (name == "robbins-monro") return StepRule::RobbinsMonro;
  if (name == "constant") return StepRule::Constant;
  throw Error("unknown step rule '" + std::string(name) + "' (adaptive, robbins-monro, constant)");
}

void FitConfig::validate() const {
  if (!(batch_fraction > 0.0 && batch_fraction <= 1.0)) throw Error("fit config: batch fraction must be in (0, 1]");
  if (batch_min < 1 || batch_max < batch_min) throw Error("fit config: need 1 <= batch_min <= batch_max");
  if (max_iterations < 0) throw Error("fit config: max_iterations must be non-negative");
  if (elbo_record_stride < 1) throw Error("fit config: elbo_record_stride must be at least 1");
  if (convergence_window < 0 || !(convergence_tolerance > 0.0))
    throw Error("fit config: convergence window must be >= 0 and tolerance > 0");
  if (adaptive_window < 1) throw Error("fit config: adaptive window must be at least 1");
  if (!(step_scale > 0.0 && step_scale <= 1.0)) throw Error("fit config: step scale must be in (0, 1]");
  if (!(step_delay > 0.0) || !(step_power > 0.5 && step_power <= 1.0))
    throw Error("fit config: Robbins-Monro needs delay > 0 and power in (0.5, 1]");
  if (full_elbo_every < 0) throw Error("fit config: full_elbo_every must be non-negative");
}

Eigen::Index batch_size(Eigen::Index n, const FitConfig &config) {
  if (n < 1) throw Error("batch_size: need at least one observation");
  // the small offset keeps exact products such as 0.05 * 100 from rounding up
  const auto raw = static_cast<Eigen::Index>(std::ceil(config.batch_fraction * static_cast<double>(n) - 1e-9));
  return std::min(n, std::clamp(raw, config.batch_min, config.batch_max));
}

MinibatchSampler::MinibatchSampler(Eigen::Index n, Eigen::Index batch) : perm_(static_cast<std::size_t>(n)), batch_(batch) {
  if (batch < 1 || batch > n) throw Error("minibatch: batch size must be in 1..n");
  std::iota(perm_.begin(), perm_.end(), Eigen::Index{0});
  out_.resize(static_cast<std::size_t>(batch));
}

std::span<const Eigen::Index> MinibatchSampler::draw(Rng &rng) {
  const auto n = perm_.size();
  for (std::size_t i = 0; i < out_.size(); ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(perm_[i], perm_[pick(rng)]);
    out_[i] = perm_[i];
  }
  std::sort(out_.begin(), out_.end());
  return out_;
}

std::vector<Eigen::Index> draw_minibatch(Eigen::Index n, const FitConfig &config, Rng &rng) {
  MinibatchSampler sampler(n, batch_size(n, config));
  const auto batch = sampler.draw(rng);
  return {batch.begin(), batch.end()};
}

double NaturalGradient::max_abs() const {
  double out = 0.0;
  for (const auto &g : increments) out = std::max(out, g.cwiseAbs().maxCoeff());
  return out;
}

namespace {

double scale_for(const Dataset &data, std::span<const Eigen::Index> batch) {
  return static_cast<double>(data.rows()) / static_cast<double>(batch.size());
}

Eigen::VectorXd natural_increment(const Architecture &arch, const FactorId &id, const PriorHyperparams &prior,
                                  const GlobalFactors &global, const SufficientStats &stats) {
  const Family family = family_of(id.kind);
  return to_natural(family, cavi_target(arch, id, prior, global, stats)) -
         to_natural(family, get_factor(global, id));
}

} // namespace

NaturalGradient estimate_gradient(const Architecture &arch, const Dataset &data, const PriorHyperparams &prior,
                                  const GlobalFactors &global, const LocalFactors &local,
                                  std::span<const Eigen::Index> batch) {
  if (batch.empty()) throw Error("estimate_gradient: empty minibatch");
  const auto stats = accumulate_stats(arch, data.y, local, batch, scale_for(data, batch));
  NaturalGradient out;
  out.ids = enumerate_factors(arch);
  out.increments.reserve(out.ids.size());
  for (const auto &id : out.ids) out.increments.push_back(natural_increment(arch, id, prior, global, stats));
  return out;
}

Eigen::MatrixXd fisher_block(const GlobalFactors &global, const FactorId &id) {
  return fisher_information(family_of(id.kind), get_factor(global, id));
}

double AdaptiveStep::rule(const Eigen::VectorXd &mean, double second_moment) {
  if (!(second_moment > 0.0)) return 1.0;
  const double a = mean.squaredNorm() / second_moment;
  if (!std::isfinite(a)) return 1.0;
  return std::clamp(a, std::numeric_limits<double>::min(), 1.0);
}

double AdaptiveStep::update(const Eigen::VectorXd &gradient) {
  ++t_;
  if (t_ == 1 || mean_.size() != gradient.size()) {
    mean_ = gradient;
    second_ = gradient.squaredNorm();
    memory_ = static_cast<double>(window_);
  } else {
    const double w = 1.0 / memory_;
    mean_ = (1.0 - w) * mean_ + w * gradient;
    second_ = (1.0 - w) * second_ + w * gradient.squaredNorm();
  }
  const double a = rule(mean_, second_);
  // small steps lengthen the memory; it never drops below the window
  memory_ = std::max(static_cast<double>(window_), memory_ * (1.0 - a) + 1.0);
  return a;
}

std::vector<std::vector<FactorId>> update_groups(const Architecture &arch) {
  const auto ids = enumerate_factors(arch);
  std::vector<std::vector<FactorId>> groups;
  auto collect = [&](int layer, FactorKind kind, int col) {
    std::vector<FactorId> g;
    for (const auto &id : ids)
      if (id.layer == layer && id.kind == kind && (col < 0 || id.col == col)) g.push_back(id);
    if (!g.empty()) groups.push_back(std::move(g));
  };
  for (int l = 0; l < arch.layers(); ++l) {
    collect(l, FactorKind::Mean, -1);
    for (int m = 0; m < arch.latent_dim(l); ++m) collect(l, FactorKind::Loading, m);
    for (FactorKind kind : {FactorKind::Noise, FactorKind::NoiseAux, FactorKind::MeanScale, FactorKind::GlobalShrink,
                            FactorKind::GlobalShrinkAux, FactorKind::LocalShrink, FactorKind::LocalShrinkAux,
                            FactorKind::Weights})
      collect(l, kind, -1);
  }
  return groups;
}

Optimizer::Optimizer(Architecture arch, const Dataset &data, PriorHyperparams prior, FitConfig config,
                     VariationalState start)
    : arch_(std::move(arch)), data_(data), prior_(std::move(prior)), config_(config), state_(std::move(start)),
      rng_(config.seed + 1), sampler_(data.rows(), batch_size(data.rows(), config)), groups_(update_groups(arch_)) {
  config_.validate();
  validate_prior(arch_, prior_);
  adaptive_.assign(groups_.size(), AdaptiveStep(config_.adaptive_window));
}

double Optimizer::step_size(std::size_t group, const Eigen::VectorXd &gradient) {
  const double scheduled =
      config_.step_scale * std::pow(1.0 + static_cast<double>(t_) / config_.step_delay, -config_.step_power);
  switch (config_.step_rule) {
  case StepRule::Constant: return config_.step_scale;
  case StepRule::RobbinsMonro: return scheduled;
  case StepRule::Adaptive: break;
  }
  // the schedule is a floor so a noisy start cannot freeze a group
  return std::max(adaptive_[group].update(gradient), scheduled);
}

double Optimizer::step() {
  const auto start = std::chrono::steady_clock::now();
  ++t_;
  const auto batch = sampler_.draw(rng_);
  local_step(arch_, state_.global, data_.y, batch, state_.local);
  if (config_.soft_responsibilities) update_local_categorical(arch_, state_.global, data_.y, batch, state_.local);
  const auto stats = accumulate_stats(arch_, data_.y, state_.local, batch, scale_for(data_, batch));

  double step_sum = 0.0;
  std::vector<Eigen::VectorXd> increments;
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    const auto &group = groups_[g];
    increments.clear();
    Eigen::Index total = 0;
    for (const auto &id : group) {
      increments.push_back(natural_increment(arch_, id, prior_, state_.global, stats));
      total += increments.back().size();
    }
    Eigen::VectorXd flat(total);
    Eigen::Index offset = 0;
    for (const auto &inc : increments) {
      flat.segment(offset, inc.size()) = inc;
      offset += inc.size();
    }
    const double a = step_size(g, flat);
    step_sum += a;
    for (std::size_t f = 0; f < group.size(); ++f) {
      const auto &id = group[f];
      const Family family = family_of(id.kind);
      const Eigen::VectorXd eta = to_natural(family, get_factor(state_.global, id)) + a * increments[f];
      const Eigen::VectorXd stored = from_natural(family, eta);
      if (!in_domain(family, stored)) {
        std::cerr << "warning: iteration " << t_ << ": update of " << describe(id)
                  << " left its domain and was skipped\n";
        continue;
      }
      set_factor(state_.global, id, stored);
    }
  }

  double value = 0.0;
  const bool record = t_ % config_.elbo_record_stride == 0;
  if (record) {
    try {
      value = elbo(arch_, data_, prior_, state_.global, state_.local, batch).total;
    } catch (const Error &e) {
      throw FitError(std::string("fit aborted at iteration ") + std::to_string(t_) + ": " + e.what(), trace_);
    }
    if (!std::isfinite(value))
      throw FitError("fit aborted: non-finite ELBO at iteration " + std::to_string(t_), trace_);
    TraceRecord rec;
    rec.iteration = t_;
    rec.elbo = value;
    rec.step = groups_.empty() ? 0.0 : step_sum / static_cast<double>(groups_.size());
    if (config_.full_elbo_every > 0 && t_ % config_.full_elbo_every == 0)
      rec.full_elbo = elbo(arch_, data_, prior_, state_.global, state_.local).total;
    if (config_.timing)
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    trace_.records.push_back(rec);
  }
  return value;
}

bool Optimizer::converged() const {
  const auto w = static_cast<std::size_t>(config_.convergence_window);
  if (w == 0 || trace_.records.size() < 2 * w) return false;
  const auto end = trace_.records.end();
  auto mean = [](auto first, auto last) {
    double s = 0.0;
    for (auto it = first; it != last; ++it) s += it->elbo;
    return s / static_cast<double>(std::distance(first, last));
  };
  const double recent = mean(end - static_cast<std::ptrdiff_t>(w), end);
  const double before = mean(end - static_cast<std::ptrdiff_t>(2 * w), end - static_cast<std::ptrdiff_t>(w));
  return std::abs(recent - before) <= config_.convergence_tolerance * std::max(1.0, std::abs(before));
}

FitResult Optimizer::run() {
  bool done = false;
  while (t_ < config_.max_iterations) {
    step();
    if (converged()) {
      done = true;
      break;
    }
  }
  FitResult out;
  out.summary = posterior_summary(state_.global);
  out.state = state_;
  out.trace = trace_;
  out.iterations = t_;
  out.converged = done;
  out.rng = rng_;
  return out;
}

FitResult fit(const Dataset &data, const Architecture &arch, const PriorHyperparams &prior, const FitConfig &config) {
  require_valid(arch);
  config.validate();
  if (data.rows() < 1) throw Error("fit: dataset is empty");
  auto start = init_variational(arch, data, prior, config.seed);
  Optimizer opt(arch, data, prior, config, std::move(start));
  return opt.run();
}

} // namespace dmfa
