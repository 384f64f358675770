#include "dmfa/selection.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <thread>

#include "dmfa/checkpoint.hpp"

namespace dmfa {

bool PruneReport::changed() const {
  return std::any_of(layers.begin(), layers.end(), [](const LayerPrune &l) { return !l.removed.empty(); });
}

PruneReport prune_components(const Architecture &arch, const GlobalFactors &global, double threshold) {
  require_valid(arch);
  if (!(threshold >= 0.0 && threshold < 1.0)) throw Error("prune: threshold must be in [0, 1)");
  PruneReport report;
  report.reduced = arch;
  for (int l = 0; l < arch.layers(); ++l) {
    const Eigen::VectorXd &alpha = global.layers.at(l).concentration;
    LayerPrune lp;
    lp.layer = l;
    lp.weights = alpha / alpha.sum();
    for (int k = 0; k < arch.components[l]; ++k)
      (lp.weights[k] < threshold ? lp.removed : lp.kept).push_back(k);
    if (lp.kept.empty()) {
      Eigen::Index best = 0;
      lp.weights.maxCoeff(&best);
      lp.all_below = true;
      lp.kept = {static_cast<int>(best)};
      lp.removed.erase(std::find(lp.removed.begin(), lp.removed.end(), static_cast<int>(best)));
    }
    report.reduced.components[l] = static_cast<int>(lp.kept.size());
    report.layers.push_back(std::move(lp));
  }
  return report;
}

GlobalFactors restrict_components(const GlobalFactors &global, const PruneReport &report) {
  GlobalFactors out;
  for (const auto &lp : report.layers) {
    const auto &src = global.layers.at(lp.layer);
    LayerFactors layer;
    layer.concentration.resize(static_cast<Eigen::Index>(lp.kept.size()));
    for (std::size_t i = 0; i < lp.kept.size(); ++i) {
      layer.components.push_back(src.components.at(lp.kept[i]));
      layer.concentration[static_cast<Eigen::Index>(i)] = src.concentration[lp.kept[i]];
    }
    out.layers.push_back(std::move(layer));
  }
  return out;
}

namespace {

void dims_rec(int previous, int remaining, std::vector<int> &current, std::vector<std::vector<int>> &out) {
  if (remaining == 0) {
    out.push_back(current);
    return;
  }
  for (int next = 1; 2 * next <= previous - 1; ++next) {
    current.push_back(next);
    dims_rec(next, remaining - 1, current, out);
    current.pop_back();
  }
}

} // namespace

std::vector<Architecture> enumerate_architectures(int d, const std::vector<int> &layer_counts,
                                                  const std::vector<std::vector<int>> &k_proposals) {
  if (d < 1) throw Error("enumerate: d must be at least 1");
  std::vector<Architecture> out;
  for (int layers : layer_counts) {
    if (layers < 1) throw Error("enumerate: layer counts must be positive");
    std::vector<std::vector<int>> dims;
    std::vector<int> current;
    dims_rec(d, layers, current, dims);
    for (const auto &k : k_proposals) {
      if (static_cast<int>(k.size()) != layers) continue;
      for (const auto &dd : dims) {
        Architecture a;
        a.dims = {d};
        a.dims.insert(a.dims.end(), dd.begin(), dd.end());
        a.components = k;
        out.push_back(std::move(a));
      }
    }
  }
  return out;
}

std::vector<std::vector<int>> default_k_proposals(int first, const std::vector<int> &layer_counts,
                                                  const std::vector<int> &deeper) {
  std::vector<std::vector<int>> out;
  for (int layers : layer_counts) {
    std::vector<std::vector<int>> partial = {{first}};
    for (int l = 1; l < layers; ++l) {
      std::vector<std::vector<int>> next;
      for (const auto &p : partial)
        for (int k : deeper) {
          auto q = p;
          q.push_back(k);
          next.push_back(std::move(q));
        }
      partial = std::move(next);
    }
    out.insert(out.end(), partial.begin(), partial.end());
  }
  return out;
}

double tail_mean(const FitTrace &trace, int first, int last) {
  double sum = 0.0;
  int count = 0;
  for (const auto &r : trace.records)
    if (r.iteration >= first && r.iteration <= last) {
      sum += r.elbo;
      ++count;
    }
  if (count == 0) throw Error("score: no ELBO records in the scoring window");
  return sum / count;
}

ArchitectureCandidate score_architecture(const Dataset &data, const Architecture &arch, const ScoreOptions &options,
                                         const std::optional<PriorHyperparams> &prior) {
  ArchitectureCandidate c;
  c.arch = arch;
  try {
    require_valid(arch);
    FitConfig config = options.config;
    config.max_iterations = kScoreIterations;
    config.elbo_record_stride = 1;
    config.convergence_window = 0;
    const auto result = fit(data, arch, prior ? *prior : PriorHyperparams::defaults(arch, options.overfitted), config);
    c.score = tail_mean(result.trace);
    if (!std::isfinite(c.score)) throw Error("non-finite score");
    c.status = CandidateStatus::Scored;
  } catch (const std::exception &e) {
    c.status = CandidateStatus::Failed;
    c.message = e.what();
  }
  return c;
}

std::vector<ArchitectureCandidate> score_candidates(const Dataset &data, const std::vector<Architecture> &archs,
                                                    const ScoreOptions &options, int jobs, bool timing) {
  std::vector<ArchitectureCandidate> out(archs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < archs.size(); i = next++) {
      const auto start = std::chrono::steady_clock::now();
      ScoreOptions o = options;
      o.config.seed = options.config.seed + i;
      out[i] = score_architecture(data, archs[i], o);
      if (timing) out[i].seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
  };
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(archs.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto &t : pool) t.join();
  }
  return out;
}

const ArchitectureCandidate &select_model(const std::vector<ArchitectureCandidate> &candidates) {
  const ArchitectureCandidate *best = nullptr;
  for (const auto &c : candidates) {
    if (c.status != CandidateStatus::Scored) continue;
    if (!best || c.score > best->score ||
        (c.score == best->score && c.arch.parameter_count() < best->arch.parameter_count()))
      best = &c;
  }
  if (!best) throw Error("select: no candidate could be scored");
  return *best;
}

std::string selection_report_csv(const std::vector<ArchitectureCandidate> &candidates) {
  std::string out = "arch,score,status,params,seconds\n";
  for (const auto &c : candidates) {
    out += '"' + format_architecture(c.arch) + '"';
    out += ',';
    out += c.status == CandidateStatus::Scored ? format_double(c.score) : std::string("nan");
    out += c.status == CandidateStatus::Scored ? ",scored," : ",failed,";
    out += std::to_string(c.arch.parameter_count()) + ',' + format_double(c.seconds) + '\n';
  }
  return out;
}

} // namespace dmfa
