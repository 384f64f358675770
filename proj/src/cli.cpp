#include "dmfa/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <numeric>

#include "dmfa/checkpoint.hpp"
#include "dmfa/csv.hpp"
#include "dmfa/metrics.hpp"
#include "dmfa/optimizer.hpp"
#include "dmfa/preprocessing.hpp"
#include "dmfa/scenarios.hpp"
#include "dmfa/selection.hpp"

namespace dmfa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct DataArgs {
  std::string path;
  std::string label_column = "label";
  bool standardize = false;
};

struct FitArgs {
  int iters = 2000;
  std::uint64_t seed = 0;
  double batch_fraction = 0.05;
  Eigen::Index batch_min = 1;
  Eigen::Index batch_max = 1024;
  std::string step_rule = "adaptive";
  double step_scale = 1.0;
  bool hard = false;
  int stride = 1;
  int window = 0;
  double tolerance = 1e-5;
  int full_every = 0;
  bool timing = false;
};

struct PriorArgs {
  std::vector<double> G;
  std::vector<double> nu;
  std::vector<double> A;
  double rho = 0.0;
  bool overfitted = false;
};

void add_data(CLI::App *app, DataArgs &a) {
  app->add_option("--data", a.path, "Input CSV (header optional)")->required()->check(CLI::ExistingFile);
  app->add_option("--label-column", a.label_column, "Header name of the truth label column")->capture_default_str();
  app->add_flag("--standardize", a.standardize, "Scale every row to mean 0 and variance 1 first");
}

void add_fit(CLI::App *app, FitArgs &a) {
  app->add_option("--iters", a.iters, "Maximum iterations")->capture_default_str()->check(CLI::NonNegativeNumber);
  app->add_option("--seed", a.seed, "Random seed")->capture_default_str();
  app->add_option("--batch-fraction", a.batch_fraction, "Minibatch fraction of n")->capture_default_str();
  app->add_option("--batch-min", a.batch_min, "Smallest minibatch")->capture_default_str();
  app->add_option("--batch-max", a.batch_max, "Largest minibatch")->capture_default_str();
  app->add_option("--step-rule", a.step_rule, "adaptive | robbins-monro | constant")
      ->capture_default_str()
      ->check(CLI::IsMember({"adaptive", "robbins-monro", "constant"}));
  app->add_option("--step-scale", a.step_scale, "Constant step or Robbins-Monro a0")->capture_default_str();
  app->add_flag("--hard-responsibilities", a.hard, "Use the local step's hard path in the global updates");
  app->add_option("--record-stride", a.stride, "Record the ELBO every this many iterations")->capture_default_str();
  app->add_option("--convergence-window", a.window, "Records per convergence window (0 disables)")
      ->capture_default_str();
  app->add_option("--convergence-tol", a.tolerance, "Relative change that counts as converged")
      ->capture_default_str();
  app->add_option("--full-elbo-every", a.full_every, "Full-data ELBO period (0 never)")->capture_default_str();
  app->add_flag("--timing", a.timing, "Record wall-clock seconds in the trace");
}

void add_prior(CLI::App *app, PriorArgs &a) {
  app->add_option("--G", a.G, "Cauchy scale of the means, one value or one per layer")->delimiter(',');
  app->add_option("--nu", a.nu, "Horseshoe global scale, one value or one per layer (e.g. 1e5,1)")->delimiter(',');
  app->add_option("--A", a.A, "Half-Cauchy scale of the noise, one value or one per layer")->delimiter(',');
  app->add_option("--rho", a.rho, "Dirichlet concentration for every component");
  app->add_flag("--overfitted", a.overfitted, "Sparse Dirichlet (rho = 0.5) for pruning");
}

FitConfig make_config(const FitArgs &a) {
  FitConfig c;
  c.max_iterations = a.iters;
  c.seed = a.seed;
  c.batch_fraction = a.batch_fraction;
  c.batch_min = a.batch_min;
  c.batch_max = a.batch_max;
  c.step_rule = parse_step_rule(a.step_rule);
  c.step_scale = a.step_scale;
  c.soft_responsibilities = !a.hard;
  c.elbo_record_stride = a.stride;
  c.convergence_window = a.window;
  c.convergence_tolerance = a.tolerance;
  c.full_elbo_every = a.full_every;
  c.timing = a.timing;
  c.validate();
  return c;
}

std::vector<double> per_layer(const std::vector<double> &values, int layers, const char *name,
                              const std::vector<double> &fallback) {
  if (values.empty()) return fallback;
  if (values.size() == 1) return std::vector<double>(static_cast<std::size_t>(layers), values[0]);
  if (static_cast<int>(values.size()) != layers)
    throw Error(std::string("--") + name + " needs one value or one per layer (" + std::to_string(layers) + ")");
  return values;
}

PriorHyperparams make_prior(const Architecture &arch, const PriorArgs &a) {
  PriorHyperparams p = PriorHyperparams::defaults(arch, a.overfitted);
  p.mean_scale = per_layer(a.G, arch.layers(), "G", p.mean_scale);
  p.global_scale = per_layer(a.nu, arch.layers(), "nu", p.global_scale);
  p.noise_scale = per_layer(a.A, arch.layers(), "A", p.noise_scale);
  if (a.rho > 0.0)
    for (auto &r : p.concentration) r.setConstant(a.rho);
  validate_prior(arch, p);
  return p;
}

Dataset read_data(const DataArgs &a) {
  CsvOptions opts;
  opts.label_column = a.label_column;
  Dataset data = load_csv(a.path, opts);
  if (a.standardize) data = standardize_rows(data);
  return data;
}

int default_first_k(Eigen::Index n) {
  return std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(n)))));
}

// Architecture from the flag; without a K section the first layer defaults to floor(sqrt(n)).
Architecture resolve_arch(const std::string &text, const Dataset &data, bool &overfitted) {
  if (text.find("K=") == std::string::npos) {
    const auto pos = text.find("D=");
    if (pos == std::string::npos) throw Error("--arch needs at least a D= section");
    const auto body = text.substr(pos + 2);
    const auto layers = 1 + std::count(body.begin(), body.end(), ',');
    std::string ks = "K=" + std::to_string(default_first_k(data.rows()));
    for (long l = 1; l < layers; ++l) ks += ",1";
    overfitted = true;
    auto arch = parse_architecture(ks + ";" + text.substr(pos), static_cast<int>(data.cols()));
    require_valid(arch);
    return arch;
  }
  auto arch = parse_architecture(text, static_cast<int>(data.cols()));
  require_valid(arch);
  return arch;
}

json option_json(const CLI::Option *opt) {
  const auto &res = opt->results();
  if (opt->count() == 0) {
    if (opt->get_type_size() == 0) return false;
    const auto def = opt->get_default_str();
    return def.empty() ? json(nullptr) : json(def);
  }
  if (opt->get_type_size() == 0) return true;
  if (res.size() == 1) return res[0];
  return res;
}

void echo_config(const fs::path &dir, const CLI::App *sub, const std::vector<std::string> &args) {
  json options = json::object();
  for (const CLI::Option *opt : sub->get_options()) {
    if (opt->get_lnames().empty() || opt->get_lnames()[0] == "help") continue;
    options[opt->get_lnames()[0]] = option_json(opt);
  }
  json doc{{"command", sub->get_name()}, {"argv", args}, {"options", options}};
  write_text_file(dir / "config.json", doc.dump(2) + "\n");
}

std::string metrics_csv(const PartitionLabels &pred, const PartitionLabels &truth) {
  return "metric,value\nmr," + format_double(misclassification_rate(pred, truth)) + "\nari," +
         format_double(adjusted_rand_index(pred, truth)) + "\nami," +
         format_double(adjusted_mutual_information(pred, truth)) + "\n";
}

std::string prune_csv(const PruneReport &r) {
  std::string out = "layer,component,weight,status\n";
  for (const auto &l : r.layers)
    for (Eigen::Index k = 0; k < l.weights.size(); ++k) {
      const bool kept = std::find(l.kept.begin(), l.kept.end(), static_cast<int>(k)) != l.kept.end();
      out += std::to_string(l.layer + 1) + ',' + std::to_string(k + 1) + ',' + format_double(l.weights[k]) +
             (kept ? ",kept\n" : ",removed\n");
    }
  return out;
}

void write_fit(const fs::path &dir, const Architecture &arch, const PriorHyperparams &prior, const FitConfig &config,
               const FitResult &result, const Dataset &data) {
  save_checkpoint(dir / "checkpoint.json", make_checkpoint(arch, prior, config, result));
  write_trace_csv(dir / "trace.csv", result.trace);
  write_text_file(dir / "labels.csv", labels_to_csv(assign_clusters(data, arch, result.summary)));
}

} // namespace

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"Deep mixtures of factor analyzers with horseshoe priors"};
  app.name(args.empty() ? "dmfa" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);
  std::string out_dir = ".";

  // simulate
  auto *sim = app.add_subcommand("simulate", "Write a synthetic dataset with truth labels");
  std::string scenario = "s1";
  std::string spec_path;
  Eigen::Index sim_n = -1;
  std::optional<std::uint64_t> sim_seed;
  std::string sim_arch;
  int sim_d = 0;
  sim->add_option("--scenario", scenario, "Built-in generator: s1 | s2")
      ->capture_default_str()
      ->check(CLI::IsMember({"s1", "s2"}));
  sim->add_option("--spec", spec_path, "Scenario JSON file (overrides --scenario)")->check(CLI::ExistingFile);
  sim->add_option("--n", sim_n, "Number of rows (default from the scenario)");
  sim->add_option("--seed", sim_seed, "Random seed (default from the scenario)");
  sim->add_option("--arch", sim_arch, "Sample from a random model of this architecture instead");
  sim->add_option("--d", sim_d, "Observed dimension for --arch");
  sim->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();

  // fit
  auto *fit_cmd = app.add_subcommand("fit", "Fit a model and write checkpoint, trace and labels");
  DataArgs fit_data;
  FitArgs fit_args;
  PriorArgs fit_prior;
  std::string fit_arch;
  add_data(fit_cmd, fit_data);
  fit_cmd->add_option("--arch", fit_arch, "Architecture, e.g. \"K=5,1;D=4,1\" (D excludes d)")->required();
  add_fit(fit_cmd, fit_args);
  add_prior(fit_cmd, fit_prior);
  fit_cmd->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();

  // select
  auto *sel = app.add_subcommand("select", "Score architectures by short runs and pick the best");
  DataArgs sel_data;
  FitArgs sel_args;
  PriorArgs sel_prior;
  std::vector<int> sel_layers = {2, 3};
  int sel_k1 = 0;
  std::vector<int> sel_deeper = {1, 2, 3};
  int jobs = 1;
  int refit_iters = 0;
  add_data(sel, sel_data);
  sel->add_option("--layers", sel_layers, "Layer counts to enumerate")->delimiter(',')->capture_default_str();
  sel->add_option("--k1", sel_k1, "First-layer components (default floor(sqrt(n)))");
  sel->add_option("--deeper-k", sel_deeper, "Component counts tried for deeper layers")
      ->delimiter(',')
      ->capture_default_str();
  sel->add_option("--jobs", jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  sel->add_option("--refit-iters", refit_iters, "Refit the chosen model for this many iterations (0 skips)")
      ->capture_default_str();
  add_fit(sel, sel_args);
  add_prior(sel, sel_prior);
  sel->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();

  // cluster
  auto *clu = app.add_subcommand("cluster", "Assign first-layer clusters from a checkpoint");
  DataArgs clu_data;
  std::string clu_ckpt;
  add_data(clu, clu_data);
  clu->add_option("--checkpoint", clu_ckpt, "Checkpoint JSON")->required()->check(CLI::ExistingFile);
  clu->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();

  // evaluate
  auto *ev = app.add_subcommand("evaluate", "Compare predicted and true labels (MR, ARI, AMI)");
  std::string pred_path;
  std::string truth_path;
  ev->add_option("--pred", pred_path, "Predicted labels CSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--truth", truth_path, "True labels CSV (or dataset CSV with a label column)")
      ->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();

  // prune-refit
  auto *pr = app.add_subcommand("prune-refit", "Drop low-weight components and refit");
  DataArgs pr_data;
  std::string pr_ckpt;
  double threshold = 0.01;
  int pr_iters = -1;
  add_data(pr, pr_data);
  pr->add_option("--checkpoint", pr_ckpt, "Checkpoint JSON of an overfitted fit")->required()->check(CLI::ExistingFile);
  pr->add_option("--threshold", threshold, "Weight threshold")->capture_default_str();
  pr->add_option("--iters", pr_iters, "Refit iterations (default: the checkpoint's)");
  pr->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp &) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError &e) {
    err << "error: " << e.what() << "\n";
    if (!app.get_subcommands().empty()) err << "run '" << app.get_name() << " " << app.get_subcommands()[0]->get_name() << " --help' for usage\n";
    else err << "run '" << app.get_name() << " --help' for usage\n";
    return 2;
  }

  CLI::App *sub = app.get_subcommands().front();
  try {
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    echo_config(dir, sub, args);

    if (sub == sim) {
      Dataset data;
      if (!sim_arch.empty()) {
        if (sim_d < 1) throw Error("simulate: --arch requires --d");
        const auto arch = parse_architecture(sim_arch, sim_d);
        require_valid(arch);
        const std::uint64_t seed = sim_seed.value_or(1);
        Rng rng(seed);
        const auto params = random_params(arch, rng);
        data = sample_dataset(arch, params, sim_n < 0 ? 1000 : sim_n, seed + 1).data;
      } else {
        ScenarioSpec spec = spec_path.empty() ? builtin_scenario(scenario) : load_scenario(spec_path);
        if (sim_n >= 0) spec.n = sim_n;
        if (sim_seed) spec.seed = *sim_seed;
        data = generate_scenario(spec);
        write_text_file(dir / "scenario.json", scenario_to_json(spec));
      }
      save_csv(dir / "data.csv", data);
      out << "wrote " << data.rows() << " rows to " << (dir / "data.csv").string() << "\n";
    } else if (sub == fit_cmd) {
      const Dataset data = read_data(fit_data);
      bool overfitted = fit_prior.overfitted;
      const auto arch = resolve_arch(fit_arch, data, overfitted);
      fit_prior.overfitted = overfitted;
      const auto prior = make_prior(arch, fit_prior);
      const auto config = make_config(fit_args);
      const auto result = fit(data, arch, prior, config);
      write_fit(dir, arch, prior, config, result, data);
      out << "fitted " << format_architecture(arch) << " in " << result.iterations << " iterations";
      if (!result.trace.records.empty()) out << ", final ELBO " << format_double(result.trace.records.back().elbo);
      out << "\n";
    } else if (sub == sel) {
      const Dataset data = read_data(sel_data);
      const int k1 = sel_k1 > 0 ? sel_k1 : default_first_k(data.rows());
      const auto archs = enumerate_architectures(static_cast<int>(data.cols()), sel_layers,
                                                 default_k_proposals(k1, sel_layers, sel_deeper));
      if (archs.empty()) throw Error("select: no architecture satisfies the dimension rule for d = " +
                                     std::to_string(data.cols()));
      ScoreOptions opts;
      opts.config = make_config(sel_args);
      opts.overfitted = sel_prior.overfitted;
      auto candidates = score_candidates(data, archs, opts, jobs, sel_args.timing);
      write_text_file(dir / "selection.csv", selection_report_csv(candidates));
      const auto &best = select_model(candidates);
      write_text_file(dir / "architecture.txt", format_architecture(best.arch) + "\n");
      out << "scored " << candidates.size() << " candidates; selected " << format_architecture(best.arch)
          << " (score " << format_double(best.score) << ")\n";
      if (refit_iters > 0) {
        FitConfig config = opts.config;
        config.max_iterations = refit_iters;
        const auto prior = make_prior(best.arch, sel_prior);
        const auto result = fit(data, best.arch, prior, config);
        write_fit(dir, best.arch, prior, config, result, data);
      }
    } else if (sub == clu) {
      const auto ckpt = load_checkpoint(clu_ckpt);
      const Dataset data = read_data(clu_data);
      if (data.cols() != ckpt.arch.observed_dim())
        throw Error("cluster: data has " + std::to_string(data.cols()) + " columns, checkpoint expects " +
                    std::to_string(ckpt.arch.observed_dim()));
      const auto labels = assign_clusters(data, ckpt.arch, posterior_summary(ckpt.global));
      write_text_file(dir / "labels.csv", labels_to_csv(labels));
      out << "wrote " << labels.size() << " labels to " << (dir / "labels.csv").string() << "\n";
    } else if (sub == ev) {
      const auto pred = load_labels(pred_path);
      const auto truth = load_labels(truth_path);
      const auto text = metrics_csv(pred, truth);
      write_text_file(dir / "metrics.csv", text);
      out << text;
    } else if (sub == pr) {
      const auto ckpt = load_checkpoint(pr_ckpt);
      const Dataset data = read_data(pr_data);
      if (data.cols() != ckpt.arch.observed_dim()) throw Error("prune-refit: data dimension does not match checkpoint");
      const auto report = prune_components(ckpt.arch, ckpt.global, threshold);
      write_text_file(dir / "prune.csv", prune_csv(report));
      PriorHyperparams prior = ckpt.prior;
      for (const auto &l : report.layers) {
        Eigen::VectorXd rho(static_cast<Eigen::Index>(l.kept.size()));
        for (std::size_t i = 0; i < l.kept.size(); ++i) rho[static_cast<Eigen::Index>(i)] = prior.concentration[l.layer][l.kept[i]];
        prior.concentration[l.layer] = rho;
      }
      FitConfig config = ckpt.config;
      if (pr_iters >= 0) config.max_iterations = pr_iters;
      VariationalState start{restrict_components(ckpt.global, report), LocalFactors::zeros(report.reduced, data.rows())};
      std::vector<Eigen::Index> rows(static_cast<std::size_t>(data.rows()));
      std::iota(rows.begin(), rows.end(), Eigen::Index{0});
      local_step(report.reduced, start.global, data.y, rows, start.local);
      Optimizer opt(report.reduced, data, prior, config, std::move(start));
      const auto result = opt.run();
      write_fit(dir, report.reduced, prior, config, result, data);
      out << "pruned " << format_architecture(ckpt.arch) << " to " << format_architecture(report.reduced)
          << " and refit for " << result.iterations << " iterations\n";
    }
  } catch (const FitError &e) {
    err << "error: " << e.what() << "\n";
    try {
      write_trace_csv(fs::path(out_dir) / "trace.csv", e.trace());
      err << "partial trace written to " << (fs::path(out_dir) / "trace.csv").string() << "\n";
    } catch (const std::exception &) {
    }
    return 1;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int run(int argc, char **argv) {
  return run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

} // namespace dmfa::cli
