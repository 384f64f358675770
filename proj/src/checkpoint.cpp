#include "dmfa/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace dmfa {

using nlohmann::json;

namespace {

json to_json(const Eigen::ArrayXXd &a) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < a.cols(); ++j) row.push_back(a(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::ArrayXXd array_from(const json &j, Eigen::Index rows, Eigen::Index cols, const char *what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw Error(std::string("checkpoint: field '") + what + "' has the wrong row count");
  Eigen::ArrayXXd a(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto &row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw Error(std::string("checkpoint: field '") + what + "' has the wrong column count");
    for (Eigen::Index c = 0; c < cols; ++c) a(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return a;
}

json vec_json(const Eigen::VectorXd &v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd vec_from(const json &j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json pair_json(const Eigen::ArrayXXd &a, const Eigen::ArrayXXd &b, const char *na, const char *nb) {
  return json{{na, to_json(a)}, {nb, to_json(b)}};
}

json config_json(const FitConfig &c) {
  return json{{"batch_fraction", c.batch_fraction},
              {"batch_min", c.batch_min},
              {"batch_max", c.batch_max},
              {"max_iterations", c.max_iterations},
              {"seed", c.seed},
              {"elbo_record_stride", c.elbo_record_stride},
              {"convergence_window", c.convergence_window},
              {"convergence_tolerance", c.convergence_tolerance},
              {"step_rule", std::string(step_rule_name(c.step_rule))},
              {"adaptive_window", c.adaptive_window},
              {"step_scale", c.step_scale},
              {"step_delay", c.step_delay},
              {"step_power", c.step_power},
              {"soft_responsibilities", c.soft_responsibilities},
              {"full_elbo_every", c.full_elbo_every},
              {"timing", c.timing}};
}

FitConfig config_from(const json &j) {
  FitConfig c;
  c.batch_fraction = j.at("batch_fraction").get<double>();
  c.batch_min = j.at("batch_min").get<Eigen::Index>();
  c.batch_max = j.at("batch_max").get<Eigen::Index>();
  c.max_iterations = j.at("max_iterations").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.elbo_record_stride = j.at("elbo_record_stride").get<int>();
  c.convergence_window = j.at("convergence_window").get<int>();
  c.convergence_tolerance = j.at("convergence_tolerance").get<double>();
  c.step_rule = parse_step_rule(j.at("step_rule").get<std::string>());
  c.adaptive_window = j.at("adaptive_window").get<int>();
  c.step_scale = j.at("step_scale").get<double>();
  c.step_delay = j.at("step_delay").get<double>();
  c.step_power = j.at("step_power").get<double>();
  c.soft_responsibilities = j.at("soft_responsibilities").get<bool>();
  c.full_elbo_every = j.at("full_elbo_every").get<int>();
  c.timing = j.at("timing").get<bool>();
  return c;
}

} // namespace

std::string rng_to_string(const Rng &rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng rng_from_string(const std::string &state) {
  Rng rng;
  std::istringstream is(state);
  is >> rng;
  if (is.fail()) throw Error("checkpoint: malformed RNG state");
  return rng;
}

Checkpoint make_checkpoint(const Architecture &arch, const PriorHyperparams &prior, const FitConfig &config,
                           const FitResult &result) {
  Checkpoint c;
  c.arch = arch;
  c.prior = prior;
  c.global = result.state.global;
  c.config = config;
  c.iteration = result.iterations;
  c.rng_state = rng_to_string(result.rng);
  return c;
}

std::string checkpoint_to_string(const Checkpoint &ckpt) {
  json layers = json::array();
  for (std::size_t l = 0; l < ckpt.global.layers.size(); ++l) {
    const auto &layer = ckpt.global.layers[l];
    json comps = json::array();
    for (const auto &c : layer.components) {
      comps.push_back(json{
          {"mu", pair_json(c.mean.mean, c.mean.var, "mean", "var")},
          {"B", pair_json(c.loading.mean, c.loading.var, "mean", "var")},
          {"delta", pair_json(c.noise.shape, c.noise.scale, "shape", "scale")},
          {"psi", pair_json(c.noise_aux.shape, c.noise_aux.scale, "shape", "scale")},
          {"g", pair_json(c.mean_scale.shape, c.mean_scale.scale, "shape", "scale")},
          {"tau", pair_json(c.global_shrink.shape, c.global_shrink.scale, "shape", "scale")},
          {"xi", pair_json(c.global_shrink_aux.shape, c.global_shrink_aux.scale, "shape", "scale")},
          {"h", pair_json(c.local_shrink.shape, c.local_shrink.rate, "shape", "rate")},
          {"c", pair_json(c.local_shrink_aux.shape, c.local_shrink_aux.rate, "shape", "rate")},
      });
    }
    layers.push_back(json{{"p", vec_json(layer.concentration)}, {"components", std::move(comps)}});
  }
  json prior{{"G", ckpt.prior.mean_scale}, {"nu", ckpt.prior.global_scale}, {"A", ckpt.prior.noise_scale}};
  json rho = json::array();
  for (const auto &r : ckpt.prior.concentration) rho.push_back(vec_json(r));
  prior["rho"] = std::move(rho);
  json doc{{"format", "dmfa-checkpoint"},
           {"version", ckpt.version},
           {"architecture", json{{"D", ckpt.arch.dims}, {"K", ckpt.arch.components}}},
           {"prior", std::move(prior)},
           {"config", config_json(ckpt.config)},
           {"iteration", ckpt.iteration},
           {"rng_state", ckpt.rng_state},
           {"global", std::move(layers)}};
  return doc.dump(1) + "\n";
}

Checkpoint checkpoint_from_string(const std::string &text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception &e) {
    throw Error(std::string("checkpoint: invalid JSON: ") + e.what());
  }
  try {
    if (doc.value("format", "") != "dmfa-checkpoint") throw Error("checkpoint: not a dmfa checkpoint document");
    Checkpoint c;
    c.version = doc.at("version").get<int>();
    if (c.version != kCheckpointVersion)
      throw Error("checkpoint: unsupported version " + std::to_string(c.version) + " (expected " +
                  std::to_string(kCheckpointVersion) + ")");
    c.arch.dims = doc.at("architecture").at("D").get<std::vector<int>>();
    c.arch.components = doc.at("architecture").at("K").get<std::vector<int>>();
    require_valid(c.arch);
    const auto &p = doc.at("prior");
    c.prior.mean_scale = p.at("G").get<std::vector<double>>();
    c.prior.global_scale = p.at("nu").get<std::vector<double>>();
    c.prior.noise_scale = p.at("A").get<std::vector<double>>();
    for (const auto &r : p.at("rho")) c.prior.concentration.push_back(vec_from(r));
    validate_prior(c.arch, c.prior);
    c.config = config_from(doc.at("config"));
    c.iteration = doc.at("iteration").get<int>();
    c.rng_state = doc.at("rng_state").get<std::string>();
    rng_from_string(c.rng_state);

    c.global = GlobalFactors::placeholder(c.arch);
    const auto &layers = doc.at("global");
    if (static_cast<int>(layers.size()) != c.arch.layers()) throw Error("checkpoint: layer count mismatch");
    for (int l = 0; l < c.arch.layers(); ++l) {
      const auto &lj = layers[static_cast<std::size_t>(l)];
      auto &layer = c.global.layers[l];
      layer.concentration = vec_from(lj.at("p"));
      if (layer.concentration.size() != c.arch.components[l]) throw Error("checkpoint: Dirichlet size mismatch");
      const auto &comps = lj.at("components");
      if (static_cast<int>(comps.size()) != c.arch.components[l]) throw Error("checkpoint: component count mismatch");
      const Eigen::Index rows = c.arch.input_dim(l);
      const Eigen::Index cols = c.arch.latent_dim(l);
      for (int k = 0; k < c.arch.components[l]; ++k) {
        const auto &cj = comps[static_cast<std::size_t>(k)];
        auto &f = layer.components[k];
        auto read = [&](const char *name, const char *a, const char *b, Eigen::ArrayXXd &x, Eigen::ArrayXXd &y,
                        Eigen::Index r, Eigen::Index cc) {
          x = array_from(cj.at(name).at(a), r, cc, name);
          y = array_from(cj.at(name).at(b), r, cc, name);
        };
        read("mu", "mean", "var", f.mean.mean, f.mean.var, rows, 1);
        read("B", "mean", "var", f.loading.mean, f.loading.var, rows, cols);
        read("delta", "shape", "scale", f.noise.shape, f.noise.scale, rows, 1);
        read("psi", "shape", "scale", f.noise_aux.shape, f.noise_aux.scale, rows, 1);
        read("g", "shape", "scale", f.mean_scale.shape, f.mean_scale.scale, rows, 1);
        read("tau", "shape", "scale", f.global_shrink.shape, f.global_shrink.scale, 1, 1);
        read("xi", "shape", "scale", f.global_shrink_aux.shape, f.global_shrink_aux.scale, 1, 1);
        read("h", "shape", "rate", f.local_shrink.shape, f.local_shrink.rate, rows, cols);
        read("c", "shape", "rate", f.local_shrink_aux.shape, f.local_shrink_aux.rate, rows, cols);
      }
    }
    for (const auto &id : enumerate_factors(c.arch))
      if (!in_domain(family_of(id.kind), get_factor(c.global, id)))
        throw Error("checkpoint: parameters of " + describe(id) + " are outside their domain");
    return c;
  } catch (const json::exception &e) {
    throw Error(std::string("checkpoint: schema mismatch: ") + e.what());
  }
}

void write_text_file(const std::filesystem::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

std::string read_text_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void save_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt) {
  write_text_file(path, checkpoint_to_string(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path &path) { return checkpoint_from_string(read_text_file(path)); }

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

std::string trace_to_csv(const FitTrace &trace) {
  std::string out = "iter,elbo,step,seconds\n";
  for (const auto &r : trace.records) {
    out += std::to_string(r.iteration);
    out += ',';
    out += format_double(r.elbo);
    out += ',';
    out += format_double(r.step);
    out += ',';
    out += format_double(r.seconds);
    out += '\n';
  }
  return out;
}

void write_trace_csv(const std::filesystem::path &path, const FitTrace &trace) {
  write_text_file(path, trace_to_csv(trace));
}

} // namespace dmfa
