#include "dmfa/architecture.hpp"

#include <charconv>
#include <sstream>

namespace dmfa {

std::size_t Architecture::path_count() const {
  std::size_t count = 1;
  for (int k : components) count *= static_cast<std::size_t>(k);
  return count;
}

std::size_t Architecture::parameter_count() const {
  std::size_t count = 0;
  for (int l = 0; l < layers(); ++l) {
    const auto k = static_cast<std::size_t>(components[l]);
    const auto rows = static_cast<std::size_t>(input_dim(l));
    const auto cols = static_cast<std::size_t>(latent_dim(l));
    count += k * rows * (cols + 2) + (k - 1);
  }
  return count;
}

ValidityReport validate_architecture(const Architecture &arch, bool enforce_anderson_rubin) {
  const int layers = arch.layers();
  if (layers < 1) return {false, "architecture needs at least one layer"};
  if (static_cast<int>(arch.dims.size()) != layers + 1) {
    std::ostringstream os;
    os << "expected " << layers + 1 << " dimensions for " << layers << " layers, got " << arch.dims.size();
    return {false, os.str()};
  }
  for (std::size_t l = 0; l < arch.dims.size(); ++l) {
    if (arch.dims[l] < 1) {
      std::ostringstream os;
      os << "D[" << l << "] = " << arch.dims[l] << " must be >= 1";
      return {false, os.str()};
    }
  }
  for (int l = 0; l < layers; ++l) {
    if (arch.components[l] < 1) {
      std::ostringstream os;
      os << "K[" << l + 1 << "] = " << arch.components[l] << " must be >= 1";
      return {false, os.str()};
    }
  }
  if (enforce_anderson_rubin) {
    for (int l = 0; l < layers; ++l) {
      if (2 * arch.dims[l + 1] > arch.dims[l] - 1) {
        std::ostringstream os;
        os << "Anderson-Rubin condition violated: D[" << l + 1 << "] = " << arch.dims[l + 1] << " > (D[" << l
           << "] - 1)/2 = " << (arch.dims[l] - 1) / 2.0;
        return {false, os.str()};
      }
    }
  }
  return {};
}

void require_valid(const Architecture &arch, bool enforce_anderson_rubin) {
  if (auto report = validate_architecture(arch, enforce_anderson_rubin); !report) throw Error(report.message);
}

std::vector<PathIndex> enumerate_paths(const Architecture &arch) {
  std::vector<PathIndex> paths;
  paths.reserve(arch.path_count());
  PathIndex current(arch.layers(), 0);
  while (true) {
    paths.push_back(current);
    int l = arch.layers() - 1;
    while (l >= 0 && ++current[l] == arch.components[l]) {
      current[l] = 0;
      --l;
    }
    if (l < 0) break;
  }
  return paths;
}

namespace {

std::vector<int> parse_list(std::string_view text, std::string_view what) {
  std::vector<int> values;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const auto token = text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    int value = 0;
    const auto *first = token.data();
    const auto *last = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (token.empty() || ec != std::errc() || ptr != last)
      throw Error("architecture: bad integer '" + std::string(token) + "' in " + std::string(what) + " list");
    values.push_back(value);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return values;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

} // namespace

Architecture parse_architecture(std::string_view text, int observed_dim) {
  std::vector<int> ks;
  std::vector<int> ds;
  bool have_k = false;
  bool have_d = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto semi = text.find(';', pos);
    const auto part =
        trim(text.substr(pos, semi == std::string_view::npos ? std::string_view::npos : semi - pos));
    if (part.size() < 2 || part[1] != '=')
      throw Error("architecture: expected 'K=...;D=...', got '" + std::string(text) + "'");
    const auto body = trim(part.substr(2));
    if (part[0] == 'K' && !have_k) {
      ks = parse_list(body, "K");
      have_k = true;
    } else if (part[0] == 'D' && !have_d) {
      ds = parse_list(body, "D");
      have_d = true;
    } else {
      throw Error("architecture: unexpected or repeated section '" + std::string(part) + "'");
    }
    if (semi == std::string_view::npos) break;
    pos = semi + 1;
  }
  if (!have_k || !have_d) throw Error("architecture: both K= and D= sections are required");
  if (ks.size() != ds.size())
    throw Error("architecture: K and D lists must have the same length (one entry per layer)");
  Architecture arch;
  arch.components = std::move(ks);
  arch.dims.push_back(observed_dim);
  arch.dims.insert(arch.dims.end(), ds.begin(), ds.end());
  return arch;
}

std::string format_architecture(const Architecture &arch) {
  std::ostringstream os;
  os << "K=";
  for (std::size_t l = 0; l < arch.components.size(); ++l) os << (l ? "," : "") << arch.components[l];
  os << ";D=";
  for (std::size_t l = 1; l < arch.dims.size(); ++l) os << (l > 1 ? "," : "") << arch.dims[l];
  return os.str();
}

} // namespace dmfa
