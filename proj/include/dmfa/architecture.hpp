#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dmfa {

/// Thrown for malformed inputs and numerical failures anywhere in the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Layer layout of a deep mixture of factor analyzers.
///
/// `dims` holds D(0..L) with dims[0] the observed dimension; `components`
/// holds K(1..L) with components[0] belonging to the first (observed-side)
/// layer. Layer indices in code are zero based: layer l maps a latent of size
/// dims[l+1] onto dims[l].
struct Architecture {
  std::vector<int> dims;
  std::vector<int> components;

  [[nodiscard]] int layers() const noexcept { return static_cast<int>(components.size()); }
  [[nodiscard]] int observed_dim() const { return dims.at(0); }
  [[nodiscard]] int input_dim(int layer) const { return dims.at(layer); }
  [[nodiscard]] int latent_dim(int layer) const { return dims.at(layer + 1); }
  /// κ: loading entries per component at this layer.
  [[nodiscard]] int loading_count(int layer) const { return input_dim(layer) * latent_dim(layer); }
  [[nodiscard]] std::size_t path_count() const;
  /// Free parameters of the point model (means, loadings, noise, weights).
  [[nodiscard]] std::size_t parameter_count() const;

  friend bool operator==(const Architecture &, const Architecture &) = default;
};

struct ValidityReport {
  bool valid = true;
  std::string message;

  explicit operator bool() const noexcept { return valid; }
};

/// Checks sizes and, when requested, D[l+1] <= (D[l]-1)/2 for l = 0..L-1.
ValidityReport validate_architecture(const Architecture &arch, bool enforce_anderson_rubin = false);

/// Throws `Error` carrying the report message when the architecture is invalid.
void require_valid(const Architecture &arch, bool enforce_anderson_rubin = false);

/// One component index per layer, zero based.
using PathIndex = std::vector<int>;

/// All paths in lexicographic order (first layer varies slowest).
std::vector<PathIndex> enumerate_paths(const Architecture &arch);

/// Parses `K=k1,k2,...;D=d1,d2,...` where D excludes the observed dimension.
Architecture parse_architecture(std::string_view text, int observed_dim);

/// Inverse of parse_architecture (the observed dimension is dropped).
std::string format_architecture(const Architecture &arch);

} // namespace dmfa
