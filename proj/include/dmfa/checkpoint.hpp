#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dmfa/optimizer.hpp"

namespace dmfa {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  int version = kCheckpointVersion;
  Architecture arch;
  PriorHyperparams prior;
  GlobalFactors global;
  FitConfig config;
  int iteration = 0;
  std::string rng_state; // textual engine state
};

Checkpoint make_checkpoint(const Architecture &arch, const PriorHyperparams &prior, const FitConfig &config,
                           const FitResult &result);

std::string checkpoint_to_string(const Checkpoint &ckpt);
Checkpoint checkpoint_from_string(const std::string &text);
void save_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt);
Checkpoint load_checkpoint(const std::filesystem::path &path);

std::string rng_to_string(const Rng &rng);
Rng rng_from_string(const std::string &state);

/// CSV with header iter,elbo,step,seconds.
std::string trace_to_csv(const FitTrace &trace);
void write_trace_csv(const std::filesystem::path &path, const FitTrace &trace);

/// Shortest decimal form that reads back to the same double.
std::string format_double(double value);

void write_text_file(const std::filesystem::path &path, const std::string &text);
std::string read_text_file(const std::filesystem::path &path);

} // namespace dmfa
