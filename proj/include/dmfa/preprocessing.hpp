#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "dmfa/model.hpp"

namespace dmfa {

/// Each row rescaled to mean 0 and sample variance 1 (denominator d - 1).
/// Throws listing every constant row.
Dataset standardize_rows(const Dataset &data);

using Point2 = std::array<double, 2>;
using Trajectory = std::vector<Point2>;

/// Linear interpolation at `target_len` points equally spaced in arc length,
/// flattened as (x1, y1, x2, y2, ...).
Eigen::VectorXd resample_trajectory(const Trajectory &traj, int target_len = 50);

/// Reverses the trajectory when its end is strictly nearer to `center` than its start.
Trajectory canonicalize_direction(const Trajectory &traj, const Point2 &center);

/// One trajectory per line as a JSON array of [x, y] pairs.
std::vector<Trajectory> parse_trajectories(const std::string &text, const std::string &source = "<input>");
std::vector<Trajectory> load_trajectories(const std::filesystem::path &path);

/// Canonicalizes (when a center is given) and resamples every trajectory into one row each.
Dataset trajectories_to_dataset(const std::vector<Trajectory> &trajs, int target_len = 50,
                                const std::optional<Point2> &center = std::nullopt);

} // namespace dmfa
