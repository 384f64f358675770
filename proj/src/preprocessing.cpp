#include "dmfa/preprocessing.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <sstream>

#include "dmfa/checkpoint.hpp"

namespace dmfa {

Dataset standardize_rows(const Dataset &data) {
  if (data.cols() < 2) throw Error("standardize: rows need at least 2 entries");
  Dataset out = data;
  std::vector<Eigen::Index> constant;
  const double dof = static_cast<double>(data.cols() - 1);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    const double mean = data.y.row(i).mean();
    const Eigen::RowVectorXd centered = data.y.row(i).array() - mean;
    const double sd = std::sqrt(centered.squaredNorm() / dof);
    if (!(sd > 0.0)) {
      constant.push_back(i);
      continue;
    }
    out.y.row(i) = centered / sd;
  }
  if (!constant.empty()) {
    std::ostringstream os;
    os << "standardize: constant rows cannot be scaled:";
    for (std::size_t k = 0; k < constant.size() && k < 20; ++k) os << ' ' << constant[k] + 1;
    if (constant.size() > 20) os << " ... (" << constant.size() << " in total)";
    throw Error(os.str());
  }
  return out;
}

Eigen::VectorXd resample_trajectory(const Trajectory &traj, int target_len) {
  if (traj.size() < 2) throw Error("resample: a trajectory needs at least 2 points");
  if (target_len < 2) throw Error("resample: target length must be at least 2");
  std::vector<double> cum(traj.size(), 0.0);
  for (std::size_t i = 1; i < traj.size(); ++i)
    cum[i] = cum[i - 1] + std::hypot(traj[i][0] - traj[i - 1][0], traj[i][1] - traj[i - 1][1]);
  const double total = cum.back();
  Eigen::VectorXd out(2 * target_len);
  std::size_t seg = 1;
  for (int k = 0; k < target_len; ++k) {
    Point2 p;
    if (k == 0) {
      p = traj.front();
    } else if (k == target_len - 1) {
      p = traj.back();
    } else {
      const double s = total * static_cast<double>(k) / static_cast<double>(target_len - 1);
      while (seg < traj.size() - 1 && cum[seg] < s) ++seg;
      const double len = cum[seg] - cum[seg - 1];
      const double f = len > 0.0 ? std::clamp((s - cum[seg - 1]) / len, 0.0, 1.0) : 0.0;
      p = {traj[seg - 1][0] + f * (traj[seg][0] - traj[seg - 1][0]),
           traj[seg - 1][1] + f * (traj[seg][1] - traj[seg - 1][1])};
    }
    out[2 * k] = p[0];
    out[2 * k + 1] = p[1];
  }
  return out;
}

Trajectory canonicalize_direction(const Trajectory &traj, const Point2 &center) {
  if (traj.empty()) throw Error("canonicalize: empty trajectory");
  auto dist = [&](const Point2 &p) { return std::hypot(p[0] - center[0], p[1] - center[1]); };
  Trajectory out = traj;
  if (dist(traj.back()) < dist(traj.front())) std::reverse(out.begin(), out.end());
  return out;
}

std::vector<Trajectory> parse_trajectories(const std::string &text, const std::string &source) {
  std::vector<Trajectory> out;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Trajectory t;
      for (const auto &p : j) {
        if (!p.is_array() || p.size() != 2) throw Error("each point must be an [x, y] pair");
        const Point2 pt{p[0].get<double>(), p[1].get<double>()};
        if (!std::isfinite(pt[0]) || !std::isfinite(pt[1])) throw Error("non-finite coordinate");
        t.push_back(pt);
      }
      out.push_back(std::move(t));
    } catch (const std::exception &e) {
      throw Error(source + ": line " + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Trajectory> load_trajectories(const std::filesystem::path &path) {
  return parse_trajectories(read_text_file(path), path.string());
}

Dataset trajectories_to_dataset(const std::vector<Trajectory> &trajs, int target_len,
                                const std::optional<Point2> &center) {
  Dataset data;
  data.y.resize(static_cast<Eigen::Index>(trajs.size()), 2 * target_len);
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const Trajectory t = center ? canonicalize_direction(trajs[i], *center) : trajs[i];
    data.y.row(static_cast<Eigen::Index>(i)) = resample_trajectory(t, target_len).transpose();
  }
  return data;
}

} // namespace dmfa
