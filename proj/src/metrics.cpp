#include "dmfa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace dmfa {

namespace {

void check_lengths(const PartitionLabels &pred, const PartitionLabels &truth) {
  if (pred.size() != truth.size())
    throw Error("metrics: label vectors differ in length (" + std::to_string(pred.size()) + " vs " +
                std::to_string(truth.size()) + ")");
  if (pred.empty()) throw Error("metrics: at least one label is required");
}

// Identical partitions give a table with exactly one nonzero per row and column.
bool same_partition(const ContingencyTable &t) {
  if (t.counts.rows() != t.counts.cols()) return false;
  return (t.counts.array() > 0.0).count() == t.counts.rows();
}

double choose2(double x) { return 0.5 * x * (x - 1.0); }

double entropy(const Eigen::VectorXd &sums, double n) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < sums.size(); ++i)
    if (sums[i] > 0.0) h -= sums[i] / n * std::log(sums[i] / n);
  return h;
}

} // namespace

ContingencyTable contingency_table(const PartitionLabels &pred, const PartitionLabels &truth) {
  check_lengths(pred, truth);
  std::map<int, int> rows;
  std::map<int, int> cols;
  for (int v : pred) rows.emplace(v, 0);
  for (int v : truth) cols.emplace(v, 0);
  ContingencyTable t;
  int idx = 0;
  for (auto &[label, i] : rows) {
    i = idx++;
    t.row_labels.push_back(label);
  }
  idx = 0;
  for (auto &[label, i] : cols) {
    i = idx++;
    t.col_labels.push_back(label);
  }
  t.counts = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < pred.size(); ++i) t.counts(rows[pred[i]], cols[truth[i]]) += 1.0;
  t.row_sums = t.counts.rowwise().sum();
  t.col_sums = t.counts.colwise().sum().transpose();
  t.total = static_cast<double>(pred.size());
  return t;
}

// Hungarian algorithm (shortest augmenting path, O(n^3)) on costs = -weights.
std::vector<int> max_weight_assignment(const Eigen::MatrixXd &weights) {
  const int n = static_cast<int>(weights.rows());
  if (weights.cols() != n) throw Error("assignment: matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -weights(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> out(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) out[p[j] - 1] = j - 1;
  return out;
}

double misclassification_rate(const PartitionLabels &pred, const PartitionLabels &truth) {
  const auto t = contingency_table(pred, truth);
  const Eigen::Index m = std::max(t.counts.rows(), t.counts.cols());
  Eigen::MatrixXd square = Eigen::MatrixXd::Zero(m, m);
  square.topLeftCorner(t.counts.rows(), t.counts.cols()) = t.counts;
  const auto match = max_weight_assignment(square);
  double agree = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) agree += square(i, match[static_cast<std::size_t>(i)]);
  return 1.0 - agree / t.total;
}

double adjusted_rand_index(const PartitionLabels &pred, const PartitionLabels &truth) {
  const auto t = contingency_table(pred, truth);
  double index = 0.0;
  for (Eigen::Index i = 0; i < t.counts.size(); ++i) index += choose2(t.counts.data()[i]);
  double a = 0.0;
  double b = 0.0;
  for (Eigen::Index i = 0; i < t.row_sums.size(); ++i) a += choose2(t.row_sums[i]);
  for (Eigen::Index j = 0; j < t.col_sums.size(); ++j) b += choose2(t.col_sums[j]);
  const double pairs = choose2(t.total);
  const double expected = pairs > 0.0 ? a * b / pairs : 0.0;
  const double max_index = 0.5 * (a + b);
  const double denom = max_index - expected;
  if (denom == 0.0) return same_partition(t) ? 1.0 : 0.0;
  return (index - expected) / denom;
}

double expected_mutual_information(const ContingencyTable &t) {
  const double n = t.total;
  double emi = 0.0;
  for (Eigen::Index i = 0; i < t.row_sums.size(); ++i) {
    const double a = t.row_sums[i];
    for (Eigen::Index j = 0; j < t.col_sums.size(); ++j) {
      const double b = t.col_sums[j];
      const double lo = std::max(1.0, a + b - n);
      const double hi = std::min(a, b);
      for (double nij = lo; nij <= hi; nij += 1.0) {
        const double log_p = std::lgamma(a + 1) + std::lgamma(b + 1) + std::lgamma(n - a + 1) +
                             std::lgamma(n - b + 1) - std::lgamma(n + 1) - std::lgamma(nij + 1) -
                             std::lgamma(a - nij + 1) - std::lgamma(b - nij + 1) -
                             std::lgamma(n - a - b + nij + 1);
        emi += nij / n * std::log(n * nij / (a * b)) * std::exp(log_p);
      }
    }
  }
  return emi;
}

double adjusted_mutual_information(const PartitionLabels &pred, const PartitionLabels &truth) {
  const auto t = contingency_table(pred, truth);
  const double n = t.total;
  double mi = 0.0;
  for (Eigen::Index i = 0; i < t.counts.rows(); ++i)
    for (Eigen::Index j = 0; j < t.counts.cols(); ++j) {
      const double c = t.counts(i, j);
      if (c > 0.0) mi += c / n * std::log(n * c / (t.row_sums[i] * t.col_sums[j]));
    }
  const double emi = expected_mutual_information(t);
  const double norm = 0.5 * (entropy(t.row_sums, n) + entropy(t.col_sums, n));
  const double denom = norm - emi;
  if (std::abs(denom) < 1e-15) {
    // both partitions trivial (single cluster or all singletons)
    return same_partition(t) ? 1.0 : 0.0;
  }
  return (mi - emi) / denom;
}

} // namespace dmfa
