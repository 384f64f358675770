#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dmfa/model.hpp"

namespace dmfa {

/// Counts between two labelings; rows follow `pred`, columns follow `truth`,
/// each in ascending order of the distinct label values.
struct ContingencyTable {
  Eigen::MatrixXd counts;
  Eigen::VectorXd row_sums;
  Eigen::VectorXd col_sums;
  double total = 0.0;
  std::vector<int> row_labels;
  std::vector<int> col_labels;
};

ContingencyTable contingency_table(const PartitionLabels &pred, const PartitionLabels &truth);

/// Maximum-weight assignment on a square matrix; returns column per row.
std::vector<int> max_weight_assignment(const Eigen::MatrixXd &weights);

double misclassification_rate(const PartitionLabels &pred, const PartitionLabels &truth);
double adjusted_rand_index(const PartitionLabels &pred, const PartitionLabels &truth);
double adjusted_mutual_information(const PartitionLabels &pred, const PartitionLabels &truth);

/// Exact expected mutual information under the hypergeometric model (nats).
double expected_mutual_information(const ContingencyTable &table);

} // namespace dmfa
