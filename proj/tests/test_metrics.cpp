#include <doctest.h>

#include "dmfa/metrics.hpp"
#include "support.hpp"

using namespace dmfa;

TEST_SUITE("metrics") {

TEST_CASE("fixed examples") {
  const PartitionLabels a{1, 1, 2, 2};
  const PartitionLabels b{1, 2, 1, 2};
  CHECK(misclassification_rate(a, b) == doctest::Approx(0.5));
  CHECK(adjusted_rand_index(a, b) == doctest::Approx(-0.5));
  CHECK(adjusted_rand_index(a, a) == 1.0);
  CHECK(adjusted_mutual_information(a, a) == doctest::Approx(1.0));
  CHECK(misclassification_rate(a, PartitionLabels{7, 7, 3, 3}) == 0.0);
  const PartitionLabels truth{1, 1, 2, 2, 3, 3};
  const PartitionLabels single(6, 1);
  CHECK(adjusted_rand_index(single, truth) == doctest::Approx(0.0));
  CHECK(adjusted_mutual_information(single, truth) == doctest::Approx(0.0));
  CHECK_THROWS_AS(adjusted_rand_index(a, PartitionLabels{1, 2}), Error);
  CHECK_THROWS_AS(misclassification_rate({}, {}), Error);
}

TEST_CASE("contingency table and assignment") {
  const auto t = contingency_table({2, 2, 5, 5, 5}, {1, 3, 3, 3, 1});
  CHECK(t.row_labels == std::vector<int>{2, 5});
  CHECK(t.col_labels == std::vector<int>{1, 3});
  CHECK(t.counts(1, 1) == 2.0);
  CHECK(t.total == 5.0);
  Eigen::Matrix3d w;
  w << 1, 9, 1, 9, 1, 1, 1, 1, 9;
  CHECK(max_weight_assignment(w) == std::vector<int>{1, 0, 2});
}

TEST_CASE("agree with brute force on every small random pair") {
  Rng rng(8);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = 1 + trial % 10;
    const auto a = test::random_partition(rng, n, 5);
    const auto b = test::random_partition(rng, n, 5);
    CAPTURE(n);
    CHECK(adjusted_rand_index(a, b) == doctest::Approx(test::brute_force_ari(a, b)).epsilon(1e-12));
    CHECK(misclassification_rate(a, b) == doctest::Approx(test::brute_force_mr(a, b)).epsilon(1e-12));
    CHECK(expected_mutual_information(contingency_table(a, b)) ==
          doctest::Approx(test::brute_force_emi(a, b)).epsilon(1e-10));
    CHECK(adjusted_mutual_information(a, b) == doctest::Approx(test::brute_force_ami(a, b)).epsilon(1e-9));
  }
}

TEST_CASE("metrics are invariant to relabeling") {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = test::random_partition(rng, 30, 6);
    const auto b = test::random_partition(rng, 30, 6);
    PartitionLabels renamed = a;
    for (auto &v : renamed) v = 100 - 3 * v;
    CHECK(adjusted_rand_index(renamed, b) == doctest::Approx(adjusted_rand_index(a, b)));
    CHECK(adjusted_mutual_information(renamed, b) == doctest::Approx(adjusted_mutual_information(a, b)));
    CHECK(misclassification_rate(renamed, b) == doctest::Approx(misclassification_rate(a, b)));
    CHECK(adjusted_rand_index(a, b) == doctest::Approx(adjusted_rand_index(b, a)));
  }
}

} // TEST_SUITE
