#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "screenbo/errors.hpp"

namespace screenbo {

// A screening pool: candidate features plus the ground-truth cheap and
// expensive scores. In simulated screens the score vectors act as the hidden
// test oracle; policies only ever see values that have been paid for.
struct Dataset {
  Eigen::MatrixXd features;        // n x d
  Eigen::VectorXd cheap_scores;    // n
  Eigen::VectorXd expensive_scores;  // n
  std::vector<std::string> ids;    // external identifiers, size n

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }

  void validate() const {
    if (cheap_scores.size() != size() || expensive_scores.size() != size() ||
        static_cast<Eigen::Index>(ids.size()) != size())
      throw InputError("Dataset: inconsistent lengths");
    if (!features.allFinite() || !cheap_scores.allFinite() || !expensive_scores.allFinite())
      throw DataError("Dataset: non-finite values");
  }
};

// Indices of the N largest expensive scores, ties broken by lower index.
inline std::vector<int> true_top_n(const Dataset& data, int n_top) {
  if (n_top < 0 || n_top > data.size())
    throw InputError("true_top_n: N out of range");
  std::vector<int> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + n_top, order.end(), [&](int a, int b) {
    const double ya = data.expensive_scores[a], yb = data.expensive_scores[b];
    return ya > yb || (ya == yb && a < b);
  });
  order.resize(static_cast<std::size_t>(n_top));
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace screenbo
