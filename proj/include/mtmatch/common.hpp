#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mtmatch {

using Eigen::MatrixXd;
using Eigen::MatrixXi;
using Eigen::VectorXd;

// Input that violates a documented contract (bad labels, too-small groups, ...).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A numerical procedure could not produce a usable answer.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Ordered contrast between two treatment codes: tau_{jk} = E[Y(j) - Y(k)].
struct Pair {
  int j = 0;
  int k = 0;
  friend bool operator==(const Pair&, const Pair&) = default;
};

// (0,1), (0,2), ..., (Z-2, Z-1).
std::vector<Pair> all_pairs(int num_treatments);

// SplitMix64 finaliser; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

}  // namespace mtmatch
