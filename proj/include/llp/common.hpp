#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace llp {

/// One epoch in feature space. Layout for interval-mean features is
/// interval-major: index = interval_index * n_channels + channel_index.
using FeatureVector = Eigen::VectorXd;

/// Binary class label: +1 target, -1 non-target.
using Label = int;

/// Trains on rows of a feature matrix, returns a weight vector scoring by
/// inner product.
using WeightTrainer = std::function<Eigen::VectorXd(
    const Eigen::MatrixXd&, const std::vector<Label>&)>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or violated precondition.
class ValueError : public Error {
 public:
  using Error::Error;
};

/// Rank-deficient or non-invertible matrix where an inverse is required.
class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

/// Not enough samples to compute the requested estimate.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// Constraint-satisfaction or iterative search gave up within its budget.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// File or format problem while reading or writing artifacts.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace llp
