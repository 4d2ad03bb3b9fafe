#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace costco {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Shapes or indices that do not conform to each other.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent input data (files, coordinates, duplicates).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A rank-1 component collapsed to zero (zero vector after truncation, or a
/// zero weight). The current restart cannot continue.
class DegenerateComponent : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Every restart of a fit ended in a degenerate component.
class NumericalFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace costco
