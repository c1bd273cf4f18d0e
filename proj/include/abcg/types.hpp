#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace abcg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape or argument precondition violated by the caller.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Malformed on-disk matrix file or configuration text.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Breakdown inside a numerical kernel (non-finite values, loss of definiteness).
class NumericalError : public Error {
public:
    using Error::Error;
};

inline std::string shape_string(Index rows, Index cols)
{
    return std::to_string(rows) + "x" + std::to_string(cols);
}

} // namespace abcg
