#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace uqasr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// HMM emission state index; 0..num_states-1.
using StateId = int;
// One state id per feature frame.
using Alignment = std::vector<StateId>;
// Sequence of spoken digits (0..9).
using Transcript = std::vector<int>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data (files, text records).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Array dimensions disagree with what an operation expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Missing or mismatched on-disk artifacts (checkpoints, score files, ...).
class ArtifactError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

std::string format_transcript(const Transcript& digits);
Transcript parse_transcript(std::string_view text);

bool all_finite(const Matrix& m);

}  // namespace uqasr
