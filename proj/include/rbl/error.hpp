#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rbl {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
public:
  using Error::Error;
};

class DimensionMismatch : public Error {
public:
  using Error::Error;
};

// Distance matrix has no Euclidean embedding in the requested dimension.
class EmbeddingError : public Error {
public:
  EmbeddingError(const std::string& what, double deficit)
      : Error(what), deficit_(deficit) {}
  // Magnitude of the most negative Gram eigenvalue beyond tolerance.
  double deficit() const { return deficit_; }

private:
  double deficit_;
};

// A linear system or point configuration lacks full rank. `null_space`
// columns span the directions that are not determined.
class RankDeficiency : public Error {
public:
  RankDeficiency(const std::string& what, int rank, Eigen::MatrixXd null_space,
                 std::vector<std::string> directions = {})
      : Error(what), rank_(rank), null_space_(std::move(null_space)),
        directions_(std::move(directions)) {}

  int rank() const { return rank_; }
  const Eigen::MatrixXd& null_space() const { return null_space_; }
  const std::vector<std::string>& directions() const { return directions_; }

private:
  int rank_;
  Eigen::MatrixXd null_space_;
  std::vector<std::string> directions_;
};

class IdentifiabilityError : public Error {
public:
  using Error::Error;
};

// Measurement is undefined at the given geometry (bearing or log of zero).
class SingularityError : public Error {
public:
  SingularityError(const std::string& what, int anchor, int node)
      : Error(what), anchor_(anchor), node_(node) {}
  int anchor() const { return anchor_; }
  int node() const { return node_; }

private:
  int anchor_;
  int node_;
};

class ConditioningError : public Error {
public:
  using Error::Error;
};

class ValidationError : public Error {
public:
  explicit ValidationError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

private:
  std::vector<std::string> violations_;
};

class IoError : public Error {
public:
  using Error::Error;
};

// Columns of an orthonormal basis for the numerical null space of `m`.
Eigen::MatrixXd null_space_basis(const Eigen::MatrixXd& m, double rel_tol = 1e-10);

} // namespace rbl
