#ifndef FLAIR_MODEL_HPP
#define FLAIR_MODEL_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flair/numcore.hpp"

namespace flair {

/// n x p entry-level holdout mask; true marks a held-out cell that is
/// excluded from every likelihood term.
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct Dataset {
  Matrix y;                  // n x p, entries in {0,1}
  Matrix x;                  // n x q, first column all ones
  std::optional<Mask> mask;  // same shape as y when present
  std::vector<std::string> names;

  Index n() const { return y.rows(); }
  Index p() const { return y.cols(); }
  Index q() const { return x.cols(); }

  bool observed(Index i, Index j) const { return !mask || !(*mask)(i, j); }

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
};

/// Builds and validates a dataset.
Dataset make_dataset(Matrix y, Matrix x, std::optional<Mask> mask = std::nullopt,
                     std::vector<std::string> names = {});

/// n x 1 column of ones.
Matrix intercept_design(Index n);

struct PriorConfig {
  double c_lambda = 10.0;
  double c_b = 10.0;
  Vector tau_lambda;  // p
  Vector tau_b;       // p
  int k = 1;

  void validate(Index p) const;
};

/// Half-width of the factor box: 2 sqrt(log(k n)).
double factor_bound(int k, Index n);

struct FactorState {
  Matrix m;       // n x k
  Matrix lambda;  // p x k
  Matrix b;       // p x q

  Index k() const { return lambda.cols(); }
};

inline constexpr double kFeasibilityTol = 1e-9;

bool is_feasible(const FactorState& state, const PriorConfig& prior,
                 double tol = kFeasibilityTol);
/// Elementwise clamp of M, Lambda and B onto their boxes.
void project_to_boxes(FactorState& state, const PriorConfig& prior);

struct FitOptions {
  double step_outcome = 0.3;
  double step_factor = 1.0;
  double inner_tol = 1e-3;
  double outer_tol = 1e-3;
  int max_inner = 100;
  int max_outer = 100;
  int max_halvings = 30;
  Link link{};
  std::uint64_t seed = 0;

  void validate() const;
};

/// Z = X B^T + M Lambda^T.
Matrix linear_predictor(const FactorState& state, const Matrix& x);

/// Bernoulli log-likelihood over the unmasked cells. Columns are summed
/// independently and then reduced in index order.
double log_likelihood(const Matrix& z, const Dataset& data, const Link& link);

/// Log joint posterior up to its additive constant.
double log_joint_posterior(const FactorState& state, const Dataset& data,
                           const PriorConfig& prior, const Link& link);

/// Cached Cholesky factor of X^T X.
class DesignSolver {
 public:
  /// Throws NumericalError when X^T X is numerically singular.
  explicit DesignSolver(const Matrix& x);

  /// (X^T X)^{-1} X^T rhs.
  Matrix coefficients(const Matrix& rhs) const;
  /// X (X^T X)^{-1} X^T rhs.
  Matrix project(const Matrix& rhs) const;
  /// rhs (X^T X)^{-1}, for row-oriented coefficient blocks.
  Matrix right_solve(const Matrix& rhs) const;

 private:
  Matrix x_;
  Eigen::LLT<Matrix> llt_;
};

}  // namespace flair

#endif  // FLAIR_MODEL_HPP
