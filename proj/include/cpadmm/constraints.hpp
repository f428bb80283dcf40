#pragma once

#include "cpadmm/tensor.hpp"

#include <string>
#include <string_view>

namespace cpadmm {

enum class ConstraintKind { NonNegative, NonNegativeCardinality, RowStochastic };

/// Feasible set imposed on one factor matrix through its auxiliary copy.
class ConstraintSpec {
 public:
  ConstraintSpec() = default;

  static ConstraintSpec non_negative() { return {}; }
  /// Non-negative with at most `limit` nonzero entries in the whole matrix.
  static ConstraintSpec cardinality(Index limit);
  /// Each row is a probability mass function.
  static ConstraintSpec row_stochastic();

  /// Parses `nonneg`, `nonneg_card:<c>` or `row_stochastic`.
  static ConstraintSpec parse(std::string_view text);
  [[nodiscard]] std::string to_string() const;

  [[nodiscard]] ConstraintKind kind() const { return kind_; }
  [[nodiscard]] Index cardinality_limit() const { return limit_; }

  /// True when the projection acts on each row independently, so a row
  /// block can be projected on its own.
  [[nodiscard]] bool row_separable() const {
    return kind_ != ConstraintKind::NonNegativeCardinality;
  }

  /// Throws std::invalid_argument if the spec cannot apply to a
  /// rows x cols factor.
  void validate_for(Index rows, Index cols) const;

  friend bool operator==(const ConstraintSpec&, const ConstraintSpec&) = default;

 private:
  ConstraintKind kind_ = ConstraintKind::NonNegative;
  Index limit_ = 0;
};

/// Euclidean projection onto the feasible set of `spec`.
/// Cardinality ties keep the smaller row-major linear index. Simplex rows
/// sum to exactly 1.0 when accumulated left to right.
[[nodiscard]] Matrix project(const Matrix& m, const ConstraintSpec& spec);

/// Euclidean projection of a vector onto the probability simplex.
[[nodiscard]] Vector project_simplex(const Vector& v);

/// True iff no entry is below -tol, the support (|x| > tol) fits the
/// cardinality limit and row sums are within tol of one, as applicable.
[[nodiscard]] bool is_feasible(const Matrix& m, const ConstraintSpec& spec,
                               double tol);

}  // namespace cpadmm
