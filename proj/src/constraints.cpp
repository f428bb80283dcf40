#include "cpadmm/constraints.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace cpadmm {

ConstraintSpec ConstraintSpec::cardinality(Index limit) {
  if (limit < 1) {
    throw std::invalid_argument("cardinality limit must be positive");
  }
  ConstraintSpec s;
  s.kind_ = ConstraintKind::NonNegativeCardinality;
  s.limit_ = limit;
  return s;
}

ConstraintSpec ConstraintSpec::row_stochastic() {
  ConstraintSpec s;
  s.kind_ = ConstraintKind::RowStochastic;
  return s;
}

ConstraintSpec ConstraintSpec::parse(std::string_view text) {
  if (text == "nonneg") return non_negative();
  if (text == "row_stochastic") return row_stochastic();
  constexpr std::string_view prefix = "nonneg_card:";
  if (text.starts_with(prefix)) {
    const auto digits = text.substr(prefix.size());
    long long c = 0;
    auto [ptr, ec] =
        std::from_chars(digits.data(), digits.data() + digits.size(), c);
    if (ec != std::errc() || ptr != digits.data() + digits.size()) {
      throw std::invalid_argument("bad cardinality in '" + std::string(text) +
                                  "'");
    }
    return cardinality(static_cast<Index>(c));
  }
  throw std::invalid_argument("unknown constraint '" + std::string(text) + "'");
}

std::string ConstraintSpec::to_string() const {
  switch (kind_) {
    case ConstraintKind::NonNegative:
      return "nonneg";
    case ConstraintKind::NonNegativeCardinality:
      return "nonneg_card:" + std::to_string(limit_);
    case ConstraintKind::RowStochastic:
      return "row_stochastic";
  }
  return {};
}

void ConstraintSpec::validate_for(Index rows, Index cols) const {
  if (kind_ == ConstraintKind::NonNegativeCardinality && limit_ > rows * cols) {
    throw std::invalid_argument("cardinality limit " + std::to_string(limit_) +
                                " exceeds factor size " +
                                std::to_string(rows * cols));
  }
}

Vector project_simplex(const Vector& v) {
  const Index n = v.size();
  if (n == 0) throw std::invalid_argument("simplex projection of empty row");
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double theta = 0.0;
  for (Index j = 0; j < n; ++j) {
    cumsum += u[static_cast<std::size_t>(j)];
    const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - t > 0.0) theta = t;
  }
  Vector x = (v.array() - theta).max(0.0).matrix();

  // Re-derive the last positive entry so the left-to-right sum is exactly 1.
  Index last = -1;
  for (Index j = n; j-- > 0;) {
    if (x(j) > 0.0) {
      last = j;
      break;
    }
  }
  if (last < 0) {
    x.setZero();
    x(0) = 1.0;
    return x;
  }
  double head = 0.0;
  for (Index j = 0; j < last; ++j) head += x(j);
  x(last) = std::max(1.0 - head, 0.0);
  return x;
}

namespace {

Matrix project_cardinality(const Matrix& m, Index limit) {
  const Index cols = m.cols();
  // Candidate positions in row-major linear order.
  std::vector<Index> support;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < cols; ++j) {
      if (m(i, j) > 0.0) support.push_back(i * cols + j);
    }
  }
  auto value = [&](Index p) { return m(p / cols, p % cols); };
  if (static_cast<Index>(support.size()) > limit) {
    std::partial_sort(support.begin(), support.begin() + limit, support.end(),
                      [&](Index a, Index b) {
                        const double va = value(a);
                        const double vb = value(b);
                        return va > vb || (va == vb && a < b);
                      });
    support.resize(static_cast<std::size_t>(limit));
  }
  Matrix out = Matrix::Zero(m.rows(), cols);
  for (Index p : support) out(p / cols, p % cols) = value(p);
  return out;
}

}  // namespace

Matrix project(const Matrix& m, const ConstraintSpec& spec) {
  if (!m.allFinite()) {
    throw std::invalid_argument("projection of a matrix with non-finite entries");
  }
  switch (spec.kind()) {
    case ConstraintKind::NonNegative:
      return m.cwiseMax(0.0);
    case ConstraintKind::NonNegativeCardinality:
      return project_cardinality(m, spec.cardinality_limit());
    case ConstraintKind::RowStochastic: {
      Matrix out(m.rows(), m.cols());
      for (Index i = 0; i < m.rows(); ++i) {
        out.row(i) = project_simplex(m.row(i).transpose()).transpose();
      }
      return out;
    }
  }
  return m;
}

bool is_feasible(const Matrix& m, const ConstraintSpec& spec, double tol) {
  if (!m.allFinite()) return false;
  if ((m.array() < -tol).any()) return false;
  switch (spec.kind()) {
    case ConstraintKind::NonNegative:
      return true;
    case ConstraintKind::NonNegativeCardinality:
      return (m.array().abs() > tol).count() <= spec.cardinality_limit();
    case ConstraintKind::RowStochastic:
      for (Index i = 0; i < m.rows(); ++i) {
        double s = 0.0;
        for (Index j = 0; j < m.cols(); ++j) s += m(i, j);
        if (std::abs(s - 1.0) > tol) return false;
      }
      return true;
  }
  return false;
}

}  // namespace cpadmm
