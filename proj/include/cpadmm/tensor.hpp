#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

namespace cpadmm {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Dims = std::vector<Index>;

inline constexpr std::size_t kMinOrder = 3;
inline constexpr std::size_t kMaxOrder = 4;

/// Throws std::invalid_argument unless dims has 3 or 4 positive extents.
void check_dims(std::span<const Index> dims);

/// Product of the extents.
[[nodiscard]] Index element_count(std::span<const Index> dims);

/// Dense order-3 or order-4 tensor. Values are stored row-major in index
/// order (i_1, ..., i_N), i.e. the last index varies fastest.
class DenseTensor {
 public:
  DenseTensor(Dims dims, std::vector<double> values);

  static DenseTensor zeros(Dims dims);

  [[nodiscard]] const Dims& dims() const { return dims_; }
  [[nodiscard]] std::size_t order() const { return dims_.size(); }
  [[nodiscard]] Index size() const { return static_cast<Index>(values_.size()); }
  [[nodiscard]] std::span<const double> values() const { return values_; }

  [[nodiscard]] Index linear_index(std::span<const Index> idx) const;
  [[nodiscard]] double operator()(std::span<const Index> idx) const {
    return values_[static_cast<std::size_t>(linear_index(idx))];
  }
  [[nodiscard]] double at(Index i, Index j, Index k) const;
  [[nodiscard]] double at(Index i, Index j, Index k, Index l) const;

  /// Copies the box [offsets, offsets + extents) into a new tensor.
  [[nodiscard]] DenseTensor slice(std::span<const Index> offsets,
                                  std::span<const Index> extents) const;

 private:
  Dims dims_;
  std::vector<double> values_;
};

/// Sparse coordinate tensor. Entries are kept in strictly increasing
/// lexicographic index order; indices are stored flat, `order()` per entry.
class CooTensor {
 public:
  /// Entries must already be strictly increasing and within bounds.
  CooTensor(Dims dims, std::vector<Index> indices, std::vector<double> values);

  /// Sorts the entries; rejects duplicate index tuples.
  static CooTensor from_unsorted(Dims dims, std::vector<Index> indices,
                                 std::vector<double> values);
  /// Keeps the nonzero entries of a dense tensor.
  static CooTensor from_dense(const DenseTensor& t);

  [[nodiscard]] const Dims& dims() const { return dims_; }
  [[nodiscard]] std::size_t order() const { return dims_.size(); }
  [[nodiscard]] Index nnz() const { return static_cast<Index>(values_.size()); }
  [[nodiscard]] std::span<const Index> index(Index n) const {
    return {indices_.data() + n * static_cast<Index>(order()), order()};
  }
  [[nodiscard]] double value(Index n) const {
    return values_[static_cast<std::size_t>(n)];
  }
  [[nodiscard]] std::span<const double> values() const { return values_; }

  [[nodiscard]] DenseTensor to_dense() const;

 private:
  Dims dims_;
  std::vector<Index> indices_;
  std::vector<double> values_;
};

/// Non-owning handle to either tensor representation.
class TensorRef {
 public:
  TensorRef(const DenseTensor& t) : ptr_(&t) {}  // NOLINT(implicit)
  TensorRef(const CooTensor& t) : ptr_(&t) {}    // NOLINT(implicit)

  [[nodiscard]] const Dims& dims() const;
  [[nodiscard]] std::size_t order() const { return dims().size(); }
  [[nodiscard]] const DenseTensor* dense() const;
  [[nodiscard]] const CooTensor* sparse() const;

 private:
  std::variant<const DenseTensor*, const CooTensor*> ptr_;
};

/// Factor matrices of a CP model; factor m has dims[m] rows and all
/// factors share the column count (the rank).
struct KruskalModel {
  std::vector<Matrix> factors;

  KruskalModel() = default;
  explicit KruskalModel(std::vector<Matrix> fs) : factors(std::move(fs)) {}

  [[nodiscard]] std::size_t order() const { return factors.size(); }
  [[nodiscard]] Index rank() const {
    return factors.empty() ? 0 : factors.front().cols();
  }
  [[nodiscard]] Dims dims() const;
  /// Throws std::invalid_argument on mismatched ranks, an unsupported
  /// order, empty factors or non-finite entries.
  void validate() const;
};

/// Mode-`mode` unfolding (zero-based mode). The column of element
/// (i_1, ..., i_N) enumerates the remaining indices with the lowest mode
/// varying fastest, e.g. j + k*J for mode 0 of an order-3 tensor.
[[nodiscard]] Matrix unfold(const DenseTensor& t, std::size_t mode);

/// Inverse of unfold.
[[nodiscard]] DenseTensor fold(const Matrix& m, std::size_t mode, Dims dims);

/// Columnwise Kronecker product; row j + k*rows(inner) is
/// outer(k,:) .* inner(j,:).
[[nodiscard]] Matrix khatri_rao(const Matrix& outer, const Matrix& inner);

/// Right-associated product ms[0] ⊙ (ms[1] ⊙ (... ⊙ ms.back())).
[[nodiscard]] Matrix khatri_rao(std::span<const Matrix> ms);

/// Khatri–Rao product of every factor except `mode`, nested so that
/// unfold(reconstruct(f), mode) == f[mode] * unfolding_khatri_rao(f, mode)^T.
[[nodiscard]] Matrix unfolding_khatri_rao(std::span<const Matrix> factors,
                                          std::size_t mode);

/// Hadamard product of the Gram matrices U^T U of every factor but `skip`,
/// multiplied in increasing mode order.
[[nodiscard]] Matrix gram_hadamard(std::span<const Matrix> factors,
                                   std::size_t skip);
[[nodiscard]] Matrix gram_hadamard(const KruskalModel& model, std::size_t skip);

/// X^(mode) times the Khatri–Rao product of the other factors. The factor
/// at `mode` itself is never read and may be empty.
[[nodiscard]] Matrix mttkrp(const DenseTensor& t,
                            std::span<const Matrix> factors, std::size_t mode);
[[nodiscard]] Matrix mttkrp(const CooTensor& t, std::span<const Matrix> factors,
                            std::size_t mode);
[[nodiscard]] Matrix mttkrp(TensorRef t, std::span<const Matrix> factors,
                            std::size_t mode);

[[nodiscard]] DenseTensor reconstruct(std::span<const Matrix> factors);
[[nodiscard]] DenseTensor reconstruct(const KruskalModel& model);

[[nodiscard]] double frobenius_norm(const DenseTensor& t);
[[nodiscard]] double frobenius_norm(const CooTensor& t);
[[nodiscard]] double frobenius_norm(TensorRef t);

/// <X, [U_1, ..., U_N]> computed through one MTTKRP.
[[nodiscard]] double model_inner_product(TensorRef t,
                                         std::span<const Matrix> factors);
/// ||[U_1, ..., U_N]||_F^2 from the Gram matrices.
[[nodiscard]] double model_norm_squared(std::span<const Matrix> factors);

/// ||X - [U]||_F / ||X||_F. Throws std::invalid_argument for a zero tensor.
[[nodiscard]] double relative_error(const DenseTensor& t,
                                    const KruskalModel& model);
[[nodiscard]] double relative_error(const CooTensor& t,
                                    const KruskalModel& model);
[[nodiscard]] double relative_error(TensorRef t, const KruskalModel& model);

}  // namespace cpadmm
