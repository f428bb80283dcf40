#include "cpadmm/tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cpadmm {

namespace {

using IndexArray = std::array<Index, kMaxOrder>;

// Row-major increment over the first `count` modes.
inline void next_index(IndexArray& idx, const Dims& dims, std::size_t count) {
  for (std::size_t n = count; n-- > 0;) {
    if (++idx[n] < dims[n]) return;
    idx[n] = 0;
  }
}

void check_mode(std::size_t mode, std::size_t order) {
  if (mode >= order) {
    throw std::invalid_argument("mode " + std::to_string(mode) +
                                " out of range for order " +
                                std::to_string(order));
  }
}

// Validates the factors against the tensor extents and returns the rank.
Index check_factors(const Dims& dims, std::span<const Matrix> factors,
                    std::size_t mode) {
  check_mode(mode, dims.size());
  if (factors.size() != dims.size()) {
    throw std::invalid_argument("factor count does not match tensor order");
  }
  Index rank = -1;
  for (std::size_t n = 0; n < dims.size(); ++n) {
    if (n == mode) continue;
    if (factors[n].rows() != dims[n]) {
      throw std::invalid_argument("factor " + std::to_string(n) + " has " +
                                  std::to_string(factors[n].rows()) +
                                  " rows, tensor extent is " +
                                  std::to_string(dims[n]));
    }
    if (rank < 0) rank = factors[n].cols();
    if (factors[n].cols() != rank) {
      throw std::invalid_argument("factors disagree on the rank");
    }
  }
  if (rank < 1) throw std::invalid_argument("rank must be positive");
  return rank;
}

// Row r (row-major multi-index over modes 0..count-1) holds the elementwise
// product of factors[n](i_n, :) for those modes, skipping `skip`.
Matrix leading_khatri_rao(const Dims& dims, std::span<const Matrix> factors,
                          std::size_t count, std::size_t skip, Index rank) {
  Index rows = 1;
  for (std::size_t n = 0; n < count; ++n) rows *= dims[n];
  Matrix out(rows, rank);
  IndexArray idx{};
  for (Index r = 0; r < rows; ++r) {
    for (Index f = 0; f < rank; ++f) {
      double w = 1.0;
      bool first = true;
      for (std::size_t n = 0; n < count; ++n) {
        if (n == skip) continue;
        const double u = factors[n](idx[n], f);
        w = first ? u : w * u;
        first = false;
      }
      out(r, f) = w;
    }
    next_index(idx, dims, count);
  }
  return out;
}

}  // namespace

void check_dims(std::span<const Index> dims) {
  if (dims.size() < kMinOrder || dims.size() > kMaxOrder) {
    throw std::invalid_argument("tensor order must be 3 or 4, got " +
                                std::to_string(dims.size()));
  }
  for (Index d : dims) {
    if (d < 1) throw std::invalid_argument("tensor extents must be >= 1");
  }
}

Index element_count(std::span<const Index> dims) {
  return std::accumulate(dims.begin(), dims.end(), Index{1},
                         std::multiplies<>());
}

// ---------------------------------------------------------------- DenseTensor

DenseTensor::DenseTensor(Dims dims, std::vector<double> values)
    : dims_(std::move(dims)), values_(std::move(values)) {
  check_dims(dims_);
  if (static_cast<Index>(values_.size()) != element_count(dims_)) {
    throw std::invalid_argument("value count does not match tensor extents");
  }
}

DenseTensor DenseTensor::zeros(Dims dims) {
  check_dims(dims);
  const auto n = static_cast<std::size_t>(element_count(dims));
  return DenseTensor(std::move(dims), std::vector<double>(n, 0.0));
}

Index DenseTensor::linear_index(std::span<const Index> idx) const {
  if (idx.size() != order()) {
    throw std::invalid_argument("index arity does not match tensor order");
  }
  Index p = 0;
  for (std::size_t n = 0; n < order(); ++n) {
    if (idx[n] < 0 || idx[n] >= dims_[n]) {
      throw std::out_of_range("tensor index out of range");
    }
    p = p * dims_[n] + idx[n];
  }
  return p;
}

double DenseTensor::at(Index i, Index j, Index k) const {
  const std::array<Index, 3> idx{i, j, k};
  return (*this)(idx);
}

double DenseTensor::at(Index i, Index j, Index k, Index l) const {
  const std::array<Index, 4> idx{i, j, k, l};
  return (*this)(idx);
}

DenseTensor DenseTensor::slice(std::span<const Index> offsets,
                               std::span<const Index> extents) const {
  if (offsets.size() != order() || extents.size() != order()) {
    throw std::invalid_argument("slice arity does not match tensor order");
  }
  Dims sub(extents.begin(), extents.end());
  check_dims(sub);
  for (std::size_t n = 0; n < order(); ++n) {
    if (offsets[n] < 0 || offsets[n] + extents[n] > dims_[n]) {
      throw std::out_of_range("slice exceeds tensor extents");
    }
  }
  const std::size_t N = order();
  const Index inner = sub[N - 1];
  const Index rows = element_count(sub) / inner;
  std::vector<double> out(static_cast<std::size_t>(rows * inner));
  IndexArray idx{};
  for (Index r = 0; r < rows; ++r) {
    Index p = 0;
    for (std::size_t n = 0; n + 1 < N; ++n) p = p * dims_[n] + offsets[n] + idx[n];
    p = p * dims_[N - 1] + offsets[N - 1];
    std::copy_n(values_.begin() + p, inner, out.begin() + r * inner);
    next_index(idx, sub, N - 1);
  }
  return DenseTensor(std::move(sub), std::move(out));
}

// ------------------------------------------------------------------ CooTensor

CooTensor::CooTensor(Dims dims, std::vector<Index> indices,
                     std::vector<double> values)
    : dims_(std::move(dims)),
      indices_(std::move(indices)),
      values_(std::move(values)) {
  check_dims(dims_);
  const std::size_t N = order();
  if (indices_.size() != values_.size() * N) {
    throw std::invalid_argument("index array size does not match entry count");
  }
  for (Index e = 0; e < nnz(); ++e) {
    auto idx = index(e);
    for (std::size_t n = 0; n < N; ++n) {
      if (idx[n] < 0 || idx[n] >= dims_[n]) {
        throw std::out_of_range("sparse entry index out of range");
      }
    }
    if (e > 0) {
      auto prev = index(e - 1);
      if (!std::lexicographical_compare(prev.begin(), prev.end(), idx.begin(),
                                        idx.end())) {
        throw std::invalid_argument(
            "sparse entries must be strictly increasing and unique");
      }
    }
  }
}

CooTensor CooTensor::from_unsorted(Dims dims, std::vector<Index> indices,
                                   std::vector<double> values) {
  check_dims(dims);
  const std::size_t N = dims.size();
  if (indices.size() != values.size() * N) {
    throw std::invalid_argument("index array size does not match entry count");
  }
  std::vector<std::size_t> perm(values.size());
  std::iota(perm.begin(), perm.end(), 0);
  auto key = [&](std::size_t e) {
    return std::span<const Index>(indices.data() + e * N, N);
  };
  std::sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
    auto ka = key(a);
    auto kb = key(b);
    return std::lexicographical_compare(ka.begin(), ka.end(), kb.begin(),
                                        kb.end());
  });
  std::vector<Index> sorted_idx;
  std::vector<double> sorted_val;
  sorted_idx.reserve(indices.size());
  sorted_val.reserve(values.size());
  for (std::size_t e : perm) {
    auto k = key(e);
    sorted_idx.insert(sorted_idx.end(), k.begin(), k.end());
    sorted_val.push_back(values[e]);
  }
  return CooTensor(std::move(dims), std::move(sorted_idx),
                   std::move(sorted_val));
}

CooTensor CooTensor::from_dense(const DenseTensor& t) {
  std::vector<Index> idx_out;
  std::vector<double> val_out;
  IndexArray idx{};
  const auto vals = t.values();
  for (std::size_t p = 0; p < vals.size(); ++p) {
    if (vals[p] != 0.0) {
      idx_out.insert(idx_out.end(), idx.begin(), idx.begin() + t.order());
      val_out.push_back(vals[p]);
    }
    next_index(idx, t.dims(), t.order());
  }
  return CooTensor(t.dims(), std::move(idx_out), std::move(val_out));
}

DenseTensor CooTensor::to_dense() const {
  std::vector<double> out(static_cast<std::size_t>(element_count(dims_)), 0.0);
  for (Index e = 0; e < nnz(); ++e) {
    Index p = 0;
    auto idx = index(e);
    for (std::size_t n = 0; n < order(); ++n) p = p * dims_[n] + idx[n];
    out[static_cast<std::size_t>(p)] = values_[static_cast<std::size_t>(e)];
  }
  return DenseTensor(dims_, std::move(out));
}

// ------------------------------------------------------------------ TensorRef

const Dims& TensorRef::dims() const {
  return std::visit([](const auto* t) -> const Dims& { return t->dims(); },
                    ptr_);
}

const DenseTensor* TensorRef::dense() const {
  auto p = std::get_if<const DenseTensor*>(&ptr_);
  return p ? *p : nullptr;
}

const CooTensor* TensorRef::sparse() const {
  auto p = std::get_if<const CooTensor*>(&ptr_);
  return p ? *p : nullptr;
}

// --------------------------------------------------------------- KruskalModel

Dims KruskalModel::dims() const {
  Dims d;
  d.reserve(factors.size());
  for (const auto& f : factors) d.push_back(f.rows());
  return d;
}

void KruskalModel::validate() const {
  if (factors.size() < kMinOrder || factors.size() > kMaxOrder) {
    throw std::invalid_argument("model order must be 3 or 4");
  }
  const Index F = factors.front().cols();
  if (F < 1) throw std::invalid_argument("model rank must be positive");
  for (const auto& f : factors) {
    if (f.rows() < 1) throw std::invalid_argument("empty factor matrix");
    if (f.cols() != F) {
      throw std::invalid_argument("factor matrices disagree on the rank");
    }
    if (!f.allFinite()) {
      throw std::invalid_argument("factor matrix has non-finite entries");
    }
  }
}

// ----------------------------------------------------------------- unfoldings

Matrix unfold(const DenseTensor& t, std::size_t mode) {
  const Dims& d = t.dims();
  const std::size_t N = t.order();
  check_mode(mode, N);
  IndexArray stride{};
  Index cols = 1;
  for (std::size_t n = 0; n < N; ++n) {
    if (n == mode) continue;
    stride[n] = cols;
    cols *= d[n];
  }
  Matrix out(d[mode], cols);
  IndexArray idx{};
  const auto vals = t.values();
  for (std::size_t p = 0; p < vals.size(); ++p) {
    Index c = 0;
    for (std::size_t n = 0; n < N; ++n) c += idx[n] * stride[n];
    out(idx[mode], c) = vals[p];
    next_index(idx, d, N);
  }
  return out;
}

DenseTensor fold(const Matrix& m, std::size_t mode, Dims dims) {
  check_dims(dims);
  const std::size_t N = dims.size();
  check_mode(mode, N);
  IndexArray stride{};
  Index cols = 1;
  for (std::size_t n = 0; n < N; ++n) {
    if (n == mode) continue;
    stride[n] = cols;
    cols *= dims[n];
  }
  if (m.rows() != dims[mode] || m.cols() != cols) {
    throw std::invalid_argument("matrix shape does not match unfolding");
  }
  std::vector<double> vals(static_cast<std::size_t>(element_count(dims)));
  IndexArray idx{};
  for (double& v : vals) {
    Index c = 0;
    for (std::size_t n = 0; n < N; ++n) c += idx[n] * stride[n];
    v = m(idx[mode], c);
    next_index(idx, dims, N);
  }
  return DenseTensor(std::move(dims), std::move(vals));
}

// ---------------------------------------------------------- Khatri–Rao / Gram

Matrix khatri_rao(const Matrix& outer, const Matrix& inner) {
  if (outer.cols() != inner.cols()) {
    throw std::invalid_argument("Khatri-Rao operands differ in column count");
  }
  const Index J = inner.rows();
  Matrix out(outer.rows() * J, outer.cols());
  for (Index k = 0; k < outer.rows(); ++k) {
    for (Index j = 0; j < J; ++j) {
      out.row(j + k * J) = outer.row(k).cwiseProduct(inner.row(j));
    }
  }
  return out;
}

Matrix khatri_rao(std::span<const Matrix> ms) {
  if (ms.empty()) throw std::invalid_argument("Khatri-Rao of no matrices");
  Matrix acc = ms.back();
  for (std::size_t n = ms.size() - 1; n-- > 0;) acc = khatri_rao(ms[n], acc);
  return acc;
}

Matrix unfolding_khatri_rao(std::span<const Matrix> factors, std::size_t mode) {
  check_mode(mode, factors.size());
  std::vector<Matrix> others;
  for (std::size_t n = factors.size(); n-- > 0;) {
    if (n != mode) others.push_back(factors[n]);
  }
  return khatri_rao(others);
}

Matrix gram_hadamard(std::span<const Matrix> factors, std::size_t skip) {
  check_mode(skip, factors.size());
  Matrix out;
  bool first = true;
  for (std::size_t n = 0; n < factors.size(); ++n) {
    if (n == skip) continue;
    Matrix g = factors[n].transpose() * factors[n];
    if (first) {
      out = std::move(g);
      first = false;
    } else {
      if (g.rows() != out.rows()) {
        throw std::invalid_argument("factors disagree on the rank");
      }
      out = out.cwiseProduct(g);
    }
  }
  return out;
}

Matrix gram_hadamard(const KruskalModel& model, std::size_t skip) {
  return gram_hadamard(std::span<const Matrix>(model.factors), skip);
}

// --------------------------------------------------------------------- MTTKRP

Matrix mttkrp(const DenseTensor& t, std::span<const Matrix> factors,
              std::size_t mode) {
  const Dims& d = t.dims();
  const Index F = check_factors(d, factors, mode);
  const std::size_t N = t.order();
  const std::size_t last = N - 1;
  const Index P = t.size() / d[last];
  Eigen::Map<const RowMajorMatrix> x(t.values().data(), P, d[last]);

  Matrix out = Matrix::Zero(d[mode], F);
  if (mode == last) {
    const Matrix kr = leading_khatri_rao(d, factors, last, mode, F);
    out.noalias() = x.transpose() * kr;
    return out;
  }
  // Contract the last mode with a GEMM, then fold in the remaining factors.
  const Matrix z = x * factors[last];
  for (Index f = 0; f < F; ++f) {
    IndexArray idx{};
    for (Index r = 0; r < P; ++r) {
      double w = z(r, f);
      for (std::size_t n = 0; n < last; ++n) {
        if (n != mode) w *= factors[n](idx[n], f);
      }
      out(idx[mode], f) += w;
      next_index(idx, d, last);
    }
  }
  return out;
}

Matrix mttkrp(const CooTensor& t, std::span<const Matrix> factors,
              std::size_t mode) {
  const Dims& d = t.dims();
  const Index F = check_factors(d, factors, mode);
  Matrix out = Matrix::Zero(d[mode], F);
  for (Index e = 0; e < t.nnz(); ++e) {
    const auto idx = t.index(e);
    const double v = t.value(e);
    for (Index f = 0; f < F; ++f) {
      double w = v;
      for (std::size_t n = 0; n < t.order(); ++n) {
        if (n != mode) w *= factors[n](idx[n], f);
      }
      out(idx[mode], f) += w;
    }
  }
  return out;
}

Matrix mttkrp(TensorRef t, std::span<const Matrix> factors, std::size_t mode) {
  if (const auto* d = t.dense()) return mttkrp(*d, factors, mode);
  return mttkrp(*t.sparse(), factors, mode);
}

// ------------------------------------------------------------- reconstruction

DenseTensor reconstruct(std::span<const Matrix> factors) {
  KruskalModel m(std::vector<Matrix>(factors.begin(), factors.end()));
  m.validate();
  const Dims d = m.dims();
  const std::size_t last = d.size() - 1;
  const Matrix kr = leading_khatri_rao(d, factors, last, last, m.rank());
  std::vector<double> vals(static_cast<std::size_t>(element_count(d)));
  Eigen::Map<RowMajorMatrix>(vals.data(), kr.rows(), d[last]).noalias() =
      kr * factors[last].transpose();
  return DenseTensor(d, std::move(vals));
}

DenseTensor reconstruct(const KruskalModel& model) {
  return reconstruct(std::span<const Matrix>(model.factors));
}

// --------------------------------------------------------------------- errors

double frobenius_norm(const DenseTensor& t) {
  return Eigen::Map<const Vector>(t.values().data(), t.size()).norm();
}

double frobenius_norm(const CooTensor& t) {
  return Eigen::Map<const Vector>(t.values().data(), t.nnz()).norm();
}

double frobenius_norm(TensorRef t) {
  if (const auto* d = t.dense()) return frobenius_norm(*d);
  return frobenius_norm(*t.sparse());
}

double model_inner_product(TensorRef t, std::span<const Matrix> factors) {
  const Matrix m = mttkrp(t, factors, 0);
  return m.cwiseProduct(factors[0]).sum();
}

double model_norm_squared(std::span<const Matrix> factors) {
  const Matrix g = gram_hadamard(factors, 0);
  return g.cwiseProduct(factors[0].transpose() * factors[0]).sum();
}

namespace {

void check_model_against(const Dims& dims, const KruskalModel& model) {
  model.validate();
  if (model.dims() != dims) {
    throw std::invalid_argument("model extents do not match tensor extents");
  }
}

}  // namespace

double relative_error(const DenseTensor& t, const KruskalModel& model) {
  check_model_against(t.dims(), model);
  const double xnorm = frobenius_norm(t);
  if (xnorm == 0.0) {
    throw std::invalid_argument("relative error of an all-zero tensor");
  }
  const DenseTensor w = reconstruct(model);
  const auto x = t.values();
  const auto y = w.values();
  double acc = 0.0;
  for (std::size_t p = 0; p < x.size(); ++p) {
    const double r = x[p] - y[p];
    acc += r * r;
  }
  return std::sqrt(acc) / xnorm;
}

double relative_error(const CooTensor& t, const KruskalModel& model) {
  check_model_against(t.dims(), model);
  const double xnorm = frobenius_norm(t);
  if (xnorm == 0.0) {
    throw std::invalid_argument("relative error of an all-zero tensor");
  }
  // ||X - W||^2 = sum over stored entries of (x - w)^2 - w^2, plus ||W||^2.
  double acc = 0.0;
  for (Index e = 0; e < t.nnz(); ++e) {
    const auto idx = t.index(e);
    double w = 0.0;
    for (Index f = 0; f < model.rank(); ++f) {
      double p = 1.0;
      for (std::size_t n = 0; n < t.order(); ++n) p *= model.factors[n](idx[n], f);
      w += p;
    }
    const double r = t.value(e) - w;
    acc += r * r - w * w;
  }
  acc += model_norm_squared(model.factors);
  return std::sqrt(std::max(acc, 0.0)) / xnorm;
}

double relative_error(TensorRef t, const KruskalModel& model) {
  if (const auto* d = t.dense()) return relative_error(*d, model);
  return relative_error(*t.sparse(), model);
}

}  // namespace cpadmm
