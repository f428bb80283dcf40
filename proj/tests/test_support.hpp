#pragma once

#include "cpadmm/random.hpp"
#include "cpadmm/tensor.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

namespace cpadmm::testing {

inline Index uniform_int(Rng& rng, Index lo, Index hi) {
  return lo + static_cast<Index>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

/// Order 3 or 4, extents in [1, max_extent].
inline Dims random_dims(Rng& rng, Index max_extent, std::size_t order = 0) {
  if (order == 0) order = static_cast<std::size_t>(uniform_int(rng, 3, 4));
  Dims d(order);
  for (auto& x : d) x = uniform_int(rng, 1, max_extent);
  return d;
}

inline DenseTensor random_tensor(const Dims& dims, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(element_count(dims)));
  for (auto& x : v) x = 2.0 * uniform01(rng) - 1.0;
  return DenseTensor(dims, std::move(v));
}

inline std::vector<Matrix> random_factors(const Dims& dims, Index rank, Rng& rng) {
  std::vector<Matrix> f;
  for (Index d : dims) f.push_back(uniform_matrix(d, rank, rng));
  return f;
}

inline double rel_diff(const Matrix& a, const Matrix& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

/// Calls fn(idx) for every multi-index of dims in row-major order.
template <class Fn>
void for_each_index(const Dims& dims, Fn&& fn) {
  std::vector<Index> idx(dims.size(), 0);
  const Index total = element_count(dims);
  for (Index n = 0; n < total; ++n) {
    fn(std::as_const(idx));
    for (std::size_t m = dims.size(); m-- > 0;) {
      if (++idx[m] < dims[m]) break;
      idx[m] = 0;
    }
  }
}

/// Column of element idx in the mode-`mode` unfolding: remaining modes in
/// increasing order, lowest fastest.
inline Index unfolding_column(const Dims& dims, std::span<const Index> idx,
                              std::size_t mode) {
  Index col = 0;
  Index stride = 1;
  for (std::size_t n = 0; n < dims.size(); ++n) {
    if (n == mode) continue;
    col += idx[n] * stride;
    stride *= dims[n];
  }
  return col;
}

/// Element-wise sum over rank-one terms.
inline double model_entry(std::span<const Matrix> f, std::span<const Index> idx) {
  double s = 0.0;
  for (Index r = 0; r < f[0].cols(); ++r) {
    double p = 1.0;
    for (std::size_t n = 0; n < f.size(); ++n) p *= f[n](idx[n], r);
    s += p;
  }
  return s;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("cpadmm_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  [[nodiscard]] std::filesystem::path operator/(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

}  // namespace cpadmm::testing
