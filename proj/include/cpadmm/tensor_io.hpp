#pragma once

#include "cpadmm/tensor.hpp"

#include <filesystem>
#include <iosfwd>

namespace cpadmm {

/// Text coordinate format: a header line `dims d1 d2 d3 [d4]` followed by
/// one `i j k [l] value` line per stored entry, zero-based. Blank lines and
/// lines starting with '#' are ignored.
[[nodiscard]] CooTensor read_coo_text(std::istream& in);
void write_coo_text(std::ostream& out, const CooTensor& t);

/// Binary format: magic "CPDT", u32 order, u32 extents, then the values as
/// little-endian f64 in row-major order.
[[nodiscard]] DenseTensor read_binary(std::istream& in);
void write_binary(std::ostream& out, const DenseTensor& t);

enum class TensorFormat { Binary, CooText };

/// Reads either format, sniffing the magic bytes. Coordinate files are
/// densified.
[[nodiscard]] DenseTensor load_tensor(const std::filesystem::path& path);
void save_tensor(const std::filesystem::path& path, const DenseTensor& t,
                 TensorFormat format);

}  // namespace cpadmm
