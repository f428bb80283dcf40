#include "cpadmm/tensor_io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cpadmm {

namespace {

constexpr std::array<char, 4> kMagic{'C', 'P', 'D', 'T'};

static_assert(std::endian::native == std::endian::little,
              "binary tensor I/O assumes a little-endian host");

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("truncated binary tensor header");
  return v;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

}  // namespace

CooTensor read_coo_text(std::istream& in) {
  std::string line;
  Dims dims;
  std::vector<Index> indices;
  std::vector<double> values;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    if (dims.empty()) {
      std::string tag;
      ls >> tag;
      if (tag != "dims") {
        throw std::runtime_error("coordinate file must start with 'dims'");
      }
      Index d = 0;
      while (ls >> d) dims.push_back(d);
      check_dims(dims);
      continue;
    }
    for (std::size_t n = 0; n < dims.size(); ++n) {
      Index i = 0;
      if (!(ls >> i)) {
        throw std::runtime_error("bad index on line " + std::to_string(lineno));
      }
      indices.push_back(i);
    }
    double v = 0.0;
    if (!(ls >> v)) {
      throw std::runtime_error("bad value on line " + std::to_string(lineno));
    }
    std::string extra;
    if (ls >> extra) {
      throw std::runtime_error("trailing data on line " +
                               std::to_string(lineno));
    }
    values.push_back(v);
  }
  if (dims.empty()) throw std::runtime_error("coordinate file has no header");
  return CooTensor::from_unsorted(std::move(dims), std::move(indices),
                                  std::move(values));
}

void write_coo_text(std::ostream& out, const CooTensor& t) {
  out << "dims";
  for (Index d : t.dims()) out << ' ' << d;
  out << '\n';
  for (Index e = 0; e < t.nnz(); ++e) {
    for (Index i : t.index(e)) out << i << ' ';
    out << format_double(t.value(e)) << '\n';
  }
}

DenseTensor read_binary(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw std::runtime_error("not a CPDT tensor file");
  const std::uint32_t order = read_u32(in);
  if (order < kMinOrder || order > kMaxOrder) {
    throw std::runtime_error("unsupported tensor order in binary file");
  }
  Dims dims;
  for (std::uint32_t n = 0; n < order; ++n) dims.push_back(read_u32(in));
  check_dims(dims);
  std::vector<double> values(static_cast<std::size_t>(element_count(dims)));
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated binary tensor payload");
  return DenseTensor(std::move(dims), std::move(values));
}

void write_binary(std::ostream& out, const DenseTensor& t) {
  out.write(kMagic.data(), kMagic.size());
  write_u32(out, static_cast<std::uint32_t>(t.order()));
  for (Index d : t.dims()) write_u32(out, static_cast<std::uint32_t>(d));
  out.write(reinterpret_cast<const char*>(t.values().data()),
            static_cast<std::streamsize>(t.values().size() * sizeof(double)));
}

DenseTensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::array<char, 4> head{};
  in.read(head.data(), head.size());
  const bool binary = in.gcount() == 4 && head == kMagic;
  in.clear();
  in.seekg(0);
  if (binary) return read_binary(in);
  return read_coo_text(in).to_dense();
}

void save_tensor(const std::filesystem::path& path, const DenseTensor& t,
                 TensorFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (format == TensorFormat::Binary) {
    write_binary(out, t);
  } else {
    write_coo_text(out, CooTensor::from_dense(t));
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace cpadmm
