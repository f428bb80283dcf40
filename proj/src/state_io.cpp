#include "cpadmm/state_io.hpp"

#include <json.hpp>

#include <array>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace cpadmm {

using nlohmann::json;

std::string format_double(double x) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  if (ec != std::errc{}) throw std::runtime_error("cannot format number");
  return {buf.data(), ptr};
}

namespace {

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from(const json& j, Index rows, Index cols, const char* what) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows) {
    throw std::runtime_error(std::string(what) + " has the wrong number of rows");
  }
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
      throw std::runtime_error(std::string(what) + " has a row of the wrong length");
    }
    for (Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

std::vector<Matrix> matrices_from(const json& j, const Dims& dims, Index rank,
                                  const char* what) {
  if (!j.is_array() || j.size() != dims.size()) {
    throw std::runtime_error(std::string(what) + " must hold one matrix per mode");
  }
  std::vector<Matrix> out;
  for (std::size_t m = 0; m < dims.size(); ++m) {
    out.push_back(matrix_from(j[m], dims[m], rank, what));
  }
  return out;
}

}  // namespace

void write_state(std::ostream& out, const SolverState& state,
                 std::span<const ConstraintSpec> constraints) {
  state.validate();
  json j;
  j["dims"] = state.dims();
  j["rank"] = state.rank();
  json cs = json::array();
  for (const auto& c : constraints) cs.push_back(c.to_string());
  j["constraints"] = cs;
  j["rho"] = state.rho;
  j["iteration"] = state.iteration;
  for (const auto& [key, mats] :
       {std::pair{"factors", &state.factors}, std::pair{"aux", &state.aux},
        std::pair{"duals", &state.duals}}) {
    json list = json::array();
    for (const auto& m : *mats) list.push_back(matrix_json(m));
    j[key] = std::move(list);
  }
  out << j.dump(1) << '\n';
}

SavedState read_state(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("malformed state file: ") + e.what());
  }
  try {
    const Dims dims = j.at("dims").get<Dims>();
    check_dims(dims);
    const Index rank = j.at("rank").get<Index>();
    if (rank < 1) throw std::runtime_error("rank must be at least 1");
    SavedState s;
    s.state.factors = matrices_from(j.at("factors"), dims, rank, "factors");
    if (j.contains("aux")) {
      s.state.aux = matrices_from(j.at("aux"), dims, rank, "aux");
      s.state.duals = matrices_from(j.at("duals"), dims, rank, "duals");
      s.state.rho = j.at("rho").get<std::vector<double>>();
      s.state.iteration = j.value("iteration", 0);
    } else {
      s.state.aux = s.state.factors;
      for (Index d : dims) s.state.duals.push_back(Matrix::Zero(d, rank));
      s.state.rho.assign(dims.size(), 1.0);
    }
    if (j.contains("constraints")) {
      for (const auto& c : j.at("constraints")) {
        s.constraints.push_back(ConstraintSpec::parse(c.get<std::string>()));
      }
    }
    if (s.constraints.empty()) {
      s.constraints.assign(dims.size(), ConstraintSpec::non_negative());
    }
    if (s.constraints.size() != dims.size()) {
      throw std::runtime_error("constraints must list one entry per mode");
    }
    s.state.validate();
    return s;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("invalid state file: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("invalid state file: ") + e.what());
  }
}

void save_state(const std::filesystem::path& path, const SolverState& state,
                std::span<const ConstraintSpec> constraints) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_state(out, state, constraints);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

SavedState load_state(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_state(in);
}

void save_model(const std::filesystem::path& path, const KruskalModel& model) {
  model.validate();
  json j;
  j["dims"] = model.dims();
  j["rank"] = model.rank();
  json list = json::array();
  for (const auto& m : model.factors) list.push_back(matrix_json(m));
  j["factors"] = std::move(list);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

void write_history_csv(std::ostream& out, const FitResult& result) {
  const std::size_t N = result.state.order();
  out << "iteration";
  for (std::size_t m = 1; m <= N; ++m) out << ",primal_" << m;
  for (std::size_t m = 1; m <= N; ++m) out << ",dual_" << m;
  const bool with_rfe = !result.rfe_history.empty();
  if (with_rfe) out << ",rfe";
  out << '\n';
  for (std::size_t it = 0; it < result.residual_history.size(); ++it) {
    const Residuals& r = result.residual_history[it];
    out << it + 1;
    for (double v : r.primal) out << ',' << format_double(v);
    for (double v : r.dual) out << ',' << format_double(v);
    if (with_rfe) out << ',' << format_double(result.rfe_history[it]);
    out << '\n';
  }
}

}  // namespace cpadmm
