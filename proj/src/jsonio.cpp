#include "mcinv/jsonio.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mcinv/version.hpp"

namespace mcinv {

namespace {

using nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::invalid_argument(path + ": " + what);
}

const ordered_json& need(const ordered_json& j, const std::string& key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) fail(path, "missing required field \"" + key + "\"");
  return *it;
}

double as_number(const ordered_json& j, const std::string& field, const std::string& path) {
  if (!j.is_number()) fail(path, "field \"" + field + "\" must be a number");
  return j.get<double>();
}

int as_int(const ordered_json& j, const std::string& field, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "field \"" + field + "\" must be an integer");
  return j.get<int>();
}

Eigen::VectorXd as_vector(const ordered_json& j, const std::string& field,
                          const std::string& path) {
  if (!j.is_array()) fail(path, "field \"" + field + "\" must be an array");
  Eigen::VectorXd x(static_cast<int>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    x[static_cast<int>(i)] = as_number(j[i], field, path);
  return x;
}

Eigen::MatrixXd as_matrix_2d(const ordered_json& j, const std::string& field,
                             const std::string& path) {
  if (!j.is_array() || j.empty()) fail(path, "field \"" + field + "\" must be a nonempty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) fail(path, "field \"" + field + "\" rows must be nonempty arrays");
  Eigen::MatrixXd m(static_cast<int>(j.size()), static_cast<int>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols)
      fail(path, "field \"" + field + "\" row " + std::to_string(r) + " has the wrong length");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<int>(r), static_cast<int>(c)) = as_number(j[r][c], field, path);
  }
  return m;
}

ordered_json json_number(double x) {
  if (!std::isfinite(x)) return nullptr;
  return x;
}

ordered_json row_major(const Eigen::MatrixXd& m) {
  ordered_json arr = ordered_json::array();
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) arr.push_back(m(i, j));
  return arr;
}

ordered_json rows_of(const Eigen::MatrixXd& m) {
  ordered_json arr = ordered_json::array();
  for (int i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    arr.push_back(std::move(row));
  }
  return arr;
}

void append_escaped(std::string& out, const std::string& s) {
  // Reuse the library's escaping by dumping the string node alone.
  out += ordered_json(s).dump();
}

void dump_value(const ordered_json& j, std::string& out, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string closing_pad(static_cast<std::size_t>(indent * depth), ' ');
  switch (j.type()) {
    case nlohmann::detail::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad;
        append_escaped(out, it.key());
        out += ": ";
        dump_value(it.value(), out, indent, depth + 1);
      }
      out += "\n" + closing_pad + "}";
      return;
    }
    case nlohmann::detail::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[\n";
      bool first = true;
      for (const auto& item : j) {
        if (!first) out += ",\n";
        first = false;
        out += pad;
        dump_value(item, out, indent, depth + 1);
      }
      out += "\n" + closing_pad + "]";
      return;
    }
    case nlohmann::detail::value_t::string:
      append_escaped(out, j.get<std::string>());
      return;
    case nlohmann::detail::value_t::number_float:
      out += format_double(j.get<double>());
      return;
    default:
      out += j.dump();
      return;
  }
}

const char* status_label(InvariantStatus s) {
  switch (s) {
    case InvariantStatus::Converged:
      return "Converged";
    case InvariantStatus::IterationCapReached:
      return "IterationCapReached";
    default:
      return "EmptyConstraintSet";
  }
}

}  // namespace

std::string format_double(double x) {
  if (!std::isfinite(x)) return x > 0 ? "inf" : (x < 0 ? "-inf" : "nan");
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string dump_deterministic(const nlohmann::ordered_json& j, int indent) {
  std::string out;
  dump_value(j, out, indent, 0);
  out += "\n";
  return out;
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t hash = 1469598103934665603ULL;
  for (unsigned char c : text) {
    hash ^= static_cast<std::uint64_t>(c);
    hash *= 1099511628211ULL;
  }
  return hash;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument(path + ": cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::invalid_argument(path + ": cannot open file for writing");
  out << content;
  if (!out) throw std::invalid_argument(path + ": write failed");
}

nlohmann::ordered_json parse_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  ordered_json j = ordered_json::parse(text, nullptr, false);
  if (j.is_discarded()) fail(path, "not valid JSON");
  return j;
}

MarkovChain load_chain(const std::string& path, bool expect_row_stochastic) {
  const ordered_json j = parse_json_file(path);
  if (!j.is_object()) fail(path, "chain file must be a JSON object");
  const int n = as_int(need(j, "n", path), "n", path);
  if (n <= 0) fail(path, "\"n\" must be positive");
  const ordered_json& entries = need(j, "M", path);
  if (!entries.is_array() || static_cast<int>(entries.size()) != n * n)
    fail(path, "\"M\" must hold exactly n*n entries in row-major order");

  bool row_stochastic = expect_row_stochastic;
  if (j.contains("convention")) {
    const std::string conv = j["convention"].get<std::string>();
    if (conv == "row-stochastic")
      row_stochastic = true;
    else if (conv == "column-stochastic") {
      if (expect_row_stochastic)
        fail(path, "file declares column-stochastic data but a transpose was requested");
    } else
      fail(path, "unknown convention \"" + conv + "\"");
  }

  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k)
      m(i, k) = as_number(entries[static_cast<std::size_t>(i * n + k)], "M", path);
  if (row_stochastic) m.transposeInPlace();
  return MarkovChain::validate(m);
}

Polyhedron load_polyhedron(const std::string& path) {
  const ordered_json j = parse_json_file(path);
  if (!j.is_object()) fail(path, "polyhedron file must be a JSON object");
  Polyhedron p;
  p.G = as_matrix_2d(need(j, "G", path), "G", path);
  p.g = as_vector(need(j, "g", path), "g", path);
  p.on_simplex = j.value("on_simplex", true);
  if (p.g.size() != p.G.rows()) fail(path, "\"g\" length must match the rows of \"G\"");
  validate_polyhedron(p);
  return p;
}

Graph load_graph(const std::string& path) {
  const ordered_json j = parse_json_file(path);
  if (!j.is_object()) fail(path, "graph file must be a JSON object");
  const int n = as_int(need(j, "n", path), "n", path);
  const ordered_json& rows = need(j, "adjacency", path);
  const Eigen::MatrixXd a = as_matrix_2d(rows, "adjacency", path);
  if (a.rows() != n || a.cols() != n) fail(path, "\"adjacency\" must be n x n");
  Eigen::MatrixXi ai(n, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      const double val = a(i, k);
      if (val != 0.0 && val != 1.0) fail(path, "adjacency entries must be 0 or 1");
      ai(i, k) = static_cast<int>(val);
    }
  return Graph::from_adjacency(ai);
}

Eigen::VectorXd load_vector(const std::string& path) {
  const ordered_json j = parse_json_file(path);
  if (j.is_array()) return as_vector(j, "x", path);
  if (j.is_object() && j.contains("x")) return as_vector(j["x"], "x", path);
  fail(path, "vector file must be an array or an object with field \"x\"");
}

GridWorld load_grid_config(const std::string& path) {
  const ordered_json j = parse_json_file(path);
  if (!j.is_object()) fail(path, "grid config must be a JSON object");
  GridWorld g;
  g.width = as_int(need(j, "width", path), "width", path);
  g.height = as_int(need(j, "height", path), "height", path);
  auto cells = [&](const char* field, bool required) {
    std::vector<Cell> out;
    if (!j.contains(field)) {
      if (required) fail(path, std::string("missing required field \"") + field + "\"");
      return out;
    }
    const ordered_json& arr = j[field];
    if (!arr.is_array()) fail(path, std::string("field \"") + field + "\" must be an array");
    for (const auto& item : arr) {
      if (!item.is_array() || item.size() != 2)
        fail(path, std::string("entries of \"") + field + "\" must be [row, col] pairs");
      out.push_back({as_int(item[0], field, path), as_int(item[1], field, path)});
    }
    return out;
  };
  g.obstacles = cells("obstacles", false);
  g.terminals = cells("terminals", true);
  g.density_cap = j.contains("density_cap")
                      ? as_number(j["density_cap"], "density_cap", path)
                      : 0.3;
  g.terminal_mass = j.contains("terminal_mass")
                        ? as_number(j["terminal_mass"], "terminal_mass", path)
                        : 0.225;
  return g;
}

InvariantSetResult load_invariant_result(const std::string& path) {
  const ordered_json j = parse_json_file(path);
  if (!j.is_object()) fail(path, "invariant result must be a JSON object");
  InvariantSetResult r;
  const std::string status = need(j, "status", path).get<std::string>();
  if (status == "Converged")
    r.status = InvariantStatus::Converged;
  else if (status == "IterationCapReached")
    r.status = InvariantStatus::IterationCapReached;
  else if (status == "EmptyConstraintSet")
    r.status = InvariantStatus::EmptyConstraintSet;
  else
    fail(path, "unknown status \"" + status + "\"");
  r.t_star = as_int(need(j, "t_star", path), "t_star", path);
  r.empty_set = j.value("empty_set", false);
  const ordered_json& stacked = need(j, "stacked", path);
  r.stacked.G = as_matrix_2d(need(stacked, "G", path), "stacked.G", path);
  r.stacked.g = as_vector(need(stacked, "g", path), "stacked.g", path);
  r.stacked.on_simplex = stacked.value("on_simplex", true);
  if (j.contains("warnings"))
    for (const auto& w : j["warnings"]) r.warnings.push_back(w.get<std::string>());
  return r;
}

nlohmann::ordered_json artifact_header(const ArtifactInfo& info) {
  ordered_json j = ordered_json::object();
  j["tool"] = "mcinv";
  j["version"] = std::string(kVersion);
  j["command"] = info.command;
  j["config_hash"] = info.config_hash;
  ordered_json tols = ordered_json::object();
  for (const auto& [name, value] : info.tolerances) tols[name] = value;
  j["tolerances"] = std::move(tols);
  return j;
}

nlohmann::ordered_json chain_to_json(const MarkovChain& chain) {
  ordered_json j = ordered_json::object();
  j["n"] = chain.size();
  j["M"] = row_major(chain.matrix());
  j["convention"] = "column-stochastic";
  return j;
}

nlohmann::ordered_json polyhedron_to_json(const Polyhedron& p) {
  ordered_json j = ordered_json::object();
  j["G"] = rows_of(p.G);
  j["g"] = vector_to_json(p.g);
  j["on_simplex"] = p.on_simplex;
  return j;
}

nlohmann::ordered_json vector_to_json(const Eigen::VectorXd& x) {
  ordered_json arr = ordered_json::array();
  for (int i = 0; i < x.size(); ++i) arr.push_back(x[i]);
  return arr;
}

nlohmann::ordered_json certificate_to_json(const ContainmentCertificate& cert) {
  ordered_json j = ordered_json::object();
  j["rows"] = static_cast<int>(cert.Y.rows());
  j["cols"] = static_cast<int>(cert.Y.cols());
  j["Y"] = row_major(cert.Y);
  j["residual"] = cert.residual;
  j["vacuous"] = cert.vacuous;
  return j;
}

nlohmann::ordered_json invariant_result_to_json(const InvariantSetResult& result) {
  ordered_json j = ordered_json::object();
  j["status"] = status_label(result.status);
  j["t_star"] = result.t_star;
  j["empty_set"] = result.empty_set;
  j["stacked"] = polyhedron_to_json(result.stacked);
  j["certificate"] = certificate_to_json(result.certificate);
  ordered_json hist = ordered_json::array();
  for (const IterationRecord& rec : result.history) {
    ordered_json h = ordered_json::object();
    h["t"] = rec.t;
    h["rows"] = rec.stacked_rows;
    h["stopping_test"] = verdict_name(rec.stopping_test);
    hist.push_back(std::move(h));
  }
  j["history"] = std::move(hist);
  j["warnings"] = result.warnings;
  return j;
}

nlohmann::ordered_json synthesis_result_to_json(const SynthesisResult& result) {
  ordered_json j = ordered_json::object();
  j["lambda_star"] = result.lambda_star;
  j["rho_achieved"] = result.rho_achieved;
  j["baseline_rho"] = json_number(result.baseline_rho);
  j["objective_value"] = json_number(result.objective_value);
  j["objective_optimized"] = result.objective_optimized;
  j["ergodic_certified"] = result.ergodic_certified;
  ordered_json res = ordered_json::object();
  res["stochasticity"] = result.residuals.stochasticity;
  res["stationarity"] = result.residuals.stationarity;
  res["sparsity"] = result.residuals.sparsity;
  res["reversibility"] = result.residuals.reversibility;
  j["residuals"] = std::move(res);
  j["chain"] = chain_to_json(result.chain);
  ordered_json trace = ordered_json::array();
  for (const BisectionStep& step : result.trace) {
    ordered_json s = ordered_json::object();
    s["lambda"] = step.lambda;
    s["status"] = spectral_status_name(step.status);
    trace.push_back(std::move(s));
  }
  j["trace"] = std::move(trace);
  j["warnings"] = result.warnings;
  return j;
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Holds:
      return "Holds";
    case Verdict::Fails:
      return "Fails";
    default:
      return "Unknown";
  }
}

const char* invariant_status_name(InvariantStatus s) { return status_label(s); }

const char* invariance_verdict_name(InvarianceVerdict v) {
  switch (v) {
    case InvarianceVerdict::Invariant:
      return "Invariant";
    case InvarianceVerdict::NotInvariant:
      return "NotInvariant";
    case InvarianceVerdict::Empty:
      return "Empty";
    default:
      return "Unknown";
  }
}

const char* spectral_status_name(SpectralStatus s) {
  switch (s) {
    case SpectralStatus::Feasible:
      return "Feasible";
    case SpectralStatus::Infeasible:
      return "Infeasible";
    default:
      return "NumericalFailure";
  }
}

std::string history_csv(const InvariantSetResult& result) {
  std::string out = "t,stacked_rows,stopping_test\n";
  for (const IterationRecord& rec : result.history)
    out += std::to_string(rec.t) + "," + std::to_string(rec.stacked_rows) + "," +
           verdict_name(rec.stopping_test) + "\n";
  return out;
}

std::string histogram_csv(const EnsembleRun& run, const GridModel& model) {
  std::string out = "step,cell_row,cell_col,count\n";
  for (std::size_t k = 0; k < run.histograms.size(); ++k) {
    const Eigen::VectorXi& h = run.histograms[k];
    for (int i = 0; i < h.size(); ++i) {
      const Cell& c = model.free_cells[static_cast<std::size_t>(i)];
      out += std::to_string(k) + "," + std::to_string(c.row) + "," + std::to_string(c.col) + "," +
             std::to_string(h[i]) + "\n";
    }
  }
  return out;
}

std::string trajectory_csv(const ScenarioReport& report, const GridModel& model) {
  std::string out = "step,cell_row,cell_col,probability\n";
  for (std::size_t k = 0; k < report.trajectory.size(); ++k) {
    const Eigen::VectorXd& x = report.trajectory[k];
    for (int i = 0; i < x.size(); ++i) {
      const Cell& c = model.free_cells[static_cast<std::size_t>(i)];
      out += std::to_string(k) + "," + std::to_string(c.row) + "," + std::to_string(c.col) + "," +
             format_double(x[i]) + "\n";
    }
  }
  return out;
}

}  // namespace mcinv
