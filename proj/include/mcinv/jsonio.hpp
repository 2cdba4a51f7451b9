#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mcinv/gridworld.hpp"
#include "mcinv/invariant.hpp"
#include "mcinv/markov.hpp"
#include "mcinv/polytope.hpp"
#include "mcinv/synthesis.hpp"

namespace mcinv {

// 17 significant digits: enough to round-trip any double, and a fixed width
// so artifacts are byte-identical across runs.
std::string format_double(double x);

// Serializes with insertion-ordered keys, two-space indent, %.17g floats and
// null for non-finite values. The only JSON writer used for artifacts.
std::string dump_deterministic(const nlohmann::ordered_json& j, int indent = 2);

std::uint64_t fnv1a64(const std::string& text);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
nlohmann::ordered_json parse_json_file(const std::string& path);

// Readers. All throw invalid_argument naming the file and field on bad input.
// Chain files: {"n": int, "M": [n*n row-major], "convention":
// "column-stochastic" | "row-stochastic"}; row-stochastic input (declared or
// forced by expect_row_stochastic) is transposed on load.
MarkovChain load_chain(const std::string& path, bool expect_row_stochastic = false);
Polyhedron load_polyhedron(const std::string& path);
Graph load_graph(const std::string& path);
Eigen::VectorXd load_vector(const std::string& path);
GridWorld load_grid_config(const std::string& path);
InvariantSetResult load_invariant_result(const std::string& path);

// Artifact pieces. Every artifact embeds the tool version, the command, a
// hash of the effective configuration, and the tolerances used.
struct ArtifactInfo {
  std::string command;
  std::uint64_t config_hash = 0;
  std::vector<std::pair<std::string, double>> tolerances;
};

nlohmann::ordered_json artifact_header(const ArtifactInfo& info);
nlohmann::ordered_json chain_to_json(const MarkovChain& chain);
nlohmann::ordered_json polyhedron_to_json(const Polyhedron& p);
nlohmann::ordered_json vector_to_json(const Eigen::VectorXd& x);
nlohmann::ordered_json certificate_to_json(const ContainmentCertificate& cert);
nlohmann::ordered_json invariant_result_to_json(const InvariantSetResult& result);
nlohmann::ordered_json synthesis_result_to_json(const SynthesisResult& result);

const char* verdict_name(Verdict v);
const char* invariant_status_name(InvariantStatus s);
const char* invariance_verdict_name(InvarianceVerdict v);
const char* spectral_status_name(SpectralStatus s);

// CSV emitters (header row + data rows, '\n' line ends).
std::string history_csv(const InvariantSetResult& result);
std::string histogram_csv(const EnsembleRun& run, const GridModel& model);
std::string trajectory_csv(const ScenarioReport& report, const GridModel& model);

}  // namespace mcinv
