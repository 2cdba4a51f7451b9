#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "mcinv/gridworld.hpp"
#include "mcinv/invariant.hpp"
#include "mcinv/jsonio.hpp"
#include "mcinv/markov.hpp"
#include "mcinv/polytope.hpp"
#include "mcinv/synthesis.hpp"
#include "mcinv/version.hpp"

namespace {

using namespace mcinv;
using nlohmann::ordered_json;

struct Common {
  std::string out_dir;
  bool serial = false;

  Exec exec() const { return serial ? Exec::Serial : Exec::Parallel; }
};

void emit(const Common& common, const std::string& name, const std::string& content) {
  if (common.out_dir.empty()) {
    std::cout << content;
    return;
  }
  std::filesystem::create_directories(common.out_dir);
  write_text_file(common.out_dir + "/" + name, content);
}

std::uint64_t config_hash(const std::string& canonical, const std::vector<std::string>& inputs) {
  std::string all = canonical;
  for (const std::string& path : inputs) {
    all += "\n@";
    all += read_text_file(path);
  }
  return fnv1a64(all);
}

void merge_into(ordered_json& target, const ordered_json& extra) {
  for (auto it = extra.begin(); it != extra.end(); ++it) target[it.key()] = it.value();
}

int run_check_chain(const std::string& chain_path, bool transpose, const Common& common) {
  const MarkovChain chain = load_chain(chain_path, transpose);
  ArtifactInfo info;
  info.command = "check-chain";
  info.tolerances = {{"stochastic_tol", kStochasticTol}};
  info.config_hash = config_hash("check-chain;transpose=" + std::to_string(transpose), {chain_path});

  ordered_json j = artifact_header(info);
  j["n"] = chain.size();
  const bool ergodic = is_ergodic(chain);
  j["ergodic"] = ergodic;
  int code = 0;
  if (ergodic) {
    const StationaryInfo st = stationary(chain);
    j["v"] = vector_to_json(st.v);
    j["rho"] = st.rho;
    j["reversible"] = is_reversible(chain, st.v);
  } else {
    j["v"] = nullptr;
    j["rho"] = nullptr;
    j["reversible"] = nullptr;
    code = 1;
  }
  emit(common, "check-chain.json", dump_deterministic(j));
  std::cerr << "chain " << chain_path << ": n=" << chain.size()
            << (ergodic ? " ergodic" : " not ergodic") << "\n";
  return code;
}

int run_invariant_set(const std::string& chain_path, bool transpose, const std::string& safe_path,
                      int cap, double feas_tol, bool eliminate, const Common& common) {
  const MarkovChain chain = load_chain(chain_path, transpose);
  const Polyhedron safe = load_polyhedron(safe_path);
  InvariantOptions opt;
  opt.iteration_cap = cap;
  opt.feas_tol = feas_tol;
  opt.exec = common.exec();
  opt.eliminate_redundant = eliminate;
  const InvariantSetResult result = maximal_invariant_set(chain, safe, opt);

  ArtifactInfo info;
  info.command = "invariant-set";
  info.tolerances = {{"feas_tol", feas_tol}, {"membership_tol", kMembershipTol}};
  info.config_hash = config_hash("invariant-set;transpose=" + std::to_string(transpose) +
                                     ";cap=" + std::to_string(cap) +
                                     ";eliminate=" + std::to_string(eliminate),
                                 {chain_path, safe_path});
  ordered_json j = artifact_header(info);
  merge_into(j, invariant_result_to_json(result));
  emit(common, "invariant-set.json", dump_deterministic(j));
  if (!common.out_dir.empty()) emit(common, "history.csv", history_csv(result));
  std::cerr << "invariant set: " << invariant_status_name(result.status)
            << ", t_star=" << result.t_star << "\n";
  return result.status == InvariantStatus::Converged ? 0 : 1;
}

int run_membership(const std::string& result_path, const std::string& x0_path,
                   const Common& common) {
  const InvariantSetResult result = load_invariant_result(result_path);
  const Eigen::VectorXd x0 = load_vector(x0_path);
  const bool member = membership(result, x0);

  ArtifactInfo info;
  info.command = "membership";
  info.tolerances = {{"membership_tol", kMembershipTol}};
  info.config_hash = config_hash("membership", {result_path, x0_path});
  ordered_json j = artifact_header(info);
  j["member"] = member;
  j["t_star"] = result.t_star;
  emit(common, "membership.json", dump_deterministic(j));
  std::cerr << "membership: " << (member ? "member" : "not a member") << "\n";
  return member ? 0 : 1;
}

int run_certify(const std::string& chain_path, bool transpose, const std::string& safe_path,
                double feas_tol, const Common& common) {
  const MarkovChain chain = load_chain(chain_path, transpose);
  const Polyhedron safe = load_polyhedron(safe_path);
  const InvarianceResult result = certify_invariance(chain, safe, feas_tol, common.exec());

  ArtifactInfo info;
  info.command = "certify";
  info.tolerances = {{"feas_tol", feas_tol}};
  info.config_hash =
      config_hash("certify;transpose=" + std::to_string(transpose), {chain_path, safe_path});
  ordered_json j = artifact_header(info);
  j["verdict"] = invariance_verdict_name(result.verdict);
  j["certificate"] = certificate_to_json(result.certificate);
  emit(common, "certify.json", dump_deterministic(j));
  std::cerr << "certify: " << invariance_verdict_name(result.verdict) << "\n";
  if (result.verdict == InvarianceVerdict::Invariant) return 0;
  if (result.verdict == InvarianceVerdict::Unknown) return 3;
  return 1;
}

SynthesisMode parse_mode(const std::string& mode) {
  if (mode == "reversible") return SynthesisMode::ReversibleLMI;
  if (mode == "fixed-d") return SynthesisMode::FixedD_LMI;
  throw std::invalid_argument("unknown mode \"" + mode + "\" (expected reversible or fixed-d)");
}

SynthesisObjective parse_objective(const std::string& objective) {
  if (objective == "none") return SynthesisObjective::None;
  if (objective == "min-transition-frequency") return SynthesisObjective::MinTransitionFrequency;
  if (objective == "max-self-loop-mass") return SynthesisObjective::MaxSelfLoopMass;
  throw std::invalid_argument("unknown objective \"" + objective + "\"");
}

int run_synthesize(const std::string& graph_path, const std::string& v_spec,
                   const std::string& mode, const std::string& objective, double lambda_tol,
                   double feas_tol, bool fallback_fixed_d, const Common& common) {
  SynthesisProblem pb;
  pb.graph = load_graph(graph_path);
  pb.v = v_spec == "uniform" ? Eigen::VectorXd::Constant(pb.graph.size(),
                                                         1.0 / static_cast<double>(pb.graph.size()))
                             : load_vector(v_spec);
  pb.mode = parse_mode(mode);
  pb.objective = parse_objective(objective);
  pb.lambda_tol = lambda_tol;
  pb.feas_tol = feas_tol;

  std::vector<std::string> inputs = {graph_path};
  if (v_spec != "uniform") inputs.push_back(v_spec);
  ArtifactInfo info;
  info.command = "synthesize";
  info.tolerances = {{"lambda_tol", lambda_tol}, {"feas_tol", feas_tol}};
  info.config_hash = config_hash(
      "synthesize;v=" + v_spec + ";mode=" + mode + ";objective=" + objective, inputs);
  ordered_json j = artifact_header(info);

  SynthesisResult result;
  try {
    result = synthesize(pb);
  } catch (const InfeasibleAtLambdaOneError& e) {
    if (!fallback_fixed_d || pb.mode != SynthesisMode::ReversibleLMI) {
      j["infeasible_at_lambda_one"] = true;
      j["message"] = e.what();
      emit(common, "synthesize.json", dump_deterministic(j));
      std::cerr << "synthesize: " << e.what() << "\n";
      return 1;
    }
    std::cerr << "synthesize: reversible mode infeasible, retrying with the fixed-D relaxation\n";
    pb.mode = SynthesisMode::FixedD_LMI;
    result = synthesize(pb);
    j["fallback_fixed_d_used"] = true;
  }
  merge_into(j, synthesis_result_to_json(result));
  emit(common, "synthesize.json", dump_deterministic(j));
  std::cerr << "synthesize: lambda_star=" << format_double(result.lambda_star)
            << " rho=" << format_double(result.rho_achieved) << "\n";
  return 0;
}

int run_gridworld(const std::string& config_path, double lambda_tol, double feas_tol, int cap,
                  std::uint64_t seed, int agents, int horizon, const std::string& x0_spec,
                  const Common& common) {
  const GridWorld grid = config_path.empty() ? GridWorld::canonical() : load_grid_config(config_path);
  const GridModel model = build_grid(grid);
  require_strict_interior(model.safe.G, model.safe.g, model.v);

  SynthesisProblem sp;
  sp.graph = model.graph;
  sp.v = model.v;
  sp.mode = SynthesisMode::ReversibleLMI;
  sp.lambda_tol = lambda_tol;
  sp.feas_tol = feas_tol;
  const SynthesisResult syn = synthesize(sp);

  InvariantOptions opt;
  opt.iteration_cap = cap;
  opt.exec = common.exec();
  opt.eliminate_redundant = true;  // the stack stays near the active rows
  const InvariantSetResult inv = maximal_invariant_set(syn.chain, model.safe, opt);

  Eigen::VectorXd x0;
  if (x0_spec == "v")
    x0 = model.v;
  else if (x0_spec == "uniform")
    x0 = Eigen::VectorXd::Constant(model.v.size(), 1.0 / static_cast<double>(model.v.size()));
  else
    x0 = load_vector(x0_spec);

  std::vector<std::string> inputs;
  if (!config_path.empty()) inputs.push_back(config_path);
  if (x0_spec != "v" && x0_spec != "uniform") inputs.push_back(x0_spec);
  ArtifactInfo info;
  info.command = "gridworld";
  info.tolerances = {{"lambda_tol", lambda_tol}, {"feas_tol", feas_tol}};
  info.config_hash =
      config_hash("gridworld;x0=" + x0_spec + ";seed=" + std::to_string(seed) +
                      ";agents=" + std::to_string(agents) + ";horizon=" + std::to_string(horizon),
                  inputs);

  {
    ordered_json j = artifact_header(info);
    j["width"] = grid.width;
    j["height"] = grid.height;
    ordered_json obstacles = ordered_json::array();
    for (const Cell& c : grid.obstacles) obstacles.push_back({c.row, c.col});
    j["obstacles"] = std::move(obstacles);
    ordered_json terminals = ordered_json::array();
    for (const Cell& c : grid.terminals) terminals.push_back({c.row, c.col});
    j["terminals"] = std::move(terminals);
    j["density_cap"] = grid.density_cap;
    j["terminal_mass"] = grid.terminal_mass;
    j["free_cells"] = static_cast<int>(model.free_cells.size());
    j["v"] = vector_to_json(model.v);
    emit(common, "grid.json", dump_deterministic(j));
  }
  {
    ordered_json j = artifact_header(info);
    merge_into(j, synthesis_result_to_json(syn));
    emit(common, "synthesize.json", dump_deterministic(j));
  }
  {
    ordered_json j = artifact_header(info);
    merge_into(j, invariant_result_to_json(inv));
    emit(common, "invariant-set.json", dump_deterministic(j));
    if (!common.out_dir.empty()) emit(common, "history.csv", history_csv(inv));
  }

  int code = inv.status == InvariantStatus::Converged ? 0 : 1;
  if (inv.status == InvariantStatus::Converged) {
    const ScenarioReport report = scenario_report(model, syn.chain, inv, x0);
    ordered_json j = artifact_header(info);
    j["member"] = report.member;
    j["t_star"] = inv.t_star;
    j["lambda_star"] = syn.lambda_star;
    ordered_json dens = ordered_json::array();
    for (double d : report.max_density) dens.push_back(d);
    j["max_density"] = std::move(dens);
    ordered_json checks = ordered_json::array();
    for (const LongHorizonCheck& c : report.checks) {
      ordered_json cj = ordered_json::object();
      cj["k"] = c.k;
      cj["max_density"] = c.max_density;
      cj["within_cap"] = c.within_cap;
      checks.push_back(std::move(cj));
    }
    j["checks"] = std::move(checks);
    j["horizon_max_density"] = report.horizon_max_density;
    j["all_steps_within_cap"] = report.all_steps_within_cap;
    emit(common, "report.json", dump_deterministic(j));
    if (!common.out_dir.empty()) emit(common, "trajectory.csv", trajectory_csv(report, model));
    if (!report.member || !report.all_steps_within_cap) code = 1;

    if (agents > 0) {
      const EnsembleRun run = simulate_ensemble(syn.chain, x0, agents, horizon, seed, common.exec());
      if (!common.out_dir.empty()) emit(common, "histogram.csv", histogram_csv(run, model));
    }
    std::cerr << "gridworld: lambda_star=" << format_double(syn.lambda_star)
              << " t_star=" << inv.t_star << (report.member ? " member" : " not member") << "\n";
  } else {
    std::cerr << "gridworld: invariant set " << invariant_status_name(inv.status) << "\n";
  }
  return code;
}

int run_simulate(const std::string& chain_path, bool transpose, const std::string& x0_path,
                 int agents, int horizon, std::uint64_t seed, const Common& common) {
  const MarkovChain chain = load_chain(chain_path, transpose);
  const Eigen::VectorXd x0 = load_vector(x0_path);
  const EnsembleRun run = simulate_ensemble(chain, x0, agents, horizon, seed, common.exec());

  ArtifactInfo info;
  info.command = "simulate";
  info.tolerances = {};
  info.config_hash = config_hash("simulate;transpose=" + std::to_string(transpose) +
                                     ";agents=" + std::to_string(agents) +
                                     ";horizon=" + std::to_string(horizon) +
                                     ";seed=" + std::to_string(seed),
                                 {chain_path, x0_path});
  ordered_json j = artifact_header(info);
  j["agents"] = run.agent_count;
  j["horizon"] = run.horizon;
  j["seed"] = run.seed;
  j["rng"] = "mt19937_64 per 4096-agent shard; shard seed = splitmix64(seed + golden * (shard+1))";

  std::string csv = "step,state,count\n";
  for (std::size_t k = 0; k < run.histograms.size(); ++k)
    for (int i = 0; i < run.histograms[k].size(); ++i)
      csv += std::to_string(k) + "," + std::to_string(i) + "," +
             std::to_string(run.histograms[k][i]) + "\n";
  emit(common, "simulate.json", dump_deterministic(j));
  if (!common.out_dir.empty())
    emit(common, "ensemble.csv", csv);
  else
    std::cout << csv;
  std::cerr << "simulate: " << agents << " agents over " << horizon << " steps\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"maximal invariant sets and mixing-optimized synthesis for finite Markov chains"};
  app.require_subcommand(1);
  app.fallthrough(true);

  Common common;
  app.add_option("--out", common.out_dir, "directory for artifacts (default: JSON to stdout)");
  app.add_flag("--serial", common.serial, "run data-parallel kernels on the serial path");

  std::string chain_path, safe_path, result_path, x0_path, graph_path, config_path;
  std::string v_spec = "uniform";
  std::string mode = "reversible";
  std::string objective = "none";
  std::string x0_spec = "v";
  bool transpose = false;
  bool eliminate = false;
  bool fallback_fixed_d = false;
  int cap = -1;
  int agents = 0;
  int horizon = 100;
  double feas_tol = kLpFeasTol;
  double lambda_tol = 1e-4;
  double spectral_tol = kSpectralFeasTol;
  std::uint64_t seed = 12345;

  CLI::App* check = app.add_subcommand("check-chain", "validate a chain and report its stationary analysis");
  check->add_option("--chain", chain_path, "chain JSON")->required();
  check->add_flag("--transpose", transpose, "input is row-stochastic");

  CLI::App* invset = app.add_subcommand("invariant-set", "compute the maximal invariant subset of a safe polytope");
  invset->add_option("--chain", chain_path, "chain JSON")->required();
  invset->add_option("--safe", safe_path, "safe polytope JSON")->required();
  invset->add_flag("--transpose", transpose, "input is row-stochastic");
  invset->add_option("--cap", cap, "iteration cap (-1: automatic)");
  invset->add_option("--feas-tol", feas_tol, "LP feasibility tolerance");
  invset->add_flag("--eliminate-redundant", eliminate, "drop redundant rows while stacking");

  CLI::App* member = app.add_subcommand("membership", "test a distribution against a computed invariant set");
  member->add_option("--result", result_path, "invariant-set artifact JSON")->required();
  member->add_option("--x0", x0_path, "distribution JSON")->required();

  CLI::App* certify = app.add_subcommand("certify", "one-shot invariance certificate for a polytope");
  certify->add_option("--chain", chain_path, "chain JSON")->required();
  certify->add_option("--safe", safe_path, "polytope JSON")->required();
  certify->add_flag("--transpose", transpose, "input is row-stochastic");
  certify->add_option("--feas-tol", feas_tol, "LP feasibility tolerance");

  CLI::App* synth = app.add_subcommand("synthesize", "synthesize a mixing-optimized chain on a graph");
  synth->add_option("--graph", graph_path, "graph JSON")->required();
  synth->add_option("--v", v_spec, "target distribution JSON, or \"uniform\"");
  synth->add_option("--mode", mode, "reversible | fixed-d");
  synth->add_option("--objective", objective, "none | min-transition-frequency | max-self-loop-mass");
  synth->add_option("--lambda-tol", lambda_tol, "bisection tolerance");
  synth->add_option("--feas-tol", spectral_tol, "spectral feasibility tolerance");
  synth->add_flag("--fallback-fixed-d", fallback_fixed_d,
                  "retry with the fixed-D relaxation if reversible mode is infeasible");

  CLI::App* gridworld = app.add_subcommand("gridworld", "run the grid scenario end to end");
  gridworld->add_option("--config", config_path, "grid config JSON (default: canonical 7x7)");
  gridworld->add_option("--lambda-tol", lambda_tol, "bisection tolerance");
  gridworld->add_option("--feas-tol", spectral_tol, "spectral feasibility tolerance");
  gridworld->add_option("--cap", cap, "invariant-set iteration cap (-1: automatic)");
  gridworld->add_option("--seed", seed, "ensemble seed");
  gridworld->add_option("--agents", agents, "ensemble agent count (0: skip the ensemble)");
  gridworld->add_option("--horizon", horizon, "ensemble horizon");
  gridworld->add_option("--x0", x0_spec, "initial distribution: \"v\", \"uniform\", or a JSON path");

  CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo ensemble simulation of a chain");
  simulate->add_option("--chain", chain_path, "chain JSON")->required();
  simulate->add_option("--x0", x0_path, "initial distribution JSON")->required();
  simulate->add_flag("--transpose", transpose, "input is row-stochastic");
  simulate->add_option("--agents", agents, "agent count")->required();
  simulate->add_option("--horizon", horizon, "number of steps");
  simulate->add_option("--seed", seed, "RNG seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(check)) return run_check_chain(chain_path, transpose, common);
    if (app.got_subcommand(invset))
      return run_invariant_set(chain_path, transpose, safe_path, cap, feas_tol, eliminate, common);
    if (app.got_subcommand(member)) return run_membership(result_path, x0_path, common);
    if (app.got_subcommand(certify))
      return run_certify(chain_path, transpose, safe_path, feas_tol, common);
    if (app.got_subcommand(synth))
      return run_synthesize(graph_path, v_spec, mode, objective, lambda_tol, spectral_tol,
                            fallback_fixed_d, common);
    if (app.got_subcommand(gridworld))
      return run_gridworld(config_path, lambda_tol, spectral_tol, cap, seed, agents, horizon,
                           x0_spec, common);
    if (app.got_subcommand(simulate))
      return run_simulate(chain_path, transpose, x0_path, agents, horizon, seed, common);
    std::cerr << "error: no subcommand selected\n";
    return 2;
  } catch (const NumericalFailureError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
