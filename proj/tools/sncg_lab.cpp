// sncg-lab: equilibrium solving, training, evaluation and agent-count sweeps.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 invalid input, 3 solver did not converge.

#include <omp.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sncg/env/env.hpp"
#include "sncg/env/routing_env.hpp"
#include "sncg/errors.hpp"
#include "sncg/lvmq/trainer.hpp"
#include "sncg/ncg/routing_game.hpp"

namespace fs = std::filesystem;
using namespace sncg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitNoConvergence = 3;

constexpr const char* kFlowPolicyFormat = "sncg-flow-policy";

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

void write_json(const fs::path& p, const Json& j) { write_text(p, j.dump(2) + "\n"); }

/// Written before any computation; artifact hashes are filled in at the end.
class Manifest {
 public:
  Manifest(fs::path out, std::string command) : out_(std::move(out)) {
    j_["command"] = std::move(command);
    j_["inputs"] = Json::object();
    j_["artifacts"] = Json::object();
  }
  void set(const std::string& key, Json v) { j_[key] = std::move(v); }
  void input(const std::string& role, const fs::path& p) {
    j_["inputs"][role] = {{"path", p.string()}, {"fnv1a", hex64(fnv1a(slurp(p)))}};
  }
  void artifact(const fs::path& p) { j_["artifacts"][p.filename().string()] = hex64(fnv1a(slurp(p))); }
  void write() const { write_json(out_ / "manifest.json", j_); }

 private:
  fs::path out_;
  Json j_;
};

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) throw ValidationError("--seeds: not an unsigned integer: '" + tok + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError("--seeds: empty list");
  return out;
}

std::vector<std::size_t> parse_counts(const std::string& s) {
  std::vector<std::size_t> out;
  for (auto v : parse_seeds(s)) {
    if (v == 0) throw ValidationError("--counts: agent counts must be positive");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

// Accepts a bare network file or a routing environment spec pointing at one.
ncg::RoutingGame load_game_any(const fs::path& p) {
  const Json j = read_json_file(p);
  if (j.contains("resources")) return ncg::routing_game_from_json(j);
  if (j.contains("network")) {
    const auto ref = field_as<std::string>(j, "network", "env");
    return ncg::load_routing_game(p.parent_path() / ref);
  }
  throw ValidationError(p.string() + ": neither a network nor a routing environment");
}

struct Inputs {
  fs::path env;
  std::optional<fs::path> config_path;
  lvmq::TrainConfig config;
  std::optional<std::size_t> agents;
};

Inputs resolve_inputs(const std::string& env_flag, const std::string& config_flag, const std::string& seeds_flag,
                      const std::string& algo_flag, std::size_t agents_flag) {
  Inputs in;
  Json cj = Json::object();
  if (!config_flag.empty()) {
    in.config_path = fs::path(config_flag);
    cj = read_json_file(*in.config_path);
  }
  if (!env_flag.empty()) {
    in.env = env_flag;
  } else if (cj.contains("env")) {
    in.env = in.config_path->parent_path() / field_as<std::string>(cj, "env", "config");
  } else {
    throw ValidationError("no environment: pass --env or set \"env\" in the config");
  }
  if (cj.contains("agents")) in.agents = field_as<std::size_t>(cj, "agents", "config");
  if (agents_flag > 0) in.agents = agents_flag;
  in.config = lvmq::train_config_from_json(cj);
  if (!algo_flag.empty()) in.config.algo = lvmq::parse_algo(algo_flag);
  if (!seeds_flag.empty()) in.config.seeds = parse_seeds(seeds_flag);
  return in;
}

void record_inputs(Manifest& m, const Inputs& in) {
  m.input("env", in.env);
  if (in.config_path) m.input("config", *in.config_path);
  m.set("config", lvmq::to_json(in.config));
  m.set("seeds", in.config.seeds);
  m.set("agents", in.agents ? Json(*in.agents) : Json(nullptr));
}

std::string fmt(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string flow_table(const ncg::RoutingGame& game, const std::vector<std::vector<double>>& fr,
                       const std::vector<std::vector<double>>& costs) {
  std::ostringstream o;
  o << "policy: (";
  for (std::size_t p = 0; p < fr.size(); ++p) {
    o << (p ? ", (" : "(");
    for (std::size_t k = 0; k < fr[p].size(); ++k) o << (k ? ", " : "") << fmt(fr[p][k], 3);
    o << ")";
  }
  o << ")\n\n";
  std::size_t w = 10;
  for (const auto& pop : game.populations)
    for (const auto& path : pop.paths) w = std::max(w, path.name.size() + 2);
  o << std::left;
  o.width(12);
  o << "population";
  o.width(static_cast<std::streamsize>(w));
  o << "path" << "fraction  cost\n";
  for (std::size_t p = 0; p < game.populations.size(); ++p)
    for (std::size_t k = 0; k < game.populations[p].paths.size(); ++k) {
      o.width(12);
      o << game.populations[p].name;
      o.width(static_cast<std::streamsize>(w));
      o << game.populations[p].paths[k].name << fmt(fr[p][k], 4) << "    " << fmt(costs[p][k], 4) << "\n";
    }
  return o.str();
}

Json path_cost_json(const ncg::RoutingGame& game, const std::vector<std::vector<double>>& costs) {
  Json j = Json::array();
  for (std::size_t p = 0; p < game.populations.size(); ++p) {
    Json row = Json::object();
    for (std::size_t k = 0; k < game.populations[p].paths.size(); ++k)
      row[game.populations[p].paths[k].name] = costs[p][k];
    j.push_back({{"population", game.populations[p].name}, {"costs", row}});
  }
  return j;
}

int cmd_solve_eq(const std::string& env_flag, double tol, std::size_t max_iters, const fs::path& out) {
  fs::create_directories(out);
  Manifest m(out, "solve-eq");
  m.input("network", env_flag);
  m.set("tol", tol);
  m.set("max_iters", max_iters);
  m.write();

  const auto game = load_game_any(env_flag);
  ncg::FrankWolfeOptions opt;
  opt.tol = tol;
  opt.max_iters = max_iters;
  opt.record_history = false;
  const auto res = ncg::solve_frank_wolfe(game, opt);
  const auto fr = res.flow.fractions(game);
  const auto costs = ncg::path_costs(game, res.flow);
  const double eps = ncg::epsilon_of_flow(game, res.flow);
  const auto cert = ncg::certify_wardrop(game, res.flow, 1e-3);

  Json report{{"converged", res.converged},
              {"iterations", res.iterations},
              {"gap", res.gap},
              {"potential", ncg::potential(game, res.flow)},
              {"epsilon", eps},
              {"max_spread", cert.max_spread},
              {"violations", cert.violations.size()},
              {"fractions", fr},
              {"path_flow", res.flow.path_flow},
              {"path_costs", path_cost_json(game, costs)}};
  if (!res.converged) report["partial"] = true;
  write_json(out / "equilibrium.json", report);

  std::string table = flow_table(game, fr, costs);
  table += "\nepsilon " + fmt(eps, 6) + "  gap " + fmt(res.gap, 9) + "  iterations " +
           std::to_string(res.iterations) + (res.converged ? "" : "  NOT CONVERGED") + "\n";
  write_text(out / "table.txt", table);

  Json policy{{"format", kFlowPolicyFormat}, {"network", ncg::routing_game_to_json(game)}, {"fractions", fr}};
  write_json(out / "flow_policy.json", policy);

  for (const char* f : {"equilibrium.json", "table.txt", "flow_policy.json"}) m.artifact(out / f);
  m.write();
  std::cout << table;
  if (!res.converged) {
    std::cerr << "solve-eq: no convergence after " << res.iterations << " iterations (gap " << res.gap << ")\n";
    return kExitNoConvergence;
  }
  return kExitOk;
}

struct SeedRun {
  lvmq::TrainResult result;
  std::exception_ptr error;
};

// One isolated environment per seed; seeds fan out across threads.
std::vector<SeedRun> run_seeds(const fs::path& env_path, std::optional<std::size_t> agents,
                               const lvmq::TrainConfig& cfg) {
  std::vector<SeedRun> runs(cfg.seeds.size());
  {
    auto probe = env::build_env(env_path, agents);
    lvmq::make_policy(*probe, cfg, 0);  // layout errors surface before any training
  }
  const long n = static_cast<long>(runs.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long k = 0; k < n; ++k) {
    try {
      auto env = env::build_env(env_path, agents);
      runs[static_cast<std::size_t>(k)].result = lvmq::run_training(*env, cfg, cfg.seeds[static_cast<std::size_t>(k)]);
    } catch (...) {
      runs[static_cast<std::size_t>(k)].error = std::current_exception();
    }
  }
  for (const auto& r : runs)
    if (r.error) std::rethrow_exception(r.error);
  return runs;
}

double cost_variance_mean(const lvmq::EvalReport& e) {
  if (!e.audit || e.audit->cost_variance.empty()) return 0.0;
  double s = 0.0;
  for (double v : e.audit->cost_variance) s += v;
  return s / static_cast<double>(e.audit->cost_variance.size());
}

Json summarize(const std::vector<SeedRun>& runs) {
  std::vector<double> eps, nu, ret, cvar;
  for (const auto& r : runs) {
    const auto& f = r.result.record.final;
    if (f.audit) eps.push_back(f.audit->epsilon_gap);
    nu.push_back(f.variance.mean);
    ret.push_back(f.mean_return);
    cvar.push_back(cost_variance_mean(f));
  }
  Json j{{"runs", runs.size()},
         {"median_mean_return", lvmq::median(ret)},
         {"median_nu", lvmq::median(nu)},
         {"median_cost_variance", lvmq::median(cvar)}};
  if (!eps.empty()) j["median_epsilon"] = lvmq::median(eps);
  return j;
}

int cmd_train(const Inputs& in, const fs::path& out) {
  fs::create_directories(out);
  Manifest m(out, "train");
  record_inputs(m, in);
  m.write();

  const auto runs = run_seeds(in.env, in.agents, in.config);
  const std::string algo = lvmq::algo_name(in.config.algo);
  std::vector<fs::path> files;
  for (const auto& r : runs) {
    const std::string stem = algo + "_seed" + std::to_string(r.result.record.seed);
    write_text(out / (stem + ".csv"), lvmq::windows_csv(r.result.record));
    write_json(out / (stem + ".json"), lvmq::to_json(r.result.record));
    lvmq::save_policy(out / (stem + "_policy.json"), r.result.policy);
    for (const char* ext : {".csv", ".json", "_policy.json"}) files.push_back(out / (stem + ext));
  }
  Json summary = summarize(runs);
  summary["algo"] = algo;
  write_json(out / "summary.json", summary);
  files.push_back(out / "summary.json");
  for (const auto& f : files) m.artifact(f);
  m.write();
  std::cout << summary.dump(2) << "\n";
  return kExitOk;
}

int eval_flow_policy(const Json& pj, const fs::path& env_path, Manifest& m, const fs::path& out) {
  const auto game = ncg::routing_game_from_json(require_field(pj, "network", "policy"));
  const auto fractions = field_as<std::vector<std::vector<double>>>(pj, "fractions", "policy");
  if (!env_path.empty()) {
    const auto target = load_game_any(env_path);
    if (ncg::routing_game_to_json(target) != ncg::routing_game_to_json(game))
      throw ValidationError("policy was solved on a different network than " + env_path.string());
  }
  if (fractions.size() != game.populations.size())
    throw ValidationError("policy.fractions: one row per population expected");
  for (std::size_t p = 0; p < fractions.size(); ++p)
    if (fractions[p].size() != game.populations[p].paths.size())
      throw ValidationError("policy.fractions: row " + std::to_string(p) + " has the wrong length");
  const auto flow = ncg::FlowProfile::from_fractions(game, fractions);
  ncg::check_flow(game, flow, true);
  const auto audit = env::audit_flow(game, flow);
  const auto costs = ncg::path_costs(game, flow);
  Json report{{"policy", kFlowPolicyFormat},
              {"epsilon_gap", audit.epsilon_gap},
              {"mean_gap", audit.mean_gap},
              {"population_value", audit.population_value},
              {"best_response", audit.best_response},
              {"fractions", fractions},
              {"path_costs", path_cost_json(game, costs)}};
  write_json(out / "eval.json", report);
  m.artifact(out / "eval.json");
  m.write();
  std::cout << report.dump(2) << "\n";
  return kExitOk;
}

int cmd_eval(const fs::path& policy_path, const std::string& env_flag, const std::string& seeds_flag,
             std::size_t agents_flag, const fs::path& out) {
  fs::create_directories(out);
  Manifest m(out, "eval");
  m.input("policy", policy_path);
  if (!env_flag.empty()) m.input("env", env_flag);
  const auto seeds = seeds_flag.empty() ? lvmq::kDefaultSeeds : parse_seeds(seeds_flag);
  m.set("seeds", seeds);
  m.write();

  const Json pj = read_json_file(policy_path);
  if (pj.is_object() && pj.value("format", "") == kFlowPolicyFormat) return eval_flow_policy(pj, env_flag, m, out);
  if (env_flag.empty()) throw ValidationError("eval: --env is required for a trained policy");

  const auto policy = lvmq::policy_from_json(pj);
  std::optional<std::size_t> agents;
  if (agents_flag > 0) agents = agents_flag;
  auto env = env::build_env(env_flag, agents ? agents : std::optional<std::size_t>(policy.agent_count()));
  Json runs = Json::array();
  std::vector<double> eps, nu, ret;
  for (auto s : seeds) {
    const auto e = lvmq::evaluate_policy(*env, policy, s);
    Json r = lvmq::to_json(e);
    r["seed"] = s;
    runs.push_back(r);
    if (e.audit) eps.push_back(e.audit->epsilon_gap);
    nu.push_back(e.variance.mean);
    ret.push_back(e.mean_return);
  }
  Json report{{"runs", runs}, {"median_nu", lvmq::median(nu)}, {"median_mean_return", lvmq::median(ret)}};
  if (!eps.empty()) report["median_epsilon"] = lvmq::median(eps);
  write_json(out / "eval.json", report);
  m.artifact(out / "eval.json");
  m.write();
  Json brief = report;
  brief.erase("runs");
  std::cout << brief.dump(2) << "\n";
  return kExitOk;
}

int cmd_sweep(const Inputs& in, const std::vector<std::size_t>& counts, const fs::path& out) {
  fs::create_directories(out);
  Manifest m(out, "sweep");
  record_inputs(m, in);
  m.set("counts", counts);
  m.write();

  std::ostringstream csv;
  csv << "agents,runs,median_epsilon,median_nu,median_cost_variance,median_mean_return\n";
  Json rows = Json::array();
  for (std::size_t c : counts) {
    const auto runs = run_seeds(in.env, c, in.config);
    Json s = summarize(runs);
    s["agents"] = c;
    rows.push_back(s);
    csv << c << "," << runs.size() << ","
        << (s.contains("median_epsilon") ? fmt(s["median_epsilon"].get<double>(), 6) : std::string("")) << ","
        << fmt(s["median_nu"].get<double>(), 8) << "," << fmt(s["median_cost_variance"].get<double>(), 8) << ","
        << fmt(s["median_mean_return"].get<double>(), 6) << "\n";
  }
  write_text(out / "sweep.csv", csv.str());
  write_json(out / "sweep.json", Json{{"algo", lvmq::algo_name(in.config.algo)}, {"rows", rows}});
  m.artifact(out / "sweep.csv");
  m.artifact(out / "sweep.json");
  m.write();
  std::cout << csv.str();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sncg-lab: congestion-game equilibria and mean-field multi-agent learning"};
  app.require_subcommand(1);

  std::string env_flag, config_flag, seeds_flag, algo_flag, out_flag = "out", policy_flag, counts_flag = "20,100,200,1000";
  double tol = 1e-6;
  std::size_t max_iters = 200000, agents = 0;

  auto* solve = app.add_subcommand("solve-eq", "Solve a routing game by Frank-Wolfe and audit the flow");
  solve->add_option("--env", env_flag, "network file or routing environment spec")->required();
  solve->add_option("--tol", tol, "duality-gap tolerance")->check(CLI::PositiveNumber);
  solve->add_option("--max-iters", max_iters, "iteration cap");
  solve->add_option("--out", out_flag, "output directory");

  auto add_train_flags = [&](CLI::App* sub) {
    sub->add_option("--env", env_flag, "environment spec (default: config's env)");
    sub->add_option("--config", config_flag, "training config JSON");
    sub->add_option("--seeds", seeds_flag, "comma-separated seeds");
    sub->add_option("--algo", algo_flag, "lvmq or il")->check(CLI::IsMember({"lvmq", "il"}));
    sub->add_option("--out", out_flag, "output directory");
  };
  auto* train = app.add_subcommand("train", "Train LVMQ or independent learners");
  add_train_flags(train);
  train->add_option("--agents", agents, "number of simulated agents");

  auto* eval = app.add_subcommand("eval", "Audit a trained policy or a solved flow policy");
  eval->add_option("--policy", policy_flag, "policy checkpoint or flow policy")->required();
  eval->add_option("--env", env_flag, "environment spec");
  eval->add_option("--seeds", seeds_flag, "comma-separated evaluation seeds");
  eval->add_option("--agents", agents, "override the agent count");
  eval->add_option("--out", out_flag, "output directory");

  auto* sweep = app.add_subcommand("sweep", "Train across agent counts and tabulate seed medians");
  add_train_flags(sweep);
  sweep->add_option("--counts", counts_flag, "comma-separated agent counts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*solve) return cmd_solve_eq(env_flag, tol, max_iters, out_flag);
    if (*train) return cmd_train(resolve_inputs(env_flag, config_flag, seeds_flag, algo_flag, agents), out_flag);
    if (*eval) return cmd_eval(policy_flag, env_flag, seeds_flag, agents, out_flag);
    if (*sweep)
      return cmd_sweep(resolve_inputs(env_flag, config_flag, seeds_flag, algo_flag, 0), parse_counts(counts_flag),
                       out_flag);
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
