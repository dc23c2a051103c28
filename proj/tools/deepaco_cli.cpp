// deepaco: dataset generation, training, solving and the benchmark drivers.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "deepaco/bench.hpp"
#include "deepaco/error.hpp"
#include "deepaco/instance.hpp"
#include "deepaco/io.hpp"
#include "deepaco/trainer.hpp"

namespace fs = std::filesystem;
using namespace deepaco;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kIo = 3, kNumeric = 4 };

// Everything a command may consume. The JSON config sets defaults; explicit flags win.
struct RunSpec {
  std::string command;
  cop::Kind kind = cop::Kind::TSP;
  int scale = 20;
  cop::PheromoneModel pheromone = cop::PheromoneModel::Successor;
  std::vector<bench::Method> methods = {bench::Method::AcoExpert};
  std::map<bench::Method, fs::path> checkpoints;
  std::vector<std::uint64_t> seeds = {0};
  int instances = 100;
  std::uint64_t instance_seed = 0;
  int mkp_constraints = 5;
  fs::path dataset;
  int index = 0;
  aco::AcoConfig aco;
  json train = json::object();
  std::vector<double> alphas = {0.5, 1.0, 2.0, 3.0};
  std::vector<double> decays = {0.8, 0.9, 0.95, 0.99};
  fs::path out;
};

struct Flags {
  std::string problem, pheromone, variant, local_search, checkpoint, dataset, out, config;
  std::vector<std::string> methods;
  std::vector<std::uint64_t> seeds;
  int scale = 0, instances = 0, ants = 0, index = -1;
  long budget = 0;
};

void apply_json(RunSpec& s, const json& j) {
  static const std::set<std::string> known = {
      "problem", "scale", "pheromone", "method", "methods", "checkpoint", "checkpoints", "seeds",
      "instances", "instance_seed", "mkp_constraints", "dataset", "index", "budget", "n_ants",
      "variant", "local_search", "alpha", "beta", "evaporation", "deposit_scale", "nls_iterations",
      "perturbation_moves", "train", "alphas", "decays", "out"};
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw std::invalid_argument("unknown config key '" + it.key() + "'");
  }
  if (j.contains("problem")) s.kind = cop::parse_kind(j["problem"].get<std::string>());
  if (j.contains("scale")) s.scale = j["scale"];
  if (j.contains("pheromone")) s.pheromone = cop::parse_pheromone_model(j["pheromone"].get<std::string>());
  if (j.contains("method")) s.methods = {bench::parse_method(j["method"].get<std::string>())};
  if (j.contains("methods")) {
    s.methods.clear();
    for (const auto& m : j["methods"]) s.methods.push_back(bench::parse_method(m.get<std::string>()));
  }
  if (j.contains("checkpoint")) {
    for (auto m : s.methods)
      if (bench::is_learned(m)) s.checkpoints[m] = j["checkpoint"].get<std::string>();
  }
  if (j.contains("checkpoints")) {
    for (auto it = j["checkpoints"].begin(); it != j["checkpoints"].end(); ++it)
      s.checkpoints[bench::parse_method(it.key())] = it.value().get<std::string>();
  }
  if (j.contains("seeds")) s.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  if (j.contains("instances")) s.instances = j["instances"];
  if (j.contains("instance_seed")) s.instance_seed = j["instance_seed"];
  if (j.contains("mkp_constraints")) s.mkp_constraints = j["mkp_constraints"];
  if (j.contains("dataset")) s.dataset = j["dataset"].get<std::string>();
  if (j.contains("index")) s.index = j["index"];
  if (j.contains("budget")) s.aco.budget = j["budget"];
  if (j.contains("n_ants")) s.aco.n_ants = j["n_ants"];
  if (j.contains("variant")) s.aco.variant = aco::parse_variant(j["variant"].get<std::string>());
  if (j.contains("local_search")) s.aco.local_search = aco::parse_local_search(j["local_search"].get<std::string>());
  if (j.contains("alpha")) s.aco.alpha = j["alpha"];
  if (j.contains("beta")) s.aco.beta = j["beta"];
  if (j.contains("evaporation")) s.aco.evaporation = j["evaporation"];
  if (j.contains("deposit_scale")) s.aco.deposit_scale = j["deposit_scale"];
  if (j.contains("nls_iterations")) s.aco.nls.iterations = j["nls_iterations"];
  if (j.contains("perturbation_moves")) s.aco.nls.perturbation_moves = j["perturbation_moves"];
  if (j.contains("train")) s.train = j["train"];
  if (j.contains("alphas")) s.alphas = j["alphas"].get<std::vector<double>>();
  if (j.contains("decays")) s.decays = j["decays"].get<std::vector<double>>();
  if (j.contains("out")) s.out = j["out"].get<std::string>();
}

RunSpec resolve(const std::string& command, const Flags& f) {
  RunSpec s;
  s.command = command;
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw std::ios_base::failure("cannot open " + f.config);
    json j;
    try {
      in >> j;
    } catch (const json::parse_error& e) {
      throw std::invalid_argument(f.config + ": " + e.what());
    }
    apply_json(s, j);
  }
  if (!f.problem.empty()) s.kind = cop::parse_kind(f.problem);
  if (f.scale > 0) s.scale = f.scale;
  if (!f.pheromone.empty()) s.pheromone = cop::parse_pheromone_model(f.pheromone);
  if (!f.methods.empty()) {
    s.methods.clear();
    for (const auto& m : f.methods) s.methods.push_back(bench::parse_method(m));
  }
  if (!f.checkpoint.empty()) {
    for (auto m : s.methods)
      if (bench::is_learned(m)) s.checkpoints[m] = f.checkpoint;
  }
  if (!f.seeds.empty()) s.seeds = f.seeds;
  if (f.instances > 0) s.instances = f.instances;
  if (f.budget > 0) s.aco.budget = f.budget;
  if (f.ants > 0) s.aco.n_ants = f.ants;
  if (!f.variant.empty()) s.aco.variant = aco::parse_variant(f.variant);
  if (!f.local_search.empty()) s.aco.local_search = aco::parse_local_search(f.local_search);
  if (!f.dataset.empty()) s.dataset = f.dataset;
  if (f.index >= 0) s.index = f.index;
  if (!f.out.empty()) s.out = f.out;
  if (s.seeds.empty()) throw std::invalid_argument("at least one seed is required");
  s.aco.validate();
  return s;
}

nn::HeuristicModel load_checkpoint(const RunSpec& s, bench::Method m) {
  auto it = s.checkpoints.find(m);
  if (it == s.checkpoints.end()) throw std::invalid_argument(bench::to_string(m) + " needs --checkpoint");
  if (!fs::exists(it->second)) throw std::ios_base::failure("checkpoint not found: " + it->second.string());
  return nn::HeuristicModel::load(it->second);
}

void require_out(const RunSpec& s) {
  if (s.out.empty()) throw std::invalid_argument(s.command + " needs --out");
}

int cmd_generate(const RunSpec& s) {
  require_out(s);
  const auto instances = bench::test_instances(s.kind, s.scale, s.instances, s.instance_seed, s.mkp_constraints);
  cop::save_dataset(s.out, instances);
  std::cout << "wrote " << instances.size() << " " << cop::to_string(s.kind) << s.scale << " instances to "
            << s.out.string() << "\n";
  return kOk;
}

int cmd_train(const RunSpec& s) {
  require_out(s);
  if (s.methods.size() != 1 || !bench::is_learned(s.methods[0]))
    throw std::invalid_argument("train needs exactly one learned --method");
  auto cfg = bench::training_config(s.methods[0], s.kind, s.scale, s.pheromone, s.seeds[0]);
  cfg.mkp_constraints = s.mkp_constraints;
  train::apply_overrides(cfg, s.train);
  auto result = train::train(cfg, [](const train::EpochRecord& r) {
    std::cerr << "epoch " << r.epoch << " mean_f " << io::format_number(r.mean_f) << " loss "
              << io::format_number(r.loss) << " (" << r.seconds << " s)\n";
  });
  if (s.out.has_parent_path()) fs::create_directories(s.out.parent_path());
  result.model.save(s.out, {{"trainer", cfg.to_json()}, {"method", bench::to_string(s.methods[0])}});
  auto log_path = s.out;
  log_path.replace_extension(".train.csv");
  io::write_text_file(log_path, train::training_log_csv(result.log));
  std::cout << "checkpoint " << s.out.string() << "\n";
  return kOk;
}

int cmd_solve(const RunSpec& s) {
  if (s.methods.size() != 1) throw std::invalid_argument("solve takes one --method");
  const auto method = s.methods[0];
  cop::Instance instance;
  if (!s.dataset.empty()) {
    auto all = cop::load_dataset(s.dataset);
    if (s.index < 0 || s.index >= static_cast<int>(all.size()))
      throw std::invalid_argument("--index out of range for " + s.dataset.string());
    instance = std::move(all[s.index]);
  } else {
    instance = cop::generate_instance(s.kind, s.scale, bench::test_instance_seed(s.instance_seed, s.index),
                                      s.mkp_constraints);
  }
  std::optional<nn::HeuristicModel> model;
  if (bench::is_learned(method)) {
    model.emplace(load_checkpoint(s, method));
    if (model->config().kind != instance.kind)
      throw std::invalid_argument("checkpoint was trained on " + cop::to_string(model->config().kind));
  }
  const auto pheromone = model ? model->config().model : s.pheromone;
  const auto problem = cop::make_problem(instance, pheromone);
  const auto fields = bench::method_fields(method, problem, model ? &*model : nullptr);
  auto cfg = s.aco;
  cfg.seed = s.seeds[0];
  const auto log = aco::run_colony(problem, fields, cfg);
  if (!s.out.empty()) aco::write_csv(s.out, log);
  const double f = instance.is_maximization() ? -log.best_objective : log.best_objective;
  std::cout << "objective " << io::format_number(f) << "\nsolution";
  for (int v : log.best_solution) std::cout << ' ' << v;
  std::cout << "\niterations " << log.points.size() << "\nevaluations " << log.points.back().evaluations << "\n";
  return kOk;
}

int cmd_bench(const RunSpec& s) {
  bench::BenchSpec spec;
  spec.kind = s.kind;
  spec.scale = s.scale;
  spec.pheromone = s.pheromone;
  spec.methods = s.methods;
  spec.checkpoints = s.checkpoints;
  spec.instances = s.instances;
  spec.instance_seed = s.instance_seed;
  spec.seeds = s.seeds;
  spec.aco = s.aco;
  spec.out = s.out;
  for (auto m : spec.methods) {
    auto it = spec.checkpoints.find(m);
    if (it != spec.checkpoints.end() && !fs::exists(it->second))
      throw std::ios_base::failure("checkpoint not found: " + it->second.string());
  }
  const auto result = bench::cmd_bench(spec);
  std::cout << "final mean best-so-far at " << result.grid.back() << " evaluations\n";
  for (auto m : spec.methods) {
    std::cout << "  " << bench::to_string(m) << " " << io::format_number(result.mean_curve.at(m).back()) << "\n";
  }
  return kOk;
}

int cmd_grid(const RunSpec& s) {
  auto model = load_checkpoint(s, bench::Method::DeepAco);
  bench::GridSpec spec;
  spec.kind = s.kind;
  spec.scale = s.scale;
  spec.instances = s.instances;
  spec.instance_seed = s.instance_seed;
  spec.seeds = s.seeds;
  spec.alphas = s.alphas;
  spec.decays = s.decays;
  spec.aco = s.aco;
  spec.out = s.out;
  const auto result = bench::cmd_grid(spec, model);
  for (const auto& [m, v] : result.variance)
    std::cout << bench::to_string(m) << " grid variance " << io::format_number(v) << "\n";
  return kOk;
}

int cmd_sampling(const RunSpec& s) {
  auto model = load_checkpoint(s, bench::Method::DeepAco);
  bench::SamplingSpec spec;
  spec.kind = s.kind;
  spec.scale = s.scale;
  spec.instances = s.instances;
  spec.instance_seed = s.instance_seed;
  spec.seed = s.seeds[0];
  spec.aco = s.aco;
  spec.out = s.out;
  const auto rows = bench::cmd_sampling_compare(spec, model);
  double evo = 0.0, smp = 0.0;
  for (const auto& r : rows) {
    evo += r.evolution;
    smp += r.sampling;
  }
  std::cout << "mean evolution " << io::format_number(evo / rows.size()) << "\nmean sampling "
            << io::format_number(smp / rows.size()) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ant colony optimization with learned heuristics"};
  app.require_subcommand(1);
  Flags flags;
  const std::map<std::string, int (*)(const RunSpec&)> commands = {
      {"generate", cmd_generate}, {"train", cmd_train}, {"solve", cmd_solve},
      {"bench", cmd_bench},       {"grid", cmd_grid},   {"sampling-compare", cmd_sampling}};
  const std::map<std::string, std::string> help = {
      {"generate", "write a dataset of random instances"},
      {"train", "train a heuristic model and write a checkpoint"},
      {"solve", "run the colony on one instance and print the best solution"},
      {"bench", "evolution curves for several methods over held-out instances"},
      {"grid", "(alpha, decay) sensitivity grid for ACO and DeepACO"},
      {"sampling-compare", "colony evolution against pure sampling at equal budget"}};
  for (const auto& [name, fn] : commands) {
    auto* sub = app.add_subcommand(name, help.at(name));
    sub->add_option("--config", flags.config, "JSON spec file; flags override its keys");
    sub->add_option("--problem", flags.problem, "tsp | op | pctsp | smtwtp | mkp");
    sub->add_option("--scale", flags.scale, "problem size");
    sub->add_option("--method", flags.methods, "aco-expert | deepaco | deepaco-multihead | deepaco-topk | deepaco-imitation");
    sub->add_option("--budget", flags.budget, "objective evaluations per run");
    sub->add_option("--seeds", flags.seeds, "run seeds")->delimiter(',');
    sub->add_option("--out", flags.out, "output file or directory");
    sub->add_option("--checkpoint", flags.checkpoint, "trained model for learned methods");
    sub->add_option("--pheromone", flags.pheromone, "successor | items");
    sub->add_option("--instances", flags.instances, "instance count");
    sub->add_option("--ants", flags.ants, "ants per iteration");
    sub->add_option("--variant", flags.variant, "as | elitist | maxmin");
    sub->add_option("--local-search", flags.local_search, "none | 2opt | nls | nls-random");
    sub->add_option("--dataset", flags.dataset, "dataset file (solve)");
    sub->add_option("--index", flags.index, "instance index (solve)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    for (const auto& [name, fn] : commands) {
      if (app.got_subcommand(name)) return fn(resolve(name, flags));
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const FormatError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const json::exception& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}
