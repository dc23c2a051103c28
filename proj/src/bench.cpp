#include "deepaco/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

#include "deepaco/error.hpp"
#include "deepaco/io.hpp"

namespace deepaco::bench {

namespace fs = std::filesystem;

std::string to_string(Method m) {
  switch (m) {
    case Method::AcoExpert: return "aco-expert";
    case Method::DeepAco: return "deepaco";
    case Method::DeepAcoMultihead: return "deepaco-multihead";
    case Method::DeepAcoTopk: return "deepaco-topk";
    case Method::DeepAcoImitation: return "deepaco-imitation";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::AcoExpert, Method::DeepAco, Method::DeepAcoMultihead, Method::DeepAcoTopk,
                   Method::DeepAcoImitation}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown method '" + std::string(name) + "'");
}

bool is_learned(Method m) { return m != Method::AcoExpert; }

train::TrainerConfig training_config(Method m, cop::Kind kind, int scale, cop::PheromoneModel pheromone,
                                     std::uint64_t seed) {
  train::TrainerConfig cfg;
  cfg.kind = kind;
  cfg.scale = scale;
  cfg.pheromone = pheromone;
  cfg.seed = seed;
  switch (m) {
    case Method::AcoExpert: throw std::invalid_argument("aco-expert is not trained");
    case Method::DeepAco: break;
    case Method::DeepAcoMultihead:
      cfg.model.heads = 4;
      cfg.lambda_kl = 0.05;
      break;
    case Method::DeepAcoTopk:
      cfg.lambda_entropy = 0.05;
      cfg.topk = 5;
      break;
    case Method::DeepAcoImitation: cfg.lambda_imitation = 0.02; break;
  }
  return cfg;
}

std::uint64_t test_instance_seed(std::uint64_t base, int index) {
  return aco::stream_seed(base ^ 0x7e57ULL, 0xFFFFFFFFULL, static_cast<std::uint64_t>(index));
}

std::vector<cop::Instance> test_instances(cop::Kind kind, int scale, int count, std::uint64_t base,
                                          int mkp_constraints) {
  std::vector<cop::Instance> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    out.push_back(cop::generate_instance(kind, scale, test_instance_seed(base, i), mkp_constraints));
  }
  return out;
}

std::vector<cop::HeuristicField> method_fields(Method m, const cop::Problem& problem, nn::HeuristicModel* model) {
  if (!is_learned(m)) return {cop::expert_heuristic(problem.instance, problem.graph, problem.model)};
  if (model == nullptr) throw std::invalid_argument(to_string(m) + " needs a trained checkpoint");
  return model->infer(problem);
}

int worker_count() {
  if (const char* env = std::getenv("DEEPACO_WORKERS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

void parallel_for(int count, const std::function<void(int)>& job) {
  const int workers = std::min(worker_count(), std::max(count, 1));
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

double value_at(const aco::EvolutionLog& log, long x) {
  double v = std::numeric_limits<double>::quiet_NaN();
  for (const auto& p : log.points) {
    if (p.evaluations > x) break;
    v = p.best_objective;
  }
  return v;
}

namespace {

void check_model(Method m, const nn::HeuristicModel& model, cop::Kind kind, cop::PheromoneModel pheromone) {
  const auto& c = model.config();
  if (c.kind != kind || c.model != pheromone) {
    throw std::invalid_argument("checkpoint for " + to_string(m) + " was trained on " + cop::to_string(c.kind) + "/" +
                                cop::to_string(c.model) + ", bench runs " + cop::to_string(kind) + "/" +
                                cop::to_string(pheromone));
  }
}

std::uint64_t run_seed(std::uint64_t seed, int instance) {
  return aco::stream_seed(seed, static_cast<std::uint64_t>(instance), 0x5eedULL);
}

}  // namespace

BenchResult cmd_bench(const BenchSpec& spec, std::map<Method, nn::HeuristicModel*> models) {
  if (spec.instances < 1 || spec.seeds.empty()) throw std::invalid_argument("bench: need instances and seeds");
  std::map<Method, nn::HeuristicModel> loaded;
  for (Method m : spec.methods) {
    if (!is_learned(m) || models.count(m)) continue;
    auto it = spec.checkpoints.find(m);
    if (it == spec.checkpoints.end()) throw std::invalid_argument(to_string(m) + " needs a trained checkpoint");
    loaded.emplace(m, nn::HeuristicModel::load(it->second));
    models[m] = &loaded.at(m);
  }
  for (auto [m, model] : models) check_model(m, *model, spec.kind, spec.pheromone);

  const auto instances = test_instances(spec.kind, spec.scale, spec.instances, spec.instance_seed);
  const auto S = spec.seeds.size();
  std::map<Method, std::vector<std::vector<aco::EvolutionLog>>> logs;  // [seed][instance]
  for (Method m : spec.methods) {
    auto& per_seed = logs[m];
    per_seed.assign(S, std::vector<aco::EvolutionLog>(instances.size()));
    nn::HeuristicModel* model = is_learned(m) ? models.at(m) : nullptr;
    parallel_for(static_cast<int>(instances.size()), [&](int i) {
      const auto problem = cop::make_problem(instances[i], spec.pheromone);
      const auto fields = method_fields(m, problem, model);
      for (std::size_t s = 0; s < S; ++s) {
        auto cfg = spec.aco;
        cfg.seed = run_seed(spec.seeds[s], i);
        per_seed[s][i] = aco::run_colony(problem, fields, cfg);
      }
    });
  }

  BenchResult result;
  std::set<long> grid;
  for (const auto& [m, per_seed] : logs)
    for (const auto& row : per_seed)
      for (const auto& log : row)
        for (const auto& p : log.points) grid.insert(p.evaluations);
  result.grid.assign(grid.begin(), grid.end());
  for (const auto& [m, per_seed] : logs) {
    auto& curve = result.mean_curve[m];
    curve.assign(result.grid.size(), 0.0);
    const double runs = static_cast<double>(S * instances.size());
    for (std::size_t g = 0; g < result.grid.size(); ++g) {
      for (const auto& row : per_seed)
        for (const auto& log : row) curve[g] += value_at(log, result.grid[g]);
      curve[g] /= runs;
    }
    auto& fin = result.finals[m];
    for (const auto& row : per_seed) {
      fin.emplace_back();
      for (const auto& log : row) fin.back().push_back(log.final_objective());
    }
  }

  if (!spec.out.empty()) {
    for (const auto& [m, per_seed] : logs) {
      for (std::size_t s = 0; s < S; ++s) {
        const auto dir = spec.out / "logs" / to_string(m) / ("seed" + std::to_string(spec.seeds[s]));
        fs::create_directories(dir);
        for (std::size_t i = 0; i < instances.size(); ++i) {
          aco::write_csv(dir / ("instance" + std::to_string(i) + ".csv"), per_seed[s][i]);
        }
      }
    }
    io::write_text_file(spec.out / "summary.csv", summary_csv(spec, result));
  }
  return result;
}

std::string summary_csv(const BenchSpec& spec, const BenchResult& result) {
  std::string out = "evaluations";
  for (Method m : spec.methods) out += "," + to_string(m);
  out += '\n';
  for (std::size_t g = 0; g < result.grid.size(); ++g) {
    out += std::to_string(result.grid[g]);
    for (Method m : spec.methods) out += "," + io::format_number(result.mean_curve.at(m)[g]);
    out += '\n';
  }
  return out;
}

GridResult cmd_grid(const GridSpec& spec, nn::HeuristicModel& model) {
  check_model(Method::DeepAco, model, spec.kind, cop::PheromoneModel::Successor);
  for (double d : spec.decays) {
    if (!(d > 0.0 && d < 1.0)) throw std::invalid_argument("grid: decay values must lie in (0, 1)");
  }
  const auto instances = test_instances(spec.kind, spec.scale, spec.instances, spec.instance_seed);
  const std::vector<Method> methods = {Method::AcoExpert, Method::DeepAco};
  const std::size_t cells = spec.alphas.size() * spec.decays.size();
  // totals[instance][method * cells + cell], summed over seeds
  std::vector<std::vector<double>> totals(instances.size(), std::vector<double>(methods.size() * cells, 0.0));
  parallel_for(static_cast<int>(instances.size()), [&](int i) {
    const auto problem = cop::make_problem(instances[i]);
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      const auto fields = method_fields(methods[mi], problem, &model);
      for (std::size_t a = 0; a < spec.alphas.size(); ++a) {
        for (std::size_t d = 0; d < spec.decays.size(); ++d) {
          for (auto seed : spec.seeds) {
            auto cfg = spec.aco;
            cfg.alpha = spec.alphas[a];
            cfg.evaporation = 1.0 - spec.decays[d];
            cfg.seed = run_seed(seed, i);
            totals[i][mi * cells + a * spec.decays.size() + d] += aco::run_colony(problem, fields, cfg).final_objective();
          }
        }
      }
    }
  });

  GridResult result;
  const double runs = static_cast<double>(instances.size() * spec.seeds.size());
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    std::vector<double> values;
    for (std::size_t a = 0; a < spec.alphas.size(); ++a) {
      for (std::size_t d = 0; d < spec.decays.size(); ++d) {
        double s = 0.0;
        for (const auto& row : totals) s += row[mi * cells + a * spec.decays.size() + d];
        result.cells.push_back({methods[mi], spec.alphas[a], spec.decays[d], s / runs});
        values.push_back(s / runs);
      }
    }
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    result.variance[methods[mi]] = var / static_cast<double>(values.size());
  }

  if (!spec.out.empty()) {
    fs::create_directories(spec.out);
    std::string csv = "method,alpha,decay,mean_final\n";
    for (const auto& c : result.cells) {
      csv += to_string(c.method) + "," + io::format_number(c.alpha) + "," + io::format_number(c.decay) + "," +
             io::format_number(c.mean_final) + "\n";
    }
    io::write_text_file(spec.out / "grid.csv", csv);
    std::string var = "method,variance\n";
    for (Method m : methods) var += to_string(m) + "," + io::format_number(result.variance.at(m)) + "\n";
    io::write_text_file(spec.out / "grid_variance.csv", var);
  }
  return result;
}

std::vector<SamplingRow> cmd_sampling_compare(const SamplingSpec& spec, nn::HeuristicModel& model) {
  check_model(Method::DeepAco, model, spec.kind, model.config().model);
  const auto instances = test_instances(spec.kind, spec.scale, spec.instances, spec.instance_seed);
  std::vector<SamplingRow> rows(instances.size());
  parallel_for(static_cast<int>(instances.size()), [&](int i) {
    const auto problem = cop::make_problem(instances[i], model.config().model);
    const auto fields = model.infer(problem);
    auto cfg = spec.aco;
    cfg.seed = run_seed(spec.seed, i);
    const auto evo = aco::run_colony(problem, fields, cfg);
    const auto smp = aco::pure_sample(problem, fields, cfg);
    if (evo.points.back().evaluations != smp.points.back().evaluations) {
      throw std::logic_error("sampling-compare: evaluation budgets diverged");
    }
    rows[i] = {i, evo.points.back().evaluations, evo.final_objective(), smp.final_objective()};
  });
  if (!spec.out.empty()) {
    fs::create_directories(spec.out);
    std::string csv = "instance,evaluations,evolution,sampling\n";
    for (const auto& r : rows) {
      csv += std::to_string(r.instance) + "," + std::to_string(r.evaluations) + "," + io::format_number(r.evolution) +
             "," + io::format_number(r.sampling) + "\n";
    }
    io::write_text_file(spec.out / "sampling_compare.csv", csv);
  }
  return rows;
}

}  // namespace deepaco::bench
