#include "deepaco/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>

#include "deepaco/error.hpp"
#include "deepaco/io.hpp"

namespace deepaco::train {

using ad::Tape;
using ad::Tensor;
using ad::Var;
using cop::PheromoneModel;

void TrainerConfig::validate() const {
  if (scale < 2) throw std::invalid_argument("TrainerConfig: scale must be >= 2");
  if (total_instances < 1 || instances_per_epoch < 1) {
    throw std::invalid_argument("TrainerConfig: instance counts must be positive");
  }
  if (rollouts < 2) throw std::invalid_argument("TrainerConfig: baselines need at least 2 rollouts");
  if (!(W >= 0.0)) throw std::invalid_argument("TrainerConfig: W must be >= 0");
  if (!(lambda_kl >= 0.0 && lambda_entropy >= 0.0 && lambda_imitation >= 0.0)) {
    throw std::invalid_argument("TrainerConfig: loss coefficients must be >= 0");
  }
  if (topk < 1) throw std::invalid_argument("TrainerConfig: k must be >= 1");
  if (!(lr >= 0.0)) throw std::invalid_argument("TrainerConfig: learning rate must be >= 0");
  if (model.heads < 1) throw std::invalid_argument("TrainerConfig: heads must be >= 1");
  if (pheromone == PheromoneModel::Items && kind != cop::Kind::MKP) {
    throw std::invalid_argument("TrainerConfig: the items model only supports MKP");
  }
}

nlohmann::json TrainerConfig::to_json() const {
  return {{"kind", cop::to_string(kind)},
          {"scale", scale},
          {"pheromone", cop::to_string(pheromone)},
          {"mkp_constraints", mkp_constraints},
          {"neighbors", neighbors},
          {"total_instances", total_instances},
          {"instances_per_epoch", instances_per_epoch},
          {"rollouts", rollouts},
          {"W", W},
          {"train_local_search", aco::to_string(train_local_search)},
          {"nls_iterations", nls.iterations},
          {"perturbation_moves", nls.perturbation_moves},
          {"lambda_kl", lambda_kl},
          {"lambda_entropy", lambda_entropy},
          {"lambda_imitation", lambda_imitation},
          {"topk", topk},
          {"lr", lr},
          {"clip_norm", clip_norm},
          {"seed", seed},
          {"layers", model.layers},
          {"hidden", model.hidden},
          {"decoder_hidden", model.decoder_hidden},
          {"heads", model.heads},
          {"attention_heads", model.attention_heads}};
}

void apply_overrides(TrainerConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("training config must be a JSON object");
  static const std::vector<std::string> known = {
      "kind", "scale", "pheromone", "mkp_constraints", "neighbors", "total_instances", "instances_per_epoch",
      "rollouts", "W", "train_local_search", "nls_iterations", "perturbation_moves", "lambda_kl",
      "lambda_entropy", "lambda_imitation", "topk", "lr", "clip_norm", "seed", "layers", "hidden",
      "decoder_hidden", "heads", "attention_heads"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("unknown training option '" + key + "'");
    }
  }
  if (j.contains("kind")) c.kind = cop::parse_kind(j["kind"].get<std::string>());
  if (j.contains("pheromone")) c.pheromone = cop::parse_pheromone_model(j["pheromone"].get<std::string>());
  if (j.contains("train_local_search")) {
    c.train_local_search = aco::parse_local_search(j["train_local_search"].get<std::string>());
  }
  c.scale = j.value("scale", c.scale);
  c.mkp_constraints = j.value("mkp_constraints", c.mkp_constraints);
  c.neighbors = j.value("neighbors", c.neighbors);
  c.total_instances = j.value("total_instances", c.total_instances);
  c.instances_per_epoch = j.value("instances_per_epoch", c.instances_per_epoch);
  c.rollouts = j.value("rollouts", c.rollouts);
  c.W = j.value("W", c.W);
  c.nls.iterations = j.value("nls_iterations", c.nls.iterations);
  c.nls.perturbation_moves = j.value("perturbation_moves", c.nls.perturbation_moves);
  c.lambda_kl = j.value("lambda_kl", c.lambda_kl);
  c.lambda_entropy = j.value("lambda_entropy", c.lambda_entropy);
  c.lambda_imitation = j.value("lambda_imitation", c.lambda_imitation);
  c.topk = j.value("topk", c.topk);
  c.lr = j.value("lr", c.lr);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.seed = j.value("seed", c.seed);
  c.model.layers = j.value("layers", c.model.layers);
  c.model.hidden = j.value("hidden", c.model.hidden);
  c.model.decoder_hidden = j.value("decoder_hidden", c.model.decoder_hidden);
  c.model.heads = j.value("heads", c.model.heads);
  c.model.attention_heads = j.value("attention_heads", c.model.attention_heads);
}

// ---- rollouts ------------------------------------------------------------

std::vector<aco::Trajectory> rollout_batch(const cop::Problem& problem, const cop::HeuristicField& eta,
                                           int n_rollouts, std::uint64_t seed, const aco::Refiner* refiner) {
  if (n_rollouts < 1) throw std::invalid_argument("rollout_batch: need at least one rollout");
  const auto tau = aco::PheromoneField::constant(problem.model, problem.nodes(), 1.0);
  const aco::SelectionWeights weights(problem, tau, eta, 1.0, 1.0);
  std::vector<aco::Trajectory> out;
  out.reserve(n_rollouts);
  for (int r = 0; r < n_rollouts; ++r) {
    std::mt19937_64 rng(aco::stream_seed(seed, 0, static_cast<std::uint64_t>(r)));
    out.push_back(aco::construct_solution(weights, rng, true));
    if (refiner != nullptr && refiner->active()) refiner->apply(out.back(), rng);
  }
  return out;
}

BatchStats batch_stats(const std::vector<aco::Trajectory>& trajectories) {
  if (trajectories.size() < 2) {
    throw std::invalid_argument("batch_stats: baselines need at least 2 rollouts, got " +
                                std::to_string(trajectories.size()));
  }
  BatchStats s;
  s.has_nls = std::all_of(trajectories.begin(), trajectories.end(), [](const auto& t) { return t.has_refined(); });
  for (const auto& t : trajectories) {
    s.baseline += t.objective;
    if (s.has_nls) s.baseline_nls += t.refined_objective;
  }
  s.baseline /= static_cast<double>(trajectories.size());
  s.baseline_nls /= static_cast<double>(trajectories.size());
  if (!std::isfinite(s.baseline) || !std::isfinite(s.baseline_nls)) throw NumericError("batch_stats: non-finite baseline");
  return s;
}

// ---- log-probability op --------------------------------------------------

namespace {

// -1 marks the OP terminator at the depot itself, which has no output row and keeps the
// floor measure.
int output_row(const cop::Problem& problem, int from, int to) {
  if (problem.model == PheromoneModel::Items) return to - 1;
  const int e = problem.graph.edge(from, to);
  if (e < 0) {
    if (from == 0 && to == 0 && problem.instance.has_depot()) return -1;
    throw std::logic_error("trajectory step uses a component outside the graph");
  }
  return e;
}

double measure(const Tensor& x, int row) { return row < 0 ? 0.0 : x[row]; }

struct StepRows {
  int rollout;
  int chosen;
  std::size_t begin;
  std::size_t end;
};

}  // namespace

Var trajectory_log_probs(const Var& eta, const cop::Problem& problem,
                         const std::vector<aco::Trajectory>& trajectories, double beta) {
  const Tensor& x = eta.value();
  if (x.cols() != 1) throw ShapeError("trajectory_log_probs: eta must be a column, got " + x.shape_string());
  const double eps = cop::kEtaFloor;
  const auto R = trajectories.size();
  Tensor out(R, 1);
  std::vector<StepRows> steps;
  std::vector<int> rows;
  for (std::size_t r = 0; r < R; ++r) {
    double lp = 0.0;
    for (const auto& st : trajectories[r].steps) {
      if (st.fallback) {
        double total = 0.0, chosen = 0.0;
        for (std::size_t k = 0; k < st.candidates.size(); ++k) {
          const double w = std::pow(problem.fallback.at(st.from, st.candidates[k]) + eps, beta);
          total += w;
          if (static_cast<int>(k) == st.chosen) chosen = w;
        }
        lp += std::log(chosen / total);
        continue;
      }
      StepRows sr{static_cast<int>(r), st.chosen, rows.size(), 0};
      double total = 0.0;
      for (int c : st.candidates) {
        const int row = output_row(problem, st.from, c);
        if (row >= 0 && static_cast<std::size_t>(row) >= x.rows()) throw ShapeError("trajectory_log_probs: row out of range");
        rows.push_back(row);
        total += std::pow(measure(x, row) + eps, beta);
      }
      sr.end = rows.size();
      lp += beta * std::log(measure(x, rows[sr.begin + st.chosen]) + eps) - std::log(total);
      steps.push_back(sr);
    }
    out[r] = lp;
  }
  return eta.tape().record(
      "trajectory_log_probs", std::move(out), {eta},
      [steps = std::move(steps), rows = std::move(rows), beta, eps, xp = &x](
          const Tensor&, const Tensor& g, std::span<Tensor*> gi) {
        if (!gi[0]) return;
        const Tensor& xv = *xp;
        Tensor& d = *gi[0];
        for (const auto& st : steps) {
          const double gr = g[st.rollout];
          if (gr == 0.0) continue;
          double total = 0.0;
          for (std::size_t k = st.begin; k < st.end; ++k) total += std::pow(measure(xv, rows[k]) + eps, beta);
          for (std::size_t k = st.begin; k < st.end; ++k) {
            if (rows[k] >= 0) d[rows[k]] -= gr * beta * std::pow(xv[rows[k]] + eps, beta - 1.0) / total;
          }
          const int c = rows[st.begin + st.chosen];
          if (c >= 0) d[c] += gr * beta / (xv[c] + eps);
        }
      });
}

Var policy_gradient(const Var& log_probs, const std::vector<aco::Trajectory>& trajectories,
                    const BatchStats& stats, double W) {
  const auto R = trajectories.size();
  if (log_probs.rows() != R || log_probs.cols() != 1) {
    throw std::invalid_argument("policy_gradient: " + std::to_string(R) + " trajectories but log-probs of shape " +
                                log_probs.value().shape_string());
  }
  if (W > 0.0 && !stats.has_nls) throw std::invalid_argument("policy_gradient: W > 0 needs refined objectives");
  Tensor adv(R, 1);
  for (std::size_t r = 0; r < R; ++r) {
    adv[r] = trajectories[r].objective - stats.baseline;
    if (W > 0.0) adv[r] += W * (trajectories[r].refined_objective - stats.baseline_nls);
  }
  return ad::mean(log_probs.tape().constant(std::move(adv)) * log_probs);
}

// ---- exploration losses --------------------------------------------------

RowLayout row_layout(const cop::Problem& problem) {
  RowLayout l;
  if (problem.model == PheromoneModel::Items) {
    l.row.assign(problem.instance.n, 0);
    l.rows = 1;
  } else {
    l.row = problem.graph.sources;
    l.rows = static_cast<std::size_t>(problem.nodes());
  }
  return l;
}

namespace {

Var normalized(const Var& eta, const RowLayout& layout) {
  if (eta.rows() != layout.row.size() || eta.cols() != 1) {
    throw ShapeError("row normalization: field of shape " + eta.value().shape_string() + " vs " +
                     std::to_string(layout.row.size()) + " entries");
  }
  return ad::segment_normalize(ad::add_scalar(eta, cop::kEtaFloor), layout.row, layout.rows);
}

}  // namespace

Var loss_kl(const std::vector<Var>& heads, const RowLayout& layout) {
  const auto m = heads.size();
  if (m < 2) throw std::invalid_argument("loss_kl: needs at least 2 heads");
  std::vector<Var> p, logp;
  for (const auto& h : heads) {
    p.push_back(normalized(h, layout));
    logp.push_back(ad::log(p.back()));
  }
  Var log_sum = logp[0];
  for (std::size_t l = 1; l < m; ++l) log_sum = log_sum + logp[l];
  Var total;
  for (std::size_t k = 0; k < m; ++k) {
    Var term = ad::sum(p[k] * (ad::scale(logp[k], static_cast<double>(m)) - log_sum));
    total = total.valid() ? total + term : term;
  }
  return ad::scale(total, -1.0 / (static_cast<double>(m * m) * static_cast<double>(layout.rows)));
}

Var loss_topk_entropy(const Var& eta, const RowLayout& layout, int k) {
  if (k < 1) throw std::invalid_argument("loss_topk_entropy: k must be >= 1");
  const Tensor& x = eta.value();
  if (x.rows() != layout.row.size() || x.cols() != 1) throw ShapeError("loss_topk_entropy: layout mismatch");
  std::vector<std::vector<int>> members(layout.rows);
  for (std::size_t e = 0; e < layout.row.size(); ++e) members[layout.row[e]].push_back(static_cast<int>(e));
  std::vector<int> index, segment;
  for (std::size_t r = 0; r < layout.rows; ++r) {
    auto& mem = members[r];
    const auto keep = std::min<std::size_t>(static_cast<std::size_t>(k), mem.size());
    std::partial_sort(mem.begin(), mem.begin() + keep, mem.end(),
                      [&](int a, int b) { return x[a] > x[b] || (x[a] == x[b] && a < b); });
    for (std::size_t t = 0; t < keep; ++t) {
      index.push_back(mem[t]);
      segment.push_back(static_cast<int>(r));
    }
  }
  Var top = ad::gather_rows(eta, index);
  Var p = ad::segment_normalize(ad::add_scalar(top, cop::kEtaFloor), segment, layout.rows);
  return ad::scale(ad::sum(p * ad::log(p)), 1.0 / static_cast<double>(layout.rows));
}

Var loss_imitation(const Var& eta, const std::vector<double>& expert, const RowLayout& layout) {
  if (expert.size() != layout.row.size()) throw ShapeError("loss_imitation: expert field size mismatch");
  std::vector<double> row_sum(layout.rows, 0.0);
  for (std::size_t e = 0; e < expert.size(); ++e) row_sum[layout.row[e]] += expert[e] + cop::kEtaFloor;
  Tensor target(expert.size(), 1), log_target(expert.size(), 1);
  for (std::size_t e = 0; e < expert.size(); ++e) {
    target[e] = (expert[e] + cop::kEtaFloor) / row_sum[layout.row[e]];
    log_target[e] = std::log(target[e]);
  }
  auto& tape = eta.tape();
  Var q = normalized(eta, layout);
  Var kl = ad::sum(tape.constant(std::move(target)) * (tape.constant(std::move(log_target)) - ad::log(q)));
  return ad::scale(kl, 1.0 / static_cast<double>(layout.rows));
}

std::vector<double> expert_rows(const cop::Problem& problem) {
  const auto field = cop::expert_heuristic(problem.instance, problem.graph, problem.model);
  std::vector<double> out;
  if (problem.model == PheromoneModel::Items) {
    out.assign(field.values.begin() + 1, field.values.end());
    return out;
  }
  const auto& g = problem.graph;
  out.reserve(g.edge_count());
  for (std::size_t e = 0; e < g.edge_count(); ++e) out.push_back(field.at(g.sources[e], g.targets[e]));
  return out;
}

// ---- training loop -------------------------------------------------------

std::string training_log_csv(const std::vector<EpochRecord>& log) {
  std::string out = "epoch,mean_f,mean_f_nls,loss,seconds\n";
  for (const auto& r : log) {
    out += std::to_string(r.epoch) + ',' + io::format_number(r.mean_f) + ',' + io::format_number(r.mean_f_nls) +
           ',' + io::format_number(r.loss) + ',' + io::format_number(r.seconds) + '\n';
  }
  return out;
}

std::uint64_t training_instance_seed(std::uint64_t seed, long index) {
  return aco::stream_seed(seed ^ 0x5452414e5345454dULL, static_cast<std::uint64_t>(index), 0);
}

namespace {

void clip_gradients(ad::ParamStore& store, double max_norm) {
  if (!(max_norm > 0.0)) return;
  double sq = 0.0;
  for (const auto& p : store.params())
    for (double g : p.grad.values()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double f = max_norm / norm;
  for (auto& p : store.params())
    for (double& g : p.grad.values()) g *= f;
}

}  // namespace

TrainResult train(const TrainerConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  auto mc = cfg.model;
  const auto shape = nn::ModelConfig::for_problem(cfg.kind, cfg.pheromone, cfg.mkp_constraints);
  mc.kind = cfg.kind;
  mc.model = cfg.pheromone;
  mc.input_features = shape.input_features;
  mc.seed = cfg.seed;
  nn::HeuristicModel model(mc);
  const int heads = mc.heads;
  const bool tours = cfg.kind == cop::Kind::TSP || cfg.kind == cop::Kind::OP || cfg.kind == cop::Kind::PCTSP;
  const double W = tours ? cfg.W : 0.0;

  std::vector<EpochRecord> log;
  const int epochs = (cfg.total_instances + cfg.instances_per_epoch - 1) / cfg.instances_per_epoch;
  long index = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    double sum_f = 0.0, sum_nls = 0.0, sum_loss = 0.0;
    long count_f = 0, count_nls = 0, count_inst = 0;
    for (int i = 0; i < cfg.instances_per_epoch && index < cfg.total_instances; ++i, ++index) {
      const auto problem = cop::make_problem(
          cop::generate_instance(cfg.kind, cfg.scale, training_instance_seed(cfg.seed, index), cfg.mkp_constraints),
          cfg.pheromone, cfg.neighbors);
      try {
        Tape tape;
        auto outs = model.forward(tape, problem);
        Var loss;
        auto accumulate = [&](const Var& term) { loss = loss.valid() ? loss + term : term; };
        for (int h = 0; h < heads; ++h) {
          const auto field = nn::to_field(outs[h].value(), problem, h);
          std::unique_ptr<aco::Refiner> refiner;
          if (W > 0.0) refiner = std::make_unique<aco::Refiner>(problem, &field, cfg.train_local_search, cfg.nls);
          const auto trajs = rollout_batch(problem, field, cfg.rollouts,
                                           aco::stream_seed(cfg.seed, static_cast<std::uint64_t>(index),
                                                            0x100 + static_cast<std::uint64_t>(h)),
                                           refiner.get());
          const auto stats = batch_stats(trajs);
          for (const auto& t : trajs) {
            sum_f += t.objective;
            ++count_f;
            if (t.has_refined()) {
              sum_nls += t.refined_objective;
              ++count_nls;
            }
          }
          accumulate(policy_gradient(trajectory_log_probs(outs[h], problem, trajs), trajs, stats, W));
        }
        const auto layout = row_layout(problem);
        if (cfg.lambda_kl > 0.0 && heads >= 2) accumulate(ad::scale(loss_kl(outs, layout), cfg.lambda_kl));
        if (cfg.lambda_entropy > 0.0) {
          for (const auto& o : outs) accumulate(ad::scale(loss_topk_entropy(o, layout, cfg.topk), cfg.lambda_entropy));
        }
        if (cfg.lambda_imitation > 0.0) {
          const auto expert = expert_rows(problem);
          for (const auto& o : outs) {
            accumulate(ad::scale(loss_imitation(o, expert, layout), cfg.lambda_imitation));
          }
        }
        const double value = loss.value().item();
        if (!std::isfinite(value)) throw NumericError("non-finite loss");
        tape.backward(loss);
        sum_loss += value;
        ++count_inst;
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      clip_gradients(model.params(), cfg.clip_norm);
      if (cfg.lr > 0.0) {
        model.params().adam_step(cfg.lr, cfg.adam);
      } else {
        model.params().zero_grad();
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_f = count_f ? sum_f / count_f : std::numeric_limits<double>::quiet_NaN();
    rec.mean_f_nls = count_nls ? sum_nls / count_nls : std::numeric_limits<double>::quiet_NaN();
    rec.loss = count_inst ? sum_loss / count_inst : 0.0;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return {std::move(model), std::move(log)};
}

}  // namespace deepaco::train
