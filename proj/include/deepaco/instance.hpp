#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace deepaco::cop {

enum class Kind { TSP, OP, PCTSP, SMTWTP, MKP };

std::string to_string(Kind kind);
Kind parse_kind(std::string_view name);  // case-insensitive; throws std::invalid_argument

// Node layout of the construction graph:
//   TSP     cities 0..n-1
//   OP      depot 0, customers 1..n
//   PCTSP   depot 0, customers 1..n
//   SMTWTP  dummy job 0, jobs 1..n
//   MKP     dummy start 0, item j at node j+1
// Per-node arrays below are indexed by node.
struct Instance {
  Kind kind = Kind::TSP;
  int n = 0;  // decision variables: cities, customers, jobs or items
  std::uint64_t seed = 0;

  std::vector<double> coords;      // node_count x 2 (routing kinds)
  std::vector<double> prize;       // OP, PCTSP; 0 at depot
  std::vector<double> penalty;     // PCTSP; 0 at depot
  double max_length = 0.0;         // OP tour length budget
  double min_prize = 0.0;          // PCTSP prize to collect

  std::vector<double> due;         // SMTWTP; 0 at dummy
  std::vector<double> weight;      // SMTWTP tardiness weights
  std::vector<double> processing;  // SMTWTP processing times

  int constraints = 0;             // MKP m
  std::vector<double> values;      // MKP, by node (0 at dummy)
  std::vector<double> weights;     // MKP m x node_count, row-major (0 column at dummy)
  std::vector<double> capacities;  // MKP, size m

  std::vector<double> dist;        // node_count^2 Euclidean distances (routing kinds)

  int node_count() const { return kind == Kind::TSP ? n : n + 1; }
  bool is_routing() const { return kind == Kind::TSP || kind == Kind::OP || kind == Kind::PCTSP; }
  bool has_depot() const { return kind == Kind::OP || kind == Kind::PCTSP; }
  // Maximization problems are stored with a negated objective.
  bool is_maximization() const { return kind == Kind::OP || kind == Kind::MKP; }
  double distance(int i, int j) const { return dist[static_cast<std::size_t>(i) * node_count() + j]; }
  double item_weight(int constraint, int node) const {
    return weights[static_cast<std::size_t>(constraint) * node_count() + node];
  }
};

// Deterministic in (kind, n, seed, mkp_constraints).
Instance generate_instance(Kind kind, int n, std::uint64_t seed, int mkp_constraints = 5);

// Builders used by generators, dataset loading and tests. They fill derived data
// (distance matrix) and validate shapes.
Instance make_tsp(std::vector<double> coords);
Instance make_op(std::vector<double> coords, std::vector<double> prize, double max_length);
Instance make_pctsp(std::vector<double> coords, std::vector<double> prize,
                    std::vector<double> penalty, double min_prize);
// Job arrays exclude the dummy job.
Instance make_smtwtp(std::vector<double> due, std::vector<double> weight,
                     std::vector<double> processing);
// weights is m x n row-major over items (no dummy column).
Instance make_mkp(std::vector<double> values, std::vector<double> weights,
                  std::vector<double> capacities);

double op_length_budget(int n);
double pctsp_expected_tour_length(int n);

// ---- dataset files -------------------------------------------------------

inline constexpr std::uint32_t kDatasetVersion = 1;

void save_dataset(const std::filesystem::path& path, const std::vector<Instance>& instances);
std::vector<Instance> load_dataset(const std::filesystem::path& path);
std::vector<char> encode_dataset(const std::vector<Instance>& instances);
std::vector<Instance> decode_dataset(const std::vector<char>& bytes);

bool operator==(const Instance& a, const Instance& b);

}  // namespace deepaco::cop
