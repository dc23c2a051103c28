#include "deepaco/instance.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <stdexcept>

#include "deepaco/error.hpp"
#include "deepaco/io.hpp"
#include "json.hpp"

namespace deepaco::cop {

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::TSP: return "tsp";
    case Kind::OP: return "op";
    case Kind::PCTSP: return "pctsp";
    case Kind::SMTWTP: return "smtwtp";
    case Kind::MKP: return "mkp";
  }
  throw std::invalid_argument("unknown problem kind");
}

Kind parse_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (Kind k : {Kind::TSP, Kind::OP, Kind::PCTSP, Kind::SMTWTP, Kind::MKP}) {
    if (to_string(k) == lower) return k;
  }
  throw std::invalid_argument("unsupported problem kind '" + std::string(name) + "'");
}

double op_length_budget(int n) {
  if (n <= 20) return 2.0;
  if (n <= 50) return 3.0;
  if (n <= 100) return 4.0;
  if (n <= 200) return 5.0;
  return 6.0;
}

double pctsp_expected_tour_length(int n) {
  if (n <= 20) return 4.0;
  if (n <= 50) return 6.0;
  if (n <= 100) return 8.0;
  return 18.0;
}

namespace {

void fill_distances(Instance& inst) {
  const int nodes = inst.node_count();
  if (inst.coords.size() != static_cast<std::size_t>(nodes) * 2) {
    throw std::invalid_argument(to_string(inst.kind) + ": expected " + std::to_string(nodes * 2) +
                                " coordinates, got " + std::to_string(inst.coords.size()));
  }
  inst.dist.assign(static_cast<std::size_t>(nodes) * nodes, 0.0);
  for (int i = 0; i < nodes; ++i) {
    for (int j = 0; j < nodes; ++j) {
      const double dx = inst.coords[2 * i] - inst.coords[2 * j];
      const double dy = inst.coords[2 * i + 1] - inst.coords[2 * j + 1];
      inst.dist[static_cast<std::size_t>(i) * nodes + j] = std::sqrt(dx * dx + dy * dy);
    }
  }
}

void require_size(const std::vector<double>& v, std::size_t n, const char* what) {
  if (v.size() != n) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(n) +
                                " entries, got " + std::to_string(v.size()));
  }
}

std::vector<double> uniform_vector(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

}  // namespace

Instance make_tsp(std::vector<double> coords) {
  Instance inst;
  inst.kind = Kind::TSP;
  inst.n = static_cast<int>(coords.size() / 2);
  inst.coords = std::move(coords);
  fill_distances(inst);
  return inst;
}

Instance make_op(std::vector<double> coords, std::vector<double> prize, double max_length) {
  Instance inst;
  inst.kind = Kind::OP;
  inst.n = static_cast<int>(coords.size() / 2) - 1;
  inst.coords = std::move(coords);
  require_size(prize, inst.node_count(), "op prize");
  inst.prize = std::move(prize);
  inst.prize[0] = 0.0;
  inst.max_length = max_length;
  fill_distances(inst);
  return inst;
}

Instance make_pctsp(std::vector<double> coords, std::vector<double> prize,
                    std::vector<double> penalty, double min_prize) {
  Instance inst;
  inst.kind = Kind::PCTSP;
  inst.n = static_cast<int>(coords.size() / 2) - 1;
  inst.coords = std::move(coords);
  require_size(prize, inst.node_count(), "pctsp prize");
  require_size(penalty, inst.node_count(), "pctsp penalty");
  inst.prize = std::move(prize);
  inst.penalty = std::move(penalty);
  inst.prize[0] = 0.0;
  inst.penalty[0] = 0.0;
  inst.min_prize = min_prize;
  fill_distances(inst);
  return inst;
}

Instance make_smtwtp(std::vector<double> due, std::vector<double> weight,
                     std::vector<double> processing) {
  Instance inst;
  inst.kind = Kind::SMTWTP;
  inst.n = static_cast<int>(due.size());
  require_size(weight, due.size(), "smtwtp weight");
  require_size(processing, due.size(), "smtwtp processing");
  auto with_dummy = [](std::vector<double> v) {
    v.insert(v.begin(), 0.0);
    return v;
  };
  inst.due = with_dummy(std::move(due));
  inst.weight = with_dummy(std::move(weight));
  inst.processing = with_dummy(std::move(processing));
  return inst;
}

Instance make_mkp(std::vector<double> values, std::vector<double> weights,
                  std::vector<double> capacities) {
  Instance inst;
  inst.kind = Kind::MKP;
  inst.n = static_cast<int>(values.size());
  inst.constraints = static_cast<int>(capacities.size());
  require_size(weights, values.size() * capacities.size(), "mkp weights");
  const int nodes = inst.node_count();
  inst.values.assign(nodes, 0.0);
  std::copy(values.begin(), values.end(), inst.values.begin() + 1);
  inst.weights.assign(static_cast<std::size_t>(inst.constraints) * nodes, 0.0);
  for (int c = 0; c < inst.constraints; ++c) {
    for (int j = 0; j < inst.n; ++j) {
      inst.weights[static_cast<std::size_t>(c) * nodes + j + 1] =
          weights[static_cast<std::size_t>(c) * inst.n + j];
    }
  }
  inst.capacities = std::move(capacities);
  return inst;
}

Instance generate_instance(Kind kind, int n, std::uint64_t seed, int mkp_constraints) {
  if (n < 2) throw std::invalid_argument("generate_instance: n must be >= 2");
  std::mt19937_64 rng(seed);
  Instance inst;
  switch (kind) {
    case Kind::TSP: {
      inst = make_tsp(uniform_vector(rng, 2 * static_cast<std::size_t>(n), 0.0, 1.0));
      break;
    }
    case Kind::OP: {
      auto coords = uniform_vector(rng, 2 * static_cast<std::size_t>(n + 1), 0.0, 1.0);
      std::vector<double> depot_dist(n + 1, 0.0);
      double far = 0.0;
      for (int i = 1; i <= n; ++i) {
        depot_dist[i] = std::hypot(coords[2 * i] - coords[0], coords[2 * i + 1] - coords[1]);
        far = std::max(far, depot_dist[i]);
      }
      std::vector<double> prize(n + 1, 0.0);
      for (int i = 1; i <= n; ++i) {
        prize[i] = (1.0 + std::floor(99.0 * depot_dist[i] / far)) / 100.0;
      }
      inst = make_op(std::move(coords), std::move(prize), op_length_budget(n));
      break;
    }
    case Kind::PCTSP: {
      auto coords = uniform_vector(rng, 2 * static_cast<std::size_t>(n + 1), 0.0, 1.0);
      auto prize = uniform_vector(rng, n + 1, 0.0, 1.0);
      const double penalty_max = 3.0 * pctsp_expected_tour_length(n) / (2.0 * n);
      auto penalty = uniform_vector(rng, n + 1, 0.0, penalty_max);
      inst = make_pctsp(std::move(coords), std::move(prize), std::move(penalty), n / 4.0);
      break;
    }
    case Kind::SMTWTP: {
      auto due = uniform_vector(rng, n, 0.0, 1.0);
      for (auto& t : due) t *= n;
      auto weight = uniform_vector(rng, n, 0.0, 1.0);
      auto processing = uniform_vector(rng, n, 0.0, 1.0);
      inst = make_smtwtp(std::move(due), std::move(weight), std::move(processing));
      break;
    }
    case Kind::MKP: {
      if (mkp_constraints < 1) throw std::invalid_argument("generate_instance: MKP needs m >= 1");
      auto values = uniform_vector(rng, n, 0.0, 1.0);
      auto weights = uniform_vector(rng, static_cast<std::size_t>(mkp_constraints) * n, 0.0, 1.0);
      std::vector<double> capacities(mkp_constraints);
      for (int c = 0; c < mkp_constraints; ++c) {
        const auto row = weights.begin() + static_cast<std::ptrdiff_t>(c) * n;
        const double lo = *std::max_element(row, row + n);
        double hi = 0.0;
        for (int j = 0; j < n; ++j) hi += row[j];
        // Open interval (lo, hi): resample the measure-zero endpoints.
        std::uniform_real_distribution<double> dist(lo, hi);
        double cap = dist(rng);
        while (!(cap > lo && cap < hi)) cap = dist(rng);
        capacities[c] = cap;
      }
      inst = make_mkp(std::move(values), std::move(weights), std::move(capacities));
      break;
    }
    default:
      throw std::invalid_argument("generate_instance: unsupported kind");
  }
  inst.seed = seed;
  return inst;
}

bool operator==(const Instance& a, const Instance& b) {
  return a.kind == b.kind && a.n == b.n && a.seed == b.seed && a.coords == b.coords &&
         a.prize == b.prize && a.penalty == b.penalty && a.max_length == b.max_length &&
         a.min_prize == b.min_prize && a.due == b.due && a.weight == b.weight &&
         a.processing == b.processing && a.constraints == b.constraints && a.values == b.values &&
         a.weights == b.weights && a.capacities == b.capacities && a.dist == b.dist;
}

// ---- dataset files -------------------------------------------------------

namespace {

const std::string kDatasetMagic = "DACODSET";

// Field order of each instance record, published in the header for readers.
const std::vector<std::string> kFieldOrder = {
    "kind:u32", "n:u64",        "seed:u64",       "constraints:u64", "max_length:f64",
    "min_prize:f64", "coords:f64[]", "prize:f64[]", "penalty:f64[]",  "due:f64[]",
    "weight:f64[]", "processing:f64[]", "values:f64[]", "weights:f64[]", "capacities:f64[]"};

}  // namespace

std::vector<char> encode_dataset(const std::vector<Instance>& instances) {
  io::ByteWriter out;
  out.put_raw(kDatasetMagic.data(), kDatasetMagic.size());
  out.put<std::uint32_t>(kDatasetVersion);
  nlohmann::json header;
  header["count"] = instances.size();
  header["fields"] = kFieldOrder;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> kinds;
  for (const auto& inst : instances) {
    seeds.push_back(inst.seed);
    kinds.push_back(to_string(inst.kind));
  }
  header["seeds"] = seeds;
  header["kinds"] = kinds;
  out.put_string(header.dump());
  for (const auto& inst : instances) {
    out.put<std::uint32_t>(static_cast<std::uint32_t>(inst.kind));
    out.put<std::uint64_t>(static_cast<std::uint64_t>(inst.n));
    out.put<std::uint64_t>(inst.seed);
    out.put<std::uint64_t>(static_cast<std::uint64_t>(inst.constraints));
    out.put<double>(inst.max_length);
    out.put<double>(inst.min_prize);
    for (const auto* v : {&inst.coords, &inst.prize, &inst.penalty, &inst.due, &inst.weight,
                          &inst.processing, &inst.values, &inst.weights, &inst.capacities}) {
      out.put_doubles(*v);
    }
  }
  return std::move(out.bytes());
}

std::vector<Instance> decode_dataset(const std::vector<char>& bytes) {
  io::ByteReader in(bytes, "dataset");
  if (in.get_raw_string(kDatasetMagic.size()) != kDatasetMagic) throw FormatError("dataset: bad magic");
  const auto version = in.get<std::uint32_t>();
  if (version != kDatasetVersion) {
    throw FormatError("dataset: unsupported version " + std::to_string(version));
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.get_string());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset: bad header: ") + e.what());
  }
  if (header.value("fields", std::vector<std::string>{}) != kFieldOrder) {
    throw FormatError("dataset: unknown field layout");
  }
  const auto count = header.at("count").get<std::size_t>();
  std::vector<Instance> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Instance inst;
    const auto kind = in.get<std::uint32_t>();
    if (kind > static_cast<std::uint32_t>(Kind::MKP)) throw FormatError("dataset: bad kind tag");
    inst.kind = static_cast<Kind>(kind);
    inst.n = static_cast<int>(in.get<std::uint64_t>());
    inst.seed = in.get<std::uint64_t>();
    inst.constraints = static_cast<int>(in.get<std::uint64_t>());
    inst.max_length = in.get<double>();
    inst.min_prize = in.get<double>();
    for (auto* v : {&inst.coords, &inst.prize, &inst.penalty, &inst.due, &inst.weight,
                    &inst.processing, &inst.values, &inst.weights, &inst.capacities}) {
      *v = in.get_doubles();
    }
    if (inst.is_routing()) fill_distances(inst);
    out.push_back(std::move(inst));
  }
  if (!in.done()) throw FormatError("dataset: trailing bytes");
  return out;
}

void save_dataset(const std::filesystem::path& path, const std::vector<Instance>& instances) {
  io::write_file_bytes(path, encode_dataset(instances));
}

std::vector<Instance> load_dataset(const std::filesystem::path& path) {
  return decode_dataset(io::read_file_bytes(path));
}

}  // namespace deepaco::cop
