#include "optcon/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace optcon {

namespace {

using json = nlohmann::json;

class Reader {
 public:
  explicit Reader(std::string origin) : origin_(std::move(origin)) {}

  [[noreturn]] void fail(const std::string& path, const std::string& msg) const {
    throw ParseError(origin_ + ": field '" + (path.empty() ? "/" : path) + "': " + msg);
  }

  const json& require(const json& obj, const std::string& path, const char* key) const {
    if (!obj.is_object()) fail(path, "expected an object");
    const auto it = obj.find(key);
    if (it == obj.end()) fail(path + "/" + key, "missing required field");
    return *it;
  }

  const json* optional(const json& obj, const char* key) const {
    const auto it = obj.find(key);
    return it == obj.end() || it->is_null() ? nullptr : &*it;
  }

  double number(const json& j, const std::string& path) const {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
  }

  int integer(const json& j, const std::string& path) const {
    if (!j.is_number_integer()) fail(path, "expected an integer");
    return j.get<int>();
  }

  std::string string(const json& j, const std::string& path) const {
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
  }

  // Scalar -> 1x1, flat array -> one row, array of arrays -> rows.
  Matrix matrix(const json& j, const std::string& path) const {
    if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
    if (!j.is_array() || j.empty()) fail(path, "expected a number or a non-empty array");
    if (j[0].is_number()) {
      Matrix m(1, static_cast<Eigen::Index>(j.size()));
      for (std::size_t c = 0; c < j.size(); ++c) m(0, c) = number(j[c], path + "/" + std::to_string(c));
      return m;
    }
    const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
    if (cols == 0) fail(path, "rows must be non-empty arrays of numbers");
    Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < j.size(); ++r) {
      const std::string rp = path + "/" + std::to_string(r);
      if (!j[r].is_array() || j[r].size() != cols) fail(rp, "ragged matrix row");
      for (std::size_t c = 0; c < cols; ++c) m(r, c) = number(j[r][c], rp + "/" + std::to_string(c));
    }
    return m;
  }

  // A list of matrices is an array whose entries are themselves matrices
  // (array of arrays of arrays, or array of flat arrays with one entry per agent).
  static bool is_matrix_list(const json& j) {
    return j.is_array() && !j.empty() && j[0].is_array() && !j[0].empty() && j[0][0].is_array();
  }

  // Scalar q means q·I.
  Matrix weight(const json& j, int dim, const std::string& path) const {
    if (j.is_number()) return j.get<double>() * Matrix::Identity(dim, dim);
    return matrix(j, path);
  }

  Vector vector(const json& j, const std::string& path) const {
    if (j.is_number()) return Vector::Constant(1, j.get<double>());
    if (!j.is_array() || j.empty()) fail(path, "expected a number or a non-empty array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(i) = number(j[i], path + "/" + std::to_string(i));
    return v;
  }

  std::vector<Vector> vectors(const json& j, const std::string& path) const {
    if (!j.is_array()) fail(path, "expected an array with one entry per agent");
    std::vector<Vector> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(vector(j[i], path + "/" + std::to_string(i)));
    return out;
  }

  std::vector<std::vector<int>> index_lists(const json& j, int lo, int hi, const std::string& path) const {
    if (!j.is_array()) fail(path, "expected an array with one list per agent");
    std::vector<std::vector<int>> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
      const std::string ip = path + "/" + std::to_string(i);
      if (!j[i].is_array()) fail(ip, "expected an array of 1-based indices");
      std::vector<int> list;
      for (std::size_t r = 0; r < j[i].size(); ++r) {
        const int v = integer(j[i][r], ip + "/" + std::to_string(r));
        if (v < lo || v > hi) {
          std::ostringstream os;
          os << "index " << v << " outside [" << lo << ", " << hi << "]";
          fail(ip + "/" + std::to_string(r), os.str());
        }
        list.push_back(v - 1);
      }
      out.push_back(std::move(list));
    }
    return out;
  }

 private:
  std::string origin_;
};

const std::set<std::string> kTopLevel{
    "name",    "description", "inferred",      "dynamics",          "graph",       "weights",
    "measurement_plan", "methods", "horizon",  "x0",                "observer_init", "synthesis",
    "baseline", "report_steps", "consensus_threshold", "cost_steps"};

Matrix parse_graph(const Reader& rd, const json& g) {
  if (!g.is_object()) rd.fail("/graph", "expected an object");
  if (const json* adj = rd.optional(g, "adjacency")) return rd.matrix(*adj, "/graph/adjacency");
  const json& nb = rd.require(g, "/graph", "neighbors");
  if (!nb.is_array()) rd.fail("/graph/neighbors", "expected one neighbor list per agent");
  const int N = static_cast<int>(nb.size());
  const auto lists = rd.index_lists(nb, 1, std::max(N, 1), "/graph/neighbors");
  Matrix a = Matrix::Zero(N, N);
  for (int i = 0; i < N; ++i) {
    for (int j : lists[i]) {
      if (j == i) rd.fail("/graph/neighbors/" + std::to_string(i), "self loop");
      a(i, j) = 1.0;
    }
  }
  if (const json* w = rd.optional(g, "weight")) a *= rd.number(*w, "/graph/weight");
  return a;
}

}  // namespace

bool ScenarioSpec::wants(Method m) const {
  return std::find(methods.begin(), methods.end(), m) != methods.end();
}

std::optional<std::vector<Matrix>> ScenarioSpec::error_measurement_plan(const EdgeLedger& ledger) const {
  if (!measured_blocks) return std::nullopt;
  std::vector<Matrix> out;
  for (const auto& blocks : *measured_blocks) {
    for (int b : blocks) {
      if (b >= ledger.size()) throw DimensionError("measurement_plan H: block index exceeds the edge count");
    }
    out.push_back(block_selector(blocks, ledger.size(), ledger.state_dim));
  }
  return out;
}

std::optional<std::vector<Matrix>> ScenarioSpec::state_measurement_plan() const {
  if (!measured_agents) return std::nullopt;
  std::vector<Matrix> out;
  for (const auto& agents : *measured_agents) {
    out.push_back(block_selector(agents, num_agents(), dynamics.state_dim()));
  }
  return out;
}

SimulationConfig ScenarioSpec::simulation_config(Method m) const {
  SimulationConfig cfg;
  cfg.method = m;
  cfg.horizon = horizon;
  cfg.x0 = x0;
  cfg.observer_start = observer_start;
  if (observer_start == ObserverStart::kGiven) {
    cfg.observer_init = m == Method::kDistributedState ? observer_init_state : observer_init_error;
    if (cfg.observer_init.empty() && uses_observers(m)) cfg.observer_start = ObserverStart::kZero;
  }
  return cfg;
}

ScenarioSpec parse_scenario(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(origin + ": " + e.what());
  }
  const Reader rd(origin);
  if (!root.is_object()) rd.fail("", "top level must be an object");
  for (const auto& [key, _] : root.items()) {
    if (!kTopLevel.count(key)) rd.fail("/" + key, "unknown field");
  }

  ScenarioSpec spec;
  if (const json* n = rd.optional(root, "name")) spec.name = rd.string(*n, "/name");
  if (const json* d = rd.optional(root, "description")) spec.description = rd.string(*d, "/description");
  if (const json* inf = rd.optional(root, "inferred")) {
    if (!inf->is_array()) rd.fail("/inferred", "expected an array of field names");
    for (std::size_t i = 0; i < inf->size(); ++i) {
      spec.inferred.push_back(rd.string((*inf)[i], "/inferred/" + std::to_string(i)));
    }
  }

  // Graph first: it fixes N.
  spec.adjacency = parse_graph(rd, rd.require(root, "", "graph"));
  try {
    (void)spec.graph();
  } catch (const InvalidArgument& e) {
    rd.fail("/graph", e.what());
  }
  const int N = static_cast<int>(spec.adjacency.rows());

  const json& dyn = rd.require(root, "", "dynamics");
  spec.dynamics.A = rd.matrix(rd.require(dyn, "/dynamics", "A"), "/dynamics/A");
  const json& jb = rd.require(dyn, "/dynamics", "B");
  if (Reader::is_matrix_list(jb)) {
    for (std::size_t i = 0; i < jb.size(); ++i) {
      spec.dynamics.B.push_back(rd.matrix(jb[i], "/dynamics/B/" + std::to_string(i)));
    }
    if (static_cast<int>(spec.dynamics.B.size()) != N) {
      rd.fail("/dynamics/B", "per-agent list length differs from the number of agents");
    }
  } else {
    spec.dynamics.B.assign(N, rd.matrix(jb, "/dynamics/B"));
  }
  spec.dynamics.validate();
  const int n = spec.dynamics.state_dim();

  const json& w = rd.require(root, "", "weights");
  spec.weights.Q = rd.weight(rd.require(w, "/weights", "Q"), n, "/weights/Q");
  // R: number (r·I for everyone), flat array (one scalar per agent), matrix
  // (shared), or list of matrices (per agent).
  const json& jr = rd.require(w, "/weights", "R");
  if (Reader::is_matrix_list(jr) || (jr.is_array() && !jr.empty() && jr[0].is_number())) {
    if (static_cast<int>(jr.size()) != N) rd.fail("/weights/R", "per-agent list length differs from the number of agents");
    for (int i = 0; i < N; ++i) {
      spec.weights.R.push_back(rd.weight(jr[i], spec.dynamics.input_dim(i), "/weights/R/" + std::to_string(i)));
    }
  } else {
    for (int i = 0; i < N; ++i) spec.weights.R.push_back(rd.weight(jr, spec.dynamics.input_dim(i), "/weights/R"));
  }
  if (const json* qs = rd.optional(w, "Q_state")) {
    spec.weights.state_weight = rd.weight(*qs, n * N, "/weights/Q_state");
  }
  spec.weights.validate(spec.dynamics);

  if (const json* mp = rd.optional(root, "measurement_plan")) {
    if (!mp->is_object()) rd.fail("/measurement_plan", "expected an object with H and/or C");
    int edges = 0;
    for (Eigen::Index i = 0; i < N; ++i) {
      for (Eigen::Index j = 0; j < N; ++j) edges += spec.adjacency(i, j) != 0.0;
    }
    if (const json* h = rd.optional(*mp, "H")) {
      spec.measured_blocks = rd.index_lists(*h, 1, edges, "/measurement_plan/H");
      if (static_cast<int>(spec.measured_blocks->size()) != N) {
        rd.fail("/measurement_plan/H", "expected one block list per agent");
      }
    }
    if (const json* c = rd.optional(*mp, "C")) {
      spec.measured_agents = rd.index_lists(*c, 1, N, "/measurement_plan/C");
      if (static_cast<int>(spec.measured_agents->size()) != N) {
        rd.fail("/measurement_plan/C", "expected one agent list per agent");
      }
    }
  }

  const json& jm = rd.require(root, "", "methods");
  if (!jm.is_array() || jm.empty()) rd.fail("/methods", "expected a non-empty array of method names");
  for (std::size_t i = 0; i < jm.size(); ++i) {
    const std::string p = "/methods/" + std::to_string(i);
    try {
      const Method m = parse_method(rd.string(jm[i], p));
      if (spec.wants(m)) rd.fail(p, "duplicate method");
      spec.methods.push_back(m);
    } catch (const InvalidArgument& e) {
      rd.fail(p, e.what());
    }
  }

  if (const json* h = rd.optional(root, "horizon")) {
    spec.horizon = rd.integer(*h, "/horizon");
    if (spec.horizon < 1) rd.fail("/horizon", "must be >= 1");
  }

  spec.x0 = rd.vectors(rd.require(root, "", "x0"), "/x0");
  if (static_cast<int>(spec.x0.size()) != N) rd.fail("/x0", "expected one initial state per agent");
  for (int i = 0; i < N; ++i) {
    if (spec.x0[i].size() != n) {
      throw DimensionError("x0[" + std::to_string(i) + "]: expected length " + std::to_string(n));
    }
  }

  if (const json* oi = rd.optional(root, "observer_init")) {
    if (oi->is_string()) {
      const std::string s = oi->get<std::string>();
      if (s == "zero") {
        spec.observer_start = ObserverStart::kZero;
      } else if (s == "truth") {
        spec.observer_start = ObserverStart::kTruth;
      } else {
        rd.fail("/observer_init", "expected \"zero\", \"truth\" or an object");
      }
    } else if (oi->is_object()) {
      spec.observer_start = ObserverStart::kGiven;
      if (const json* e = rd.optional(*oi, "error")) {
        spec.observer_init_error = rd.vectors(*e, "/observer_init/error");
      }
      if (const json* s = rd.optional(*oi, "state")) {
        spec.observer_init_state = rd.vectors(*s, "/observer_init/state");
      }
    } else {
      rd.fail("/observer_init", "expected \"zero\", \"truth\" or an object");
    }
  }

  if (const json* sy = rd.optional(root, "synthesis")) {
    if (!sy->is_object()) rd.fail("/synthesis", "expected an object");
    if (const json* v = rd.optional(*sy, "max_iters")) spec.synthesis.max_iters = rd.integer(*v, "/synthesis/max_iters");
    if (const json* v = rd.optional(*sy, "tol")) spec.synthesis.tol = rd.number(*v, "/synthesis/tol");
    if (const json* v = rd.optional(*sy, "patience")) spec.synthesis.patience = rd.integer(*v, "/synthesis/patience");
    if (const json* v = rd.optional(*sy, "seed")) {
      if (!v->is_number_unsigned()) rd.fail("/synthesis/seed", "expected a non-negative integer");
      spec.synthesis.seed = v->get<std::uint64_t>();
    }
    if (const json* v = rd.optional(*sy, "direction")) {
      const std::string d = rd.string(*v, "/synthesis/direction");
      if (d == "quasi_newton") {
        spec.synthesis.direction = SearchDirection::kQuasiNewton;
      } else if (d == "subgradient") {
        spec.synthesis.direction = SearchDirection::kSubgradient;
      } else {
        rd.fail("/synthesis/direction", "expected \"quasi_newton\" or \"subgradient\"");
      }
    }
    if (spec.synthesis.max_iters < 1) rd.fail("/synthesis/max_iters", "must be >= 1");
    if (!(spec.synthesis.tol > 0.0)) rd.fail("/synthesis/tol", "must be positive");
    if (spec.synthesis.patience < 1) rd.fail("/synthesis/patience", "must be >= 1");
  }

  if (const json* b = rd.optional(root, "baseline")) {
    if (!b->is_object()) rd.fail("/baseline", "expected an object");
    if (const json* f = rd.optional(*b, "F")) spec.baseline_F = rd.matrix(*f, "/baseline/F");
    if (const json* r = rd.optional(*b, "R0")) {
      spec.baseline_R0 = rd.weight(*r, spec.dynamics.input_dim(0), "/baseline/R0");
    }
  }

  if (const json* rs = rd.optional(root, "report_steps")) {
    if (!rs->is_array()) rd.fail("/report_steps", "expected an array of 1-based step labels");
    for (std::size_t i = 0; i < rs->size(); ++i) {
      const std::string p = "/report_steps/" + std::to_string(i);
      const int s = rd.integer((*rs)[i], p);
      if (s < 1 || s > spec.horizon + 1) rd.fail(p, "step outside 1..horizon+1");
      spec.report_steps.push_back(s);
    }
  } else {
    spec.report_steps.push_back(1);
    for (int s = 2; s <= std::min(20, spec.horizon + 1); s += 2) spec.report_steps.push_back(s);
  }

  if (const json* t = rd.optional(root, "consensus_threshold")) {
    spec.consensus_threshold = rd.number(*t, "/consensus_threshold");
    if (!(spec.consensus_threshold > 0.0)) rd.fail("/consensus_threshold", "must be positive");
  }
  if (const json* c = rd.optional(root, "cost_steps")) {
    spec.cost_steps = rd.integer(*c, "/cost_steps");
    if (spec.cost_steps < 0) rd.fail("/cost_steps", "must be >= 0");
  }
  return spec;
}

ScenarioSpec load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open scenario file");
  std::ostringstream os;
  os << in.rdbuf();
  return parse_scenario(os.str(), path.string());
}

}  // namespace optcon
