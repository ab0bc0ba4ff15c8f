#include "refield/config_io.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

namespace refield {

using nlohmann::json;

namespace {

constexpr int kConfigVersion = 1;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config error at " + (path.empty() ? "<root>" : path) + ": " + what);
}

const json& expect(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) fail(path, std::string("missing key '") + key + "'");
  return *it;
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key)) fail(path, "unknown key '" + key + "'");
  }
}

double num(const json& j, const char* key, const std::string& path) {
  const json& v = expect(j, key, path);
  if (!v.is_number()) fail(path + "." + key, "expected a number");
  return v.get<double>();
}

int integer(const json& j, const char* key, const std::string& path) {
  const json& v = expect(j, key, path);
  if (!v.is_number_integer()) fail(path + "." + key, "expected an integer");
  return v.get<int>();
}

bool boolean(const json& j, const char* key, const std::string& path) {
  const json& v = expect(j, key, path);
  if (!v.is_boolean()) fail(path + "." + key, "expected a boolean");
  return v.get<bool>();
}

json vec_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

json mat_to_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

Eigen::VectorXd vec_from_json(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array");
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail(path, "expected numeric entries");
    v[i] = j[i].get<double>();
  }
  return v;
}

Eigen::MatrixXd mat_from_json(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of rows");
  if (j.empty()) return Eigen::MatrixXd();
  size_t cols = j[0].is_array() ? j[0].size() : 0;
  Eigen::MatrixXd m(j.size(), cols);
  for (size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) fail(path, "ragged matrix rows");
    for (size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

json graph_to_json(const WeightedGraph& g) {
  json edges = json::array();
  for (const auto& [i, j] : g.edges) edges.push_back(json::array({i, j}));
  return json{{"node_count", g.node_count}, {"edges", edges}, {"weights", vec_to_json(g.weights)}};
}

WeightedGraph graph_from_json(const json& j, const std::string& path) {
  reject_unknown(j, {"node_count", "edges", "weights"}, path);
  int n = integer(j, "node_count", path);
  const json& ej = expect(j, "edges", path);
  std::vector<std::pair<int, int>> edges;
  for (const auto& e : ej) {
    if (!e.is_array() || e.size() != 2) fail(path + ".edges", "edges must be [i, j] pairs");
    edges.emplace_back(e[0].get<int>(), e[1].get<int>());
  }
  Eigen::VectorXd w = vec_from_json(expect(j, "weights", path), path + ".weights");
  try {
    return WeightedGraph(n, std::move(edges), std::move(w));
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
}

json tanh_map_to_json(const TanhLinearMap& m) {
  return json{{"W", mat_to_json(m.W)}, {"b", vec_to_json(m.b)}, {"gain", m.gain}};
}

TanhLinearMap tanh_map_from_json(const json& j, const std::string& path) {
  reject_unknown(j, {"W", "b", "gain"}, path);
  TanhLinearMap m;
  m.W = mat_from_json(expect(j, "W", path), path + ".W");
  m.b = vec_from_json(expect(j, "b", path), path + ".b");
  m.gain = num(j, "gain", path);
  return m;
}

json gate_to_json(const GateSpec& g) {
  const char* src = g.source == GateSpec::Source::valuative
                        ? "valuative"
                        : g.source == GateSpec::Source::executive ? "executive" : "none";
  return json{{"k_base", g.k_base}, {"sigma", g.sigma}, {"source", src}, {"w", vec_to_json(g.w)}};
}

GateSpec gate_from_json(const json& j, const std::string& path) {
  reject_unknown(j, {"k_base", "sigma", "source", "w"}, path);
  GateSpec g;
  g.k_base = num(j, "k_base", path);
  g.sigma = num(j, "sigma", path);
  std::string src = expect(j, "source", path).get<std::string>();
  if (src == "valuative")
    g.source = GateSpec::Source::valuative;
  else if (src == "executive")
    g.source = GateSpec::Source::executive;
  else if (src == "none")
    g.source = GateSpec::Source::none;
  else
    fail(path + ".source", "must be one of none|valuative|executive");
  g.w = vec_from_json(expect(j, "w", path), path + ".w");
  return g;
}

json dims_to_json(const KernelDims& d) {
  return json{{"T", d.T}, {"V", d.V}, {"d_L", d.d_L}, {"d_R", d.d_R}};
}

KernelDims dims_from_json(const json& j, const std::string& path) {
  reject_unknown(j, {"T", "V", "d_L", "d_R"}, path);
  return {integer(j, "T", path), integer(j, "V", path), integer(j, "d_L", path),
          integer(j, "d_R", path)};
}

json low_rank_channel_to_json(const LowRankChannel& c) {
  return json{{"a", vec_to_json(c.a)}, {"b", vec_to_json(c.b)}, {"A", mat_to_json(c.A)}};
}

LowRankChannel low_rank_channel_from_json(const json& j, const std::string& path) {
  reject_unknown(j, {"a", "b", "A"}, path);
  LowRankChannel c;
  c.a = vec_from_json(expect(j, "a", path), path + ".a");
  c.b = vec_from_json(expect(j, "b", path), path + ".b");
  c.A = mat_from_json(expect(j, "A", path), path + ".A");
  return c;
}

}  // namespace

json kernel_to_json(const CouplingKernel& k) {
  json out;
  out["family"] = k.family_name();
  struct Visitor {
    json& out;
    void operator()(const FixedBlocksKernel& f) const {
      out["dims"] = dims_to_json(f.dims);
      out["blocks"] = mat_to_json(f.blocks);
    }
    void operator()(const ConstantSharedKernel& f) const {
      out["dims"] = dims_to_json(f.dims);
      out["W"] = mat_to_json(f.W);
    }
    void operator()(const AttentionKernel& f) const {
      out["dims"] = dims_to_json(f.dims);
      out["W_V"] = mat_to_json(f.W_V);
      out["W_Q"] = mat_to_json(f.W_Q);
      out["W_K"] = mat_to_json(f.W_K);
      out["C_W"] = f.C_W;
    }
    void operator()(const LowRankKernel& f) const {
      out["dims"] = dims_to_json(f.dims);
      json ch = json::array();
      for (const auto& c : f.channels) ch.push_back(low_rank_channel_to_json(c));
      out["channels"] = ch;
    }
    void operator()(const GatedMixtureKernel& f) const {
      json gb = json::array();
      for (double g : f.gate_bounds) gb.push_back(g);
      out["gate_bounds"] = gb;
      json ch = json::array();
      for (const auto& c : f.channels) ch.push_back(kernel_to_json(c));
      out["channels"] = ch;
    }
    void operator()(const LowRankGatedAttentionKernel& f) const {
      out["dims"] = dims_to_json(f.dims);
      json gb = json::array();
      for (double g : f.gate_bounds) gb.push_back(g);
      out["gate_bounds"] = gb;
      json ch = json::array();
      for (const auto& c : f.channels) ch.push_back(low_rank_channel_to_json(c));
      out["channels"] = ch;
    }
  };
  std::visit(Visitor{out}, k.family);
  return out;
}

CouplingKernel kernel_from_json(const json& j, const std::string& path) {
  std::string family = expect(j, "family", path).get<std::string>();
  CouplingKernel k;
  if (family == "fixed_blocks") {
    reject_unknown(j, {"family", "dims", "blocks"}, path);
    FixedBlocksKernel f;
    f.dims = dims_from_json(expect(j, "dims", path), path + ".dims");
    f.blocks = mat_from_json(expect(j, "blocks", path), path + ".blocks");
    k.family = f;
  } else if (family == "constant_shared") {
    reject_unknown(j, {"family", "dims", "W"}, path);
    ConstantSharedKernel f;
    f.dims = dims_from_json(expect(j, "dims", path), path + ".dims");
    f.W = mat_from_json(expect(j, "W", path), path + ".W");
    k.family = f;
  } else if (family == "attention_weighted") {
    reject_unknown(j, {"family", "dims", "W_V", "W_Q", "W_K", "C_W"}, path);
    AttentionKernel f;
    f.dims = dims_from_json(expect(j, "dims", path), path + ".dims");
    f.W_V = mat_from_json(expect(j, "W_V", path), path + ".W_V");
    f.W_Q = mat_from_json(expect(j, "W_Q", path), path + ".W_Q");
    f.W_K = mat_from_json(expect(j, "W_K", path), path + ".W_K");
    f.C_W = num(j, "C_W", path);
    k.family = f;
  } else if (family == "low_rank") {
    reject_unknown(j, {"family", "dims", "channels"}, path);
    LowRankKernel f;
    f.dims = dims_from_json(expect(j, "dims", path), path + ".dims");
    for (const auto& c : expect(j, "channels", path))
      f.channels.push_back(low_rank_channel_from_json(c, path + ".channels[]"));
    k.family = f;
  } else if (family == "gated_mixture") {
    reject_unknown(j, {"family", "gate_bounds", "channels"}, path);
    GatedMixtureKernel f;
    for (const auto& g : expect(j, "gate_bounds", path)) f.gate_bounds.push_back(g.get<double>());
    for (const auto& c : expect(j, "channels", path))
      f.channels.push_back(kernel_from_json(c, path + ".channels[]"));
    k.family = f;
  } else if (family == "low_rank_gated_attention") {
    reject_unknown(j, {"family", "dims", "gate_bounds", "channels"}, path);
    LowRankGatedAttentionKernel f;
    f.dims = dims_from_json(expect(j, "dims", path), path + ".dims");
    for (const auto& g : expect(j, "gate_bounds", path)) f.gate_bounds.push_back(g.get<double>());
    for (const auto& c : expect(j, "channels", path))
      f.channels.push_back(low_rank_channel_from_json(c, path + ".channels[]"));
    k.family = f;
  } else {
    fail(path + ".family", "unknown kernel family '" + family + "'");
  }
  return k;
}

json state_to_json(const StateVector& z) {
  json zt = json::array(), th = json::array();
  for (const auto& v : z.z) zt.push_back(vec_to_json(v));
  for (const auto& v : z.theta) th.push_back(vec_to_json(v));
  return json{{"H_L", mat_to_json(z.H_L)},     {"X_R", mat_to_json(z.X_R)},
              {"Q_L", vec_to_json(z.Q_L)},     {"W_R", vec_to_json(z.W_R)},
              {"R_Theta", mat_to_json(z.R_Theta)}, {"Y", vec_to_json(z.Y)},
              {"P", vec_to_json(z.P)},         {"M", vec_to_json(z.M)},
              {"rho", vec_to_json(z.rho)},     {"z", zt},
              {"theta", th}};
}

StateVector state_from_json(const json& j, const ArchitectureConfig& cfg) {
  const std::string path = "state";
  reject_unknown(j, {"H_L", "X_R", "Q_L", "W_R", "R_Theta", "Y", "P", "M", "rho", "z", "theta"},
                 path);
  StateVector z = StateVector::zeros(cfg);
  z.H_L = mat_from_json(expect(j, "H_L", path), path + ".H_L");
  z.X_R = mat_from_json(expect(j, "X_R", path), path + ".X_R");
  z.Q_L = vec_from_json(expect(j, "Q_L", path), path + ".Q_L");
  z.W_R = vec_from_json(expect(j, "W_R", path), path + ".W_R");
  z.R_Theta = mat_from_json(expect(j, "R_Theta", path), path + ".R_Theta");
  z.Y = vec_from_json(expect(j, "Y", path), path + ".Y");
  z.P = vec_from_json(expect(j, "P", path), path + ".P");
  z.M = vec_from_json(expect(j, "M", path), path + ".M");
  z.rho = vec_from_json(expect(j, "rho", path), path + ".rho");
  z.z.clear();
  for (const auto& v : expect(j, "z", path)) z.z.push_back(vec_from_json(v, path + ".z[]"));
  z.theta.clear();
  for (const auto& v : expect(j, "theta", path))
    z.theta.push_back(vec_from_json(v, path + ".theta[]"));
  return z;
}

namespace {

json bounds_to_json(const DomainBounds& b) {
  return json{{"R_L", b.R_L}, {"R_R", b.R_R}, {"R_Y", b.R_Y}, {"R_P", b.R_P}, {"R_M", b.R_M},
              {"eps_Q", b.eps_Q}, {"R_Q", b.R_Q}, {"R_z", vec_to_json(b.R_z)},
              {"R_theta", vec_to_json(b.R_theta)}};
}

DomainBounds bounds_from_json(const json& j, const std::string& path) {
  reject_unknown(j, {"R_L", "R_R", "R_Y", "R_P", "R_M", "eps_Q", "R_Q", "R_z", "R_theta"}, path);
  DomainBounds b;
  b.R_L = num(j, "R_L", path);
  b.R_R = num(j, "R_R", path);
  b.R_Y = num(j, "R_Y", path);
  b.R_P = num(j, "R_P", path);
  b.R_M = num(j, "R_M", path);
  b.eps_Q = num(j, "eps_Q", path);
  b.R_Q = num(j, "R_Q", path);
  b.R_z = vec_from_json(expect(j, "R_z", path), path + ".R_z");
  b.R_theta = vec_from_json(expect(j, "R_theta", path), path + ".R_theta");
  return b;
}

}  // namespace

json config_to_json(const Scenario& s) {
  const ArchitectureConfig& c = s.cfg;
  const FieldParams& p = s.params;
  json arch{{"T", c.T}, {"V", c.V}, {"d_L", c.d_L}, {"d_R", c.d_R}, {"n_s", c.n_s},
            {"n_Y", c.n_Y}, {"n_P", c.n_P}, {"n_M", c.n_M}, {"n_sub", c.n_sub},
            {"n_policy", c.n_policy}, {"n_actions", c.n_actions},
            {"tau_r_to_l", c.tau_r_to_l}, {"tau_l_to_r", c.tau_l_to_r}, {"dt", c.dt},
            {"mu_L", c.mu_L}, {"mu_R", c.mu_R}, {"mu_P", c.mu_P},
            {"kappa_Y", c.kappa_Y}, {"kappa_P", c.kappa_P}, {"C_K", c.C_K},
            {"k_gain", c.k_gain}, {"sigma_alpha", c.sigma_alpha}, {"sigma_beta", c.sigma_beta},
            {"delta_Q", c.delta_Q}, {"delta_W", c.delta_W}, {"a_Y", c.a_Y}, {"a_P", c.a_P},
            {"bounds", bounds_to_json(c.bounds)}};

  json fields;
  fields["symbolic"] = json{{"alpha_H", p.symbolic.alpha_H},
                            {"offset", mat_to_json(p.symbolic.offset)},
                            {"phi", tanh_map_to_json(p.symbolic.phi)}};
  fields["geometric"] = json{{"alpha_X", p.geometric.alpha_X},
                             {"offset", mat_to_json(p.geometric.offset)},
                             {"phi_local", tanh_map_to_json(p.geometric.phi_local)},
                             {"edge_feat", vec_to_json(p.geometric.edge_feat)}};
  fields["valuative"] = json{{"kappa_Y", p.valuative.kappa_Y}, {"a_Y", p.valuative.a_Y},
                             {"w_H", mat_to_json(p.valuative.w_H)},
                             {"w_X", mat_to_json(p.valuative.w_X)},
                             {"w_P", mat_to_json(p.valuative.w_P)},
                             {"c_H", vec_to_json(p.valuative.c_H)},
                             {"c_X", vec_to_json(p.valuative.c_X)},
                             {"w_h", mat_to_json(p.valuative.w_h)},
                             {"w_aux", mat_to_json(p.valuative.w_aux)}};
  fields["executive"] = json{{"kappa_P", p.executive.kappa_P},
                             {"W_P", mat_to_json(p.executive.W_P)},
                             {"a_P", p.executive.a_P},
                             {"w_H", mat_to_json(p.executive.w_H)},
                             {"w_X", mat_to_json(p.executive.w_X)},
                             {"w_Y", mat_to_json(p.executive.w_Y)},
                             {"c_H", vec_to_json(p.executive.c_H)},
                             {"c_X", vec_to_json(p.executive.c_X)},
                             {"w_dtheta", mat_to_json(p.executive.w_dtheta)}};
  fields["neuromod"] = json{{"W", mat_to_json(p.neuromod.W)}, {"b", vec_to_json(p.neuromod.b)}};
  fields["precision"] = json{{"mode", p.precision.mode == PrecisionMode::logistic ? "logistic"
                                                                                  : "scalar_gate"},
                             {"a_logits", vec_to_json(p.precision.a_logits)},
                             {"b_logits", vec_to_json(p.precision.b_logits)},
                             {"delta_Q", p.precision.delta_Q},
                             {"w_gate", vec_to_json(p.precision.w_gate)}};
  fields["awareness"] = json{{"mode", p.awareness.mode == AwarenessMode::sparsemax_logits
                                          ? "sparsemax_logits"
                                          : "scalar_gate"},
                             {"omega_base", vec_to_json(p.awareness.omega_base)},
                             {"omega_x_scale", p.awareness.omega_x_scale},
                             {"ne_shift", vec_to_json(p.awareness.ne_shift)},
                             {"overlay_scale", p.awareness.overlay_scale},
                             {"delta_W", p.awareness.delta_W},
                             {"w_gate", vec_to_json(p.awareness.w_gate)}};
  fields["memory"] = json{{"eps_M", p.memory.eps_M}, {"gate_rate", p.memory.gate_rate},
                          {"w_gate", vec_to_json(p.memory.w_gate)}, {"C_M", p.memory.C_M},
                          {"phi", tanh_map_to_json(p.memory.phi)},
                          {"c_in", vec_to_json(p.memory.c_in)}};
  fields["policy"] = json{{"lambda_z", vec_to_json(p.policy.lambda_z)},
                          {"eta", vec_to_json(p.policy.eta)},
                          {"lambda_reg", p.policy.lambda_reg}, {"D", p.policy.D},
                          {"signed_delta", p.policy.signed_delta},
                          {"eps_floor", p.policy.eps_floor}};
  const char* rk = p.reliability.kernel == ReliabilityKernelKind::gaussian
                       ? "gaussian"
                       : p.reliability.kernel == ReliabilityKernelKind::inverse ? "inverse" : "tent";
  fields["reliability"] = json{{"rate", p.reliability.rate}, {"kernel", rk},
                               {"tent_sigma", p.reliability.tent_sigma}};
  fields["homeostat"] = json{{"kappa_h", p.homeostat.kappa_h}, {"B_u", p.homeostat.B_u},
                             {"n_u", p.homeostat.n_u}};
  fields["routing"] = json{{"base_scores", mat_to_json(p.routing.base_scores)},
                           {"beta_rho", p.routing.beta_rho}, {"w_sal_h", p.routing.w_sal_h},
                           {"w_sal_x", p.routing.w_sal_x}, {"relax_rate", p.routing.relax_rate}};
  json gf = json::array(), ga = json::array();
  for (const auto& g : p.gates_fwd) gf.push_back(gate_to_json(g));
  for (const auto& g : p.gates_adj) ga.push_back(gate_to_json(g));
  fields["gates_fwd"] = gf;
  fields["gates_adj"] = ga;
  fields["frozen_auxiliaries"] = p.frozen_auxiliaries;

  json out{{"version", kConfigVersion},
           {"name", s.name},
           {"architecture", arch},
           {"graphs", json{{"symbolic", graph_to_json(c.g_symbolic)},
                           {"geometric", graph_to_json(c.g_geometric)}}},
           {"kernel", kernel_to_json(c.kernel)},
           {"fields", fields}};
  if (p.frozen_values) out["equilibrium"] = state_to_json(*p.frozen_values);
  return out;
}

Scenario config_from_json(const json& j) {
  reject_unknown(j, {"version", "name", "architecture", "graphs", "kernel", "fields",
                     "equilibrium"}, "");
  int version = integer(j, "version", "");
  if (version != kConfigVersion) fail("version", "unsupported config version");

  Scenario s;
  s.name = j.contains("name") ? expect(j, "name", "").get<std::string>() : "config";
  ArchitectureConfig& c = s.cfg;
  const json& arch = expect(j, "architecture", "");
  reject_unknown(arch,
                 {"T", "V", "d_L", "d_R", "n_s", "n_Y", "n_P", "n_M", "n_sub", "n_policy",
                  "n_actions", "tau_r_to_l", "tau_l_to_r", "dt", "mu_L", "mu_R", "mu_P",
                  "kappa_Y", "kappa_P", "C_K", "k_gain", "sigma_alpha", "sigma_beta", "delta_Q",
                  "delta_W", "a_Y", "a_P", "bounds"},
                 "architecture");
  c.T = integer(arch, "T", "architecture");
  c.V = integer(arch, "V", "architecture");
  c.d_L = integer(arch, "d_L", "architecture");
  c.d_R = integer(arch, "d_R", "architecture");
  c.n_s = integer(arch, "n_s", "architecture");
  c.n_Y = integer(arch, "n_Y", "architecture");
  c.n_P = integer(arch, "n_P", "architecture");
  c.n_M = integer(arch, "n_M", "architecture");
  c.n_sub = integer(arch, "n_sub", "architecture");
  c.n_policy = integer(arch, "n_policy", "architecture");
  c.n_actions = integer(arch, "n_actions", "architecture");
  c.tau_r_to_l = num(arch, "tau_r_to_l", "architecture");
  c.tau_l_to_r = num(arch, "tau_l_to_r", "architecture");
  c.dt = num(arch, "dt", "architecture");
  c.mu_L = num(arch, "mu_L", "architecture");
  c.mu_R = num(arch, "mu_R", "architecture");
  c.mu_P = num(arch, "mu_P", "architecture");
  c.kappa_Y = num(arch, "kappa_Y", "architecture");
  c.kappa_P = num(arch, "kappa_P", "architecture");
  c.C_K = num(arch, "C_K", "architecture");
  c.k_gain = num(arch, "k_gain", "architecture");
  c.sigma_alpha = num(arch, "sigma_alpha", "architecture");
  c.sigma_beta = num(arch, "sigma_beta", "architecture");
  c.delta_Q = num(arch, "delta_Q", "architecture");
  c.delta_W = num(arch, "delta_W", "architecture");
  c.a_Y = num(arch, "a_Y", "architecture");
  c.a_P = num(arch, "a_P", "architecture");
  c.bounds = bounds_from_json(expect(arch, "bounds", "architecture"), "architecture.bounds");

  const json& graphs = expect(j, "graphs", "");
  reject_unknown(graphs, {"symbolic", "geometric"}, "graphs");
  c.g_symbolic = graph_from_json(expect(graphs, "symbolic", "graphs"), "graphs.symbolic");
  c.g_geometric = graph_from_json(expect(graphs, "geometric", "graphs"), "graphs.geometric");
  c.kernel = kernel_from_json(expect(j, "kernel", ""), "kernel");

  const json& f = expect(j, "fields", "");
  reject_unknown(f,
                 {"symbolic", "geometric", "valuative", "executive", "neuromod", "precision",
                  "awareness", "memory", "policy", "reliability", "homeostat", "routing",
                  "gates_fwd", "gates_adj", "frozen_auxiliaries"},
                 "fields");
  FieldParams& p = s.params;
  {
    const json& v = expect(f, "symbolic", "fields");
    reject_unknown(v, {"alpha_H", "offset", "phi"}, "fields.symbolic");
    p.symbolic.alpha_H = num(v, "alpha_H", "fields.symbolic");
    p.symbolic.offset = mat_from_json(expect(v, "offset", "fields.symbolic"), "fields.symbolic.offset");
    p.symbolic.phi = tanh_map_from_json(expect(v, "phi", "fields.symbolic"), "fields.symbolic.phi");
  }
  {
    const json& v = expect(f, "geometric", "fields");
    reject_unknown(v, {"alpha_X", "offset", "phi_local", "edge_feat"}, "fields.geometric");
    p.geometric.alpha_X = num(v, "alpha_X", "fields.geometric");
    p.geometric.offset =
        mat_from_json(expect(v, "offset", "fields.geometric"), "fields.geometric.offset");
    p.geometric.phi_local =
        tanh_map_from_json(expect(v, "phi_local", "fields.geometric"), "fields.geometric.phi_local");
    p.geometric.edge_feat =
        vec_from_json(expect(v, "edge_feat", "fields.geometric"), "fields.geometric.edge_feat");
  }
  {
    const json& v = expect(f, "valuative", "fields");
    reject_unknown(v, {"kappa_Y", "a_Y", "w_H", "w_X", "w_P", "c_H", "c_X", "w_h", "w_aux"},
                   "fields.valuative");
    p.valuative.kappa_Y = num(v, "kappa_Y", "fields.valuative");
    p.valuative.a_Y = num(v, "a_Y", "fields.valuative");
    p.valuative.w_H = mat_from_json(expect(v, "w_H", "fields.valuative"), "fields.valuative.w_H");
    p.valuative.w_X = mat_from_json(expect(v, "w_X", "fields.valuative"), "fields.valuative.w_X");
    p.valuative.w_P = mat_from_json(expect(v, "w_P", "fields.valuative"), "fields.valuative.w_P");
    p.valuative.c_H = vec_from_json(expect(v, "c_H", "fields.valuative"), "fields.valuative.c_H");
    p.valuative.c_X = vec_from_json(expect(v, "c_X", "fields.valuative"), "fields.valuative.c_X");
    p.valuative.w_h = mat_from_json(expect(v, "w_h", "fields.valuative"), "fields.valuative.w_h");
    p.valuative.w_aux =
        mat_from_json(expect(v, "w_aux", "fields.valuative"), "fields.valuative.w_aux");
  }
  {
    const json& v = expect(f, "executive", "fields");
    reject_unknown(v, {"kappa_P", "W_P", "a_P", "w_H", "w_X", "w_Y", "c_H", "c_X", "w_dtheta"},
                   "fields.executive");
    p.executive.kappa_P = num(v, "kappa_P", "fields.executive");
    p.executive.W_P = mat_from_json(expect(v, "W_P", "fields.executive"), "fields.executive.W_P");
    p.executive.a_P = num(v, "a_P", "fields.executive");
    p.executive.w_H = mat_from_json(expect(v, "w_H", "fields.executive"), "fields.executive.w_H");
    p.executive.w_X = mat_from_json(expect(v, "w_X", "fields.executive"), "fields.executive.w_X");
    p.executive.w_Y = mat_from_json(expect(v, "w_Y", "fields.executive"), "fields.executive.w_Y");
    p.executive.c_H = vec_from_json(expect(v, "c_H", "fields.executive"), "fields.executive.c_H");
    p.executive.c_X = vec_from_json(expect(v, "c_X", "fields.executive"), "fields.executive.c_X");
    p.executive.w_dtheta =
        mat_from_json(expect(v, "w_dtheta", "fields.executive"), "fields.executive.w_dtheta");
  }
  {
    const json& v = expect(f, "neuromod", "fields");
    reject_unknown(v, {"W", "b"}, "fields.neuromod");
    p.neuromod.W = mat_from_json(expect(v, "W", "fields.neuromod"), "fields.neuromod.W");
    p.neuromod.b = vec_from_json(expect(v, "b", "fields.neuromod"), "fields.neuromod.b");
  }
  {
    const json& v = expect(f, "precision", "fields");
    reject_unknown(v, {"mode", "a_logits", "b_logits", "delta_Q", "w_gate"}, "fields.precision");
    std::string mode = expect(v, "mode", "fields.precision").get<std::string>();
    if (mode == "logistic")
      p.precision.mode = PrecisionMode::logistic;
    else if (mode == "scalar_gate")
      p.precision.mode = PrecisionMode::scalar_gate;
    else
      fail("fields.precision.mode", "must be logistic|scalar_gate");
    p.precision.a_logits =
        vec_from_json(expect(v, "a_logits", "fields.precision"), "fields.precision.a_logits");
    p.precision.b_logits =
        vec_from_json(expect(v, "b_logits", "fields.precision"), "fields.precision.b_logits");
    p.precision.delta_Q = num(v, "delta_Q", "fields.precision");
    p.precision.w_gate =
        vec_from_json(expect(v, "w_gate", "fields.precision"), "fields.precision.w_gate");
  }
  {
    const json& v = expect(f, "awareness", "fields");
    reject_unknown(v, {"mode", "omega_base", "omega_x_scale", "ne_shift", "overlay_scale",
                       "delta_W", "w_gate"},
                   "fields.awareness");
    std::string mode = expect(v, "mode", "fields.awareness").get<std::string>();
    if (mode == "sparsemax_logits")
      p.awareness.mode = AwarenessMode::sparsemax_logits;
    else if (mode == "scalar_gate")
      p.awareness.mode = AwarenessMode::scalar_gate;
    else
      fail("fields.awareness.mode", "must be sparsemax_logits|scalar_gate");
    p.awareness.omega_base =
        vec_from_json(expect(v, "omega_base", "fields.awareness"), "fields.awareness.omega_base");
    p.awareness.omega_x_scale = num(v, "omega_x_scale", "fields.awareness");
    p.awareness.ne_shift =
        vec_from_json(expect(v, "ne_shift", "fields.awareness"), "fields.awareness.ne_shift");
    p.awareness.overlay_scale = num(v, "overlay_scale", "fields.awareness");
    p.awareness.delta_W = num(v, "delta_W", "fields.awareness");
    p.awareness.w_gate =
        vec_from_json(expect(v, "w_gate", "fields.awareness"), "fields.awareness.w_gate");
  }
  {
    const json& v = expect(f, "memory", "fields");
    reject_unknown(v, {"eps_M", "gate_rate", "w_gate", "C_M", "phi", "c_in"}, "fields.memory");
    p.memory.eps_M = num(v, "eps_M", "fields.memory");
    p.memory.gate_rate = num(v, "gate_rate", "fields.memory");
    p.memory.w_gate = vec_from_json(expect(v, "w_gate", "fields.memory"), "fields.memory.w_gate");
    p.memory.C_M = num(v, "C_M", "fields.memory");
    p.memory.phi = tanh_map_from_json(expect(v, "phi", "fields.memory"), "fields.memory.phi");
    p.memory.c_in = vec_from_json(expect(v, "c_in", "fields.memory"), "fields.memory.c_in");
  }
  {
    const json& v = expect(f, "policy", "fields");
    reject_unknown(v, {"lambda_z", "eta", "lambda_reg", "D", "signed_delta", "eps_floor"},
                   "fields.policy");
    p.policy.lambda_z =
        vec_from_json(expect(v, "lambda_z", "fields.policy"), "fields.policy.lambda_z");
    p.policy.eta = vec_from_json(expect(v, "eta", "fields.policy"), "fields.policy.eta");
    p.policy.lambda_reg = num(v, "lambda_reg", "fields.policy");
    p.policy.D = num(v, "D", "fields.policy");
    p.policy.signed_delta = boolean(v, "signed_delta", "fields.policy");
    p.policy.eps_floor = num(v, "eps_floor", "fields.policy");
  }
  {
    const json& v = expect(f, "reliability", "fields");
    reject_unknown(v, {"rate", "kernel", "tent_sigma"}, "fields.reliability");
    p.reliability.rate = num(v, "rate", "fields.reliability");
    std::string k = expect(v, "kernel", "fields.reliability").get<std::string>();
    if (k == "gaussian")
      p.reliability.kernel = ReliabilityKernelKind::gaussian;
    else if (k == "inverse")
      p.reliability.kernel = ReliabilityKernelKind::inverse;
    else if (k == "tent")
      p.reliability.kernel = ReliabilityKernelKind::tent;
    else
      fail("fields.reliability.kernel", "must be gaussian|inverse|tent");
    p.reliability.tent_sigma = num(v, "tent_sigma", "fields.reliability");
  }
  {
    const json& v = expect(f, "homeostat", "fields");
    reject_unknown(v, {"kappa_h", "B_u", "n_u"}, "fields.homeostat");
    p.homeostat.kappa_h = num(v, "kappa_h", "fields.homeostat");
    p.homeostat.B_u = num(v, "B_u", "fields.homeostat");
    p.homeostat.n_u = integer(v, "n_u", "fields.homeostat");
  }
  {
    const json& v = expect(f, "routing", "fields");
    reject_unknown(v, {"base_scores", "beta_rho", "w_sal_h", "w_sal_x", "relax_rate"},
                   "fields.routing");
    p.routing.base_scores =
        mat_from_json(expect(v, "base_scores", "fields.routing"), "fields.routing.base_scores");
    p.routing.beta_rho = num(v, "beta_rho", "fields.routing");
    p.routing.w_sal_h = num(v, "w_sal_h", "fields.routing");
    p.routing.w_sal_x = num(v, "w_sal_x", "fields.routing");
    p.routing.relax_rate = num(v, "relax_rate", "fields.routing");
  }
  for (const auto& g : expect(f, "gates_fwd", "fields"))
    p.gates_fwd.push_back(gate_from_json(g, "fields.gates_fwd[]"));
  for (const auto& g : expect(f, "gates_adj", "fields"))
    p.gates_adj.push_back(gate_from_json(g, "fields.gates_adj[]"));
  p.frozen_auxiliaries = boolean(f, "frozen_auxiliaries", "fields");

  if (j.contains("equilibrium")) {
    StateVector z = state_from_json(j.at("equilibrium"), c);
    p.frozen_values = z;
    s.z_star = z;
  } else {
    s.z_star = project_state(StateVector::zeros(c), c);
  }

  try {
    validate_config(c, p);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config validation: ") + e.what());
  }
  return s;
}

Scenario load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse: ") + e.what());
  }
  return config_from_json(j);
}

void save_config_file(const Scenario& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file: " + path);
  out << config_to_json(s).dump(2) << "\n";
}

json report_to_json(const StabilityReport& r) {
  json cg = json::array();
  for (int i = 0; i < 3; ++i) {
    json row = json::array();
    for (int k = 0; k < 3; ++k) row.push_back(r.crossgain(i, k));
    cg.push_back(row);
  }
  return json{{"C_K", r.C_K},
              {"mu_L", r.mu_L},
              {"mu_R", r.mu_R},
              {"mu_P", r.mu_P},
              {"alpha_L", r.alpha_L},
              {"alpha_R", r.alpha_R},
              {"small_gain_ok", r.small_gain_ok},
              {"eta_L", r.eta_L},
              {"eta_R", r.eta_R},
              {"radial_ok", r.radial_ok},
              {"radial_by_projection", r.radial_by_projection},
              {"L_alpha", r.L_alpha},
              {"L_beta", r.L_beta},
              {"L_Q", r.L_Q},
              {"L_W", r.L_W},
              {"L_alpha_sampled", r.L_alpha_sampled},
              {"L_beta_sampled", r.L_beta_sampled},
              {"L_Q_sampled", r.L_Q_sampled},
              {"L_W_sampled", r.L_W_sampled},
              {"m_L", r.m_L},
              {"m_R", r.m_R},
              {"M_sdc", r.M_sdc},
              {"strengthened_ok", r.strengthened_ok},
              {"crossgain", cg},
              {"crossgain_ok", r.crossgain_ok},
              {"osl_FL", r.osl_FL},
              {"osl_FR", r.osl_FR},
              {"osl_P", r.osl_P},
              {"osl_ok", r.osl_ok},
              {"assumptions",
               json{{"A1_finite", r.assumptions.a1_finite_architecture},
                    {"A2_compact", r.assumptions.a2_compact_domain},
                    {"A3", r.assumptions.a3_note},
                    {"A4", r.assumptions.a4_note},
                    {"A5", r.assumptions.a5_note},
                    {"A6", r.assumptions.a6_note},
                    {"A7_constants", r.assumptions.a7_closed_regime_constants}}}};
}

std::string report_to_text(const StabilityReport& r) {
  std::ostringstream os;
  auto flag = [](bool b) { return b ? "PASS" : "FAIL"; };
  os << "stability report\n";
  os << "  C_K            " << r.C_K << "\n";
  os << "  mu_L mu_R mu_P " << r.mu_L << " " << r.mu_R << " " << r.mu_P << "\n";
  os << "  small gain     " << flag(r.small_gain_ok) << "  (alpha_L=" << r.alpha_L
     << ", alpha_R=" << r.alpha_R << ")\n";
  os << "  radial margin  " << flag(r.radial_ok || r.radial_by_projection) << "  (eta_L=" << r.eta_L
     << ", eta_R=" << r.eta_R << (r.radial_by_projection ? ", satisfied by projection" : "")
     << ")\n";
  os << "  state-dep load " << flag(r.strengthened_ok) << "  (m_L=" << r.m_L << ", m_R=" << r.m_R
     << ", M_sdc=" << r.M_sdc << ")\n";
  os << "  cross-gain     " << flag(r.crossgain_ok) << "\n";
  os << "  dissipativity  " << flag(r.osl_ok) << "  (F_L=" << r.osl_FL << ", F_R=" << r.osl_FR
     << ", P=" << r.osl_P << ")\n";
  os << "  lipschitz      L_alpha=" << r.L_alpha << " L_beta=" << r.L_beta << " L_Q=" << r.L_Q
     << " L_W=" << r.L_W << " (sampled: " << r.L_alpha_sampled << ", " << r.L_beta_sampled << ", "
     << r.L_Q_sampled << ", " << r.L_W_sampled << ")\n";
  os << "  assumptions    A1 " << flag(r.assumptions.a1_finite_architecture) << ", A2 "
     << flag(r.assumptions.a2_compact_domain) << ", A7 "
     << flag(r.assumptions.a7_closed_regime_constants) << "\n";
  os << "                 A3 " << r.assumptions.a3_note << "; A4 " << r.assumptions.a4_note << "\n";
  os << "                 A5/A6 " << r.assumptions.a5_note << "\n";
  return os.str();
}

json coarse_grain_to_json(const CoarseGrainReport& rep) {
  json checks = json::array();
  for (const auto& c : rep.checks)
    checks.push_back(json{{"class", c.name},
                          {"criterion", c.criterion},
                          {"measured", c.measured},
                          {"threshold", c.threshold},
                          {"pass", c.pass}});
  return json{{"checks", checks}, {"all_pass", rep.all_pass}};
}

std::string coarse_grain_to_text(const CoarseGrainReport& rep) {
  std::ostringstream os;
  os << "coarse-grained operator classes\n";
  for (const auto& c : rep.checks) {
    os << "  " << (c.pass ? "PASS " : "FAIL ") << c.name << "  " << c.criterion
       << "  measured=" << c.measured << " threshold=" << c.threshold << "\n";
  }
  os << (rep.all_pass ? "all nine classes pass\n" : "some classes fail\n");
  return os.str();
}

namespace {

std::vector<std::string> state_labels(const ArchitectureConfig& cfg) {
  std::vector<std::string> names;
  for (int t = 0; t < cfg.T; ++t)
    for (int d = 0; d < cfg.d_L; ++d) names.push_back("H_" + std::to_string(t) + "_" + std::to_string(d));
  for (int i = 0; i < cfg.V; ++i)
    for (int d = 0; d < cfg.d_R; ++d) names.push_back("X_" + std::to_string(i) + "_" + std::to_string(d));
  for (int e = 0; e < cfg.g_symbolic.edge_count(); ++e) names.push_back("Q_" + std::to_string(e));
  for (int e = 0; e < cfg.g_geometric.edge_count(); ++e) names.push_back("W_" + std::to_string(e));
  for (int r = 0; r < cfg.n_s; ++r)
    for (int c = 0; c < cfg.n_s; ++c)
      names.push_back("R_" + std::to_string(r) + "_" + std::to_string(c));
  for (int i = 0; i < cfg.n_Y; ++i) names.push_back("Y_" + std::to_string(i));
  for (int i = 0; i < cfg.n_P; ++i) names.push_back("P_" + std::to_string(i));
  for (int i = 0; i < cfg.n_M; ++i) names.push_back("M_" + std::to_string(i));
  for (int i = 0; i < cfg.n_sub; ++i) names.push_back("rho_" + std::to_string(i));
  for (int f = 0; f < cfg.n_policy; ++f)
    for (int i = 0; i < cfg.n_actions; ++i)
      names.push_back("z_" + std::to_string(f) + "_" + std::to_string(i));
  for (int f = 0; f < cfg.n_policy; ++f)
    for (int i = 0; i < cfg.n_actions; ++i)
      names.push_back("theta_" + std::to_string(f) + "_" + std::to_string(i));
  return names;
}

}  // namespace

void write_trajectory_csv(const std::string& path, const Trajectory& traj,
                          const ArchitectureConfig& cfg, const FieldParams& params,
                          const std::optional<StateVector>& z_star) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file: " + path);
  out.precision(17);
  out << "t";
  for (const auto& n : state_labels(cfg)) out << "," << n;
  out << ",h_norm,residual,lyapunov,principal_error,violations\n";
  for (size_t k = 0; k < traj.states.size(); ++k) {
    const StateVector& z = traj.states[k];
    out << traj.times[k];
    Eigen::VectorXd flat = z.flatten();
    for (Eigen::Index i = 0; i < flat.size(); ++i) out << "," << flat[i];
    out << "," << (k < traj.aux_h_norm.size() ? traj.aux_h_norm[k] : 0.0);
    double res = residual_norm(z, cfg, params);
    double lyap = 0.0;
    double perr = 0.0;
    if (!traj.diag.empty() && traj.diag_every == traj.record_every && k < traj.diag.size()) {
      lyap = traj.diag[k].lyapunov;
      perr = traj.diag[k].principal_error;
    } else if (z_star) {
      perr = principal_error(z, *z_star);
    }
    out << "," << res << "," << lyap << "," << perr << ","
        << validate_state(z, cfg).size() << "\n";
  }
}

void write_trajectory_json(const std::string& path, const Trajectory& traj,
                           const ArchitectureConfig& cfg, const FieldParams& params,
                           const std::optional<StateVector>& z_star) {
  json rows = json::array();
  for (size_t k = 0; k < traj.states.size(); ++k) {
    const StateVector& z = traj.states[k];
    json row{{"t", traj.times[k]},
             {"state", state_to_json(z)},
             {"h_norm", k < traj.aux_h_norm.size() ? traj.aux_h_norm[k] : 0.0},
             {"residual", residual_norm(z, cfg, params)},
             {"violations", validate_state(z, cfg).size()}};
    if (z_star) row["principal_error"] = principal_error(z, *z_star);
    if (!traj.diag.empty() && traj.diag_every == traj.record_every && k < traj.diag.size())
      row["lyapunov"] = traj.diag[k].lyapunov;
    rows.push_back(row);
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file: " + path);
  out << json{{"dt", traj.dt}, {"steps", traj.steps}, {"rows", rows}}.dump() << "\n";
}

json checkpoint_to_json(const Trajectory& traj) {
  const HistoryBuffer& h = traj.final_history;
  json slots = json::array();
  for (int n = h.max_delay_steps(); n >= 0; --n) slots.push_back(state_to_json(h.delayed(n)));
  json dth = json::array();
  for (const auto& d : traj.final_aux.delta_theta) dth.push_back(vec_to_json(d));
  return json{{"version", kConfigVersion},
              {"steps_done", traj.steps},
              {"history", json{{"max_delay_steps", h.max_delay_steps()},
                               {"dt", h.dt()},
                               {"slots_oldest_first", slots}}},
              {"aux", json{{"h", vec_to_json(traj.final_aux.h)},
                           {"u_prev", vec_to_json(traj.final_aux.u_prev)},
                           {"eps_pred", traj.final_aux.eps_pred},
                           {"novelty", traj.final_aux.novelty},
                           {"delta_credit", traj.final_aux.delta_credit},
                           {"C_RL", mat_to_json(traj.final_aux.C_RL)},
                           {"C_LR", mat_to_json(traj.final_aux.C_LR)},
                           {"delta_theta", dth}}}};
}

Checkpoint checkpoint_from_json(const json& j, const ArchitectureConfig& cfg) {
  reject_unknown(j, {"version", "steps_done", "history", "aux"}, "checkpoint");
  Checkpoint cp;
  cp.steps_done = expect(j, "steps_done", "checkpoint").get<long>();
  const json& h = expect(j, "history", "checkpoint");
  reject_unknown(h, {"max_delay_steps", "dt", "slots_oldest_first"}, "checkpoint.history");
  int k = integer(h, "max_delay_steps", "checkpoint.history");
  double dt = num(h, "dt", "checkpoint.history");
  cp.history = HistoryBuffer(k, dt);
  std::vector<StateVector> slots;
  for (const auto& s : expect(h, "slots_oldest_first", "checkpoint.history")) {
    StateVector state = state_from_json(s, cfg);
    try {
      validate_state(state, cfg);  // shape check only; domain violations are
                                   // tolerated here and handled by the stepper
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("checkpoint state: ") + e.what());
    }
    slots.push_back(std::move(state));
  }
  cp.history.init_samples(slots);
  const json& a = expect(j, "aux", "checkpoint");
  reject_unknown(a, {"h", "u_prev", "eps_pred", "novelty", "delta_credit", "C_RL", "C_LR",
                     "delta_theta"},
                 "checkpoint.aux");
  cp.aux.h = vec_from_json(expect(a, "h", "checkpoint.aux"), "checkpoint.aux.h");
  cp.aux.u_prev = vec_from_json(expect(a, "u_prev", "checkpoint.aux"), "checkpoint.aux.u_prev");
  cp.aux.eps_pred = num(a, "eps_pred", "checkpoint.aux");
  cp.aux.novelty = num(a, "novelty", "checkpoint.aux");
  cp.aux.delta_credit = num(a, "delta_credit", "checkpoint.aux");
  cp.aux.C_RL = mat_from_json(expect(a, "C_RL", "checkpoint.aux"), "checkpoint.aux.C_RL");
  cp.aux.C_LR = mat_from_json(expect(a, "C_LR", "checkpoint.aux"), "checkpoint.aux.C_LR");
  for (const auto& d : expect(a, "delta_theta", "checkpoint.aux"))
    cp.aux.delta_theta.push_back(vec_from_json(d, "checkpoint.aux.delta_theta[]"));
  return cp;
}

}  // namespace refield
