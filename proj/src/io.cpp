#include "fwuav/io.hpp"

#include <fstream>

#include "fwuav/errors.hpp"
#include "fwuav/hash.hpp"

namespace fwuav {

using nlohmann::json;

namespace {

template <class T>
void get(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json vec_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

template <int N>
void get_vec(const json& j, const char* key, Eigen::Matrix<double, N, 1>& out) {
  if (!j.contains(key)) return;
  const auto v = j.at(key).get<std::vector<double>>();
  if (static_cast<int>(v.size()) != N) throw DomainError(std::string("config: '") + key + "' has the wrong length");
  for (int i = 0; i < N; ++i) out[i] = v[i];
}

void get_mat3(const json& j, const char* key, Mat3& out) {
  if (!j.contains(key)) return;
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() == 3) {
    out = Vec3(v[0], v[1], v[2]).asDiagonal();
  } else if (v.size() == 9) {
    for (int i = 0; i < 9; ++i) out(i / 3, i % 3) = v[i];
  } else {
    throw DomainError(std::string("config: '") + key + "' needs 3 diagonal or 9 row-major entries");
  }
}

json mat3_json(const Mat3& m) {
  std::vector<double> v(9);
  for (int i = 0; i < 9; ++i) v[i] = m(i / 3, i % 3);
  return v;
}

json wing_json(const WingParams& w) {
  return {{"f", w.f},         {"phi_m", w.phi_m},     {"phi_0", w.phi_0},   {"phi_K", w.phi_K},
          {"theta_m", w.theta_m}, {"theta_0", w.theta_0}, {"theta_C", w.theta_C},
          {"theta_a", w.theta_a}, {"psi_m", w.psi_m},     {"psi_0", w.psi_0},
          {"psi_N", w.psi_N},     {"psi_a", w.psi_a},     {"beta", w.beta}};
}

void wing_from(const json& j, WingParams& w) {
  get(j, "f", w.f);
  get(j, "phi_m", w.phi_m);
  get(j, "phi_0", w.phi_0);
  get(j, "phi_K", w.phi_K);
  get(j, "theta_m", w.theta_m);
  get(j, "theta_0", w.theta_0);
  get(j, "theta_C", w.theta_C);
  get(j, "theta_a", w.theta_a);
  get(j, "psi_m", w.psi_m);
  get(j, "psi_0", w.psi_0);
  get(j, "psi_N", w.psi_N);
  get(j, "psi_a", w.psi_a);
  get(j, "beta", w.beta);
}

json scales_json(const BlockScales& s) {
  return {{"pos", s.pos}, {"att", s.att}, {"vel", s.vel}, {"rate", s.rate}};
}

void scales_from(const json& j, BlockScales& s) {
  get(j, "pos", s.pos);
  get(j, "att", s.att);
  get(j, "vel", s.vel);
  get(j, "rate", s.rate);
}

json arch_json(const NetArch& a) {
  return {{"n_in", a.n_in}, {"n_hidden", a.n_hidden}, {"n_out", a.n_out}, {"leak", a.leak},
          {"cascade", a.cascade}};
}

void arch_from(const json& j, NetArch& a) {
  get(j, "n_in", a.n_in);
  get(j, "n_hidden", a.n_hidden);
  get(j, "n_out", a.n_out);
  get(j, "leak", a.leak);
  get(j, "cascade", a.cascade);
}

json state_json(const FreeState& s) {
  std::vector<double> v;
  for (int i = 0; i < 3; ++i) v.push_back(s.x()(i));
  for (int i = 0; i < 9; ++i) v.push_back(s.R().matrix()(i / 3, i % 3));
  for (int i = 0; i < 3; ++i) v.push_back(s.v()(i));
  for (int i = 0; i < 3; ++i) v.push_back(s.Omega()(i));
  return v;
}

FreeState state_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 18) throw DomainError("orbit: a state needs 18 numbers");
  Mat3 R;
  for (int i = 0; i < 9; ++i) R(i / 3, i % 3) = v[3 + i];
  FreeState s;
  s.g.x = Vec3(v[0], v[1], v[2]);
  s.g.R = Rotation(R);
  s.xi.v = Vec3(v[12], v[13], v[14]);
  s.xi.w = Vec3(v[15], v[16], v[17]);
  return s;
}

void check_header(const json& j, const char* format) {
  if (j.value("format", std::string()) != format) {
    throw DomainError(std::string("not a ") + format + " document");
  }
  if (j.value("version", 0) != kFileFormatVersion) throw DomainError("unsupported file version");
}

}  // namespace

ExperimentConfig ExperimentConfig::preset_named(const std::string& name) {
  ExperimentConfig c;
  c.preset = name;
  if (name == "desk") return c;
  if (name == "paper") {
    c.dataset.n_samples = 1287;
    c.dataset.n_zero = 300;
    c.dagger_hidden = 60;
    c.sweep.n_traj = 12291;
    return c;
  }
  throw DomainError("unknown preset '" + name + "' (expected desk or paper)");
}

CostWeights ExperimentConfig::weights() const {
  return {CostWeights::state_weights(weight_pos, weight_att, weight_vel, weight_rate),
          CostWeights::geometric(horizon_ratio)};
}

void ExperimentConfig::set_jobs(int n) {
  if (n < 1) throw DomainError("jobs must be at least 1");
  jobs = n;
  expert.jobs = n;
  dataset.jobs = n;
  imitation.jobs = n;
  sweep.jobs = n;
}

void ExperimentConfig::validate() const {
  morphology.validate();
  waveform.validate();
  weights().validate();
  arch.validate();
  imitation.validate();
  if (dataset.n_samples < 0 || dataset.n_zero < 0) throw DomainError("config: negative dataset size");
  if (dagger_hidden < 1) throw DomainError("config: dagger_hidden must be positive");
  if (sweep.n_traj < 1 || sweep.horizon < 10) {
    throw DomainError("config: sweep needs a trajectory and at least 10 periods");
  }
  if (!(noise_sigma >= 0.0)) throw DomainError("config: noise_sigma must be non-negative");
  if (jobs < 1) throw DomainError("config: jobs must be at least 1");
}

json to_json(const ExperimentConfig& c) {
  const Morphology& m = c.morphology;
  const TrainOptions& t = c.imitation.train;
  json j;
  j["preset"] = c.preset;
  j["jobs"] = c.jobs;
  j["morphology"] = {{"m_body", m.m_body},
                     {"I_body", mat3_json(m.I_body)},
                     {"m_wing", m.m_wing},
                     {"I_wing", mat3_json(m.I_wing)},
                     {"mu_right", vec_json(m.mu_right)},
                     {"nu_right", vec_json(m.nu_right)},
                     {"wing_length", m.wing_length},
                     {"chord", m.chord},
                     {"ac_fraction", m.ac_fraction},
                     {"n_strips", m.n_strips},
                     {"rho", m.rho},
                     {"gravity", m.gravity},
                     {"cl_max", m.aero.cl_max},
                     {"cd_0", m.aero.cd_0},
                     {"cd_k", m.aero.cd_k}};
  j["waveform"] = wing_json(c.waveform);
  j["orbit"] = {{"steps_per_period", c.orbit.steps_per_period}, {"tol", c.orbit.tol},
                {"polish_tol", c.orbit.polish_tol},             {"lambda_E", c.orbit.lambda_E},
                {"max_iter", c.orbit.max_iter},                 {"free_frequency", c.orbit.free_frequency}};
  j["weights"] = {{"pos", c.weight_pos}, {"att", c.weight_att}, {"vel", c.weight_vel},
                  {"rate", c.weight_rate}, {"horizon_ratio", c.horizon_ratio}};
  j["expert"] = {{"steps_per_period", c.expert.steps_per_period},
                 {"delta_max", c.expert.delta_max},
                 {"max_iter", c.expert.max_iter},
                 {"fd_step", c.expert.fd_step},
                 {"refresh_every", c.expert.refresh_every},
                 {"max_error", c.expert.max_error},
                 {"effort_weight", c.expert.effort_weight},
                 {"rel_tol", c.expert.rel_tol}};
  j["dataset"] = {{"n_samples", c.dataset.n_samples}, {"n_zero", c.dataset.n_zero},
                  {"scales", scales_json(c.dataset.scales)}, {"seed", c.dataset.seed}};
  j["imitation"] = {{"iterations", c.imitation.iterations},
                    {"alpha", c.imitation.alpha},
                    {"dart_scale", c.imitation.dart_scale},
                    {"rollout_periods", c.imitation.rollout_periods},
                    {"rollouts_per_iter", c.imitation.rollouts_per_iter},
                    {"scales", scales_json(c.imitation.scales)},
                    {"mu_c", c.imitation.mu_c},
                    {"warm_start", c.imitation.warm_start},
                    {"steps_per_period", c.imitation.steps_per_period},
                    {"seed", c.imitation.seed},
                    {"train",
                     {{"method", t.method == Trainer::Momentum ? "momentum" : "lm"},
                      {"lambda", t.lambda},
                      {"max_iter", t.max_iter},
                      {"cg_iter", t.cg_iter},
                      {"tol", t.tol},
                      {"ridge_init", t.ridge_init},
                      {"lr", t.lr},
                      {"momentum", t.momentum}}}};
  j["arch"] = arch_json(c.arch);
  j["dagger_hidden"] = c.dagger_hidden;
  j["sweep"] = {{"n_traj", c.sweep.n_traj},
                {"horizon", c.sweep.horizon},
                {"scales", scales_json(c.sweep.scales)},
                {"seed", c.sweep.seed},
                {"steps_per_period", c.sweep.steps_per_period},
                {"noise_sigma", c.noise_sigma},
                {"noise_skip", c.noise_skip}};
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c = ExperimentConfig::preset_named(j.value("preset", std::string("desk")));
  if (j.contains("morphology")) {
    const json& m = j["morphology"];
    Morphology& o = c.morphology;
    get(m, "m_body", o.m_body);
    get_mat3(m, "I_body", o.I_body);
    get(m, "m_wing", o.m_wing);
    get_mat3(m, "I_wing", o.I_wing);
    get_vec(m, "mu_right", o.mu_right);
    get_vec(m, "nu_right", o.nu_right);
    get(m, "wing_length", o.wing_length);
    get(m, "chord", o.chord);
    get(m, "ac_fraction", o.ac_fraction);
    get(m, "n_strips", o.n_strips);
    get(m, "rho", o.rho);
    get(m, "gravity", o.gravity);
    get(m, "cl_max", o.aero.cl_max);
    get(m, "cd_0", o.aero.cd_0);
    get(m, "cd_k", o.aero.cd_k);
  }
  if (j.contains("waveform")) wing_from(j["waveform"], c.waveform);
  if (j.contains("orbit")) {
    const json& o = j["orbit"];
    get(o, "steps_per_period", c.orbit.steps_per_period);
    get(o, "tol", c.orbit.tol);
    get(o, "polish_tol", c.orbit.polish_tol);
    get(o, "lambda_E", c.orbit.lambda_E);
    get(o, "max_iter", c.orbit.max_iter);
    get(o, "free_frequency", c.orbit.free_frequency);
  }
  if (j.contains("weights")) {
    const json& w = j["weights"];
    get(w, "pos", c.weight_pos);
    get(w, "att", c.weight_att);
    get(w, "vel", c.weight_vel);
    get(w, "rate", c.weight_rate);
    get(w, "horizon_ratio", c.horizon_ratio);
  }
  if (j.contains("expert")) {
    const json& e = j["expert"];
    get(e, "steps_per_period", c.expert.steps_per_period);
    get(e, "delta_max", c.expert.delta_max);
    get(e, "max_iter", c.expert.max_iter);
    get(e, "fd_step", c.expert.fd_step);
    get(e, "refresh_every", c.expert.refresh_every);
    get(e, "max_error", c.expert.max_error);
    get(e, "effort_weight", c.expert.effort_weight);
    get(e, "rel_tol", c.expert.rel_tol);
  }
  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    get(d, "n_samples", c.dataset.n_samples);
    get(d, "n_zero", c.dataset.n_zero);
    if (d.contains("scales")) scales_from(d["scales"], c.dataset.scales);
    get(d, "seed", c.dataset.seed);
  }
  if (j.contains("imitation")) {
    const json& i = j["imitation"];
    ILConfig& o = c.imitation;
    get(i, "iterations", o.iterations);
    get(i, "alpha", o.alpha);
    get(i, "dart_scale", o.dart_scale);
    get(i, "rollout_periods", o.rollout_periods);
    get(i, "rollouts_per_iter", o.rollouts_per_iter);
    if (i.contains("scales")) scales_from(i["scales"], o.scales);
    get(i, "mu_c", o.mu_c);
    get(i, "warm_start", o.warm_start);
    get(i, "steps_per_period", o.steps_per_period);
    get(i, "seed", o.seed);
    if (i.contains("train")) {
      const json& t = i["train"];
      std::string method = o.train.method == Trainer::Momentum ? "momentum" : "lm";
      get(t, "method", method);
      if (method == "lm") o.train.method = Trainer::LevenbergMarquardt;
      else if (method == "momentum") o.train.method = Trainer::Momentum;
      else throw DomainError("config: train.method must be lm or momentum");
      get(t, "lambda", o.train.lambda);
      get(t, "max_iter", o.train.max_iter);
      get(t, "cg_iter", o.train.cg_iter);
      get(t, "tol", o.train.tol);
      get(t, "ridge_init", o.train.ridge_init);
      get(t, "lr", o.train.lr);
      get(t, "momentum", o.train.momentum);
    }
  }
  if (j.contains("arch")) arch_from(j["arch"], c.arch);
  get(j, "dagger_hidden", c.dagger_hidden);
  if (j.contains("sweep")) {
    const json& s = j["sweep"];
    get(s, "n_traj", c.sweep.n_traj);
    get(s, "horizon", c.sweep.horizon);
    if (s.contains("scales")) scales_from(s["scales"], c.sweep.scales);
    get(s, "seed", c.sweep.seed);
    get(s, "steps_per_period", c.sweep.steps_per_period);
    get(s, "noise_sigma", c.noise_sigma);
    get(s, "noise_skip", c.noise_skip);
  }
  c.orbit.W_x = c.weights().W_x;
  c.set_jobs(j.value("jobs", 1));
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) { return config_from_json(read_json(path)); }

std::string config_hash(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("jobs");
  return Fnv1a().add(std::string_view(j.dump())).hex();
}

json orbit_to_json(const ReferenceOrbit& orbit, const std::string& cfg_hash) {
  json samples = json::array();
  for (const FreeState& s : orbit.samples) samples.push_back(state_json(s));
  return {{"format", "fwuav-orbit"},
          {"version", kFileFormatVersion},
          {"tool_version", kToolVersion},
          {"config_hash", cfg_hash},
          {"morphology_hash", orbit.morphology_hash},
          {"orbit_hash", orbit_hash(orbit)},
          {"params", {{"right", wing_json(orbit.params.right)}, {"left", wing_json(orbit.params.left)}}},
          {"frequency", orbit.frequency()},
          {"steps_per_period", orbit.steps_per_period},
          {"defect", orbit.defect},
          {"mean_power", orbit.mean_power},
          {"mean_aero_force", vec_json(orbit.mean_aero_force)},
          {"initial_state", state_json(orbit.initial())},
          {"samples", samples}};
}

ReferenceOrbit orbit_from_json(const json& j) {
  check_header(j, "fwuav-orbit");
  ReferenceOrbit o;
  wing_from(j.at("params").at("right"), o.params.right);
  wing_from(j.at("params").at("left"), o.params.left);
  o.steps_per_period = j.at("steps_per_period").get<int>();
  o.defect = j.at("defect").get<double>();
  o.mean_power = j.at("mean_power").get<double>();
  get_vec(j, "mean_aero_force", o.mean_aero_force);
  o.morphology_hash = j.at("morphology_hash").get<std::string>();
  for (const json& s : j.at("samples")) o.samples.push_back(state_from(s));
  if (static_cast<int>(o.samples.size()) != o.steps_per_period + 1) {
    throw DomainError("orbit: sample count does not match steps_per_period");
  }
  return o;
}

void save_orbit(const std::string& path, const ReferenceOrbit& orbit, const std::string& cfg_hash) {
  write_json(path, orbit_to_json(orbit, cfg_hash));
}

ReferenceOrbit load_orbit(const std::string& path) { return orbit_from_json(read_json(path)); }

json policy_to_json(const PolicyFile& p) {
  return {{"format", "fwuav-policy"},
          {"version", kFileFormatVersion},
          {"tool_version", kToolVersion},
          {"config_hash", p.config_hash},
          {"u_layout", p.u_layout},
          {"algorithm", p.algorithm},
          {"seed", p.seed},
          {"arch", arch_json(p.policy.arch())},
          {"theta", vec_json(p.policy.theta())},
          {"training",
           {{"mse", p.mse},
            {"f0_norm", p.f0_norm},
            {"dataset_size", p.dataset_size},
            {"expert_calls", p.expert_calls}}}};
}

PolicyFile policy_from_json(const json& j) {
  check_header(j, "fwuav-policy");
  PolicyFile p;
  NetArch a;
  arch_from(j.at("arch"), a);
  const auto th = j.at("theta").get<std::vector<double>>();
  p.policy = NeuralPolicy(a, Eigen::Map<const Eigen::VectorXd>(th.data(), th.size()));
  p.algorithm = j.value("algorithm", std::string());
  p.seed = j.value("seed", std::uint64_t{0});
  p.config_hash = j.value("config_hash", std::string());
  p.u_layout = j.value("u_layout", 0);
  if (j.contains("training")) {
    const json& t = j["training"];
    get(t, "mse", p.mse);
    get(t, "f0_norm", p.f0_norm);
    get(t, "dataset_size", p.dataset_size);
    get(t, "expert_calls", p.expert_calls);
  }
  return p;
}

void save_policy(const std::string& path, const PolicyFile& p) { write_json(path, policy_to_json(p)); }

PolicyFile load_policy(const std::string& path) { return policy_from_json(read_json(path)); }

void write_json(const std::string& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(1) << '\n';
}

json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DomainError("cannot read " + path);
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw DomainError(path + ": " + e.what());
  }
}

}  // namespace fwuav
