#pragma once

#include <string>

#include <json.hpp>

#include "fwuav/evalharness.hpp"
#include "fwuav/version.hpp"

namespace fwuav {

/// Everything an experiment run depends on. Seeds are explicit fields.
struct ExperimentConfig {
  std::string preset = "desk";
  Morphology morphology;
  WingParams waveform;  // seed of the symmetric orbit search
  OrbitOptions orbit;
  double weight_pos = 0.02, weight_att = 0.2, weight_vel = 0.2, weight_rate = 2.0;
  double horizon_ratio = 1.2;
  MpcOptions expert;
  GenerateOptions dataset;
  ILConfig imitation;
  NetArch arch;
  int dagger_hidden = 36;  // DAgger's hidden width
  SweepOptions sweep;
  double noise_sigma = 1e-3;
  int noise_skip = 10;
  int jobs = 1;

  /// "desk" (default sizes for a workstation) or "paper" (published sizes).
  static ExperimentConfig preset_named(const std::string& name);
  CostWeights weights() const;
  /// Propagates `jobs` into every stage.
  void set_jobs(int n);
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
/// Starts from the preset named in j (desk when absent) and overrides the keys present.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
/// Digest of the canonical JSON form, ignoring worker counts.
std::string config_hash(const ExperimentConfig& c);

nlohmann::json orbit_to_json(const ReferenceOrbit& orbit, const std::string& config_hash);
ReferenceOrbit orbit_from_json(const nlohmann::json& j);
void save_orbit(const std::string& path, const ReferenceOrbit& orbit, const std::string& config_hash);
ReferenceOrbit load_orbit(const std::string& path);

struct PolicyFile {
  NeuralPolicy policy;
  std::string algorithm;
  std::uint64_t seed = 0;
  std::string config_hash;
  int u_layout = kULayoutVersion;
  double mse = 0.0;
  double f0_norm = 0.0;
  int dataset_size = 0;
  int expert_calls = 0;
};

nlohmann::json policy_to_json(const PolicyFile& p);
PolicyFile policy_from_json(const nlohmann::json& j);
void save_policy(const std::string& path, const PolicyFile& p);
PolicyFile load_policy(const std::string& path);

void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

}  // namespace fwuav
