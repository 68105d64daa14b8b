#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "fwuav/expert.hpp"

namespace fwuav {

/// Radius of each 3-block of a sampled error, in weighted units. The defaults put
/// the four blocks on an equal weighted footing with a total weighted norm of at most 1.
struct BlockScales {
  double pos = 0.5;
  double att = 0.5;
  double vel = 0.5;
  double rate = 0.5;
};

/// Each block is uniform in the ball of its scale (in weighted units) and mapped back
/// to raw units through W_x. Rescaled onto the unit weighted sphere if it lands outside.
StateError sample_initial_error(std::mt19937_64& rng, const BlockScales& scales, const Vec12& W_x);

/// The policy input for a raw error: W_x applied entrywise.
inline Vec12 weighted_input(const StateError& e, const Vec12& W_x) { return W_x.cwiseProduct(e); }

enum class Provenance { Sampled, Zero, DAgger, DART };
const char* to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

/// Paired policy inputs (weighted errors) and expert schedules, one column per sample.
struct Dataset {
  Eigen::MatrixXd X = Eigen::MatrixXd(12, 0);
  Eigen::MatrixXd Y = Eigen::MatrixXd(kControlDim, 0);
  std::vector<Provenance> provenance;
  std::vector<double> cost;       // expert cost J(u); 0 for zero pairs
  std::vector<double> cost_zero;  // J(0) at the same state
  std::uint64_t seed = 0;
  std::string orbit_hash;
  std::string config_hash;  // of the experiment that produced it; empty when unknown
  int u_layout = kULayoutVersion;

  int size() const { return static_cast<int>(X.cols()); }
  int n_zero() const;
  void append(const Vec12& x, const ControlVector& y, Provenance p, double cost = 0.0,
              double cost_zero = 0.0);
  void append(const Dataset& other);
  /// Throws DomainError when the column counts or the zero-pair invariant break.
  void validate() const;

  void write_csv(std::ostream& os) const;
  static Dataset read_csv(std::istream& is);
  void save(const std::string& path) const;
  static Dataset load(const std::string& path);
};

struct GenerateOptions {
  int n_samples = 200;
  int n_zero = 40;
  BlockScales scales;
  std::uint64_t seed = 1;
  int jobs = 1;
  bool verbose = false;
};

struct GenerateReport {
  int requested = 0;
  int solved = 0;
  std::vector<std::string> failures;
};

/// Solves the expert from n_samples sampled errors (sample i draws from substream i,
/// so the result does not depend on jobs) and appends n_zero zero pairs. Failed
/// solves are skipped and listed in the report.
Dataset generate_dataset(const MpcExpert& expert, const GenerateOptions& opts,
                         GenerateReport* report = nullptr);

}  // namespace fwuav
