#include "fwuav/datagen.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "fwuav/errors.hpp"
#include "fwuav/parallel.hpp"
#include "fwuav/version.hpp"

namespace fwuav {

namespace {

Vec3 uniform_ball(std::mt19937_64& rng, double radius) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec3 d;
  double len = 0.0;
  do {
    d = Vec3(n(rng), n(rng), n(rng));
    len = d.norm();
  } while (len == 0.0);
  return d / len * (radius * std::cbrt(u(rng)));
}

}  // namespace

StateError sample_initial_error(std::mt19937_64& rng, const BlockScales& scales, const Vec12& W_x) {
  const double s[4] = {scales.pos, scales.att, scales.vel, scales.rate};
  Vec12 w;
  for (int b = 0; b < 4; ++b) {
    if (!(s[b] >= 0.0)) throw DomainError("sample_initial_error: scales must be non-negative");
    w.segment<3>(3 * b) = uniform_ball(rng, s[b]);
  }
  const double norm = w.norm();
  if (norm > 1.0) w /= norm;
  return w.cwiseQuotient(W_x);
}

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::Sampled: return "sampled";
    case Provenance::Zero: return "zero";
    case Provenance::DAgger: return "dagger";
    case Provenance::DART: return "dart";
  }
  return "?";
}

Provenance provenance_from_string(const std::string& s) {
  for (Provenance p : {Provenance::Sampled, Provenance::Zero, Provenance::DAgger, Provenance::DART}) {
    if (s == to_string(p)) return p;
  }
  throw DomainError("unknown provenance '" + s + "'");
}

int Dataset::n_zero() const {
  int n = 0;
  for (Provenance p : provenance) n += p == Provenance::Zero;
  return n;
}

void Dataset::append(const Vec12& x, const ControlVector& y, Provenance p, double c, double c0) {
  const Eigen::Index n = X.cols();
  X.conservativeResize(Eigen::NoChange, n + 1);
  Y.conservativeResize(Eigen::NoChange, n + 1);
  X.col(n) = x;
  Y.col(n) = y;
  provenance.push_back(p);
  cost.push_back(c);
  cost_zero.push_back(c0);
}

void Dataset::append(const Dataset& o) {
  if (o.u_layout != u_layout) throw DomainError("Dataset::append: u layout versions differ");
  const Eigen::Index n = X.cols();
  X.conservativeResize(Eigen::NoChange, n + o.X.cols());
  Y.conservativeResize(Eigen::NoChange, n + o.Y.cols());
  X.rightCols(o.X.cols()) = o.X;
  Y.rightCols(o.Y.cols()) = o.Y;
  provenance.insert(provenance.end(), o.provenance.begin(), o.provenance.end());
  cost.insert(cost.end(), o.cost.begin(), o.cost.end());
  cost_zero.insert(cost_zero.end(), o.cost_zero.begin(), o.cost_zero.end());
}

void Dataset::validate() const {
  const auto n = static_cast<std::size_t>(X.cols());
  if (X.rows() != 12 || Y.rows() != kControlDim || Y.cols() != X.cols() ||
      provenance.size() != n || cost.size() != n || cost_zero.size() != n) {
    throw DomainError("Dataset: inconsistent column counts");
  }
  for (std::size_t k = 0; k < n; ++k) {
    const auto c = static_cast<Eigen::Index>(k);
    if (provenance[k] == Provenance::Zero && (X.col(c).any() || Y.col(c).any())) {
      throw DomainError("Dataset: zero pair with a non-zero entry");
    }
  }
  if (!X.allFinite() || !Y.allFinite()) throw DomainError("Dataset: non-finite entries");
}

void Dataset::write_csv(std::ostream& os) const {
  validate();
  os << "# fwuav dataset tool=" << kToolVersion << " config=" << (config_hash.empty() ? "-" : config_hash)
     << "\n";
  os << "# N=" << size() << " N0=" << n_zero() << " seed=" << seed << " orbit=" << orbit_hash
     << " u_layout=" << u_layout << "\n";
  os << "provenance,cost,cost_zero";
  for (int i = 0; i < 12; ++i) os << ",x" << i;
  for (int i = 0; i < kControlDim; ++i) os << ",y" << i;
  os << "\n" << std::setprecision(17);
  for (int k = 0; k < size(); ++k) {
    os << to_string(provenance[k]) << ',' << cost[k] << ',' << cost_zero[k];
    for (int i = 0; i < 12; ++i) os << ',' << X(i, k);
    for (int i = 0; i < kControlDim; ++i) os << ',' << Y(i, k);
    os << '\n';
  }
}

Dataset Dataset::read_csv(std::istream& is) {
  Dataset ds;
  std::string line;
  std::optional<int> declared;
  while (std::getline(is, line) && line.rfind("#", 0) == 0) {
    std::istringstream hs(line.substr(1));
    std::string tok;
    while (hs >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "N") declared = std::stoi(val);
      else if (key == "seed") ds.seed = std::stoull(val);
      else if (key == "orbit") ds.orbit_hash = val;
      else if (key == "u_layout") ds.u_layout = std::stoi(val);
      else if (key == "config" && val != "-") ds.config_hash = val;
    }
  }
  if (line.rfind("provenance", 0) != 0) throw DomainError("Dataset: missing column header");
  if (ds.u_layout != kULayoutVersion) throw DomainError("Dataset: unsupported u layout version");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 3 + 12 + kControlDim) throw DomainError("Dataset: malformed row");
    Vec12 x;
    ControlVector y;
    for (int i = 0; i < 12; ++i) x[i] = std::stod(cells[3 + i]);
    for (int i = 0; i < kControlDim; ++i) y[i] = std::stod(cells[15 + i]);
    ds.append(x, y, provenance_from_string(cells[0]), std::stod(cells[1]), std::stod(cells[2]));
  }
  if (declared && *declared != ds.size()) throw DomainError("Dataset: row count does not match header");
  ds.validate();
  return ds;
}

void Dataset::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  write_csv(f);
}

Dataset Dataset::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DomainError("cannot read " + path);
  return read_csv(f);
}

Dataset generate_dataset(const MpcExpert& expert, const GenerateOptions& opts,
                         GenerateReport* report) {
  if (opts.n_samples < 0 || opts.n_zero < 0) throw DomainError("generate_dataset: negative count");
  const Vec12& W_x = expert.weights().W_x;
  struct Slot {
    Vec12 x;
    MpcResult r;
    bool ok = false;
    std::string error;
  };
  std::vector<Slot> slots(opts.n_samples);
  parallel_for(opts.n_samples, opts.jobs, [&](int i) {
    std::mt19937_64 rng = substream(opts.seed, static_cast<std::uint64_t>(i));
    const StateError e = sample_initial_error(rng, opts.scales, W_x);
    Slot& s = slots[i];
    s.x = weighted_input(e, W_x);
    try {
      s.r = expert.solve_error(e);
      s.ok = true;
    } catch (const std::exception& ex) {
      s.error = "sample " + std::to_string(i) + ": " + ex.what();
    }
    if (opts.verbose) {
      std::fprintf(stderr, "sample %d: |e| %.3f  J %.4g -> %.4g\n", i, s.x.norm(), s.r.cost_zero,
                   s.r.cost);
    }
  });
  Dataset ds;
  ds.seed = opts.seed;
  ds.orbit_hash = orbit_hash(expert.orbit());
  GenerateReport rep;
  rep.requested = opts.n_samples;
  for (const Slot& s : slots) {
    if (s.ok) {
      ds.append(s.x, s.r.u, Provenance::Sampled, s.r.cost, s.r.cost_zero);
      ++rep.solved;
    } else {
      rep.failures.push_back(s.error);
    }
  }
  for (int k = 0; k < opts.n_zero; ++k) {
    ds.append(Vec12::Zero(), ControlVector::Zero(), Provenance::Zero);
  }
  if (report) *report = rep;
  return ds;
}

}  // namespace fwuav
