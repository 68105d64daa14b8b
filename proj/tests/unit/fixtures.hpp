#pragma once

#include "fwuav/integrate.hpp"
#include "fwuav/expert.hpp"

namespace fwuav::testing {

/// The default-morphology hover orbit, searched once per test binary.
inline const ReferenceOrbit& desk_orbit() {
  static const ReferenceOrbit orbit =
      find_periodic_orbit(Morphology{}, WingPair::symmetric(WingParams{}));
  return orbit;
}

inline const Dynamics& desk_dynamics() {
  static const Dynamics dyn(Morphology{}, desk_orbit().params);
  return dyn;
}

/// Wings held still: every waveform amplitude zero.
inline WingPair frozen_wings() {
  WingParams p;
  p.phi_m = p.theta_m = p.psi_m = 0.0;
  p.theta_0 = 0.3;
  p.phi_0 = 0.2;
  return WingPair::symmetric(p);
}

}  // namespace fwuav::testing

namespace fwuav::testing {

inline const MpcExpert& desk_expert() {
  static const MpcExpert expert(desk_dynamics(), desk_orbit(), CostWeights::defaults());
  return expert;
}

/// Re-solves the expert at every period boundary.
inline Controller mpc_controller(const MpcExpert& expert) {
  return [&expert](int, double, const FreeState& s) {
    return ControlSchedule::from_u(expert.solve(s).u, expert.orbit().period(),
                                   expert.options().delta_max);
  };
}

}  // namespace fwuav::testing
