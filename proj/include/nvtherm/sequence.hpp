#pragma once

#include <vector>

namespace nvtherm::protocol {

// One repetition period of the pulsed measurement. Microwave pulses are
// ideal (zero duration, perfect rotations); only their placement and carrier
// matter. All times in ns.
struct MwOp {
  enum class Kind { pi, pi_half };
  Kind kind = Kind::pi;
  double f_p_MHz = 0.0;       // carrier frequency
  double delay_after_ns = 0;  // free evolution before the next op
};

struct PulseSequence {
  double laser_init_ns = 300.0;     // polarize/readout pulse length
  double t_w_ns = 1500.0;           // wait after the laser edge before MW
  std::vector<MwOp> mw_ops;
  double readout_window_ns = 300.0; // photon counting window
  double t_r_ns = 15000.0;          // full repetition period

  [[nodiscard]] double mw_total_ns() const {
    double total = 0.0;
    for (const auto& op : mw_ops) total += op.delay_after_ns;
    return total;
  }

  // throws ConfigError when the pieces do not fit into t_r
  void validate() const;
};

}  // namespace nvtherm::protocol
