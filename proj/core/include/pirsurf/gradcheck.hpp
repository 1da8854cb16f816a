#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pirsurf/optim.hpp"

namespace pirsurf {

struct GradCheckRow {
  std::string path;
  int checked = 0;
  real max_rel_err = 0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  real tolerance = 1e-3;
  real fd_step = 1e-4;
  bool all_pass() const {
    for (const auto& r : rows)
      if (!r.pass) return false;
    return !rows.empty();
  }
};

// Central finite-difference validation of every differentiable path on a
// toy scene (8^3 grid, 6x4x4 cubemap): analytic pullbacks vs (L(p+h)-L(p-h))/2h.
GradCheckReport run_gradcheck(std::uint64_t seed);

std::string format_report(const GradCheckReport& report);

}  // namespace pirsurf
