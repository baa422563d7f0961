// SPDX-License-Identifier: Apache-2.0

#ifndef FEDSIM_CSV_HPP
#define FEDSIM_CSV_HPP

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "fedsim/runner.hpp"

namespace fedsim {

// Stable column contract; never reordered within a major version.
inline const char* csv_header() {
  return "round,test_loss,test_acc,train_loss,theta_norm,h_norm,gbar_norm,"
         "cos_h_g,lr,beta";
}

inline std::string csv_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

inline void write_csv_row(std::ostream& os, const RoundMetrics& m) {
  os << m.round << ',' << csv_real(m.test_loss) << ',' << csv_real(m.test_acc)
     << ',' << csv_real(m.train_loss) << ',' << csv_real(m.theta_norm) << ','
     << csv_real(m.h_norm) << ',' << csv_real(m.gbar_norm) << ','
     << csv_real(m.cos_h_g) << ',' << csv_real(m.lr) << ','
     << csv_real(m.beta) << '\n';
}

// Emits the header plus one row per evaluated round.
inline void write_csv(std::ostream& os, const std::vector<RoundMetrics>& log) {
  os << csv_header() << '\n';
  for (const RoundMetrics& m : log) {
    if (m.evaluated) write_csv_row(os, m);
  }
}

}  // namespace fedsim

#endif  // FEDSIM_CSV_HPP
