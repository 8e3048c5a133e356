#pragma once

// Central-difference gradient verification shared by the unit tests and the
// full-model check. Loss functions must be pure: every call rebuilds the
// forward pass from the current parameter values.

#include "aslora/tensor.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace aslora::testing {

// Float evaluation noise (~6e-8 relative) forces a larger step and a looser
// tolerance than the double build uses.
inline double fd_step() { return sizeof(real) == 8 ? 1e-3 : 5e-3; }
inline double fd_tolerance() { return sizeof(real) == 8 ? 1e-5 : 1e-3; }

inline double rel_err(double analytic, double numeric) {
  const double scale = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
  return std::fabs(analytic - numeric) / scale;
}

struct FdReport {
  double max_rel_err = 0.0;
  std::string worst; // "<param>[i] analytic=... numeric=..."
  int64_t checked = 0;
};

/// Compares tape gradients of loss_fn against central differences for every
/// element of every listed parameter. loss_fn runs under a tape only when
/// the caller wires one; here it is called once inside a tape for the
/// analytic pass and twice per element without one.
inline FdReport fd_check(const std::function<Tensor()>& loss_fn,
                         const std::vector<std::pair<std::string, Tensor>>& params,
                         double h) {
  for (auto& [name, p] : params) {
    Tensor t = p;
    t.clear_grad();
  }
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = loss_fn();
    tape.backward(loss);
  }
  std::vector<std::vector<real>> analytic;
  for (auto& [name, p] : params) analytic.push_back(p.grad());

  FdReport report;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor param = params[pi].second;
    for (int64_t i = 0; i < param.numel(); ++i) {
      const real saved = param.data()[i];
      param.data()[i] = static_cast<real>(saved + h);
      const double up = static_cast<double>(loss_fn().item());
      param.data()[i] = static_cast<real>(saved - h);
      const double down = static_cast<double>(loss_fn().item());
      param.data()[i] = saved;

      const double numeric = (up - down) / (2.0 * h);
      const double a = static_cast<double>(analytic[pi][static_cast<size_t>(i)]);
      const double err = rel_err(a, numeric);
      report.checked += 1;
      if (err > report.max_rel_err) {
        report.max_rel_err = err;
        report.worst = params[pi].first + "[" + std::to_string(i) +
                       "] analytic=" + std::to_string(a) +
                       " numeric=" + std::to_string(numeric);
      }
    }
  }
  return report;
}

} // namespace aslora::testing
