#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ovgsr/errors.hpp"
#include "ovgsr/tape.hpp"

// Finite-difference gradient verification. Always run in double: float
// has too little headroom between truncation and roundoff error for a
// meaningful tolerance.
namespace ovgsr {

struct GradCheckOptions {
  double eps = 1e-5;   // central difference step, valid range [1e-7, 1e-3]
  double tol = 1e-4;   // max allowed relative error
  int max_issues = 8;  // failing coordinates kept in the report
};

struct GradCheckIssue {
  std::string param;
  std::int64_t index = 0;
  double analytic = 0, numeric = 0, rel_err = 0;
};

struct GradCheckReport {
  bool pass = false;
  double max_rel_err = 0;
  std::int64_t coords_checked = 0;
  GradCheckIssue worst;
  std::vector<GradCheckIssue> failures;
};

// Relative error with a unit guard: coordinates whose gradient is small
// compare absolutely, large ones relatively.
inline double grad_rel_err(double analytic, double numeric) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

// run(true) must evaluate the loss AND accumulate gradients into the
// given parameters (which arrive zeroed); run(false) must evaluate the
// loss only, reading the current parameter values.
template <typename RunFn>
GradCheckReport grad_check(RunFn&& run, const std::vector<Parameter<double>*>& params,
                           GradCheckOptions opt = {}) {
  if (opt.eps < 1e-7 || opt.eps > 1e-3)
    throw InvalidConfig("grad_check: eps outside [1e-7, 1e-3]");

  for (auto* p : params) p->zero_grad();
  const double base = run(true);
  if (!std::isfinite(base)) throw NonFinite("grad_check: loss is not finite");

  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) {
    for (std::int64_t i = 0; i < p->grad.numel(); ++i)
      if (!std::isfinite(p->grad.at(i)))
        throw NonFinite("grad_check: gradient of " + p->name + " is not finite");
    analytic.push_back(p->grad.copy());
  }

  GradCheckReport rep;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter<double>& p = *params[pi];
    for (std::int64_t i = 0; i < p.value.numel(); ++i) {
      const double v = p.value.at(i);
      p.value.at(i) = v + opt.eps;
      const double lp = run(false);
      p.value.at(i) = v - opt.eps;
      const double lm = run(false);
      p.value.at(i) = v;
      if (!std::isfinite(lp) || !std::isfinite(lm))
        throw NonFinite("grad_check: perturbed loss is not finite at " + p.name);
      const double numeric = (lp - lm) / (2.0 * opt.eps);
      const double ana = analytic[pi].at(i);
      const double rel = grad_rel_err(ana, numeric);
      ++rep.coords_checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst = {p.name, i, ana, numeric, rel};
      }
      if (rel > opt.tol && static_cast<int>(rep.failures.size()) < opt.max_issues)
        rep.failures.push_back({p.name, i, ana, numeric, rel});
    }
  }
  rep.pass = rep.max_rel_err <= opt.tol;
  return rep;
}

}  // namespace ovgsr
