#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "tagforge/numgrad/tape.hpp"
#include "tagforge/rng.hpp"

namespace tagforge::numgrad {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  double gradient_scale = 0.0;  // largest |analytic| or |numeric| component
  std::size_t components_checked = 0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool pass = true;
};

/// Compares backward() against central differences (f(x+h) - f(x-h)) / 2h.
///
/// The error for a parameter is max_i |analytic_i - numeric_i| divided by the
/// largest gradient magnitude seen for that parameter (floored at 1e-12), so
/// components whose true gradient is ~0 are judged against the parameter's
/// scale instead of producing 0/0 noise. When `max_components` is non-zero
/// and smaller than a parameter, that many components are sampled with
/// `seed`.
///
/// `loss` must be pure; models with dropout must build it with dropout off.
inline GradCheckReport grad_check(const std::function<Var(Tape&)>& loss, const std::vector<Parameter*>& params,
                                  double h = 1e-5, double tol = 1e-6, std::size_t max_components = 0,
                                  std::uint64_t seed = 7) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var l = loss(tape);
    tape.backward(l);
  }
  auto eval = [&] {
    Tape tape(false);
    return loss(tape).value().item();
  };

  GradCheckReport report;
  Pcg32 rng(seed, 0x9cULL);
  for (Parameter* p : params) {
    GradCheckEntry entry;
    entry.name = p->name;
    std::vector<std::size_t> idx(p->value.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (max_components != 0 && max_components < idx.size()) {
      rng.shuffle(idx);
      idx.resize(max_components);
      std::sort(idx.begin(), idx.end());
    }
    double max_diff = 0.0, scale = 1e-12;
    for (std::size_t i : idx) {
      const double orig = p->value.data[i];
      p->value.data[i] = orig + h;
      const double fp = eval();
      p->value.data[i] = orig - h;
      const double fm = eval();
      p->value.data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = p->grad.data[i];
      max_diff = std::max(max_diff, std::abs(analytic - numeric));
      scale = std::max({scale, std::abs(analytic), std::abs(numeric)});
    }
    entry.components_checked = idx.size();
    entry.max_rel_error = max_diff / scale;
    entry.max_abs_error = max_diff;
    entry.gradient_scale = scale;
    entry.pass = entry.max_rel_error < tol;
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.pass = report.pass && entry.pass;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace tagforge::numgrad
