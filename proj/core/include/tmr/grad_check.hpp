#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "tmr/params.hpp"
#include "tmr/tensor.hpp"

namespace tmr {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  double worst() const {
    double w = 0.0;
    for (const auto& e : entries) w = std::max(w, e.max_rel_err);
    return w;
  }

  const GradCheckEntry* worst_entry() const {
    const GradCheckEntry* w = nullptr;
    for (const auto& e : entries) {
      if (!w || e.max_rel_err > w->max_rel_err) w = &e;
    }
    return w;
  }

  bool pass(double tol) const { return worst() < tol; }

  std::string summary(double tol) const {
    std::string s;
    char line[256];
    for (const auto& e : entries) {
      std::snprintf(line, sizeof(line), "%-28s max rel err %.3e %s\n", e.name.c_str(),
                    e.max_rel_err, e.max_rel_err < tol ? "ok" : "FAIL");
      s += line;
    }
    return s;
  }
};

/// Central finite-difference check of analytic gradients.
///
/// `loss` evaluates the scalar objective at the current parameter values; when
/// its argument is true it must also populate parameter gradients via a fresh
/// tape + backward. The builder must be deterministic. Each trainable entry
/// is perturbed by +/-h and the analytic gradient is compared against
/// (f(p+h) - f(p-h)) / 2h with relative error
/// |ga - gn| / max(1e-8, |ga| + |gn|).
template <class T>
GradCheckReport grad_check(ParamSet<T>& params, const std::function<double(bool)>& loss,
                           double h) {
  params.zero_grads();
  loss(true);

  // Snapshot analytic grads before the FD sweep mutates values.
  std::vector<std::vector<T>> analytic;
  for (const auto& name : params.names()) {
    analytic.push_back(params.get(name).grad);
  }

  GradCheckReport report;
  std::size_t pi = 0;
  for (const auto& name : params.names()) {
    Tensor<T>& p = params.get(name);
    if (!p.requires_grad) {
      ++pi;
      continue;
    }
    GradCheckEntry entry;
    entry.name = name;
    for (std::size_t i = 0; i < p.size(); ++i) {
      T orig = p.data[i];
      p.data[i] = orig + static_cast<T>(h);
      double fp = loss(false);
      p.data[i] = orig - static_cast<T>(h);
      double fm = loss(false);
      p.data[i] = orig;
      double gn = (fp - fm) / (2.0 * h);
      double ga = static_cast<double>(analytic[pi].empty() ? T(0) : analytic[pi][i]);
      double rel = std::abs(ga - gn) / std::max(1e-8, std::abs(ga) + std::abs(gn));
      if (rel > entry.max_rel_err) {
        entry.max_rel_err = rel;
        entry.worst_index = i;
        entry.analytic = ga;
        entry.numeric = gn;
      }
    }
    report.entries.push_back(std::move(entry));
    ++pi;
  }
  return report;
}

}  // namespace tmr
