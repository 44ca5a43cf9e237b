// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 iff all
// requested criteria pass. Usage: slowdrive_acceptance [AC1 ... AC15 | all]

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <map>
#include <sstream>
#include <string>

#include "slowdrive/errors.hpp"
#include "slowdrive/experiment.hpp"

using namespace slowdrive;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

ExperimentRecord run(const char* name) { return run_experiment(preset(name)); }

double max_of(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

bool strictly_decreasing(const std::vector<double>& v) {
  for (std::size_t k = 1; k < v.size(); ++k)
    if (!(v[k] < v[k - 1])) return false;
  return true;
}

std::string list(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += fmt("%s%.4g", s.empty() ? "" : " ", x);
  return s;
}

Verdict ac1() {
  const double d = max_of(run("pauli-closed-form").values("defect"));
  return {d <= 1e-11, fmt("max defect %.3e over 1000 inputs (<= 1e-11)", d)};
}

Verdict ac2() {
  const auto t = run("segment-bound");
  const double d = max_of(t.values("difference"));
  return {d <= 1e-10, fmt("sup deviation %s vs sqrt(eps)/2, max |diff| %.3e (<= 1e-10)",
                          list(t.values("sup_deviation")).c_str(), d)};
}

Verdict ac3() {
  const auto c = preset("merge-identity");
  const auto t = run_experiment(c);
  const double d = max_of(t.values("defect"));
  return {d <= 10 * c.integrator.tolerance,
          fmt("dims %s defects %s (<= %.1e)", list(t.values("dim")).c_str(), list(t.values("defect")).c_str(),
              10 * c.integrator.tolerance)};
}

Verdict ac4() {
  const auto t = run("reconstruction");
  const auto d = t.values("defect");
  const auto f = fit_scaling(t, "eps", "defect");
  const bool dec = strictly_decreasing(d);
  return {dec && f.slope >= 0.4 && f.r2 >= 0.9,
          fmt("defects %s (strictly decreasing: %s), slope %.3f (>= 0.4), r2 %.3f (>= 0.9)", list(d).c_str(),
              dec ? "yes" : "no", f.slope, f.r2)};
}

Verdict ac5() {
  const auto c = preset("interaction-picture");
  const auto t = run_experiment(c);
  const double d = max_of(t.values("defect"));
  const bool n = t.rows.size() == 20;
  return {n && d <= 10 * c.integrator.tolerance,
          fmt("%zu checkpoints, max defect %.3e (<= %.1e)", t.rows.size(), d, 10 * c.integrator.tolerance)};
}

Verdict ac6() {
  const double d = max_of(run("kato-intertwining").values("intertwining"));
  return {d <= 1e-6, fmt("max intertwining defect %.3e (<= 1e-6)", d)};
}

Verdict ac7() {
  double worst = 0.0;
  std::string where;
  for (const auto& n : preset_names()) {
    auto c = preset(n);
    if (c.experiment != Experiment::Adiabatic) continue;
    c.variant = "algebra";
    const auto t = run_experiment(c);
    const double v = max_of(t.values("max_algebra"));
    where += fmt("%s%s %.2e", where.empty() ? "" : ", ", n.c_str(), v);
    worst = std::max(worst, v);
  }
  return {worst <= 1e-8, fmt("max |P0 P0' P0| %.3e (<= 1e-8): %s", worst, where.c_str())};
}

Verdict ac8() {
  const auto t = run("adiabatic-sweep");
  const auto f = fit_scaling(t, "eps", "gapped_defect");
  const auto g = t.values("gapless_defect");
  const bool dec = strictly_decreasing(g);
  return {f.slope >= 0.7 && f.slope <= 1.3 && dec,
          fmt("gapped slope %.3f (in [0.7, 1.3]), r2 %.4f; gapless defects %s (decreasing: %s)", f.slope, f.r2,
              list(g).c_str(), dec ? "yes" : "no")};
}

Verdict ac9() {
  const auto t = run("uniform-ergodic");
  const auto v = t.values("value");
  const double r1 = v[1] / v[0], r2 = v[2] / v[1];
  const double spread = max_of(t.values("block_spread"));
  return {r1 <= 0.7 && r2 <= 0.7 && spread <= 5.0,
          fmt("value(T) %s, ratios %.3f %.3f (<= 0.7), block spread %.3f (<= 5)", list(v).c_str(), r1, r2,
              spread)};
}

Verdict ac10() {
  const auto c = preset("energy-drift");
  const auto t = run_experiment(c);
  const auto e = t.values("eps");
  const auto d = t.values("drift");
  double at_zero = -1.0, ratio = -1.0;
  for (std::size_t k = 0; k < e.size(); ++k)
    if (e[k] == 0.0) at_zero = d[k];
  for (std::size_t i = 0; i < e.size(); ++i)
    for (std::size_t j = 0; j < e.size(); ++j)
      if (e[i] > 0.0 && e[j] == e[i] / 2.0) ratio = d[j] / d[i];
  const double tol = 10 * c.integrator.tolerance;
  return {ratio >= 0.3 && ratio <= 0.8 && at_zero >= 0.0 && at_zero <= tol,
          fmt("drifts %s at eps %s, ratio %.3f (in [0.3, 0.8]), eps=0 drift %.3e (<= %.1e)", list(d).c_str(),
              list(e).c_str(), ratio, at_zero, tol)};
}

Verdict ac11() {
  const auto c = preset("cook-switching");
  const auto t = run_experiment(c);
  const auto d = t.values("difference");
  const auto T = t.values("T");
  const std::size_t peak = static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
  const std::vector<double> after(d.begin() + static_cast<long>(peak), d.end());
  const bool dec = after.size() >= 3 && strictly_decreasing(after);
  const bool horizon = std::abs(T.back() - 8.0 / *c.eps) < 1e-9;
  return {dec && horizon && d.back() <= 0.01,
          fmt("differences %s at T %s; decreasing after peak T=%.0f: %s; final %.3e at T=%.0f=8/eps (<= 0.01)",
              list(d).c_str(), list(T).c_str(), T[peak], dec ? "yes" : "no", d.back(), T.back())};
}

Verdict ac12() {
  const auto t = run("propagation");
  const auto state = t.values("state"), holds = t.values("holds"), lhs = t.values("lhs"), rhs = t.values("rhs");
  std::size_t grid = 0, ok = 0;
  double margin = INFINITY, flat = -1.0;
  for (std::size_t k = 0; k < state.size(); ++k) {
    if (state[k] == 0.0) {
      ++grid;
      ok += holds[k] == 1.0;
      margin = std::min(margin, rhs[k] / lhs[k]);
    } else {
      flat = lhs[k];
    }
  }
  return {ok == grid && flat >= 0.0 && flat <= 1e-8,
          fmt("lhs <= rhs at %zu/%zu grid points (min rhs/lhs %.2f); zero-momentum lhs %.3e (<= 1e-8)", ok, grid,
              margin, flat)};
}

Verdict ac13() {
  const auto t = run("lz-transition");
  const auto p = t.values("transition");
  std::ifstream f(std::string(SLOWDRIVE_FIXTURE_DIR) + "/lz_survival.json");
  const double frozen = nlohmann::json::parse(f).at("transition").get<double>();
  auto three = [](double x) { return fmt("%.3g", x); };
  bool stable = true;
  for (double x : p) stable = stable && three(x) == three(frozen);
  return {stable, fmt("transition %s under step halving, fixture %.10f (3 significant digits)", list(p).c_str(),
                      frozen)};
}

Verdict ac14() {
  double worst = 0.0;
  std::string name;
  for (const auto& n : preset_names()) {
    const auto p = unitarity_probe(preset(n), 10000);
    if (p.defect >= worst) {
      worst = p.defect;
      name = n;
    }
  }
  return {worst <= 1e-10, fmt("max defect %.3e over %zu presets at 1e4 steps (worst %s, <= 1e-10)", worst,
                              preset_names().size(), name.c_str())};
}

Verdict ac15() {
  std::string differ;
  for (const auto& n : preset_names()) {
    const auto c = preset(n);
    if (run_experiment(c).to_csv() != run_experiment(c).to_csv()) differ += " " + n;
  }
  return {differ.empty(), differ.empty() ? fmt("%zu presets byte-identical across two runs", preset_names().size())
                                         : "differing:" + differ};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<std::string, std::function<Verdict()>> criteria{
      {"AC1", ac1},   {"AC2", ac2},   {"AC3", ac3},   {"AC4", ac4},   {"AC5", ac5},
      {"AC6", ac6},   {"AC7", ac7},   {"AC8", ac8},   {"AC9", ac9},   {"AC10", ac10},
      {"AC11", ac11}, {"AC12", ac12}, {"AC13", ac13}, {"AC14", ac14}, {"AC15", ac15}};
  std::vector<std::string> wanted;
  for (int i = 1; i < argc; ++i) wanted.emplace_back(argv[i]);
  if (wanted.empty() || (wanted.size() == 1 && wanted[0] == "all"))
    for (int k = 1; k <= 15; ++k) wanted.push_back("AC" + std::to_string(k));
  int failed = 0;
  for (const auto& w : wanted) {
    const auto it = criteria.find(w);
    if (it == criteria.end()) {
      std::fprintf(stderr, "unknown criterion %s\n", w.c_str());
      return 2;
    }
    Verdict v;
    try {
      v = it->second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    std::printf("%s %s %s\n", w.c_str(), v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
    failed += !v.pass;
  }
  return failed ? 1 : 0;
}
