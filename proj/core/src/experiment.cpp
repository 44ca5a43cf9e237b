#include "slowdrive/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "slowdrive/averaging.hpp"
#include "slowdrive/ergodic.hpp"
#include "slowdrive/errors.hpp"
#include "slowdrive/kato.hpp"
#include "slowdrive/lz.hpp"
#include "slowdrive/parallel.hpp"

namespace slowdrive {

using nlohmann::json;

const char* experiment_name(Experiment e) {
  switch (e) {
    case Experiment::LZ: return "lz";
    case Experiment::Averaging: return "averaging";
    case Experiment::Adiabatic: return "adiabatic";
    case Experiment::Ergodic: return "ergodic";
    case Experiment::Energy: return "energy";
    case Experiment::Scattering: return "scattering";
    case Experiment::AC: return "ac";
  }
  return "?";
}

Experiment parse_experiment(const std::string& name) {
  static const std::map<std::string, Experiment> names{
      {"lz", Experiment::LZ},         {"averaging", Experiment::Averaging}, {"avg", Experiment::Averaging},
      {"adiabatic", Experiment::Adiabatic}, {"ergodic", Experiment::Ergodic}, {"energy", Experiment::Energy},
      {"scattering", Experiment::Scattering}, {"scatter", Experiment::Scattering}, {"ac", Experiment::AC}};
  const auto it = names.find(name);
  if (it == names.end()) throw ValidationError("experiment: unknown name '" + name + "'");
  return it->second;
}

PotentialFn make_potential(const PotentialConfig& p) {
  return [p](double x, double s) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const double g = s - std::sin(two_pi * s) / two_pi;
    const double d = x - p.offset;
    return (p.amplitude + p.ramp * g) * (1.0 + p.modulation * std::sin(two_pi * p.frequency * s)) *
           std::exp(-d * d / p.spread);
  };
}

// ---------------------------------------------------------------------------
// Validation

namespace {

enum class Field {
  B, v, eps, eps_list, a, sigma, t_max, slow_time, block_length, sites, samples, grid_points, count, levels,
  dims, R_list, T_list, packet, potential, tail
};

const char* field_name(Field f) {
  switch (f) {
    case Field::B: return "B";
    case Field::v: return "v";
    case Field::eps: return "eps";
    case Field::eps_list: return "eps_list";
    case Field::a: return "a";
    case Field::sigma: return "sigma";
    case Field::t_max: return "t_max";
    case Field::slow_time: return "slow_time";
    case Field::block_length: return "block_length";
    case Field::sites: return "sites";
    case Field::samples: return "samples";
    case Field::grid_points: return "grid_points";
    case Field::count: return "count";
    case Field::levels: return "levels";
    case Field::dims: return "dims";
    case Field::R_list: return "R_list";
    case Field::T_list: return "T_list";
    case Field::packet: return "packet";
    case Field::potential: return "potential";
    case Field::tail: return "tail";
  }
  return "?";
}

bool present(const ExperimentConfig& c, Field f) {
  switch (f) {
    case Field::B: return c.B.has_value();
    case Field::v: return c.v.has_value();
    case Field::eps: return c.eps.has_value();
    case Field::eps_list: return !c.eps_list.empty();
    case Field::a: return c.a.has_value();
    case Field::sigma: return c.sigma.has_value();
    case Field::t_max: return c.t_max.has_value();
    case Field::slow_time: return c.slow_time.has_value();
    case Field::block_length: return c.block_length.has_value();
    case Field::sites: return c.sites.has_value();
    case Field::samples: return c.samples.has_value();
    case Field::grid_points: return c.grid_points.has_value();
    case Field::count: return c.count.has_value();
    case Field::levels: return c.levels.has_value();
    case Field::dims: return !c.dims.empty();
    case Field::R_list: return !c.R_list.empty();
    case Field::T_list: return !c.T_list.empty();
    case Field::packet: return c.packet.has_value();
    case Field::potential: return c.potential.has_value();
    case Field::tail: return c.tail.has_value();
  }
  return false;
}

struct VariantSpec {
  Experiment experiment;
  const char* variant;
  std::vector<Field> required;
};

const std::vector<VariantSpec>& variants() {
  using F = Field;
  static const std::vector<VariantSpec> v{
      {Experiment::LZ, "pauli", {F::count}},
      {Experiment::LZ, "survival", {F::B, F::eps, F::t_max, F::samples}},
      {Experiment::LZ, "transition", {F::B, F::eps, F::t_max, F::count}},
      {Experiment::Averaging, "segment-bound", {F::B, F::eps_list}},
      {Experiment::Averaging, "merge", {F::dims}},
      {Experiment::Averaging, "reconstruction", {F::B, F::eps_list, F::slow_time}},
      {Experiment::Averaging, "interaction", {F::B, F::eps, F::t_max, F::count}},
      {Experiment::Adiabatic, "intertwining", {F::B, F::v, F::eps, F::grid_points, F::count}},
      {Experiment::Adiabatic, "algebra", {F::B, F::v, F::grid_points}},
      {Experiment::Adiabatic, "sweep", {F::B, F::v, F::eps_list, F::grid_points}},
      {Experiment::Ergodic, "uniform", {F::sites, F::sigma, F::T_list, F::samples, F::block_length}},
      {Experiment::Ergodic, "propagation", {F::sites, F::eps, F::R_list, F::T_list, F::packet}},
      {Experiment::Energy, "drift", {F::sites, F::eps_list, F::t_max, F::count, F::packet, F::potential}},
      {Experiment::Scattering, "cook", {F::sites, F::eps, F::a, F::T_list, F::packet, F::potential, F::tail}},
      {Experiment::AC, "long-time", {F::sites, F::eps, F::T_list, F::packet, F::potential}},
  };
  return v;
}

const VariantSpec* find_variant(Experiment e, const std::string& name) {
  for (const auto& v : variants())
    if (v.experiment == e && name == v.variant) return &v;
  return nullptr;
}

bool increasing(const std::vector<double>& x) {
  for (std::size_t k = 1; k < x.size(); ++k)
    if (!(x[k] > x[k - 1])) return false;
  return true;
}

}  // namespace

void ExperimentConfig::validate() const {
  std::vector<std::string> bad;
  try {
    integrator.validate();
  } catch (const ValidationError& e) {
    bad.push_back(std::string("integrator (") + e.what() + ")");
  }
  const VariantSpec* spec = find_variant(experiment, variant);
  if (!spec) {
    std::string known;
    for (const auto& v : variants())
      if (v.experiment == experiment) known += std::string(known.empty() ? "" : ", ") + v.variant;
    bad.push_back("variant: '" + variant + "' is not one of {" + known + "} for " + experiment_name(experiment));
  } else {
    for (Field f : spec->required)
      if (!present(*this, f)) bad.push_back(std::string(field_name(f)) + ": required");
  }
  if (name.empty() || name.find_first_of("/\\") != std::string::npos)
    bad.push_back("name: must be non-empty without path separators");
  if (B && !(*B >= 0.0 && std::isfinite(*B))) bad.push_back("B: must be finite and >= 0");
  if (v && !std::isfinite(*v)) bad.push_back("v: must be finite");
  const bool sweep_eps = experiment == Experiment::LZ;
  if (eps && !(*eps > 0.0 && std::isfinite(*eps) && (sweep_eps || *eps < 1.0)))
    bad.push_back(sweep_eps ? "eps: must be > 0" : "eps: must lie in (0, 1)");
  for (std::size_t k = 0; k < eps_list.size(); ++k) {
    if (!(eps_list[k] >= 0.0 && eps_list[k] < 1.0)) bad.push_back("eps_list: entries must lie in [0, 1)");
    if (k > 0 && !(eps_list[k] < eps_list[k - 1])) bad.push_back("eps_list: must be strictly decreasing");
  }
  if (experiment != Experiment::Energy && std::find(eps_list.begin(), eps_list.end(), 0.0) != eps_list.end())
    bad.push_back("eps_list: eps = 0 is only meaningful for energy");
  if (a && !(*a > 0.0)) bad.push_back("a: must be > 0");
  if (sigma && !(*sigma > 0.0)) bad.push_back("sigma: must be > 0");
  if (t_max && !(*t_max > 0.0 && std::isfinite(*t_max))) bad.push_back("t_max: must be > 0");
  if (slow_time && !(*slow_time > 0.0)) bad.push_back("slow_time: must be > 0");
  if (block_length && !(*block_length > 0.0)) bad.push_back("block_length: must be > 0");
  if (sites && *sites < 8) bad.push_back("sites: must be >= 8");
  if (samples && *samples < 3) bad.push_back("samples: must be >= 3");
  if (grid_points && *grid_points < 5) bad.push_back("grid_points: must be >= 5");
  if (count && *count < 1) bad.push_back("count: must be >= 1");
  if (levels && (*levels < 1 || *levels > 4)) bad.push_back("levels: must lie in [1, 4]");
  for (int d : dims)
    if (d < 1 || d > 64) bad.push_back("dims: entries must lie in [1, 64]");
  for (double r : R_list)
    if (!(r > 0.0)) bad.push_back("R_list: entries must be > 0");
  if (!T_list.empty() && !(T_list.front() >= 0.0 && increasing(T_list)))
    bad.push_back("T_list: must be non-negative and strictly increasing");
  if (packet && !(packet->width > 0.0)) bad.push_back("packet.width: must be > 0");
  for (const auto* p : {&potential, &tail})
    if (*p && !((*p)->spread > 0.0)) bad.push_back(std::string(p == &potential ? "potential" : "tail") + ".spread: must be > 0");
  if (experiment == Experiment::Adiabatic && sites && !potential)
    bad.push_back("potential: required with sites (bound-state lattice track)");
  if (family != "lz" && family != "constant") bad.push_back("family: must be lz or constant");
  if (!bad.empty()) {
    std::string msg = "ExperimentConfig '" + name + "':";
    for (const auto& b : bad) msg += "\n  " + b;
    throw ValidationError(msg);
  }
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json packet_json(const PacketConfig& p) { return {{"x0", p.x0}, {"k0", p.k0}, {"width", p.width}}; }

json potential_json(const PotentialConfig& p) {
  return {{"amplitude", p.amplitude}, {"ramp", p.ramp},     {"modulation", p.modulation},
          {"frequency", p.frequency}, {"spread", p.spread}, {"offset", p.offset}};
}

}  // namespace

std::string ExperimentConfig::to_json(bool include_output) const {
  json j;
  j["experiment"] = experiment_name(experiment);
  j["variant"] = variant;
  j["name"] = name;
  j["seed"] = seed;
  if (include_output) j["output"] = output;
  j["integrator"] = {{"step", integrator.step}, {"tolerance", integrator.tolerance}, {"max_steps", integrator.max_steps}};
  j["family"] = family;
  auto opt = [&j](const char* k, const auto& o) {
    if (o) j[k] = *o;
  };
  opt("B", B);
  opt("v", v);
  opt("eps", eps);
  opt("a", a);
  opt("kappa", kappa);
  opt("sigma", sigma);
  opt("t_max", t_max);
  opt("slow_time", slow_time);
  opt("block_length", block_length);
  opt("sites", sites);
  opt("samples", samples);
  opt("grid_points", grid_points);
  opt("count", count);
  opt("levels", levels);
  if (!eps_list.empty()) j["eps_list"] = eps_list;
  if (!dims.empty()) j["dims"] = dims;
  if (!R_list.empty()) j["R_list"] = R_list;
  if (!T_list.empty()) j["T_list"] = T_list;
  if (packet) j["packet"] = packet_json(*packet);
  if (potential) j["potential"] = potential_json(*potential);
  if (tail) j["tail"] = potential_json(*tail);
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config: top level must be an object");
  ExperimentConfig c;
  std::vector<std::string> bad;
  auto get = [&](const json& src, const std::string& key, auto& out) {
    try {
      out = src.at(key).get<std::decay_t<decltype(out)>>();
    } catch (const json::exception&) {
      bad.push_back(key + ": wrong type");
    }
  };
  auto get_opt = [&](const std::string& key, auto& out) {
    typename std::decay_t<decltype(out)>::value_type v{};
    get(j, key, v);
    out = v;
  };
  auto object = [&](const std::string& key, const std::set<std::string>& known, auto fill) {
    const json& o = j.at(key);
    if (!o.is_object()) {
      bad.push_back(key + ": must be an object");
      return;
    }
    for (const auto& [k, val] : o.items()) {
      if (!known.count(k)) {
        bad.push_back(key + "." + k + ": unknown field");
        continue;
      }
      if (!val.is_number()) {
        bad.push_back(key + "." + k + ": must be a number");
        continue;
      }
      fill(k, val.template get<double>());
    }
  };
  const std::set<std::string> potential_keys{"amplitude", "ramp", "modulation", "frequency", "spread", "offset"};
  auto fill_potential = [](PotentialConfig& p) {
    return [&p](const std::string& k, double x) {
      if (k == "amplitude") p.amplitude = x;
      else if (k == "ramp") p.ramp = x;
      else if (k == "modulation") p.modulation = x;
      else if (k == "frequency") p.frequency = x;
      else if (k == "spread") p.spread = x;
      else p.offset = x;
    };
  };

  for (const auto& [key, val] : j.items()) {
    if (key == "experiment") {
      std::string s;
      get(j, key, s);
      try {
        c.experiment = parse_experiment(s);
      } catch (const ValidationError& e) {
        bad.push_back(e.what());
      }
    } else if (key == "variant") get(j, key, c.variant);
    else if (key == "name") get(j, key, c.name);
    else if (key == "seed") get(j, key, c.seed);
    else if (key == "output") get(j, key, c.output);
    else if (key == "family") get(j, key, c.family);
    else if (key == "integrator") {
      if (!val.is_object()) {
        bad.push_back("integrator: must be an object");
        continue;
      }
      for (const auto& [k, x] : val.items()) {
        if (k == "step") get(val, k, c.integrator.step);
        else if (k == "tolerance") get(val, k, c.integrator.tolerance);
        else if (k == "max_steps") get(val, k, c.integrator.max_steps);
        else bad.push_back("integrator." + k + ": unknown field");
      }
    } else if (key == "B") get_opt(key, c.B);
    else if (key == "v") get_opt(key, c.v);
    else if (key == "eps") get_opt(key, c.eps);
    else if (key == "a") get_opt(key, c.a);
    else if (key == "kappa") get_opt(key, c.kappa);
    else if (key == "sigma") get_opt(key, c.sigma);
    else if (key == "t_max") get_opt(key, c.t_max);
    else if (key == "slow_time") get_opt(key, c.slow_time);
    else if (key == "block_length") get_opt(key, c.block_length);
    else if (key == "sites") get_opt(key, c.sites);
    else if (key == "samples") get_opt(key, c.samples);
    else if (key == "grid_points") get_opt(key, c.grid_points);
    else if (key == "count") get_opt(key, c.count);
    else if (key == "levels") get_opt(key, c.levels);
    else if (key == "eps_list") get(j, key, c.eps_list);
    else if (key == "dims") get(j, key, c.dims);
    else if (key == "R_list") get(j, key, c.R_list);
    else if (key == "T_list") get(j, key, c.T_list);
    else if (key == "packet") {
      c.packet = PacketConfig{};
      object(key, {"x0", "k0", "width"}, [&c](const std::string& k, double x) {
        if (k == "x0") c.packet->x0 = x;
        else if (k == "k0") c.packet->k0 = x;
        else c.packet->width = x;
      });
    } else if (key == "potential") {
      c.potential = PotentialConfig{};
      object(key, potential_keys, fill_potential(*c.potential));
    } else if (key == "tail") {
      c.tail = PotentialConfig{};
      object(key, potential_keys, fill_potential(*c.tail));
    } else {
      bad.push_back(key + ": unknown field");
    }
  }
  if (!j.contains("experiment")) bad.push_back("experiment: required");
  if (!j.contains("variant")) bad.push_back("variant: required");
  if (!bad.empty()) {
    std::string msg = "config:";
    for (const auto& b : bad) msg += "\n  " + b;
    throw ValidationError(msg);
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Records

std::size_t ExperimentRecord::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw InvalidArgument("ExperimentRecord: no column '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

std::vector<double> ExperimentRecord::values(const std::string& name) const {
  const std::size_t c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.at(c));
  return out;
}

std::string ExperimentRecord::to_csv() const {
  std::string out;
  for (std::size_t k = 0; k < columns.size(); ++k) out += (k ? "," : "") + columns[k];
  out += '\n';
  char buf[40];
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < r.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", r[k]);
      if (k) out += ',';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

ExperimentRecord ExperimentRecord::from_csv(const std::string& text) {
  ExperimentRecord t;
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) parts.push_back(item);
    return parts;
  };
  if (!std::getline(in, line)) throw InvalidArgument("ExperimentRecord: empty CSV");
  t.columns = split(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto parts = split(line);
    if (parts.size() != t.columns.size())
      throw InvalidArgument("ExperimentRecord: row " + std::to_string(lineno) + " has the wrong number of fields");
    std::vector<double> row;
    for (const auto& p : parts) {
      try {
        row.push_back(std::stod(p));
      } catch (const std::exception&) {
        throw InvalidArgument("ExperimentRecord: row " + std::to_string(lineno) + ": '" + p + "' is not a number");
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string content_hash(const std::string& bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw Error("content_hash: EVP_MD_CTX_new failed");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 && EVP_DigestFinal_ex(ctx, md, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error("content_hash: SHA-1 failed");
  std::string hex;
  char buf[3];
  for (unsigned int k = 0; k < len; ++k) {
    std::snprintf(buf, sizeof buf, "%02x", md[k]);
    hex += buf;
  }
  return hex;
}

// ---------------------------------------------------------------------------
// Runners

namespace {

struct Table {
  ExperimentRecord rec;
  Table(std::vector<std::string> cols, std::size_t keys) {
    rec.columns = std::move(cols);
    rec.key_columns = keys;
  }
  void add(std::vector<double> row) {
    if (row.size() != rec.columns.size()) throw Error("internal: row width differs from header");
    rec.rows.push_back(std::move(row));
  }
  // Rows computed on the worker pool, emitted in index order.
  template <class Fn>
  void sweep(std::size_t n, Fn fn) {
    std::vector<std::vector<double>> rows(n);
    parallel_for(n, [&](std::size_t i) { rows[i] = fn(i); });
    for (auto& r : rows) add(std::move(r));
  }
};

double b(bool x) { return x ? 1.0 : 0.0; }

LatticeModel lattice(const ExperimentConfig& c, bool with_potential = true) {
  LatticeModel m;
  m.sites = *c.sites;
  if (c.sigma) m.sigma = *c.sigma;
  if (with_potential && c.potential) m.potential = make_potential(*c.potential);
  return m;
}

Vector packet_state(const ExperimentConfig& c, const LatticeModel& m) {
  const auto& p = *c.packet;
  return gaussian_packet(m, p.x0, p.k0, p.width).amplitudes();
}

LatticeModel switching_model(const ExperimentConfig& c) {
  SwitchingProfile prof;
  prof.W0 = make_potential(*c.potential);
  prof.W1 = make_potential(*c.tail);
  prof.a = *c.a;
  return with_switching(lattice(c, false), prof);
}

SpectralTrack gapped_track(const ExperimentConfig& c) {
  return SpectralTrack(gapped_sweep_family(*c.B, *c.v), uniform_grid(0.0, 1.0, *c.grid_points));
}

SpectralTrack bound_state_track(const ExperimentConfig& c) {
  TrackOptions to;
  to.continuum_threshold = 0.0;
  return SpectralTrack(lattice_family(lattice(c)), uniform_grid(0.0, 1.0, *c.grid_points), to);
}

DrivenHamiltonian averaging_family(const ExperimentConfig& c) {
  if (c.family == "constant")
    return constant_family(HermitianOperator(*c.B * pauli(1) + c.v.value_or(0.5) * pauli(3)));
  return lz_family(*c.B);
}

struct RandomPair {
  Generator a, b;
};

// Smooth random families on [0, 1] with ‖·‖ = O(1).
RandomPair random_pair(int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed + static_cast<std::uint64_t>(dim));
  std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  auto herm = [&] {
    Matrix m(dim, dim);
    for (Index i = 0; i < dim; ++i)
      for (Index j = 0; j < dim; ++j) m(i, j) = Complex(nd(rng), nd(rng));
    return Matrix(0.5 * (m + m.adjoint()));
  };
  const Matrix a0 = herm(), a1 = herm(), b0 = herm(), b1 = herm();
  return {[a0, a1](double t) { return HermitianOperator::symmetrized(a0 + std::sin(3 * t) * a1); },
          [b0, b1](double t) { return HermitianOperator::symmetrized(b0 + t * t * b1); }};
}

Generator negated(Generator g) {
  return [g = std::move(g)](double t) { return g(t) * -1.0; };
}

ExperimentRecord run_lz(const ExperimentConfig& c) {
  if (c.variant == "pauli") {
    Table t({"index", "a", "b_norm", "defect"}, 1);
    std::mt19937_64 rng(c.seed);
    std::normal_distribution<double> nd(0.0, 2.0);
    for (std::size_t i = 0; i < *c.count; ++i) {
      const double a = nd(rng);
      const std::array<double, 3> bv{nd(rng), nd(rng), nd(rng)};
      const Matrix h = a * pauli(0) + bv[0] * pauli(1) + bv[1] * pauli(2) + bv[2] * pauli(3);
      Eigen::SelfAdjointEigenSolver<Matrix> es(h);
      const Vector ph = (es.eigenvalues().cast<Complex>() * Complex(0.0, -1.0)).array().exp();
      const Matrix ref = es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
      const double bn = std::sqrt(bv[0] * bv[0] + bv[1] * bv[1] + bv[2] * bv[2]);
      t.add({static_cast<double>(i), a, bn, operator_norm(pauli_exp(a, bv).matrix() - ref)});
    }
    return t.rec;
  }
  const LZModel m{*c.B, *c.eps};
  SurvivalOptions opt;
  opt.t_max = *c.t_max;
  opt.integrator = c.integrator;
  if (c.variant == "survival") {
    opt.points = static_cast<int>(*c.samples);
    const auto curve = lz_survival_curve(m, opt);
    Table t({"t", "survival"}, 1);
    for (std::size_t k = 0; k < curve.t.size(); ++k) t.add({curve.t[k], curve.survival[k]});
    return t.rec;
  }
  Table t({"step", "transition", "excitation", "steps"}, 1);
  t.sweep(*c.count, [&](std::size_t k) {
    SurvivalOptions o = opt;
    o.integrator.step = c.integrator.step / static_cast<double>(std::int64_t{1} << k);
    const auto curve = lz_survival_curve(m, o);
    return std::vector<double>{o.integrator.step, curve.transition, curve.excitation, static_cast<double>(curve.steps)};
  });
  return t.rec;
}

ExperimentRecord run_averaging(const ExperimentConfig& c) {
  if (c.variant == "segment-bound") {
    Table t({"eps", "sup_deviation", "predicted", "difference"}, 1);
    t.sweep(c.eps_list.size(), [&](std::size_t k) {
      const double eps = c.eps_list[k];
      const auto s = AveragingSchedule::from_eps(eps, 1.0 / std::sqrt(eps));
      const double d = averaging_deviation_sup(lz_family(*c.B), s, std::nullopt, 0,
                                               static_cast<int>(c.samples.value_or(2001)));
      const double p = std::sqrt(eps) / 2.0;
      return std::vector<double>{eps, d, p, std::abs(d - p)};
    });
    return t.rec;
  }
  if (c.variant == "merge") {
    Table t({"dim", "defect", "tolerance"}, 1);
    t.sweep(c.dims.size(), [&](std::size_t k) {
      const int dim = c.dims[k];
      const auto [a, bg] = random_pair(dim, c.seed);
      const auto merged = merge_generators(a, bg, c.integrator);
      const auto lhs = time_ordered_exp(negated(merged), 0.0, 1.0, c.integrator);
      const auto rhs =
          time_ordered_exp(negated(a), 0.0, 1.0, c.integrator) * time_ordered_exp(negated(bg), 0.0, 1.0, c.integrator);
      return std::vector<double>{static_cast<double>(dim), (lhs.matrix() - rhs.matrix()).norm(), c.integrator.tolerance};
    });
    return t.rec;
  }
  const auto fam = averaging_family(c);
  const StateVector psi0 = StateVector::basis(2, 0);
  if (c.variant == "reconstruction") {
    Table t({"eps", "t", "defect", "alt_defect", "raw_norm", "u2_defect"}, 1);
    t.sweep(c.eps_list.size(), [&](std::size_t k) {
      const double eps = c.eps_list[k];
      const double time = *c.slow_time / eps;
      const auto s = AveragingSchedule::from_eps(eps, time);
      const auto r = reconstruct_solution(fam, s, psi0, time, c.integrator, c.levels.value_or(2));
      return std::vector<double>{eps, time, r.defect, r.alt_defect, r.raw_norm, r.u2_defect};
    });
    return t.rec;
  }
  const auto s = AveragingSchedule::from_eps(*c.eps, *c.t_max);
  std::vector<double> cps;
  for (std::size_t k = 1; k <= *c.count; ++k)
    cps.push_back(*c.t_max * static_cast<double>(k) / static_cast<double>(*c.count));
  const auto d = interaction_picture_defects(fam, s, psi0, cps, c.integrator);
  Table t({"t", "defect"}, 1);
  for (std::size_t k = 0; k < cps.size(); ++k) t.add({cps[k], d[k]});
  return t.rec;
}

double max_algebra(const SpectralTrack& tr, double* at) {
  double best = 0.0;
  for (std::size_t k = 0; k < tr.size(); ++k) {
    const Matrix p = tr.projection(k);
    const double v = operator_norm(p * tr.derivative(k).value.matrix() * p);
    if (v >= best) {
      best = v;
      *at = tr.grid()[k];
    }
  }
  return best;
}

ExperimentRecord run_adiabatic(const ExperimentConfig& c) {
  if (c.variant == "intertwining") {
    const SpectralTrack tr = gapped_track(c);
    Table t({"t", "intertwining", "budget", "steps"}, 1);
    t.sweep(*c.count, [&](std::size_t k) {
      const double time = static_cast<double>(k + 1) / (static_cast<double>(*c.count) * *c.eps);
      const auto r = kato_propagate(tr, *c.eps, time, c.integrator);
      return std::vector<double>{time, r.intertwining_defect, r.budget, static_cast<double>(r.steps)};
    });
    return t.rec;
  }
  if (c.variant == "algebra") {
    Table t({"track", "points", "max_algebra", "at_s", "min_gap"}, 1);
    std::vector<SpectralTrack> tracks{gapped_track(c)};
    if (c.sites) tracks.push_back(bound_state_track(c));
    for (std::size_t k = 0; k < tracks.size(); ++k) {
      double at = 0.0;
      const double v = max_algebra(tracks[k], &at);
      t.add({static_cast<double>(k), static_cast<double>(tracks[k].size()), v, at, tracks[k].min_gap()});
    }
    return t.rec;
  }
  const SpectralTrack gapped = gapped_track(c);
  std::optional<SpectralTrack> gapless;
  std::vector<std::string> cols{"eps", "gapped_defect", "gapped_fidelity"};
  if (c.sites) {
    gapless.emplace(bound_state_track(c));
    cols.insert(cols.end(), {"gapless_defect", "gapless_fidelity"});
  }
  Table t(cols, 1);
  t.sweep(c.eps_list.size(), [&](std::size_t k) {
    const double eps = c.eps_list[k];
    const std::vector<double> at{1.0 / eps};
    const auto g = adiabatic_error(gapped, eps, at, c.integrator);
    std::vector<double> row{eps, g.defect[0], g.fidelity[0]};
    if (gapless) {
      const auto r = adiabatic_error(*gapless, eps, at, c.integrator);
      row.insert(row.end(), {r.defect[0], r.fidelity[0]});
    }
    return row;
  });
  return t.rec;
}

ExperimentRecord run_ergodic(const ExperimentConfig& c) {
  const LatticeModel m = lattice(c);
  if (c.variant == "uniform") {
    const HermitianOperator h = lattice_hamiltonian(m, 0.0);
    RealVector w(m.sites);
    for (Index j = 0; j < m.sites; ++j) w(j) = std::pow(m.bracket(j), -m.sigma);
    const PiecewiseGenerator dyn({0.0, c.T_list.back()}, {h});
    Table t({"T", "value", "power_value", "block_spread", "blocks", "resolution_change"}, 1);
    t.sweep(c.T_list.size(), [&](std::size_t k) {
      const double T = c.T_list[k];
      const auto r = uniform_time_average(dyn, HermitianOperator::diagonal(w), identity_projector(), T, *c.samples,
                                          *c.block_length);
      return std::vector<double>{T, r.value, r.power_value, r.block_spread,
                                 static_cast<double>(r.block_values.size()), r.resolution_change};
    });
    return t.rec;
  }
  Table t({"state", "R", "T", "lhs", "rhs", "local_term", "max_edge_mass", "holds"}, 3);
  const Vector psi = packet_state(c, m);
  PropagationConfig pc;
  if (c.samples) pc.samples = *c.samples;
  const std::size_t nt = c.T_list.size();
  t.sweep(c.R_list.size() * nt, [&](std::size_t k) {
    PropagationConfig q = pc;
    q.R = c.R_list[k / nt];
    const double T = c.T_list[k % nt];
    const auto e = propagation_estimate(m, *c.eps, q, psi, T, c.integrator);
    return std::vector<double>{0.0, q.R, T, e.lhs, e.rhs, e.local_term, e.max_edge_mass, b(e.holds)};
  });
  // Flat state: p annihilates it away from the two end sites.
  pc.R = c.R_list.front();
  pc.edge_tolerance = 1.0;
  const Vector flat = Vector::Ones(m.sites) / std::sqrt(static_cast<double>(m.sites));
  const auto e = propagation_estimate(m, *c.eps, pc, flat, c.T_list.front(), c.integrator);
  t.add({1.0, pc.R, c.T_list.front(), e.lhs, e.rhs, e.local_term, e.max_edge_mass, b(e.holds)});
  return t.rec;
}

ExperimentRecord run_energy(const ExperimentConfig& c) {
  const LatticeModel m = lattice(c);
  const Vector psi = packet_state(c, m);
  Table t({"eps", "drift"}, 1);
  t.sweep(c.eps_list.size(), [&](std::size_t k) {
    const double eps = c.eps_list[k];
    return std::vector<double>{eps, energy_drift(lattice_family(m), eps, psi, *c.t_max, *c.count, c.integrator).drift};
  });
  return t.rec;
}

ExperimentRecord run_scattering(const ExperimentConfig& c) {
  const LatticeModel m = switching_model(c);
  CookOptions opt;
  opt.integrator = c.integrator;
  const auto s = cook_wave_operator(m, *c.eps, packet_state(c, m), c.T_list, opt);
  Table t({"T", "difference", "boundary_deviation"}, 1);
  for (std::size_t k = 0; k < s.difference.size(); ++k) t.add({s.T[k], s.difference[k], s.boundary_deviation[k]});
  return t.rec;
}

ExperimentRecord run_ac(const ExperimentConfig& c) {
  const LatticeModel m = lattice(c);
  const Vector psi = packet_state(c, m);
  Table t({"T", "window", "window_value", "horizon", "R", "windows_bounded", "weighted_lhs", "norm2",
           "localized_mass", "low_momentum_mass", "max_edge_mass"},
          2);
  std::vector<AcReport> runs(c.T_list.size());
  parallel_for(runs.size(), [&](std::size_t k) {
    AcOptions opt;
    opt.T = c.T_list[k];
    runs[k] = ac_long_time_check(m, *c.eps, psi, opt, c.integrator);
  });
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const auto& r = runs[k];
    for (std::size_t n = 0; n < r.window_values.size(); ++n)
      t.add({c.T_list[k], static_cast<double>(n), r.window_values[n], r.horizon, r.R, b(r.windows_bounded),
             r.weighted_lhs, r.norm2, r.localized_mass, r.low_momentum_mass, r.max_edge_mass});
  }
  return t.rec;
}

}  // namespace

ExperimentRecord run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::string ctx = std::string(experiment_name(cfg.experiment)) + "/" + cfg.variant + " '" + cfg.name + "': ";
  ExperimentRecord rec;
  try {
    switch (cfg.experiment) {
      case Experiment::LZ: rec = run_lz(cfg); break;
      case Experiment::Averaging: rec = run_averaging(cfg); break;
      case Experiment::Adiabatic: rec = run_adiabatic(cfg); break;
      case Experiment::Ergodic: rec = run_ergodic(cfg); break;
      case Experiment::Energy: rec = run_energy(cfg); break;
      case Experiment::Scattering: rec = run_scattering(cfg); break;
      case Experiment::AC: rec = run_ac(cfg); break;
    }
  } catch (const ValidationError& e) {
    throw ValidationError(ctx + e.what());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(ctx + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(ctx + e.what());
  }
  for (std::size_t r = 0; r < rec.rows.size(); ++r)
    for (std::size_t k = 0; k < rec.columns.size(); ++k)
      if (!std::isfinite(rec.rows[r][k]))
        throw NumericalError(ctx + "non-finite value in column '" + rec.columns[k] + "', row " + std::to_string(r));
  return rec;
}

RunOutput run_and_write(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  RunOutput out;
  out.table = run_experiment(cfg);
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.config_hash = content_hash(cfg.to_json(false));

  namespace fs = std::filesystem;
  const fs::path dir(cfg.output);
  fs::create_directories(dir);
  out.csv_path = (dir / (cfg.name + ".csv")).string();
  out.meta_path = (dir / (cfg.name + ".meta.json")).string();
  {
    std::ofstream f(out.csv_path, std::ios::binary);
    f << out.table.to_csv();
    if (!f) throw Error("cannot write " + out.csv_path);
  }
  json meta;
  meta["config"] = json::parse(cfg.to_json(false));
  meta["config_hash"] = out.config_hash;
  meta["wall_seconds"] = out.wall_seconds;
  meta["columns"] = out.table.columns;
  meta["key_columns"] = out.table.key_columns;
  meta["rows"] = out.table.rows.size();
  meta["csv"] = fs::path(out.csv_path).filename().string();
  std::ofstream f(out.meta_path, std::ios::binary);
  f << meta.dump(2) << '\n';
  if (!f) throw Error("cannot write " + out.meta_path);
  return out;
}

ScalingFit fit_scaling(const ExperimentRecord& table, const std::string& x_col, const std::string& y_col) {
  const auto x = table.values(x_col);
  const auto y = table.values(y_col);
  if (x.size() < 3) throw InvalidArgument("fit_scaling: need at least 3 rows");
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(x[k] > 0.0) || !(y[k] > 0.0)) throw InvalidArgument("fit_scaling: x and y must be positive");
    lx.push_back(std::log(x[k]));
    ly.push_back(std::log(y[k]));
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    mx += lx[k] / n;
    my += ly[k] / n;
  }
  double vx = 0.0, vy = 0.0, cxy = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    vx += (lx[k] - mx) * (lx[k] - mx);
    vy += (ly[k] - my) * (ly[k] - my);
    cxy += (lx[k] - mx) * (ly[k] - my);
  }
  if (!(vx > 1e-24 * n)) throw InvalidArgument("fit_scaling: x values are all equal");
  ScalingFit f;
  f.slope = cxy / vx;
  f.intercept = my - f.slope * mx;
  f.r2 = vy > 0.0 ? cxy * cxy / (vx * vy) : 1.0;
  return f;
}

// ---------------------------------------------------------------------------
// Presets

namespace {

std::map<std::string, ExperimentConfig> build_presets() {
  std::map<std::string, ExperimentConfig> p;
  auto make = [&p](const std::string& name, Experiment e, const std::string& variant) -> ExperimentConfig& {
    ExperimentConfig& c = p[name];
    c.name = name;
    c.experiment = e;
    c.variant = variant;
    return c;
  };
  {
    auto& c = make("pauli-closed-form", Experiment::LZ, "pauli");
    c.count = 1000;
    c.seed = 1;
  }
  {
    auto& c = make("lz-survival", Experiment::LZ, "survival");
    c.B = 1.0;
    c.eps = 0.1;
    c.t_max = 20.0;
    c.samples = 201;
  }
  {
    auto& c = make("lz-transition", Experiment::LZ, "transition");
    c.B = 1.0;
    c.eps = 0.1;
    c.t_max = 20.0;
    c.count = 3;
    c.integrator.step = 0.02;
  }
  {
    auto& c = make("segment-bound", Experiment::Averaging, "segment-bound");
    c.B = 1.0;
    c.eps_list = {1e-2, 1e-4};
  }
  {
    auto& c = make("merge-identity", Experiment::Averaging, "merge");
    c.dims = {2, 8};
    c.seed = 100;
    c.integrator = {0.01, 1e-8, std::int64_t{1} << 22};
  }
  {
    auto& c = make("reconstruction", Experiment::Averaging, "reconstruction");
    c.B = 1.0;
    c.eps_list = {1e-2, 4e-3, 1e-3};
    c.slow_time = 1.0;
    c.levels = 2;
  }
  {
    auto& c = make("interaction-picture", Experiment::Averaging, "interaction");
    c.B = 1.0;
    c.eps = 1e-2;
    c.t_max = 40.0;
    c.count = 20;
  }
  PotentialConfig shallow;
  shallow.amplitude = -0.05;
  shallow.ramp = -0.3;
  shallow.spread = 4.0;
  {
    auto& c = make("kato-intertwining", Experiment::Adiabatic, "intertwining");
    c.B = 1.0;
    c.v = 2.0;
    c.eps = 1e-3;
    c.grid_points = 801;
    c.count = 10;
    c.integrator.tolerance = 1e-8;
  }
  {
    auto& c = make("projection-algebra", Experiment::Adiabatic, "algebra");
    c.B = 1.0;
    c.v = 2.0;
    c.grid_points = 801;
    c.sites = 48;
    c.potential = shallow;
  }
  {
    auto& c = make("adiabatic-sweep", Experiment::Adiabatic, "sweep");
    c.B = 1.0;
    c.v = 2.0;
    c.eps_list = {1e-2, 5e-3, 2.5e-3, 1.25e-3};
    c.grid_points = 801;
    c.sites = 48;
    c.potential = shallow;
    c.integrator = {0.05, 1e-6, std::int64_t{1} << 26};
  }
  {
    auto& c = make("adiabatic-regression", Experiment::Adiabatic, "sweep");
    c.B = 1.0;
    c.v = 2.0;
    c.eps_list = {1e-2, 5e-3, 2.5e-3};
    c.grid_points = 801;
    c.integrator.tolerance = 1e-8;
  }
  {
    auto& c = make("uniform-ergodic", Experiment::Ergodic, "uniform");
    c.sites = 256;
    c.sigma = 2.0;
    c.T_list = {100.0, 200.0, 400.0};
    c.samples = 2001;
    c.block_length = 20.0;
  }
  {
    auto& c = make("propagation", Experiment::Ergodic, "propagation");
    c.sites = 256;
    c.eps = 0.01;
    c.R_list = {5.0, 10.0, 20.0};
    c.T_list = {10.0, 20.0, 40.0};
    c.packet = PacketConfig{0.0, 1.0, 5.0};
    c.integrator.tolerance = 1e-10;
  }
  {
    auto& c = make("energy-drift", Experiment::Energy, "drift");
    c.sites = 256;
    c.eps_list = {1e-2, 5e-3, 0.0};
    c.t_max = 100.0;
    c.count = 101;
    c.packet = PacketConfig{-30.0, std::numbers::pi / 2.0, 6.0};
    PotentialConfig w;
    w.amplitude = -0.5;
    w.modulation = 0.5;
    w.spread = 18.0;
    c.potential = w;
    c.integrator = {0.05, 1e-8, std::int64_t{1} << 26};
  }
  {
    auto& c = make("cook-switching", Experiment::Scattering, "cook");
    c.sites = 256;
    c.eps = 0.05;
    c.a = 2.0;
    c.T_list = {10.0, 20.0, 40.0, 80.0, 120.0, 160.0};
    c.packet = PacketConfig{-40.0, 0.6, 8.0};
    PotentialConfig w0;
    w0.amplitude = 0.05;
    w0.modulation = 0.5;
    w0.frequency = 0.25;
    w0.spread = 8.0;
    PotentialConfig w1;
    w1.amplitude = 0.05;
    w1.spread = 8.0;
    w1.offset = 5.0;
    c.potential = w0;
    c.tail = w1;
  }
  {
    auto& c = make("ac-long-time", Experiment::AC, "long-time");
    c.sites = 1024;
    c.eps = 0.01;
    c.T_list = {250.0, 1000.0};
    c.packet = PacketConfig{-100.0, 0.1, 15.0};
    PotentialConfig w;
    w.amplitude = -0.3;
    w.modulation = 0.5;
    w.spread = 8.0;
    c.potential = w;
    c.integrator = {0.1, 1e-7, std::int64_t{1} << 26};
  }
  return p;
}

const std::map<std::string, ExperimentConfig>& presets() {
  static const auto p = build_presets();
  return p;
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& [k, v] : presets()) out.push_back(k);
  return out;
}

ExperimentConfig preset(const std::string& name) {
  const auto it = presets().find(name);
  if (it == presets().end()) throw ValidationError("preset: unknown name '" + name + "'");
  return it->second;
}

// ---------------------------------------------------------------------------
// Unitarity probe

namespace {

UnitarityProbe dense_probe(const Generator& g, double t0, double t1, std::int64_t steps) {
  IntegratorConfig cfg;
  cfg.step = 2.0 * (t1 - t0) / static_cast<double>(steps);
  cfg.tolerance = 1e300;
  const auto r = time_ordered_exp_detailed(g, t0, t1, cfg);
  return {unitarity_defect(r.u), r.steps, r.u.dim(), r.u.dim()};
}

UnitarityProbe block_probe(const DrivenHamiltonian& fam, double eps, double span, std::int64_t steps,
                           std::uint64_t seed) {
  const Index cols = 4;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Matrix x(fam.dim, cols);
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < cols; ++j) x(i, j) = Complex(nd(rng), nd(rng));
  Eigen::HouseholderQR<Matrix> qr(x);
  x = qr.householderQ() * Matrix::Identity(fam.dim, cols);
  IntegratorConfig cfg;
  cfg.step = 2.0 * span / static_cast<double>(steps);
  cfg.tolerance = 1e300;
  const SparseGenerator g = [fam, eps](double t) { return fam.sparse(eps * t); };
  const auto r = propagate_block(g, 0.0, span, x, cfg);
  const double d = (r.block.adjoint() * r.block - Matrix::Identity(cols, cols)).norm();
  return {d, r.steps, fam.dim, cols};
}

UnitarityProbe worst(UnitarityProbe a, const UnitarityProbe& b) { return a.defect >= b.defect ? a : b; }

Generator slow(const DrivenHamiltonian& f, double eps) {
  return [f, eps](double t) { return f(eps * t); };
}

}  // namespace

UnitarityProbe unitarity_probe(const ExperimentConfig& c, std::int64_t steps) {
  c.validate();
  if (steps < 2 || steps % 2) throw InvalidArgument("unitarity_probe: steps must be even and >= 2");
  const double eps_any = c.eps ? *c.eps : (c.eps_list.empty() ? 0.0 : c.eps_list.front());
  const double eps_min = c.eps_list.empty() ? eps_any : c.eps_list.back() > 0.0 ? c.eps_list.back() : eps_any;
  switch (c.experiment) {
    case Experiment::LZ: {
      if (c.variant == "pauli") {
        std::mt19937_64 rng(c.seed);
        std::normal_distribution<double> nd;
        Matrix h(2, 2);
        h << nd(rng), Complex(nd(rng), nd(rng)), 0.0, nd(rng);
        h(1, 0) = std::conj(h(0, 1));
        const HermitianOperator op(h);
        return dense_probe([op](double) { return op; }, 0.0, 10.0, steps);
      }
      const LZModel m{*c.B, *c.eps};
      return dense_probe([m](double t) { return lz_hamiltonian(m, t); }, -*c.t_max, *c.t_max, steps);
    }
    case Experiment::Averaging: {
      if (c.variant == "merge") {
        const int dim = *std::max_element(c.dims.begin(), c.dims.end());
        const auto pair = random_pair(dim, c.seed);
        return worst(dense_probe(pair.a, 0.0, 1.0, steps), dense_probe(pair.b, 0.0, 1.0, steps));
      }
      const double span = c.variant == "interaction" ? *c.t_max : 1.0 / eps_min;
      return dense_probe(slow(averaging_family(c), eps_min), 0.0, span, steps);
    }
    case Experiment::Adiabatic: {
      const double eps = c.variant == "algebra" ? 1e-3 : eps_min;
      UnitarityProbe p = dense_probe(slow(gapped_sweep_family(*c.B, *c.v), eps), 0.0, 1.0 / eps, steps);
      if (c.sites) p = worst(p, block_probe(lattice_family(lattice(c)), eps, 1.0 / eps, steps, c.seed));
      return p;
    }
    case Experiment::Ergodic:
    case Experiment::Energy:
    case Experiment::AC: {
      const double span = c.T_list.empty() ? *c.t_max : c.T_list.back();
      return block_probe(lattice_family(lattice(c)), eps_any, span, steps, c.seed);
    }
    case Experiment::Scattering:
      return block_probe(lattice_family(switching_model(c)), *c.eps, c.T_list.back(), steps, c.seed);
  }
  return {};
}

}  // namespace slowdrive
