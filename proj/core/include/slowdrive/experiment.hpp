#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "slowdrive/hermitian.hpp"
#include "slowdrive/models.hpp"

namespace slowdrive {

enum class Experiment { LZ, Averaging, Adiabatic, Ergodic, Energy, Scattering, AC };

const char* experiment_name(Experiment e);
// Accepts the names of experiment_name and the CLI aliases avg and scatter.
Experiment parse_experiment(const std::string& name);

struct PacketConfig {
  double x0 = 0.0;
  double k0 = 0.0;
  double width = 5.0;
};

// W(x, s) = (amplitude + ramp·g(s))·(1 + modulation·sin 2πfs)·e^{-(x − offset)²/spread},
// g(s) = s − sin(2πs)/(2π).
struct PotentialConfig {
  double amplitude = 0.0;
  double ramp = 0.0;
  double modulation = 0.0;
  double frequency = 1.0;
  double spread = 8.0;
  double offset = 0.0;
};

PotentialFn make_potential(const PotentialConfig& p);

struct ExperimentConfig {
  Experiment experiment = Experiment::LZ;
  std::string variant;
  std::string name = "custom";
  std::uint64_t seed = 0;
  std::string output = ".";
  IntegratorConfig integrator{};

  std::optional<double> B;
  std::optional<double> v;
  std::optional<double> eps;
  std::vector<double> eps_list;  // strictly decreasing
  std::optional<double> a;
  std::optional<double> kappa;
  std::optional<double> sigma;
  std::optional<double> t_max;
  std::optional<double> slow_time;
  std::optional<double> block_length;
  std::optional<Index> sites;
  std::optional<std::size_t> samples;
  std::optional<std::size_t> grid_points;
  std::optional<std::size_t> count;
  std::optional<int> levels;
  std::vector<int> dims;
  std::vector<double> R_list;
  std::vector<double> T_list;
  std::optional<PacketConfig> packet;
  std::optional<PotentialConfig> potential;
  std::optional<PotentialConfig> tail;  // decaying part of a switching profile
  std::string family = "lz";            // averaging: lz or constant

  // Throws ValidationError naming every offending field.
  void validate() const;
  // Canonical JSON (sorted keys); `output` is left out of the hashed form.
  std::string to_json(bool include_output = true) const;
  static ExperimentConfig from_json(const std::string& text);
};

struct ExperimentRecord {
  std::vector<std::string> columns;
  std::size_t key_columns = 0;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const;
  std::vector<double> values(const std::string& name) const;
  // %.17g, header line first.
  std::string to_csv() const;
  static ExperimentRecord from_csv(const std::string& text);
};

// SHA-1 of "blob <size>\0" + bytes, hex.
std::string content_hash(const std::string& bytes);

ExperimentRecord run_experiment(const ExperimentConfig& cfg);

struct RunOutput {
  ExperimentRecord table;
  std::string csv_path;
  std::string meta_path;
  std::string config_hash;
  double wall_seconds = 0.0;
};

// run_experiment, then <output>/<name>.csv and <output>/<name>.meta.json.
RunOutput run_and_write(const ExperimentConfig& cfg);

struct ScalingFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

// Least squares of log y on log x.
ScalingFit fit_scaling(const ExperimentRecord& table, const std::string& x_col, const std::string& y_col);

std::vector<std::string> preset_names();
ExperimentConfig preset(const std::string& name);

struct UnitarityProbe {
  double defect = 0.0;  // ‖X*X − I‖_F of the propagated block
  std::int64_t steps = 0;
  Index dim = 0;
  Index columns = 0;
};

// Fixed-step oracle propagation of the experiment's main generator.
UnitarityProbe unitarity_probe(const ExperimentConfig& cfg, std::int64_t steps = 10000);

}  // namespace slowdrive
