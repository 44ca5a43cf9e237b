#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "slowdrive/errors.hpp"
#include "slowdrive/experiment.hpp"

using namespace slowdrive;

namespace {

struct RunArgs {
  std::string config_file;
  std::string preset_name;
  std::string variant;
  std::string out;
  std::string name;
  std::optional<double> eps;
  std::optional<double> B;
  std::optional<long> sites;
  std::vector<double> T;
  std::optional<std::uint64_t> seed;
  bool dry_run = false;
  bool probe = false;
};

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot read config file '" + path + "'");
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

ExperimentConfig resolve(Experiment e, const RunArgs& a) {
  ExperimentConfig c;
  if (!a.config_file.empty()) {
    c = ExperimentConfig::from_json(read_file(a.config_file));
  } else if (!a.preset_name.empty()) {
    c = preset(a.preset_name);
  } else {
    bool found = false;
    for (const auto& n : preset_names()) {
      const auto p = preset(n);
      if (p.experiment == e && (a.variant.empty() || p.variant == a.variant)) {
        c = p;
        found = true;
        break;
      }
    }
    if (!found) throw ValidationError("no preset for this experiment and variant; pass --config");
  }
  if (c.experiment != e)
    throw ValidationError(std::string("config is a '") + experiment_name(c.experiment) + "' experiment, not '" +
                          experiment_name(e) + "'");
  if (!a.variant.empty()) c.variant = a.variant;
  if (!a.out.empty()) c.output = a.out;
  if (!a.name.empty()) c.name = a.name;
  if (a.eps) {
    if (c.eps || c.eps_list.empty()) c.eps = *a.eps;
    else c.eps_list = {*a.eps};
  }
  if (a.B) c.B = *a.B;
  if (a.sites) c.sites = static_cast<Index>(*a.sites);
  if (!a.T.empty()) c.T_list = a.T;
  if (a.seed) c.seed = *a.seed;
  c.validate();
  return c;
}

void print_table(const ExperimentRecord& t) {
  std::string head;
  for (const auto& c : t.columns) head += (head.empty() ? "" : "  ") + c;
  std::printf("%s\n", head.c_str());
  const std::size_t shown = std::min<std::size_t>(t.rows.size(), 40);
  for (std::size_t r = 0; r < shown; ++r) {
    for (std::size_t k = 0; k < t.rows[r].size(); ++k) std::printf(k ? "  %.6g" : "%.6g", t.rows[r][k]);
    std::printf("\n");
  }
  if (shown < t.rows.size()) std::printf("... %zu more rows\n", t.rows.size() - shown);
}

int execute(Experiment e, const RunArgs& a) {
  const ExperimentConfig c = resolve(e, a);
  if (a.dry_run) {
    std::printf("%s\nconfig_hash %s\n", c.to_json().c_str(), content_hash(c.to_json(false)).c_str());
    return 0;
  }
  if (a.probe) {
    const auto p = unitarity_probe(c);
    std::printf("unitarity defect %.3e  (dim %ld, columns %ld, %lld steps)\n", p.defect, static_cast<long>(p.dim),
                static_cast<long>(p.columns), static_cast<long long>(p.steps));
    return 0;
  }
  const RunOutput r = run_and_write(c);
  print_table(r.table);
  std::printf("wrote %s\nwrote %s\nconfig_hash %s  wall %.2fs\n", r.csv_path.c_str(), r.meta_path.c_str(),
              r.config_hash.c_str(), r.wall_seconds);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slowdrive: slowly driven quantum dynamics experiments"};
  app.require_subcommand(0, 1);
  bool list = false;
  app.add_flag("--list-presets", list, "Print the preset names and exit");

  struct Sub {
    const char* cmd;
    Experiment e;
    const char* help;
  };
  const Sub subs[] = {
      {"lz", Experiment::LZ, "Landau-Zener sweeps (pauli, survival, transition)"},
      {"avg", Experiment::Averaging, "Multiscale averaging (segment-bound, merge, reconstruction, interaction)"},
      {"adiabatic", Experiment::Adiabatic, "Kato propagation (intertwining, algebra, sweep)"},
      {"ergodic", Experiment::Ergodic, "Lattice time averages (uniform, propagation)"},
      {"energy", Experiment::Energy, "Energy drift under a slow drive (drift)"},
      {"scatter", Experiment::Scattering, "Cook wave-operator convergence (cook)"},
      {"ac", Experiment::AC, "Long-time asymptotic completeness check (long-time)"},
  };
  RunArgs args;
  std::vector<std::pair<CLI::App*, Experiment>> runners;
  for (const auto& s : subs) {
    CLI::App* sc = app.add_subcommand(s.cmd, s.help);
    auto* src = sc->add_option_group("source");
    src->add_option("--config", args.config_file, "JSON experiment config")->check(CLI::ExistingFile);
    src->add_option("--preset", args.preset_name, "Named preset (see --list-presets)");
    src->require_option(0, 1);
    sc->add_option("--variant", args.variant, "Experiment variant");
    sc->add_option("--out", args.out, "Output directory");
    sc->add_option("--name", args.name, "Output file stem");
    sc->add_option("--eps", args.eps, "Override eps (or the eps list)");
    sc->add_option("--B", args.B, "Override the coupling B");
    sc->add_option("--sites", args.sites, "Override the lattice size");
    sc->add_option("--T", args.T, "Override the time list")->delimiter(',');
    sc->add_option("--seed", args.seed, "Override the seed");
    sc->add_flag("--dry-run", args.dry_run, "Print the resolved config and hash");
    sc->add_flag("--probe", args.probe, "Run the fixed-step unitarity probe instead");
    runners.emplace_back(sc, s.e);
  }

  std::string fit_csv, fit_x, fit_y;
  CLI::App* fit = app.add_subcommand("fit", "Log-log slope of two CSV columns");
  fit->add_option("csv", fit_csv, "Result CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--x", fit_x, "x column")->required();
  fit->add_option("--y", fit_y, "y column")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (list) {
      for (const auto& n : preset_names()) {
        const auto p = preset(n);
        std::printf("%-22s %s/%s\n", n.c_str(), experiment_name(p.experiment), p.variant.c_str());
      }
      return 0;
    }
    if (fit->parsed()) {
      const auto f = fit_scaling(ExperimentRecord::from_csv(read_file(fit_csv)), fit_x, fit_y);
      std::printf("slope %.6f  intercept %.6f  r2 %.6f\n", f.slope, f.intercept, f.r2);
      return 0;
    }
    for (const auto& [sc, e] : runners)
      if (sc->parsed()) return execute(e, args);
    std::printf("%s", app.help().c_str());
    return 2;
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
