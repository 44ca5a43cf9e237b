#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "slowdrive/errors.hpp"
#include "slowdrive/experiment.hpp"

using namespace slowdrive;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

ExperimentRecord power_law(const std::vector<double>& x, double p, double c = 1.0) {
  ExperimentRecord t;
  t.columns = {"x", "y"};
  t.key_columns = 1;
  for (double v : x) t.rows.push_back({v, c * std::pow(v, p)});
  return t;
}

std::string validation_message(const ExperimentConfig& c) {
  try {
    c.validate();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(ExperimentConfig, ParseNames) {
  EXPECT_EQ(parse_experiment("avg"), Experiment::Averaging);
  EXPECT_EQ(parse_experiment("scatter"), Experiment::Scattering);
  for (auto e : {Experiment::LZ, Experiment::Averaging, Experiment::Adiabatic, Experiment::Ergodic, Experiment::Energy,
                 Experiment::Scattering, Experiment::AC})
    EXPECT_EQ(parse_experiment(experiment_name(e)), e);
  EXPECT_THROW(parse_experiment("nope"), ValidationError);
}

TEST(ExperimentConfig, ValidationListsEveryField) {
  ExperimentConfig c;
  c.experiment = Experiment::Scattering;
  c.variant = "cook";
  c.eps = 2.0;
  c.sites = 4;
  const std::string msg = validation_message(c);
  for (const char* f : {"eps:", "sites:", "a: required", "T_list: required", "packet: required",
                        "potential: required", "tail: required"})
    EXPECT_NE(msg.find(f), std::string::npos) << f << " missing from\n" << msg;
}

TEST(ExperimentConfig, EpsListMustDecrease) {
  auto c = preset("reconstruction");
  c.eps_list = {1e-3, 1e-2};
  EXPECT_NE(validation_message(c).find("strictly decreasing"), std::string::npos);
  c.eps_list = {1e-2, 1e-2};
  EXPECT_NE(validation_message(c).find("strictly decreasing"), std::string::npos);
}

TEST(ExperimentConfig, UnknownVariantNamesTheChoices) {
  auto c = preset("lz-survival");
  c.variant = "bogus";
  const std::string msg = validation_message(c);
  EXPECT_NE(msg.find("pauli, survival, transition"), std::string::npos) << msg;
}

TEST(ExperimentConfig, BadIntegratorIsReported) {
  auto c = preset("lz-survival");
  c.integrator.tolerance = -1.0;
  EXPECT_NE(validation_message(c).find("integrator"), std::string::npos);
}

TEST(ExperimentConfig, JsonRoundTrip) {
  for (const auto& n : preset_names()) {
    const auto c = preset(n);
    const auto back = ExperimentConfig::from_json(c.to_json());
    EXPECT_EQ(back.to_json(), c.to_json()) << n;
  }
}

TEST(ExperimentConfig, JsonErrorsListEveryField) {
  const std::string text = R"({"experiment": "lz", "variant": "survival", "B": "one", "colour": 3,
                               "packet": {"x0": 1, "spin": 2}})";
  try {
    ExperimentConfig::from_json(text);
    FAIL() << "no throw";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    for (const char* f : {"B: wrong type", "colour: unknown field", "packet.spin: unknown field"})
      EXPECT_NE(msg.find(f), std::string::npos) << f << "\n" << msg;
  }
  EXPECT_THROW(ExperimentConfig::from_json("{not json"), ValidationError);
  EXPECT_THROW(ExperimentConfig::from_json(R"({"variant": "survival"})"), ValidationError);
}

TEST(ExperimentConfig, HashIgnoresOutputOnly) {
  auto a = preset("lz-survival");
  auto b = a;
  b.output = "/somewhere/else";
  EXPECT_EQ(content_hash(a.to_json(false)), content_hash(b.to_json(false)));
  b.eps = 0.2;
  EXPECT_NE(content_hash(a.to_json(false)), content_hash(b.to_json(false)));
}

TEST(ContentHash, GitBlobConvention) {
  EXPECT_EQ(content_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(content_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST(ExperimentRecord, CsvRoundTrip) {
  ExperimentRecord t;
  t.columns = {"a", "b"};
  t.rows = {{0.1, 1.0 / 3.0}, {-2.5e-300, 12345678.9}};
  const std::string csv = t.to_csv();
  EXPECT_EQ(csv.substr(0, 4), "a,b\n");
  const auto back = ExperimentRecord::from_csv(csv);
  ASSERT_EQ(back.rows.size(), 2u);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(back.rows[r][k], t.rows[r][k]);
  EXPECT_EQ(back.to_csv(), csv);
  EXPECT_THROW(ExperimentRecord::from_csv("a,b\n1\n"), InvalidArgument);
  EXPECT_THROW(ExperimentRecord::from_csv("a,b\n1,x\n"), InvalidArgument);
  EXPECT_THROW(t.column("c"), InvalidArgument);
}

TEST(RunExperiment, ZeroCouplingSurvivesEverywhere) {
  auto c = preset("lz-survival");
  c.B = 0.0;
  const auto t = run_experiment(c);
  ASSERT_GT(t.rows.size(), 10u);
  for (double s : t.values("survival")) EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(RunExperiment, ConstantFamilyAveragesExactly) {
  auto c = preset("reconstruction");
  c.family = "constant";
  c.eps_list = {1e-2, 1e-3};
  const auto t = run_experiment(c);
  for (double d : t.values("defect")) EXPECT_LE(d, 10.0 * c.integrator.tolerance);
}

TEST(RunExperiment, Deterministic) {
  for (const char* n : {"pauli-closed-form", "lz-transition", "merge-identity"}) {
    const auto c = preset(n);
    EXPECT_EQ(run_experiment(c).to_csv(), run_experiment(c).to_csv()) << n;
  }
}

TEST(RunExperiment, SeedChangesRandomInputs) {
  auto c = preset("pauli-closed-form");
  c.count = 5;
  const auto a = run_experiment(c);
  c.seed += 1;
  EXPECT_NE(a.to_csv(), run_experiment(c).to_csv());
}

TEST(RunExperiment, AdiabaticSweepMatchesFixture) {
  const std::string want = slurp(std::string(SLOWDRIVE_FIXTURE_DIR) + "/adiabatic_sweep.csv");
  ASSERT_FALSE(want.empty());
  EXPECT_EQ(run_experiment(preset("adiabatic-regression")).to_csv(), want);
}

TEST(RunExperiment, ErrorsCarryContext) {
  auto c = preset("lz-survival");
  c.samples = 1;
  try {
    run_experiment(c);
    FAIL() << "no throw";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("samples"), std::string::npos);
  }
  // Packet partly outside a short lattice reaches the edges.
  auto p = preset("propagation");
  p.sites = 32;
  p.T_list = {40.0};
  p.R_list = {5.0};
  try {
    run_experiment(p);
    FAIL() << "no throw";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("ergodic/propagation"), std::string::npos) << e.what();
  }
}

TEST(RunAndWrite, WritesCsvAndSidecar) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "slowdrive_test_out";
  fs::remove_all(dir);
  auto c = preset("lz-transition");
  c.output = dir.string();
  c.count = 2;
  const auto r = run_and_write(c);
  EXPECT_EQ(slurp(r.csv_path), r.table.to_csv());
  const auto meta = nlohmann::json::parse(slurp(r.meta_path));
  EXPECT_EQ(meta["config_hash"], r.config_hash);
  EXPECT_EQ(meta["config_hash"], content_hash(c.to_json(false)));
  EXPECT_EQ(meta["rows"], 2);
  EXPECT_EQ(meta["config"]["variant"], "transition");
  EXPECT_FALSE(meta["config"].contains("output"));
  EXPECT_GE(meta["wall_seconds"].get<double>(), 0.0);
  fs::remove_all(dir);
}

TEST(FitScaling, ExactPowerLaws) {
  const auto a = fit_scaling(power_law({1, 2, 4}, 1.0), "x", "y");
  EXPECT_NEAR(a.slope, 1.0, 1e-12);
  EXPECT_NEAR(a.intercept, 0.0, 1e-12);
  EXPECT_NEAR(a.r2, 1.0, 1e-12);
  const auto b = fit_scaling(power_law({1, 4, 16}, 0.5, 3.0), "x", "y");
  EXPECT_NEAR(b.slope, 0.5, 1e-12);
  EXPECT_NEAR(b.intercept, std::log(3.0), 1e-12);
}

TEST(FitScaling, Errors) {
  EXPECT_THROW(fit_scaling(power_law({1, 2}, 1.0), "x", "y"), InvalidArgument);
  auto t = power_law({1, 2, 4}, 1.0);
  t.rows[1][1] = 0.0;
  EXPECT_THROW(fit_scaling(t, "x", "y"), InvalidArgument);
  EXPECT_THROW(fit_scaling(power_law({2, 2, 2}, 1.0), "x", "y"), InvalidArgument);
}

TEST(Presets, NamesAreUniqueAndValid) {
  const auto names = preset_names();
  EXPECT_GE(names.size(), 15u);
  for (const auto& n : names) {
    const auto c = preset(n);
    EXPECT_EQ(c.name, n);
    EXPECT_NO_THROW(c.validate()) << n;
  }
  EXPECT_THROW(preset("missing"), ValidationError);
}

TEST(UnitarityProbe, SmallPresets) {
  for (const char* n : {"pauli-closed-form", "lz-transition", "segment-bound"}) {
    const auto p = unitarity_probe(preset(n));
    EXPECT_EQ(p.steps, 10000) << n;
    EXPECT_LE(p.defect, 1e-10) << n;
  }
  EXPECT_THROW(unitarity_probe(preset("pauli-closed-form"), 3), InvalidArgument);
}
