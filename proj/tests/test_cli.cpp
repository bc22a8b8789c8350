#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>

#include "test_util.hpp"

using namespace nvctl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("nvctl_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int run(const std::string& args) {
  const std::string cmd = std::string(NVCTL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, AnglesAndOverrides) {
  const auto d = scratch("angles");
  ASSERT_EQ(run("angles --out " + d.string()), 0);
  const json j = read_json_file(d / "angles.json");
  EXPECT_NEAR(j["nu_c_mhz"].get<double>(), 0.158, 0.001);
  EXPECT_NEAR(j["nu_minus_mhz"].get<double>(), 0.110, 0.001);
  EXPECT_NEAR(j["nu_plus_mhz"].get<double>(), 0.329, 0.001);
  const json m = read_json_file(d / "manifest.json");
  EXPECT_EQ(m["command"], "angles");
  EXPECT_EQ(m["seed"].get<std::uint64_t>(), 20190101u);

  ASSERT_EQ(run("angles --out " + d.string() + " --set params.nu_c_override=0.3"), 0);
  EXPECT_NEAR(read_json_file(d / "angles.json")["theta_minus_deg"].get<double>(), 36.6, 0.1);
  ASSERT_EQ(run("angles --set params.a_zx=0 --out " + d.string()), 0);
  EXPECT_DOUBLE_EQ(read_json_file(d / "angles.json")["theta_minus_deg"].get<double>(), 0.0);
}

TEST(Cli, UsageErrors) {
  const auto d = scratch("usage");
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("angles --bogus"), 2);
  EXPECT_EQ(run("angles --set nonsense.key=1 --out " + d.string()), 2);
  EXPECT_EQ(run("angles --set params.b_field=1 --out " + d.string()), 2);
  EXPECT_EQ(run("optimize --set optimize.target=u_nonsense --out " + d.string()), 2);
  EXPECT_EQ(run("angles --help"), 0);
}

TEST(Cli, RuntimeErrors) {
  const auto d = scratch("runtime");
  EXPECT_EQ(run("fid --set fid.source=sequence --out " + d.string()), 3);
  EXPECT_EQ(run("bloch --out " + d.string()), 3);
  EXPECT_EQ(run("fid --config " + (d / "missing.json").string()), 3);
}

TEST(Cli, SpectrumOfAnalyticTraceHasTwoPeaks) {
  const auto d = scratch("spectrum");
  ASSERT_EQ(run("spectrum --set fid.source=analytic --out " + d.string()), 0);
  const auto cols = parse_csv(read_text_file(d / "spectrum.csv"));
  Spectrum s;
  s.freq_mhz = cols.at("freq_mhz");
  s.amplitude = cols.at("amplitude");
  const auto peaks = local_maxima(s, 0.3);
  ASSERT_EQ(peaks.size(), 2u);
  const auto f = nuclear_frequencies(SystemParams{});
  EXPECT_NEAR(s.freq_mhz[peaks[0]], f.nu_minus, s.resolution());
  EXPECT_NEAR(s.freq_mhz[peaks[1]], f.nu_c, s.resolution());
  EXPECT_EQ(parse_csv(read_text_file(d / "fid.csv")).at("tau_us").size(), 200u);

  // a written trace can be fed back in
  const auto e = scratch("spectrum_in");
  ASSERT_EQ(run("spectrum --set spectrum.input=" + (d / "fid.csv").string() + " --out " + e.string()), 0);
  EXPECT_EQ(read_text_file(e / "spectrum.csv"), read_text_file(d / "spectrum.csv"));
}

TEST(Cli, ManifestConfigReproducesOutputs) {
  const auto d = scratch("manifest");
  ASSERT_EQ(run("fid --set fid.protocol=u90_ms-1 --set fid.points=64 --out " + d.string()), 0);
  const auto first = read_text_file(d / "fid.csv");
  const auto e = scratch("manifest_rerun");
  ASSERT_EQ(run("fid --config " + (d / "config.json").string() + " --out " + e.string()), 0);
  EXPECT_EQ(read_text_file(e / "fid.csv"), first);
}

TEST(Cli, OptimizeThenBloch) {
  const auto d = scratch("optimize");
  ASSERT_EQ(run("optimize --seed 5 --out " + d.string()), 0);
  const json r = read_json_file(d / "result.json");
  EXPECT_GE(r["fidelity"].get<double>(), 0.99);
  EXPECT_EQ(r["seed"].get<std::uint64_t>(), 5u);
  EXPECT_TRUE(fs::exists(d / "history.csv"));
  ASSERT_EQ(run("bloch --set bloch.sequence=" + (d / "sequence.json").string() + " --out " + d.string()), 0);
  const auto cols = parse_csv(read_text_file(d / "bloch.csv"));
  EXPECT_GE(cols.at("carbon_z").back(), 0.95);
  ASSERT_EQ(run("polarize --set polarize.sequence=" + (d / "result.json").string() + " --out " + d.string()), 0);
  EXPECT_GE(read_json_file(d / "polarize.json")["protocol"]["polarization"].get<double>(), 0.95);
}

TEST(Cli, FitAndPolarize) {
  const auto d = scratch("fit");
  ASSERT_EQ(run("fit --set fit.kind=fidelities --out " + d.string()), 0);
  const json f = read_json_file(d / "fit.json");
  EXPECT_NEAR(f["f_180"].get<double>(), 0.92, 0.005);
  EXPECT_NEAR(f["f_u90"].get<double>(), 0.74, 0.005);
  EXPECT_NEAR(f["f_uc"].get<double>(), 0.91, 0.005);

  ASSERT_EQ(run("polarize --out " + d.string()), 0);
  const json p = read_json_file(d / "polarize.json");
  EXPECT_NEAR(p["maximum"]["p"].get<double>(), 0.746, 0.001);
  ASSERT_EQ(run("fit --set fit.input=" + (d / "polarization_curve.csv").string() +
                " --set fit.initial={\\\"c0\\\":0.4} --out " + d.string()),
            0);
  EXPECT_NEAR(read_json_file(d / "fit.json")["model"]["gamma"].get<double>(), 0.022, 1e-4);

  ASSERT_EQ(run("fid --set fid.protocol=u90_ms-1 --out " + d.string()), 0);
  ASSERT_EQ(run("fit --set fit.kind=sine --set fit.nu_mhz=0.110191 --set fit.input=" + (d / "fid.csv").string() +
                " --out " + d.string()),
            0);
  EXPECT_GT(read_json_file(d / "fit.json")["b"].get<double>(), 0.4);
  EXPECT_EQ(run("fit --set fit.kind=sine --set fit.input=" + (d / "fid.csv").string() + " --out " + d.string()), 2);
}

TEST(Cli, EsrWritesBothBranches) {
  const auto d = scratch("esr");
  ASSERT_EQ(run("esr --out " + d.string()), 0);
  EXPECT_EQ(parse_csv(read_text_file(d / "esr_minus.csv")).at("freq_mhz").size(), 1601u);
  EXPECT_EQ(read_json_file(d / "manifest.json")["summary"]["maxima_minus"].get<int>(), 4);
}

TEST(Cli, TablesThree) {
  const auto d = scratch("tables");
  ASSERT_EQ(run("tables --set tables.which=[\\\"III\\\"] --out " + d.string()), 0);
  const json rows = read_json_file(d / "manifest.json")["summary"]["III"];
  ASSERT_EQ(rows.size(), 3u);
  const double n3 = rows[0]["fidelity"].get<double>(), n5 = rows[2]["fidelity"].get<double>();
  EXPECT_GE(n5, 0.99);
  EXPECT_GT(n5, n3);
  const std::string csv = read_text_file(d / "table_III.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_TRUE(fs::exists(d / "manifest.json"));
}
