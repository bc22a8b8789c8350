#include <gtest/gtest.h>

#include <cstring>

#include "test_util.hpp"

using namespace nvctl;

namespace {

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

}  // namespace

TEST(Io, SystemParamsKeysAreExact) {
  const json j = to_json(SystemParams{});
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  const std::vector<std::string> expect{"a_n",     "a_zx",          "a_zz",          "b_mt",
                                        "d_mhz",   "gamma_c",       "gamma_e",       "nu_c_override",
                                        "nu_e_override", "nu_n_override", "p_quad"};
  EXPECT_EQ(keys, expect);
  EXPECT_TRUE(j["nu_c_override"].is_null());
}

TEST(Io, SystemParamsRoundTrip) {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 100; ++trial) {
    const SystemParams p = nvtest::random_params(rng);
    EXPECT_EQ(params_from_json(json::parse(to_json(p).dump())), p);
  }
  EXPECT_THROW(params_from_json(json{{"b_field", 3.0}}), FormatError);
  EXPECT_THROW(params_from_json(json{{"a_zz", "big"}}), FormatError);
  EXPECT_EQ(params_from_json(json::object()), SystemParams{});
}

TEST(Io, SequenceRoundTripIsBitExact) {
  std::mt19937_64 rng(62);
  for (int trial = 0; trial < 100; ++trial) {
    const PulseSequence s = nvtest::random_sequence(rng, 1 + trial % 5, 0.1 + 0.01 * trial);
    const PulseSequence back = sequence_from_json(json::parse(to_json(s).dump()));
    ASSERT_EQ(back.segments.size(), s.segments.size());
    EXPECT_TRUE(bit_equal(back.rabi_mhz, s.rabi_mhz));
    for (std::size_t i = 0; i < s.segments.size(); ++i) {
      EXPECT_TRUE(bit_equal(segment_duration(back.segments[i]), segment_duration(s.segments[i])));
      if (const auto* p = std::get_if<Pulse>(&s.segments[i])) {
        EXPECT_TRUE(bit_equal(std::get<Pulse>(back.segments[i]).phase_rad, p->phase_rad));
      }
    }
    EXPECT_EQ(back, s);
  }
}

TEST(Io, SequenceSchema) {
  PulseSequence s;
  s.delay(1.5).pulse(0.25, 1.0);
  const json j = to_json(s);
  EXPECT_EQ(j["segments"][0]["kind"], "delay");
  EXPECT_EQ(j["segments"][1]["kind"], "pulse");
  EXPECT_DOUBLE_EQ(j["segments"][1]["phase_rad"].get<double>(), 1.0);
  EXPECT_FALSE(j["segments"][0].contains("phase_rad"));
  EXPECT_THROW(sequence_from_json(json::parse(R"({"rabi_mhz":0.5,"segments":[{"kind":"wait","us":1}]})")),
               FormatError);
  EXPECT_THROW(sequence_from_json(json::parse(R"({"rabi_mhz":0.5})")), FormatError);
  EXPECT_THROW(sequence_from_json(json::parse(R"({"rabi_mhz":0.5,"segments":[{"kind":"delay","us":-1}]})")),
               InvalidParams);
}

TEST(Io, OptimResultCarriesSequenceHistoryAndSeed) {
  OptimResult r;
  r.best_sequence.delay(1.0).pulse(2.0, 0.5);
  r.history = {0.1, 0.2};
  r.seed = 99;
  r.fidelity = 0.9;
  const json j = to_json(r);
  EXPECT_EQ(sequence_from_json(j["sequence"]), r.best_sequence);
  EXPECT_EQ(j["history"].get<std::vector<double>>(), r.history);
  EXPECT_EQ(j["seed"].get<std::uint64_t>(), 99u);
  EXPECT_TRUE(j["robust_fidelity"].is_null());
  EXPECT_EQ(history_csv(r), "generation,fitness\n0,0.10000000000000001\n1,0.20000000000000001\n");
}

TEST(Io, TraceAndSpectrumCsv) {
  const FidTrace f{"analytic", {0.0, 1.0}, {0.5, 0.25}};
  EXPECT_EQ(to_csv(f), "tau_us,signal\n0,0.5\n1,0.25\n");
  const auto cols = parse_csv(to_csv(f));
  EXPECT_EQ(cols.at("signal"), f.signal);
  Spectrum s;
  s.freq_mhz = {0.0, 0.5};
  s.amplitude = {1.0, 2.0};
  EXPECT_EQ(to_csv(s).substr(0, 19), "freq_mhz,amplitude\n");
  const json j = to_json(s);
  EXPECT_DOUBLE_EQ(j["resolution_mhz"].get<double>(), 0.5);
  EXPECT_EQ(to_json(f)["protocol"], "analytic");
}

TEST(Io, CsvParsingErrors) {
  EXPECT_THROW(parse_csv(""), FormatError);
  EXPECT_THROW(parse_csv("a,b\n1\n"), FormatError);
  EXPECT_THROW(parse_csv("a,b\n1,x\n"), FormatError);
  EXPECT_THROW(parse_csv("a\n1,2\n"), FormatError);
  CsvWriter w({"a", "b"});
  EXPECT_THROW(w.row(std::vector<double>{1.0}), DimensionMismatch);
}

TEST(Io, TableRowsCsv) {
  TableRow r{"III", "u_p", 0.5, 5, "free", 0.3, 36.6, 0.997, 8.89, 3};
  const std::string csv = to_csv(std::vector<TableRow>{r});
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "table,target,rabi_mhz,n_pulses,mode,nu_c_mhz,theta_minus_deg,fidelity,duration_us,seed");
  EXPECT_NE(csv.find("III,u_p,0.5,5,free"), std::string::npos);
}

TEST(Io, FilesAndMissingFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "nvctl_io_test";
  std::filesystem::remove_all(dir);
  PulseSequence s;
  s.pulse(0.3, 0.1).delay(4.0);
  write_json_file(dir / "seq.json", to_json(s));
  EXPECT_EQ(read_sequence_file(dir / "seq.json"), s);
  OptimResult r;
  r.best_sequence = s;
  write_json_file(dir / "result.json", to_json(r));
  EXPECT_EQ(read_sequence_file(dir / "result.json"), s);
  write_text_file(dir / "bad.json", "{not json");
  EXPECT_THROW(read_json_file(dir / "bad.json"), FormatError);
  EXPECT_THROW(read_sequence_file(dir / "nope.json"), FileMissing);
  write_text_file(dir / "fid.csv", "tau_us,signal\n0,1\n1,0.5\n");
  EXPECT_EQ(read_fid_csv(dir / "fid.csv").signal, (std::vector<double>{1.0, 0.5}));
  std::filesystem::remove_all(dir);
}

TEST(Io, PolarizationModelJson) {
  const PolarizationModel m{0.3, 0.5, 0.4, 1.0, 0.5, 0.02};
  EXPECT_EQ(polarization_model_from_json(to_json(m)), m);
  EXPECT_THROW(polarization_model_from_json(json{{"delta", 1.0}}), FormatError);
}
