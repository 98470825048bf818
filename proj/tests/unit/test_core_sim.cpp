#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "spectranet/core/binary_io.hpp"
#include "spectranet/core/hash.hpp"
#include "spectranet/core/parallel.hpp"
#include "spectranet/core/rng.hpp"
#include "spectranet/metrics/dnmed.hpp"
#include "spectranet/sim/dataset.hpp"
#include "spectranet/sim/exposure.hpp"

namespace fs = std::filesystem;
using namespace spectranet;
using namespace spectranet::sim;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("spectranet_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

SatelliteClassSpec two_material_spec(const WavelengthGrid& g, std::vector<double> c1, std::vector<double> c2) {
  std::vector<double> r1(g.n_bins), r2(g.n_bins);
  for (std::size_t i = 0; i < g.n_bins; ++i) {
    r1[i] = 0.2 + 0.5 * static_cast<double>(i) / static_cast<double>(g.n_bins);
    r2[i] = 0.8 - 0.3 * static_cast<double>(i) / static_cast<double>(g.n_bins);
  }
  return {"pair", g, {{"a", r1}, {"b", r2}}, {std::move(c1), std::move(c2)}};
}

}  // namespace

TEST(Core, DeriveSeedIsStableAndStreamSensitive) {
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 3));
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 2, 4));
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(2, 2, 3));
}

TEST(Core, LittleEndianRoundTripAndTruncation) {
  std::stringstream ss;
  io::write_le<std::uint32_t>(ss, 0xdeadbeef);
  io::write_le<float>(ss, 1.5f);
  EXPECT_EQ(io::read_le<std::uint32_t>(ss, "u32"), 0xdeadbeefu);
  EXPECT_EQ(io::read_le<float>(ss, "f32"), 1.5f);
  EXPECT_THROW(io::read_le<std::uint64_t>(ss, "missing"), DataError);
}

TEST(Core, Fnv1aKnownVector) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(hex64(0xabc), "0000000000000abc");
}

TEST(Core, ParallelForCoversAllItemsAndRethrows) {
  std::vector<int> hit(100, 0);
  parallel_for(hit.size(), 4, [&](std::size_t i) { hit[i] += 1; });
  EXPECT_EQ(std::accumulate(hit.begin(), hit.end(), 0), 100);
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) { if (i == 7) throw DataError("boom"); }), DataError);
}

TEST(Spectra, GridCentersAndValidation) {
  WavelengthGrid g;
  EXPECT_DOUBLE_EQ(g.center(0), 630.0 + 0.5 * 350.0 / 336.0);
  EXPECT_EQ(g.centers().size(), 336u);
  EXPECT_THROW((WavelengthGrid{900, 600, 10}.validate()), ConfigError);
}

TEST(Spectra, SolarSpectrumIsPositiveWithUnitPeak) {
  const auto s = SolarSpectrum::blackbody(WavelengthGrid{});
  for (double v : s.photon_flux) EXPECT_GT(v, 0.0);
  EXPECT_DOUBLE_EQ(*std::max_element(s.photon_flux.begin(), s.photon_flux.end()), 1.0);
}

TEST(Spectra, AtmosphereBoundedAndMonotoneInAirmass) {
  WavelengthGrid g;
  const auto a1 = AtmosphereModel::make(g, 1.0, 3.0);
  const auto a2 = AtmosphereModel::make(g, 2.0, 3.0);
  for (std::size_t i = 0; i < g.n_bins; ++i) {
    EXPECT_GE(a1.transmission[i], 0.0);
    EXPECT_LE(a1.transmission[i], 1.0);
    EXPECT_LE(a2.transmission[i], a1.transmission[i]);
  }
  EXPECT_THROW(AtmosphereModel::make(g, 0.5, 1.0), ConfigError);
  EXPECT_THROW(AtmosphereModel::make(g, 1.0, -1.0), ConfigError);
}

TEST(Orientation, NadirWithZeroJitterIsExactReference) {
  for (std::uint64_t seed : {1, 2, 99}) {
    Rng rng(seed);
    EXPECT_EQ(sample_orientation(OrientationPolicy::nadir, 0.0, rng), kNadirReference);
  }
}

TEST(Orientation, NadirJitterBounded) {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const auto o = sample_orientation(OrientationPolicy::nadir, 1.0, rng);
    EXPECT_LE(angular_distance(o, kNadirReference), 1.0 * std::numbers::pi / 180.0 + 1e-12);
  }
  EXPECT_THROW(sample_orientation(OrientationPolicy::nadir, -1.0, rng), ConfigError);
}

TEST(Orientation, RandomIsDeterministicUnderSeed) {
  Rng a(7), b(7);
  EXPECT_EQ(sample_orientation(OrientationPolicy::random, 0.0, a), sample_orientation(OrientationPolicy::random, 0.0, b));
}

TEST(Orientation, RandomIsAreaUniform) {
  // For area-uniform directions cos(theta) ~ U(-1, 1): mean 0, sd 1/sqrt(3).
  Rng rng(11);
  const int n = 100000;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::cos(sample_orientation(OrientationPolicy::random, 0.0, rng).theta);
  const double sigma = 1.0 / std::sqrt(3.0 * n);
  EXPECT_LT(std::abs(s / n), 3.0 * sigma);
}

TEST(Satellite, MixingWeightsNormalizedEverywhere) {
  WavelengthGrid g;
  const auto lib = generate_material_library(g, {}, 3);
  const auto classes = generate_classes(g, lib, 4, {}, 3);
  Rng rng(1);
  for (const auto& c : classes)
    for (int i = 0; i < 10000; ++i) {
      const auto w = c.mixing_weights(sample_orientation(OrientationPolicy::random, 0.0, rng));
      double s = 0.0;
      for (double v : w) {
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
}

TEST(Satellite, IdentityReflectanceReturnsSun) {
  WavelengthGrid g;
  SatelliteClassSpec s{"one", g, {{"white", std::vector<double>(g.n_bins, 1.0)}}, {{1.0}}};
  const auto sun = SolarSpectrum::blackbody(g);
  const auto sed = compose_sed(s, kNadirReference, sun, AtmosphereModel::transparent(g));
  for (std::size_t i = 0; i < g.n_bins; ++i) EXPECT_EQ(sed.rate[i], sun.photon_flux[i]);
}

TEST(Satellite, EqualWeightsAverageReflectances) {
  WavelengthGrid g;
  const auto s = two_material_spec(g, {1.0, 0.2, 0.0, 0.1}, {1.0, 0.2, 0.0, 0.1});
  const auto sun = SolarSpectrum::blackbody(g);
  const auto atm = AtmosphereModel::make(g, 1.2, 2.0);
  const auto sed = compose_sed(s, Orientation{0.7, 1.1}, sun, atm);
  for (std::size_t i = 0; i < g.n_bins; ++i) {
    const double expect = sun.photon_flux[i] * atm.transmission[i] *
                          (s.materials[0].reflectance[i] + s.materials[1].reflectance[i]) / 2.0;
    EXPECT_NEAR(sed.rate[i], expect, 1e-15 * expect);
  }
}

TEST(Satellite, ThreeMaterialDotProductOracle) {
  WavelengthGrid g;
  const auto lib = generate_material_library(g, {}, 21);
  auto s = generate_classes(g, lib, 1, {}, 21).front();
  ASSERT_EQ(s.materials.size(), 3u);
  const Orientation o{1.1, 2.3};
  // Independent evaluation of the harmonic expansion.
  const double x = std::sin(o.theta) * std::cos(o.phi), y = std::sin(o.theta) * std::sin(o.phi), z = std::cos(o.theta);
  const double pi = std::numbers::pi;
  const double Y[9] = {0.5 * std::sqrt(1 / pi),
                       std::sqrt(3 / (4 * pi)) * y,
                       std::sqrt(3 / (4 * pi)) * z,
                       std::sqrt(3 / (4 * pi)) * x,
                       0.5 * std::sqrt(15 / pi) * x * y,
                       0.5 * std::sqrt(15 / pi) * y * z,
                       0.25 * std::sqrt(5 / pi) * (3 * z * z - 1),
                       0.5 * std::sqrt(15 / pi) * x * z,
                       0.25 * std::sqrt(15 / pi) * (x * x - y * y)};
  std::vector<double> w(3);
  double tot = 0;
  for (int m = 0; m < 3; ++m) {
    double v = 0;
    for (std::size_t k = 0; k < s.weight_basis[m].size(); ++k) v += s.weight_basis[m][k] * Y[k];
    w[m] = std::max(0.0, v);
    tot += w[m];
  }
  ASSERT_GT(tot, 0.0);
  const auto sun = SolarSpectrum::blackbody(g);
  const auto atm = AtmosphereModel::make(g, 1.3, 2.5);
  const auto sed = compose_sed(s, o, sun, atm);
  for (std::size_t i = 0; i < g.n_bins; ++i) {
    double r = 0;
    for (int m = 0; m < 3; ++m) r += w[m] / tot * s.materials[m].reflectance[i];
    const double expect = sun.photon_flux[i] * atm.transmission[i] * r;
    EXPECT_NEAR(sed.rate[i], expect, 1e-12 * expect);
  }
}

TEST(Satellite, GridMismatchIsConfigError) {
  WavelengthGrid g, other{600, 900, 100};
  SatelliteClassSpec s{"one", g, {{"white", std::vector<double>(g.n_bins, 1.0)}}, {{1.0}}};
  EXPECT_THROW(compose_sed(s, kNadirReference, SolarSpectrum::blackbody(other), AtmosphereModel::transparent(g)),
               ConfigError);
}

TEST(Satellite, ClassSpecJsonRoundTrip) {
  WavelengthGrid g;
  const auto lib = generate_material_library(g, {}, 4);
  const auto cls = generate_classes(g, lib, 2, {}, 4);
  const auto dir = scratch("classes");
  save_class_specs((dir / "c.json").string(), cls);
  const auto back = load_class_specs((dir / "c.json").string());
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].class_id, cls[1].class_id);
  EXPECT_EQ(back[1].weight_basis, cls[1].weight_basis);
}

TEST(Instrument, NoSignalFrameIsBias) {
  WavelengthGrid g;
  auto instr = InstrumentModel::desk(g);
  instr.read_noise_sigma = 0;
  instr.background_level = 0;
  instr.background_gradient = 0;
  instr.bias_level = 37.0;
  Rng rng(1);
  const auto f = render_frame(Sed{g, std::vector<double>(g.n_bins, 0.0)}, instr, 1.0, rng);
  for (double p : f.pixels) EXPECT_EQ(p, 37.0);
}

TEST(Instrument, NoiselessColumnSumsMatchFlux) {
  WavelengthGrid g;
  auto instr = InstrumentModel::desk(g).noiseless();
  instr.background_level = 0;
  instr.background_gradient = 0;
  instr.bias_level = 0;
  const auto lib = generate_material_library(g, {}, 8);
  const auto spec = generate_classes(g, lib, 1, {}, 8).front();
  const auto sed = compose_sed(spec, kNadirReference, SolarSpectrum::blackbody(g), AtmosphereModel::make(g, 1.1, 2));
  const double scale = 250.0;
  const auto f = render_noiseless(sed, instr, scale);
  // Desk columns coincide with bin centers, so column c sees sed bin c.
  double total = 0.0, expect_total = 0.0;
  for (std::size_t c = 0; c < f.width; ++c) {
    double col = 0.0;
    for (std::size_t r = 0; r < f.height; ++r) col += f.at(r, c);
    const double expect = scale * sed.rate[c];
    EXPECT_NEAR(col, expect, 1e-6 * expect);
    total += col;
    expect_total += expect;
  }
  EXPECT_NEAR(total, expect_total, 1e-4 * expect_total);
}

TEST(Instrument, RenderingIsDeterministicAndNonnegative) {
  WavelengthGrid g;
  const auto instr = InstrumentModel::desk(g);
  const auto lib = generate_material_library(g, {}, 8);
  const auto spec = generate_classes(g, lib, 1, {}, 8).front();
  const auto sed = compose_sed(spec, kNadirReference, SolarSpectrum::blackbody(g), AtmosphereModel::transparent(g));
  Rng a(42), b(42);
  const auto fa = render_frame(sed, instr, 5.0, a);
  const auto fb = render_frame(sed, instr, 5.0, b);
  EXPECT_EQ(fa.pixels, fb.pixels);
  for (double p : fa.pixels) {
    EXPECT_GE(p, 0.0);
    EXPECT_EQ(static_cast<double>(static_cast<float>(p)), p);
  }
}

TEST(Instrument, PaperGeometryValidates) {
  WavelengthGrid g;
  const auto m = InstrumentModel::paper(g);
  EXPECT_EQ(m.frame_height, 200u);
  EXPECT_EQ(m.frame_width, 1340u);
  EXPECT_NO_THROW(m.validate(g));
}

TEST(Frame, FileRoundTripIsBitIdentical) {
  Frame f;
  f.height = 3;
  f.width = 4;
  f.pixels = {0, 1, 2.5, 3, 4, 5, 6, 7, 8, 9, 10, 1e5};
  const auto dir = scratch("frame");
  write_frame(dir / "f.spfr", f);
  const auto back = read_frame(dir / "f.spfr");
  EXPECT_EQ(back.height, 3u);
  EXPECT_EQ(back.width, 4u);
  EXPECT_EQ(back.pixels, f.pixels);
  {
    std::ofstream bad(dir / "bad.spfr", std::ios::binary);
    bad << "NOPE";
  }
  EXPECT_THROW(read_frame(dir / "bad.spfr"), DataError);
  EXPECT_THROW(read_frame(dir / "missing.spfr"), MissingArtifactError);
}

TEST(Exposure, CalibrationHitsTargetAndIsLinear) {
  WavelengthGrid g;
  const auto instr = InstrumentModel::desk(g);
  const auto lib = generate_material_library(g, {}, 2);
  const auto spec = generate_classes(g, lib, 1, {}, 2).front();
  const auto sed = compose_sed(spec, kNadirReference, SolarSpectrum::blackbody(g), AtmosphereModel::transparent(g));
  metrics::DnMedOptions opt;
  opt.psf_sigma = instr.psf_sigma;
  const double s100 = calibrate_exposure(sed, instr, 100.0, opt);
  const double dn = metrics::dn_med(render_noiseless(sed, instr, s100), opt).dnmed;
  EXPECT_GE(dn, 99.0);
  EXPECT_LE(dn, 101.0);
  const double s200 = calibrate_exposure(sed, instr, 200.0, opt);
  EXPECT_NEAR(s200 / s100, 2.0, 0.02);
  EXPECT_THROW(calibrate_exposure(Sed{g, std::vector<double>(g.n_bins, 0.0)}, instr, 100.0, opt), SimulationError);
}

TEST(Dataset, SingleExampleRoundTrip) {
  DatasetConfig cfg;
  cfg.n_classes = 1;
  cfg.examples_per_class = 1;
  cfg.seed = 5;
  const auto dir = scratch("ds1");
  const auto m = generate_dataset(cfg, dir);
  ASSERT_EQ(m.size(), 1u);
  const auto back = read_manifest(dir / "manifest.jsonl");
  ASSERT_EQ(back.records, m.records);
  const auto f = read_frame(back.frame_path(back.records[0]));
  const auto again = render_example(cfg, &cfg.resolve_classes()[0], back.records[0].seed);
  EXPECT_EQ(f.pixels, again.frame.pixels);
}

TEST(Dataset, NineByTwoHundredCounts) {
  DatasetConfig cfg;  // 9 classes, 200 per class, nadir, DN_med ~ U(50, 1000)
  cfg.seed = 9;
  cfg.workers = 1;
  const auto dir = scratch("ds9");
  const auto m = generate_dataset(cfg, dir);
  EXPECT_EQ(m.size(), 1800u);
  for (const auto& [cls, n] : m.class_counts()) EXPECT_EQ(n, 200u) << cls;
  std::map<std::string, std::map<std::string, int>> per;
  for (const auto& r : m.records) {
    ++per[r.class_id][r.split];
    EXPECT_GE(r.target_dnmed, 50.0);
    EXPECT_LE(r.target_dnmed, 1000.0);
  }
  for (auto& [cls, s] : per) {
    EXPECT_NEAR(s["train"], 160, 1);
    EXPECT_NEAR(s["val"], 20, 1);
    EXPECT_NEAR(s["test"], 20, 1);
  }
}

TEST(Dataset, DeterministicAndWorkerIndependent) {
  DatasetConfig cfg;
  cfg.n_classes = 2;
  cfg.examples_per_class = 6;
  cfg.include_flats = true;
  cfg.n_flats = 3;
  cfg.seed = 77;
  const auto d1 = scratch("det1"), d2 = scratch("det2");
  generate_dataset(cfg, d1);
  cfg.workers = 3;
  generate_dataset(cfg, d2);
  auto slurp = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  EXPECT_EQ(slurp(d1 / "manifest.jsonl"), slurp(d2 / "manifest.jsonl"));
  const auto m = read_manifest(d1 / "manifest.jsonl");
  EXPECT_EQ(m.class_counts().at("flat"), 3u);
  for (const auto& r : m.records) EXPECT_EQ(slurp(d1 / r.path), slurp(d2 / r.path)) << r.path;
}

TEST(Dataset, SmallerDatasetIsPrefixOfLarger) {
  DatasetConfig small;
  small.n_classes = 2;
  small.examples_per_class = 3;
  small.seed = 4;
  DatasetConfig large = small;
  large.examples_per_class = 5;
  const auto ms = generate_dataset(small, scratch("pre_s"));
  const auto ml = generate_dataset(large, scratch("pre_l"));
  for (const auto& r : ms.records) {
    const auto it = std::find_if(ml.records.begin(), ml.records.end(), [&](const auto& x) { return x.path == r.path; });
    ASSERT_NE(it, ml.records.end());
    EXPECT_EQ(it->seed, r.seed);
    EXPECT_EQ(it->measured_dnmed, r.measured_dnmed);
  }
}

TEST(Dataset, DuplicateOrReservedIdsRejected) {
  WavelengthGrid g;
  SatelliteClassSpec s{"dup", g, {{"white", std::vector<double>(g.n_bins, 0.5)}}, {{1.0}}};
  DatasetConfig cfg;
  cfg.examples_per_class = 1;
  cfg.class_specs = {s, s};
  EXPECT_THROW(generate_dataset(cfg, scratch("dup")), ConfigError);
  s.class_id = "flat";
  cfg.class_specs = {s};
  EXPECT_THROW(generate_dataset(cfg, scratch("flat")), ConfigError);
}

TEST(Dataset, IdenticalSpecsGiveIdenticalSedDistributions) {
  // Null-case control: same materials and bases means the same SED for the same
  // orientation, so the classes are indistinguishable by construction.
  WavelengthGrid g;
  const auto lib = generate_material_library(g, {}, 30);
  auto a = generate_classes(g, lib, 1, {}, 30).front();
  auto b = a;
  b.class_id = "twin";
  Rng rng(3);
  const auto sun = SolarSpectrum::blackbody(g);
  const auto atm = AtmosphereModel::transparent(g);
  for (int i = 0; i < 100; ++i) {
    const auto o = sample_orientation(OrientationPolicy::random, 0.0, rng);
    EXPECT_EQ(compose_sed(a, o, sun, atm).rate, compose_sed(b, o, sun, atm).rate);
  }
}
