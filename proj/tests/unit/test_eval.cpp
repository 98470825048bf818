#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "spectranet/eval/report.hpp"
#include "support/property_checks.hpp"

using namespace spectranet;
using namespace spectranet::eval;
namespace tc = spectranet::testing;
namespace fs = std::filesystem;

namespace {

std::vector<EvalRecord> random_records(std::size_t n, int classes, std::size_t members, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0, 2);
  std::vector<EvalRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::vector<double>> m(members, std::vector<double>(classes));
    for (auto& row : m)
      for (auto& v : row) v = z(rng);
    out.push_back(make_record(static_cast<int>(rng() % classes), m, 50.0 + 950.0 * (i % 97) / 97.0));
  }
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST(TopK, FullKIsOneAndOneHotIsPerfect) {
  const auto recs = random_records(200, 5, 2, 1);
  EXPECT_EQ(top_k_accuracy(recs, 5), 1.0);
  std::vector<EvalRecord> perfect;
  for (int c = 0; c < 4; ++c) {
    std::vector<double> p(4, 0.0);
    p[c] = 1.0;
    perfect.push_back(record_from_probs(c, p));
  }
  EXPECT_EQ(top_k_accuracy(perfect, 1), 1.0);
  EXPECT_THROW(top_k_accuracy(perfect, 0), ConfigError);
  EXPECT_THROW(top_k_accuracy(perfect, 5), ConfigError);
}

TEST(TopK, HandBuiltRankings) {
  std::vector<EvalRecord> r{record_from_probs(0, {0.5, 0.3, 0.2}),   // rank 1
                            record_from_probs(1, {0.5, 0.3, 0.2}),   // rank 2
                            record_from_probs(2, {0.5, 0.3, 0.2})};  // rank 3
  EXPECT_DOUBLE_EQ(top_k_accuracy(r, 1), 1.0 / 3);
  EXPECT_DOUBLE_EQ(top_k_accuracy(r, 2), 2.0 / 3);
  EXPECT_DOUBLE_EQ(top_k_accuracy(r, 3), 1.0);
  // Ties go to the lowest class index.
  std::vector<EvalRecord> tie{record_from_probs(0, {0.4, 0.4, 0.2}), record_from_probs(1, {0.4, 0.4, 0.2})};
  EXPECT_DOUBLE_EQ(top_k_accuracy(tie, 1), 0.5);
  EXPECT_EQ(tie[1].predicted(), 0);
}

TEST(Ece, PerfectlyCalibratedIsZero) {
  const auto rep = ece(tc::perfectly_calibrated_set());
  EXPECT_LT(rep.ece, 1e-12);
  double mass = 0;
  for (const auto& b : rep.bins) mass += b.mass;
  EXPECT_NEAR(mass, 1.0, 1e-12);
}

TEST(Ece, ConfidentAndAlwaysWrongIsOne) {
  std::vector<EvalRecord> r;
  for (int i = 0; i < 10; ++i) r.push_back(record_from_probs(1, {1.0, 0.0}));
  EXPECT_NEAR(ece(r).ece, 1.0, 1e-12);
  EXPECT_EQ(ece(r).bins.back().count, 10u);
}

TEST(Ece, ConstructedPointEightVersusPointSix) {
  const auto rep = ece(tc::fixed_confidence_set(0.8, 0.6));
  EXPECT_NEAR(rep.ece, 0.2, 0.02);
  double weighted = 0;
  for (const auto& b : rep.bins) weighted += b.mass * std::abs(b.confidence - b.accuracy);
  EXPECT_NEAR(weighted, rep.ece, 1e-12);
}

TEST(Ece, BoundedAndErrors) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const double e = ece(random_records(300, 4, 3, s)).ece;
    EXPECT_GE(e, 0.0);
    EXPECT_LE(e, 1.0);
  }
  EXPECT_THROW(ece({}), DataError);
  EXPECT_THROW(ece(random_records(3, 3, 1, 1), 0), ConfigError);
}

TEST(Temper, UnitTemperatureIsIdentity) {
  const auto recs = random_records(100, 6, 3, 2);
  for (auto point : {TemperPoint::member, TemperPoint::post_ensemble}) {
    const auto t = temper(recs, 1.0, point);
    for (std::size_t i = 0; i < recs.size(); ++i)
      for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(t[i].probs[c], recs[i].probs[c], 1e-9);
  }
}

TEST(Temper, HugeTemperatureIsUniform) {
  const auto recs = temper(random_records(50, 7, 2, 3), 1e4);
  for (const auto& r : recs)
    for (double p : r.probs) EXPECT_LT(std::abs(p - 1.0 / 7), 1e-3);
  EXPECT_THROW(temper(recs, 0.0), ConfigError);
  EXPECT_THROW(temper(recs, -1.0), ConfigError);
}

TEST(Temper, TopKUnchanged) {
  EXPECT_EQ(tc::tempering_topk_shift(1000, 1, TemperPoint::member, 4), 0.0);
  EXPECT_EQ(tc::tempering_topk_shift(1000, 5, TemperPoint::post_ensemble, 5), 0.0);
}

TEST(Temper, ArgmaxInvariantPerRecord) {
  const auto recs = random_records(500, 9, 1, 6);
  for (double T : {0.05, 0.3, 3.0, 10.0}) {
    const auto t = temper(recs, T);
    for (std::size_t i = 0; i < recs.size(); ++i) EXPECT_EQ(t[i].predicted(), recs[i].predicted());
  }
}

TEST(Sweep, CalibratedInputBestAtOne) {
  const auto recs = tc::perfectly_calibrated_set();
  const auto s = temperature_sweep(recs);
  const double at_one = ece(recs).ece;
  for (const auto& [T, e] : s.curve) EXPECT_LE(at_one, e + 1e-12) << T;
  EXPECT_EQ(s.curve.size(), 200u);
}

TEST(Sweep, OverconfidentWantsHotterUnderconfidentColder) {
  const auto over = temperature_sweep(tc::fixed_confidence_set(0.9, 0.6));
  EXPECT_GT(over.best_T, 1.0);
  EXPECT_LT(over.ece_at_best_T, ece(tc::fixed_confidence_set(0.9, 0.6)).ece);
  const auto under = temperature_sweep(tc::fixed_confidence_set(0.5, 0.9));
  EXPECT_LT(under.best_T, 1.0);
}

TEST(Sweep, TiesGoToSmallestTemperature) {
  // Every prediction is one-hot: tempering changes nothing, so all T tie.
  std::vector<EvalRecord> r{record_from_probs(0, {1.0, 0.0}), record_from_probs(1, {0.0, 1.0})};
  EXPECT_DOUBLE_EQ(temperature_sweep(r, {2.0, 0.5, 1.0}).best_T, 0.5);
  EXPECT_THROW(temperature_sweep(r, {}), ConfigError);
}

TEST(Abstain, ThresholdZeroAndOne) {
  const auto recs = random_records(300, 5, 4, 7);
  const auto a0 = threshold_abstain(recs, 0.0);
  EXPECT_EQ(a0.fraction_uncertain, 0.0);
  EXPECT_EQ(*a0.top1, top_k_accuracy(recs, 1));
  EXPECT_EQ(*a0.top3, top_k_accuracy(recs, 3));
  const auto a1 = threshold_abstain(recs, 1.0);
  EXPECT_EQ(a1.fraction_uncertain, 1.0);
  EXPECT_FALSE(a1.top1.has_value());
  EXPECT_THROW(threshold_abstain(recs, 1.5), ConfigError);
}

TEST(Abstain, UncertainFractionNondecreasing) {
  const auto recs = random_records(500, 4, 5, 8);
  double prev = -1;
  for (int i = 0; i <= 20; ++i) {
    const double f = threshold_abstain(recs, i / 20.0).fraction_uncertain;
    EXPECT_GE(f, prev);
    prev = f;
  }
}

TEST(Abstain, UsesMedianOfMembers) {
  // Mean confidence 0.6, median 0.9: the record passes a 0.8 threshold.
  EvalRecord r = make_record(0, {{std::log(0.9), std::log(0.1)},
                                 {std::log(0.9), std::log(0.1)},
                                 {std::log(0.0001), std::log(0.9999)}});
  EXPECT_NEAR(r.median_probs[0], 0.9, 1e-12);
  EXPECT_EQ(threshold_abstain({r}, 0.8).n_confident, 1u);
}

TEST(DnmedBins, SingleBinEqualsOverall) {
  const auto recs = random_records(200, 3, 1, 9);
  const auto bins = accuracy_by_dnmed(recs, {0.0, 2000.0});
  ASSERT_EQ(bins.size(), 1u);
  EXPECT_EQ(bins[0].count, 200u);
  EXPECT_DOUBLE_EQ(*bins[0].accuracy, top_k_accuracy(recs, 1));
}

TEST(DnmedBins, RisingAccuracyGivesMonotoneTableAndPositiveTrend) {
  std::vector<EvalRecord> recs;
  const std::vector<double> edges{50, 200, 400, 700, 1000};
  const double acc[4] = {0.3, 0.5, 0.7, 0.9};
  for (int b = 0; b < 4; ++b)
    for (int i = 0; i < 100; ++i) {
      const double dn = edges[b] + (edges[b + 1] - edges[b]) * (i + 0.5) / 100;
      auto r = record_from_probs(i < acc[b] * 100 ? 0 : 1, {0.7, 0.3}, dn);
      recs.push_back(r);
    }
  const auto bins = accuracy_by_dnmed(recs, edges);
  for (int b = 0; b < 4; ++b) EXPECT_NEAR(*bins[b].accuracy, acc[b], 1e-12);
  EXPECT_NEAR(*dnmed_trend(bins), 1.0, 1e-12);
}

TEST(DnmedBins, EmptyBinFlaggedAndExcluded) {
  std::vector<EvalRecord> recs{record_from_probs(0, {0.6, 0.4}, 100), record_from_probs(1, {0.6, 0.4}, 800),
                               record_from_probs(0, {0.6, 0.4}, 900)};
  const auto bins = accuracy_by_dnmed(recs, {50, 200, 400, 1000});
  EXPECT_FALSE(bins[1].accuracy.has_value());
  EXPECT_EQ(bins[2].count, 2u);
  EXPECT_TRUE(dnmed_trend(bins).has_value());
  EXPECT_THROW(accuracy_by_dnmed(recs, {5, 1}), ConfigError);
  // Upper edge belongs to the last bin.
  EXPECT_EQ(accuracy_by_dnmed({record_from_probs(0, {0.6, 0.4}, 1000)}, {50, 1000})[0].count, 1u);
}

TEST(Spearman, KnownValues) {
  EXPECT_NEAR(*spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0, 1e-12);
  EXPECT_NEAR(*spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0, 1e-12);
  EXPECT_NEAR(*spearman({1, 2, 3}, {1, 3, 2}), 0.5, 1e-12);
  EXPECT_FALSE(spearman({1}, {1}).has_value());
  EXPECT_FALSE(spearman({1, 2, 3}, {5, 5, 5}).has_value());
}

TEST(Confusion, PerfectIsDiagonal) {
  std::vector<EvalRecord> r;
  for (int i = 0; i < 12; ++i) {
    std::vector<double> p(3, 0.1);
    p[i % 3] = 0.8;
    r.push_back(record_from_probs(i % 3, p));
  }
  const auto m = confusion_matrix(r);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(m.counts[i][j], i == j ? 4u : 0u);
  for (const auto& s : m.class_stats()) EXPECT_EQ(s.f1, 1.0);
}

TEST(Confusion, HandBuiltFourRecords) {
  std::vector<EvalRecord> r{record_from_probs(0, {0.7, 0.3}), record_from_probs(0, {0.2, 0.8}),
                            record_from_probs(1, {0.1, 0.9}), record_from_probs(1, {0.6, 0.4})};
  const auto m = confusion_matrix(r);
  EXPECT_EQ(m.counts, (std::vector<std::vector<std::size_t>>{{1, 1}, {1, 1}}));
  const auto s = m.class_stats();
  EXPECT_DOUBLE_EQ(s[0].precision, 0.5);
  EXPECT_DOUBLE_EQ(s[1].recall, 0.5);
  EXPECT_DOUBLE_EQ(s[1].f1, 0.5);
}

TEST(Confusion, TotalsAndMicroRecall) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto recs = random_records(250, 6, 2, seed);
    const auto m = confusion_matrix(recs);
    EXPECT_EQ(m.total(), recs.size());
    EXPECT_EQ(m.micro_recall(), top_k_accuracy(recs, 1));
  }
}

TEST(Report, CsvSchemasAndDeterminism) {
  const auto dir = fs::temp_directory_path() / "spectranet_test_report";
  fs::remove_all(dir);
  const auto recs = random_records(120, 3, 2, 11);
  const auto rep = calibration_report(recs, 15, default_temperature_grid(), TemperPoint::member);
  const auto cm = confusion_matrix(recs);
  const std::vector<std::string> names{"a", "b", "c"};
  for (const char* sub : {"x", "y"}) {
    write_reliability(dir / sub / "reliability.csv", rep);
    write_confusion(dir / sub / "confusion.csv", cm, names);
    write_class_stats(dir / sub / "per_class_stats.csv", cm, names);
    write_accuracy_vs_dnmed(dir / sub / "accuracy_vs_dnmed.csv", accuracy_by_dnmed(recs, {50, 200, 400, 700, 1000}));
    write_abstention(dir / sub / "abstention.csv", {{"point", {threshold_abstain(recs, 0.4)}}});
  }
  for (const char* f : {"reliability.csv", "confusion.csv", "per_class_stats.csv", "accuracy_vs_dnmed.csv",
                        "abstention.csv"})
    EXPECT_EQ(slurp(dir / "x" / f), slurp(dir / "y" / f)) << f;
  const auto stats = slurp(dir / "x" / "per_class_stats.csv");
  EXPECT_EQ(stats.substr(0, stats.find('\n')), "Class,Precision,Recall,F1");
  const auto rel = slurp(dir / "x" / "reliability.csv");
  EXPECT_EQ(std::count(rel.begin(), rel.end(), '\n'), 16);
}
