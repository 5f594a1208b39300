#include <doctest.h>

#include <fstream>
#include <numeric>
#include <set>

#include "cbamc/error.hpp"
#include "cbamc/evalkit.hpp"
#include "oracles.hpp"

using namespace cbamc;
using namespace cbamc::eval;
using cbamc::datagen::DatasetSplit;
using cbamc::datagen::SplitKind;

namespace {

const DatasetSplit& inset() {
  static const DatasetSplit s = datagen::generate_split(SplitKind::TestInset, 30, 11);
  return s;
}

const DatasetSplit& outofset() {
  static const DatasetSplit s = datagen::generate_split(SplitKind::TestOutofset, 10, 12);
  return s;
}

std::vector<ConceptVector> oracle_concepts(const DatasetSplit& split) {
  std::vector<ConceptVector> out;
  for (const auto& ex : split.examples) out.push_back(concept_vector(ex.scheme));
  return out;
}

std::size_t count_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

}  // namespace

TEST_CASE("perfect predictor") {
  const auto& s = inset();
  std::vector<int> pred;
  for (const auto& ex : s.examples) pred.push_back(ex.label_id);
  const auto r = evaluate_classifier(pred, s.class_list, s);
  REQUIRE(r.overall_accuracy);
  CHECK(*r.overall_accuracy == 1.0);
  for (const auto& [snr, acc] : r.accuracy_by_snr) CHECK(acc == 1.0);
  for (std::size_t i = 0; i < r.confusion.size(); ++i) {
    for (std::size_t j = 0; j < r.confusion.size(); ++j) CHECK(r.confusion[i][j] == (i == j ? 30 : 0));
  }
}

TEST_CASE("random predictor: conservation and snr coherence") {
  const auto& s = inset();
  Rng rng(4);
  std::vector<int> pred;
  for (std::size_t i = 0; i < s.examples.size(); ++i) pred.push_back(rng.uniform_int(0, 8));
  const auto r = evaluate_classifier(pred, s.class_list, s);

  int total = 0;
  for (std::size_t i = 0; i < r.confusion.size(); ++i) {
    CHECK(std::accumulate(r.confusion[i].begin(), r.confusion[i].end(), 0) == 30);
    int col = 0;
    for (const auto& row : r.confusion) col += row[i];
    CHECK(col == std::count(pred.begin(), pred.end(), static_cast<int>(i)));
    total += std::accumulate(r.confusion[i].begin(), r.confusion[i].end(), 0);
  }
  CHECK(total == static_cast<int>(s.examples.size()));

  double weighted = 0.0;
  int n = 0;
  for (const auto& [snr, acc] : r.accuracy_by_snr) {
    weighted += acc * r.count_by_snr.at(snr);
    n += r.count_by_snr.at(snr);
  }
  CHECK(std::abs(weighted / n - *r.overall_accuracy) < 1e-9);
  CHECK(*r.overall_accuracy < 0.3);
}

TEST_CASE("strict mode rejects foreign classes; forced choice reports them") {
  const auto& s = outofset();
  const auto in_classes = std::vector<Scheme>(in_set_schemes().begin(), in_set_schemes().end());
  std::vector<int> pred(s.examples.size(), 0);
  try {
    evaluate_classifier(pred, in_classes, s);
    FAIL("expected ClassMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ClassMismatch);
  }
  const auto r = evaluate_classifier(pred, in_classes, s, ClassifierMode::ForcedChoice);
  CHECK(r.forced_choice);
  CHECK_FALSE(r.overall_accuracy.has_value());
  CHECK(r.confusion.size() == 6);
  CHECK(r.confusion[0].size() == 9);
  CHECK(r.truth_classes.size() == 6);
  CHECK_FALSE(r.notes.empty());
}

TEST_CASE("box statistics of known samples") {
  const std::vector<double> xs = {1, 2, 3, 4, 5, 6, 7, 8, 100};
  const auto b = box_stats(xs);
  CHECK(b.count == 9);
  CHECK(b.median == 5.0);
  CHECK(b.q1 == 3.0);
  CHECK(b.q3 == 7.0);
  CHECK(b.whisker_low == 1.0);
  CHECK(b.whisker_high == 8.0);
  CHECK(b.outliers == 1);

  const std::vector<double> four = {0.0, 1.0, 2.0, 3.0};
  const auto c = box_stats(four);
  CHECK(c.median == 1.5);
  CHECK(c.q1 == 0.75);
  CHECK(c.q3 == 2.25);
  CHECK(c.outliers == 0);
}

TEST_CASE("oracle regressor: zero errors and peaks at legal orders") {
  const auto& s = inset();
  const auto r = evaluate_regressor(oracle_concepts(s), s);
  CHECK(r.has_regression);
  CHECK(r.head_errors.size() == 4);
  for (const auto& [head, b] : r.head_errors) {
    CAPTURE(head);
    CHECK(b.median == 0.0);
    CHECK(b.q1 == 0.0);
    CHECK(b.q3 == 0.0);
    CHECK(b.outliers == 0);
    CHECK(b.count == static_cast<int>(s.examples.size()));
  }
  REQUIRE(r.order_histogram.size() == static_cast<std::size_t>(kOrderBins));
  CHECK(std::accumulate(r.order_histogram.begin(), r.order_histogram.end(), 0) == static_cast<int>(s.examples.size()));
  std::set<int> legal_bins;
  for (double v : {1.0, 1.0 / 2, 1.0 / 3, 1.0 / 4, 1.0 / 6, 0.0}) legal_bins.insert(order_bin(v));
  CHECK(legal_bins.size() == 6);
  for (int b = 0; b < kOrderBins; ++b) CHECK((r.order_histogram[b] > 0) == (legal_bins.count(b) == 1));
  for (const auto& [name, mae] : r.per_modulation_mae) {
    for (double v : mae) CHECK(v < 1e-7);  // float storage of 1/3, 1/6
  }

  const std::vector<double> legal = {1.0, 0.5, 1.0 / 3, 0.25, 1.0 / 6, 0.0};
  const auto oc = oracle_concepts(s);
  CHECK(fraction_near(oc, legal, 0.05) == 1.0);
}

TEST_CASE("order bins clamp at the edges") {
  CHECK(order_bin(-5.0) == 0);
  CHECK(order_bin(-0.1) == 0);
  CHECK(order_bin(1.1) == kOrderBins - 1);
  CHECK(order_bin(7.0) == kOrderBins - 1);
  CHECK(order_bin(0.55) == 27);
  CHECK(order_bin(0.0) == 4);
}

TEST_CASE("zero-shot probe with an oracle regressor") {
  const auto& s = outofset();
  const auto rows = zero_shot_probe(oracle_concepts(s), s);
  CHECK(rows.size() == 6);
  CHECK(zero_shot_candidates().size() == kSchemeCount);
  for (const auto& row : rows) {
    CAPTURE(to_string(row.scheme));
    CHECK(row.total == 10);
    switch (row.scheme) {
      case Scheme::PSK16:
      case Scheme::QAM32:
        CHECK(row.self_rate == 1.0);
        CHECK(row.tied_with.empty());
        break;
      case Scheme::MSK:
      case Scheme::GFSK:
        CHECK(row.assignments.at("FSK") == 10);
        CHECK(row.self_rate == 0.0);
        CHECK(row.tied_with.size() == 2);
        break;
      case Scheme::AM_LSB:
        CHECK(row.assignments.at("AM_DSB") == 10);
        CHECK(row.tied_with == std::vector<std::string>{"AM_DSB"});
        break;
      case Scheme::FM_WB:
        CHECK(row.assignments.at("FM_NB") == 10);
        break;
      default:
        FAIL("unexpected scheme");
    }
  }
  // PSK16 sits on (0,0,1,0,1/4), distinct from QAM16's (0,1,1,0,1/4).
  const auto psk16 = concept_vector(Scheme::PSK16);
  CHECK(concept_distance(psk16, concept_vector(Scheme::QAM16)) == doctest::Approx(1.0));
}

TEST_CASE("report round trip, csv companions, provenance") {
  const auto& s = inset();
  std::vector<int> pred;
  for (const auto& ex : s.examples) pred.push_back((ex.label_id + (ex.snr_db % 3 == 0)) % 9);
  const auto cls = evaluate_classifier(pred, s.class_list, s);
  const auto reg = evaluate_regressor(oracle_concepts(s), s);
  auto report = merge_reports(cls, reg);
  CHECK(report.has_classification);
  CHECK(report.has_regression);
  CHECK(report.provenance.at("dataset_manifest_hash") == datagen::manifest_hash(s.manifest));

  const auto dir = oracle::scratch_dir("eval_report");
  write_report(report, dir / "report.json");
  CHECK(read_report(dir / "report.json") == report);
  CHECK(report_from_json(to_json(report)) == report);
  CHECK(count_lines(dir / "confusion.csv") == 1 + 9);
  CHECK(count_lines(dir / "accuracy_by_snr.csv") == 1 + report.accuracy_by_snr.size());
  CHECK(std::filesystem::exists(dir / "head_errors.csv"));
  CHECK(std::filesystem::exists(dir / "order_histogram.csv"));
  std::ifstream conf(dir / "confusion.csv");
  std::string header;
  std::getline(conf, header);
  CHECK(header.rfind("truth,BPSK,", 0) == 0);
}
