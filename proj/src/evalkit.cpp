#include "cbamc/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cbamc/error.hpp"

namespace cbamc::eval {

namespace {

using datagen::DatasetSplit;

std::string name_of(Scheme s) { return std::string(to_string(s)); }

nlohmann::json split_provenance(const DatasetSplit& split) {
  return {{"dataset_manifest_hash", datagen::manifest_hash(split.manifest)},
          {"dataset_seed", split.manifest.seed},
          {"split", datagen::to_string(split.kind)}};
}

nlohmann::json bundle_provenance(const cbm::ModelBundle& bundle) {
  return {{"kind", cbm::to_string(bundle.kind)},
          {"profile", cbm::to_string(bundle.config.profile)},
          {"seed", bundle.config.seed}};
}

EvalReport blank_report(const DatasetSplit& split) {
  EvalReport r;
  r.split = std::string(datagen::to_string(split.kind));
  r.example_count = static_cast<int>(split.examples.size());
  r.provenance = split_provenance(split);
  return r;
}

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

std::string csv_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

BoxStats box_stats(std::span<const double> samples) {
  BoxStats b;
  b.count = static_cast<int>(samples.size());
  if (samples.empty()) return b;
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  b.median = quantile(sorted, 0.5);
  b.q1 = quantile(sorted, 0.25);
  b.q3 = quantile(sorted, 0.75);
  const double iqr = b.q3 - b.q1;
  const double lo_fence = b.q1 - 1.5 * iqr;
  const double hi_fence = b.q3 + 1.5 * iqr;
  b.whisker_low = b.q1;
  b.whisker_high = b.q3;
  for (double v : sorted) {
    if (v < lo_fence || v > hi_fence) {
      ++b.outliers;
      continue;
    }
    b.whisker_low = std::min(b.whisker_low, v);
    b.whisker_high = std::max(b.whisker_high, v);
  }
  return b;
}

EvalReport evaluate_classifier(std::span<const int> predicted, const std::vector<Scheme>& classes,
                               const DatasetSplit& split, ClassifierMode mode) {
  if (predicted.size() != split.examples.size()) {
    throw Error(ErrorCode::ShapeMismatch, "one prediction per example required");
  }
  if (split.examples.empty()) throw Error(ErrorCode::EmptyDataset, "cannot evaluate an empty split");
  const auto k = static_cast<int>(classes.size());
  auto index_in = [](const std::vector<Scheme>& list, Scheme s) {
    const auto it = std::find(list.begin(), list.end(), s);
    return it == list.end() ? -1 : static_cast<int>(it - list.begin());
  };

  EvalReport r = blank_report(split);
  r.has_classification = true;
  for (Scheme s : classes) r.predicted_classes.push_back(name_of(s));

  bool all_known = true;
  for (Scheme s : split.class_list) all_known = all_known && index_in(classes, s) >= 0;
  if (mode == ClassifierMode::Strict && !all_known) {
    throw Error(ErrorCode::ClassMismatch, "split contains classes outside the model's class list");
  }
  r.forced_choice = mode == ClassifierMode::ForcedChoice;
  const std::vector<Scheme>& rows = r.forced_choice ? split.class_list : classes;
  for (Scheme s : rows) r.truth_classes.push_back(name_of(s));
  r.confusion.assign(rows.size(), std::vector<int>(k, 0));

  std::map<int, int> correct_by_snr;
  int correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const auto& ex = split.examples[i];
    if (predicted[i] < 0 || predicted[i] >= k) throw Error(ErrorCode::LabelOutOfRange, "prediction out of range");
    const int row = index_in(rows, ex.scheme);
    if (row < 0) throw Error(ErrorCode::ClassMismatch, "example scheme missing from the split class list");
    ++r.confusion[row][predicted[i]];
    const bool hit = index_in(classes, ex.scheme) == predicted[i];
    correct += hit;
    ++r.count_by_snr[ex.snr_db];
    correct_by_snr[ex.snr_db] += hit;
  }
  if (r.forced_choice) {
    r.notes.push_back("forced-choice: truth rows are split classes; predictions are restricted to the model's class list");
    if (!all_known) {
      r.notes.push_back("split classes lie outside the model's class list; accuracy is not reported");
      return r;
    }
  }
  r.overall_accuracy = static_cast<double>(correct) / static_cast<double>(predicted.size());
  for (const auto& [snr, n] : r.count_by_snr) r.accuracy_by_snr[snr] = static_cast<double>(correct_by_snr[snr]) / n;
  return r;
}

EvalReport evaluate_classifier(const cbm::ModelBundle& bundle, const DatasetSplit& split, ClassifierMode mode) {
  const auto predictions = cbm::predict_split(bundle, split);
  std::vector<int> labels(predictions.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = predictions[i].label;
  auto r = evaluate_classifier(labels, bundle.classes, split, mode);
  r.provenance["bundle"] = bundle_provenance(bundle);
  return r;
}

int order_bin(double value) {
  const double width = (kOrderHigh - kOrderLow) / kOrderBins;
  const auto bin = static_cast<int>(std::floor((value - kOrderLow) / width));
  return std::clamp(bin, 0, kOrderBins - 1);
}

EvalReport evaluate_regressor(std::span<const ConceptVector> predicted, const DatasetSplit& split) {
  if (predicted.size() != split.examples.size()) {
    throw Error(ErrorCode::ShapeMismatch, "one concept prediction per example required");
  }
  if (split.examples.empty()) throw Error(ErrorCode::EmptyDataset, "cannot evaluate an empty split");
  EvalReport r = blank_report(split);
  r.has_regression = true;
  r.order_histogram.assign(kOrderBins, 0);

  // Scored against each example's stored concepts only.
  std::array<std::vector<double>, ConceptVector::kSize> errors;
  std::map<std::string, std::pair<std::array<double, ConceptVector::kSize>, int>> abs_sum;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const auto& ex = split.examples[i];
    auto& [sums, n] = abs_sum[name_of(ex.scheme)];
    for (std::size_t h = 0; h < ConceptVector::kSize; ++h) {
      const double err = predicted[i][h] - static_cast<double>(ex.concepts[h]);
      errors[h].push_back(err);
      sums[h] += std::abs(err);
    }
    ++n;
    ++r.order_histogram[order_bin(predicted[i].order())];
  }
  for (std::size_t h : kBinaryHeads) r.head_errors[head_name(h)] = box_stats(errors[h]);
  for (const auto& [name, entry] : abs_sum) {
    auto mae = entry.first;
    for (auto& v : mae) v /= entry.second;
    r.per_modulation_mae[name] = mae;
  }
  return r;
}

EvalReport evaluate_regressor(const cbm::ModelBundle& bundle, const DatasetSplit& split) {
  const auto concepts = cbm::predict_concepts(bundle, split);
  auto r = evaluate_regressor(concepts, split);
  r.provenance["bundle"] = bundle_provenance(bundle);
  return r;
}

std::vector<ConceptCandidate> zero_shot_candidates() {
  std::vector<ConceptCandidate> out;
  for (Scheme s : all_schemes()) out.push_back({concept_vector(s), static_cast<int>(s)});
  return out;
}

std::vector<ZeroShotRow> zero_shot_probe(std::span<const ConceptVector> predicted, const DatasetSplit& split) {
  if (predicted.size() != split.examples.size()) {
    throw Error(ErrorCode::ShapeMismatch, "one concept prediction per example required");
  }
  const auto candidates = zero_shot_candidates();
  std::map<Scheme, ZeroShotRow> rows;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const Scheme truth = split.examples[i].scheme;
    auto& row = rows[truth];
    row.scheme = truth;
    ++row.total;
    const Scheme assigned = scheme_from_id(static_cast<std::uint8_t>(nearest_concept_class(predicted[i], candidates)));
    ++row.assignments[name_of(assigned)];
    row.self_rate += assigned == truth;
  }
  std::vector<ZeroShotRow> out;
  for (auto& [scheme, row] : rows) {
    row.self_rate /= row.total;
    for (Scheme other : all_schemes()) {
      if (other != scheme && concept_vector(other) == concept_vector(scheme)) row.tied_with.push_back(name_of(other));
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<ZeroShotRow> zero_shot_probe(const cbm::ModelBundle& bundle, const DatasetSplit& split) {
  return zero_shot_probe(cbm::predict_concepts(bundle, split), split);
}

double fraction_near(std::span<const ConceptVector> predicted, std::span<const double> legal, double tolerance) {
  if (predicted.empty()) return 0.0;
  std::size_t near = 0;
  for (const auto& c : predicted) {
    near += std::any_of(legal.begin(), legal.end(), [&](double v) { return std::abs(c.order() - v) <= tolerance; });
  }
  return static_cast<double>(near) / static_cast<double>(predicted.size());
}

EvalReport merge_reports(const EvalReport& classification, const EvalReport& regression) {
  EvalReport r = classification;
  r.has_regression = regression.has_regression;
  r.head_errors = regression.head_errors;
  r.order_histogram = regression.order_histogram;
  r.per_modulation_mae = regression.per_modulation_mae;
  if (!regression.zero_shot.empty()) r.zero_shot = regression.zero_shot;
  r.notes.insert(r.notes.end(), regression.notes.begin(), regression.notes.end());
  r.provenance.update(regression.provenance);
  return r;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["schema_version"] = r.schema_version;
  j["split"] = r.split;
  j["example_count"] = r.example_count;
  j["notes"] = r.notes;
  j["provenance"] = r.provenance;

  nlohmann::json c;
  c["present"] = r.has_classification;
  c["forced_choice"] = r.forced_choice;
  c["truth_classes"] = r.truth_classes;
  c["predicted_classes"] = r.predicted_classes;
  c["overall_accuracy"] = r.overall_accuracy ? nlohmann::json(*r.overall_accuracy) : nlohmann::json(nullptr);
  c["accuracy_by_snr"] = nlohmann::json::object();
  for (const auto& [snr, acc] : r.accuracy_by_snr) c["accuracy_by_snr"][std::to_string(snr)] = acc;
  c["count_by_snr"] = nlohmann::json::object();
  for (const auto& [snr, n] : r.count_by_snr) c["count_by_snr"][std::to_string(snr)] = n;
  c["confusion"] = r.confusion;
  j["classification"] = c;

  nlohmann::json g;
  g["present"] = r.has_regression;
  g["head_errors"] = nlohmann::json::object();
  for (const auto& [head, b] : r.head_errors) {
    g["head_errors"][head] = {{"median", b.median},           {"q1", b.q1},
                              {"q3", b.q3},                   {"whisker_low", b.whisker_low},
                              {"whisker_high", b.whisker_high}, {"outliers", b.outliers},
                              {"count", b.count}};
  }
  g["order_histogram"] = {{"low", kOrderLow}, {"high", kOrderHigh}, {"bins", kOrderBins}, {"counts", r.order_histogram}};
  g["per_modulation_mae"] = nlohmann::json::object();
  for (const auto& [name, mae] : r.per_modulation_mae) {
    nlohmann::json heads;
    for (std::size_t h = 0; h < mae.size(); ++h) heads[head_name(h)] = mae[h];
    g["per_modulation_mae"][name] = heads;
  }
  j["regression"] = g;

  nlohmann::json z = nlohmann::json::array();
  for (const auto& row : r.zero_shot) {
    z.push_back({{"scheme", name_of(row.scheme)},
                 {"total", row.total},
                 {"assignments", row.assignments},
                 {"self_rate", row.self_rate},
                 {"tied_with", row.tied_with}});
  }
  j["zero_shot"] = z;
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.schema_version = j.at("schema_version").get<int>();
    if (r.schema_version != kReportSchemaVersion) throw Error(ErrorCode::VersionMismatch, "unsupported report schema");
    r.split = j.at("split").get<std::string>();
    r.example_count = j.at("example_count").get<int>();
    r.notes = j.at("notes").get<std::vector<std::string>>();
    r.provenance = j.at("provenance");

    const auto& c = j.at("classification");
    r.has_classification = c.at("present").get<bool>();
    r.forced_choice = c.at("forced_choice").get<bool>();
    r.truth_classes = c.at("truth_classes").get<std::vector<std::string>>();
    r.predicted_classes = c.at("predicted_classes").get<std::vector<std::string>>();
    if (!c.at("overall_accuracy").is_null()) r.overall_accuracy = c.at("overall_accuracy").get<double>();
    for (const auto& [snr, acc] : c.at("accuracy_by_snr").items()) r.accuracy_by_snr[std::stoi(snr)] = acc.get<double>();
    for (const auto& [snr, n] : c.at("count_by_snr").items()) r.count_by_snr[std::stoi(snr)] = n.get<int>();
    r.confusion = c.at("confusion").get<std::vector<std::vector<int>>>();

    const auto& g = j.at("regression");
    r.has_regression = g.at("present").get<bool>();
    for (const auto& [head, b] : g.at("head_errors").items()) {
      r.head_errors[head] = BoxStats{b.at("median").get<double>(),      b.at("q1").get<double>(),
                                     b.at("q3").get<double>(),          b.at("whisker_low").get<double>(),
                                     b.at("whisker_high").get<double>(), b.at("outliers").get<int>(),
                                     b.at("count").get<int>()};
    }
    r.order_histogram = g.at("order_histogram").at("counts").get<std::vector<int>>();
    for (const auto& [name, heads] : g.at("per_modulation_mae").items()) {
      std::array<double, ConceptVector::kSize> mae{};
      for (std::size_t h = 0; h < mae.size(); ++h) mae[h] = heads.at(head_name(h)).get<double>();
      r.per_modulation_mae[name] = mae;
    }

    for (const auto& z : j.at("zero_shot")) {
      ZeroShotRow row;
      const auto s = parse_scheme(z.at("scheme").get<std::string>());
      if (!s) throw Error(ErrorCode::CorruptFile, "report names an unknown scheme");
      row.scheme = *s;
      row.total = z.at("total").get<int>();
      row.assignments = z.at("assignments").get<std::map<std::string, int>>();
      row.self_rate = z.at("self_rate").get<double>();
      row.tied_with = z.at("tied_with").get<std::vector<std::string>>();
      r.zero_shot.push_back(std::move(row));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("report: ") + e.what());
  }
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
  const auto dir = path.parent_path();
  if (!dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string());
  }
  write_text(path, to_json(report).dump(2) + "\n");

  std::string snr = "snr_db,accuracy,count\n";
  for (const auto& [s, n] : report.count_by_snr) {
    const auto it = report.accuracy_by_snr.find(s);
    snr += std::to_string(s) + "," + (it == report.accuracy_by_snr.end() ? "" : csv_number(it->second)) + "," +
           std::to_string(n) + "\n";
  }
  write_text(dir / "accuracy_by_snr.csv", snr);

  std::string confusion = "truth";
  for (const auto& name : report.predicted_classes) confusion += "," + name;
  confusion += "\n";
  for (std::size_t i = 0; i < report.confusion.size(); ++i) {
    confusion += report.truth_classes.at(i);
    for (int v : report.confusion[i]) confusion += "," + std::to_string(v);
    confusion += "\n";
  }
  write_text(dir / "confusion.csv", confusion);

  if (report.has_regression) {
    std::string box = "head,median,q1,q3,whisker_low,whisker_high,outliers,count\n";
    for (const auto& [head, b] : report.head_errors) {
      box += head + "," + csv_number(b.median) + "," + csv_number(b.q1) + "," + csv_number(b.q3) + "," +
             csv_number(b.whisker_low) + "," + csv_number(b.whisker_high) + "," + std::to_string(b.outliers) + "," +
             std::to_string(b.count) + "\n";
    }
    write_text(dir / "head_errors.csv", box);

    std::string hist = "bin_low,bin_high,count\n";
    const double width = (kOrderHigh - kOrderLow) / kOrderBins;
    for (std::size_t b = 0; b < report.order_histogram.size(); ++b) {
      hist += csv_number(kOrderLow + width * b) + "," + csv_number(kOrderLow + width * (b + 1)) + "," +
              std::to_string(report.order_histogram[b]) + "\n";
    }
    write_text(dir / "order_histogram.csv", hist);

    std::string mae = "scheme";
    for (std::size_t h = 0; h < ConceptVector::kSize; ++h) mae += std::string(",") + head_name(h);
    mae += "\n";
    for (const auto& [name, values] : report.per_modulation_mae) {
      mae += name;
      for (double v : values) mae += "," + csv_number(v);
      mae += "\n";
    }
    write_text(dir / "per_modulation.csv", mae);
  }

  if (!report.zero_shot.empty()) {
    std::string z = "scheme,assigned,count,total\n";
    for (const auto& row : report.zero_shot) {
      for (const auto& [assigned, n] : row.assignments) {
        z += name_of(row.scheme) + "," + assigned + "," + std::to_string(n) + "," + std::to_string(row.total) + "\n";
      }
    }
    write_text(dir / "zero_shot.csv", z);
  }
}

EvalReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("report: ") + e.what());
  }
  return report_from_json(j);
}

}  // namespace cbamc::eval
