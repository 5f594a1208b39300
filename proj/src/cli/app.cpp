#include "cbamc/cli/app.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cbamc/cbmodel.hpp"
#include "cbamc/concepts.hpp"
#include "cbamc/datagen.hpp"
#include "cbamc/error.hpp"
#include "cbamc/evalkit.hpp"
#include "cbamc/nn/gradcheck.hpp"
#include "cbamc/parallel.hpp"
#include "cbamc/sigsynth.hpp"

namespace cbamc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "cbamc 1.0";

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidParameter:
    case ErrorCode::UnknownScheme: return kExitUsage;
    case ErrorCode::IoError:
    case ErrorCode::CorruptFile:
    case ErrorCode::VersionMismatch: return kExitIo;
    case ErrorCode::Divergence: return kExitDivergence;
    case ErrorCode::ClassMismatch: return kExitClassMismatch;
    default: return kExitCheckFailed;
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

/// Flags shared by several commands. Optional values left unset fall back to
/// profile defaults at resolution time.
struct Flags {
  std::string split;
  int per_class = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::string regime = "independent";
  std::string profile = "paper";
  std::optional<double> lr;
  std::optional<int> epochs_regressor;
  std::optional<int> epochs_classifier;
  std::optional<double> joint_weight;
  std::optional<int> batch_size;
  std::string train;
  std::string val;
  std::string model;
  std::string test;
  std::string report;
};

cbm::ScaleProfile resolve_profile(const std::string& name) {
  const auto p = cbm::parse_profile(name);
  if (!p) throw Error(ErrorCode::InvalidParameter, "unknown profile '" + name + "'");
  return *p;
}

cbm::TrainingConfig resolve_training(const Flags& f) {
  const auto regime = cbm::parse_regime(f.regime);
  if (!regime) throw Error(ErrorCode::InvalidParameter, "unknown regime '" + f.regime + "'");
  auto c = cbm::TrainingConfig::defaults(*regime, resolve_profile(f.profile));
  c.seed = f.seed;
  if (f.lr) c.lr = *f.lr;
  if (f.epochs_regressor) c.epochs_regressor = *f.epochs_regressor;
  if (f.epochs_classifier) c.epochs_classifier = *f.epochs_classifier;
  if (f.joint_weight) c.joint_classifier_weight = *f.joint_weight;
  if (f.batch_size) c.batch_size = *f.batch_size;
  c.validate();
  return c;
}

datagen::GenerationConfig generation_config(cbm::ScaleProfile profile, datagen::SplitKind kind) {
  datagen::GenerationConfig g;
  if (profile == cbm::ScaleProfile::Desk && kind != datagen::SplitKind::TestOutofset) g.classes = cbm::desk_classes();
  return g;
}

json run_config(const std::string& command, const json& flags, const json& resolved) {
  return {{"tool", kToolVersion},
          {"command", command},
          {"flags", flags},
          {"resolved", resolved},
          {"workers", worker_count()},
          {"workers_env", "CBAMC_WORKERS"}};
}

void emit(std::ostream& out, const json& config) { out << "run-config " << config.dump() << '\n'; }

fs::path dataset_file(const fs::path& out, datagen::SplitKind kind) {
  if (out.extension() == ".cbam") return out;
  return out / (std::string(datagen::to_string(kind)) + ".cbam");
}

// ---------------------------------------------------------------- generate

fs::path generate(datagen::SplitKind kind, int per_class, std::uint64_t seed, cbm::ScaleProfile profile,
                  const fs::path& out_dir, std::ostream& out, const json& flags) {
  const auto split = datagen::generate_split(kind, per_class, seed, generation_config(profile, kind));
  const auto path = dataset_file(out_dir, kind);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  datagen::write_split(split, path);

  const json config = run_config("generate", flags,
                                 {{"split", datagen::to_string(kind)},
                                  {"per_class", per_class},
                                  {"seed", seed},
                                  {"profile", cbm::to_string(profile)},
                                  {"dataset", path.string()},
                                  {"manifest_hash", datagen::manifest_hash(split.manifest)}});
  auto run_path = path;
  write_json(run_path.replace_extension(".run.json"), config);
  emit(out, config);

  out << "wrote " << path.string() << ": " << split.examples.size() << " examples, classes";
  for (Scheme s : split.class_list) out << ' ' << to_string(s);
  out << ", snr " << split.manifest.snr_rule << '\n';
  return path;
}

int cmd_generate(const Flags& f, std::ostream& out, const json& flags) {
  const auto kind = datagen::parse_split_kind(f.split);
  if (!kind) throw Error(ErrorCode::InvalidParameter, "unknown split '" + f.split + "'");
  generate(*kind, f.per_class, f.seed, resolve_profile(f.profile), f.out, out, flags);
  return kExitOk;
}

// ------------------------------------------------------------------- train

void print_history(const char* name, const cbm::TrainedNetwork& t, std::ostream& out) {
  out << name << ": best epoch " << t.history.best_epoch << " of " << t.history.epochs.size() << ", val loss "
      << t.history.best_val_loss << '\n';
}

int cmd_train(const Flags& f, std::ostream& out, const json& flags) {
  const auto config = resolve_training(f);
  const auto train_split = datagen::read_split(f.train);
  const auto val_split = datagen::read_split(f.val);
  const json resolved{{"training", cbm::to_json(config)},
                      {"train", f.train},
                      {"val", f.val},
                      {"train_manifest_hash", datagen::manifest_hash(train_split.manifest)},
                      {"val_manifest_hash", datagen::manifest_hash(val_split.manifest)},
                      {"bundle", f.out}};
  const json rc = run_config("train", flags, resolved);
  emit(out, rc);

  const auto bundle = cbm::train(train_split, val_split, config);
  cbm::save_bundle(bundle, f.out, rc);
  write_json(fs::path(f.out) / "run_config.json", rc);
  if (bundle.regressor) print_history("regressor", *bundle.regressor, out);
  print_history(bundle.kind == cbm::Regime::Baseline ? "network" : "classifier", bundle.classifier, out);
  out << "wrote bundle " << f.out << " (kind " << cbm::to_string(bundle.kind) << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------- evaluate

eval::EvalReport evaluate_bundle(const cbm::ModelBundle& bundle, const datagen::DatasetSplit& split) {
  const bool foreign = split.kind == datagen::SplitKind::TestOutofset;
  auto report = eval::evaluate_classifier(bundle, split,
                                          foreign ? eval::ClassifierMode::ForcedChoice : eval::ClassifierMode::Strict);
  if (foreign && !cbm::has_concepts(bundle.kind)) {
    report.notes.push_back("out-of-set labels are outside the model's class list; baseline has no concepts, so only the "
                           "forced-choice classifier section is reported");
  }
  if (cbm::has_concepts(bundle.kind)) {
    auto regression = eval::evaluate_regressor(bundle, split);
    if (foreign) regression.zero_shot = eval::zero_shot_probe(bundle, split);
    report = eval::merge_reports(report, regression);
  }
  return report;
}

void print_report_summary(const eval::EvalReport& r, std::ostream& out) {
  out << "split " << r.split << ", " << r.example_count << " examples";
  if (r.overall_accuracy) out << ", accuracy " << std::fixed << std::setprecision(4) << *r.overall_accuracy;
  out << std::defaultfloat << '\n';
  for (const auto& row : r.zero_shot) {
    out << "  zero-shot " << to_string(row.scheme) << ":";
    for (const auto& [name, n] : row.assignments) out << ' ' << name << '=' << n;
    out << '\n';
  }
}

int cmd_evaluate(const Flags& f, std::ostream& out, const json& flags) {
  const auto bundle = cbm::load_bundle(f.model);
  const auto split = datagen::read_split(f.test);
  const fs::path report_dir = f.report;
  const json rc = run_config("evaluate", flags,
                             {{"model", f.model},
                              {"test", f.test},
                              {"report", report_dir.string()},
                              {"dataset_manifest_hash", datagen::manifest_hash(split.manifest)},
                              {"bundle_config", cbm::to_json(bundle.config)}});
  emit(out, rc);
  auto report = evaluate_bundle(bundle, split);
  report.provenance["run_config"] = rc;
  eval::write_report(report, report_dir / "report.json");
  print_report_summary(report, out);
  return kExitOk;
}

// ------------------------------------------------------------------ verify

std::string format_count(long long n) {
  std::string s = std::to_string(n);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

VerifyCheck snr_check(Scheme scheme, int target_db) {
  constexpr int kCaptures = 1000;
  double total = 0.0;
  for (int i = 0; i < kCaptures; ++i) {
    Rng rng(derive_seed(0x5eed0000u + static_cast<std::uint64_t>(scheme), static_cast<std::uint64_t>(i * 100 + target_db)));
    const auto params = sigsynth::draw_params(scheme, rng);
    const auto clean = sigsynth::modulate(params, datagen::kIqLength, rng);
    sigsynth::ChannelSpec channel;
    channel.snr_db = target_db;
    const auto received = sigsynth::apply_channel(clean, channel, rng);
    std::vector<sigsynth::cplx> noise(received.samples.size());
    for (std::size_t t = 0; t < noise.size(); ++t) noise[t] = received.samples[t] - clean.samples[t];
    total += sigsynth::measured_snr_db(received.samples, noise);
  }
  const double mean = total / kCaptures;
  std::ostringstream detail;
  detail << std::fixed << std::setprecision(4) << "mean measured " << mean << " dB over " << kCaptures << " captures";
  return {"snr-calibration " + std::string(to_string(scheme)) + " " + std::to_string(target_db) + " dB",
          std::abs(mean - target_db) <= 0.1, detail.str()};
}

VerifyCheck concept_table_check() {
  // analog, amplitude, phase, frequency, order
  const std::map<Scheme, std::array<double, 5>> expected{
      {Scheme::BPSK, {0, 0, 1, 0, 1.0}},           {Scheme::QPSK, {0, 0, 1, 0, 1.0 / 2}},
      {Scheme::PSK8, {0, 0, 1, 0, 1.0 / 3}},       {Scheme::QAM16, {0, 1, 1, 0, 1.0 / 4}},
      {Scheme::QAM64, {0, 1, 1, 0, 1.0 / 6}},      {Scheme::FSK, {0, 0, 0, 1, 1.0}},
      {Scheme::AM_DSB, {1, 1, 0, 0, 0}},           {Scheme::FM_NB, {1, 0, 0, 1, 0}},
      {Scheme::AWGN, {0, 0, 0, 0, 0}},             {Scheme::PSK16, {0, 0, 1, 0, 1.0 / 4}},
      {Scheme::QAM32, {0, 1, 1, 0, 1.0 / 5}},      {Scheme::MSK, {0, 0, 0, 1, 1.0}},
      {Scheme::GFSK, {0, 0, 0, 1, 1.0}},           {Scheme::AM_LSB, {1, 1, 0, 0, 0}},
      {Scheme::FM_WB, {1, 0, 0, 1, 0}},
  };
  std::vector<std::string> problems;
  for (const auto& [scheme, values] : expected) {
    const auto c = concept_vector(scheme);
    for (std::size_t h = 0; h < 5; ++h) {
      if (std::abs(c[h] - values[h]) > 1e-12) problems.push_back(std::string(to_string(scheme)) + "." + head_name(h));
    }
  }
  const auto in_set = in_set_schemes();
  for (std::size_t i = 0; i < in_set.size(); ++i) {
    for (std::size_t j = i + 1; j < in_set.size(); ++j) {
      if (concept_vector(in_set[i]) == concept_vector(in_set[j])) {
        problems.push_back("collision " + std::string(to_string(in_set[i])) + "/" + std::string(to_string(in_set[j])));
      }
    }
  }
  const std::pair<Scheme, Scheme> collisions[] = {
      {Scheme::MSK, Scheme::FSK}, {Scheme::GFSK, Scheme::FSK}, {Scheme::AM_LSB, Scheme::AM_DSB}, {Scheme::FM_WB, Scheme::FM_NB}};
  for (const auto& [a, b] : collisions) {
    if (!(concept_vector(a) == concept_vector(b))) {
      problems.push_back("missing collision " + std::string(to_string(a)) + "/" + std::string(to_string(b)));
    }
  }
  std::string detail = problems.empty() ? "15 schemes match; in-set injective; 4 out-of-set collisions present" : "";
  for (const auto& p : problems) detail += p + "; ";
  return {"concept-truth-table", problems.empty(), detail};
}

}  // namespace

std::vector<VerifyCheck> run_verify_checks() {
  std::vector<VerifyCheck> checks;
  for (const auto& r : nn::standard_gradcheck_suite(20, 0x6c0ffee)) {
    std::ostringstream detail;
    detail << r.entries_checked << " entries, max rel error " << std::scientific << std::setprecision(3)
           << r.max_rel_error;
    if (!r.passed) detail << " at " << r.worst_entry;
    checks.push_back({"gradcheck " + r.subject, r.passed, detail.str()});
  }
  for (Scheme s : {Scheme::BPSK, Scheme::FSK}) {
    for (int target : {0, 10, 20}) checks.push_back(snr_check(s, target));
  }
  checks.push_back(concept_table_check());

  const auto classifier = static_cast<long long>(nn::parameter_count(cbm::classifier_spec(9)));
  checks.push_back({"parameter-count classifier", classifier == kPublishedClassifierParameters,
                    format_count(classifier) + " (published " + format_count(kPublishedClassifierParameters) + ")"});

  const cbm::ArchitectureOptions full;
  auto valid = full;
  valid.preserve_height = false;
  const auto regressor = static_cast<long long>(nn::parameter_count(cbm::regressor_spec(full)));
  const auto regressor_valid = static_cast<long long>(nn::parameter_count(cbm::regressor_spec(valid)));
  // conv1 + conv2 + dense over a (96, 2, 128) feature map + output head.
  const long long closed_form = (96 * 21 + 96) + (96 * 96 * 2 * 21 + 96) + (96LL * 2 * 128 * 384 + 384) + (384 * 5 + 5);
  std::ostringstream detail;
  detail << format_count(regressor) << " with height-preserving second convolution (" << format_count(regressor_valid)
         << " without); published " << format_count(kPublishedRegressorParameters) << ", discrepancy "
         << format_count(kPublishedRegressorParameters - regressor);
  checks.push_back({"parameter-count regressor", regressor == closed_form, detail.str()});
  return checks;
}

namespace {

int cmd_verify(std::ostream& out, const json& flags) {
  emit(out, run_config("verify", flags, json::object()));
  int failures = 0;
  for (const auto& c : run_verify_checks()) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    failures += !c.passed;
  }
  out << (failures == 0 ? "all checks passed" : std::to_string(failures) + " check(s) failed") << '\n';
  return failures == 0 ? kExitOk : kExitCheckFailed;
}

// ---------------------------------------------------------------- pipeline

int cmd_pipeline(const Flags& f, std::ostream& out, const json& flags) {
  const auto profile = resolve_profile(f.profile);
  const int per_class = f.per_class > 0 ? f.per_class : cbm::kDeskExamplesPerClass;
  const int per_class_eval = std::max(1, per_class / 5);
  const fs::path root = f.out;
  const fs::path data = root / "data";

  using datagen::SplitKind;
  std::map<SplitKind, fs::path> paths;
  for (auto kind : {SplitKind::Train, SplitKind::Val, SplitKind::TestInset, SplitKind::TestNearset,
                    SplitKind::TestOutofset}) {
    const int n = kind == SplitKind::Train ? per_class : per_class_eval;
    paths[kind] = generate(kind, n, derive_seed(f.seed, static_cast<std::uint64_t>(kind)), profile, data, out, flags);
  }
  const auto train_split = datagen::read_split(paths[SplitKind::Train]);
  const auto val_split = datagen::read_split(paths[SplitKind::Val]);
  std::map<SplitKind, datagen::DatasetSplit> tests;
  for (auto kind : {SplitKind::TestInset, SplitKind::TestNearset, SplitKind::TestOutofset}) {
    tests[kind] = datagen::read_split(paths[kind]);
  }

  json summary = json::object();
  std::optional<cbm::TrainedNetwork> shared_regressor;
  for (auto regime : {cbm::Regime::Independent, cbm::Regime::Sequential, cbm::Regime::Joint, cbm::Regime::Baseline}) {
    Flags rf = f;
    rf.regime = std::string(cbm::to_string(regime));
    const auto config = resolve_training(rf);
    const fs::path bundle_dir = root / "models" / rf.regime;
    const json rc = run_config("train", flags, {{"training", cbm::to_json(config)}, {"bundle", bundle_dir.string()}});
    emit(out, rc);

    // Independent and sequential share one regressor fit (same seed, same data).
    cbm::ModelBundle bundle = regime == cbm::Regime::Sequential && shared_regressor
                                  ? cbm::train_sequential(train_split, val_split, config, &*shared_regressor)
                                  : cbm::train(train_split, val_split, config);
    if (regime == cbm::Regime::Independent) shared_regressor = bundle.regressor;
    cbm::save_bundle(bundle, bundle_dir, rc);
    out << "trained " << rf.regime << '\n';

    for (const auto& [kind, split] : tests) {
      auto report = evaluate_bundle(bundle, split);
      report.provenance["run_config"] = rc;
      eval::write_report(report, root / "reports" / rf.regime / std::string(datagen::to_string(kind)) / "report.json");
      print_report_summary(report, out);
      if (report.overall_accuracy) summary[rf.regime][std::string(datagen::to_string(kind))] = *report.overall_accuracy;
    }
  }
  write_json(root / "summary.json", summary);
  out << "summary " << summary.dump() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Concept-bottleneck modulation classification: data generation, training, evaluation", "cbamc"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Flags f;
  auto* gen = app.add_subcommand("generate", "Generate one dataset split");
  gen->add_option("--split", f.split, "train | val | test_inset | test_nearset | test_outofset")->required();
  gen->add_option("--per-class", f.per_class, "Examples per class")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", f.seed, "Master seed")->required();
  gen->add_option("--out", f.out, "Output directory (or .cbam path)")->required();
  gen->add_option("--profile", f.profile, "paper | desk (desk restricts to four classes)");

  auto* trn = app.add_subcommand("train", "Train a model bundle");
  trn->add_option("--regime", f.regime, "independent | sequential | joint | baseline")->required();
  trn->add_option("--profile", f.profile, "paper | desk");
  trn->add_option("--train", f.train, "Training split file")->required();
  trn->add_option("--val", f.val, "Validation split file")->required();
  trn->add_option("--out", f.out, "Bundle output directory")->required();
  trn->add_option("--seed", f.seed, "Training seed");
  trn->add_option("--lr", f.lr, "Adam learning rate");
  trn->add_option("--epochs-regressor", f.epochs_regressor, "Regressor / joint / baseline epochs");
  trn->add_option("--epochs-classifier", f.epochs_classifier, "Classifier epochs");
  trn->add_option("--joint-weight", f.joint_weight, "Classifier share of the joint loss");
  trn->add_option("--batch-size", f.batch_size, "Mini-batch size");

  auto* evl = app.add_subcommand("evaluate", "Evaluate a bundle on a test split");
  evl->add_option("--model", f.model, "Bundle directory")->required();
  evl->add_option("--test", f.test, "Test split file")->required();
  evl->add_option("--report", f.report, "Report output directory")->required();

  auto* ver = app.add_subcommand("verify", "Run the built-in correctness checks");

  auto* pipe = app.add_subcommand("pipeline", "Generate, train all four regimes, evaluate all test splits");
  pipe->add_option("--out", f.out, "Output directory")->required();
  pipe->add_option("--seed", f.seed, "Master seed");
  pipe->add_option("--per-class", f.per_class, "Training examples per class (evaluation splits get a fifth)")
      ->check(CLI::PositiveNumber);
  // Own variable: a default_val on the shared field would leak into the
  // other subcommands.
  std::string pipeline_profile = "desk";
  pipe->add_option("--profile", pipeline_profile, "paper | desk")->capture_default_str();
  pipe->add_option("--lr", f.lr, "Adam learning rate");
  pipe->add_option("--epochs-regressor", f.epochs_regressor, "Regressor / joint / baseline epochs");
  pipe->add_option("--epochs-classifier", f.epochs_classifier, "Classifier epochs");
  pipe->add_option("--joint-weight", f.joint_weight, "Classifier share of the joint loss");
  pipe->add_option("--batch-size", f.batch_size, "Mini-batch size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  json flags = json::object();
  for (const auto* sub : app.get_subcommands()) {
    for (const auto* opt : sub->get_options()) {
      if (opt->count() > 0) flags[opt->get_name()] = opt->as<std::string>();
    }
  }

  try {
    if (gen->parsed()) return cmd_generate(f, out, flags);
    if (trn->parsed()) return cmd_train(f, out, flags);
    if (evl->parsed()) return cmd_evaluate(f, out, flags);
    if (ver->parsed()) return cmd_verify(out, flags);
    if (pipe->parsed()) {
      f.profile = pipeline_profile;
      return cmd_pipeline(f, out, flags);
    }
  } catch (const Error& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error (io-error): " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  }
  return kExitUsage;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"cbamc"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace cbamc::cli
