#include "cbamc/datagen.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>

#include "cbamc/error.hpp"
#include "cbamc/parallel.hpp"

namespace cbamc::datagen {

static_assert(std::endian::native == std::endian::little, "dataset codec assumes a little-endian host");

namespace {

constexpr std::array<char, 4> kMagic{'C', 'B', 'A', 'M'};
constexpr std::size_t kExampleBytes = 2 * kIqLength * 4 + 1 + ConceptVector::kSize * 4 + 2 + 1;

[[noreturn]] void corrupt(const std::string& what) { throw Error(ErrorCode::CorruptFile, what); }

class ByteWriter {
 public:
  template <typename T>
  void put(const T& value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    if (offset_ + sizeof(T) > bytes_.size()) corrupt("unexpected end of file");
    T value;
    std::memcpy(&value, bytes_.data() + offset_, sizeof(T));
    offset_ += sizeof(T);
    return value;
  }
  std::size_t offset() const { return offset_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t offset_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

std::string snr_rule_text(SplitKind kind) {
  return kind == SplitKind::TestNearset ? "uniform integer over {-5..-1} U {21..25} dB"
                                        : "uniform integer over [0, 20] dB";
}

std::array<float, ConceptVector::kSize> concept_floats(Scheme scheme) {
  const auto c = concept_vector(scheme);
  std::array<float, ConceptVector::kSize> out{};
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(c[i]);
  return out;
}

Manifest build_manifest(SplitKind kind, int per_class, std::uint64_t seed, const std::vector<Scheme>& classes,
                        double sample_rate) {
  Manifest m;
  m.kind = kind;
  m.seed = seed;
  m.per_class = per_class;
  m.class_list = classes;
  for (Scheme s : classes) m.counts[std::string(to_string(s))] = per_class;
  m.nominal_sample_rate_hz = sample_rate;
  m.n_samples = kIqLength;
  m.snr_rule = snr_rule_text(kind);
  m.notes.push_back("per-example seed = splitmix64 chain over (seed, split kind, scheme id, index)");
  m.notes.push_back("frequency offset uniform on [-0.1 pi, 0.1 pi] rad/sample; no phase offset; unit gain");
  if (kind == SplitKind::TestNearset) m.notes.push_back("near-set excludes the AWGN class");
  if (std::find(classes.begin(), classes.end(), Scheme::AWGN) != classes.end()) {
    m.notes.push_back("AWGN class: snr_db is recorded but does not alter the capture");
  }
  return m;
}

void validate_examples(const DatasetSplit& split) {
  std::map<Scheme, int> counts;
  for (const auto& ex : split.examples) {
    if (ex.label_id >= split.class_list.size()) corrupt("label id out of range");
    if (split.class_list[ex.label_id] != ex.scheme) corrupt("label id inconsistent with scheme");
    if (ex.concepts != concept_floats(ex.scheme)) corrupt("concept vector inconsistent with scheme");
    for (float v : ex.iq) {
      if (!std::isfinite(v)) corrupt("non-finite IQ sample");
    }
    ++counts[ex.scheme];
  }
  const auto& manifest_counts = split.manifest.counts;
  if (!manifest_counts.empty()) {
    for (Scheme s : split.class_list) {
      const auto it = manifest_counts.find(std::string(to_string(s)));
      const int expected = it == manifest_counts.end() ? 0 : it->second;
      if (counts[s] != expected) corrupt("per-class count disagrees with manifest for " + std::string(to_string(s)));
    }
  }
}

}  // namespace

std::string_view to_string(SplitKind kind) {
  switch (kind) {
    case SplitKind::Train: return "train";
    case SplitKind::Val: return "val";
    case SplitKind::TestInset: return "test_inset";
    case SplitKind::TestNearset: return "test_nearset";
    case SplitKind::TestOutofset: return "test_outofset";
  }
  return "?";
}

std::optional<SplitKind> parse_split_kind(std::string_view name) {
  for (auto kind : {SplitKind::Train, SplitKind::Val, SplitKind::TestInset, SplitKind::TestNearset,
                    SplitKind::TestOutofset}) {
    if (to_string(kind) == name) return kind;
  }
  return std::nullopt;
}

std::vector<Scheme> split_classes(SplitKind kind, const GenerationConfig& config) {
  std::vector<Scheme> admitted;
  if (kind == SplitKind::TestOutofset) {
    const auto oos = out_of_set_schemes();
    admitted.assign(oos.begin(), oos.end());
  } else {
    for (Scheme s : in_set_schemes()) {
      if (kind == SplitKind::TestNearset && s == Scheme::AWGN) continue;
      admitted.push_back(s);
    }
  }
  if (config.classes.empty()) return admitted;

  std::vector<Scheme> selected;
  for (Scheme s : config.classes) {
    const bool allowed = std::find(admitted.begin(), admitted.end(), s) != admitted.end();
    if (!allowed) {
      // AWGN is silently dropped from near-set so one class list serves every in-set split.
      if (kind == SplitKind::TestNearset && s == Scheme::AWGN) continue;
      throw Error(ErrorCode::InvalidParameter,
                  std::string(to_string(s)) + " is not admitted by split " + std::string(to_string(kind)));
    }
    if (std::find(selected.begin(), selected.end(), s) == selected.end()) selected.push_back(s);
  }
  if (selected.empty()) throw Error(ErrorCode::InvalidParameter, "class list is empty");
  return selected;
}

std::vector<int> snr_choices(SplitKind kind) {
  std::vector<int> out;
  if (kind == SplitKind::TestNearset) {
    for (int v = -5; v <= -1; ++v) out.push_back(v);
    for (int v = 21; v <= 25; ++v) out.push_back(v);
  } else {
    for (int v = 0; v <= 20; ++v) out.push_back(v);
  }
  return out;
}

std::uint64_t example_seed(std::uint64_t master_seed, SplitKind kind, Scheme scheme, std::uint64_t index) {
  std::uint64_t s = splitmix64(master_seed);
  s = derive_seed(s, static_cast<std::uint64_t>(kind));
  s = derive_seed(s, static_cast<std::uint64_t>(scheme));
  return derive_seed(s, index);
}

Example make_example(const sigsynth::IQCapture& capture, std::uint8_t label_id) {
  if (capture.samples.size() != static_cast<std::size_t>(kIqLength)) {
    throw Error(ErrorCode::InvalidParameter, "capture length must be " + std::to_string(kIqLength));
  }
  Example ex;
  for (int i = 0; i < kIqLength; ++i) {
    ex.iq[i] = static_cast<float>(capture.samples[i].real());
    ex.iq[kIqLength + i] = static_cast<float>(capture.samples[i].imag());
  }
  ex.label_id = label_id;
  ex.scheme = capture.params.scheme;
  ex.concepts = concept_floats(ex.scheme);
  ex.snr_db = static_cast<std::int16_t>(capture.channel ? capture.channel->snr_db : 0);
  return ex;
}

DatasetSplit generate_split(SplitKind kind, int per_class, std::uint64_t seed, const GenerationConfig& config) {
  if (per_class < 1) throw Error(ErrorCode::InvalidParameter, "per_class must be >= 1");
  const auto classes = split_classes(kind, config);
  if (classes.size() > 255) throw Error(ErrorCode::InvalidParameter, "too many classes");

  sigsynth::SynthConfig synth;
  synth.nominal_sample_rate_hz = config.nominal_sample_rate_hz;
  synth.n_samples = kIqLength;
  const auto snrs = snr_choices(kind);

  DatasetSplit split;
  split.kind = kind;
  split.class_list = classes;
  split.examples.resize(classes.size() * static_cast<std::size_t>(per_class));
  split.manifest = build_manifest(kind, per_class, seed, classes, config.nominal_sample_rate_hz);

  const unsigned workers = config.workers == 0 ? worker_count() : config.workers;
  parallel_for(split.examples.size(), workers, [&](std::size_t i) {
    const std::size_t label = i / per_class;
    const std::size_t index = i % per_class;
    const Scheme scheme = classes[label];
    sigsynth::CaptureRequest request{scheme, snrs, synth};
    const auto capture = sigsynth::synthesize_capture(request, example_seed(seed, kind, scheme, index));
    split.examples[i] = make_example(capture, static_cast<std::uint8_t>(label));
  });
  return split;
}

std::filesystem::path manifest_path(const std::filesystem::path& dataset_path) {
  auto p = dataset_path;
  p.replace_extension(".manifest.json");
  return p;
}

std::string manifest_json(const Manifest& m) {
  nlohmann::json j;
  j["format_version"] = m.format_version;
  j["split"] = to_string(m.kind);
  j["seed"] = m.seed;
  j["per_class"] = m.per_class;
  auto& classes = j["class_list"] = nlohmann::json::array();
  for (Scheme s : m.class_list) classes.push_back(to_string(s));
  j["counts"] = m.counts;
  int total = 0;
  for (const auto& [name, count] : m.counts) total += count;
  j["example_count"] = total;
  j["nominal_sample_rate_hz"] = m.nominal_sample_rate_hz;
  j["n_samples"] = m.n_samples;
  j["snr_rule"] = m.snr_rule;
  j["notes"] = m.notes;
  return j.dump(2);
}

Manifest parse_manifest_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    Manifest m;
    m.format_version = j.at("format_version").get<std::uint16_t>();
    const auto kind = parse_split_kind(j.at("split").get<std::string>());
    if (!kind) corrupt("manifest names an unknown split kind");
    m.kind = *kind;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.per_class = j.at("per_class").get<int>();
    for (const auto& name : j.at("class_list")) {
      const auto s = parse_scheme(name.get<std::string>());
      if (!s) corrupt("manifest names an unknown scheme");
      m.class_list.push_back(*s);
    }
    m.counts = j.at("counts").get<std::map<std::string, int>>();
    m.nominal_sample_rate_hz = j.at("nominal_sample_rate_hz").get<double>();
    m.n_samples = j.at("n_samples").get<int>();
    m.snr_rule = j.at("snr_rule").get<std::string>();
    m.notes = j.at("notes").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    corrupt(std::string("manifest: ") + e.what());
  }
}

std::string manifest_hash(const Manifest& manifest) {
  const std::string text = manifest_json(manifest);
  const auto crc = crc32_of(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08x", crc);
  return buf;
}

std::vector<std::uint8_t> encode_split(const DatasetSplit& split) {
  ByteWriter w;
  for (char c : kMagic) w.put(c);
  w.put(kFormatVersion);
  w.put(static_cast<std::uint8_t>(split.kind));
  w.put(static_cast<std::uint8_t>(split.class_list.size()));
  for (Scheme s : split.class_list) w.put(static_cast<std::uint8_t>(s));
  w.put(static_cast<std::uint16_t>(kIqLength));
  w.put(static_cast<std::uint32_t>(split.examples.size()));
  w.put(split.manifest.seed);
  auto& bytes = w.bytes();
  bytes.reserve(bytes.size() + split.examples.size() * kExampleBytes + 4);
  for (const auto& ex : split.examples) {
    for (float v : ex.iq) w.put(v);
    w.put(ex.label_id);
    for (float v : ex.concepts) w.put(v);
    w.put(ex.snr_db);
    w.put(static_cast<std::uint8_t>(ex.scheme));
  }
  const std::uint32_t crc = crc32_of(bytes);
  w.put(crc);
  return std::move(bytes);
}

DatasetSplit decode_split(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 + 2 + 4) corrupt("file too short");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) corrupt("bad magic");

  ByteReader r(bytes);
  for (std::size_t i = 0; i < kMagic.size(); ++i) r.get<char>();
  const auto version = r.get<std::uint16_t>();
  if (version != kFormatVersion) {
    throw Error(ErrorCode::VersionMismatch, "dataset format version " + std::to_string(version) +
                                                ", expected " + std::to_string(kFormatVersion));
  }

  const auto payload = bytes.first(bytes.size() - 4);
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
  if (crc32_of(payload) != stored_crc) corrupt("checksum mismatch");

  ByteReader body(payload);
  for (std::size_t i = 0; i < kMagic.size(); ++i) body.get<char>();
  body.get<std::uint16_t>();
  DatasetSplit split;
  const auto kind = body.get<std::uint8_t>();
  if (kind > static_cast<std::uint8_t>(SplitKind::TestOutofset)) corrupt("unknown split kind");
  split.kind = static_cast<SplitKind>(kind);
  const auto n_classes = body.get<std::uint8_t>();
  for (int i = 0; i < n_classes; ++i) {
    const auto id = body.get<std::uint8_t>();
    if (id >= kSchemeCount) corrupt("unknown scheme id in class list");
    split.class_list.push_back(static_cast<Scheme>(id));
  }
  if (body.get<std::uint16_t>() != kIqLength) corrupt("unsupported IQ length");
  const auto count = body.get<std::uint32_t>();
  const auto seed = body.get<std::uint64_t>();
  if (payload.size() - body.offset() != static_cast<std::size_t>(count) * kExampleBytes) {
    corrupt("example section size disagrees with header");
  }
  split.examples.resize(count);
  for (auto& ex : split.examples) {
    for (float& v : ex.iq) v = body.get<float>();
    ex.label_id = body.get<std::uint8_t>();
    for (float& v : ex.concepts) v = body.get<float>();
    ex.snr_db = body.get<std::int16_t>();
    const auto id = body.get<std::uint8_t>();
    if (id >= kSchemeCount) corrupt("unknown scheme id");
    ex.scheme = static_cast<Scheme>(id);
  }

  split.manifest.kind = split.kind;
  split.manifest.seed = seed;
  split.manifest.class_list = split.class_list;
  return split;
}

void write_split(const DatasetSplit& split, const std::filesystem::path& path) {
  const auto bytes = encode_split(split);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
  }
  const auto mpath = manifest_path(path);
  std::ofstream mout(mpath, std::ios::trunc);
  if (!mout) throw Error(ErrorCode::IoError, "cannot open " + mpath.string() + " for writing");
  mout << manifest_json(split.manifest) << '\n';
  if (!mout) throw Error(ErrorCode::IoError, "write failed for " + mpath.string());
}

DatasetSplit read_split(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  DatasetSplit split = decode_split(bytes);

  const auto mpath = manifest_path(path);
  if (std::filesystem::exists(mpath)) {
    std::ifstream min(mpath);
    const std::string text((std::istreambuf_iterator<char>(min)), std::istreambuf_iterator<char>());
    Manifest manifest = parse_manifest_json(text);
    if (manifest.kind != split.kind || manifest.class_list != split.class_list || manifest.seed != split.manifest.seed) {
      corrupt("manifest disagrees with dataset header");
    }
    split.manifest = std::move(manifest);
  } else {
    for (const auto& ex : split.examples) ++split.manifest.counts[std::string(to_string(ex.scheme))];
  }
  validate_examples(split);
  return split;
}

}  // namespace cbamc::datagen
