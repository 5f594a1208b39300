#include "cbamc/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace cbamc::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint blob assumes a little-endian host");

void save_checkpoint(const std::filesystem::path& dir, const std::string& name, const Network<float>& net,
                     const nlohmann::json& provenance) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto params = net.flat_parameters();
  const std::string blob_name = name + ".f32";

  nlohmann::json j;
  j["architecture"] = to_json(net.spec());
  j["parameter_count"] = params.size();
  j["parameter_file"] = blob_name;
  j["dtype"] = "float32-le";
  j["provenance"] = provenance;

  std::ofstream meta(dir / (name + ".json"), std::ios::trunc);
  if (!meta) throw Error(ErrorCode::IoError, "cannot write checkpoint " + (dir / (name + ".json")).string());
  meta << j.dump(2) << '\n';

  std::ofstream blob(dir / blob_name, std::ios::binary | std::ios::trunc);
  if (!blob) throw Error(ErrorCode::IoError, "cannot write " + (dir / blob_name).string());
  blob.write(reinterpret_cast<const char*>(params.data()), static_cast<std::streamsize>(params.size() * sizeof(float)));
  if (!blob) throw Error(ErrorCode::IoError, "write failed for " + (dir / blob_name).string());
}

Checkpoint load_checkpoint(const std::filesystem::path& dir, const std::string& name) {
  std::ifstream meta(dir / (name + ".json"));
  if (!meta) throw Error(ErrorCode::IoError, "cannot open checkpoint " + (dir / (name + ".json")).string());
  nlohmann::json j;
  try {
    meta >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("checkpoint descriptor: ") + e.what());
  }

  Checkpoint out;
  out.spec = network_spec_from_json(j.at("architecture"));
  out.provenance = j.value("provenance", nlohmann::json::object());
  const auto count = j.at("parameter_count").get<std::size_t>();
  if (count != parameter_count(out.spec)) throw Error(ErrorCode::CorruptFile, "parameter count disagrees with architecture");

  const auto blob_path = dir / j.at("parameter_file").get<std::string>();
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) throw Error(ErrorCode::IoError, "cannot open " + blob_path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());
  if (bytes.size() != count * sizeof(float)) throw Error(ErrorCode::CorruptFile, "parameter blob has wrong size");
  out.parameters.resize(count);
  std::memcpy(out.parameters.data(), bytes.data(), bytes.size());
  return out;
}

Network<float> to_network(const Checkpoint& checkpoint) {
  Network<float> net(checkpoint.spec, 0);
  net.set_flat_parameters(checkpoint.parameters);
  return net;
}

}  // namespace cbamc::nn
