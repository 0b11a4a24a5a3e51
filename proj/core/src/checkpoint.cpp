#include "dualcap/checkpoint.hpp"

#include "dualcap/errors.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace dualcap {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kManifestName = "manifest.json";
constexpr const char* kBlobName = "blobs.bin";

void append_f32(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

double read_f32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return static_cast<double>(std::bit_cast<float>(bits));
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArtifactError("cannot write " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("missing checkpoint file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

const Matrix& CheckpointState::tensor(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t.value;
  throw ArtifactError("checkpoint has no tensor '" + std::string(name) + "'");
}

bool CheckpointState::has_tensor(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return true;
  return false;
}

void save_checkpoint(const fs::path& dir, const CheckpointState& state) {
  std::string blob;
  json index = json::array();
  for (const auto& t : state.tensors) {
    const std::size_t offset = blob.size();
    for (Eigen::Index i = 0; i < t.value.size(); ++i) append_f32(blob, t.value.data()[i]);
    index.push_back({{"name", t.name},
                     {"shape", {t.value.rows(), t.value.cols()}},
                     {"offset", offset},
                     {"length", blob.size() - offset}});
  }
  json manifest;
  manifest["version"] = kCheckpointVersion;
  manifest["stage"] = state.stage;
  manifest["config"] = state.config_json.empty() ? json::object() : json::parse(state.config_json);
  manifest["blobs"] = index;
  manifest["blob_bytes"] = blob.size();
  manifest["fingerprints"] = state.fingerprints;
  manifest["step"] = state.step;
  manifest["rng_states"] = state.rng_states;
  manifest["metadata"] = state.metadata;

  const fs::path parent = dir.parent_path().empty() ? fs::path(".") : dir.parent_path();
  fs::create_directories(parent);
  const std::string stem = "." + dir.filename().string();
  const fs::path tmp = parent / (stem + ".tmp-" + std::to_string(::getpid()));
  const fs::path old = parent / (stem + ".old-" + std::to_string(::getpid()));
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  write_file(tmp / kBlobName, blob);
  write_file(tmp / kManifestName, manifest.dump(2) + "\n");
  fs::remove_all(old);
  if (fs::exists(dir)) fs::rename(dir, old);
  fs::rename(tmp, dir);
  fs::remove_all(old);
}

CheckpointState load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw MissingArtifactError("missing checkpoint directory " + dir.string());
  json manifest;
  try {
    manifest = json::parse(read_file(dir / kManifestName));
  } catch (const json::parse_error& e) {
    throw CorruptBlobError("unreadable checkpoint manifest in " + dir.string() + ": " + e.what());
  }
  const std::string version = manifest.value("version", "");
  if (version != kCheckpointVersion)
    throw VersionMismatchError("checkpoint version '" + version + "' in " + dir.string() + ", expected '" +
                               std::string(kCheckpointVersion) + "'");
  const std::string blob = read_file(dir / kBlobName);
  CheckpointState state;
  try {
    if (manifest.at("blob_bytes").get<std::size_t>() != blob.size())
      throw CorruptBlobError("corrupt blob: " + (dir / kBlobName).string() + " holds " + std::to_string(blob.size()) +
                             " bytes, manifest declares " + std::to_string(manifest.at("blob_bytes").get<std::size_t>()));
    state.stage = manifest.at("stage").get<std::string>();
    const json& cfg = manifest.at("config");
    state.config_json = cfg.empty() ? std::string() : cfg.dump();
    for (const auto& entry : manifest.at("blobs")) {
      const auto name = entry.at("name").get<std::string>();
      const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
      const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto length = entry.at("length").get<std::size_t>();
      if (rows < 0 || cols < 0 || length != static_cast<std::size_t>(rows * cols) * 4 || offset > blob.size() ||
          length > blob.size() - offset)
        throw CorruptBlobError("corrupt blob for tensor '" + name + "' in " + dir.string());
      Matrix m(rows, cols);
      const auto* base = reinterpret_cast<const unsigned char*>(blob.data()) + offset;
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = read_f32(base + 4 * i);
      state.tensors.push_back(NamedTensor{name, std::move(m)});
    }
    state.fingerprints = manifest.at("fingerprints").get<std::map<std::string, std::string>>();
    state.step = manifest.at("step").get<long long>();
    state.rng_states = manifest.at("rng_states").get<std::map<std::string, std::string>>();
    state.metadata = manifest.at("metadata").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw CorruptBlobError("malformed checkpoint manifest in " + dir.string() + ": " + e.what());
  }
  return state;
}

void verify_fingerprints(const CheckpointState& state, const std::map<std::string, std::string>& live) {
  for (const auto& [name, digest] : live) {
    const auto it = state.fingerprints.find(name);
    if (it == state.fingerprints.end())
      throw FingerprintMismatchError("checkpoint records no fingerprint for '" + name + "'");
    if (it->second != digest)
      throw FingerprintMismatchError("fingerprint mismatch for '" + name + "': checkpoint " + it->second.substr(0, 12) +
                                     ", live " + digest.substr(0, 12));
  }
}

void add_parameters(CheckpointState& state, const ParamList& params) {
  for (const Parameter* p : params) state.tensors.push_back(NamedTensor{p->name, p->value});
}

void restore_parameters(const CheckpointState& state, const ParamList& params) {
  for (Parameter* p : params) {
    const Matrix& m = state.tensor(p->name);
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
      throw ArtifactError("checkpoint tensor '" + p->name + "' has the wrong shape");
    p->value = m;
  }
}

}  // namespace dualcap
