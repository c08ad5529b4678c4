#include "dacrs/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace dacrs {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'D', 'A', 'C', 'R'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFU));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFU));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw LoadError("checkpoint is truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

double round_to_float(double x) { return static_cast<double>(static_cast<float>(x)); }

std::string payload_bytes(const ModelParams<double>& params) {
  std::string out;
  params.visit([&](const std::string&, auto data) {
    for (Eigen::Index i = 0; i < data.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(data[i])));
  });
  return out;
}

std::string serialize(const Checkpoint& cp) {
  json manifest;
  manifest["model"] = cp.model;
  manifest["train"] = cp.train;
  manifest["epoch"] = cp.epoch;
  manifest["rng_digest"] = cp.rng_digest;
  manifest["num_entities"] = cp.params.base.rows();
  manifest["num_relations"] = cp.params.layers.empty() ? 0 : cp.params.layers.front().relation.size();
  manifest["tensors"] = json::array();
  cp.params.visit([&](const std::string& name, auto data) {
    manifest["tensors"].push_back({{"name", name}, {"size", data.size()}});
  });
  const auto text = manifest.dump();

  std::string out(kMagic, 4);
  put_u32(out, cp.version);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  out += payload_bytes(cp.params);
  put_u64(out, fnv1a64(out));
  return out;
}

}  // namespace

Checkpoint Checkpoint::from_params(const ModelParams<double>& params, const ModelConfig& model,
                                   const TrainConfig& train, int epoch, std::uint64_t rng_digest) {
  Checkpoint cp;
  cp.model = model;
  cp.train = train;
  cp.params = params;
  cp.params.visit([](const std::string&, auto data) { data = data.unaryExpr(&round_to_float); });
  cp.epoch = epoch;
  cp.rng_digest = rng_digest;
  return cp;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const auto bytes = serialize(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw LoadError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string bytes = buffer.str();

  Reader reader(bytes);
  if (reader.take(4) != std::string_view(kMagic, 4)) throw LoadError("not a checkpoint (bad magic)");
  Checkpoint cp;
  cp.version = reader.u32();
  if (cp.version != Checkpoint::kFormatVersion) {
    throw LoadError("unsupported checkpoint version " + std::to_string(cp.version));
  }
  const auto manifest_len = reader.u32();
  json manifest;
  std::size_t num_entities = 0;
  std::size_t num_relations = 0;
  try {
    manifest = json::parse(reader.take(manifest_len));
    manifest.at("model").get_to(cp.model);
    manifest.at("train").get_to(cp.train);
    cp.epoch = manifest.at("epoch").get<int>();
    cp.rng_digest = manifest.at("rng_digest").get<std::uint64_t>();
    num_entities = manifest.at("num_entities").get<std::size_t>();
    num_relations = manifest.at("num_relations").get<std::size_t>();
    if (!manifest.at("tensors").is_array()) throw LoadError("tensor list missing");
  } catch (const json::exception& e) {
    throw LoadError(std::string("corrupt checkpoint manifest: ") + e.what());
  }
  if (expected && !(cp.model == *expected)) {
    throw ConfigError("checkpoint model config (d=" + std::to_string(cp.model.d) +
                      ", d_llm=" + std::to_string(cp.model.d_llm) +
                      ") does not match the expected config (d=" + std::to_string(expected->d) +
                      ", d_llm=" + std::to_string(expected->d_llm) + ")");
  }
  try {
    cp.model.validate();
  } catch (const ConfigError& e) {
    throw LoadError(std::string("corrupt checkpoint manifest: ") + e.what());
  }

  Rng unused;
  cp.params = init_params(cp.model, num_entities, num_relations, unused);
  const auto& tensors = manifest.at("tensors");
  std::size_t t = 0;
  cp.params.visit([&](const std::string& name, auto data) {
    if (t >= tensors.size() || tensors[t].value("name", "") != name ||
        tensors[t].value("size", Eigen::Index{-1}) != data.size()) {
      throw LoadError("checkpoint manifest does not describe tensor " + name);
    }
    ++t;
    for (Eigen::Index i = 0; i < data.size(); ++i) data[i] = std::bit_cast<float>(reader.u32());
  });
  if (t != tensors.size()) throw LoadError("checkpoint manifest lists unexpected tensors");
  const auto body_end = reader.pos();
  const auto digest = reader.u64();
  if (reader.pos() != bytes.size()) throw LoadError("trailing bytes after checkpoint digest");
  if (digest != fnv1a64(std::string_view(bytes).substr(0, body_end))) {
    throw LoadError("checkpoint digest mismatch");
  }
  return cp;
}

std::uint64_t checkpoint_hash(const Checkpoint& checkpoint) {
  return fnv1a64(payload_bytes(checkpoint.params));
}

}  // namespace dacrs
