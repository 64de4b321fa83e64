#include "slad/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace slad {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'S', 'L', 'A', 'D'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void bytes(std::string_view s) { out_.append(s); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

  bool done() const { return pos_ == data_.size(); }

  std::string_view bytes(std::uint64_t n) {
    if (n > data_.size() - pos_) throw CheckpointError(what_ + ": truncated");
    auto s = data_.substr(pos_, static_cast<std::size_t>(n));
    pos_ += static_cast<std::size_t>(n);
    return s;
  }
  std::uint32_t u32() {
    auto b = bytes(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto b = bytes(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
  std::string str() { return std::string(bytes(u32())); }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string what_;
};

std::string encode_group(const std::map<std::string, Tensor>& tensors) {
  Writer w;
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.shape().size()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (double v : t.values()) w.f32(v);
  }
  return w.take();
}

std::map<std::string, Tensor> decode_group(std::string_view payload, const std::string& section) {
  Reader r(payload, "checkpoint section '" + section + "'");
  std::map<std::string, Tensor> out;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw CheckpointError("checkpoint section '" + section + "': implausible rank for " + name);
    Shape shape(rank);
    std::uint64_t n = 1;
    for (auto& d : shape) {
      const std::uint64_t dim = r.u64();
      if (dim != 0 && n > std::numeric_limits<std::uint32_t>::max() / dim) {
        throw CheckpointError("checkpoint section '" + section + "': tensor too large: " + name);
      }
      d = static_cast<std::size_t>(dim);
      n *= dim;
    }
    std::vector<double> values(static_cast<std::size_t>(n));
    for (auto& v : values) v = r.f32();
    out.emplace(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (!r.done()) throw CheckpointError("checkpoint section '" + section + "': trailing bytes");
  return out;
}

}  // namespace

std::string to_string(CheckpointKind kind) { return kind == CheckpointKind::Teacher ? "teacher" : "student"; }

std::string encode_checkpoint(const Checkpoint& c) {
  json meta = {{"kind", to_string(c.kind)},
               {"embedding_version", c.embedding_version},
               {"config_hash", c.config_hash},
               {"seed", c.seed},
               {"parent_seed", c.parent_seed ? json(*c.parent_seed) : json(nullptr)},
               {"parent_hash", c.parent_hash},
               {"step", c.step},
               {"adam_steps", c.adam_steps},
               {"schedule", c.schedule},
               {"model", c.model},
               {"dataset", c.dataset}};
  Writer w;
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kCheckpointVersion);
  auto section = [&](std::string_view name, const std::string& payload) {
    w.str(name);
    w.u64(payload.size());
    w.bytes(payload);
  };
  section("meta", meta.dump());
  section("theta", encode_group(c.theta.tensors()));
  section("theta_minus", encode_group(c.theta_minus.tensors()));
  if (!c.adam_m.empty()) {
    section("adam_m", encode_group(c.adam_m));
    section("adam_v", encode_group(c.adam_v));
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes, "checkpoint");
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  r.bytes(4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  std::map<std::string, std::string_view> sections;
  while (!r.done()) {
    std::string name = r.str();
    sections[name] = r.bytes(r.u64());
  }
  for (const char* required : {"meta", "theta", "theta_minus"}) {
    if (!sections.count(required)) throw CheckpointError(std::string("checkpoint lacks section '") + required + "'");
  }

  Checkpoint c;
  try {
    const json meta = json::parse(sections["meta"]);
    const std::string kind = meta.at("kind").get<std::string>();
    if (kind != "teacher" && kind != "student") throw CheckpointError("unknown checkpoint kind '" + kind + "'");
    c.kind = kind == "teacher" ? CheckpointKind::Teacher : CheckpointKind::Student;
    c.embedding_version = meta.at("embedding_version").get<int>();
    c.config_hash = meta.at("config_hash").get<std::string>();
    c.seed = meta.at("seed").get<std::uint64_t>();
    if (!meta.at("parent_seed").is_null()) c.parent_seed = meta.at("parent_seed").get<std::uint64_t>();
    c.parent_hash = meta.at("parent_hash").get<std::string>();
    c.step = meta.at("step").get<long>();
    c.adam_steps = meta.at("adam_steps").get<long>();
    c.schedule = meta.at("schedule");
    c.model = meta.at("model");
    c.dataset = meta.at("dataset");
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint metadata: ") + e.what());
  }
  if (c.embedding_version != kEmbeddingVersion) {
    throw CheckpointError("checkpoint embedding version " + std::to_string(c.embedding_version) +
                          " does not match this build (" + std::to_string(kEmbeddingVersion) + ")");
  }
  c.theta = ParamStore(decode_group(sections["theta"], "theta"));
  c.theta_minus = ParamStore(decode_group(sections["theta_minus"], "theta_minus"));
  if (sections.count("adam_m")) c.adam_m = decode_group(sections["adam_m"], "adam_m");
  if (sections.count("adam_v")) c.adam_v = decode_group(sections["adam_v"], "adam_v");
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string bytes = encode_checkpoint(ckpt);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing checkpoint " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError("cannot move checkpoint into place at " + path + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path + ": " + e.what());
  }
}

}  // namespace slad
