#include "pira/checkpoint.h"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "pira/errors.h"

namespace pira {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'P', 'I', 'R', 'A'};
constexpr uint32_t kVersion = 1;

json config_to_json(const ModelConfig& c) {
  json j;
  j["vocab_size"] = c.vocab_size;
  j["embed_dim"] = c.embed_dim;
  j["num_layers"] = c.num_layers;
  j["num_heads"] = c.num_heads;
  j["head_hidden_dim"] = c.head_hidden_dim;
  j["max_seq_len"] = c.max_seq_len;
  j["head_dropout_default"] = c.head_dropout_default;
  if (c.adapter_rank) {
    j["adapter_rank"] = *c.adapter_rank;
    j["adapter_alpha"] = c.adapter_alpha;
  }
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.num_layers = j.at("num_layers").get<int>();
  c.num_heads = j.at("num_heads").get<int>();
  c.head_hidden_dim = j.at("head_hidden_dim").get<int>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  c.head_dropout_default = j.at("head_dropout_default").get<float>();
  if (j.contains("adapter_rank")) {
    c.adapter_rank = j.at("adapter_rank").get<int>();
    c.adapter_alpha = j.at("adapter_alpha").get<float>();
  }
  return c;
}

void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_u64(std::ostream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

struct Reader {
  std::ifstream in;
  explicit Reader(const std::string& path) : in(path, std::ios::binary) {}

  void bytes(void* dst, size_t n) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n)) {
      throw IoError("truncated checkpoint file");
    }
  }
  uint32_t u32() {
    uint32_t v;
    bytes(&v, sizeof(v));
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    bytes(&v, sizeof(v));
    return v;
  }
  std::string str(uint32_t len) {
    std::string s(len, '\0');
    bytes(s.data(), len);
    return s;
  }
};

}  // namespace

void save_checkpoint(const ModelParams& params, const CheckpointMeta& meta,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);

  json header;
  header["config"] = config_to_json(params.config);
  header["vocab"] = params.vocab.tokens();
  header["meta"] = {{"step", meta.step}, {"seed", meta.seed}};
  const std::string header_text = header.dump();

  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kVersion);
  write_u32(out, static_cast<uint32_t>(header_text.size()));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));

  const auto entries = enumerate_params(params);
  write_u32(out, static_cast<uint32_t>(entries.size()));
  for (const ParamEntry& e : entries) {
    write_u32(out, static_cast<uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_u32(out, static_cast<uint32_t>(e.tensor->ndim()));
    for (int dim : e.tensor->shape()) write_u32(out, static_cast<uint32_t>(dim));
    write_u64(out, static_cast<uint64_t>(e.tensor->numel()));
    out.write(reinterpret_cast<const char*>(e.tensor->data().data()),
              static_cast<std::streamsize>(e.tensor->numel() * sizeof(float)));
  }
  if (!out) throw IoError("failed while writing checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  Reader r(path);
  if (!r.in) throw IoError("cannot open checkpoint: " + path);

  char magic[4];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("corrupt checkpoint: bad magic");
  }
  const uint32_t version = r.u32();
  if (version != kVersion) {
    throw ParseError("corrupt checkpoint: unsupported format version " +
                     std::to_string(version));
  }
  const uint32_t header_len = r.u32();
  json header;
  try {
    header = json::parse(r.str(header_len));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("corrupt checkpoint header: ") + e.what());
  }

  LoadedCheckpoint out;
  ModelConfig cfg;
  Vocab vocab;
  try {
    cfg = config_from_json(header.at("config"));
    vocab = Vocab::from_tokens(header.at("vocab").get<std::vector<std::string>>());
    out.meta.step = header.at("meta").at("step").get<int64_t>();
    out.meta.seed = header.at("meta").at("seed").get<uint64_t>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("corrupt checkpoint header: ") + e.what());
  }
  out.params = init_model(cfg, std::move(vocab), 0);

  auto entries = enumerate_params(out.params);
  const uint32_t count = r.u32();
  if (count != entries.size()) {
    throw ParseError("corrupt checkpoint: expected " + std::to_string(entries.size()) +
                     " tensors, found " + std::to_string(count));
  }
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.u32());
    MutableParamEntry* entry = nullptr;
    for (auto& e : entries) {
      if (e.name == name) {
        entry = &e;
        break;
      }
    }
    if (!entry) throw ParseError("corrupt checkpoint: unknown tensor '" + name + "'");
    const uint32_t ndim = r.u32();
    std::vector<int> shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) shape[d] = static_cast<int>(r.u32());
    const uint64_t numel = r.u64();
    if (shape != entry->tensor->shape() ||
        numel != static_cast<uint64_t>(entry->tensor->numel())) {
      throw ParseError("corrupt checkpoint: shape mismatch for tensor '" + name + "'");
    }
    r.bytes(entry->tensor->data().data(), numel * sizeof(float));
  }
  return out;
}

LoadedCheckpoint load_checkpoint(const std::string& path, const ModelConfig& expected) {
  LoadedCheckpoint ck = load_checkpoint(path);
  if (!(ck.params.config == expected)) {
    throw ConfigMismatchError("checkpoint model config does not match the expected config");
  }
  return ck;
}

}  // namespace pira
