#include "polybert/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace polybert::checkpoint {

using json = nlohmann::json;

namespace {

constexpr char kMagic[8] = {'P', 'B', 'C', 'K', 'P', 'T', '1', '\n'};

json config_to_json(const model::ModelConfig& c) {
  return json{{"n_layers", c.n_layers},
              {"hidden", c.hidden},
              {"n_heads", c.n_heads},
              {"ff_multiplier", c.ff_multiplier},
              {"vocab_size", c.vocab_size},
              {"max_positions", c.max_positions},
              {"n_languages", c.n_languages}};
}

model::ModelConfig config_from_json(const json& j) {
  model::ModelConfig c;
  c.n_layers = j.at("n_layers").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.ff_multiplier = j.at("ff_multiplier").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_positions = j.at("max_positions").get<int>();
  c.n_languages = j.at("n_languages").get<int>();
  return c;
}

void write_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::ifstream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

void opt_to_json(const OptStateBlob& blob, json& dir,
                 std::vector<const std::vector<double>*>& blobs,
                 std::int64_t& offset, const std::string& prefix) {
  json entries = json::array();
  for (std::size_t i = 0; i < blob.m.size(); ++i) {
    const auto add = [&](const std::vector<double>& buf, const char* kind) {
      json e;
      e["kind"] = kind;
      e["index"] = i;
      e["offset"] = offset;
      e["count"] = buf.size();
      entries.push_back(e);
      blobs.push_back(&buf);
      offset += static_cast<std::int64_t>(buf.size());
    };
    add(blob.m[i], "m");
    add(blob.v[i], "v");
  }
  dir[prefix] = json{{"step_count", blob.step_count}, {"buffers", entries}};
}

OptStateBlob opt_from_json(const json& j, const std::vector<double>& data) {
  OptStateBlob blob;
  blob.step_count = j.at("step_count").get<std::int64_t>();
  std::size_t n = 0;
  for (const auto& e : j.at("buffers")) {
    n = std::max(n, e.at("index").get<std::size_t>() + 1);
  }
  blob.m.resize(n);
  blob.v.resize(n);
  for (const auto& e : j.at("buffers")) {
    const auto offset = e.at("offset").get<std::int64_t>();
    const auto count = e.at("count").get<std::int64_t>();
    std::vector<double> buf(data.begin() + offset, data.begin() + offset + count);
    const auto index = e.at("index").get<std::size_t>();
    if (e.at("kind").get<std::string>() == "m") {
      blob.m[index] = std::move(buf);
    } else {
      blob.v[index] = std::move(buf);
    }
  }
  return blob;
}

}  // namespace

void save(const std::string& path, const Checkpoint& ckpt) {
  json header;
  header["format_version"] = 1;
  header["config"] = config_to_json(ckpt.config);
  header["vocab_hash"] = ckpt.vocab_hash;
  header["step"] = ckpt.step;
  header["has_discriminator"] = ckpt.has_discriminator;
  if (!ckpt.extra.empty()) header["extra"] = ckpt.extra;

  std::vector<const std::vector<double>*> blobs;
  std::int64_t offset = 0;
  json tensor_dir = json::array();
  for (const auto& [name, values] : ckpt.tensors) {
    json e;
    e["name"] = name;
    e["offset"] = offset;
    e["count"] = values.size();
    tensor_dir.push_back(e);
    blobs.push_back(&values);
    offset += static_cast<std::int64_t>(values.size());
  }
  header["tensors"] = tensor_dir;

  json opt_dir = json::object();
  if (ckpt.encoder_opt) {
    opt_to_json(*ckpt.encoder_opt, opt_dir, blobs, offset, "encoder");
  }
  if (ckpt.discriminator_opt) {
    opt_to_json(*ckpt.discriminator_opt, opt_dir, blobs, offset, "discriminator");
  }
  header["optimizer"] = opt_dir;
  header["total_doubles"] = offset;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::string header_str = header.dump();
  write_u64(out, header_str.size());
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto* buf : blobs) {
    static_assert(sizeof(double) == 8);
    out.write(reinterpret_cast<const char*>(buf->data()),
              static_cast<std::streamsize>(buf->size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  const std::uint64_t header_len = read_u64(in);
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw std::runtime_error("truncated checkpoint header: " + path);
  const json header = json::parse(header_str);

  const auto total = header.at("total_doubles").get<std::int64_t>();
  std::vector<double> data(static_cast<std::size_t>(total));
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated checkpoint data: " + path);

  Checkpoint ckpt;
  ckpt.config = config_from_json(header.at("config"));
  ckpt.vocab_hash = header.at("vocab_hash").get<std::uint64_t>();
  ckpt.step = header.at("step").get<std::int64_t>();
  ckpt.has_discriminator = header.at("has_discriminator").get<bool>();
  if (header.contains("extra")) ckpt.extra = header.at("extra").get<std::string>();
  for (const auto& e : header.at("tensors")) {
    const auto offset = e.at("offset").get<std::int64_t>();
    const auto count = e.at("count").get<std::int64_t>();
    ckpt.tensors[e.at("name").get<std::string>()] =
        std::vector<double>(data.begin() + offset, data.begin() + offset + count);
  }
  const auto& opt = header.at("optimizer");
  if (opt.contains("encoder")) {
    ckpt.encoder_opt = opt_from_json(opt.at("encoder"), data);
  }
  if (opt.contains("discriminator")) {
    ckpt.discriminator_opt = opt_from_json(opt.at("discriminator"), data);
  }
  return ckpt;
}

Checkpoint from_models(const model::EncoderModel& encoder,
                       const model::LanguageDiscriminator* disc,
                       std::uint64_t vocab_hash, std::int64_t step) {
  Checkpoint ckpt;
  ckpt.config = encoder.config();
  ckpt.vocab_hash = vocab_hash;
  ckpt.step = step;
  for (const auto& [name, t] : encoder.named_parameters()) {
    ckpt.tensors["enc." + name] = t.values();
  }
  if (disc != nullptr) {
    ckpt.has_discriminator = true;
    for (const auto& [name, t] : disc->named_parameters()) {
      ckpt.tensors["disc." + name] = t.values();
    }
  }
  return ckpt;
}

void store_optimizer(Checkpoint& ckpt, const optim::AdamW& encoder_opt,
                     const optim::AdamW* disc_opt) {
  ckpt.encoder_opt = OptStateBlob{encoder_opt.first_moments(),
                                  encoder_opt.second_moments(),
                                  encoder_opt.step_count()};
  if (disc_opt != nullptr) {
    ckpt.discriminator_opt = OptStateBlob{disc_opt->first_moments(),
                                          disc_opt->second_moments(),
                                          disc_opt->step_count()};
  }
}

model::EncoderModel restore_encoder(
    const Checkpoint& ckpt, std::optional<std::uint64_t> expected_vocab_hash) {
  if (expected_vocab_hash && *expected_vocab_hash != ckpt.vocab_hash) {
    throw std::runtime_error(
        "checkpoint vocab hash mismatch: model was trained with a different "
        "vocabulary");
  }
  model::EncoderModel m = model::EncoderModel::init(ckpt.config, 0);
  for (auto& [name, t] : m.named_parameters()) {
    const auto it = ckpt.tensors.find("enc." + name);
    if (it == ckpt.tensors.end()) {
      throw std::runtime_error("checkpoint missing tensor: enc." + name);
    }
    if (it->second.size() != t.values().size()) {
      throw std::runtime_error("checkpoint tensor size mismatch: enc." + name);
    }
    nn::Tensor tensor = t;
    tensor.values() = it->second;
  }
  return m;
}

model::LanguageDiscriminator restore_discriminator(const Checkpoint& ckpt) {
  if (!ckpt.has_discriminator) {
    throw std::runtime_error("checkpoint has no discriminator");
  }
  model::LanguageDiscriminator d = model::LanguageDiscriminator::init(
      ckpt.config.hidden, ckpt.config.n_languages, 0);
  for (auto& [name, t] : d.named_parameters()) {
    const auto it = ckpt.tensors.find("disc." + name);
    if (it == ckpt.tensors.end()) {
      throw std::runtime_error("checkpoint missing tensor: disc." + name);
    }
    nn::Tensor tensor = t;
    tensor.values() = it->second;
  }
  return d;
}

void restore_opt_state(const OptStateBlob& blob, optim::AdamW& opt) {
  opt.restore_state(blob.m, blob.v, blob.step_count);
}

}  // namespace polybert::checkpoint
