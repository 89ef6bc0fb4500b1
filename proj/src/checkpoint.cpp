#include "scan/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace scan {

using ojson = nlohmann::ordered_json;

namespace {

constexpr char kMagic[8] = {'S', 'C', 'A', 'N', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Cursor {
 public:
  explicit Cursor(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)).data(), sizeof(T));
    return value;
  }

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint is truncated");
    std::string_view out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t position() const { return pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

ojson config_json(const ModelConfig& c) {
  ojson j;
  j["vocab_size"] = c.vocab_size;
  j["dim"] = c.dim;
  j["heads"] = c.heads;
  j["num_categories"] = c.num_categories;
  j["num_polarities"] = c.num_polarities;
  j["leaky_slope"] = c.leaky_slope;
  return j;
}

ModelConfig config_from_json(const ojson& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.dim = j.at("dim").get<int>();
  c.heads = j.at("heads").get<int>();
  c.num_categories = j.at("num_categories").get<int>();
  c.num_polarities = j.at("num_polarities").get<int>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  return c;
}

ojson identity_json(const Checkpoint& ck) {
  ojson j;
  j["config"] = config_json(ck.params.config);
  j["vocab"] = ck.vocab.tokens();
  j["categories"] = ck.categories;
  j["polarities"] = ck.polarities;
  j["variant"] = to_string(ck.variant);
  j["keep_preterminals"] = ck.keep_preterminals;
  return j;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << v;
  return s.str();
}

}  // namespace

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t config_hash(const Checkpoint& checkpoint) { return fnv1a(identity_json(checkpoint).dump()); }

std::string encode_checkpoint(const Checkpoint& ck) {
  ojson header = identity_json(ck);
  ojson shapes = ojson::array();
  for (const Parameter* p : ck.params.all()) {
    ojson s;
    s["name"] = p->name;
    s["rows"] = p->value.rows();
    s["cols"] = p->value.cols();
    shapes.push_back(std::move(s));
  }
  header["parameters"] = std::move(shapes);
  header["config_hash"] = hex64(config_hash(ck));
  const std::string header_text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, header_text.size());
  out += header_text;
  for (const Parameter* p : ck.params.all()) {
    out.append(reinterpret_cast<const char*>(p->value.data()), static_cast<std::size_t>(p->value.size()) * sizeof(double));
  }
  put<std::uint64_t>(out, fnv1a(out));
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Cursor in(bytes);
  if (in.take(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  if (bytes.size() < sizeof(std::uint64_t)) throw CheckpointError("checkpoint is truncated");
  const std::size_t body = bytes.size() - sizeof(std::uint64_t);
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, sizeof stored);
  if (fnv1a(bytes.substr(0, body)) != stored) throw CheckpointError("checkpoint content hash mismatch (file corrupted)");

  const auto header_len = in.get<std::uint64_t>();
  ojson header;
  try {
    header = ojson::parse(in.take(header_len));
  } catch (const ojson::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }
  Checkpoint ck;
  try {
    const ModelConfig config = config_from_json(header.at("config"));
    ck.vocab = Vocab::from_tokens(header.at("vocab").get<std::vector<std::string>>());
    ck.categories = header.at("categories").get<std::vector<std::string>>();
    ck.polarities = header.at("polarities").get<std::vector<std::string>>();
    ck.variant = parse_variant(header.at("variant").get<std::string>());
    ck.keep_preterminals = header.at("keep_preterminals").get<bool>();
    ck.params = ModelParams::init(config, 0);
    const ojson& shapes = header.at("parameters");
    const auto params = ck.params.all();
    if (shapes.size() != params.size()) throw CheckpointError("checkpoint parameter count differs from the model");
    for (std::size_t i = 0; i < params.size(); ++i) {
      Parameter& p = *params[i];
      const ojson& s = shapes[i];
      if (s.at("name").get<std::string>() != p.name || s.at("rows").get<Eigen::Index>() != p.value.rows() ||
          s.at("cols").get<Eigen::Index>() != p.value.cols()) {
        throw CheckpointError("checkpoint parameter " + s.at("name").get<std::string>() + " does not match " + p.name);
      }
      const std::size_t n = static_cast<std::size_t>(p.value.size()) * sizeof(double);
      std::memcpy(p.value.data(), in.take(n).data(), n);
    }
    if (header.at("config_hash").get<std::string>() != hex64(config_hash(ck))) {
      throw CheckpointError("checkpoint config/vocabulary hash mismatch");
    }
  } catch (const ojson::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  } catch (const DataError& e) {
    throw CheckpointError(std::string("bad checkpoint vocabulary: ") + e.what());
  }
  if (in.position() != body) throw CheckpointError("checkpoint has trailing bytes");
  if (static_cast<int>(ck.vocab.size()) != ck.params.config.vocab_size ||
      static_cast<int>(ck.categories.size()) != ck.params.config.num_categories ||
      static_cast<int>(ck.polarities.size()) != ck.params.config.num_polarities) {
    throw CheckpointError("checkpoint vocabulary or label sets disagree with the model config");
  }
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  const std::string bytes = encode_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return decode_checkpoint(buffer.str());
}

}  // namespace scan
