#include "lesion/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <zlib.h>

#include "json.hpp"
#include "lesion/errors.hpp"
#include "lesion/manifest.hpp"

namespace lesion::nets {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'L', 'S', 'N', 'C', 'K', 'P', 'T', '1'};
constexpr const char* kLogBlock = "training_log";

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

void put_double(std::vector<std::uint8_t>& out, double v) { put(out, std::bit_cast<std::uint64_t>(v)); }

void put_block(std::vector<std::uint8_t>& out, const std::string& name, const Shape& shape,
               std::span<const double> values) {
  put(out, static_cast<std::uint32_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  put(out, static_cast<std::uint32_t>(shape.size()));
  for (const auto d : shape) put(out, static_cast<std::uint64_t>(d));
  for (const double v : values) put_double(out, v);
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  double get_double() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return end_ - pos_; }

 private:
  void need(std::size_t n) const {
    if (n > end_ - pos_) throw CorruptCheckpointError("checkpoint truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

json spec_json(const NetworkSpec& s) {
  return {{"kind", to_string(s.kind)},
          {"inputSize", s.input_size},
          {"depth", s.depth},
          {"baseChannels", s.base_channels},
          {"classCount", s.class_count}};
}

NetworkSpec spec_from(const json& j) {
  NetworkSpec s;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "unet") {
    s.kind = NetKind::Unet;
  } else if (kind == "lenet5") {
    s.kind = NetKind::Lenet5;
  } else {
    throw FormatError("unknown network kind '" + kind + "'");
  }
  s.input_size = j.at("inputSize").get<std::array<std::size_t, 3>>();
  s.depth = j.at("depth").get<std::size_t>();
  s.base_channels = j.at("baseChannels").get<std::size_t>();
  s.class_count = j.at("classCount").get<std::size_t>();
  return s;
}

std::string describe(const NetworkSpec& s) { return spec_json(s).dump(); }

}  // namespace

std::string spec_to_json(const NetworkSpec& spec) { return spec_json(spec).dump(); }

NetworkSpec spec_from_json(const std::string& text) {
  try {
    return spec_from(json::parse(text));
  } catch (const json::exception& e) {
    throw FormatError(std::string("network spec: ") + e.what());
  }
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  json blocks = json::array();
  for (const auto& p : ckpt.parameters) blocks.push_back(p.name);
  blocks.push_back(kLogBlock);
  const json header = {{"spec", spec_json(ckpt.spec)},
                       {"seed", ckpt.seed},
                       {"iterationCount", ckpt.iteration_count},
                       {"notes", ckpt.notes},
                       {"blocks", blocks}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + sizeof kMagic);
  put(out, kCheckpointVersion);
  put(out, static_cast<std::uint64_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& p : ckpt.parameters) put_block(out, p.name, p.value.shape(), p.value.values());
  put_block(out, kLogBlock, Shape{ckpt.training_log.size()}, ckpt.training_log);
  put(out, static_cast<std::uint32_t>(crc32(0L, out.data(), static_cast<uInt>(out.size()))));
  return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes, const std::optional<NetworkSpec>& expected) {
  if (bytes.size() < sizeof kMagic + 4 + 8 + 4 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CorruptCheckpointError("not a checkpoint file (bad magic)");
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, sizeof stored);
  if (stored != static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(body)))) {
    throw CorruptCheckpointError("checkpoint integrity hash mismatch");
  }
  Reader in(bytes, body);
  in.get_string(sizeof kMagic);
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CorruptCheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = in.get<std::uint64_t>();
  if (header_len > in.remaining()) throw CorruptCheckpointError("checkpoint header truncated");

  Checkpoint ckpt;
  std::vector<std::string> names;
  try {
    const json header = json::parse(in.get_string(static_cast<std::size_t>(header_len)));
    ckpt.spec = spec_from(header.at("spec"));
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.iteration_count = header.at("iterationCount").get<std::uint64_t>();
    ckpt.notes = header.at("notes").get<std::vector<std::string>>();
    names = header.at("blocks").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw CorruptCheckpointError(std::string("checkpoint header: ") + e.what());
  } catch (const FormatError& e) {
    throw CorruptCheckpointError(std::string("checkpoint header: ") + e.what());
  }

  if (expected && !(*expected == ckpt.spec)) {
    throw SpecMismatchError("checkpoint holds " + describe(ckpt.spec) + " but " + describe(*expected) +
                            " was requested");
  }
  std::vector<std::pair<std::string, Shape>> layout;
  try {
    layout = parameter_layout(ckpt.spec);
  } catch (const ConfigError& e) {
    throw CorruptCheckpointError(std::string("checkpoint spec is invalid: ") + e.what());
  }
  if (names.size() != layout.size() + 1) throw CorruptCheckpointError("checkpoint block count does not match spec");

  for (std::size_t b = 0; b < names.size(); ++b) {
    const std::string name = in.get_string(in.get<std::uint32_t>());
    if (name != names[b]) throw CorruptCheckpointError("checkpoint block '" + name + "' out of order");
    const auto rank = in.get<std::uint32_t>();
    Shape shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(in.get<std::uint64_t>());
      count *= d;
    }
    if (count * 8 > in.remaining()) throw CorruptCheckpointError("checkpoint block '" + name + "' truncated");
    std::vector<double> values(count);
    for (auto& v : values) v = in.get_double();

    if (b < layout.size()) {
      if (name != layout[b].first || shape != layout[b].second) {
        throw CorruptCheckpointError("parameter '" + name + "' " + shape_string(shape) + " does not match the spec");
      }
      ckpt.parameters.add(name, Tensor(shape, std::move(values)));
    } else {
      if (name != kLogBlock || rank != 1) throw CorruptCheckpointError("checkpoint loss log missing");
      ckpt.training_log = std::move(values);
    }
  }
  if (in.remaining() != 0) throw CorruptCheckpointError("trailing bytes in checkpoint");
  return ckpt;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(checkpoint);
  write_text_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<NetworkSpec>& expected) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw NotFoundError("checkpoint not found: " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(file), std::istreambuf_iterator<char>()};
  return deserialize_checkpoint(bytes, expected);
}

std::string training_log_text(const Checkpoint& checkpoint) {
  std::ostringstream out;
  out.precision(17);
  for (const double v : checkpoint.training_log) out << v << '\n';
  return out.str();
}

}  // namespace lesion::nets
