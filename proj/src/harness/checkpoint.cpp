#include "simmp/harness/checkpoint.hpp"

#include <fstream>
#include <iterator>

#include "simmp/binary_io.hpp"
#include "simmp/errors.hpp"

namespace simmp {

namespace {

constexpr char kMagic[4] = {'S', 'M', 'P', 'C'};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const RunConfig& config, const SimMpNet& net) {
  io::ByteWriter w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kCheckpointVersion);
  w.str(config.to_text());
  const auto& entries = net.parameters().entries();
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, p] : entries) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(p.shape().size()));
    for (auto d : p.shape()) w.u64(d);
    w.f64s(p.value().data());
  }
  const auto blocks = net.memory_blocks();
  w.u32(static_cast<std::uint32_t>(blocks.size()));
  for (const auto* b : blocks) {
    const auto bytes = b->bank().serialize();
    w.u64(bytes.size());
    w.raw(bytes);
  }
  return w.take();
}

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const SimMpNet& net) {
  write_file_atomic(path, serialize_checkpoint(config, net));
}

LoadedModel deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  for (char c : kMagic) {
    if (r.u8() != static_cast<std::uint8_t>(c)) throw FormatError("checkpoint: bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: version " + std::to_string(version) + ", this build reads version " +
                      std::to_string(kCheckpointVersion));
  }
  LoadedModel out;
  try {
    out.config = RunConfig::from_text(r.str());
  } catch (const ContractError& e) {
    throw FormatError(std::string("checkpoint: stored config is invalid: ") + e.what());
  }
  out.net = std::make_unique<SimMpNet>(out.config.network, out.config.train.seed, InitMode::zeros);

  const auto& entries = out.net->parameters().entries();
  const std::uint32_t count = r.u32();
  if (count != entries.size()) {
    throw FormatError("checkpoint: " + std::to_string(count) + " parameters, network expects " +
                      std::to_string(entries.size()));
  }
  for (const auto& [name, p] : entries) {
    const std::string stored = r.str();
    if (stored != name) throw FormatError("checkpoint: expected parameter '" + name + "', found '" + stored + "'");
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError("checkpoint: implausible rank for '" + name + "'");
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    if (shape != p.shape()) {
      throw FormatError("checkpoint: '" + name + "' has shape " + shape_str(shape) + ", network expects " +
                        shape_str(p.shape()));
    }
    Var leaf = p;
    r.f64s(leaf.mutable_value().data());
    if (!leaf.value().all_finite()) throw FormatError("checkpoint: non-finite values in '" + name + "'");
  }

  auto blocks = out.net->memory_blocks();
  const std::uint32_t banks = r.u32();
  if (banks != blocks.size()) throw FormatError("checkpoint: memory bank count mismatch");
  for (auto* b : blocks) {
    const std::uint64_t n = r.u64();
    if (n > r.remaining()) throw FormatError("checkpoint: truncated memory bank");
    const auto& bank = b->bank();
    b->bank() = PrototypeMemoryBank::deserialize(r.take(n), bank.clusters(), bank.slots(), bank.channels());
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
  return out;
}

LoadedModel load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return deserialize_checkpoint(bytes);
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace simmp
