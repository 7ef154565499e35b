#include "neurostream/nn/checkpoint.hpp"

#include <cstdint>
#include <fstream>
#include <iterator>

#include "neurostream/io/detail/binary.hpp"

namespace neurostream::nn {

namespace {

constexpr char kMagic[4] = {'N', 'S', 'A', 'E'};
constexpr std::uint8_t kVersion = 0x01;

}  // namespace

void checkpoint_write(const std::string& path,
                      const std::vector<std::pair<std::string, TensorRecord>>& tensors) {
  namespace bin = neurostream::io::detail;
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  bin::put_u8(out, kVersion);
  bin::put_u32(out, static_cast<std::uint32_t>(tensors.size()));

  std::uint64_t offset = 0;
  for (const auto& [name, rec] : tensors) {
    bin::put_string(out, name);
    bin::put_u32(out, static_cast<std::uint32_t>(rec.shape.size()));
    for (std::size_t d : rec.shape) bin::put_u64(out, d);
    bin::put_u64(out, offset);
    offset += rec.data.size() * sizeof(float);
  }
  bin::put_u64(out, offset);  // blob byte size
  for (const auto& [name, rec] : tensors)
    for (float v : rec.data) bin::put_f32(out, v);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open checkpoint for writing: " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw Error("short write to checkpoint: " + path);
}

CheckpointMap checkpoint_read(const std::string& path) {
  namespace bin = neurostream::io::detail;
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CorruptCheckpoint("cannot open checkpoint: " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());

  std::size_t pos = 0;
  const auto need = [&](std::size_t n) {
    if (pos + n > buf.size())
      throw CorruptCheckpoint("truncated checkpoint: " + path);
    const std::uint8_t* p = buf.data() + pos;
    pos += n;
    return p;
  };

  const std::uint8_t* magic = need(4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw CorruptCheckpoint("bad checkpoint magic in " + path);
  const std::uint8_t version = *need(1);
  if (version != kVersion)
    throw CorruptCheckpoint("unsupported checkpoint version " + std::to_string(version) +
                            " in " + path);
  const std::uint32_t count = bin::load_u32(need(4));

  struct Entry {
    std::string name;
    std::vector<std::size_t> shape;
    std::uint64_t offset;
    std::uint64_t numel;
  };
  std::vector<Entry> entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    const std::uint16_t len = bin::load_u16(need(2));
    const std::uint8_t* np = need(len);
    e.name.assign(reinterpret_cast<const char*>(np), len);
    const std::uint32_t ndim = bin::load_u32(need(4));
    if (ndim > 8) throw CorruptCheckpoint("implausible rank in checkpoint tensor '" + e.name + "'");
    e.numel = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const std::uint64_t dim = bin::load_u64(need(8));
      e.shape.push_back(static_cast<std::size_t>(dim));
      e.numel *= dim;
    }
    e.offset = bin::load_u64(need(8));
    entries.push_back(std::move(e));
  }
  const std::uint64_t blob_size = bin::load_u64(need(8));
  if (pos + blob_size > buf.size())
    throw CorruptCheckpoint("truncated checkpoint blob: " + path);
  const std::uint8_t* blob = buf.data() + pos;

  CheckpointMap map;
  for (auto& e : entries) {
    if (e.offset + e.numel * sizeof(float) > blob_size)
      throw CorruptCheckpoint("checkpoint tensor '" + e.name + "' extends past blob end");
    TensorRecord rec;
    rec.shape = std::move(e.shape);
    rec.data.resize(static_cast<std::size_t>(e.numel));
    for (std::size_t i = 0; i < rec.data.size(); ++i)
      rec.data[i] = bin::load_f32(blob + e.offset + i * sizeof(float));
    if (!map.emplace(e.name, std::move(rec)).second)
      throw CorruptCheckpoint("duplicate tensor '" + e.name + "' in checkpoint " + path);
  }
  return map;
}

}  // namespace neurostream::nn
