#include "neurostream/io/wire.hpp"

#include "neurostream/io/detail/binary.hpp"

namespace neurostream::io {

namespace {

constexpr std::uint8_t kMagic0 = 'N';
constexpr std::uint8_t kMagic1 = 'M';
constexpr std::uint8_t kVersion = 0x01;

class Cursor {
 public:
  explicit Cursor(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  const std::uint8_t* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw TruncatedMessage("message truncated");
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::uint16_t u16() { return detail::load_u16(take(2)); }
  std::uint32_t u32() { return detail::load_u32(take(4)); }
  std::uint64_t u64() { return detail::load_u64(take(8)); }
  float f32() { return detail::load_f32(take(4)); }
  double f64() { return detail::load_f64(take(8)); }

  std::string str() {
    const std::uint16_t len = u16();
    const std::uint8_t* p = take(len);
    return std::string(reinterpret_cast<const char*>(p), len);
  }

  void expect_end() const {
    if (pos_ != bytes_.size()) throw TruncatedMessage("message has trailing bytes");
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void put_header(std::vector<std::uint8_t>& out, Schema schema) {
  out.push_back(kMagic0);
  out.push_back(kMagic1);
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(schema));
}

}  // namespace

Schema message_schema(const Message& m) {
  return std::holds_alternative<core::NeuroFrame>(m) ? Schema::neuro_frame : Schema::latent_code;
}

std::vector<std::uint8_t> message_encode(const Message& m) {
  std::vector<std::uint8_t> out;
  if (const auto* frame = std::get_if<core::NeuroFrame>(&m)) {
    put_header(out, Schema::neuro_frame);
    detail::put_u64(out, frame->seq);
    detail::put_u64(out, frame->timestamp_ns);
    detail::put_f64(out, frame->sampling_rate);
    detail::put_u32(out, frame->flags);
    detail::put_u32(out, static_cast<std::uint32_t>(frame->channel_names.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(frame->num_samples));
    for (const auto& name : frame->channel_names) detail::put_string(out, name);
    for (float v : frame->samples) detail::put_f32(out, v);
  } else {
    const auto& code = std::get<core::LatentCode>(m);
    put_header(out, Schema::latent_code);
    detail::put_u64(out, code.source_seq);
    detail::put_u64(out, code.timestamp_ns);
    detail::put_u32(out, static_cast<std::uint32_t>(code.values.size()));
    for (float v : code.values) detail::put_f32(out, v);
  }
  return out;
}

Message message_decode(std::span<const std::uint8_t> bytes) {
  Cursor cur(bytes);
  const std::uint8_t* header = cur.take(kWireHeaderSize);
  if (header[0] != kMagic0 || header[1] != kMagic1)
    throw UnknownSchema("message: bad magic");
  if (header[2] != kVersion)
    throw UnknownSchema("message: unsupported version " + std::to_string(header[2]));

  switch (static_cast<Schema>(header[3])) {
    case Schema::neuro_frame: {
      core::NeuroFrame frame;
      frame.seq = cur.u64();
      frame.timestamp_ns = cur.u64();
      frame.sampling_rate = cur.f64();
      frame.flags = cur.u32();
      const std::uint32_t channels = cur.u32();
      frame.num_samples = cur.u32();
      frame.channel_names.reserve(channels);
      for (std::uint32_t i = 0; i < channels; ++i) frame.channel_names.push_back(cur.str());
      const std::size_t count = frame.num_samples * static_cast<std::size_t>(channels);
      frame.samples.resize(count);
      for (std::size_t i = 0; i < count; ++i) frame.samples[i] = cur.f32();
      cur.expect_end();
      return frame;
    }
    case Schema::latent_code: {
      core::LatentCode code;
      code.source_seq = cur.u64();
      code.timestamp_ns = cur.u64();
      const std::uint32_t count = cur.u32();
      code.values.resize(count);
      for (std::uint32_t i = 0; i < count; ++i) code.values[i] = cur.f32();
      cur.expect_end();
      return code;
    }
    case Schema::heartbeat:
      throw UnknownSchema("message: heartbeat is transport framing, not a message");
  }
  throw UnknownSchema("message: unknown schema tag " + std::to_string(header[3]));
}

std::vector<std::uint8_t> heartbeat_encode() {
  std::vector<std::uint8_t> out;
  put_header(out, Schema::heartbeat);
  return out;
}

bool is_heartbeat(std::span<const std::uint8_t> bytes) {
  return bytes.size() == kWireHeaderSize && bytes[0] == kMagic0 && bytes[1] == kMagic1 &&
         bytes[2] == kVersion && bytes[3] == static_cast<std::uint8_t>(Schema::heartbeat);
}

}  // namespace neurostream::io
