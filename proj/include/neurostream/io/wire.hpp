#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "neurostream/core/types.hpp"

namespace neurostream::io {

struct UnknownSchema : Error {
  using Error::Error;
};
struct TruncatedMessage : Error {
  using Error::Error;
};

enum class Schema : std::uint8_t {
  heartbeat = 0x00,
  neuro_frame = 0x01,
  latent_code = 0x02,
};

using Message = std::variant<core::NeuroFrame, core::LatentCode>;

Schema message_schema(const Message& m);

// Wire format "NM" v1: 4-byte header (magic, version, schema tag) followed by
// the schema payload, all little-endian. Layout in docs/FORMATS.md.
std::vector<std::uint8_t> message_encode(const Message& m);
Message message_decode(std::span<const std::uint8_t> bytes);

// Heartbeat frames carry no payload; peers drop them after framing.
std::vector<std::uint8_t> heartbeat_encode();
bool is_heartbeat(std::span<const std::uint8_t> bytes);

inline constexpr std::size_t kWireHeaderSize = 4;

}  // namespace neurostream::io
