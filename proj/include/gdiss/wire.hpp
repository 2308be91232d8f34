#pragma once

#include "gdiss/block.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <variant>

namespace gdiss {

inline constexpr std::uint8_t kWireVersion = 0x01;
inline constexpr std::size_t kDefaultMaxFrame = 1u << 20;

/// version | creator(32) | ptr-count u16 BE | pointers | payload-len u32 BE | payload
/// | self-sig(64) | self-digest(32)
Bytes encode_block(const Block& b);

enum class DecodeError {
    truncated,
    oversize,
    bad_version,
    malformed,
    digest_mismatch,
    bad_signature,
};

std::string_view to_string(DecodeError e);

struct DecodeResult {
    BlockPtr block;
    std::optional<DecodeError> error;
    std::string detail;

    explicit operator bool() const { return block != nullptr; }
};

DecodeResult decode_block(std::span<const std::uint8_t> data, SignatureScheme scheme,
                          std::size_t max_size = kDefaultMaxFrame);

/// Throws std::runtime_error carrying the decode error name.
BlockPtr decode_block_or_throw(std::span<const std::uint8_t> data, SignatureScheme scheme);

/// 4-byte big-endian length prefix followed by the encoded block.
Bytes frame_block(const Block& b);

void put_u16(Bytes& out, std::uint16_t v);
void put_u32(Bytes& out, std::uint32_t v);
std::uint16_t get_u16(const std::uint8_t* p);
std::uint32_t get_u32(const std::uint8_t* p);

}  // namespace gdiss
