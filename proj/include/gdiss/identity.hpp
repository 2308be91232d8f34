#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gdiss {

using Bytes = std::vector<std::uint8_t>;

Bytes to_bytes(std::string_view s);
std::string to_hex(std::span<const std::uint8_t> data);
Bytes from_hex(std::string_view hex);

template <std::size_t N>
struct FixedBytes {
    std::array<std::uint8_t, N> bytes{};

    auto operator<=>(const FixedBytes&) const = default;
    bool operator==(const FixedBytes&) const = default;

    std::span<const std::uint8_t> view() const { return bytes; }
    std::string hex() const { return to_hex(bytes); }
    std::string short_hex() const { return to_hex(std::span(bytes).first(4)); }

    static FixedBytes from_span(std::span<const std::uint8_t> data)
    {
        if (data.size() != N) {
            throw std::invalid_argument("expected " + std::to_string(N) + " bytes, got " +
                                        std::to_string(data.size()));
        }
        FixedBytes out;
        std::copy(data.begin(), data.end(), out.bytes.begin());
        return out;
    }
    static FixedBytes from_hex(std::string_view hex) { return from_span(gdiss::from_hex(hex)); }
};

/// Public key bytes. Ordering is lexicographic and is the canonical agent order
/// everywhere a deterministic order is needed.
struct AgentId : FixedBytes<32> {
    static AgentId from_hex(std::string_view hex) { return {FixedBytes<32>::from_hex(hex)}; }
};

struct Digest : FixedBytes<32> {
    static Digest from_hex(std::string_view hex) { return {FixedBytes<32>::from_hex(hex)}; }
};

struct Signature : FixedBytes<64> {};

using Seed = FixedBytes<32>;

enum class SignatureScheme : std::uint8_t {
    /// agent-id || HMAC-SHA256(key = agent-id, digest). Reproducible, not unforgeable.
    Mock = 0,
    Ed25519 = 1,
};

std::string_view to_string(SignatureScheme s);
SignatureScheme scheme_from_string(std::string_view s);

struct AgentIdentity {
    AgentId id;
    Bytes secret_key;
    SignatureScheme scheme = SignatureScheme::Mock;
};

AgentIdentity gen_identity(const Seed& seed, SignatureScheme scheme = SignatureScheme::Mock);

/// Seed derived from a human-readable name; used by scenario files that name agents.
Seed seed_from_name(std::string_view name);

Digest hash_bytes(std::span<const std::uint8_t> data);
inline Digest hash_bytes(std::string_view s)
{
    return hash_bytes(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

Signature sign(const Digest& digest, const AgentIdentity& identity);
bool verify(const Digest& digest, const Signature& sig, const AgentId& agent, SignatureScheme scheme);

/// Identity files hold one 64-hex-char seed per line. The scheme is chosen by the caller.
std::vector<Seed> read_identity_file(const std::string& path);
void write_identity_file(const std::string& path, const Seed& seed);

}  // namespace gdiss

template <>
struct std::hash<gdiss::Digest> {
    std::size_t operator()(const gdiss::Digest& d) const noexcept
    {
        std::size_t h = 0;
        for (int i = 0; i < 8; ++i) h = (h << 8) | d.bytes[i];
        return h;
    }
};

template <>
struct std::hash<gdiss::AgentId> {
    std::size_t operator()(const gdiss::AgentId& d) const noexcept
    {
        std::size_t h = 0;
        for (int i = 0; i < 8; ++i) h = (h << 8) | d.bytes[i];
        return h;
    }
};
