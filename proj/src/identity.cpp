#include "gdiss/identity.hpp"

#include <sodium.h>

#include <fstream>
#include <mutex>

namespace gdiss {

namespace {

void ensure_sodium()
{
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
    });
}

constexpr std::string_view kMockIdDomain = "gdiss/mock-agent-id/v1";

std::array<std::uint8_t, 32> hmac(const AgentId& key, const Digest& d)
{
    std::array<std::uint8_t, 32> mac{};
    crypto_auth_hmacsha256_state st;
    crypto_auth_hmacsha256_init(&st, key.bytes.data(), key.bytes.size());
    crypto_auth_hmacsha256_update(&st, d.bytes.data(), d.bytes.size());
    crypto_auth_hmacsha256_final(&st, mac.data());
    return mac;
}

int hex_value(char c)
{
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

}  // namespace

Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

std::string to_hex(std::span<const std::uint8_t> data)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (auto b : data) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xf]);
    }
    return out;
}

Bytes from_hex(std::string_view hex)
{
    if (hex.size() % 2 != 0) throw std::invalid_argument("hex string has odd length");
    Bytes out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        int hi = hex_value(hex[2 * i]);
        int lo = hex_value(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) throw std::invalid_argument("invalid hex digit");
        out[i] = static_cast<std::uint8_t>(hi << 4 | lo);
    }
    return out;
}

std::string_view to_string(SignatureScheme s)
{
    return s == SignatureScheme::Mock ? "mock" : "ed25519";
}

SignatureScheme scheme_from_string(std::string_view s)
{
    if (s == "mock") return SignatureScheme::Mock;
    if (s == "ed25519") return SignatureScheme::Ed25519;
    throw std::invalid_argument("unknown signature scheme: " + std::string(s));
}

Digest hash_bytes(std::span<const std::uint8_t> data)
{
    ensure_sodium();
    Digest d;
    crypto_hash_sha256(d.bytes.data(), data.data(), data.size());
    return d;
}

Seed seed_from_name(std::string_view name)
{
    Bytes buf = to_bytes("gdiss/seed/");
    buf.insert(buf.end(), name.begin(), name.end());
    return Seed::from_span(hash_bytes(buf).bytes);
}

AgentIdentity gen_identity(const Seed& seed, SignatureScheme scheme)
{
    ensure_sodium();
    AgentIdentity out;
    out.scheme = scheme;
    if (scheme == SignatureScheme::Ed25519) {
        out.secret_key.resize(crypto_sign_SECRETKEYBYTES);
        crypto_sign_seed_keypair(out.id.bytes.data(), out.secret_key.data(), seed.bytes.data());
        return out;
    }
    Bytes buf(kMockIdDomain.begin(), kMockIdDomain.end());
    buf.insert(buf.end(), seed.bytes.begin(), seed.bytes.end());
    out.id.bytes = hash_bytes(buf).bytes;
    out.secret_key.assign(seed.bytes.begin(), seed.bytes.end());
    return out;
}

Signature sign(const Digest& digest, const AgentIdentity& identity)
{
    ensure_sodium();
    Signature sig;
    if (identity.scheme == SignatureScheme::Ed25519) {
        crypto_sign_detached(sig.bytes.data(), nullptr, digest.bytes.data(), digest.bytes.size(),
                             identity.secret_key.data());
        return sig;
    }
    auto mac = hmac(identity.id, digest);
    std::copy(identity.id.bytes.begin(), identity.id.bytes.end(), sig.bytes.begin());
    std::copy(mac.begin(), mac.end(), sig.bytes.begin() + 32);
    return sig;
}

bool verify(const Digest& digest, const Signature& sig, const AgentId& agent, SignatureScheme scheme)
{
    ensure_sodium();
    if (scheme == SignatureScheme::Ed25519) {
        return crypto_sign_verify_detached(sig.bytes.data(), digest.bytes.data(), digest.bytes.size(),
                                           agent.bytes.data()) == 0;
    }
    if (!std::equal(agent.bytes.begin(), agent.bytes.end(), sig.bytes.begin())) return false;
    auto mac = hmac(agent, digest);
    return sodium_memcmp(mac.data(), sig.bytes.data() + 32, mac.size()) == 0;
}

std::vector<Seed> read_identity_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open identity file: " + path);
    std::vector<Seed> seeds;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (line.size() != 64) throw std::runtime_error("identity line must be 64 hex chars: " + path);
        seeds.push_back(Seed::from_hex(line));
    }
    if (seeds.empty()) throw std::runtime_error("identity file holds no seed: " + path);
    return seeds;
}

void write_identity_file(const std::string& path, const Seed& seed)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write identity file: " + path);
    out << seed.hex() << "\n";
}

}  // namespace gdiss
