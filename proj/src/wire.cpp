#include "gdiss/wire.hpp"

namespace gdiss {

void put_u16(Bytes& out, std::uint16_t v)
{
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put_u32(Bytes& out, std::uint32_t v)
{
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint16_t get_u16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] << 8 | p[1]); }

std::uint32_t get_u32(const std::uint8_t* p)
{
    return std::uint32_t(p[0]) << 24 | std::uint32_t(p[1]) << 16 | std::uint32_t(p[2]) << 8 | p[3];
}

Bytes encode_block(const Block& b)
{
    Bytes out = encode_body(b.creator, b.pointers, b.payload);
    out.insert(out.end(), b.self.signature.bytes.begin(), b.self.signature.bytes.end());
    out.insert(out.end(), b.self.digest.bytes.begin(), b.self.digest.bytes.end());
    return out;
}

std::string_view to_string(DecodeError e)
{
    switch (e) {
    case DecodeError::truncated: return "truncated";
    case DecodeError::oversize: return "oversize";
    case DecodeError::bad_version: return "bad-version";
    case DecodeError::malformed: return "malformed";
    case DecodeError::digest_mismatch: return "digest-mismatch";
    case DecodeError::bad_signature: return "bad-signature";
    }
    return "unknown";
}

namespace {

DecodeResult fail(DecodeError e, std::string detail)
{
    DecodeResult r;
    r.error = e;
    r.detail = std::move(detail);
    return r;
}

}  // namespace

DecodeResult decode_block(std::span<const std::uint8_t> data, SignatureScheme scheme, std::size_t max_size)
{
    if (data.size() > max_size) return fail(DecodeError::oversize, std::to_string(data.size()) + " bytes");
    std::size_t pos = 0;
    auto need = [&](std::size_t n) { return pos + n <= data.size(); };

    if (!need(1 + 32 + 2)) return fail(DecodeError::truncated, "header");
    if (data[0] != kWireVersion) return fail(DecodeError::bad_version, std::to_string(data[0]));
    pos = 1;
    auto b = std::make_shared<Block>();
    b->creator = AgentId{FixedBytes<32>::from_span(data.subspan(pos, 32))};
    pos += 32;
    std::size_t count = get_u16(&data[pos]);
    pos += 2;
    if (!need(count * 128)) return fail(DecodeError::truncated, "pointers");
    b->pointers.resize(count);
    for (auto& h : b->pointers) {
        h.creator = AgentId{FixedBytes<32>::from_span(data.subspan(pos, 32))};
        h.digest = Digest{FixedBytes<32>::from_span(data.subspan(pos + 32, 32))};
        h.signature = Signature{FixedBytes<64>::from_span(data.subspan(pos + 64, 64))};
        pos += 128;
    }
    if (!need(4)) return fail(DecodeError::truncated, "payload length");
    std::size_t plen = get_u32(&data[pos]);
    pos += 4;
    if (!need(plen)) return fail(DecodeError::truncated, "payload");
    if (count == 0) {
        if (plen != 0) return fail(DecodeError::malformed, "initial block carries a payload");
    } else {
        b->payload = Bytes(data.begin() + pos, data.begin() + pos + plen);
    }
    pos += plen;
    if (!need(64 + 32)) return fail(DecodeError::truncated, "self pointer");
    b->self.creator = b->creator;
    b->self.signature = Signature{FixedBytes<64>::from_span(data.subspan(pos, 64))};
    b->self.digest = Digest{FixedBytes<32>::from_span(data.subspan(pos + 64, 32))};
    pos += 96;
    if (pos != data.size()) return fail(DecodeError::malformed, "trailing bytes");

    for (std::size_t i = 1; i < b->pointers.size(); ++i)
        if (!(b->pointers[i - 1] < b->pointers[i]))
            return fail(DecodeError::malformed, "pointers not in canonical order");
    if (!b->initial() && b->self_pointers().size() != 1)
        return fail(DecodeError::malformed, "non-initial block needs exactly one self-pointer");

    auto body = data.first(data.size() - 96);
    if (hash_bytes(body) != b->self.digest) return fail(DecodeError::digest_mismatch, "self digest");
    if (!verify(b->self.digest, b->self.signature, b->creator, scheme))
        return fail(DecodeError::bad_signature, "self signature");
    for (const auto& h : b->pointers)
        if (!verify(h.digest, h.signature, h.creator, scheme))
            return fail(DecodeError::bad_signature, "pointer " + h.digest.short_hex());
    DecodeResult r;
    r.block = std::move(b);
    return r;
}

BlockPtr decode_block_or_throw(std::span<const std::uint8_t> data, SignatureScheme scheme)
{
    auto r = decode_block(data, scheme);
    if (!r) throw std::runtime_error("block decode failed: " + std::string(to_string(*r.error)) + " (" +
                                     r.detail + ")");
    return r.block;
}

Bytes frame_block(const Block& b)
{
    Bytes body = encode_block(b);
    Bytes out;
    out.reserve(4 + body.size());
    put_u32(out, static_cast<std::uint32_t>(body.size()));
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

}  // namespace gdiss
