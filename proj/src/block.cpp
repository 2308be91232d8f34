#include "gdiss/block.hpp"

#include "gdiss/wire.hpp"

#include <algorithm>

namespace gdiss {

std::vector<const SignedPointer*> Block::self_pointers() const
{
    std::vector<const SignedPointer*> out;
    for (const auto& h : pointers)
        if (h.creator == creator) out.push_back(&h);
    return out;
}

Bytes encode_body(const AgentId& creator, const std::vector<SignedPointer>& sorted_pointers,
                  const Payload& payload)
{
    Bytes out;
    std::size_t plen = payload ? payload->size() : 0;
    out.reserve(1 + 32 + 2 + sorted_pointers.size() * 128 + 4 + plen);
    out.push_back(kWireVersion);
    out.insert(out.end(), creator.bytes.begin(), creator.bytes.end());
    put_u16(out, static_cast<std::uint16_t>(sorted_pointers.size()));
    for (const auto& h : sorted_pointers) {
        out.insert(out.end(), h.creator.bytes.begin(), h.creator.bytes.end());
        out.insert(out.end(), h.digest.bytes.begin(), h.digest.bytes.end());
        out.insert(out.end(), h.signature.bytes.begin(), h.signature.bytes.end());
    }
    put_u32(out, static_cast<std::uint32_t>(plen));
    if (payload) out.insert(out.end(), payload->begin(), payload->end());
    return out;
}

BlockPtr make_block(const AgentIdentity& id, std::vector<SignedPointer> pointers, Payload payload)
{
    std::sort(pointers.begin(), pointers.end());
    pointers.erase(std::unique(pointers.begin(), pointers.end(),
                               [](const SignedPointer& a, const SignedPointer& b) {
                                   return a.creator == b.creator && a.digest == b.digest;
                               }),
                   pointers.end());
    if (pointers.empty() != !payload.has_value())
        throw std::invalid_argument(pointers.empty() ? "initial block must have empty payload"
                                                     : "non-initial block needs a payload");
    if (pointers.size() > 0xffff) throw std::invalid_argument("too many pointers");
    auto b = std::make_shared<Block>();
    b->creator = id.id;
    b->pointers = std::move(pointers);
    b->payload = std::move(payload);
    b->self.creator = id.id;
    b->self.digest = hash_bytes(encode_body(b->creator, b->pointers, b->payload));
    b->self.signature = sign(b->self.digest, id);
    return b;
}

std::string_view to_string(BlockFault f)
{
    switch (f) {
    case BlockFault::none: return "none";
    case BlockFault::shape: return "initial block must have no pointers and empty payload";
    case BlockFault::pointer_order: return "pointers not in canonical order";
    case BlockFault::self_pointers: return "non-initial block needs exactly one self-pointer";
    case BlockFault::digest: return "digest mismatch";
    case BlockFault::signature: return "bad signature";
    }
    return "unknown";
}

BlockFault validate_block(const Block& b, SignatureScheme scheme)
{
    if (b.pointers.empty() != !b.payload.has_value()) return BlockFault::shape;
    if (b.self.creator != b.creator) return BlockFault::signature;
    for (std::size_t i = 1; i < b.pointers.size(); ++i)
        if (!(b.pointers[i - 1] < b.pointers[i])) return BlockFault::pointer_order;
    if (!b.initial() && b.self_pointers().size() != 1) return BlockFault::self_pointers;
    if (hash_bytes(encode_body(b.creator, b.pointers, b.payload)) != b.self.digest)
        return BlockFault::digest;
    if (!verify(b.self.digest, b.self.signature, b.creator, scheme)) return BlockFault::signature;
    for (const auto& h : b.pointers)
        if (!verify(h.digest, h.signature, h.creator, scheme)) return BlockFault::signature;
    return BlockFault::none;
}

}  // namespace gdiss
