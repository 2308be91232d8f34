#pragma once

#include "gdiss/sim.hpp"
#include "gdiss/wire.hpp"

namespace gdiss::detail {

inline Digest element_hash(const SimpleBlock& b)
{
    Bytes buf{'g'};
    buf.insert(buf.end(), b.creator.bytes.begin(), b.creator.bytes.end());
    put_u32(buf, b.index);
    buf.push_back(b.payload ? 1 : 0);
    if (b.payload) buf.insert(buf.end(), b.payload->begin(), b.payload->end());
    return hash_bytes(buf);
}

inline Digest message_hash(const AgentId& dest, const Digest& d)
{
    Bytes buf{'o'};
    buf.insert(buf.end(), dest.bytes.begin(), dest.bytes.end());
    buf.insert(buf.end(), d.bytes.begin(), d.bytes.end());
    return hash_bytes(buf);
}

/// Incrementally maintained config digest.
struct DigestAcc {
    std::map<AgentId, Digest> acc;

    explicit DigestAcc(const std::vector<AgentId>& agents)
    {
        for (const auto& a : agents) acc[a] = Digest{};
    }
    void toggle(const AgentId& p, const Digest& h)
    {
        auto& a = acc.at(p);
        for (std::size_t i = 0; i < a.bytes.size(); ++i) a.bytes[i] ^= h.bytes[i];
    }
    void add(const AgentId& p, const GDTransition& t) { toggle(p, element_hash(t.block)); }
    void add(const AgentId& p, const CGDTransition& t)
    {
        if (t.kind == CGDKind::Offer || t.kind == CGDKind::Send)
            toggle(p, message_hash(*t.peer, t.block->digest()));
        else
            toggle(p, t.block->digest());
    }
    Digest digest() const
    {
        Bytes buf;
        for (const auto& [p, a] : acc) {
            buf.insert(buf.end(), p.bytes.begin(), p.bytes.end());
            buf.insert(buf.end(), a.bytes.begin(), a.bytes.end());
        }
        return hash_bytes(buf);
    }
};

}  // namespace gdiss::detail
