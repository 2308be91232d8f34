#include "gdiss/agent.hpp"

namespace gdiss {

namespace {

void send(CGDLocalState& s, const AgentId& q, Ord o, std::vector<CGDTransition>& out)
{
    if (s.add_out(q, o)) out.push_back({CGDKind::Send, s.owner(), s.B.ptr(o), std::nullopt, q});
}

void create(CGDLocalState& s, AgentRuntime& a, const Payload& x, std::vector<CGDTransition>& out)
{
    auto b = create_block(s.B, a.id, x);
    s.B.insert_trusted(b);
    out.push_back({CGDKind::Create, a.id.id, b, x, std::nullopt});
}

// Forward an absorbed block to friends that follow its creator and are not
// known to have it.
void forward(CGDLocalState& s, const AgentRuntime& a, Ord o, std::vector<CGDTransition>& out)
{
    const AgentId& p = a.id.id;
    const AgentId& creator = s.B[o].creator;
    for (const auto& q : a.universe)
        if (q != p && presumes_friend(s, q) && presumes_follows(s, q, creator) && !knows_holds(s.B, q, o))
            send(s, q, o, out);
}

void drain(CGDLocalState& s, AgentRuntime& a, std::vector<CGDTransition>& out)
{
    const AgentId& p = a.id.id;
    for (bool progress = true; progress;) {
        progress = false;
        for (auto it = s.input.begin(); it != s.input.end();) {
            const auto& [b, from] = it->second;
            if (s.B.contains(b->digest())) {
                it = s.input.erase(it);
                continue;
            }
            CGDKind kind;
            if (b->initial()) {
                if (b->creator == p || !a.accepts(b->creator)) {
                    ++it;
                    continue;
                }
                kind = CGDKind::Follow;
            } else {
                if (b->creator == p || !s.B.follows(p, b->creator) || !s.B.has_creator(from) ||
                    !s.B.closed_with(*b, p)) {
                    ++it;
                    continue;
                }
                kind = CGDKind::Receive;
            }
            auto blk = b;
            auto peer = from;
            it = s.input.erase(it);
            s.B.insert_trusted(blk);
            out.push_back({kind, p, blk, std::nullopt, peer});
            forward(s, a, *s.B.find(blk->digest()), out);
            progress = true;
        }
    }
    // Cordiality sweep: friendship or followership may have become known only now.
    for (const auto& q : a.universe)
        if (q != p)
            for (Ord o : sendable(s, q)) send(s, q, o, out);
}

}  // namespace

std::vector<CGDTransition> agent_step(CGDLocalState& s, AgentRuntime& a, const AgentEvent& e)
{
    std::vector<CGDTransition> out;
    const AgentId& p = a.id.id;
    switch (e.kind) {
    case AgentEventKind::SetPayload: {
        if (!s.B.has_creator(p)) create(s, a, std::nullopt, out);
        if (!e.payload) break;
        create(s, a, e.payload, out);
        Ord o = *s.B.find(out.back().block->digest());
        for (const auto& q : a.universe)
            if (q != p && presumes_friend(s, q)) send(s, q, o, out);
        break;
    }
    case AgentEventKind::DecideOffer: {
        if (!e.block || !e.peer || *e.peer == p) break;
        auto o = s.B.find(e.block->digest());
        if (!o || !e.block->initial() || knows_follows(s.B, *e.peer, e.block->creator) || knows_holds(s.B, *e.peer, *o))
            break;
        if (s.add_out(*e.peer, *o)) out.push_back({CGDKind::Offer, p, s.B.ptr(*o), std::nullopt, *e.peer});
        break;
    }
    case AgentEventKind::Receive:
        if (e.block && e.peer && !s.B.contains(e.block->digest()))
            s.input.emplace(e.block->digest(), std::make_pair(e.block, *e.peer));
        drain(s, a, out);
        break;
    case AgentEventKind::DecideFollow:
        if (e.peer) a.accept.insert(*e.peer);
        drain(s, a, out);
        break;
    case AgentEventKind::Drain:
        drain(s, a, out);
        break;
    }
    return out;
}

}  // namespace gdiss
