#include "gdiss/cgd.hpp"

#include <algorithm>

namespace gdiss {

bool CGDLocalState::sent(const AgentId& q, Ord o) const
{
    auto it = out.find(q);
    return it != out.end() && o < it->second.size() && it->second.test(o);
}

bool CGDLocalState::sent(const AgentId& q, const Digest& d) const
{
    auto o = B.find(d);
    return o && sent(q, *o);
}

bool CGDLocalState::add_out(const AgentId& q, Ord o)
{
    auto& bits = out[q];
    if (bits.size() <= o) bits.resize(std::max<std::size_t>(B.capacity(), o + 1));
    if (bits.test(o)) return false;
    bits.set(o);
    return true;
}

std::size_t CGDLocalState::out_size() const
{
    std::size_t n = 0;
    for (const auto& [q, bits] : out) n += bits.count();
    return n;
}

std::vector<std::pair<AgentId, Digest>> CGDLocalState::outbox() const
{
    std::vector<std::pair<AgentId, Digest>> v;
    for (const auto& [q, bits] : out)
        for (auto o = bits.find_first(); o != Bits::npos; o = bits.find_next(o)) v.emplace_back(q, B[Ord(o)].digest());
    std::sort(v.begin(), v.end());
    return v;
}

std::vector<Ord> CGDLocalState::addressed_to(const AgentId& q) const
{
    std::vector<Ord> v;
    auto it = out.find(q);
    if (it == out.end()) return v;
    for (auto o = it->second.find_first(); o != Bits::npos; o = it->second.find_next(o)) v.push_back(Ord(o));
    return v;
}

CGDConfig CGDConfig::initial(std::vector<AgentId> agents, SignatureScheme scheme)
{
    std::sort(agents.begin(), agents.end());
    agents.erase(std::unique(agents.begin(), agents.end()), agents.end());
    CGDConfig c;
    c.scheme = scheme;
    c.agents = agents;
    for (const auto& a : agents) c.states.emplace(a, CGDLocalState(scheme, a));
    return c;
}

const CGDLocalState& CGDConfig::at(const AgentId& p) const
{
    auto it = states.find(p);
    if (it == states.end()) throw std::out_of_range("agent not in configuration: " + p.short_hex());
    return it->second;
}

CGDLocalState& CGDConfig::at(const AgentId& p)
{
    auto it = states.find(p);
    if (it == states.end()) throw std::out_of_range("agent not in configuration: " + p.short_hex());
    return it->second;
}

std::size_t CGDConfig::total_blocks() const
{
    std::size_t n = 0;
    for (const auto& [p, s] : states) n += s.B.size();
    return n;
}

std::string_view to_string(CGDKind k)
{
    switch (k) {
    case CGDKind::Create: return "Create";
    case CGDKind::Offer: return "Offer";
    case CGDKind::Follow: return "Follow";
    case CGDKind::Send: return "Send";
    case CGDKind::Receive: return "Receive";
    }
    return "?";
}

CGDKind cgd_kind_from_string(std::string_view s)
{
    for (auto k : {CGDKind::Create, CGDKind::Offer, CGDKind::Follow, CGDKind::Send, CGDKind::Receive})
        if (to_string(k) == s) return k;
    throw std::invalid_argument("unknown CGD transition kind: " + std::string(s));
}

std::string describe(const CGDTransition& t)
{
    std::string s = std::string(to_string(t.kind)) + " by " + t.actor.short_hex();
    if (t.block)
        s += " of " + t.block->creator.short_hex() + ":" + t.block->digest().short_hex();
    if (t.peer) s += (t.kind == CGDKind::Offer || t.kind == CGDKind::Send ? " to " : " from ") + t.peer->short_hex();
    return s;
}

bool knows_holds(const Blocklace& B, const AgentId& q, Ord o)
{
    return B.owner() == q ? B.agent_observes(q, o) : B.held_by(q).test(o);
}

bool knows_follows(const Blocklace& B, const AgentId& q, const AgentId& r)
{
    return B.owner() == q ? B.follows(q, r) : B.holds_from(q, r);
}

bool knows_block(const CGDConfig& c, const AgentId& p, const Block& b) { return c.at(p).B.contains(b.digest()); }

bool knows_q_knows(const CGDConfig& c, const AgentId& p, const AgentId& q, const Block& b)
{
    const auto& B = c.at(p).B;
    auto o = B.find(b.digest());
    return o && knows_holds(B, q, *o);
}

bool knows_follows(const CGDConfig& c, const AgentId& p, const AgentId& q, const AgentId& q2)
{
    return knows_follows(c.at(p).B, q, q2);
}

bool knows_friends(const CGDConfig& c, const AgentId& p, const AgentId& q, const AgentId& q2)
{
    const auto& B = c.at(p).B;
    return knows_follows(B, q, q2) && knows_follows(B, q2, q);
}

namespace {

bool unique_tip(const Blocklace& B, const AgentId& p, Ord& tip)
{
    auto t = B.tip(p);
    if (!t) return false;
    tip = *t;
    auto top = B.index(*t);
    for (Ord o : B.blocks_of(p))
        if (o != *t && B.index(o) == top) return false;
    return true;
}

std::optional<std::string> check_create(const CGDConfig& c, const AgentId& p, const BlockPtr& b)
{
    const auto& B = c.at(p).B;
    if (!b) {
        if (!B.has_creator(p)) return std::nullopt;
        if (!B.is_closed(p)) return "Create: blocklace is not closed for its owner";
        return std::nullopt;
    }
    if (b->creator != p) return "Create: block creator must be the actor";
    if (B.contains(b->digest())) return "Create: block already held";
    if (auto f = validate_block(*b, c.scheme); f != BlockFault::none)
        return "Create: invalid block (" + std::string(to_string(f)) + ")";
    if (b->initial()) {
        if (B.has_creator(p)) return "Create: initial block but own blocks exist";
        return std::nullopt;
    }
    if (!B.has_creator(p)) return "Create: first own block must be initial";
    Ord tip = 0;
    if (!unique_tip(B, p, tip)) return "Create: own blocks do not form a single chain";
    if (b->self_pointers().front()->digest != B[tip].digest()) return "Create: self-pointer must target the own tip";
    try {
        if (B.closure_of_extra(*b, p).size() != B.size()) return "Create: closure of the block is not B plus the block";
    } catch (const std::runtime_error&) {
        return "Create: block points to a block outside B";
    }
    return std::nullopt;
}

std::optional<std::string> check_offer(const CGDConfig& c, const CGDTransition& t)
{
    const auto& s = c.at(t.actor);
    if (!t.block) return "Offer: no block";
    if (!t.peer) return "Offer: no destination";
    const AgentId& q = *t.peer;
    if (q == t.actor) return "Offer: destination must differ from actor";
    if (!c.has_agent(q)) return "Offer: destination not in universe";
    auto o = s.B.find(t.block->digest());
    if (!o) return "Offer: block not held";
    if (!t.block->initial()) return "Offer: block must be initial";
    if (knows_holds(s.B, q, *o)) return "Offer: destination already observes the block";
    if (s.sent(q, *o)) return "Offer: message already in outbox";
    return std::nullopt;
}

std::optional<std::string> check_follow_from(const CGDConfig& c, const AgentId& p, const AgentId& q, const Block& b)
{
    if (q == p) return "Follow: peer must differ from actor";
    if (!c.has_agent(q)) return "Follow: peer not in universe";
    if (!c.at(q).sent(p, b.digest())) return "Follow: no such message in the peer's outbox";
    return std::nullopt;
}

std::optional<std::string> check_follow(const CGDConfig& c, const CGDTransition& t)
{
    const AgentId& p = t.actor;
    if (!t.block) return "Follow: no block";
    const Block& b = *t.block;
    if (!b.initial()) return "Follow: block must be initial";
    if (b.creator == p) return "Follow: block creator must differ from actor";
    if (c.at(p).B.contains(b.digest())) return "Follow: block already held";
    if (t.peer) return check_follow_from(c, p, *t.peer, b);
    for (const auto& q : c.agents)
        if (!check_follow_from(c, p, q, b)) return std::nullopt;
    return "Follow: no peer offers the block";
}

std::optional<std::string> check_send(const CGDConfig& c, const CGDTransition& t)
{
    const auto& s = c.at(t.actor);
    if (!t.block) return "Send: no block";
    if (!t.peer) return "Send: no destination";
    const AgentId& q = *t.peer;
    if (q == t.actor) return "Send: destination must differ from actor";
    if (!c.has_agent(q)) return "Send: destination not in universe";
    auto o = s.B.find(t.block->digest());
    if (!o) return "Send: block not held";
    if (s.sent(q, *o)) return "Send: message already in outbox";
    if (!presumes_friend(s, q)) return "Send: actor does not know the destination is a friend";
    if (!presumes_follows(s, q, t.block->creator))
        return "Send: actor does not know the destination follows the creator";
    if (knows_holds(s.B, q, *o)) return "Send: actor knows the destination knows the block";
    return std::nullopt;
}

std::optional<std::string> check_receive_from(const CGDConfig& c, const AgentId& p, const AgentId& q, const Block& b)
{
    if (q == p) return "Receive: peer must differ from actor";
    if (!c.has_agent(q)) return "Receive: peer not in universe";
    if (!c.at(q).sent(p, b.digest())) return "Receive: no such message in the peer's outbox";
    if (!c.at(p).B.has_creator(q)) return "Receive: actor holds no block of the peer";
    return std::nullopt;
}

std::optional<std::string> check_receive(const CGDConfig& c, const CGDTransition& t)
{
    const AgentId& p = t.actor;
    if (!t.block) return "Receive: no block";
    const Block& b = *t.block;
    const auto& B = c.at(p).B;
    if (b.initial()) return "Receive: block must be non-initial";
    if (b.creator == p) return "Receive: block creator must differ from actor";
    if (B.contains(b.digest())) return "Receive: block already held";
    if (!B.follows(p, b.creator)) return "Receive: actor does not follow the block's creator";
    if (!B.closed_with(b, p)) return "Receive: actor lacks the closure of the block";
    if (t.peer) return check_receive_from(c, p, *t.peer, b);
    for (const auto& q : c.agents)
        if (!check_receive_from(c, p, q, b)) return std::nullopt;
    return "Receive: no peer sent the block";
}

}  // namespace

std::optional<std::string> cgd_check(const CGDConfig& c, const CGDTransition& t)
{
    if (!c.has_agent(t.actor)) return "actor not in universe";
    switch (t.kind) {
    case CGDKind::Create: return check_create(c, t.actor, t.block);
    case CGDKind::Offer: return check_offer(c, t);
    case CGDKind::Follow: return check_follow(c, t);
    case CGDKind::Send: return check_send(c, t);
    case CGDKind::Receive: return check_receive(c, t);
    }
    return "unknown kind";
}

bool send_enabled(const CGDConfig& c, const AgentId& p, const AgentId& q, Ord b)
{
    const auto& s = c.at(p);
    CGDTransition t{CGDKind::Send, p, s.B.ptr(b), std::nullopt, q};
    return !check_send(c, t);
}

bool receive_enabled(const CGDConfig& c, const AgentId& p, const AgentId& from, const Block& b)
{
    const auto& B = c.at(p).B;
    return !b.initial() && b.creator != p && !B.contains(b.digest()) && B.follows(p, b.creator) &&
           !check_receive_from(c, p, from, b) && B.closed_with(b, p);
}

bool presumes_follows(const CGDLocalState& s, const AgentId& q, const AgentId& r)
{
    if (knows_follows(s.B, q, r)) return true;
    if (r != s.owner()) return false;
    auto own = s.B.blocks_of(r);
    return !own.empty() && s.B[own.front()].initial() && s.sent(q, own.front());
}

bool presumes_friend(const CGDLocalState& s, const AgentId& q)
{
    return s.B.follows(s.owner(), q) && presumes_follows(s, q, s.owner());
}

std::vector<Ord> sendable(const CGDLocalState& s, const AgentId& q)
{
    std::vector<Ord> v;
    const auto& B = s.B;
    if (q == s.owner() || !presumes_friend(s, q)) return v;
    Bits want(B.capacity());
    for (const auto& r : B.creators())
        if (presumes_follows(s, q, r)) want |= B.creator_mask(r);
    want -= B.held_by(q);
    auto it = s.out.find(q);
    if (it != s.out.end()) {
        Bits sent = it->second;
        sent.resize(B.capacity());
        want -= sent;
    }
    for (auto o = want.find_first(); o != Bits::npos && o < B.size(); o = want.find_next(o)) v.push_back(Ord(o));
    return v;
}

std::vector<Ord> sendable_to(const CGDConfig& c, const AgentId& p, const AgentId& q)
{
    if (!c.has_agent(q)) return {};
    return sendable(c.at(p), q);
}

std::vector<CGDTransition> cgd_enabled(const CGDConfig& c, const AgentId& p)
{
    std::vector<CGDTransition> out;
    const auto& s = c.at(p);
    const auto& B = s.B;
    if (!check_create(c, p, nullptr))
        out.push_back({CGDKind::Create, p, nullptr, B.has_creator(p) ? Payload{Bytes{}} : Payload{}, std::nullopt});
    for (Ord o = 0; o < B.size(); ++o) {
        if (!B[o].initial()) continue;
        for (const auto& q : c.agents)
            if (q != p && !knows_holds(B, q, o) && !s.sent(q, o))
                out.push_back({CGDKind::Offer, p, B.ptr(o), std::nullopt, q});
    }
    for (const auto& q : c.agents) {
        if (q == p) continue;
        const auto& sq = c.at(q);
        for (Ord o : sq.addressed_to(p)) {
            const Block& b = sq.B[o];
            if (b.initial()) {
                if (b.creator != p && !B.contains(b.digest()))
                    out.push_back({CGDKind::Follow, p, sq.B.ptr(o), std::nullopt, q});
            } else if (receive_enabled(c, p, q, b)) {
                out.push_back({CGDKind::Receive, p, sq.B.ptr(o), std::nullopt, q});
            }
        }
    }
    for (const auto& q : c.agents)
        for (Ord o : sendable_to(c, p, q)) out.push_back({CGDKind::Send, p, B.ptr(o), std::nullopt, q});
    return out;
}

CGDTransition materialize_create(const CGDConfig& c, const AgentIdentity& id, const Payload& payload)
{
    return {CGDKind::Create, id.id, create_block(c.at(id.id).B, id, payload), payload, std::nullopt};
}

void cgd_apply_unchecked(CGDConfig& c, const CGDTransition& t)
{
    auto& s = c.at(t.actor);
    switch (t.kind) {
    case CGDKind::Create:
    case CGDKind::Follow:
    case CGDKind::Receive:
        s.B.insert_trusted(t.block);
        s.input.erase(t.block->digest());
        break;
    case CGDKind::Offer:
    case CGDKind::Send:
        s.add_out(*t.peer, *s.B.find(t.block->digest()));
        break;
    }
}

void cgd_apply_inplace(CGDConfig& c, const CGDTransition& t)
{
    if (t.kind == CGDKind::Create && !t.block) throw TransitionError("transition not enabled: Create template has no block", "Create: no block");
    if (auto why = cgd_check(c, t))
        throw TransitionError("transition not enabled: " + *why + " [" + describe(t) + "]", *why);
    cgd_apply_unchecked(c, t);
}

CGDConfig cgd_apply(const CGDConfig& c, const CGDTransition& t)
{
    CGDConfig out = c;
    cgd_apply_inplace(out, t);
    return out;
}

bool cgd_below(const CGDConfig& c, const CGDConfig& c2)
{
    if (c.agents != c2.agents) return false;
    for (const auto& [p, s] : c.states) {
        const auto& s2 = c2.at(p);
        for (const auto& b : s.B.blocks())
            if (!s2.B.contains(b->digest())) return false;
        for (const auto& [q, d] : s.outbox())
            if (!s2.sent(q, d)) return false;
    }
    return true;
}

}  // namespace gdiss
