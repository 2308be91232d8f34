#include "gdiss/gd.hpp"

#include <algorithm>
#include <limits>

namespace gdiss {

std::string describe(const SimpleBlock& b)
{
    std::string s = "(" + b.creator.short_hex() + "," + std::to_string(b.index) + ",";
    if (!b.payload) return s + "⊥)";
    return s + "\"" + std::string(b.payload->begin(), b.payload->end()) + "\")";
}

GDConfig GDConfig::initial(std::vector<AgentId> agents)
{
    std::sort(agents.begin(), agents.end());
    agents.erase(std::unique(agents.begin(), agents.end()), agents.end());
    GDConfig c;
    c.agents = agents;
    for (const auto& a : agents) c.states[a];
    return c;
}

const GDLocal& GDConfig::at(const AgentId& p) const
{
    auto it = states.find(p);
    if (it == states.end()) throw std::out_of_range("agent not in configuration: " + p.short_hex());
    return it->second;
}

bool GDConfig::has_agent(const AgentId& p) const { return states.count(p) != 0; }

std::size_t GDConfig::total_blocks() const
{
    std::size_t n = 0;
    for (const auto& [a, s] : states) n += s.size();
    return n;
}

std::string_view to_string(GDKind k)
{
    switch (k) {
    case GDKind::Create: return "Create";
    case GDKind::Follow: return "Follow";
    case GDKind::QSent: return "QSent";
    }
    return "?";
}

GDKind gd_kind_from_string(std::string_view s)
{
    if (s == "Create") return GDKind::Create;
    if (s == "Follow") return GDKind::Follow;
    if (s == "QSent") return GDKind::QSent;
    throw std::invalid_argument("unknown GD transition kind: " + std::string(s));
}

std::string describe(const GDTransition& t)
{
    std::string s = std::string(to_string(t.kind)) + " by " + t.actor.short_hex() + " of " + describe(t.block);
    if (t.source) s += " from " + t.source->short_hex();
    return s;
}

std::uint32_t max_index(const GDLocal& s, const AgentId& q)
{
    auto it = s.upper_bound(SimpleBlock{q, std::numeric_limits<std::uint32_t>::max(), Bytes(1, 0xff)});
    while (it != s.begin()) {
        --it;
        if (it->creator != q) return 0;
        return it->index;
    }
    return 0;
}

bool holds_index(const GDLocal& s, const AgentId& q, std::uint32_t i)
{
    auto it = s.lower_bound(SimpleBlock{q, i, std::nullopt});
    return it != s.end() && it->creator == q && it->index == i;
}

namespace {

bool holds_creator(const GDLocal& s, const AgentId& q)
{
    auto it = s.lower_bound(SimpleBlock{q, 0, std::nullopt});
    return it != s.end() && it->creator == q;
}

std::optional<std::string> check_source(SimpleProtocol proto, const GDConfig& c, const GDTransition& t,
                                        const AgentId& q)
{
    if (q == t.actor) return "source must differ from actor";
    if (!c.has_agent(q)) return "source not in universe";
    if (!c.at(q).count(t.block)) return "block not held by source";
    if (proto == SimpleProtocol::GD && !gd_friends(c, t.actor, q)) return "actor and source are not friends";
    return std::nullopt;
}

}  // namespace

bool gd_friends(const GDConfig& c, const AgentId& p, const AgentId& q)
{
    return holds_creator(c.at(p), q) && holds_creator(c.at(q), p);
}

std::optional<std::string> simple_check(SimpleProtocol proto, const GDConfig& c, const GDTransition& t)
{
    const AgentId& p = t.actor;
    const SimpleBlock& b = t.block;
    if (!c.has_agent(p)) return "actor not in universe";
    if (!c.has_agent(b.creator)) return "block creator not in universe";
    const GDLocal& cp = c.at(p);
    if (cp.count(b)) return "block already held";
    if (b.index == 0) return "index must be positive";
    switch (t.kind) {
    case GDKind::Create:
        if (b.creator != p) return "Create: block creator must be the actor";
        if (b.index != max_index(cp, p) + 1) return "Create: index must be max own index + 1";
        if (proto == SimpleProtocol::GD && b.index == 1 && b.payload) return "Create: initial block must carry bottom";
        return std::nullopt;
    case GDKind::Follow:
        if (proto == SimpleProtocol::AD) return "Follow: not a transition of this protocol";
        if (b.creator == p) return "Follow: block creator must differ from actor";
        if (b.index != 1 || b.payload) return "Follow: block must be an initial block";
        return std::nullopt;
    case GDKind::QSent: {
        if (b.creator == p) return "QSent: block creator must differ from actor";
        if (proto == SimpleProtocol::GD || b.index > 1) {
            if (b.index < 2 || !holds_index(cp, b.creator, b.index - 1))
                return "QSent: actor lacks the predecessor block";
        }
        if (t.source) return check_source(proto, c, t, *t.source);
        for (const auto& q : c.agents)
            if (q != p && !check_source(proto, c, t, q)) return std::nullopt;
        return "QSent: no qualifying source";
    }
    }
    return "unknown kind";
}

std::vector<GDTransition> simple_enabled(SimpleProtocol proto, const GDConfig& c, const AgentId& p)
{
    std::vector<GDTransition> out;
    const GDLocal& cp = c.at(p);
    std::uint32_t next = max_index(cp, p) + 1;
    Payload x = (next == 1) ? Payload{} : Payload{Bytes{}};
    out.push_back({GDKind::Create, p, {p, next, x}, std::nullopt});
    if (proto == SimpleProtocol::GD) {
        for (const auto& q : c.agents) {
            SimpleBlock init{q, 1, std::nullopt};
            if (q != p && !cp.count(init)) out.push_back({GDKind::Follow, p, init, std::nullopt});
        }
    }
    std::set<std::pair<SimpleBlock, AgentId>> seen;
    for (const auto& q : c.agents) {
        if (q == p) continue;
        if (proto == SimpleProtocol::GD && !gd_friends(c, p, q)) continue;
        for (const auto& b : c.at(q)) {
            if (b.creator == p || cp.count(b)) continue;
            bool pred_ok = (proto == SimpleProtocol::AD && b.index == 1) ||
                           (b.index >= 2 && holds_index(cp, b.creator, b.index - 1));
            if (!pred_ok) continue;
            out.push_back({GDKind::QSent, p, b, q});
        }
    }
    return out;
}

std::vector<GDTransition> simple_enabled_frontier(SimpleProtocol proto, const GDConfig& c, const AgentId& p)
{
    std::vector<GDTransition> out;
    const GDLocal& cp = c.at(p);
    std::uint32_t next = max_index(cp, p) + 1;
    Payload x = (next == 1) ? Payload{} : Payload{Bytes{}};
    out.push_back({GDKind::Create, p, {p, next, x}, std::nullopt});
    if (proto == SimpleProtocol::GD) {
        for (const auto& q : c.agents) {
            SimpleBlock init{q, 1, std::nullopt};
            if (q != p && !cp.count(init)) out.push_back({GDKind::Follow, p, init, std::nullopt});
        }
    }
    for (const auto& q : c.agents) {
        if (q == p) continue;
        if (proto == SimpleProtocol::GD && !gd_friends(c, p, q)) continue;
        const GDLocal& cq = c.at(q);
        for (const auto& r : c.agents) {
            if (r == p) continue;
            std::uint32_t mine = max_index(cp, r);
            if (mine == 0 && proto == SimpleProtocol::GD) continue;
            auto it = cq.lower_bound(SimpleBlock{r, mine + 1, std::nullopt});
            for (; it != cq.end() && it->creator == r && it->index == mine + 1; ++it)
                out.push_back({GDKind::QSent, p, *it, q});
        }
    }
    return out;
}

void simple_apply_unchecked(GDConfig& c, const GDTransition& t) { c.states.at(t.actor).insert(t.block); }

namespace {

GDConfig checked_apply(SimpleProtocol proto, const GDConfig& c, const GDTransition& t)
{
    if (auto why = simple_check(proto, c, t))
        throw TransitionError("transition not enabled: " + *why + " [" + describe(t) + "]", *why);
    GDConfig out = c;
    simple_apply_unchecked(out, t);
    return out;
}

}  // namespace

GDConfig gd_apply(const GDConfig& c, const GDTransition& t) { return checked_apply(SimpleProtocol::GD, c, t); }
GDConfig ad_apply(const GDConfig& c, const GDTransition& t) { return checked_apply(SimpleProtocol::AD, c, t); }

bool is_consistent(const GDConfig& c)
{
    for (const auto& [q, s] : c.states)
        for (const auto& b : s) {
            if (b.index == 1 && !b.payload) continue;  // Follow may add an initial block before its creator does
            auto it = c.states.find(b.creator);
            if (it == c.states.end() || !it->second.count(b)) return false;
        }
    return true;
}

bool is_complete(const GDConfig& c)
{
    for (const auto& [q, s] : c.states)
        for (const auto& b : s)
            for (std::uint32_t i = 1; i < b.index; ++i)
                if (!holds_index(s, b.creator, i)) return false;
    return true;
}

bool below(const GDConfig& c, const GDConfig& c2)
{
    if (c.agents != c2.agents) return false;
    for (const auto& [p, s] : c.states) {
        const auto& s2 = c2.at(p);
        if (!std::includes(s2.begin(), s2.end(), s.begin(), s.end())) return false;
    }
    return true;
}

std::vector<SimpleBlock> delivery_obligations(SimpleProtocol proto, const GDConfig& c, const AgentId& p)
{
    std::set<SimpleBlock> out;
    for (const auto& t : simple_enabled(proto, c, p))
        if (t.kind == GDKind::QSent) out.insert(t.block);
    return {out.begin(), out.end()};
}

}  // namespace gdiss
