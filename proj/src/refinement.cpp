#include "gdiss/refinement.hpp"

#include "gdiss/gd_graph.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <unordered_map>

namespace gdiss {

GDLocal sigma_local(const CGDLocalState& s)
{
    GDLocal out;
    for (Ord o = 0; o < s.B.size(); ++o) {
        const Block& b = s.B[o];
        out.insert({b.creator, s.B.index(o), b.payload});
    }
    return out;
}

GDConfig sigma(const CGDConfig& c)
{
    GDConfig g = GDConfig::initial(c.agents);
    for (const auto& [p, s] : c.states) g.states[p] = sigma_local(s);
    return g;
}

namespace {

std::uint32_t index_before(const Blocklace& B, const Block& b)
{
    if (b.initial()) return 1;
    auto pred = B.find(b.self_pointers().front()->digest);
    if (!pred) throw std::runtime_error("sigma: self-predecessor of " + b.digest().short_hex() + " not held");
    return B.index(*pred) + 1;
}

std::optional<GDTransition> image(const CGDTransition& t, std::uint32_t index)
{
    const Block& b = *t.block;
    SimpleBlock sb{b.creator, index, b.payload};
    switch (t.kind) {
    case CGDKind::Create: return GDTransition{GDKind::Create, t.actor, sb, std::nullopt};
    case CGDKind::Follow: return GDTransition{GDKind::Follow, t.actor, sb, std::nullopt};
    case CGDKind::Receive: return GDTransition{GDKind::QSent, t.actor, sb, t.peer};
    default: return std::nullopt;
    }
}

}  // namespace

std::optional<GDTransition> sigma_step(const CGDConfig& before, const CGDTransition& t)
{
    if (t.kind == CGDKind::Offer || t.kind == CGDKind::Send) return std::nullopt;
    if (!t.block) throw std::invalid_argument("sigma_step: transition has no block");
    const auto& s = before.at(t.actor);
    if (s.B.contains(t.block->digest())) return std::nullopt;
    auto img = image(t, index_before(s.B, *t.block));
    if (img && sigma_local(s).count(img->block)) return std::nullopt;  // only an equivocation can collide
    return img;
}

SigmaRun sigma_run(const CGDConfig& c0, const std::vector<CGDTransition>& steps)
{
    SigmaRun r;
    r.initial = sigma(c0);
    GDConfig cur = r.initial;
    std::unordered_map<Digest, std::uint32_t> idx;
    for (const auto& [p, s] : c0.states)
        for (Ord o = 0; o < s.B.size(); ++o) idx[s.B[o].digest()] = s.B.index(o);
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const auto& t = steps[i];
        if (t.kind == CGDKind::Offer || t.kind == CGDKind::Send) {
            ++r.stutters;
            continue;
        }
        const Block& b = *t.block;
        std::uint32_t k = 1;
        if (auto it = idx.find(b.digest()); it != idx.end()) {
            k = it->second;
        } else if (!b.initial()) {
            auto pred = idx.find(b.self_pointers().front()->digest);
            if (pred == idx.end()) throw std::runtime_error("sigma_run: unknown self-predecessor at step " + std::to_string(i));
            k = pred->second + 1;
        }
        idx[b.digest()] = k;
        auto img = image(t, k);
        if (!img || !cur.states.at(t.actor).insert(img->block).second) {
            ++r.stutters;
            continue;
        }
        r.steps.push_back(*img);
        r.origin.push_back(i);
    }
    return r;
}

nlohmann::json to_json(const Violation& v)
{
    nlohmann::json j{{"check", v.check}, {"configuration", v.configuration}, {"clause", v.clause}, {"details", v.details}};
    j["transition"] = v.transition ? nlohmann::json(*v.transition) : nlohmann::json(nullptr);
    return j;
}

bool check_piecemeal(const CGDConfig& c)
{
    // Indices from the union of all blocklaces, independent of any one store.
    std::unordered_map<Digest, const Block*> all;
    for (const auto& [p, s] : c.states)
        for (const auto& b : s.B.blocks()) all.emplace(b->digest(), b.get());
    std::unordered_map<Digest, std::uint32_t> memo;
    std::function<std::uint32_t(const Block&)> idx = [&](const Block& b) -> std::uint32_t {
        if (b.initial()) return 1;
        if (auto it = memo.find(b.digest()); it != memo.end()) return it->second;
        auto it = all.find(b.self_pointers().front()->digest);
        if (it == all.end()) throw std::runtime_error("piecemeal: broken self-path");
        return memo[b.digest()] = idx(*it->second) + 1;
    };
    for (const auto& [p, s] : c.states) {
        GDLocal whole;
        for (const auto& b : s.B.blocks()) whole.insert({b->creator, idx(*b), b->payload});
        if (whole != sigma_local(s)) return false;
    }
    return true;
}

bool check_up_condition(const CGDConfig& c1, const CGDConfig& c2)
{
    if (!cgd_below(c1, c2)) return true;
    return below(sigma(c1), sigma(c2));
}

std::vector<Violation> check_local_safety(const CGDConfig& c0, const std::vector<CGDTransition>& steps)
{
    std::vector<Violation> out;
    SigmaRun r;
    try {
        r = sigma_run(c0, steps);
    } catch (const std::exception& e) {
        out.push_back({"local-safety", 0, std::nullopt, "sigma undefined", e.what()});
        return out;
    }
    std::vector<char> stutter(steps.size(), 1);
    for (auto i : r.origin) stutter[i] = 0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        bool silent = steps[i].kind == CGDKind::Offer || steps[i].kind == CGDKind::Send;
        if (silent != bool(stutter[i]))
            out.push_back({"stutter-soundness", i, i, silent ? "Offer/Send changed the image" : "block step was a stutter",
                           describe(steps[i])});
    }
    GDConfig cur = r.initial;
    for (std::size_t k = 0; k < r.steps.size(); ++k) {
        if (auto why = gd_check(cur, r.steps[k]))
            out.push_back({"local-safety", r.origin[k], r.origin[k], *why, describe(r.steps[k])});
        simple_apply_unchecked(cur, r.steps[k]);
    }
    return out;
}

std::vector<ObligationStatus> productivity_report(const CGDConfig& c)
{
    std::vector<ObligationStatus> out;
    auto img = sigma(c);
    std::map<SimpleBlock, std::pair<AgentId, Ord>> concrete;
    for (const auto& [q, s] : c.states)
        for (Ord o = 0; o < s.B.size(); ++o) concrete.emplace(SimpleBlock{s.B[o].creator, s.B.index(o), s.B[o].payload}, std::pair{q, o});
    for (const auto& p : c.agents) {
        for (const auto& sb : delivery_obligations(SimpleProtocol::GD, img, p)) {
            std::string status = "unmatched";
            auto it = concrete.find(sb);
            if (it != concrete.end()) {
                const Block& b = c.at(it->second.first).B[it->second.second];
                auto any = [&](auto pred) {
                    return std::any_of(c.agents.begin(), c.agents.end(), [&](const AgentId& q) { return q != p && pred(q); });
                };
                const auto& Bp = c.at(p).B;
                if (any([&](const AgentId& q) { return receive_enabled(c, p, q, b); }))
                    status = "receive-enabled";
                else if (any([&](const AgentId& q) { return c.at(q).sent(p, b.digest()); }))
                    status = "in-flight";
                else if (any([&](const AgentId& q) {
                             auto o = c.at(q).B.find(b.digest());
                             return o && send_enabled(c, q, p, *o);
                         }))
                    status = "send-enabled";
                else if (Bp.has_creator(sb.creator) && !Bp.follows(p, sb.creator))
                    status = "create-pending";
            }
            out.push_back({p, sb, status});
        }
    }
    return out;
}

// ---- cordial dependency graphs ----

std::optional<std::size_t> DependencyGraphCGD::vertex(const CVertex& v) const
{
    auto it = std::lower_bound(vertices.begin(), vertices.end(), v);
    if (it == vertices.end() || !(*it == v)) return std::nullopt;
    return std::size_t(it - vertices.begin());
}

bool DependencyGraphCGD::acyclic() const
{
    std::vector<std::size_t> deg(vertices.size(), 0);
    std::vector<std::vector<std::size_t>> rev(vertices.size());
    for (auto [a, b] : edges) {
        ++deg[a];
        rev[b].push_back(a);
    }
    std::vector<std::size_t> ready;
    for (std::size_t v = 0; v < vertices.size(); ++v)
        if (!deg[v]) ready.push_back(v);
    std::size_t done = 0;
    while (!ready.empty()) {
        auto v = ready.back();
        ready.pop_back();
        ++done;
        for (auto d : rev[v])
            if (--deg[d] == 0) ready.push_back(d);
    }
    return done == vertices.size();
}

bool cgd_consistent(const CGDConfig& c)
{
    for (const auto& [q, s] : c.states)
        for (const auto& b : s.B.blocks()) {
            auto it = c.states.find(b->creator);
            if (it == c.states.end() || !it->second.B.contains(b->digest())) return false;
        }
    return true;
}

bool cgd_complete(const CGDConfig& c)
{
    for (const auto& [p, s] : c.states)
        if (!s.B.is_closed(p)) return false;
    return true;
}

namespace {

using Receipts = std::map<std::pair<AgentId, Digest>, AgentId>;

std::vector<CVertex> cvertices(const CGDConfig& c)
{
    std::vector<CVertex> v;
    for (const auto& [p, s] : c.states) {
        for (const auto& b : s.B.blocks()) v.push_back({p, b->digest(), std::nullopt});
        for (const auto& [q, d] : s.outbox()) v.push_back({p, d, q});
    }
    std::sort(v.begin(), v.end());
    return v;
}

// Closure targets of a block occurrence, as held digests.
std::vector<Digest> closure_targets(const CGDLocalState& s, const Block& b)
{
    std::vector<Digest> out;
    for (const auto& h : b.pointers)
        if ((b.creator == s.owner() || h.creator == b.creator) && s.B.contains(h.digest)) out.push_back(h.digest);
    return out;
}

DependencyGraphCGD build(const CGDConfig& c, const Receipts& receipts)
{
    DependencyGraphCGD g;
    g.vertices = cvertices(c);
    auto link = [&](std::size_t from, const CVertex& to) {
        if (auto v = g.vertex(to))
            g.edges.emplace_back(from, *v);
        else
            g.defects.push_back("missing dependency of " + g.vertices[from].block.short_hex() + " at " +
                                g.vertices[from].holder.short_hex());
    };
    for (std::size_t i = 0; i < g.vertices.size(); ++i) {
        const auto v = g.vertices[i];
        const auto& s = c.at(v.holder);
        if (v.dest) {
            link(i, {v.holder, v.block, std::nullopt});
            continue;
        }
        const Block& b = s.B[*s.B.find(v.block)];
        for (const auto& d : closure_targets(s, b)) link(i, {v.holder, d, std::nullopt});
        if (b.creator == v.holder) continue;
        auto r = receipts.find({v.holder, v.block});
        if (r == receipts.end()) {
            g.defects.push_back("no receipt for " + v.block.short_hex() + " at " + v.holder.short_hex());
            continue;
        }
        link(i, {r->second, v.block, v.holder});
    }
    std::sort(g.edges.begin(), g.edges.end());
    g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
    return g;
}

struct CGreedy {
    const CGDConfig& c;
    std::set<CVertex> done;
    Receipts receipts;

    bool ready(const CVertex& v, std::optional<AgentId>& from) const
    {
        if (v.dest) return done.count({v.holder, v.block, std::nullopt}) != 0;
        const auto& s = c.at(v.holder);
        const Block& b = s.B[*s.B.find(v.block)];
        for (const auto& d : closure_targets(s, b))
            if (!done.count({v.holder, d, std::nullopt})) return false;
        if (b.creator == v.holder) return true;
        for (const auto& q : c.agents)
            if (q != v.holder && done.count({q, v.block, v.holder})) {
                from = q;
                return true;
            }
        return false;
    }

    bool run(const std::vector<CVertex>& targets)
    {
        std::vector<CVertex> todo;
        for (const auto& v : targets)
            if (!done.count(v)) todo.push_back(v);
        while (!todo.empty()) {
            bool progressed = false;
            for (auto it = todo.begin(); it != todo.end(); ++it) {
                std::optional<AgentId> from;
                if (!ready(*it, from)) continue;
                done.insert(*it);
                if (from) receipts[{it->holder, it->block}] = *from;
                todo.erase(it);
                progressed = true;
                break;
            }
            if (!progressed) return false;
        }
        return true;
    }
};

}  // namespace

DependencyGraphCGD cgd_dependency_graph(const CGDConfig& c0, const std::vector<CGDTransition>& steps)
{
    CGDConfig c = c0;
    Receipts receipts;
    for (const auto& t : steps) {
        cgd_apply_unchecked(c, t);
        if ((t.kind == CGDKind::Receive || t.kind == CGDKind::Follow) && t.peer)
            receipts[{t.actor, t.block->digest()}] = *t.peer;
    }
    // Occurrences already in c0 take any message that could have delivered them.
    for (const auto& [p, s] : c0.states)
        for (const auto& b : s.B.blocks()) {
            if (b->creator == p || receipts.count({p, b->digest()})) continue;
            for (const auto& q : c0.agents)
                if (q != p && c0.at(q).sent(p, b->digest())) {
                    receipts[{p, b->digest()}] = q;
                    break;
                }
        }
    return build(c, receipts);
}

std::optional<DependencyGraphCGD> find_cordial_graph(const CGDConfig& c)
{
    if (!cgd_consistent(c) || !cgd_complete(c)) return std::nullopt;
    CGreedy g{c, {}, {}};
    if (!g.run(cvertices(c))) return std::nullopt;
    return build(c, g.receipts);
}

bool is_cordial_consistent(const CGDConfig& c) { return find_cordial_graph(c).has_value(); }

std::optional<std::string> cgd_precedes(const CGDConfig& c, const CGDConfig& c2)
{
    if (c.agents != c2.agents) return "agent universes differ";
    for (const auto& p : c.agents) {
        const auto& s = c.at(p);
        const auto& s2 = c2.at(p);
        for (const auto& b : s.B.blocks())
            if (!s2.B.contains(b->digest())) return "c is not below c2 at agent " + p.short_hex() + " (blocklace)";
        for (const auto& [q, d] : s.outbox())
            if (!s2.sent(q, d)) return "c is not below c2 at agent " + p.short_hex() + " (outbox)";
    }
    if (!cgd_consistent(c)) return "c is not consistent";
    if (!cgd_complete(c)) return "c is not complete";
    if (!cgd_consistent(c2)) return "c2 is not consistent";
    if (!cgd_complete(c2)) return "c2 is not complete";
    // A non-initial Create covers all of B, so a later own block must observe
    // everything p held in c.
    for (const auto& p : c.agents) {
        const auto& B2 = c2.at(p).B;
        const auto& B = c.at(p).B;
        for (auto o : B2.blocks_of(p)) {
            if (B2[o].initial() || B.contains(B2[o].digest())) continue;
            for (const auto& b : B.blocks())
                if (!B2.observes(o, *B2.find(b->digest())))
                    return "new block of agent " + p.short_hex() + " does not observe its blocklace in c";
        }
    }
    CGreedy g{c2, {}, {}};
    if (!g.run(cvertices(c))) return "c is not cordial-dissemination-consistent";
    if (!g.run(cvertices(c2))) return "c2 has no acyclic dependency graph extending one of c";
    return std::nullopt;
}

namespace {

// The transition that would add occurrence v at cur, if one is enabled now.
std::optional<CGDTransition> enabled_for(const CGDConfig& cur, const CGDConfig& target, const CVertex& v)
{
    const AgentId& p = v.holder;
    if (v.dest) {
        auto o = cur.at(p).B.find(v.block);
        if (!o) return std::nullopt;
        auto b = cur.at(p).B.ptr(*o);
        for (auto k : {CGDKind::Offer, CGDKind::Send}) {
            if (k == CGDKind::Offer && !b->initial()) continue;
            CGDTransition t{k, p, b, std::nullopt, v.dest};
            if (!cgd_check(cur, t)) return t;
        }
        return std::nullopt;
    }
    const auto& B2 = target.at(p).B;
    auto b = B2.ptr(*B2.find(v.block));
    if (b->creator == p) {
        CGDTransition t{CGDKind::Create, p, b, b->payload, std::nullopt};
        if (!cgd_check(cur, t)) return t;
        return std::nullopt;
    }
    CGDKind k = b->initial() ? CGDKind::Follow : CGDKind::Receive;
    for (const auto& q : cur.agents) {
        if (q == p) continue;
        CGDTransition t{k, p, b, std::nullopt, q};
        if (!cgd_check(cur, t)) return t;
    }
    return std::nullopt;
}

struct Search {
    const CGDConfig& target;
    std::vector<CVertex> actions;
    std::set<std::vector<bool>> failed;
    std::vector<CGDTransition> plan;

    bool dfs(const CGDConfig& cur, std::vector<bool>& done, std::size_t left)
    {
        if (left == 0) return true;
        if (failed.count(done)) return false;
        for (std::size_t i = 0; i < actions.size(); ++i) {
            if (done[i]) continue;
            auto t = enabled_for(cur, target, actions[i]);
            if (!t) continue;
            CGDConfig next = cur;
            cgd_apply_unchecked(next, *t);
            done[i] = true;
            plan.push_back(*t);
            if (dfs(next, done, left - 1)) return true;
            plan.pop_back();
            done[i] = false;
        }
        failed.insert(done);
        return false;
    }
};

}  // namespace

std::vector<CGDTransition> cgd_plan(const CGDConfig& c, const CGDConfig& c2)
{
    if (auto why = cgd_precedes(c, c2)) throw PlanError(*why);
    auto have = cvertices(c);
    Search s{c2, {}, {}, {}};
    for (const auto& v : cvertices(c2))
        if (!std::binary_search(have.begin(), have.end(), v)) s.actions.push_back(v);
    std::vector<bool> done(s.actions.size(), false);
    if (!s.dfs(c, done, s.actions.size())) throw PlanError("no enabled ordering of the missing occurrences");
    return s.plan;
}

}  // namespace gdiss
