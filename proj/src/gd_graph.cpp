#include "gdiss/gd_graph.hpp"

#include <algorithm>
#include <set>

namespace gdiss {

std::optional<std::size_t> DependencyGraphGD::vertex(const Occurrence& o) const
{
    auto it = std::lower_bound(vertices.begin(), vertices.end(), o);
    if (it == vertices.end() || !(*it == o)) return std::nullopt;
    return static_cast<std::size_t>(it - vertices.begin());
}

bool DependencyGraphGD::acyclic() const
{
    std::vector<std::size_t> out_degree(vertices.size(), 0);
    std::vector<std::vector<std::size_t>> dependents(vertices.size());
    for (auto [from, to] : edges) {
        ++out_degree[from];
        dependents[to].push_back(from);
    }
    std::vector<std::size_t> ready;
    for (std::size_t v = 0; v < vertices.size(); ++v)
        if (out_degree[v] == 0) ready.push_back(v);
    std::size_t done = 0;
    while (!ready.empty()) {
        auto v = ready.back();
        ready.pop_back();
        ++done;
        for (auto d : dependents[v])
            if (--out_degree[d] == 0) ready.push_back(d);
    }
    return done == vertices.size();
}

namespace {

std::vector<Occurrence> occurrences(const GDConfig& c)
{
    std::vector<Occurrence> v;
    for (const auto& [p, s] : c.states)
        for (const auto& b : s) v.push_back({b, p});
    std::sort(v.begin(), v.end());
    return v;
}

std::optional<SimpleBlock> predecessor_at(const GDLocal& s, const SimpleBlock& b)
{
    auto it = s.lower_bound(SimpleBlock{b.creator, b.index - 1, std::nullopt});
    if (it != s.end() && it->creator == b.creator && it->index == b.index - 1) return *it;
    return std::nullopt;
}

SimpleBlock initial_of(const AgentId& q) { return SimpleBlock{q, 1, std::nullopt}; }

struct Greedy {
    const GDConfig& c;
    std::set<Occurrence> scheduled;
    std::vector<Occurrence> order;
    std::map<Occurrence, AgentId> parent;

    std::optional<AgentId> ready(const Occurrence& o, bool& ok) const
    {
        ok = false;
        const auto& b = o.block;
        if (b.index == 1) {
            ok = true;
            return std::nullopt;
        }
        auto pred = predecessor_at(c.at(o.holder), b);
        if (!pred || !scheduled.count({*pred, o.holder})) return std::nullopt;
        if (o.holder == b.creator) {
            ok = true;
            return std::nullopt;
        }
        for (const auto& q : c.agents) {
            if (q == o.holder) continue;
            if (!scheduled.count({b, q})) continue;
            if (!scheduled.count({initial_of(q), o.holder})) continue;
            if (!scheduled.count({initial_of(o.holder), q})) continue;
            ok = true;
            return q;
        }
        return std::nullopt;
    }

    /// Schedules as much of `targets` as possible, smallest ready occurrence first.
    bool run(const std::vector<Occurrence>& targets)
    {
        std::vector<Occurrence> todo;
        for (const auto& o : targets)
            if (!scheduled.count(o)) todo.push_back(o);
        while (!todo.empty()) {
            bool progressed = false;
            for (auto it = todo.begin(); it != todo.end(); ++it) {
                bool ok = false;
                auto q = ready(*it, ok);
                if (!ok) continue;
                scheduled.insert(*it);
                order.push_back(*it);
                if (q) parent[*it] = *q;
                todo.erase(it);
                progressed = true;
                break;
            }
            if (!progressed) return false;
        }
        return true;
    }

    DependencyGraphGD graph() const
    {
        ReceiptMap receipts;
        for (const auto& [o, q] : parent) receipts[{o.holder, o.block}] = q;
        GDConfig sub = GDConfig::initial(c.agents);
        for (const auto& o : order) sub.states[o.holder].insert(o.block);
        return gd_dependency_graph(sub, receipts);
    }
};

}  // namespace

DependencyGraphGD gd_dependency_graph(const GDConfig& c, const ReceiptMap& receipts)
{
    DependencyGraphGD g;
    g.vertices = occurrences(c);
    auto link = [&](std::size_t from, const Occurrence& to, const char* what) {
        if (auto v = g.vertex(to))
            g.edges.emplace_back(from, *v);
        else
            g.defects.push_back(std::string(what) + " missing for " + describe(g.vertices[from].block) + " at " +
                                g.vertices[from].holder.short_hex());
    };
    for (std::size_t i = 0; i < g.vertices.size(); ++i) {
        const auto o = g.vertices[i];
        const auto& b = o.block;
        if (b.index == 1) continue;
        auto pred = predecessor_at(c.at(o.holder), b);
        if (o.holder == b.creator) {
            if (pred)
                link(i, {*pred, o.holder}, "predecessor");
            else
                g.defects.push_back("predecessor missing for " + describe(b));
            continue;
        }
        auto r = receipts.find({o.holder, b});
        if (r == receipts.end()) {
            g.defects.push_back("no receipt for " + describe(b) + " at " + o.holder.short_hex());
            continue;
        }
        const AgentId& q = r->second;
        link(i, {b, q}, "source occurrence");
        link(i, {initial_of(q), o.holder}, "friendship (source initial at holder)");
        link(i, {initial_of(o.holder), q}, "friendship (holder initial at source)");
        if (pred)
            link(i, {*pred, o.holder}, "predecessor");
        else
            g.defects.push_back("predecessor missing for " + describe(b) + " at " + o.holder.short_hex());
    }
    if (!c.states.empty() && !is_consistent(c)) g.defects.push_back("configuration is not consistent");
    std::sort(g.edges.begin(), g.edges.end());
    g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
    return g;
}

DependencyGraphGD gd_dependency_graph(const GDConfig& c0, const std::vector<GDTransition>& steps)
{
    GDConfig c = c0;
    ReceiptMap receipts;
    for (const auto& t : steps) {
        simple_apply_unchecked(c, t);
        if (t.kind == GDKind::QSent && t.source) receipts[{t.actor, t.block}] = *t.source;
    }
    return gd_dependency_graph(c, receipts);
}

std::optional<DependencyGraphGD> find_dependency_graph(const GDConfig& c)
{
    if (!is_consistent(c) || !is_complete(c)) return std::nullopt;
    Greedy g{c, {}, {}, {}};
    if (!g.run(occurrences(c))) return std::nullopt;
    return g.graph();
}

bool is_dissemination_consistent(const GDConfig& c) { return find_dependency_graph(c).has_value(); }

std::optional<std::string> gd_precedes(const GDConfig& c, const GDConfig& c2)
{
    if (c.agents != c2.agents) return "agent universes differ";
    for (const auto& p : c.agents) {
        const auto& s = c.at(p);
        const auto& s2 = c2.at(p);
        if (!std::includes(s2.begin(), s2.end(), s.begin(), s.end()))
            return "c is not below c2 at agent " + p.short_hex();
    }
    if (!is_consistent(c)) return "c is not consistent";
    if (!is_complete(c)) return "c is not complete";
    if (!is_consistent(c2)) return "c2 is not consistent";
    if (!is_complete(c2)) return "c2 is not complete";
    for (const auto& [p, s] : c2.states)
        for (const auto& b : s)
            if (b.index == 1 && b.payload) return "initial block with a payload: " + describe(b);
    Greedy g{c2, {}, {}, {}};
    if (!g.run(occurrences(c))) return "c is not dissemination-consistent";
    if (!g.run(occurrences(c2))) return "c2 has no acyclic dependency graph extending one of c";
    return std::nullopt;
}

std::vector<GDTransition> gd_plan(const GDConfig& c, const GDConfig& c2)
{
    if (auto why = gd_precedes(c, c2)) throw PlanError(*why);
    Greedy g{c2, {}, {}, {}};
    g.run(occurrences(c));
    std::size_t first_new = g.order.size();
    g.run(occurrences(c2));
    std::vector<GDTransition> plan;
    for (std::size_t i = first_new; i < g.order.size(); ++i) {
        const auto& o = g.order[i];
        if (o.holder == o.block.creator)
            plan.push_back({GDKind::Create, o.holder, o.block, std::nullopt});
        else if (o.block.index == 1)
            plan.push_back({GDKind::Follow, o.holder, o.block, std::nullopt});
        else
            plan.push_back({GDKind::QSent, o.holder, o.block, g.parent.at(o)});
    }
    return plan;
}

}  // namespace gdiss
