#include "gdiss/sim.hpp"

#include <deque>
#include <random>
#include <set>

namespace gdiss {

std::vector<GDConfig> explore_simple(SimpleProtocol proto, const std::vector<AgentId>& agents, std::size_t cap)
{
    auto c0 = GDConfig::initial(agents);
    std::set<std::map<AgentId, GDLocal>> seen{c0.states};
    std::deque<GDConfig> todo{c0};
    std::vector<GDConfig> out;
    while (!todo.empty()) {
        auto c = std::move(todo.front());
        todo.pop_front();
        for (const auto& p : c.agents) {
            if (c.at(p).size() >= cap) continue;
            for (auto t : simple_enabled(proto, c, p)) {
                if (t.kind == GDKind::Create && t.block.index > 1) t.block.payload = Bytes{'x'};
                if (simple_check(proto, c, t)) continue;
                auto d = c;
                simple_apply_unchecked(d, t);
                if (seen.insert(d.states).second) todo.push_back(std::move(d));
            }
        }
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<CGDConfig> explore_cgd(const std::vector<AgentIdentity>& ids, std::size_t cap)
{
    std::vector<AgentId> agents;
    for (const auto& i : ids) agents.push_back(i.id);
    std::sort(agents.begin(), agents.end());
    using Key = std::vector<std::pair<std::vector<Digest>, std::vector<std::pair<AgentId, Digest>>>>;
    auto key = [](const CGDConfig& c) {
        Key k;
        for (const auto& [p, s] : c.states) {
            std::vector<Digest> ds;
            for (const auto& b : s.B.blocks()) ds.push_back(b->digest());
            std::sort(ds.begin(), ds.end());
            k.emplace_back(std::move(ds), s.outbox());
        }
        return k;
    };
    auto c0 = CGDConfig::initial(agents);
    std::set<Key> seen{key(c0)};
    std::deque<CGDConfig> todo{c0};
    std::vector<CGDConfig> out;
    while (!todo.empty()) {
        auto c = std::move(todo.front());
        todo.pop_front();
        for (const auto& id : ids) {
            bool full = c.at(id.id).B.size() >= cap;
            for (auto t : cgd_enabled(c, id.id)) {
                bool grows = t.kind == CGDKind::Create || t.kind == CGDKind::Follow || t.kind == CGDKind::Receive;
                if (full && grows) continue;
                if (t.kind == CGDKind::Create) t = materialize_create(c, id, t.payload ? Payload{Bytes{'x'}} : Payload{});
                if (cgd_check(c, t)) continue;
                auto d = c;
                cgd_apply_unchecked(d, t);
                if (seen.insert(key(d)).second) todo.push_back(std::move(d));
            }
        }
        out.push_back(std::move(c));
    }
    return out;
}

nlohmann::json GrassrootsReport::to_json() const
{
    return {{"protocol", to_string(protocol)},
            {"interleavings", interleavings},
            {"interleaving_safe", interleaving_safe},
            {"projections_roundtrip", projections_roundtrip},
            {"pending_in_embedding", pending_in_embedding},
            {"liveness_preserved", liveness_preserved},
            {"witness_found", witness_found},
            {"witness", witness},
            {"witness_impossible_alone", witness_impossible_alone},
            {"non_interfering", non_interfering}};
}

namespace {

bool same_steps(const Run& a, const Run& b)
{
    if (a.steps.size() != b.steps.size()) return false;
    for (std::size_t i = 0; i < a.steps.size(); ++i)
        if (a.steps[i].config != b.steps[i].config || describe(a.steps[i].t) != describe(b.steps[i].t)) return false;
    return true;
}

// Final configuration of a run, replayed without checks.
struct Final {
    GDConfig gd;
    std::optional<CGDConfig> cgd;
};

Final final_of(const Run& r)
{
    Final f;
    if (r.protocol == Protocol::CGD) {
        f.cgd = CGDConfig::initial(r.agents, r.scheme);
        for (const auto& s : r.steps) cgd_apply_unchecked(*f.cgd, std::get<CGDTransition>(s.t));
        f.gd = sigma(*f.cgd);
    } else {
        f.gd = GDConfig::initial(r.agents);
        for (const auto& s : r.steps) simple_apply_unchecked(f.gd, std::get<GDTransition>(s.t));
    }
    return f;
}

// Enabled delivery classes (QSent, or Send/Receive) of the given agents.
std::size_t obligations(Protocol proto, const Final& f, const std::vector<AgentId>& who)
{
    std::size_t n = 0;
    for (const auto& p : who) {
        if (proto == Protocol::CGD) {
            for (const auto& t : cgd_enabled(*f.cgd, p)) n += t.kind == CGDKind::Send || t.kind == CGDKind::Receive;
        } else {
            n += delivery_obligations(proto == Protocol::AD ? SimpleProtocol::AD : SimpleProtocol::GD, f.gd, p).size();
        }
    }
    return n;
}

bool holds_alien(const std::vector<AgentId>& group, const GDConfig& c)
{
    for (const auto& p : group)
        for (const auto& b : c.at(p))
            if (!std::binary_search(group.begin(), group.end(), b.creator)) return true;
    return false;
}

}  // namespace

GrassrootsReport grassroots_suite(Protocol proto, std::uint64_t seed, int schedules)
{
    GrassrootsReport rep;
    rep.protocol = proto;
    Policy fair{PolicyKind::Fair, seed, 64};

    // P1 = {a, b} befriend and exchange a few posts; P2 = {c} posts alone.
    Scenario s1;
    s1.protocol = proto;
    s1.agents = {"a", "b"};
    s1.friendships = {{"a", "b", 0}};
    s1.posts = {{"a", 5, "a1"}, {"b", 6, "b1"}, {"a", 12, "a2"}, {"b", 14, "b2"}};
    s1.quiescent_expected = true;
    Scenario s2;
    s2.protocol = proto;
    s2.agents = {"c"};
    s2.posts = {{"c", 2, "c1"}, {"c", 4, "c2"}};
    auto r1 = simulate(s1, fair, 1000).run;
    auto r2 = simulate(s2, fair, 1000).run;
    auto P1 = r1.agents;

    auto alone = obligations(proto, final_of(r1), P1);
    std::mt19937_64 rng(seed);
    for (int k = 0; k < schedules; ++k) {
        std::vector<bool> sched(r1.steps.size(), false);
        sched.resize(r1.steps.size() + r2.steps.size(), true);
        std::shuffle(sched.begin(), sched.end(), rng);
        auto r = interleave(r1, r2, sched);
        ++rep.interleavings;
        rep.interleaving_safe = rep.interleaving_safe && replay(r).ok;
        rep.projections_roundtrip =
            rep.projections_roundtrip && same_steps(project_run(r, r1.agents), r1) && same_steps(project_run(r, r2.agents), r2);
        auto embedded = obligations(proto, final_of(r), P1);
        if (embedded > alone) rep.pending_in_embedding = std::max(rep.pending_in_embedding, embedded - alone);
    }
    rep.liveness_preserved = rep.pending_in_embedding == 0;
    rep.non_interfering = rep.interleaving_safe && rep.projections_roundtrip && rep.liveness_preserved;

    // Interactivity: a befriends c; some P1 step then takes a c-block.
    Scenario s3 = s1;
    s3.agents = {"a", "b", "c"};
    s3.friendships.push_back({"a", "c", 0});
    s3.posts.insert(s3.posts.end(), s2.posts.begin(), s2.posts.end());
    auto r3 = simulate(s3, fair, 1000).run;
    for (const auto& s : r3.steps) {
        const auto& actor = actor_of(s.t);
        if (!std::binary_search(P1.begin(), P1.end(), actor)) continue;
        AgentId creator;
        bool adds = std::visit(
            [&](const auto& t) {
                using T = std::decay_t<decltype(t)>;
                if constexpr (std::is_same_v<T, GDTransition>) {
                    creator = t.block.creator;
                    return t.kind != GDKind::Create;
                } else {
                    creator = t.block->creator;
                    return t.kind == CGDKind::Follow || t.kind == CGDKind::Receive;
                }
            },
            s.t);
        if (adds && !std::binary_search(P1.begin(), P1.end(), creator)) {
            rep.witness_found = true;
            rep.witness = describe(s.t);
            break;
        }
    }
    // In TS(P1) alone no P1 state ever holds an alien block (micro instance).
    if (rep.witness_found) {
        bool reachable = false;
        if (proto == Protocol::CGD) {
            std::vector<AgentIdentity> ids{gen_identity(seed_from_name("a")), gen_identity(seed_from_name("b"))};
            for (const auto& c : explore_cgd(ids, 3)) reachable = reachable || holds_alien(P1, sigma(c));
        } else {
            for (const auto& c : explore_simple(proto == Protocol::AD ? SimpleProtocol::AD : SimpleProtocol::GD, P1, 3))
                reachable = reachable || holds_alien(P1, c);
        }
        rep.witness_impossible_alone = !reachable;
    }
    return rep;
}

}  // namespace gdiss
