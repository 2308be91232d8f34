#include "doctest.h"
#include "gd_enum.hpp"
#include "gdiss/gd.hpp"
#include "gdiss/gd_graph.hpp"
#include "helpers.hpp"

#include <algorithm>
#include <random>

using namespace gdiss;
using testing_util::ident;
using testing_util::reachable_configs;
using testing_util::text;

namespace {

AgentId id_of(const std::string& name) { return ident(name).id; }

SimpleBlock init(const AgentId& p) { return {p, 1, std::nullopt}; }

bool has(const std::vector<GDTransition>& ts, const GDTransition& t)
{
    return std::find(ts.begin(), ts.end(), t) != ts.end();
}

// Replays with the checked apply; returns the failing step or nullopt.
std::optional<std::string> replay(SimpleProtocol proto, GDConfig& c, const std::vector<GDTransition>& plan)
{
    for (const auto& t : plan) {
        if (auto why = simple_check(proto, c, t)) return *why + " at " + describe(t);
        simple_apply_unchecked(c, t);
    }
    return std::nullopt;
}

// The six-step exchange: both create, both follow each other, q extends, p receives.
std::vector<GDTransition> exchange(const AgentId& p, const AgentId& q)
{
    SimpleBlock q2{q, 2, text("x")};
    return {
        {GDKind::Create, p, init(p), std::nullopt},
        {GDKind::Create, q, init(q), std::nullopt},
        {GDKind::Follow, p, init(q), std::nullopt},
        {GDKind::Follow, q, init(p), std::nullopt},
        {GDKind::Create, q, q2, std::nullopt},
        {GDKind::QSent, p, q2, q},
    };
}

}  // namespace

TEST_SUITE("gd")
{
    TEST_CASE("initial configuration offers Create and Follow only")
    {
        auto p = id_of("p"), q = id_of("q"), r = id_of("r");
        auto c0 = GDConfig::initial({p, q, r});
        auto en = gd_enabled(c0, p);
        CHECK(en.size() == 3);
        CHECK(has(en, {GDKind::Create, p, init(p), std::nullopt}));
        CHECK(has(en, {GDKind::Follow, p, init(q), std::nullopt}));
        CHECK(has(en, {GDKind::Follow, p, init(r), std::nullopt}));

        auto ad = ad_enabled(c0, p);
        REQUIRE(ad.size() == 1);
        CHECK(ad[0].kind == GDKind::Create);
    }

    TEST_CASE("friendship and predecessor gate QSent")
    {
        auto p = id_of("p"), q = id_of("q");
        auto c = GDConfig::initial({p, q});
        c.states[p] = {init(p), init(q)};
        c.states[q] = {init(p), init(q), {q, 2, text("x")}};
        CHECK(has(gd_enabled(c, p), {GDKind::QSent, p, {q, 2, text("x")}, q}));

        c.states[p].erase(init(q));
        for (const auto& t : gd_enabled(c, p)) CHECK(t.kind != GDKind::QSent);
        CHECK(*gd_check(c, {GDKind::QSent, p, {q, 2, text("x")}, q}) == "QSent: actor lacks the predecessor block");
    }

    TEST_CASE("AD has no friendship guard and allows payload on initial blocks")
    {
        auto p = id_of("p"), q = id_of("q");
        auto c = GDConfig::initial({p, q});
        c.states[q] = {{q, 1, text("x")}};
        CHECK_FALSE(ad_check(c, {GDKind::QSent, p, {q, 1, text("x")}, q}));
        CHECK(gd_check(c, {GDKind::QSent, p, {q, 1, text("x")}, q}));
        CHECK_FALSE(ad_check(GDConfig::initial({p, q}), {GDKind::Create, p, {p, 1, text("y")}, std::nullopt}));
        CHECK(gd_check(GDConfig::initial({p, q}), {GDKind::Create, p, {p, 1, text("y")}, std::nullopt}));
        CHECK(ad_check(c, {GDKind::Follow, p, init(q), std::nullopt}));
    }

    TEST_CASE("AD obligations are exactly the deliverable blocks")
    {
        auto p = id_of("p"), q = id_of("q"), r = id_of("r");
        auto c = GDConfig::initial({p, q, r});
        c.states[q] = {{q, 1, text("a")}, {q, 2, text("b")}};
        c.states[r] = {{r, 1, std::nullopt}, {q, 1, text("a")}};
        // p can take q1 (from q or r) and r1; q2 needs q1 first.
        std::vector<SimpleBlock> want{{q, 1, text("a")}, {r, 1, std::nullopt}};
        std::sort(want.begin(), want.end());
        CHECK(delivery_obligations(SimpleProtocol::AD, c, p) == want);
    }

    TEST_CASE("apply grows one state and rejects repeats")
    {
        auto p = id_of("p"), q = id_of("q");
        auto c0 = GDConfig::initial({p, q});
        GDTransition t{GDKind::Create, p, init(p), std::nullopt};
        auto c1 = gd_apply(c0, t);
        CHECK(c1.at(p) == GDLocal{init(p)});
        CHECK(c1.at(q).empty());
        try {
            gd_apply(c1, t);
            FAIL("expected rejection");
        } catch (const TransitionError& e) {
            CHECK(std::string(e.what()).find("transition not enabled") == 0);
            CHECK(e.clause == "block already held");
        }
    }

    TEST_CASE("six-step exchange reaches the expected configuration")
    {
        auto p = id_of("p"), q = id_of("q");
        auto c = GDConfig::initial({p, q});
        for (const auto& t : exchange(p, q)) c = gd_apply(c, t);
        GDLocal both{init(p), init(q), {q, 2, text("x")}};
        CHECK(c.at(p) == both);
        CHECK(c.at(q) == both);
        CHECK(is_consistent(c));
        CHECK(is_complete(c));
    }

    TEST_CASE("run-derived dependency graph of the exchange")
    {
        auto p = id_of("p"), q = id_of("q");
        auto g = gd_dependency_graph(GDConfig::initial({p, q}), exchange(p, q));
        CHECK(g.valid());
        SimpleBlock q2{q, 2, text("x")};
        auto at = [&](const SimpleBlock& b, const AgentId& h) { return *g.vertex({b, h}); };
        std::set<std::pair<std::size_t, std::size_t>> edges(g.edges.begin(), g.edges.end());
        std::set<std::pair<std::size_t, std::size_t>> want{
            {at(q2, p), at(q2, q)},       // receipt
            {at(q2, p), at(init(q), p)},  // friendship, and predecessor at p
            {at(q2, p), at(init(p), q)},  // friendship
            {at(q2, q), at(init(q), q)},  // creator's own predecessor
        };
        CHECK(edges == want);
        CHECK(find_dependency_graph(GDConfig::initial({p, q})).has_value());
        CHECK(find_dependency_graph(GDConfig::initial({p, q}))->vertices.empty());
    }

    TEST_CASE("mutual first receipt annotation is cyclic")
    {
        auto p = id_of("p"), q = id_of("q"), r = id_of("r");
        SimpleBlock r2{r, 2, text("z")};
        auto c = GDConfig::initial({p, q, r});
        for (const auto& a : {p, q, r}) c.states[a] = {init(p), init(q), init(r)};
        c.states[p].insert(r2);
        c.states[q].insert(r2);
        c.states[r].insert(r2);
        ReceiptMap bad{{{p, r2}, q}, {{q, r2}, p}};
        auto g = gd_dependency_graph(c, bad);
        CHECK(g.defects.empty());
        CHECK_FALSE(g.acyclic());
        CHECK_FALSE(g.valid());

        ReceiptMap good{{{p, r2}, r}, {{q, r2}, p}};
        CHECK(gd_dependency_graph(c, good).valid());
        CHECK(is_dissemination_consistent(c));
    }

    TEST_CASE("a block held without the friendship that could deliver it has no graph")
    {
        auto p = id_of("p"), q = id_of("q");
        auto c = GDConfig::initial({p, q});
        c.states[q] = {init(q), {q, 2, text("x")}};
        c.states[p] = {init(q), {q, 2, text("x")}};  // p never created its own initial block
        CHECK(is_consistent(c));
        CHECK(is_complete(c));
        CHECK_FALSE(is_dissemination_consistent(c));
    }

    TEST_CASE("planner examples")
    {
        auto p = id_of("p"), q = id_of("q");
        auto c0 = GDConfig::initial({p, q});
        CHECK(gd_plan(c0, c0).empty());

        auto c2 = c0;
        c2.states[p] = {init(p), init(q)};
        c2.states[q] = {init(p), init(q)};
        auto plan = gd_plan(c0, c2);
        CHECK(plan.size() == 4);
        CHECK(std::count_if(plan.begin(), plan.end(), [](auto& t) { return t.kind == GDKind::Create; }) == 2);
        CHECK(std::count_if(plan.begin(), plan.end(), [](auto& t) { return t.kind == GDKind::Follow; }) == 2);
        auto c = c0;
        CHECK_FALSE(replay(SimpleProtocol::GD, c, plan));
        CHECK(c == c2);
    }

    TEST_CASE("planner names the violated precondition")
    {
        auto p = id_of("p"), q = id_of("q");
        auto c0 = GDConfig::initial({p, q});
        auto c1 = c0;
        c1.states[p] = {init(p)};
        auto clause = [&](const GDConfig& a, const GDConfig& b) {
            try {
                gd_plan(a, b);
                return std::string("none");
            } catch (const PlanError& e) {
                return e.clause;
            }
        };
        CHECK(clause(c1, c0).find("not below") != std::string::npos);

        auto inconsistent = c0;
        inconsistent.states[q] = {init(p), {p, 2, text("x")}};
        CHECK(clause(c0, inconsistent) == "c2 is not consistent");

        auto incomplete = c0;
        incomplete.states[p] = {{p, 2, text("x")}};
        CHECK(clause(c0, incomplete) == "c2 is not complete");

        auto loaded = c0;
        loaded.states[p] = {{p, 1, text("x")}};
        CHECK(clause(c0, loaded).find("initial block with a payload") == 0);

        auto orphan = c0;
        orphan.states[q] = {init(q), {q, 2, text("x")}};
        orphan.states[p] = {init(q), {q, 2, text("x")}};
        CHECK(clause(c0, orphan).find("no acyclic dependency graph") != std::string::npos);
        CHECK(clause(orphan, orphan) == "c is not dissemination-consistent");
    }

    TEST_CASE("planner replays every reachable pair on three agents")
    {
        std::vector<AgentId> agents{id_of("a"), id_of("b"), id_of("c")};
        auto all = reachable_configs(SimpleProtocol::GD, agents, 3);
        MESSAGE("reachable configurations: " << all.size());
        std::mt19937_64 rng(7);
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < all.size(); i += 1 + rng() % 7) {
            const auto& c = all[i];
            CHECK(is_dissemination_consistent(c));
            for (std::size_t j = rng() % 13; j < all.size(); j += 1 + rng() % 13) {
                if (!below(c, all[j])) continue;
                ++pairs;
                auto plan = gd_plan(c, all[j]);
                auto d = c;
                auto err = replay(SimpleProtocol::GD, d, plan);
                CHECK_MESSAGE(!err, *err);
                CHECK(d == all[j]);
            }
        }
        CHECK(pairs > 100);
    }

    TEST_CASE("frontier enumeration equals the exact one on reachable configurations")
    {
        std::vector<AgentId> agents{id_of("a"), id_of("b"), id_of("c")};
        for (auto proto : {SimpleProtocol::GD, SimpleProtocol::AD}) {
            for (const auto& c : reachable_configs(proto, agents, 3)) {
                for (const auto& p : agents) {
                    auto a = simple_enabled(proto, c, p);
                    auto b = simple_enabled_frontier(proto, c, p);
                    auto key = [](const GDTransition& t) {
                        return std::make_tuple(int(t.kind), t.block, t.source.value_or(AgentId{}));
                    };
                    auto by_key = [&](const GDTransition& x, const GDTransition& y) { return key(x) < key(y); };
                    std::sort(a.begin(), a.end(), by_key);
                    std::sort(b.begin(), b.end(), by_key);
                    REQUIRE(a == b);
                }
            }
        }
    }

    TEST_CASE("enabled transitions stay enabled when other agents grow")
    {
        std::vector<AgentId> agents{id_of("a"), id_of("b"), id_of("c"), id_of("d")};
        std::mt19937_64 rng(11);
        auto random_step = [&](GDConfig& c, std::optional<AgentId> skip) {
            std::vector<GDTransition> cand;
            for (const auto& p : c.agents)
                if (!skip || p != *skip)
                    for (auto& t : gd_enabled(c, p)) cand.push_back(t);
            if (cand.empty()) return;
            auto t = cand[rng() % cand.size()];
            if (t.kind == GDKind::Create && t.block.index > 1) t.block.payload = text(std::to_string(rng() % 5));
            c = gd_apply(c, t);
        };
        for (int trial = 0; trial < 60; ++trial) {
            auto c = GDConfig::initial(agents);
            for (int i = 0, n = int(rng() % 25); i < n; ++i) random_step(c, std::nullopt);
            for (const auto& p : agents) {
                auto before = gd_enabled(c, p);
                auto d = c;
                for (int i = 0; i < 15; ++i) random_step(d, p);
                CHECK(below(c, d));
                for (const auto& t : before) CHECK_FALSE(gd_check(d, t));
            }
        }
    }

    TEST_CASE("enabled steps preserve consistency and completeness and strictly grow")
    {
        std::vector<AgentId> agents{id_of("a"), id_of("b"), id_of("c")};
        std::mt19937_64 rng(3);
        for (int trial = 0; trial < 40; ++trial) {
            auto c = GDConfig::initial(agents);
            for (int i = 0; i < 30; ++i) {
                auto p = agents[rng() % agents.size()];
                auto en = gd_enabled(c, p);
                auto d = gd_apply(c, en[rng() % en.size()]);
                CHECK(below(c, d));
                CHECK(d.total_blocks() == c.total_blocks() + 1);
                CHECK(is_consistent(d));
                CHECK(is_complete(d));
                c = d;
            }
            CHECK(is_dissemination_consistent(c));
        }
    }
}
