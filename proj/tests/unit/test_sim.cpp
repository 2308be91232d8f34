#include "doctest.h"
#include "gdiss/sim.hpp"
#include "helpers.hpp"

#include <chrono>
#include <sstream>

using namespace gdiss;

namespace {

// Blocks of `creator` created before `tick` that `holder` lacks at the end.
std::size_t missing_before(const SimResult& res, const Scenario& sc, const std::string& creator, const std::string& holder,
                           std::uint64_t tick)
{
    auto cr = sc.id_of(creator);
    auto h = sc.id_of(holder);
    std::size_t miss = 0, total = 0;
    if (res.cgd_final) {
        const auto& Bc = res.cgd_final->at(cr).B;
        const auto& Bh = res.cgd_final->at(h).B;
        for (auto o : Bc.blocks_of(cr)) {
            if (res.created_at.at(Bc[o].digest().hex()) >= tick) continue;
            ++total;
            miss += !Bh.contains(Bc[o].digest());
        }
    } else {
        for (const auto& b : res.gd_final.at(cr)) {
            if (b.creator != cr || res.created_at.at(describe(b)) >= tick) continue;
            ++total;
            miss += !res.gd_final.at(h).count(b);
        }
    }
    REQUIRE(total > 5);
    return miss;
}

std::string runlog_text(const Run& r)
{
    std::ostringstream os;
    write_runlog(r, os);
    return os.str();
}

Run small_run(Protocol proto, const std::vector<std::string>& names, std::uint64_t seed)
{
    auto sc = Scenario::random(proto, int(names.size()), 30, seed);
    sc.agents = names;
    // Rename the random scenario's agents onto `names`.
    std::map<std::string, std::string> ren;
    for (std::size_t i = 0; i < names.size(); ++i) ren["a" + std::to_string(i + 1)] = names[i];
    for (auto& f : sc.friendships) f = {ren.at(f.a), ren.at(f.b), f.step};
    for (auto& f : sc.follows) f = {ren.at(f.agent), ren.at(f.creator), ren.at(f.via), f.step};
    for (auto& p : sc.posts) p.agent = ren.at(p.agent);
    return simulate(sc, {PolicyKind::Random, seed, 16}, 50).run;
}

}  // namespace

TEST_SUITE("sim")
{
    TEST_CASE("an empty scenario gives an empty run")
    {
        Scenario sc;
        auto res = simulate(sc, {}, 0);
        CHECK(res.run.steps.empty());
        CHECK(res.violations.empty());
        CHECK(replay(res.run).ok);
    }

    TEST_CASE("scenario json round-trips and expands repetitions")
    {
        auto j = nlohmann::json::parse(R"({
            "protocol": "gd", "agents": ["x", "y"],
            "friendships": [{"a": "x", "b": "y", "step": 3}],
            "posts": [{"agent": "x", "every": 10, "from": 10, "until": 40}, {"agent": "y", "step": 7, "text": "hi"}],
            "crashes": [{"agent": "y", "step": 90}]
        })");
        auto sc = Scenario::from_json(j);
        CHECK(sc.protocol == Protocol::GD);
        REQUIRE(sc.posts.size() == 4);
        CHECK(sc.posts[2].step == 30);
        CHECK(sc.posts[2].text == "x-30");
        auto again = Scenario::from_json(sc.to_json());
        CHECK(again.to_json() == sc.to_json());
        CHECK(again.digest() == sc.digest());
        CHECK_THROWS(Scenario::from_json(nlohmann::json::parse(R"({"agents": ["x"], "follows": [{"agent": "x", "creator": "z", "via": "x"}]})")));
    }

    TEST_CASE("chain liveness: head blocks reach the tail under a fair scheduler")
    {
        for (auto proto : {Protocol::CGD, Protocol::GD}) {
            auto sc = Scenario::chain(proto, 6, 10, 400, 100, 10000);
            auto t0 = std::chrono::steady_clock::now();
            auto res = simulate(sc, {PolicyKind::Fair, 1, 64}, 10000);
            double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            MESSAGE(to_string(proto) << ": " << res.run.steps.size() << " steps in " << secs << " s");
            CHECK(res.violations.empty());
            CHECK(res.unexecuted.empty());
            CHECK(missing_before(res, sc, "p1", "p6", 200) == 0);
            for (const auto& x : res.expectations) CHECK(x.missing == 0);
        }
    }

    TEST_CASE("a crashed interior agent cuts the chain without safety violations")
    {
        for (auto proto : {Protocol::CGD, Protocol::GD}) {
            auto sc = Scenario::chain(proto, 6, 10, 200, 0, 0);
            sc.crashes.push_back({"p3", 0});
            auto res = simulate(sc, {PolicyKind::Fair, 1, 64}, 2000);
            CHECK(res.violations.empty());
            std::size_t beyond = 0;
            for (const auto& x : res.expectations)
                if (res.run.names.at(x.creator) == "p1" && res.run.names.at(x.agent) > "p3") beyond += x.missing;
            CHECK(beyond > 0);
            CHECK_FALSE(res.unexecuted.empty());
        }
    }

    TEST_CASE("identical scenario and seed give bit-identical run logs")
    {
        auto sc = Scenario::random(Protocol::CGD, 5, 150, 9);
        for (auto k : {PolicyKind::Fair, PolicyKind::Random, PolicyKind::Adversarial}) {
            auto a = simulate(sc, {k, 4, 16}, 300);
            auto b = simulate(sc, {k, 4, 16}, 300);
            CHECK(runlog_text(a.run) == runlog_text(b.run));
            CHECK(a.violations.empty());
        }
        auto x = simulate(sc, {PolicyKind::Random, 4, 16}, 300);
        auto y = simulate(sc, {PolicyKind::Random, 5, 16}, 300);
        CHECK(runlog_text(x.run) != runlog_text(y.run));
    }

    TEST_CASE("run logs round-trip and replay; a tampered digest is caught")
    {
        for (auto proto : {Protocol::CGD, Protocol::GD, Protocol::AD}) {
            auto sc = Scenario::random(proto, 4, 100, 21);
            auto res = simulate(sc, {PolicyKind::Random, 2, 16}, 200);
            REQUIRE(res.run.steps.size() > 10);
            std::istringstream in(runlog_text(res.run));
            auto back = read_runlog(in);
            CHECK(runlog_text(back) == runlog_text(res.run));
            auto rep = replay(back);
            CHECK(rep.ok);
            CHECK(rep.steps == res.run.steps.size());
            back.steps[5].config.bytes[0] ^= 1;
            rep = replay(back);
            CHECK_FALSE(rep.ok);
            CHECK(rep.failed_step == 5u);
            CHECK(rep.clause == "configuration digest mismatch");
        }
    }

    TEST_CASE("replay reports the clause of a disabled step")
    {
        auto sc = Scenario::chain(Protocol::CGD, 2, 5, 20, 0, 0);
        auto res = simulate(sc, {}, 100);
        auto r = res.run;
        // Drop the first Offer: the matching Follow is then not enabled.
        auto it = std::find_if(r.steps.begin(), r.steps.end(),
                               [](const RunStep& s) { return std::get<CGDTransition>(s.t).kind == CGDKind::Offer; });
        REQUIRE(it != r.steps.end());
        r.steps.erase(it);
        auto rep = replay(r);
        CHECK_FALSE(rep.ok);
        CHECK(rep.clause.rfind("Follow", 0) == 0);
    }

    TEST_CASE("projection onto the full set is the identity")
    {
        auto sc = Scenario::random(Protocol::GD, 4, 60, 3);
        auto r = simulate(sc, {PolicyKind::Random, 3, 16}, 120).run;
        auto p = project_run(r, r.agents);
        CHECK(runlog_text(p) == runlog_text(r));
    }

    TEST_CASE("interleaving with an empty run pads with initial states")
    {
        auto r1 = small_run(Protocol::CGD, {"a", "b"}, 1);
        auto r2 = small_run(Protocol::CGD, {"c"}, 1);
        r2.steps.clear();
        auto r = interleave(r1, r2, std::vector<bool>(r1.steps.size(), false));
        CHECK(r.agents.size() == 3);
        CHECK(r.steps.size() == r1.steps.size());
        CHECK(replay(r).ok);
        auto back = project_run(r, r1.agents);
        for (std::size_t i = 0; i < r1.steps.size(); ++i) CHECK(back.steps[i].config == r1.steps[i].config);
        CHECK_THROWS_AS(interleave(r1, r1, {}), std::invalid_argument);
        CHECK_THROWS_AS(interleave(r1, r2, {true}), std::invalid_argument);
    }

    TEST_CASE("alternating interleaving of two short runs projects back to both")
    {
        for (auto proto : {Protocol::CGD, Protocol::GD}) {
            auto r1 = small_run(proto, {"a", "b"}, 7);
            auto r2 = small_run(proto, {"c", "d"}, 8);
            r1.steps.resize(3);
            r2.steps.resize(3);
            auto r = interleave(r1, r2, {false, true, false, true, false, true});
            REQUIRE(r.steps.size() == 6);
            CHECK(replay(r).ok);
            auto p1 = project_run(r, r1.agents);
            auto p2 = project_run(r, r2.agents);
            for (std::size_t i = 0; i < 3; ++i) {
                CHECK(p1.steps[i].config == r1.steps[i].config);
                CHECK(describe(p1.steps[i].t) == describe(r1.steps[i].t));
                CHECK(p2.steps[i].config == r2.steps[i].config);
            }
        }
    }

    TEST_CASE("projection keeps alien-created blocks inside the group's states")
    {
        Scenario sc;
        sc.agents = {"a", "b", "c"};
        sc.friendships = {{"a", "c", 0}};
        // Blocks after the mutual follow carry the friendship evidence.
        sc.posts = {{"c", 20, "from c"}, {"a", 30, "from a"}, {"c", 40, "again"}};
        auto res = simulate(sc, {}, 200);
        REQUIRE(res.violations.empty());
        auto a = sc.id_of("a");
        auto c = sc.id_of("c");
        auto cross = std::find_if(res.run.steps.begin(), res.run.steps.end(), [&](const RunStep& s) {
            const auto& t = std::get<CGDTransition>(s.t);
            return t.kind == CGDKind::Receive && t.actor == a && t.block->creator == c;
        });
        REQUIRE(cross != res.run.steps.end());
        auto proj = project_run(res.run, {a, sc.id_of("b")});
        CGDConfig cfg = CGDConfig::initial(proj.agents);
        for (const auto& s : proj.steps) cgd_apply_unchecked(cfg, std::get<CGDTransition>(s.t));
        CHECK(cfg.at(a).B.has_creator(c));
        CHECK(cfg.at(a).B.blocks_of(c).size() == 3);
    }

    TEST_CASE("fair scheduling bounds how long a class waits")
    {
        auto sc = Scenario::random(Protocol::CGD, 6, 200, 17);
        auto res = simulate(sc, {PolicyKind::Fair, 0, 64}, 600);
        CHECK(res.violations.empty());
        std::size_t classes_total = res.liveness.size();
        std::uint64_t worst = 0;
        for (const auto& e : res.liveness) worst = std::max(worst, e.max_wait);
        auto scripted = sc.agents.size() + 4 * sc.friendships.size() + 2 * sc.follows.size() + sc.posts.size();
        MESSAGE("classes " << classes_total << ", worst wait " << worst);
        CHECK(worst <= classes_total + scripted);
    }

    TEST_CASE("random scenarios under every policy keep the monitors quiet")
    {
        for (std::uint64_t seed = 0; seed < 30; ++seed)
            for (auto proto : {Protocol::CGD, Protocol::GD, Protocol::AD})
                for (auto k : {PolicyKind::Fair, PolicyKind::Random, PolicyKind::Adversarial}) {
                    auto sc = Scenario::random(proto, 2 + int(seed % 5), 120, seed);
                    auto res = simulate(sc, {k, seed, 16}, 250);
                    CHECK(res.violations.empty());
                    CHECK(replay(res.run).ok);
                }
    }

    TEST_CASE("grassroots suite verdicts")
    {
        auto gd = grassroots_suite(Protocol::GD);
        CHECK(gd.interleaving_safe);
        CHECK(gd.projections_roundtrip);
        CHECK(gd.liveness_preserved);
        CHECK(gd.non_interfering);
        CHECK(gd.witness_found);
        CHECK(gd.witness.rfind("Follow", 0) == 0);
        CHECK(gd.witness_impossible_alone);

        auto cgd = grassroots_suite(Protocol::CGD);
        CHECK(cgd.non_interfering);
        CHECK(cgd.witness_found);
        CHECK(cgd.witness_impossible_alone);

        auto ad = grassroots_suite(Protocol::AD);
        CHECK(ad.interleaving_safe);
        CHECK(ad.projections_roundtrip);
        CHECK(ad.pending_in_embedding > 0);
        CHECK_FALSE(ad.liveness_preserved);
        CHECK_FALSE(ad.non_interfering);
    }
}
