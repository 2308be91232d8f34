#include "doctest.h"
#include "gdiss/cgd.hpp"
#include "helpers.hpp"

#include <random>

using namespace gdiss;
using testing_util::ident;
using testing_util::text;

namespace {

struct Pair {
    AgentIdentity p = ident("p"), q = ident("q");
    CGDConfig c = CGDConfig::initial({p.id, q.id});

    BlockPtr own_initial(const AgentIdentity& a) { return c.at(a.id).B.ptr(c.at(a.id).B.blocks_of(a.id).front()); }
    BlockPtr create(const AgentIdentity& a, Payload x)
    {
        auto t = materialize_create(c, a, x);
        cgd_apply_inplace(c, t);
        return t.block;
    }
    void step(CGDKind k, const AgentIdentity& a, BlockPtr b, const AgentIdentity& peer)
    {
        cgd_apply_inplace(c, {k, a.id, std::move(b), std::nullopt, peer.id});
    }
    // Both create initials, offer them to each other and follow.
    void befriend()
    {
        create(p, std::nullopt);
        create(q, std::nullopt);
        step(CGDKind::Offer, p, own_initial(p), q);
        step(CGDKind::Offer, q, own_initial(q), p);
        step(CGDKind::Follow, p, own_initial(q), q);
        step(CGDKind::Follow, q, own_initial(p), p);
    }
};

bool has_kind(const std::vector<CGDTransition>& ts, CGDKind k)
{
    for (const auto& t : ts)
        if (t.kind == k) return true;
    return false;
}

}  // namespace

TEST_SUITE("cgd")
{
    TEST_CASE("knowledge predicates read only the local blocklace")
    {
        Pair w;
        auto& c = w.c;
        const auto& p = w.p.id;
        const auto& q = w.q.id;
        CHECK_FALSE(knows_follows(c, p, q, p));
        w.befriend();
        auto q1 = w.own_initial(w.q);
        CHECK(knows_block(c, p, *q1));
        CHECK(knows_q_knows(c, p, q, *q1));  // the initial observes itself
        auto p1 = w.own_initial(w.p);
        CHECK_FALSE(knows_q_knows(c, p, q, *p1));
        CHECK_FALSE(knows_friends(c, p, p, q));

        auto q2 = w.create(w.q, text("hi"));  // q2 points at p1
        CHECK(knows_q_knows(c, q, q, *p1));
        CHECK(knows_follows(c, q, q, p));
        CHECK_FALSE(knows_q_knows(c, p, q, *p1));  // p does not hold q2 yet
    }

    TEST_CASE("a fresh agent can only create its initial block")
    {
        Pair w;
        auto en = cgd_enabled(w.c, w.p.id);
        REQUIRE(en.size() == 1);
        CHECK(en[0].kind == CGDKind::Create);
        CHECK_FALSE(en[0].payload.has_value());
        auto t = materialize_create(w.c, w.p, std::nullopt);
        CHECK(t.block->initial());
        auto c1 = cgd_apply(w.c, t);
        CHECK(c1.at(w.p.id).B.size() == 1);
        CHECK(c1.at(w.p.id).out_size() == 0);
        CHECK(w.c.at(w.p.id).B.size() == 0);
    }

    TEST_CASE("offer then follow adds exactly the initial block")
    {
        Pair w;
        w.create(w.p, std::nullopt);
        auto p1 = w.own_initial(w.p);
        CHECK(has_kind(cgd_enabled(w.c, w.p.id), CGDKind::Offer));
        CHECK_FALSE(has_kind(cgd_enabled(w.c, w.q.id), CGDKind::Follow));
        w.step(CGDKind::Offer, w.p, p1, w.q);
        CHECK(w.c.at(w.p.id).outbox() == std::vector<std::pair<AgentId, Digest>>{{w.q.id, p1->digest()}});
        CHECK(has_kind(cgd_enabled(w.c, w.q.id), CGDKind::Follow));
        w.step(CGDKind::Follow, w.q, p1, w.p);
        CHECK(w.c.at(w.q.id).B.size() == 1);
        CHECK(w.c.at(w.q.id).B.contains(p1->digest()));
        CHECK(is_closed(w.c.at(w.q.id).B, w.q.id));
        // A second offer of the same block is not enabled.
        CHECK(*cgd_check(w.c, {CGDKind::Offer, w.p.id, p1, std::nullopt, w.q.id}) ==
              "Offer: message already in outbox");
    }

    TEST_CASE("send then receive after befriending")
    {
        Pair w;
        w.befriend();
        auto p2 = w.create(w.p, text("x"));
        w.create(w.q, text("y"));
        CGDTransition send{CGDKind::Send, w.p.id, p2, std::nullopt, w.q.id};
        CHECK_FALSE(cgd_check(w.c, send));
        w.step(CGDKind::Send, w.p, p2, w.q);
        CHECK(has_kind(cgd_enabled(w.c, w.q.id), CGDKind::Receive));
        w.step(CGDKind::Receive, w.q, p2, w.p);
        const auto& Bq = w.c.at(w.q.id).B;
        CHECK(Bq.contains(p2->digest()));
        CHECK(Bq.contains(w.own_initial(w.p)->digest()));
        CHECK(is_closed(Bq, w.q.id));
        // q now knows p follows q, and p's block is not sent twice.
        CHECK(knows_follows(w.c, w.q.id, w.p.id, w.q.id));
        CHECK(*cgd_check(w.c, send) == "Send: message already in outbox");
    }

    TEST_CASE("without an outstanding own offer or observed evidence Send is disabled")
    {
        Pair w;
        w.create(w.p, std::nullopt);
        w.create(w.q, std::nullopt);
        // Only q offers, so p follows q but has no evidence that q follows p.
        w.step(CGDKind::Offer, w.q, w.own_initial(w.q), w.p);
        w.step(CGDKind::Follow, w.p, w.own_initial(w.q), w.q);
        auto p2 = w.create(w.p, text("x"));
        CHECK(*cgd_check(w.c, {CGDKind::Send, w.p.id, p2, std::nullopt, w.q.id}) ==
              "Send: actor does not know the destination is a friend");
        CHECK_FALSE(has_kind(cgd_enabled(w.c, w.p.id), CGDKind::Send));
    }

    TEST_CASE("receive waits for the self-predecessor")
    {
        Pair w;
        w.befriend();
        w.create(w.q, text("ack"));
        auto p2 = w.create(w.p, text("a"));
        auto p3 = w.create(w.p, text("b"));
        w.step(CGDKind::Send, w.p, p3, w.q);
        CHECK(*cgd_check(w.c, {CGDKind::Receive, w.q.id, p3, std::nullopt, w.p.id}) ==
              "Receive: actor lacks the closure of the block");
        w.step(CGDKind::Send, w.p, p2, w.q);
        w.step(CGDKind::Receive, w.q, p2, w.p);
        CHECK_FALSE(cgd_check(w.c, {CGDKind::Receive, w.q.id, p3, std::nullopt, w.p.id}));
    }

    TEST_CASE("receive requires following the creator")
    {
        Pair w;
        w.befriend();
        auto p2 = w.create(w.p, text("a"));
        w.step(CGDKind::Send, w.p, p2, w.q);
        // q has p's initial but no q-block observing it yet.
        CHECK(*cgd_check(w.c, {CGDKind::Receive, w.q.id, p2, std::nullopt, w.p.id}) ==
              "Receive: actor does not follow the block's creator");
    }

    TEST_CASE("Create must extend the own tip and cover the whole blocklace")
    {
        Pair w;
        w.befriend();
        auto p2 = w.create(w.p, text("a"));
        auto p1 = w.own_initial(w.p);
        // Equivocation: a second block on top of p1.
        auto fork = make_block(w.p, {p1->self}, text("fork"));
        CHECK(*cgd_check(w.c, {CGDKind::Create, w.p.id, fork, {}, std::nullopt}) ==
              "Create: self-pointer must target the own tip");
        // Extends the tip but leaves out q's initial? p2 already covers it, so add a new foreign block.
        auto q2 = w.create(w.q, text("b"));
        w.step(CGDKind::Send, w.q, q2, w.p);
        w.step(CGDKind::Receive, w.p, q2, w.q);
        auto narrow = make_block(w.p, {p2->self}, text("narrow"));
        CHECK(*cgd_check(w.c, {CGDKind::Create, w.p.id, narrow, {}, std::nullopt}) ==
              "Create: closure of the block is not B plus the block");
        auto wide = materialize_create(w.c, w.p, text("ok"));
        CHECK_FALSE(cgd_check(w.c, wide));
        CHECK(*cgd_check(w.c, {CGDKind::Create, w.q.id, wide.block, {}, std::nullopt}) ==
              "Create: block creator must be the actor");
    }

    TEST_CASE("apply rejects disabled transitions with the clause")
    {
        Pair w;
        w.create(w.p, std::nullopt);
        try {
            cgd_apply(w.c, {CGDKind::Follow, w.q.id, w.own_initial(w.p), std::nullopt, w.p.id});
            FAIL("expected rejection");
        } catch (const TransitionError& e) {
            CHECK(e.clause == "Follow: no such message in the peer's outbox");
            CHECK(std::string(e.what()).rfind("transition not enabled", 0) == 0);
        }
    }

    TEST_CASE("random runs stay owner-closed, grow monotonically and keep steps enabled")
    {
        std::vector<AgentIdentity> ids{ident("a"), ident("b"), ident("c"), ident("d")};
        std::vector<AgentId> agents;
        for (auto& i : ids) agents.push_back(i.id);
        std::mt19937_64 rng(5);
        std::map<CGDKind, int> seen;
        for (int trial = 0; trial < 25; ++trial) {
            auto c = CGDConfig::initial(agents);
            for (int step = 0; step < 80; ++step) {
                auto& id = ids[rng() % ids.size()];
                auto en = cgd_enabled(c, id.id);
                if (en.empty()) continue;
                auto t = en[rng() % en.size()];
                if (t.kind == CGDKind::Create) t = materialize_create(c, id, t.payload ? text("s" + std::to_string(step)) : Payload{});
                auto before = c;
                cgd_apply_inplace(c, t);
                ++seen[t.kind];
                CHECK(cgd_below(before, c));
                CHECK_FALSE(cgd_below(c, before));
                for (const auto& p : agents) REQUIRE(is_closed(c.at(p).B, p));
                // Steps enabled for others before this one remain enabled.
                for (const auto& other : agents) {
                    if (other == id.id) continue;
                    for (const auto& u : cgd_enabled(before, other))
                        if (u.kind != CGDKind::Create) CHECK_FALSE(cgd_check(c, u));
                }
            }
        }
        CHECK(seen[CGDKind::Receive] > 20);
        CHECK(seen[CGDKind::Send] > 20);
        CHECK(seen[CGDKind::Follow] > 20);
    }
}
