#include "doctest.h"
#include "gdiss/blocklace.hpp"
#include "gdiss/wire.hpp"
#include "helpers.hpp"

#include <map>
#include <random>
#include <set>
#include <sstream>

using namespace gdiss;
using testing_util::grow;
using testing_util::ident;
using testing_util::text;

namespace {

// Reference reachability: plain DFS over resolved pointers.
bool path_oracle(const std::map<Digest, BlockPtr>& all, const Block& from, const Block& to)
{
    std::set<Digest> seen;
    std::vector<const Block*> stack{&from};
    while (!stack.empty()) {
        const Block* b = stack.back();
        stack.pop_back();
        if (b->digest() == to.digest()) return true;
        if (!seen.insert(b->digest()).second) continue;
        for (const auto& h : b->pointers) {
            auto it = all.find(h.digest);
            if (it != all.end()) stack.push_back(it->second.get());
        }
    }
    return false;
}

std::map<Digest, BlockPtr> as_map(const Blocklace& B)
{
    std::map<Digest, BlockPtr> m;
    for (const auto& b : B.blocks()) m[b->digest()] = b;
    return m;
}

bool closed_by_definition(const std::map<Digest, BlockPtr>& S, const AgentId& p)
{
    for (const auto& [d, b] : S)
        for (const auto& h : b->pointers)
            if (!S.count(h.digest) && (h.creator == p || h.creator == b->creator)) return false;
    return true;
}

// Minimal closed superset of {b} by repeatedly adding whatever the definition complains about.
std::set<Digest> closure_fixpoint(const Blocklace& B, const Block& b, const AgentId& p)
{
    auto all = as_map(B);
    std::map<Digest, BlockPtr> S{{b.digest(), all.at(b.digest())}};
    for (;;) {
        bool changed = false;
        for (const auto& [d, x] : std::map<Digest, BlockPtr>(S)) {
            for (const auto& h : x->pointers) {
                if (S.count(h.digest)) continue;
                if (h.creator == p || h.creator == x->creator || x->creator == p) {
                    S[h.digest] = all.at(h.digest);
                    changed = true;
                }
            }
        }
        if (!changed) break;
    }
    CHECK(closed_by_definition(S, p));
    std::set<Digest> out;
    for (const auto& [d, x] : S) out.insert(d);
    return out;
}

std::set<Digest> digests(const Blocklace& B, const std::vector<Ord>& ords)
{
    std::set<Digest> out;
    for (Ord o : ords) out.insert(B[o].digest());
    return out;
}

// Several agents exchanging blocks under the closedness rule only; produces
// stores with dangling foreign pointers.
struct Mesh {
    std::vector<AgentIdentity> ids;
    std::vector<Blocklace> stores;
    explicit Mesh(int n)
    {
        for (int i = 0; i < n; ++i) {
            ids.push_back(ident("mesh" + std::to_string(i)));
            stores.emplace_back(SignatureScheme::Mock, ids.back().id);
        }
    }
    void run(std::mt19937_64& rng, int steps)
    {
        for (int s = 0; s < steps; ++s) {
            int a = static_cast<int>(rng() % ids.size());
            auto& B = stores[a];
            if (!B.has_creator(ids[a].id) || rng() % 3 == 0) {
                grow(B, ids[a], B.has_creator(ids[a].id) ? text("m" + std::to_string(s)) : std::nullopt);
                continue;
            }
            int from = static_cast<int>(rng() % ids.size());
            const auto& src = stores[from].blocks();
            if (src.empty()) continue;
            auto b = src[rng() % src.size()];
            if (!B.contains(b->digest()) && (b->initial() || B.closed_with(*b, ids[a].id)))
                REQUIRE(B.insert(b) == BlockFault::none);
        }
    }
};

}  // namespace

TEST_SUITE("blocklace")
{
    TEST_CASE("roots")
    {
        auto p = ident("p");
        Blocklace B;
        CHECK(roots(B).empty());
        auto b0 = grow(B, p, std::nullopt);
        REQUIRE(roots(B).size() == 1);
        CHECK(*roots(B)[0] == *b0);
        auto b1 = grow(B, p, text("x"));
        REQUIRE(roots(B).size() == 1);
        CHECK(*roots(B)[0] == *b1);
    }

    TEST_CASE("create_block examples")
    {
        auto p = ident("p"), q = ident("q");
        Blocklace B(SignatureScheme::Mock, p.id);
        CHECK_THROWS_WITH(create_block(B, p, text("x")), "initial block must have empty payload");
        auto b0 = grow(B, p, std::nullopt);
        CHECK(b0->initial());
        CHECK_FALSE(b0->payload.has_value());

        auto b1 = create_block(B, p, text("one"));
        REQUIRE(b1->pointers.size() == 1);
        CHECK(b1->pointers[0].digest == b0->digest());
        B.insert(b1);

        Blocklace Bq;
        auto q0 = grow(Bq, q, std::nullopt);
        B.insert(q0);
        CHECK(B.roots().size() == 2);
        auto b2 = create_block(B, p, text("two"));
        CHECK(b2->pointers.size() == 2);
        B.insert(b2);
        CHECK(B.roots().size() == 1);
        auto cl = p_closure(B, *b2, p.id);
        CHECK(cl.size() == B.size());
    }

    TEST_CASE("observes")
    {
        auto p = ident("p"), q = ident("q");
        Blocklace B;
        auto b0 = grow(B, p, std::nullopt);
        auto b1 = grow(B, p, text("1"));
        auto b2 = grow(B, p, text("2"));
        CHECK(observes(B, *b0, *b0));
        CHECK(observes(B, *b2, *b0));
        CHECK_FALSE(observes(B, *b0, *b2));

        Blocklace C;
        auto p0 = grow(C, p, std::nullopt);
        C.insert(make_block(q, {}, std::nullopt));
        auto q0 = C.blocks().back();
        CHECK_FALSE(observes(C, *p0, *q0));
        CHECK_FALSE(observes(C, *q0, *p0));
    }

    TEST_CASE("agent_observes, follows and friend")
    {
        auto p = ident("p"), q = ident("q");
        Blocklace B;
        auto q0 = make_block(q, {}, std::nullopt);
        B.insert(q0);
        CHECK(agent_observes(B, q.id, *q0));
        CHECK_FALSE(agent_observes(B, p.id, *q0));
        CHECK(follows(B, q.id, q.id));

        auto p0 = make_block(p, {}, std::nullopt);
        B.insert(p0);
        CHECK_FALSE(follows(B, q.id, p.id));
        CHECK_FALSE(is_friend(B, p.id, q.id));

        auto q1 = make_block(q, {q0->self, p0->self}, text("ack"));
        B.insert(q1);
        CHECK(agent_observes(B, q.id, *p0));
        CHECK(follows(B, q.id, p.id));
        CHECK(is_friend(B, p.id, q.id));
        CHECK_FALSE(is_friend(B, q.id, p.id));
    }

    TEST_CASE("is_closed")
    {
        auto p = ident("p"), q = ident("q"), r = ident("r");
        CHECK(is_closed(Blocklace{}, p.id));

        Blocklace src;
        auto p0 = grow(src, p, std::nullopt);
        auto p1 = grow(src, p, text("x"));
        Blocklace B;
        B.insert(p1);
        CHECK_FALSE(is_closed(B, p.id));
        CHECK_FALSE(is_closed(B, q.id));  // dangling self-pointer is bad for anyone
        B.insert(p0);
        CHECK(is_closed(B, q.id));

        // A q-block pointing to an r-block that p does not hold: p-closed.
        auto q0 = make_block(q, {}, std::nullopt);
        auto r0 = make_block(r, {}, std::nullopt);
        auto q1 = make_block(q, {q0->self, r0->self}, text("y"));
        Blocklace C(SignatureScheme::Mock, p.id);
        C.insert(q0);
        C.insert(q1);
        CHECK(is_closed(C, p.id));
        CHECK_FALSE(is_closed(C, r.id));

        // A q-block pointing to a missing p-block is not p-closed.
        auto q2 = make_block(q, {q1->self, p1->self}, text("z"));
        C.insert(q2);
        CHECK_FALSE(is_closed(C, p.id));
        CHECK_FALSE(C.closed_with(*p1, p.id));  // p1's own predecessor is missing too
        C.insert(p0);
        CHECK(C.closed_with(*p1, p.id));
        C.insert(p1);
        CHECK(is_closed(C, p.id));
    }

    TEST_CASE("p_closure follows self-paths and owner pointers")
    {
        auto p = ident("p"), q = ident("q"), q2 = ident("q2"), r = ident("r");
        auto q0 = make_block(q, {}, std::nullopt);
        auto r0 = make_block(r, {}, std::nullopt);
        auto q1 = make_block(q, {q0->self, r0->self}, text("q1"));
        auto s0 = make_block(q2, {}, std::nullopt);
        auto s1 = make_block(q2, {s0->self}, text("s1"));
        auto p0 = make_block(p, {}, std::nullopt);
        auto b = make_block(p, {p0->self, q1->self, s1->self}, text("b"));
        Blocklace B;
        for (auto x : {q0, r0, q1, s0, s1, p0, b}) B.insert(x);

        auto cl = p_closure(B, *b, p.id);
        std::set<Digest> got;
        for (const auto& x : cl.blocks()) got.insert(x->digest());
        std::set<Digest> want{b->digest(), p0->digest(), q1->digest(), q0->digest(), s1->digest(), s0->digest()};
        CHECK(got == want);  // r0 is reachable only via q's non-self pointer
        CHECK(p_closure(B, *p0, p.id).size() == 1);

        Blocklace missing;
        missing.insert(b);
        CHECK_THROWS(p_closure(missing, *b, p.id));
    }

    TEST_CASE("index")
    {
        auto p = ident("p");
        Blocklace B;
        auto b0 = grow(B, p, std::nullopt);
        auto b1 = grow(B, p, text("x"));
        auto b2 = grow(B, p, text("y"));
        CHECK(index(B, *b0) == 1);
        CHECK(index(B, *b1) == 2);
        CHECK(index(B, *b2) == 3);
        Blocklace broken;
        broken.insert(b2);
        CHECK_THROWS(index(broken, *b2));
    }

    TEST_CASE("store boundary rejects invalid blocks")
    {
        auto p = ident("p");
        auto p0 = make_block(p, {}, std::nullopt);
        auto p1 = make_block(p, {p0->self}, text("x"));
        auto forged = std::make_shared<Block>(*p1);
        forged->payload = text("changed");
        Blocklace B;
        CHECK(B.insert(forged) == BlockFault::digest);
        CHECK(B.empty());
        auto badsig = std::make_shared<Block>(*p1);
        badsig->self.signature.bytes[50] ^= 1;
        CHECK(B.insert(badsig) == BlockFault::signature);
        CHECK(B.insert(p1) == BlockFault::none);
    }

    TEST_CASE("out-of-order insertion keeps observation exact")
    {
        std::mt19937_64 rng(11);
        for (int trial = 0; trial < 30; ++trial) {
            Mesh m(3);
            m.run(rng, 25);
            std::vector<BlockPtr> all;
            for (auto& s : m.stores)
                for (auto& b : s.blocks()) all.push_back(b);
            std::shuffle(all.begin(), all.end(), rng);
            Blocklace B;
            for (auto& b : all) B.insert(b);
            auto map = as_map(B);
            REQUIRE(B.size() <= 40);
            for (Ord a = 0; a < B.size(); ++a)
                for (Ord c = 0; c < B.size(); ++c)
                    REQUIRE(B.observes(a, c) == path_oracle(map, B[a], B[c]));
            CHECK_NOTHROW(B.topological_order());
        }
    }

    TEST_CASE("observation is a partial order on small stores")
    {
        std::mt19937_64 rng(5);
        for (int trial = 0; trial < 40; ++trial) {
            Mesh m(3);
            m.run(rng, 14);
            for (const auto& B : m.stores) {
                if (B.size() > 12) continue;
                const Ord n = static_cast<Ord>(B.size());
                for (Ord a = 0; a < n; ++a) {
                    CHECK(B.observes(a, a));
                    for (Ord b = 0; b < n; ++b) {
                        if (a != b && B.observes(a, b)) CHECK_FALSE(B.observes(b, a));
                        for (Ord c = 0; c < n; ++c)
                            if (B.observes(a, b) && B.observes(b, c)) CHECK(B.observes(a, c));
                    }
                }
            }
        }
    }

    TEST_CASE("closure matches fixpoint oracle and is idempotent")
    {
        std::mt19937_64 rng(3);
        for (int trial = 0; trial < 25; ++trial) {
            Mesh m(3);
            m.run(rng, 40);
            for (std::size_t a = 0; a < m.stores.size(); ++a) {
                const auto& B = m.stores[a];
                const auto& p = m.ids[a].id;
                REQUIRE(B.is_closed(p));
                for (Ord o = 0; o < B.size(); ++o) {
                    auto cl = B.closure(o, p);
                    CHECK(digests(B, cl) == closure_fixpoint(B, B[o], p));
                    auto C = p_closure(B, B[o], p);
                    CHECK(C.is_closed(p));
                    CHECK(p_closure(C, B[o], p).size() == C.size());
                }
                // closure of a union is the union of closures
                if (B.size() >= 2) {
                    Ord x = 0, y = static_cast<Ord>(B.size() - 1);
                    auto cx = digests(B, B.closure(x, p));
                    auto cy = digests(B, B.closure(y, p));
                    std::set<Digest> u = cx;
                    u.insert(cy.begin(), cy.end());
                    Blocklace U(SignatureScheme::Mock);
                    for (auto& d : u) U.insert(B.ptr(*B.find(d)));
                    CHECK(U.is_closed(p));
                }
            }
        }
    }

    TEST_CASE("create_block closure is the whole store plus the new block")
    {
        std::mt19937_64 rng(9);
        for (int trial = 0; trial < 30; ++trial) {
            Mesh m(4);
            m.run(rng, 50);
            for (std::size_t a = 0; a < m.stores.size(); ++a) {
                auto B = m.stores[a];
                if (!B.has_creator(m.ids[a].id)) continue;
                auto b = create_block(B, m.ids[a], text("new"));
                REQUIRE(B.insert(b) == BlockFault::none);
                CHECK(B.roots().size() == 1);
                CHECK(p_closure(B, *b, m.ids[a].id).size() == B.size());
                CHECK(b->self_pointers().size() == 1);
            }
        }
    }

    TEST_CASE("follows is monotone under insertion")
    {
        std::mt19937_64 rng(21);
        Mesh m(3);
        m.run(rng, 60);
        std::vector<BlockPtr> all;
        for (auto& s : m.stores)
            for (auto& b : s.blocks()) all.push_back(b);
        Blocklace B;
        std::set<std::pair<int, int>> held;
        for (auto& b : all) {
            B.insert(b);
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    bool f = B.follows(m.ids[i].id, m.ids[j].id);
                    if (held.count({i, j})) CHECK(f);
                    if (f) held.insert({i, j});
                }
        }
    }

    TEST_CASE("dump and load round trip")
    {
        std::mt19937_64 rng(2);
        Mesh m(3);
        m.run(rng, 30);
        std::stringstream ss;
        dump_blocklace(m.stores[0], ss);
        auto L = load_blocklace(ss, SignatureScheme::Mock);
        CHECK(L.size() == m.stores[0].size());
        for (const auto& b : m.stores[0].blocks()) CHECK(L.contains(b->digest()));
    }

    TEST_CASE("equivocation is stored and reported")
    {
        auto p = ident("p");
        auto p0 = make_block(p, {}, std::nullopt);
        auto a = make_block(p, {p0->self}, text("a"));
        auto b = make_block(p, {p0->self}, text("b"));
        Blocklace B;
        B.insert(p0);
        B.insert(a);
        B.insert(b);
        CHECK(B.size() == 3);
        CHECK(B.equivocations().size() == 1);
    }

    TEST_CASE("held_by stops at foreign non-self pointers")
    {
        auto a = ident("a"), b = ident("b"), c = ident("c");
        auto a1 = make_block(a, {}, std::nullopt), b1 = make_block(b, {}, std::nullopt), c1 = make_block(c, {}, std::nullopt);
        auto a2 = make_block(a, {a1->self, b1->self}, text("a2"));
        auto b2 = make_block(b, {b1->self, a2->self}, text("b2"));
        auto c2 = make_block(c, {c1->self, b2->self}, text("c2"));
        // b's view: c2 observes a2 through b2, yet c need not hold a2.
        Blocklace B(SignatureScheme::Mock, b.id);
        for (const auto& x : {a1, b1, a2, b2, c1, c2}) REQUIRE(B.insert(x) == BlockFault::none);
        auto o = [&](const BlockPtr& x) { return *B.find(x->digest()); };
        CHECK(B.agent_observes(c.id, o(a2)));
        CHECK(B.follows(c.id, a.id));
        const auto& h = B.held_by(c.id);
        CHECK(h.count() == 4);
        for (const auto& x : {c1, c2, b2, b1}) CHECK(h.test(o(x)));
        CHECK_FALSE(h.test(o(a2)));
        CHECK_FALSE(B.holds_from(c.id, a.id));
        CHECK(B.holds_from(c.id, b.id));
        // c's own store with exactly that closure is c-closed.
        Blocklace C(SignatureScheme::Mock, c.id);
        for (const auto& x : {b1, b2, c1, c2}) C.insert(x);
        CHECK(C.is_closed(c.id));
    }
}
