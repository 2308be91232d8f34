#include "gdiss/sim.hpp"

#include "sim_internal.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <stdexcept>

namespace gdiss {

std::string_view to_string(Protocol p)
{
    switch (p) {
    case Protocol::GD: return "gd";
    case Protocol::AD: return "ad";
    case Protocol::CGD: return "cgd";
    }
    return "?";
}

Protocol protocol_from_string(std::string_view s)
{
    if (s == "gd" || s == "GD") return Protocol::GD;
    if (s == "ad" || s == "AD") return Protocol::AD;
    if (s == "cgd" || s == "CGD") return Protocol::CGD;
    throw std::invalid_argument("unknown protocol: " + std::string(s));
}

std::string_view to_string(PolicyKind k)
{
    switch (k) {
    case PolicyKind::Fair: return "fair";
    case PolicyKind::Random: return "random";
    case PolicyKind::Adversarial: return "adversarial";
    }
    return "?";
}

PolicyKind policy_from_string(std::string_view s)
{
    if (s == "fair" || s == "round-robin-fair") return PolicyKind::Fair;
    if (s == "random" || s == "seeded-random") return PolicyKind::Random;
    if (s == "adversarial" || s == "adversarial-reorder") return PolicyKind::Adversarial;
    throw std::invalid_argument("unknown policy: " + std::string(s));
}

// ---- scenarios ----

Scenario Scenario::from_json(const nlohmann::json& j)
{
    Scenario s;
    s.protocol = protocol_from_string(j.value("protocol", "cgd"));
    s.scheme = scheme_from_string(j.value("scheme", "mock"));
    s.agents = j.value("agents", std::vector<std::string>{});
    std::set<std::string> known(s.agents.begin(), s.agents.end());
    if (known.size() != s.agents.size()) throw std::invalid_argument("scenario: duplicate agent name");
    auto need = [&](const std::string& n) {
        if (!known.count(n)) throw std::invalid_argument("scenario: unknown agent " + n);
        return n;
    };
    for (const auto& f : j.value("friendships", nlohmann::json::array()))
        s.friendships.push_back({need(f.at("a")), need(f.at("b")), f.value("step", std::uint64_t{0})});
    for (const auto& f : j.value("follows", nlohmann::json::array()))
        s.follows.push_back({need(f.at("agent")), need(f.at("creator")), need(f.at("via")), f.value("step", std::uint64_t{0})});
    for (const auto& p : j.value("posts", nlohmann::json::array())) {
        auto who = need(p.at("agent"));
        if (p.contains("every")) {
            std::uint64_t every = p.at("every"), from = p.value("from", every), until = p.at("until");
            if (every == 0) throw std::invalid_argument("scenario: post repetition with every = 0");
            auto prefix = p.value("prefix", who + "-");
            for (auto t = from; t < until; t += every) s.posts.push_back({who, t, prefix + std::to_string(t)});
        } else {
            s.posts.push_back({who, p.value("step", std::uint64_t{0}), p.value("text", std::string{})});
        }
    }
    for (const auto& c : j.value("crashes", nlohmann::json::array()))
        s.crashes.push_back({need(c.at("agent")), c.value("step", std::uint64_t{0})});
    s.quiescent_expected = j.value("quiescent_expected", false);
    return s;
}

nlohmann::json Scenario::to_json() const
{
    nlohmann::json j{{"protocol", to_string(protocol)}, {"scheme", to_string(scheme)}, {"agents", agents},
                     {"quiescent_expected", quiescent_expected}};
    j["friendships"] = nlohmann::json::array();
    for (const auto& f : friendships) j["friendships"].push_back({{"a", f.a}, {"b", f.b}, {"step", f.step}});
    j["follows"] = nlohmann::json::array();
    for (const auto& f : follows)
        j["follows"].push_back({{"agent", f.agent}, {"creator", f.creator}, {"via", f.via}, {"step", f.step}});
    j["posts"] = nlohmann::json::array();
    for (const auto& p : posts) j["posts"].push_back({{"agent", p.agent}, {"step", p.step}, {"text", p.text}});
    j["crashes"] = nlohmann::json::array();
    for (const auto& c : crashes) j["crashes"].push_back({{"agent", c.agent}, {"step", c.step}});
    return j;
}

std::string Scenario::digest() const { return hash_bytes(to_json().dump()).hex(); }

std::map<std::string, AgentIdentity> Scenario::identities() const
{
    std::map<std::string, AgentIdentity> out;
    for (const auto& n : agents) out.emplace(n, gen_identity(seed_from_name(n), scheme));
    return out;
}

AgentId Scenario::id_of(const std::string& name) const { return gen_identity(seed_from_name(name), scheme).id; }

Scenario Scenario::chain(Protocol proto, int n, std::uint64_t head_every, std::uint64_t head_until, std::uint64_t all_every,
                         std::uint64_t all_until)
{
    Scenario s;
    s.protocol = proto;
    for (int i = 1; i <= n; ++i) s.agents.push_back("p" + std::to_string(i));
    for (int i = 0; i + 1 < n; ++i) s.friendships.push_back({s.agents[i], s.agents[i + 1], 0});
    for (int i = 2; i < n; ++i) s.follows.push_back({s.agents[i], s.agents[0], s.agents[i - 1], 0});
    if (head_every)
        for (auto t = head_every; t < head_until; t += head_every) s.posts.push_back({s.agents[0], t, "p1-" + std::to_string(t)});
    if (all_every)
        for (const auto& a : s.agents)
            for (auto t = all_every; t < all_until; t += all_every) s.posts.push_back({a, t, a + "/" + std::to_string(t)});
    return s;
}

Scenario Scenario::random(Protocol proto, int n, std::uint64_t horizon, std::uint64_t seed, const std::string& prefix)
{
    std::mt19937_64 rng(seed);
    auto pick = [&](std::uint64_t k) { return k ? rng() % k : 0; };
    Scenario s;
    s.protocol = proto;
    for (int i = 1; i <= n; ++i) s.agents.push_back(prefix + std::to_string(i));
    std::set<std::pair<int, int>> edges;
    for (int i = 1; i < n; ++i)
        if (pick(10) < 8) edges.insert({int(pick(i)), i});
    for (int k = 0; k < n / 2; ++k) {
        int a = int(pick(n)), b = int(pick(n));
        if (a != b) edges.insert({std::min(a, b), std::max(a, b)});
    }
    std::vector<std::vector<int>> adj(n);
    for (auto [a, b] : edges) {
        s.friendships.push_back({s.agents[a], s.agents[b], pick(horizon / 4 + 1)});
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    // Follows of a friend's friend, introduced by the friend.
    for (int x = 0; x < n; ++x)
        for (int v : adj[x])
            for (int y : adj[v])
                if (y != x && std::find(adj[x].begin(), adj[x].end(), y) == adj[x].end() && pick(2) == 0)
                    s.follows.push_back({s.agents[x], s.agents[y], s.agents[v], pick(horizon / 2 + 1)});
    for (int a = 0; a < n; ++a) {
        auto k = 1 + pick(5);
        for (std::uint64_t i = 0; i < k; ++i) {
            auto t = pick(horizon + 1);
            s.posts.push_back({s.agents[a], t, s.agents[a] + ":" + std::to_string(t) + ":" + std::to_string(i)});
        }
    }
    return s;
}

using detail::DigestAcc;
using detail::element_hash;
using detail::message_hash;

Digest config_digest(const GDConfig& c)
{
    DigestAcc d(c.agents);
    for (const auto& [p, s] : c.states)
        for (const auto& b : s) d.toggle(p, element_hash(b));
    return d.digest();
}

Digest config_digest(const CGDConfig& c)
{
    DigestAcc d(c.agents);
    for (const auto& [p, s] : c.states) {
        for (const auto& b : s.B.blocks()) d.toggle(p, b->digest());
        for (const auto& [q, dg] : s.outbox()) d.toggle(p, message_hash(q, dg));
    }
    return d.digest();
}

const AgentId& actor_of(const AnyTransition& t)
{
    return std::visit([](const auto& x) -> const AgentId& { return x.actor; }, t);
}

std::string describe(const AnyTransition& t)
{
    return std::visit([](const auto& x) { return gdiss::describe(x); }, t);
}

// ---- simulation ----

namespace {

struct Action {
    enum Kind { Join, Post, Offer, Follow } kind;
    AgentId actor;
    AgentId creator;  // Offer/Follow: whose initial block
    AgentId other;    // Offer: destination, Follow: introducer
    std::uint64_t step = 0;
    std::string text;
    std::string label;
};

std::vector<Action> expand(const Scenario& sc, const std::map<std::string, AgentId>& id)
{
    std::vector<Action> a;
    for (const auto& n : sc.agents) a.push_back({Action::Join, id.at(n), {}, {}, 0, {}, "join " + n});
    auto follow = [&](const std::string& x, const std::string& y, const std::string& v, std::uint64_t step) {
        a.push_back({Action::Offer, id.at(v), id.at(y), id.at(x), step, {}, "offer " + v + "->" + x + " of " + y});
        a.push_back({Action::Follow, id.at(x), id.at(y), id.at(v), step, {}, "follow " + x + " of " + y + " via " + v});
    };
    for (const auto& f : sc.friendships) {
        follow(f.b, f.a, f.a, f.step);
        follow(f.a, f.b, f.b, f.step);
    }
    for (const auto& f : sc.follows) follow(f.agent, f.creator, f.via, f.step);
    for (const auto& p : sc.posts) a.push_back({Action::Post, id.at(p.agent), {}, {}, p.step, p.text, "post " + p.agent});
    std::stable_sort(a.begin(), a.end(), [](const Action& x, const Action& y) { return x.step < y.step; });
    return a;
}

struct Candidate {
    std::string key;
    AnyTransition t;
};

// Outcome of trying a scripted action now.
struct Attempt {
    enum { Wait, Done, Fire } what = Wait;
    std::optional<AnyTransition> t;
};

struct SimpleBackend {
    SimpleProtocol proto;
    GDConfig c;
    const std::map<AgentId, AgentIdentity>& ids;

    Attempt scripted(const Action& a)
    {
        const auto& s = c.at(a.actor);
        switch (a.kind) {
        case Action::Join: {
            if (max_index(s, a.actor) > 0) return {Attempt::Done, {}};
            GDTransition t{GDKind::Create, a.actor, {a.actor, 1, std::nullopt}, std::nullopt};
            return {Attempt::Fire, t};
        }
        case Action::Post: {
            auto k = max_index(s, a.actor);
            if (k == 0) return {};
            return {Attempt::Fire, GDTransition{GDKind::Create, a.actor, {a.actor, k + 1, to_bytes(a.text)}, std::nullopt}};
        }
        case Action::Offer: return {Attempt::Done, {}};
        case Action::Follow: {
            if (proto == SimpleProtocol::AD) return {Attempt::Done, {}};
            SimpleBlock init{a.creator, 1, std::nullopt};
            if (s.count(init)) return {Attempt::Done, {}};
            return {Attempt::Fire, GDTransition{GDKind::Follow, a.actor, init, std::nullopt}};
        }
        }
        return {};
    }

    std::vector<Candidate> autonomous(const AgentId& p) const
    {
        std::vector<Candidate> out;
        for (auto& t : simple_enabled_frontier(proto, c, p))
            if (t.kind == GDKind::QSent)
                out.push_back({"QSent<" + t.source->hex() + ":" + describe(t.block), t});
        return out;
    }

    std::optional<std::string> check(const AnyTransition& t) const { return simple_check(proto, c, std::get<GDTransition>(t)); }
    void apply(const AnyTransition& t) { simple_apply_unchecked(c, std::get<GDTransition>(t)); }
    // Any step may change friendship, hence everyone's enabled set.
    std::vector<AgentId> affected(const AnyTransition&) const { return c.agents; }
    std::optional<std::string> after(const AnyTransition&) const { return std::nullopt; }
};

struct CGDBackend {
    CGDConfig c;
    const std::map<AgentId, AgentIdentity>& ids;

    std::optional<Ord> initial_at(const AgentId& holder, const AgentId& creator) const
    {
        const auto& B = c.at(holder).B;
        if (!B.has_creator(creator)) return std::nullopt;
        auto own = B.blocks_of(creator);
        if (own.empty() || !B[own.front()].initial()) return std::nullopt;
        return own.front();
    }

    Attempt scripted(const Action& a)
    {
        const auto& s = c.at(a.actor);
        switch (a.kind) {
        case Action::Join:
            if (s.B.has_creator(a.actor)) return {Attempt::Done, {}};
            return {Attempt::Fire, materialize_create(c, ids.at(a.actor), std::nullopt)};
        case Action::Post: {
            if (!s.B.has_creator(a.actor)) return {};
            auto t = materialize_create(c, ids.at(a.actor), to_bytes(a.text));
            if (cgd_check(c, t)) return {};
            return {Attempt::Fire, t};
        }
        case Action::Offer: {
            auto o = initial_at(a.actor, a.creator);
            if (!o) return {};
            if (s.sent(a.other, *o) || knows_holds(s.B, a.other, *o)) return {Attempt::Done, {}};
            return {Attempt::Fire, CGDTransition{CGDKind::Offer, a.actor, s.B.ptr(*o), std::nullopt, a.other}};
        }
        case Action::Follow: {
            if (initial_at(a.actor, a.creator)) return {Attempt::Done, {}};
            auto o = initial_at(a.other, a.creator);
            if (!o || !c.at(a.other).sent(a.actor, *o)) return {};
            return {Attempt::Fire, CGDTransition{CGDKind::Follow, a.actor, c.at(a.other).B.ptr(*o), std::nullopt, a.other}};
        }
        }
        return {};
    }

    std::vector<Candidate> autonomous(const AgentId& p) const
    {
        std::vector<Candidate> out;
        std::set<Digest> seen;
        for (auto& t : cgd_enabled(c, p)) {
            if (t.kind == CGDKind::Send)
                out.push_back({"Send>" + t.peer->hex() + ":" + t.block->digest().hex(), t});
            else if (t.kind == CGDKind::Receive && seen.insert(t.block->digest()).second)
                out.push_back({"Receive:" + t.block->digest().hex(), t});
        }
        return out;
    }

    std::optional<std::string> check(const AnyTransition& t) const { return cgd_check(c, std::get<CGDTransition>(t)); }
    void apply(const AnyTransition& t) { cgd_apply_unchecked(c, std::get<CGDTransition>(t)); }
    std::vector<AgentId> affected(const AnyTransition& any) const
    {
        const auto& t = std::get<CGDTransition>(any);
        std::vector<AgentId> v{t.actor};
        if ((t.kind == CGDKind::Offer || t.kind == CGDKind::Send) && *t.peer != t.actor) v.push_back(*t.peer);
        return v;
    }
    std::optional<std::string> after(const AnyTransition& any) const
    {
        const auto& p = actor_of(any);
        if (!c.at(p).B.is_closed(p)) return "blocklace not closed for its owner";
        return std::nullopt;
    }
};

template <class Backend>
void run_sim(Backend& be, const Scenario& sc, const Policy& pol, std::uint64_t max_ticks, SimResult& res,
             const std::map<std::string, AgentId>& id)
{
    const auto& agents = res.run.agents;
    auto actions = expand(sc, id);
    std::map<std::uint64_t, std::vector<AgentId>> crash_at;
    for (const auto& cr : sc.crashes) crash_at[cr.step].push_back(id.at(cr.agent));
    std::set<AgentId> crashed;

    std::map<std::string, LivenessEntry> ledger;
    std::map<AgentId, std::map<std::string, AnyTransition>> enabled;  // per agent, by class key
    std::set<std::pair<std::uint64_t, std::string>> order;               // (enabled since, key)
    std::map<std::string, AgentId> owner_of;
    std::mt19937_64 rng(pol.seed);
    DigestAcc dig(agents);

    auto refresh = [&](const AgentId& p, std::uint64_t tick) {
        std::map<std::string, AnyTransition> now;
        if (!crashed.count(p))
            for (auto& cand : be.autonomous(p)) now.emplace(p.hex() + "|" + cand.key, std::move(cand.t));
        auto& old = enabled[p];
        for (auto& [k, t] : old)
            if (!now.count(k)) {
                auto& e = ledger.at(k);
                e.max_wait = std::max(e.max_wait, tick - *e.enabled_since);
                order.erase({*e.enabled_since, k});
                e.enabled_since.reset();
            }
        for (auto& [k, t] : now)
            if (!old.count(k)) {
                auto [it, fresh] = ledger.try_emplace(k);
                if (fresh) {
                    it->second.label = k.substr(k.find('|') + 1);
                    it->second.actor = p;
                }
                it->second.enabled_since = tick;
                order.insert({tick, k});
            }
        old = std::move(now);
    };

    std::uint64_t tick = 0;
    for (const auto& p : agents) refresh(p, 0);
    for (; tick < max_ticks; ++tick) {
        if (auto it = crash_at.find(tick); it != crash_at.end())
            for (const auto& p : it->second) {
                crashed.insert(p);
                refresh(p, tick);
            }

        std::optional<AnyTransition> chosen;
        std::optional<std::string> fired_key;
        for (auto it = actions.begin(); it != actions.end() && it->step <= tick;) {
            if (crashed.count(it->actor)) {
                ++it;
                continue;
            }
            auto at = be.scripted(*it);
            if (at.what == Attempt::Done) {
                it = actions.erase(it);
                continue;
            }
            if (at.what == Attempt::Fire) {
                chosen = at.t;
                actions.erase(it);
                break;
            }
            ++it;
        }
        if (!chosen && !order.empty()) {
            auto pick = order.begin();
            if (pol.kind == PolicyKind::Random) {
                pick = std::next(order.begin(), long(rng() % order.size()));
            } else if (pol.kind == PolicyKind::Adversarial && tick - pick->first < pol.window) {
                // Prefer the most recently enabled classes; old ones are forced by the window.
                auto young = (order.size() + 1) / 2;
                pick = std::next(order.begin(), long(order.size() - young + rng() % young));
            }
            fired_key = pick->second;
            chosen = enabled.at(ledger.at(*fired_key).actor).at(*fired_key);
        }
        if (!chosen) {
            bool future = std::any_of(actions.begin(), actions.end(), [&](const Action& a) { return a.step > tick && !crashed.count(a.actor); });
            if (!future) break;  // quiescent and nothing left to script
            auto next = std::min_element(actions.begin(), actions.end(), [&](const Action& a, const Action& b) {
                auto ka = a.step > tick ? a.step : UINT64_MAX, kb = b.step > tick ? b.step : UINT64_MAX;
                return ka < kb;
            });
            tick = std::min(next->step, max_ticks) - 1;  // idle until the next scripted step
            continue;
        }
        if (auto why = be.check(*chosen)) {
            res.violations.push_back({"safety", res.run.steps.size(), res.run.steps.size(), *why, describe(*chosen)});
            break;
        }
        be.apply(*chosen);
        std::visit([&](const auto& t) { dig.add(t.actor, t); }, *chosen);
        res.run.steps.push_back({tick, *chosen, dig.digest()});
        std::visit(
            [&](const auto& t) {
                using T = std::decay_t<decltype(t)>;
                res.kinds[std::string(to_string(t.kind))]++;
                if constexpr (std::is_same_v<T, GDTransition>) {
                    if (t.kind == GDKind::Create) res.created_at[describe(t.block)] = tick;
                } else {
                    if (t.kind == CGDKind::Create) res.created_at[t.block->digest().hex()] = tick;
                }
            },
            *chosen);
        if (auto why = be.after(*chosen)) {
            res.violations.push_back({"owner-closedness", res.run.steps.size(), res.run.steps.size() - 1, *why, describe(*chosen)});
            break;
        }
        if (fired_key) {
            auto& e = ledger.at(*fired_key);
            e.fired++;
            e.max_wait = std::max(e.max_wait, tick - *e.enabled_since);
        }
        for (const auto& p : be.affected(*chosen)) refresh(p, tick + 1);
        // A fired class that is still enabled restarts its wait.
        if (fired_key) {
            auto& e = ledger.at(*fired_key);
            if (e.enabled_since && *e.enabled_since <= tick) {
                order.erase({*e.enabled_since, *fired_key});
                e.enabled_since = tick + 1;
                order.insert({tick + 1, *fired_key});
            }
        }
    }
    res.ticks = std::min(tick, max_ticks);
    for (auto& [k, e] : ledger) {
        if (e.enabled_since) {
            e.pending = true;
            e.max_wait = std::max(e.max_wait, res.ticks - std::min(res.ticks, *e.enabled_since));
            e.violated = sc.quiescent_expected && res.ticks - std::min(res.ticks, *e.enabled_since) >= pol.window;
        }
        res.liveness.push_back(e);
    }
    for (const auto& a : actions) res.unexecuted.push_back(a.label + " @" + std::to_string(a.step));
}

}  // namespace

std::size_t SimResult::pending_classes() const
{
    return std::size_t(std::count_if(liveness.begin(), liveness.end(), [](const LivenessEntry& e) { return e.pending; }));
}

nlohmann::json SimResult::summary() const
{
    nlohmann::json j{{"type", "summary"}, {"ticks", ticks}, {"steps", run.steps.size()}, {"kinds", kinds}};
    j["violations"] = nlohmann::json::array();
    for (const auto& v : violations) j["violations"].push_back(to_json(v));
    std::size_t violated = 0;
    std::uint64_t max_wait = 0;
    for (const auto& e : liveness) {
        violated += e.violated;
        max_wait = std::max(max_wait, e.max_wait);
    }
    j["liveness"] = {{"classes", liveness.size()}, {"pending", pending_classes()}, {"violated", violated}, {"max_wait", max_wait}};
    j["expectations"] = nlohmann::json::array();
    for (const auto& x : expectations)
        j["expectations"].push_back({{"agent", run.names.at(x.agent)}, {"creator", run.names.at(x.creator)}, {"missing", x.missing}});
    j["unexecuted"] = unexecuted;
    return j;
}

SimResult simulate(const Scenario& sc, const Policy& policy, std::uint64_t max_ticks)
{
    SimResult res;
    auto idents = sc.identities();
    std::map<std::string, AgentId> id;
    std::map<AgentId, AgentIdentity> by_id;
    for (const auto& [n, i] : idents) {
        id.emplace(n, i.id);
        by_id.emplace(i.id, i);
        res.run.names[i.id] = n;
        res.run.agents.push_back(i.id);
    }
    std::sort(res.run.agents.begin(), res.run.agents.end());
    res.run.protocol = sc.protocol;
    res.run.scheme = sc.scheme;
    res.run.seed = policy.seed;
    res.run.policy = std::string(to_string(policy.kind));
    res.run.scenario_digest = sc.digest();

    // Scripted follow relations, for the delivery expectations.
    std::set<std::pair<AgentId, AgentId>> follow_rel;
    for (const auto& f : sc.friendships) {
        follow_rel.insert({id.at(f.a), id.at(f.b)});
        follow_rel.insert({id.at(f.b), id.at(f.a)});
    }
    for (const auto& f : sc.follows) follow_rel.insert({id.at(f.agent), id.at(f.creator)});

    if (sc.protocol == Protocol::CGD) {
        CGDBackend be{CGDConfig::initial(res.run.agents, sc.scheme), by_id};
        run_sim(be, sc, policy, max_ticks, res, id);
        for (const auto& [x, y] : follow_rel) {
            const auto& Bx = be.c.at(x).B;
            const auto& By = be.c.at(y).B;
            std::size_t miss = 0;
            for (auto o : By.blocks_of(y)) miss += !Bx.contains(By[o].digest());
            res.expectations.push_back({x, y, miss});
        }
        res.gd_final = sigma(be.c);
        res.cgd_final = std::move(be.c);
    } else {
        auto proto = sc.protocol == Protocol::GD ? SimpleProtocol::GD : SimpleProtocol::AD;
        SimpleBackend be{proto, GDConfig::initial(res.run.agents), by_id};
        run_sim(be, sc, policy, max_ticks, res, id);
        for (const auto& [x, y] : follow_rel) {
            std::size_t miss = 0;
            for (const auto& b : be.c.at(y))
                if (b.creator == y && !be.c.at(x).count(b)) ++miss;
            res.expectations.push_back({x, y, miss});
        }
        res.gd_final = std::move(be.c);
    }
    return res;
}

}  // namespace gdiss
