#include "gdiss/apps.hpp"
#include "gdiss/wire.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <tuple>

namespace gdiss::apps {

std::string PostId::str() const { return creator.hex() + ":" + std::to_string(index); }

PostId PostId::parse(std::string_view s)
{
    auto colon = s.rfind(':');
    if (colon == std::string_view::npos) throw std::invalid_argument("post id must be <creator>:<index>");
    PostId id;
    id.creator = AgentId::from_hex(s.substr(0, colon));
    auto n = std::stoul(std::string(s.substr(colon + 1)));
    if (n == 0) throw std::invalid_argument("post index is 1-based");
    id.index = static_cast<std::uint32_t>(n);
    return id;
}

Bytes encode_payload(const AppPayload& p)
{
    Bytes out;
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Tweet>) {
                out.push_back(std::uint8_t(AppKind::Tweet));
                out.insert(out.end(), v.text.begin(), v.text.end());
            } else if constexpr (std::is_same_v<T, Respond>) {
                if (v.target.index == 0) throw std::invalid_argument("respond target index is 1-based");
                out.push_back(std::uint8_t(AppKind::Respond));
                out.insert(out.end(), v.target.creator.bytes.begin(), v.target.creator.bytes.end());
                put_u32(out, v.target.index);
                out.insert(out.end(), v.text.begin(), v.text.end());
            } else {
                if (!v.block) throw std::invalid_argument("echo without a block");
                out.push_back(std::uint8_t(AppKind::Echo));
                put_u32(out, v.index);
                auto w = encode_block(*v.block);
                out.insert(out.end(), w.begin(), w.end());
            }
        },
        p);
    return out;
}

AppPayload decode_payload(std::span<const std::uint8_t> data, SignatureScheme scheme)
{
    if (data.empty()) throw AppDecodeError("empty app payload");
    auto rest = data.subspan(1);
    switch (AppKind(data[0])) {
    case AppKind::Tweet:
        return Tweet{std::string(rest.begin(), rest.end())};
    case AppKind::Respond: {
        if (rest.size() < 36) throw AppDecodeError("respond: truncated");
        Respond r;
        std::copy_n(rest.begin(), 32, r.target.creator.bytes.begin());
        r.target.index = get_u32(rest.data() + 32);
        if (r.target.index == 0) throw AppDecodeError("respond: index 0");
        r.text.assign(rest.begin() + 36, rest.end());
        return r;
    }
    case AppKind::Echo: {
        if (rest.size() < 4) throw AppDecodeError("echo: truncated");
        Echo e;
        e.index = get_u32(rest.data());
        auto res = decode_block(rest.subspan(4), scheme);
        if (!res) throw AppDecodeError("echo: " + std::string(to_string(*res.error)));
        e.block = res.block;
        if (e.index == 0 || (e.index == 1) != e.block->initial()) throw AppDecodeError("echo: index inconsistent with block");
        return e;
    }
    }
    throw AppDecodeError("unknown app payload kind");
}

std::optional<AppPayload> try_decode(const Payload& x, SignatureScheme scheme)
{
    if (!x || x->empty()) return std::nullopt;
    try {
        return decode_payload(*x, scheme);
    } catch (const AppDecodeError&) {
        return std::nullopt;
    }
}

const FeedEntry* FeedView::find(const PostId& id) const
{
    for (const auto& e : entries)
        if (e.id == id) return &e;
    return nullptr;
}

std::size_t FeedView::count(const PostId& id) const
{
    return std::size_t(std::count_if(entries.begin(), entries.end(), [&](const FeedEntry& e) { return e.id == id; }));
}

namespace {

std::uint32_t safe_index(const Blocklace& B, Ord o)
{
    try {
        return B.index(o);
    } catch (const std::runtime_error&) {
        return 0;
    }
}

// Kahn's algorithm over stored pointers, smallest (creator, index, digest) first.
std::vector<Ord> linearize(const Blocklace& B)
{
    using Key = std::tuple<AgentId, std::uint32_t, Digest, Ord>;
    std::vector<std::size_t> missing(B.size(), 0);
    std::vector<std::vector<Ord>> users(B.size());
    for (Ord o = 0; o < B.size(); ++o)
        for (const auto& p : B[o].pointers)
            if (auto t = B.find(p.digest)) {
                ++missing[o];
                users[*t].push_back(o);
            }
    std::priority_queue<Key, std::vector<Key>, std::greater<>> ready;
    auto push = [&](Ord o) { ready.emplace(B[o].creator, safe_index(B, o), B[o].digest(), o); };
    for (Ord o = 0; o < B.size(); ++o)
        if (missing[o] == 0) push(o);
    std::vector<Ord> out;
    while (!ready.empty()) {
        Ord o = std::get<3>(ready.top());
        ready.pop();
        out.push_back(o);
        for (Ord u : users[o])
            if (--missing[u] == 0) push(u);
    }
    return out;
}

struct Post {
    PostId id;
    const Block* block;
    AppPayload payload;
};

// Tweet/Respond posts carried by block o: its own payload, or what it echoes
// (echoes of echoes are unwrapped a few levels deep).
void posts_of(const Block& b, std::uint32_t index, SignatureScheme scheme, bool echoed, int depth,
              std::vector<std::pair<Post, bool>>& out)
{
    auto p = try_decode(b.payload, scheme);
    if (!p) return;
    if (auto* e = std::get_if<Echo>(&*p)) {
        if (depth > 0) posts_of(*e->block, e->index, scheme, true, depth - 1, out);
        return;
    }
    out.push_back({Post{{b.creator, index}, &b, *p}, echoed});
}

std::string text_of(const AppPayload& p)
{
    if (auto* t = std::get_if<Tweet>(&p)) return t->text;
    return std::get<Respond>(p).text;
}

std::optional<PostId> parent_of(const AppPayload& p)
{
    if (auto* r = std::get_if<Respond>(&p)) return r->target;
    return std::nullopt;
}

}  // namespace

FeedView derive_feed(const Blocklace& B, const AgentId& viewer)
{
    FeedView v;
    v.viewer = viewer;
    std::set<PostId> seen;
    for (Ord o : linearize(B)) {
        std::vector<std::pair<Post, bool>> ps;
        posts_of(B[o], safe_index(B, o), B.scheme(), false, 4, ps);
        for (auto& [post, echoed] : ps) {
            // A block echoed before it arrived directly keeps its echo identity.
            auto direct = B.find(post.block->digest());
            if (echoed && direct) post.id.index = safe_index(B, *direct);
            if (!seen.insert(post.id).second) continue;
            v.entries.push_back({post.id, text_of(post.payload), parent_of(post.payload), post.block->digest(), false,
                                 echoed && !direct});
        }
    }
    for (auto& e : v.entries)
        e.orphaned = e.parent && !seen.count(*e.parent);
    return v;
}

GroupView derive_group(const Blocklace& B, const AgentId& founder, const PostId& root)
{
    GroupView g;
    g.root = root;
    g.founder = founder;
    g.members = {founder};

    // Candidate messages with the position of their founder carrier.
    struct Msg {
        AppPayload payload;
        std::uint32_t carrier;
    };
    std::map<PostId, Msg> msgs;
    std::optional<AppPayload> root_payload;
    for (Ord o : B.blocks_of(founder)) {
        auto p = try_decode(B[o].payload, B.scheme());
        if (!p) continue;
        auto at = safe_index(B, o);
        PostId id{founder, at};
        const AppPayload* content = &*p;
        std::optional<AppPayload> inner;
        if (auto* e = std::get_if<Echo>(&*p)) {
            inner = try_decode(e->block->payload, B.scheme());
            if (!inner || std::holds_alternative<Echo>(*inner)) continue;
            id = {e->block->creator, e->index};
            content = &*inner;
        }
        auto it = msgs.find(id);
        if (it == msgs.end() || it->second.carrier > at) msgs[id] = {*content, at};
    }
    if (auto it = msgs.find(root); it != msgs.end()) {
        root_payload = it->second.payload;
    } else {
        for (Ord o : B.blocks_of(root.creator))
            if (safe_index(B, o) == root.index)
                if (auto p = try_decode(B[o].payload, B.scheme()); p && !std::holds_alternative<Echo>(*p)) root_payload = *p;
    }
    if (!root_payload) throw GroupError("group root " + root.str() + " not found");

    std::map<PostId, std::vector<std::pair<std::uint32_t, PostId>>> children;
    for (const auto& [id, m] : msgs)
        if (auto par = parent_of(m.payload); par && id != root) children[*par].push_back({m.carrier, id});
    for (auto& [_, kids] : children) std::sort(kids.begin(), kids.end());

    std::set<PostId> visited;
    std::function<void(const PostId&, const AppPayload&)> visit = [&](const PostId& id, const AppPayload& p) {
        if (!visited.insert(id).second) return;
        g.transcript.push_back({id, text_of(p), id == root ? std::nullopt : parent_of(p)});
        if (id != root) g.members.insert(id.creator);
        for (const auto& [_, kid] : children[id]) visit(kid, msgs.at(kid).payload);
    };
    visit(root, *root_payload);
    return g;
}

nlohmann::json to_json(const FeedView& v)
{
    nlohmann::json j{{"viewer", v.viewer.hex()}, {"entries", nlohmann::json::array()}};
    for (const auto& e : v.entries) {
        nlohmann::json x{{"author", e.id.creator.hex()}, {"index", e.id.index}, {"text", e.text},
                         {"digest", e.digest.hex()}, {"orphaned", e.orphaned}, {"via_echo", e.via_echo}};
        x["parent"] = e.parent ? nlohmann::json(e.parent->str()) : nlohmann::json(nullptr);
        j["entries"].push_back(std::move(x));
    }
    return j;
}

nlohmann::json to_json(const GroupView& v)
{
    nlohmann::json j{{"root", v.root.str()}, {"founder", v.founder.hex()}, {"public", v.is_public},
                     {"transcript", nlohmann::json::array()}, {"members", nlohmann::json::array()}};
    for (const auto& m : v.transcript) {
        nlohmann::json x{{"author", m.id.creator.hex()}, {"index", m.id.index}, {"text", m.text}};
        x["parent"] = m.parent ? nlohmann::json(m.parent->str()) : nlohmann::json(nullptr);
        j["transcript"].push_back(std::move(x));
    }
    for (const auto& a : v.members) j["members"].push_back(a.hex());
    return j;
}

// ---- World ----

World::World(const std::vector<std::string>& names, SignatureScheme scheme)
{
    std::vector<AgentId> agents;
    for (const auto& n : names) {
        auto id = gen_identity(seed_from_name(n), scheme);
        agents.push_back(id.id);
        ids_.emplace(n, std::move(id));
    }
    c_ = CGDConfig::initial(agents, scheme);
    for (const auto& [_, id] : ids_) cgd_apply_inplace(c_, materialize_create(c_, id, Payload{}));
}

const AgentId& World::id(const std::string& name) const { return ids_.at(name).id; }

void World::befriend(const std::string& a, const std::string& b)
{
    auto one_way = [&](const AgentId& from, const AgentId& to) {
        const auto& B = c_.at(from).B;
        auto init = B.ptr(B.blocks_of(from).front());
        cgd_apply_inplace(c_, {CGDKind::Offer, from, init, {}, to});
        cgd_apply_inplace(c_, {CGDKind::Follow, to, init, {}, from});
    };
    one_way(id(a), id(b));
    one_way(id(b), id(a));
}

BlockPtr World::post(const std::string& name, const AppPayload& p)
{
    auto t = materialize_create(c_, ids_.at(name), Payload{encode_payload(p)});
    cgd_apply_inplace(c_, t);
    return t.block;
}

PostId World::id_of(const BlockPtr& b) const
{
    const auto& B = c_.at(b->creator).B;
    return {b->creator, B.index(*B.find(b->digest()))};
}

std::size_t World::settle()
{
    std::size_t n = 0;
    for (bool again = true; again;) {
        again = false;
        for (const auto& p : c_.agents)
            for (const auto& t : cgd_enabled(c_, p))
                if ((t.kind == CGDKind::Send || t.kind == CGDKind::Receive) && !cgd_check(c_, t)) {
                    cgd_apply_inplace(c_, t);
                    ++n;
                    again = true;
                }
    }
    return n;
}

void World::greet()
{
    for (int round = 0; round < 2; ++round) {
        for (const auto& [name, _] : ids_) post(name, Tweet{"hello from " + name});
        settle();
    }
}

TwitterOutcome twitter_scenario(SignatureScheme scheme)
{
    auto wp = std::make_shared<World>(std::vector<std::string>{"a", "f", "g", "r"}, scheme);
    auto& w = *wp;
    w.befriend("a", "f");
    w.befriend("a", "r");
    w.befriend("a", "g");
    w.befriend("r", "g");
    w.greet();
    auto tweet = w.post("a", Tweet{"first light"});
    w.settle();
    auto resp = w.post("r", Respond{w.id_of(tweet), "nice"});
    w.settle();
    auto rid = w.id_of(resp);
    w.post("a", Echo{resp, rid.index});
    w.settle();

    TwitterOutcome out;
    out.response = rid;
    out.follower = derive_feed(w.B("f"), w.id("f"));
    out.both = derive_feed(w.B("g"), w.id("g"));
    out.follower_lacks_respondent = w.B("f").blocks_of(w.id("r")).empty();
    out.world = wp;
    return out;
}

GroupOutcome group_scenario(SignatureScheme scheme)
{
    auto wp = std::make_shared<World>(std::vector<std::string>{"F", "m1", "m2", "m3"}, scheme);
    auto& w = *wp;
    for (const auto* m : {"m1", "m2", "m3"}) w.befriend("F", m);
    w.greet();
    auto root = w.id_of(w.post("F", Tweet{"lunch on friday?"}));
    w.settle();
    auto echo = [&](const BlockPtr& b) {
        w.settle();
        auto id = w.id_of(b);
        w.post("F", Echo{b, id.index});
        w.settle();
        return id;
    };
    auto r1 = echo(w.post("m1", Respond{root, "yes"}));
    echo(w.post("m2", Respond{r1, "me too"}));
    auto r3 = echo(w.post("m3", Respond{root, "only after one"}));
    w.post("F", Respond{r3, "one it is"});
    w.settle();
    auto late = w.post("m2", Respond{root, "actually, no"});
    w.settle();

    GroupOutcome out;
    out.unechoed = w.id_of(late);
    out.world = wp;
    out.founder = derive_group(w.B("F"), w.id("F"), root);
    for (const auto* m : {"m1", "m2", "m3"}) out.members[m] = derive_group(w.B(m), w.id("F"), root);
    return out;
}

}  // namespace gdiss::apps
