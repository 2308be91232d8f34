#include "gdiss/net.hpp"
#include "gdiss/wire.hpp"

#include <istream>
#include <unordered_map>

namespace gdiss::net {

Session read_session(std::istream& in)
{
    Session s;
    bool header = false;
    std::unordered_map<Digest, BlockPtr> blocks;
    std::string line;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& why) { return std::runtime_error("session line " + std::to_string(lineno) + ": " + why); };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw fail("not JSON");
        auto type = j.value("type", "");
        if (type == "session") {
            auto owner = AgentId::from_hex(j.at("owner").get<std::string>());
            if (header && owner != s.owner) throw fail("owner changed");
            s.owner = owner;
            s.scheme = scheme_from_string(j.at("scheme").get<std::string>());
            header = true;
            continue;
        }
        if (type != "step") continue;
        if (!header) throw fail("step before header");
        CGDTransition t;
        t.kind = cgd_kind_from_string(j.at("kind").get<std::string>());
        t.actor = s.owner;
        auto d = Digest::from_hex(j.at("block").get<std::string>());
        if (j.contains("wire")) {
            auto b = decode_block_or_throw(from_hex(j.at("wire").get<std::string>()), s.scheme);
            if (b->digest() != d) throw fail("block digest mismatch");
            blocks[d] = b;
        }
        auto it = blocks.find(d);
        if (it == blocks.end()) throw fail("unknown block " + d.short_hex());
        t.block = it->second;
        if (t.kind == CGDKind::Create) t.payload = t.block->payload;
        if (j.contains("peer")) t.peer = AgentId::from_hex(j.at("peer").get<std::string>());
        s.steps.push_back(std::move(t));
    }
    if (!header) throw std::runtime_error("session log has no header");
    return s;
}

MergeReport merge_sessions(const std::vector<Session>& sessions)
{
    MergeReport rep;
    if (sessions.empty()) {
        rep.ok = true;
        return rep;
    }
    std::set<AgentId> agents;
    for (const auto& s : sessions) {
        agents.insert(s.owner);
        for (const auto& t : s.steps) {
            agents.insert(t.block->creator);
            if (t.peer) agents.insert(*t.peer);
        }
    }
    auto scheme = sessions.front().scheme;
    rep.run.protocol = Protocol::CGD;
    rep.run.scheme = scheme;
    rep.run.agents.assign(agents.begin(), agents.end());
    rep.run.policy = "merged";
    auto c = CGDConfig::initial(rep.run.agents, scheme);

    std::vector<std::size_t> next(sessions.size(), 0);
    for (bool progress = true; progress;) {
        progress = false;
        for (std::size_t i = 0; i < sessions.size(); ++i) {
            const auto& steps = sessions[i].steps;
            while (next[i] < steps.size() && !cgd_check(c, steps[next[i]])) {
                const auto& t = steps[next[i]++];
                cgd_apply_unchecked(c, t);
                if (!c.at(t.actor).B.is_closed(t.actor)) {
                    rep.error = "owner-closedness lost after " + describe(t);
                    return rep;
                }
                rep.run.steps.push_back({rep.run.steps.size(), t, {}});
                progress = true;
            }
        }
    }
    for (std::size_t i = 0; i < sessions.size(); ++i)
        if (next[i] < sessions[i].steps.size()) {
            const auto& t = sessions[i].steps[next[i]];
            rep.error = "session " + sessions[i].owner.short_hex() + " step " + std::to_string(next[i]) + " (" + describe(t) +
                        ") never enabled: " + *cgd_check(c, t);
            return rep;
        }
    redigest(rep.run);
    rep.ok = true;
    return rep;
}

}  // namespace gdiss::net
