#include "gdiss/sim.hpp"
#include "gdiss/wire.hpp"

#include "sim_internal.hpp"

#include <istream>
#include <ostream>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace gdiss {

using detail::DigestAcc;

namespace {

SimpleProtocol simple_of(Protocol p) { return p == Protocol::AD ? SimpleProtocol::AD : SimpleProtocol::GD; }

// Replays `r` from c0, calling visit(i, clause) per step; clause is set when
// `checked` and the step is not enabled.
template <class Visit>
void walk(const Run& r, bool checked, Visit&& visit)
{
    DigestAcc dig(r.agents);
    if (r.protocol == Protocol::CGD) {
        auto c = CGDConfig::initial(r.agents, r.scheme);
        for (std::size_t i = 0; i < r.steps.size(); ++i) {
            const auto& t = std::get<CGDTransition>(r.steps[i].t);
            std::optional<std::string> why;
            if (checked) why = cgd_check(c, t);
            if (!why) {
                cgd_apply_unchecked(c, t);
                dig.add(t.actor, t);
            }
            if (!visit(i, why, dig.digest())) return;
        }
    } else {
        auto proto = simple_of(r.protocol);
        auto c = GDConfig::initial(r.agents);
        for (std::size_t i = 0; i < r.steps.size(); ++i) {
            const auto& t = std::get<GDTransition>(r.steps[i].t);
            std::optional<std::string> why;
            if (checked) why = simple_check(proto, c, t);
            if (!why) {
                simple_apply_unchecked(c, t);
                dig.add(t.actor, t);
            }
            if (!visit(i, why, dig.digest())) return;
        }
    }
}

std::string payload_hex(const Payload& x) { return x ? to_hex(*x) : std::string{}; }

}  // namespace

ReplayReport replay(const Run& r)
{
    ReplayReport rep;
    walk(r, true, [&](std::size_t i, const std::optional<std::string>& why, const Digest& d) {
        if (why) {
            rep = {false, i, i, *why};
            return false;
        }
        if (d != r.steps[i].config) {
            rep = {false, i, i, "configuration digest mismatch"};
            return false;
        }
        rep.steps = i + 1;
        return true;
    });
    return rep;
}

void redigest(Run& r)
{
    walk(r, false, [&](std::size_t i, const std::optional<std::string>&, const Digest& d) {
        r.steps[i].config = d;
        return true;
    });
}

void write_runlog(const Run& r, std::ostream& out, const nlohmann::json& summary)
{
    nlohmann::json h{{"type", "header"},          {"protocol", to_string(r.protocol)}, {"scheme", to_string(r.scheme)},
                     {"seed", r.seed},            {"policy", r.policy},                {"scenario_digest", r.scenario_digest},
                     {"steps", r.steps.size()}};
    h["agents"] = nlohmann::json::array();
    for (const auto& a : r.agents) {
        auto it = r.names.find(a);
        h["agents"].push_back({{"name", it == r.names.end() ? a.short_hex() : it->second}, {"id", a.hex()}});
    }
    out << h.dump() << '\n';
    std::set<Digest> shipped;
    for (const auto& s : r.steps) {
        nlohmann::json j{{"type", "step"}, {"tick", s.tick}, {"config", s.config.hex()}};
        std::visit(
            [&](const auto& t) {
                using T = std::decay_t<decltype(t)>;
                j["kind"] = to_string(t.kind);
                j["actor"] = t.actor.hex();
                if constexpr (std::is_same_v<T, GDTransition>) {
                    j["creator"] = t.block.creator.hex();
                    j["index"] = t.block.index;
                    j["payload"] = t.block.payload ? nlohmann::json(payload_hex(t.block.payload)) : nlohmann::json(nullptr);
                    if (t.source) j["source"] = t.source->hex();
                } else {
                    j["block"] = t.block->digest().hex();
                    if (shipped.insert(t.block->digest()).second) j["wire"] = to_hex(encode_block(*t.block));
                    if (t.peer) j["peer"] = t.peer->hex();
                }
            },
            s.t);
        out << j.dump() << '\n';
    }
    if (!summary.is_null()) out << summary.dump() << '\n';
}

Run read_runlog(std::istream& in)
{
    Run r;
    std::string line;
    bool header = false;
    std::unordered_map<Digest, BlockPtr> blocks;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error("runlog line " + std::to_string(lineno) + ": " + e.what());
        }
        auto type = j.value("type", "");
        if (type == "header") {
            r.protocol = protocol_from_string(j.at("protocol").get<std::string>());
            r.scheme = scheme_from_string(j.at("scheme").get<std::string>());
            r.seed = j.value("seed", std::uint64_t{0});
            r.policy = j.value("policy", "");
            r.scenario_digest = j.value("scenario_digest", "");
            for (const auto& a : j.at("agents")) {
                auto id = AgentId::from_hex(a.at("id").get<std::string>());
                r.agents.push_back(id);
                r.names[id] = a.value("name", id.short_hex());
            }
            std::sort(r.agents.begin(), r.agents.end());
            header = true;
            continue;
        }
        if (type != "step") continue;
        if (!header) throw std::runtime_error("runlog: step before header");
        RunStep s;
        s.tick = j.at("tick");
        s.config = Digest::from_hex(j.at("config").get<std::string>());
        auto actor = AgentId::from_hex(j.at("actor").get<std::string>());
        auto kind = j.at("kind").get<std::string>();
        if (r.protocol == Protocol::CGD) {
            CGDTransition t;
            t.kind = cgd_kind_from_string(kind);
            t.actor = actor;
            auto d = Digest::from_hex(j.at("block").get<std::string>());
            if (j.contains("wire")) {
                auto b = decode_block_or_throw(from_hex(j.at("wire").get<std::string>()), r.scheme);
                if (b->digest() != d) throw std::runtime_error("runlog line " + std::to_string(lineno) + ": block digest mismatch");
                blocks[d] = b;
            }
            auto it = blocks.find(d);
            if (it == blocks.end()) throw std::runtime_error("runlog line " + std::to_string(lineno) + ": unknown block");
            t.block = it->second;
            if (t.kind == CGDKind::Create) t.payload = t.block->payload;
            if (j.contains("peer")) t.peer = AgentId::from_hex(j.at("peer").get<std::string>());
            s.t = t;
        } else {
            GDTransition t;
            t.kind = gd_kind_from_string(kind);
            t.actor = actor;
            t.block.creator = AgentId::from_hex(j.at("creator").get<std::string>());
            t.block.index = j.at("index");
            if (!j.at("payload").is_null()) t.block.payload = from_hex(j.at("payload").get<std::string>());
            if (j.contains("source")) t.source = AgentId::from_hex(j.at("source").get<std::string>());
            s.t = t;
        }
        r.steps.push_back(std::move(s));
    }
    if (!header) throw std::runtime_error("runlog: no header");
    return r;
}

Run project_run(const Run& r, const std::vector<AgentId>& keep)
{
    Run out = r;
    out.agents = keep;
    std::sort(out.agents.begin(), out.agents.end());
    std::set<AgentId> k(keep.begin(), keep.end());
    for (const auto& a : keep)
        if (!std::binary_search(r.agents.begin(), r.agents.end(), a)) throw std::invalid_argument("project_run: agent outside the run");
    out.names.clear();
    for (const auto& [a, n] : r.names)
        if (k.count(a)) out.names[a] = n;
    out.steps.clear();
    for (const auto& s : r.steps)
        if (k.count(actor_of(s.t))) out.steps.push_back(s);
    redigest(out);
    return out;
}

Run interleave(const Run& r1, const Run& r2, const std::vector<bool>& schedule)
{
    if (r1.protocol != r2.protocol) throw std::invalid_argument("interleave: protocols differ");
    for (const auto& a : r1.agents)
        if (std::binary_search(r2.agents.begin(), r2.agents.end(), a)) throw std::invalid_argument("interleave: agent sets overlap");
    auto twos = std::size_t(std::count(schedule.begin(), schedule.end(), true));
    if (twos != r2.steps.size() || schedule.size() - twos != r1.steps.size())
        throw std::invalid_argument("interleave: schedule does not match the run lengths");
    Run out = r1;
    out.agents.insert(out.agents.end(), r2.agents.begin(), r2.agents.end());
    std::sort(out.agents.begin(), out.agents.end());
    out.names.insert(r2.names.begin(), r2.names.end());
    out.steps.clear();
    std::size_t j = 0, k = 0;
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        RunStep s = schedule[i] ? r2.steps[k++] : r1.steps[j++];
        s.tick = i;
        out.steps.push_back(std::move(s));
    }
    redigest(out);
    return out;
}

}  // namespace gdiss
