#include "gdiss/apps.hpp"
#include "gdiss/net.hpp"
#include "gdiss/sim.hpp"
#include "gdiss/wire.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

namespace py = pybind11;
using namespace gdiss;

namespace {

py::object to_py(const nlohmann::json& j)
{
    switch (j.type()) {
    case nlohmann::json::value_t::null: return py::none();
    case nlohmann::json::value_t::boolean: return py::bool_(j.get<bool>());
    case nlohmann::json::value_t::number_integer: return py::int_(j.get<std::int64_t>());
    case nlohmann::json::value_t::number_unsigned: return py::int_(j.get<std::uint64_t>());
    case nlohmann::json::value_t::number_float: return py::float_(j.get<double>());
    case nlohmann::json::value_t::string: return py::str(j.get<std::string>());
    case nlohmann::json::value_t::array: {
        py::list l;
        for (const auto& e : j) l.append(to_py(e));
        return l;
    }
    case nlohmann::json::value_t::object: {
        py::dict d;
        for (const auto& [k, v] : j.items()) d[py::str(k)] = to_py(v);
        return d;
    }
    default: return py::none();
    }
}

nlohmann::json from_py(const py::handle& h)
{
    // Goes through Python's json module so that any JSON-compatible value works.
    auto dumps = py::module_::import("json").attr("dumps");
    return nlohmann::json::parse(dumps(h).cast<std::string>());
}

Blocklace load_dump(const std::string& path, const std::string& scheme)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    return load_blocklace(in, scheme_from_string(scheme));
}

AgentId agent_in(const Blocklace& B, const std::string& text)
{
    auto a = net::resolve_agent(text, B.creators());
    if (!a) throw py::value_error("unknown or ambiguous agent " + text);
    return *a;
}

AgentIdentity identity_from(const std::string& seed_or_name, const std::string& scheme)
{
    auto s = scheme_from_string(scheme);
    if (seed_or_name.size() == 64 && seed_or_name.find_first_not_of("0123456789abcdef") == std::string::npos)
        return gen_identity(Seed::from_hex(seed_or_name), s);
    return gen_identity(seed_from_name(seed_or_name), s);
}

// Live node with the GIL released around blocking calls.
class PyNode {
public:
    PyNode(const std::string& identity, const std::string& scheme, const std::string& listen,
           const std::vector<std::string>& peers, const std::vector<std::string>& allow, bool allow_any,
           std::optional<std::string> data_dir)
    {
        net::NodeOptions o;
        o.identity = identity_from(identity, scheme);
        o.listen = listen;
        o.peers = peers;
        for (const auto& a : allow) o.policy.allow.insert(AgentId::from_hex(a));
        o.policy.any = allow_any;
        if (data_dir) o.data_dir = *data_dir;
        o.log = [](const std::string&) {};
        node_ = std::make_unique<net::Node>(std::move(o));
    }
    void start()
    {
        py::gil_scoped_release nogil;
        node_->start();
    }
    void stop()
    {
        py::gil_scoped_release nogil;
        node_->stop();
    }
    std::string id() const { return node_->id().hex(); }
    int port() const { return node_->port(); }
    py::object command(const std::string& line)
    {
        std::string reply;
        {
            py::gil_scoped_release nogil;
            reply = node_->command(line);
        }
        return to_py(nlohmann::json::parse(reply));
    }
    py::object status()
    {
        nlohmann::json s;
        {
            py::gil_scoped_release nogil;
            s = node_->status();
        }
        return to_py(s);
    }
    std::vector<std::string> blocks_of(const std::string& creator)
    {
        std::set<Digest> ds;
        {
            py::gil_scoped_release nogil;
            ds = node_->blocks_of(AgentId::from_hex(creator));
        }
        std::vector<std::string> out;
        for (const auto& d : ds) out.push_back(d.hex());
        return out;
    }

private:
    std::unique_ptr<net::Node> node_;
};

}  // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "grassroots dissemination: blocklace, CGD engine, simulator, apps and live nodes";

    py::register_exception<TransitionError>(m, "TransitionError");
    py::register_exception<apps::GroupError>(m, "GroupError");

    m.def("sha256", [](py::bytes data) {
        std::string s = data;
        return hash_bytes(std::string_view(s)).hex();
    });
    m.def(
        "agent_id", [](const std::string& seed_or_name, const std::string& scheme) { return identity_from(seed_or_name, scheme).id.hex(); },
        py::arg("seed_or_name"), py::arg("scheme") = "mock",
        "Agent id (hex) for a 64-hex-char seed or, failing that, a name.");

    m.def(
        "initial_block_wire",
        [](const std::string& seed_or_name, const std::string& scheme) {
            auto b = make_block(identity_from(seed_or_name, scheme), {}, std::nullopt);
            auto w = encode_block(*b);
            return py::bytes(reinterpret_cast<const char*>(w.data()), w.size());
        },
        py::arg("seed_or_name"), py::arg("scheme") = "mock");
    m.def(
        "decode_block",
        [](py::bytes data, const std::string& scheme) {
            std::string s = data;
            auto r = decode_block(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()), scheme_from_string(scheme));
            if (!r) throw py::value_error(std::string(to_string(*r.error)) + (r.detail.empty() ? "" : ": " + r.detail));
            const auto& b = *r.block;
            py::dict d;
            d["creator"] = b.creator.hex();
            d["digest"] = b.digest().hex();
            py::list ptrs;
            for (const auto& p : b.pointers) ptrs.append(p.digest.hex());
            d["pointers"] = ptrs;
            d["payload"] = b.payload ? py::object(py::bytes(reinterpret_cast<const char*>(b.payload->data()), b.payload->size()))
                                     : py::object(py::none());
            return d;
        },
        py::arg("data"), py::arg("scheme") = "mock", "Decodes and verifies one wire block; raises ValueError naming the defect.");

    m.def(
        "load_dump",
        [](const std::string& path, const std::string& scheme) {
            auto B = load_dump(path, scheme);
            py::dict out;
            for (const auto& c : B.creators()) {
                py::list ds;
                for (auto o : B.blocks_of(c)) ds.append(B[o].digest().hex());
                out[py::str(c.hex())] = ds;
            }
            return out;
        },
        py::arg("path"), py::arg("scheme") = "mock", "Blocklace dump as {creator: [digest, ...]}.");

    m.def(
        "simulate",
        [](py::object scenario, const std::string& policy, std::uint64_t seed, std::uint64_t max_steps,
           std::optional<std::string> runlog) {
            auto sc = Scenario::from_json(from_py(scenario));
            SimResult res;
            {
                py::gil_scoped_release nogil;
                res = simulate(sc, {policy_from_string(policy), seed, 64}, max_steps);
            }
            auto summary = res.summary();
            if (runlog) {
                std::ofstream out(*runlog);
                write_runlog(res.run, out, summary);
            }
            return to_py(summary);
        },
        py::arg("scenario"), py::arg("policy") = "fair", py::arg("seed") = 0, py::arg("max_steps") = 10000,
        py::arg("runlog") = py::none(), "Runs a scenario (dict in the scenario-file format) and returns the summary.");
    m.def(
        "replay",
        [](const std::string& runlog) {
            std::ifstream in(runlog);
            if (!in) throw std::runtime_error("cannot read " + runlog);
            auto rep = replay(read_runlog(in));
            py::dict d;
            d["ok"] = rep.ok;
            d["steps"] = rep.steps;
            d["failed_step"] = rep.failed_step ? py::object(py::int_(*rep.failed_step)) : py::object(py::none());
            d["clause"] = rep.clause;
            return d;
        },
        py::arg("runlog"));
    m.def(
        "grassroots",
        [](const std::string& protocol, std::uint64_t seed, int schedules) {
            return to_py(grassroots_suite(protocol_from_string(protocol), seed, schedules).to_json());
        },
        py::arg("protocol") = "cgd", py::arg("seed") = 1, py::arg("schedules") = 20);

    m.def(
        "feed",
        [](const std::string& dump, const std::string& viewer, const std::string& scheme) {
            auto B = load_dump(dump, scheme);
            return to_py(to_json(apps::derive_feed(B, agent_in(B, viewer))));
        },
        py::arg("dump"), py::arg("viewer"), py::arg("scheme") = "mock");
    m.def(
        "group",
        [](const std::string& dump, const std::string& root, std::optional<std::string> founder, const std::string& scheme) {
            auto B = load_dump(dump, scheme);
            auto colon = root.rfind(':');
            if (colon == std::string::npos) throw py::value_error("root must be <creator>:<index>");
            apps::PostId r{agent_in(B, root.substr(0, colon)), static_cast<std::uint32_t>(std::stoul(root.substr(colon + 1)))};
            auto f = founder ? agent_in(B, *founder) : r.creator;
            return to_py(to_json(apps::derive_group(B, f, r)));
        },
        py::arg("dump"), py::arg("root"), py::arg("founder") = py::none(), py::arg("scheme") = "mock");
    m.def("twitter_scenario", [] {
        auto o = apps::twitter_scenario();
        py::dict d;
        d["follower"] = to_py(to_json(o.follower));
        d["both"] = to_py(to_json(o.both));
        d["response"] = o.response.str();
        d["follower_lacks_respondent"] = o.follower_lacks_respondent;
        return d;
    });
    m.def("group_scenario", [] {
        auto o = apps::group_scenario();
        py::dict d, members;
        d["founder"] = to_py(to_json(o.founder));
        for (const auto& [n, v] : o.members) members[py::str(n)] = to_py(to_json(v));
        d["members"] = members;
        d["unechoed"] = o.unechoed.str();
        return d;
    });

    py::class_<PyNode>(m, "Node")
        .def(py::init<const std::string&, const std::string&, const std::string&, const std::vector<std::string>&,
                      const std::vector<std::string>&, bool, std::optional<std::string>>(),
             py::arg("identity"), py::arg("scheme") = "mock", py::arg("listen") = "127.0.0.1:0",
             py::arg("peers") = std::vector<std::string>{}, py::arg("allow") = std::vector<std::string>{},
             py::arg("allow_any") = false, py::arg("data_dir") = py::none())
        .def("start", &PyNode::start)
        .def("stop", &PyNode::stop)
        .def_property_readonly("id", &PyNode::id)
        .def_property_readonly("port", &PyNode::port)
        .def("command", &PyNode::command, "Runs a stdin-style command (post, offer, accept, dump, status).")
        .def("status", &PyNode::status)
        .def("blocks_of", &PyNode::blocks_of);
}
