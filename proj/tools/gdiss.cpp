#include "gdiss/apps.hpp"
#include "gdiss/net.hpp"
#include "gdiss/sim.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <sodium.h>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

using namespace gdiss;

namespace {

namespace fs = std::filesystem;

nlohmann::json read_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    return nlohmann::json::parse(in);
}

AgentIdentity load_identity(const std::string& path, SignatureScheme scheme)
{
    auto seeds = read_identity_file(path);
    if (seeds.empty()) throw std::runtime_error(path + ": no seed");
    return gen_identity(seeds.front(), scheme);
}

Blocklace load_store(const std::string& path, SignatureScheme scheme)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    return load_blocklace(in, scheme);
}

AgentId parse_agent(const std::string& text, const Blocklace& B)
{
    auto a = net::resolve_agent(text, B.creators());
    if (!a) throw std::runtime_error("unknown or ambiguous agent " + text);
    return *a;
}

void write_dumps(const apps::World& w, const std::vector<std::string>& names, const fs::path& dir, nlohmann::json& out)
{
    fs::create_directories(dir);
    for (const auto& n : names) {
        std::ofstream f(dir / (n + ".dump"));
        dump_blocklace(w.B(n), f);
        out["agents"][n] = w.id(n).hex();
    }
}

volatile std::sig_atomic_t g_stop = 0;

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"grassroots dissemination toolkit"};
    app.require_subcommand(1);
    std::string scheme_name = "mock";
    app.add_option("--scheme", scheme_name, "signature scheme: mock or ed25519")->check(CLI::IsMember({"mock", "ed25519"}));

    // keygen
    auto* keygen = app.add_subcommand("keygen", "write an identity file");
    std::string seed_hex, key_out;
    keygen->add_option("--seed", seed_hex, "64 hex chars; random when omitted");
    keygen->add_option("--out", key_out, "identity file")->required();

    // sim
    auto* sim = app.add_subcommand("sim", "simulation harness");
    sim->require_subcommand(1);
    auto* sim_run = sim->add_subcommand("run", "simulate a scenario");
    std::string scenario_file, policy_name = "fair", runlog_out;
    std::uint64_t seed = 0, max_steps = 10000, window = 64;
    sim_run->add_option("--scenario", scenario_file, "scenario JSON")->required();
    sim_run->add_option("--policy", policy_name)->check(CLI::IsMember({"fair", "random", "adversarial"}));
    sim_run->add_option("--seed", seed);
    sim_run->add_option("--max-steps", max_steps);
    sim_run->add_option("--window", window, "adversarial forcing window");
    sim_run->add_option("--out", runlog_out, "run log (JSON lines)");
    auto* sim_replay = sim->add_subcommand("replay", "re-check a run log");
    std::string runlog_in;
    sim_replay->add_option("--runlog", runlog_in)->required();
    auto* sim_gr = sim->add_subcommand("grassroots", "composition suite");
    std::string proto_name = "cgd";
    int schedules = 20;
    sim_gr->add_option("--protocol", proto_name)->check(CLI::IsMember({"gd", "ad", "cgd"}));
    sim_gr->add_option("--schedules", schedules);
    sim_gr->add_option("--seed", seed);

    // app
    auto* appc = app.add_subcommand("app", "application views over blocklace dumps");
    appc->require_subcommand(1);
    std::string store, viewer, root, founder, demo_dir;
    auto* feed = appc->add_subcommand("feed", "derive a feed");
    feed->add_option("--store", store)->required();
    feed->add_option("--viewer", viewer, "agent id or unique prefix")->required();
    auto* group = appc->add_subcommand("group", "derive a group transcript");
    group->add_option("--store", store)->required();
    group->add_option("--root", root, "<creator>:<index>")->required();
    group->add_option("--founder", founder, "defaults to the root's creator");
    auto* demo = appc->add_subcommand("demo", "run the scripted app scenarios and write per-agent dumps");
    demo->add_option("--out-dir", demo_dir)->required();

    // node
    auto* node = app.add_subcommand("node", "run a live agent; commands on stdin");
    std::string identity_file, listen = "127.0.0.1:0", policy_file, data_dir;
    std::vector<std::string> peers;
    node->add_option("--identity", identity_file)->required();
    node->add_option("--listen", listen);
    node->add_option("--peer", peers)->take_all();
    node->add_option("--follow-policy", policy_file);
    node->add_option("--data-dir", data_dir, "overrides GDISS_DATA_DIR");

    // sessions
    auto* sessions = app.add_subcommand("sessions", "merge node session logs and replay them through the engine");
    std::vector<std::string> session_files;
    std::string merged_out;
    sessions->add_option("logs", session_files)->required();
    sessions->add_option("--out", merged_out, "merged run log");

    CLI11_PARSE(app, argc, argv);
    auto scheme = scheme_from_string(scheme_name);

    try {
        if (*keygen) {
            Seed s;
            if (seed_hex.empty()) {
                if (sodium_init() < 0) throw std::runtime_error("libsodium unavailable");
                randombytes_buf(s.bytes.data(), s.bytes.size());
            } else {
                s = Seed::from_hex(seed_hex);
            }
            write_identity_file(key_out, s);
            std::cout << nlohmann::json{{"id", gen_identity(s, scheme).id.hex()}, {"scheme", scheme_name}}.dump() << "\n";
            return 0;
        }

        if (*sim_run) {
            auto sc = Scenario::from_json(read_json(scenario_file));
            Policy pol{policy_from_string(policy_name), seed, window};
            auto res = simulate(sc, pol, max_steps);
            auto summary = res.summary();
            if (!runlog_out.empty()) {
                std::ofstream out(runlog_out);
                write_runlog(res.run, out, summary);
            }
            std::cout << summary.dump() << "\n";
            return res.violations.empty() ? 0 : 2;
        }
        if (*sim_replay) {
            std::ifstream in(runlog_in);
            if (!in) throw std::runtime_error("cannot read " + runlog_in);
            auto rep = replay(read_runlog(in));
            nlohmann::json j{{"ok", rep.ok}, {"steps", rep.steps}, {"clause", rep.clause}};
            j["failed_step"] = rep.failed_step ? nlohmann::json(*rep.failed_step) : nlohmann::json(nullptr);
            std::cout << j.dump() << "\n";
            return rep.ok ? 0 : 2;
        }
        if (*sim_gr) {
            auto rep = grassroots_suite(protocol_from_string(proto_name), seed ? seed : 1, schedules);
            std::cout << rep.to_json().dump() << "\n";
            return 0;
        }

        if (*feed) {
            auto B = load_store(store, scheme);
            std::cout << to_json(apps::derive_feed(B, parse_agent(viewer, B))).dump() << "\n";
            return 0;
        }
        if (*group) {
            auto B = load_store(store, scheme);
            auto colon = root.rfind(':');
            if (colon == std::string::npos) throw std::runtime_error("--root must be <creator>:<index>");
            apps::PostId r{parse_agent(root.substr(0, colon), B), static_cast<std::uint32_t>(std::stoul(root.substr(colon + 1)))};
            auto f = founder.empty() ? r.creator : parse_agent(founder, B);
            std::cout << to_json(apps::derive_group(B, f, r)).dump() << "\n";
            return 0;
        }
        if (*demo) {
            fs::path dir = demo_dir;
            fs::create_directories(dir);
            nlohmann::json out;
            auto tw = apps::twitter_scenario(scheme);
            out["twitter"] = {{"response", tw.response.str()},
                              {"follower_count", tw.follower.count(tw.response)},
                              {"both_count", tw.both.count(tw.response)}};
            write_dumps(*tw.world, {"a", "f", "g", "r"}, dir / "twitter", out["twitter"]);
            auto g = apps::group_scenario(scheme);
            bool agree = true;
            for (const auto& [_, v] : g.members) agree = agree && v.transcript == g.founder.transcript;
            out["group"] = {{"root", g.founder.root.str()}, {"transcript", g.founder.transcript.size()}, {"members_agree", agree}};
            write_dumps(*g.world, {"F", "m1", "m2", "m3"}, dir / "group", out["group"]);
            std::cout << out.dump() << "\n";
            return 0;
        }

        if (*node) {
            net::NodeOptions o;
            o.identity = load_identity(identity_file, scheme);
            o.listen = listen;
            o.peers = peers;
            if (!policy_file.empty()) o.policy = net::FollowPolicy::load(policy_file);
            if (data_dir.empty())
                if (const char* env = std::getenv("GDISS_DATA_DIR")) data_dir = env;
            if (!data_dir.empty()) o.data_dir = data_dir;
            net::Node n(std::move(o));
            n.start();
            std::cout << nlohmann::json{{"ready", true}, {"id", n.id().hex()}, {"port", n.port()}}.dump() << std::endl;
            std::signal(SIGTERM, [](int) { g_stop = 1; });
            std::signal(SIGINT, [](int) { g_stop = 1; });
            std::string line;
            while (!g_stop && std::getline(std::cin, line)) {
                if (line == "quit") break;
                if (line.empty()) continue;
                std::cout << n.command(line) << std::endl;
            }
            // Without stdin the node keeps serving until signalled.
            while (!g_stop && std::cin.eof()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
            n.stop();
            return 0;
        }

        if (*sessions) {
            std::vector<net::Session> ss;
            for (const auto& f : session_files) {
                std::ifstream in(f);
                if (!in) throw std::runtime_error("cannot read " + f);
                ss.push_back(net::read_session(in));
            }
            auto m = net::merge_sessions(ss);
            nlohmann::json j{{"merged", m.ok}, {"steps", m.run.steps.size()}, {"error", m.error}};
            if (m.ok) {
                auto rep = replay(m.run);
                j["replay_ok"] = rep.ok;
                j["replay_clause"] = rep.clause;
                if (!merged_out.empty()) {
                    std::ofstream out(merged_out);
                    write_runlog(m.run, out);
                }
            }
            std::cout << j.dump() << "\n";
            return m.ok && j.value("replay_ok", false) ? 0 : 2;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
