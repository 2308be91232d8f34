#pragma once

#include "gdiss/agent.hpp"
#include "gdiss/sim.hpp"

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace gdiss::net {

/// Follow acceptance: creators listed in a policy file (one hex id per line,
/// '#' comments, "*" accepts anyone). An absent file denies everything.
struct FollowPolicy {
    std::set<AgentId> allow;
    bool any = false;

    static FollowPolicy load(const std::filesystem::path& p);
};

struct NodeOptions {
    AgentIdentity identity;
    std::string listen = "127.0.0.1:0";
    std::vector<std::string> peers;  // host:port, dialled and redialled
    FollowPolicy policy;
    /// Append-only block log and session log live here when set.
    std::optional<std::filesystem::path> data_dir;
    std::size_t max_frame = 1u << 20;
    std::size_t max_input = 100000;
    /// Create an empty-payload block after each Follow, so that friends
    /// learn of the new followership and start relaying.
    bool ack_follows = true;
    std::chrono::milliseconds backoff_min{50};
    std::chrono::milliseconds backoff_max{2000};
    std::function<void(const std::string&)> log;  // defaults to stderr
};

/// One live agent. All protocol work runs on a single event-loop thread; the
/// public methods are safe to call from any thread.
class Node {
public:
    explicit Node(NodeOptions opts);
    ~Node();
    Node(const Node&) = delete;
    Node& operator=(const Node&) = delete;

    void start();
    void stop();

    const AgentId& id() const;
    std::uint16_t port() const;

    BlockPtr post(const Payload& x);
    /// Offers `creator`'s initial block to `peer`; false if not possible.
    bool offer(const AgentId& peer, const AgentId& creator);
    /// Interactive acceptance: adds the creator to the allowlist.
    void accept(const AgentId& creator);
    void dump(const std::filesystem::path& p);

    std::size_t size();
    std::set<Digest> blocks_of(const AgentId& creator);
    std::vector<AgentId> peers();
    /// SHA-256 over the sorted digests of every stored block.
    Digest checkpoint();
    nlohmann::json status();

    /// Runs one stdin command (post, offer, accept, dump, status) and
    /// returns a one-line JSON reply.
    std::string command(const std::string& line);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Prefix lookup of an agent id among `known` (full hex also accepted).
std::optional<AgentId> resolve_agent(std::string_view text, const std::vector<AgentId>& known);

// ---- session logs ----

/// One node's recorded transitions, in the order it performed them.
struct Session {
    AgentId owner;
    SignatureScheme scheme = SignatureScheme::Mock;
    std::vector<CGDTransition> steps;
};

Session read_session(std::istream& in);

struct MergeReport {
    bool ok = false;
    std::string error;
    Run run;  // global CGD run, digests filled in
};

/// Interleaves the sessions into one global run. A step is taken as soon as
/// it is enabled in the global configuration; enabledness is preserved by
/// other agents' steps, so greedy merging succeeds whenever any causal
/// interleaving exists. Every step is checked, owner-closedness included.
MergeReport merge_sessions(const std::vector<Session>& sessions);

}  // namespace gdiss::net
