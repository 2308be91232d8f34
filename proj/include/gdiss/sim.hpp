#pragma once

#include "gdiss/cgd.hpp"
#include "gdiss/gd.hpp"
#include "gdiss/refinement.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace gdiss {

enum class Protocol { GD, AD, CGD };
std::string_view to_string(Protocol p);
Protocol protocol_from_string(std::string_view s);

// ---- scenarios ----

/// Scripted, volitional behaviour. Agents are named; ids come from
/// seed_from_name. Every agent joins (creates its initial block) at tick 0.
struct Scenario {
    struct Friendship {
        std::string a, b;
        std::uint64_t step = 0;
    };
    /// `agent` follows `creator`, introduced by `via` (who offers the initial block).
    struct Follow {
        std::string agent, creator, via;
        std::uint64_t step = 0;
    };
    struct Post {
        std::string agent;
        std::uint64_t step = 0;
        std::string text;
    };
    struct Crash {
        std::string agent;
        std::uint64_t step = 0;
    };

    Protocol protocol = Protocol::CGD;
    SignatureScheme scheme = SignatureScheme::Mock;
    std::vector<std::string> agents;
    std::vector<Friendship> friendships;
    std::vector<Follow> follows;
    std::vector<Post> posts;
    std::vector<Crash> crashes;
    bool quiescent_expected = false;

    /// Accepts "posts" entries either as {agent, step, text} or as a
    /// repetition {agent, every, from, until, prefix}.
    static Scenario from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    std::string digest() const;

    std::map<std::string, AgentIdentity> identities() const;
    AgentId id_of(const std::string& name) const;

    /// n agents p1..pn, neighbours befriended, p3..pn following p1 along the
    /// chain; p1 posts every `head_every` ticks until `head_until`, every agent
    /// posts every `all_every` ticks until `all_until`.
    static Scenario chain(Protocol proto, int n, std::uint64_t head_every, std::uint64_t head_until,
                          std::uint64_t all_every, std::uint64_t all_until);
    /// Seeded random well-formed scenario over `n` agents named <prefix>1..n.
    static Scenario random(Protocol proto, int n, std::uint64_t horizon, std::uint64_t seed, const std::string& prefix = "a");
};

// ---- scheduling ----

enum class PolicyKind { Fair, Random, Adversarial };
std::string_view to_string(PolicyKind k);
PolicyKind policy_from_string(std::string_view s);

struct Policy {
    PolicyKind kind = PolicyKind::Fair;
    std::uint64_t seed = 0;
    /// Adversarial: a class enabled this many ticks is forced. Also the
    /// quiescence window for liveness verdicts.
    std::uint64_t window = 64;
};

// ---- runs ----

using AnyTransition = std::variant<GDTransition, CGDTransition>;

struct RunStep {
    std::uint64_t tick = 0;
    AnyTransition t;
    Digest config;  // digest of the configuration after the step
};

struct Run {
    Protocol protocol = Protocol::CGD;
    SignatureScheme scheme = SignatureScheme::Mock;
    std::vector<AgentId> agents;  // sorted universe
    std::map<AgentId, std::string> names;
    std::uint64_t seed = 0;
    std::string policy;
    std::string scenario_digest;
    std::vector<RunStep> steps;
};

const AgentId& actor_of(const AnyTransition& t);
std::string describe(const AnyTransition& t);

/// Multiset-hash digest: per agent, XOR of element hashes, then SHA-256 over
/// (agent, accumulator) in agent order.
Digest config_digest(const GDConfig& c);
Digest config_digest(const CGDConfig& c);

struct ReplayReport {
    bool ok = true;
    std::size_t steps = 0;
    std::optional<std::size_t> failed_step;
    std::string clause;
};

/// Applies every step through the checked engine from the initial
/// configuration and compares every digest.
ReplayReport replay(const Run& r);
/// Recomputes digests without checking enabledness.
void redigest(Run& r);

void write_runlog(const Run& r, std::ostream& out, const nlohmann::json& summary = nullptr);
/// Throws std::runtime_error on a malformed log. CGD blocks are carried as
/// wire bytes on their first appearance and by digest afterwards.
Run read_runlog(std::istream& in);

/// Restriction to `keep`: steps by other agents are removed and digests are
/// recomputed over `keep`. Local states keep alien blocks.
Run project_run(const Run& r, const std::vector<AgentId>& keep);
/// schedule[i] = false takes the next step of r1, true the next of r2.
Run interleave(const Run& r1, const Run& r2, const std::vector<bool>& schedule);

// ---- simulation ----

struct LivenessEntry {
    std::string label;
    AgentId actor;
    std::optional<std::uint64_t> enabled_since;
    std::uint64_t fired = 0;
    std::uint64_t max_wait = 0;  // longest enabled-unfired stretch, in ticks
    bool pending = false;
    bool violated = false;
};

struct Expectation {
    AgentId agent;
    AgentId creator;
    std::size_t missing = 0;
};

struct SimResult {
    Run run;
    std::uint64_t ticks = 0;
    std::vector<Violation> violations;
    std::vector<LivenessEntry> liveness;
    /// Per scripted follow relation: creator blocks held somewhere but not by the follower.
    std::vector<Expectation> expectations;
    std::vector<std::string> unexecuted;  // scripted actions never enabled
    std::map<std::string, std::size_t> kinds;
    GDConfig gd_final;
    std::optional<CGDConfig> cgd_final;
    /// Ticks at which each block was created (CGD by digest, GD as describe()).
    std::map<std::string, std::uint64_t> created_at;

    nlohmann::json summary() const;
    std::size_t pending_classes() const;
};

/// Deterministic in (scenario, policy). Every step is checked with the
/// engine's *_check before it is applied; a failure halts the run with an
/// indictment. CGD runs also check owner-closedness after every step.
SimResult simulate(const Scenario& sc, const Policy& policy, std::uint64_t max_ticks);

// ---- grassroots suite ----

struct GrassrootsReport {
    Protocol protocol = Protocol::GD;
    std::size_t interleavings = 0;
    bool interleaving_safe = true;
    bool projections_roundtrip = true;
    /// Delivery obligations of the embedded group still pending at the end
    /// of the interleaved run that were not pending in its own run.
    std::size_t pending_in_embedding = 0;
    bool liveness_preserved = true;
    bool witness_found = false;
    std::string witness;
    bool witness_impossible_alone = false;
    bool non_interfering = true;

    nlohmann::json to_json() const;
};

GrassrootsReport grassroots_suite(Protocol proto, std::uint64_t seed = 1, int schedules = 20);

/// Exhaustive bounded exploration from c0 (at most `cap` blocks per local
/// state; payload "x" for non-initial Creates).
std::vector<GDConfig> explore_simple(SimpleProtocol proto, const std::vector<AgentId>& agents, std::size_t cap);
std::vector<CGDConfig> explore_cgd(const std::vector<AgentIdentity>& ids, std::size_t cap);

}  // namespace gdiss
