#pragma once

#include "gdiss/cgd.hpp"
#include "gdiss/gd.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace gdiss {

/// (creator, index, payload) for every block; outbox and input are ignored.
/// Throws std::runtime_error on a broken self-path.
GDLocal sigma_local(const CGDLocalState& s);
GDConfig sigma(const CGDConfig& c);

/// Image of one CGD step taken at `before`; nullopt for a stutter.
std::optional<GDTransition> sigma_step(const CGDConfig& before, const CGDTransition& t);

struct SigmaRun {
    GDConfig initial;
    std::vector<GDTransition> steps;
    std::vector<std::size_t> origin;  // CGD step index of each image step
    std::size_t stutters = 0;
};

SigmaRun sigma_run(const CGDConfig& c0, const std::vector<CGDTransition>& steps);

struct Violation {
    std::string check;
    std::size_t configuration = 0;
    std::optional<std::size_t> transition;
    std::string clause;
    std::string details;
};

nlohmann::json to_json(const Violation& v);

/// σ(c)_p computed from the whole configuration equals σ(c_p).
bool check_piecemeal(const CGDConfig& c);
/// c1 ⪯ c2 componentwise implies σ(c1) ⊆ σ(c2) pointwise (vacuous otherwise).
bool check_up_condition(const CGDConfig& c1, const CGDConfig& c2);
/// Every non-stutter image step is GD-enabled at its image source; every stutter
/// is an Offer or Send and every Offer or Send is a stutter.
std::vector<Violation> check_local_safety(const CGDConfig& c0, const std::vector<CGDTransition>& steps);

/// Bounded productivity surrogate: for every GD delivery obligation of σ(c),
/// what in c would discharge it.
struct ObligationStatus {
    AgentId agent;
    SimpleBlock block;
    std::string status;  // receive-enabled | in-flight | send-enabled | create-pending | unmatched
};
std::vector<ObligationStatus> productivity_report(const CGDConfig& c);

// Cordial dependency graphs and the completion planner.

/// A block occurrence (dest empty) or an outbox message occurrence.
struct CVertex {
    AgentId holder;
    Digest block;
    std::optional<AgentId> dest;

    auto operator<=>(const CVertex&) const = default;
};

struct DependencyGraphCGD {
    std::vector<CVertex> vertices;  // sorted
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::vector<std::string> defects;

    std::optional<std::size_t> vertex(const CVertex& v) const;
    bool acyclic() const;
    bool valid() const { return defects.empty() && acyclic(); }
};

/// Every p-block held anywhere is held by p.
bool cgd_consistent(const CGDConfig& c);
/// Every local blocklace is closed for its owner.
bool cgd_complete(const CGDConfig& c);

/// Graph of the configuration reached from c0 by `steps`, with each received
/// occurrence linked to the message it was actually taken from.
DependencyGraphCGD cgd_dependency_graph(const CGDConfig& c0, const std::vector<CGDTransition>& steps);
std::optional<DependencyGraphCGD> find_cordial_graph(const CGDConfig& c);
bool is_cordial_consistent(const CGDConfig& c);

/// nullopt if c ⪯ c2 in the cordial order, else the failed clause.
std::optional<std::string> cgd_precedes(const CGDConfig& c, const CGDConfig& c2);

/// Transitions leading from c to exactly c2; blocks are taken from c2. Throws
/// PlanError (gd_graph.hpp) naming the failed clause.
std::vector<CGDTransition> cgd_plan(const CGDConfig& c, const CGDConfig& c2);

}  // namespace gdiss
