#pragma once

#include "gdiss/gd.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gdiss {

/// A block as held by one agent.
struct Occurrence {
    SimpleBlock block;
    AgentId holder;

    /// (creator, index, holder), then payload.
    bool operator<(const Occurrence& o) const
    {
        if (block.creator != o.block.creator) return block.creator < o.block.creator;
        if (block.index != o.block.index) return block.index < o.block.index;
        if (holder != o.holder) return holder < o.holder;
        return block.payload < o.block.payload;
    }
    bool operator==(const Occurrence&) const = default;
};

/// Edges point from a dependent occurrence to the occurrence it depends on.
struct DependencyGraphGD {
    std::vector<Occurrence> vertices;  // sorted
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::vector<std::string> defects;  // edges the definition requires but whose target is absent

    std::optional<std::size_t> vertex(const Occurrence& o) const;
    bool acyclic() const;
    bool valid() const { return defects.empty() && acyclic(); }
};

/// Which agent each non-creator occurrence of a non-initial block was received from.
using ReceiptMap = std::map<std::pair<AgentId, SimpleBlock>, AgentId>;

DependencyGraphGD gd_dependency_graph(const GDConfig& c, const ReceiptMap& receipts);
/// Receipts taken from the QSent steps of a run starting at c0.
DependencyGraphGD gd_dependency_graph(const GDConfig& c0, const std::vector<GDTransition>& steps);

/// Some acyclic dependency graph of c, built greedily with (creator, index, holder)
/// tie-breaking; nullopt if none exists.
std::optional<DependencyGraphGD> find_dependency_graph(const GDConfig& c);
bool is_dissemination_consistent(const GDConfig& c);

struct PlanError : std::runtime_error {
    std::string clause;
    PlanError(const std::string& clause_) : std::runtime_error("plan precondition failed: " + clause_), clause(clause_) {}
};

/// c ⪯ c2 in the dissemination order (subset, consistency, completeness, nested
/// acyclic dependency graphs); nullopt or the failed clause.
std::optional<std::string> gd_precedes(const GDConfig& c, const GDConfig& c2);

/// Transitions leading from c to c2, ordered along a dependency graph of c2
/// that extends one of c. Throws PlanError naming the violated precondition.
std::vector<GDTransition> gd_plan(const GDConfig& c, const GDConfig& c2);

}  // namespace gdiss
