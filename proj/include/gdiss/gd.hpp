#pragma once

#include "gdiss/block.hpp"

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace gdiss {

/// (creator, index, payload); index is 1-based.
struct SimpleBlock {
    AgentId creator;
    std::uint32_t index = 1;
    Payload payload;

    auto operator<=>(const SimpleBlock&) const = default;
    bool operator==(const SimpleBlock&) const = default;
};

std::string describe(const SimpleBlock& b);

using GDLocal = std::set<SimpleBlock>;

/// Shared by the GD and AD reference models.
struct GDConfig {
    std::vector<AgentId> agents;  // sorted universe
    std::map<AgentId, GDLocal> states;

    static GDConfig initial(std::vector<AgentId> agents);
    const GDLocal& at(const AgentId& p) const;
    bool has_agent(const AgentId& p) const;
    std::size_t total_blocks() const;
    bool operator==(const GDConfig&) const = default;
};

enum class GDKind { Create, Follow, QSent };
std::string_view to_string(GDKind k);
GDKind gd_kind_from_string(std::string_view s);

struct GDTransition {
    GDKind kind = GDKind::Create;
    AgentId actor;
    SimpleBlock block;
    std::optional<AgentId> source;  // QSent only

    bool operator==(const GDTransition&) const = default;
};

std::string describe(const GDTransition& t);

/// Raised by the checked apply functions; `clause` names the failed guard.
struct TransitionError : std::runtime_error {
    std::string clause;
    TransitionError(const std::string& what, std::string clause_)
        : std::runtime_error(what), clause(std::move(clause_))
    {
    }
};

enum class SimpleProtocol { GD, AD };

/// nullopt when t is enabled at c, otherwise the violated clause.
/// A QSent without a source is enabled if some source qualifies.
std::optional<std::string> simple_check(SimpleProtocol proto, const GDConfig& c, const GDTransition& t);

/// Every enabled transition of p. Create entries carry a placeholder payload
/// (bottom at index 1, empty bytes otherwise); any payload is acceptable there.
std::vector<GDTransition> simple_enabled(SimpleProtocol proto, const GDConfig& c, const AgentId& p);

/// Only the frontier QSent candidates (next index per creator). Equal to the
/// exact set on configurations where each (creator, index) names one block,
/// which holds for every reachable configuration.
std::vector<GDTransition> simple_enabled_frontier(SimpleProtocol proto, const GDConfig& c, const AgentId& p);

void simple_apply_unchecked(GDConfig& c, const GDTransition& t);

inline std::optional<std::string> gd_check(const GDConfig& c, const GDTransition& t)
{
    return simple_check(SimpleProtocol::GD, c, t);
}
inline std::vector<GDTransition> gd_enabled(const GDConfig& c, const AgentId& p)
{
    return simple_enabled(SimpleProtocol::GD, c, p);
}
GDConfig gd_apply(const GDConfig& c, const GDTransition& t);

inline std::optional<std::string> ad_check(const GDConfig& c, const GDTransition& t)
{
    return simple_check(SimpleProtocol::AD, c, t);
}
inline std::vector<GDTransition> ad_enabled(const GDConfig& c, const AgentId& p)
{
    return simple_enabled(SimpleProtocol::AD, c, p);
}
GDConfig ad_apply(const GDConfig& c, const GDTransition& t);

/// p holds a q-block and q holds a p-block.
bool gd_friends(const GDConfig& c, const AgentId& p, const AgentId& q);
/// Highest index of a q-block held by p (0 if none).
std::uint32_t max_index(const GDLocal& s, const AgentId& q);
bool holds_index(const GDLocal& s, const AgentId& q, std::uint32_t i);

/// Every p-block held anywhere is held by p, except bare initial blocks, which
/// Follow adds without their creator having made them.
bool is_consistent(const GDConfig& c);
/// Every held i-indexed q-block comes with all lower-indexed q-blocks.
bool is_complete(const GDConfig& c);
/// Pointwise subset over the same universe.
bool below(const GDConfig& c, const GDConfig& c2);

/// Liveness obligations of p at c: the QSent classes (one per deliverable block).
std::vector<SimpleBlock> delivery_obligations(SimpleProtocol proto, const GDConfig& c, const AgentId& p);

}  // namespace gdiss
