#pragma once

#include "gdiss/cgd.hpp"

#include <set>
#include <vector>

namespace gdiss {

/// Per-agent parameters of the event-loop realization; the mutable protocol
/// state lives in a CGDLocalState.
struct AgentRuntime {
    AgentIdentity id;
    std::vector<AgentId> universe;
    std::set<AgentId> accept;  // creators whose initial block this agent will follow
    bool accept_all = false;

    bool accepts(const AgentId& creator) const { return accept_all || accept.count(creator) != 0; }
};

enum class AgentEventKind { SetPayload, DecideOffer, Receive, DecideFollow, Drain };

struct AgentEvent {
    AgentEventKind kind = AgentEventKind::Drain;
    Payload payload;              // SetPayload
    BlockPtr block;               // DecideOffer, Receive
    std::optional<AgentId> peer;  // DecideOffer destination, Receive sender, DecideFollow creator

    static AgentEvent set_payload(Payload x) { return {AgentEventKind::SetPayload, std::move(x), nullptr, std::nullopt}; }
    static AgentEvent offer(const AgentId& to, BlockPtr b) { return {AgentEventKind::DecideOffer, {}, std::move(b), to}; }
    static AgentEvent receive(const AgentId& from, BlockPtr b) { return {AgentEventKind::Receive, {}, std::move(b), from}; }
    static AgentEvent follow(const AgentId& creator) { return {AgentEventKind::DecideFollow, {}, nullptr, creator}; }
    static AgentEvent drain() { return {}; }
};

/// One event of the loop. Returns the protocol transitions performed, in
/// order; Offer and Send entries are the messages to put on the wire (peer is
/// the destination). Receive and DecideFollow are followed by a drain.
/// A SetPayload on an agent without blocks first creates its initial block.
std::vector<CGDTransition> agent_step(CGDLocalState& s, AgentRuntime& a, const AgentEvent& e);

}  // namespace gdiss
