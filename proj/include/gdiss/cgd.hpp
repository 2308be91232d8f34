#pragma once

#include "gdiss/blocklace.hpp"
#include "gdiss/gd.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gdiss {

/// (B, Out) plus the input buffer used by the event-loop realization.
/// Out is kept per destination as a bitset over B's ordinals; every message's
/// block is in B by construction.
struct CGDLocalState {
    Blocklace B;
    std::map<AgentId, Bits> out;
    std::map<Digest, std::pair<BlockPtr, AgentId>> input;  // buffered block and who sent it

    CGDLocalState(SignatureScheme scheme, const AgentId& owner) : B(scheme, owner) {}

    const AgentId& owner() const { return *B.owner(); }
    bool sent(const AgentId& q, Ord o) const;
    bool sent(const AgentId& q, const Digest& d) const;
    /// Adds (q, B[o]) to Out; returns false if already present.
    bool add_out(const AgentId& q, Ord o);
    std::size_t out_size() const;
    /// Out as sorted (destination, digest) pairs.
    std::vector<std::pair<AgentId, Digest>> outbox() const;
    /// Ordinals of blocks addressed to q.
    std::vector<Ord> addressed_to(const AgentId& q) const;
};

struct CGDConfig {
    SignatureScheme scheme = SignatureScheme::Mock;
    std::vector<AgentId> agents;  // sorted universe
    std::map<AgentId, CGDLocalState> states;

    static CGDConfig initial(std::vector<AgentId> agents, SignatureScheme scheme = SignatureScheme::Mock);
    const CGDLocalState& at(const AgentId& p) const;
    CGDLocalState& at(const AgentId& p);
    bool has_agent(const AgentId& p) const { return states.count(p) != 0; }
    std::size_t total_blocks() const;
};

enum class CGDKind { Create, Offer, Follow, Send, Receive };
std::string_view to_string(CGDKind k);
CGDKind cgd_kind_from_string(std::string_view s);

struct CGDTransition {
    CGDKind kind = CGDKind::Create;
    AgentId actor;
    BlockPtr block;               // null in a Create template from cgd_enabled
    Payload payload;              // Create template payload (ignored once block is set)
    std::optional<AgentId> peer;  // destination for Offer/Send, outbox owner for Follow/Receive
};

std::string describe(const CGDTransition& t);

// Agent knowledge, evaluated on c_p alone. What p knows about another agent q
// is read from q's closure within c_p (Blocklace::held_by); what p knows about
// itself is plain observation.
bool knows_holds(const Blocklace& B, const AgentId& q, Ord o);
bool knows_follows(const Blocklace& B, const AgentId& q, const AgentId& r);
bool knows_block(const CGDConfig& c, const AgentId& p, const Block& b);
/// b is in the q-closure of c_p's q-blocks.
bool knows_q_knows(const CGDConfig& c, const AgentId& p, const AgentId& q, const Block& b);
/// A q2-block is in the q-closure of c_p's q-blocks.
bool knows_follows(const CGDConfig& c, const AgentId& p, const AgentId& q, const AgentId& q2);
bool knows_friends(const CGDConfig& c, const AgentId& p, const AgentId& q, const AgentId& q2);

/// Send's evidence at s's owner p that q follows r: the knowledge predicate,
/// or, for r = p, an Offer of p's own initial block to q already in Out (the
/// invitation stands in for q's acceptance until q's blocks arrive).
bool presumes_follows(const CGDLocalState& s, const AgentId& q, const AgentId& r);
/// p follows q and presumes q follows p.
bool presumes_friend(const CGDLocalState& s, const AgentId& q);
/// Blocks of B that Send(q, ·) may carry from state s.
std::vector<Ord> sendable(const CGDLocalState& s, const AgentId& q);

/// nullopt if t is enabled at c, otherwise the violated clause. A Create
/// template (null block) is checked for whether some Create is possible.
/// Follow/Receive without a peer are enabled if some peer qualifies.
std::optional<std::string> cgd_check(const CGDConfig& c, const CGDTransition& t);

/// Every enabled transition of p, Create as a template. Follow entries are
/// listed regardless of p's (volitional) acceptance.
std::vector<CGDTransition> cgd_enabled(const CGDConfig& c, const AgentId& p);

/// Builds the concrete Create for p with the given payload.
CGDTransition materialize_create(const CGDConfig& c, const AgentIdentity& id, const Payload& payload);

/// Throws TransitionError with the violated clause.
CGDConfig cgd_apply(const CGDConfig& c, const CGDTransition& t);
void cgd_apply_inplace(CGDConfig& c, const CGDTransition& t);
void cgd_apply_unchecked(CGDConfig& c, const CGDTransition& t);

/// Componentwise: blocklaces and outboxes are subsets.
bool cgd_below(const CGDConfig& c, const CGDConfig& c2);

// Enabledness tests used by schedulers that keep their own candidate lists.
bool send_enabled(const CGDConfig& c, const AgentId& p, const AgentId& q, Ord b);
bool receive_enabled(const CGDConfig& c, const AgentId& p, const AgentId& from, const Block& b);
std::vector<Ord> sendable_to(const CGDConfig& c, const AgentId& p, const AgentId& q);

}  // namespace gdiss
