#pragma once

#include "gdiss/block.hpp"

#include <boost/dynamic_bitset.hpp>

#include <iosfwd>
#include <optional>
#include <unordered_map>
#include <vector>

namespace gdiss {

using Bits = boost::dynamic_bitset<std::uint64_t>;
using Ord = std::uint32_t;

/// A set of blocks keyed by digest, with incrementally maintained observation
/// sets. Blocks are addressed by insertion ordinal; ordinals are stable for the
/// life of the store (and its copies).
///
/// All per-block bitsets share one width, capacity(), which only grows.
class Blocklace {
public:
    explicit Blocklace(SignatureScheme scheme = SignatureScheme::Mock,
                       std::optional<AgentId> owner = std::nullopt);

    SignatureScheme scheme() const { return scheme_; }
    const std::optional<AgentId>& owner() const { return owner_; }

    /// Validates the block and stores it. Duplicates are accepted as no-ops.
    BlockFault insert(const BlockPtr& b);
    /// Stores a block that was already validated under the same scheme.
    void insert_trusted(const BlockPtr& b);

    bool contains(const Digest& d) const { return by_digest_.count(d) != 0; }
    std::optional<Ord> find(const Digest& d) const;
    const BlockPtr& ptr(Ord o) const { return blocks_[o]; }
    const Block& operator[](Ord o) const { return *blocks_[o]; }
    std::size_t size() const { return blocks_.size(); }
    bool empty() const { return blocks_.empty(); }
    const std::vector<BlockPtr>& blocks() const { return blocks_; }
    std::size_t capacity() const { return cap_; }

    std::vector<Ord> roots() const;
    bool is_root(Ord o) const { return !pointed_[o]; }

    /// Reflexive: a block observes itself.
    bool observes(Ord a, Ord b) const { return obs_[a].test(b); }
    const Bits& observed_by(Ord a) const { return obs_[a]; }
    bool agent_observes(const AgentId& q, Ord b) const;
    /// Some q-block observes some q2-block.
    bool follows(const AgentId& q, const AgentId& q2) const;

    /// Blocks q must itself hold, judged from this store: the q-closure of
    /// every stored q-block. Unlike creator_observed(q), it does not pass
    /// through non-self pointers of foreign blocks, which q's own store may
    /// leave dangling. Cached until the next insertion.
    const Bits& held_by(const AgentId& q) const;
    /// Some block of q2 is in held_by(q).
    bool holds_from(const AgentId& q, const AgentId& q2) const;

    /// Ordinals of q's blocks; empty bitset of width capacity() if none.
    const Bits& creator_mask(const AgentId& q) const;
    /// Union of everything observed by q's blocks.
    const Bits& creator_observed(const AgentId& q) const;
    bool has_creator(const AgentId& q) const { return slot_of_.count(q) != 0; }
    std::vector<AgentId> creators() const;
    std::vector<Ord> blocks_of(const AgentId& q) const;

    bool is_closed(const AgentId& owner) const;
    /// is_closed(B ∪ {extra}) without materialising the union.
    bool closed_with(const Block& extra, const AgentId& owner) const;

    /// Ordinals of the owner-closure of a stored block. Throws std::runtime_error
    /// naming the dangling pointer when a required block is missing.
    std::vector<Ord> closure(Ord b, const AgentId& owner) const;
    /// Closure of a block that is not (yet) stored; the extra block itself is
    /// not part of the returned ordinals.
    std::vector<Ord> closure_of_extra(const Block& extra, const AgentId& owner) const;

    /// 1 for an initial block, else 1 + index of the self-predecessor.
    /// Throws std::runtime_error on a broken self-path.
    std::uint32_t index(Ord o) const;
    std::optional<Ord> self_predecessor(Ord o) const;
    /// Highest-index block of q, lowest ordinal on ties.
    std::optional<Ord> tip(const AgentId& q) const;
    std::uint32_t max_index(const AgentId& q) const;
    /// Pairs of distinct q-blocks sharing a self-predecessor (or both initial).
    std::vector<std::pair<Ord, Ord>> equivocations() const;

    /// Pointees before pointers; ties by ordinal.
    std::vector<Ord> topological_order() const;

    /// Every pointer whose target is not stored: (holder ordinal, pointer).
    std::vector<std::pair<Ord, SignedPointer>> dangling() const;

private:
    struct Waiter {
        Ord holder;
        AgentId pointer_creator;
    };
    struct CreatorSlot {
        AgentId id;
        Bits mask;
        Bits observed;
        std::vector<Ord> ords;
    };

    void grow_to(std::size_t n);
    bool bad_for_owner(const AgentId& owner, const AgentId& holder_creator, const AgentId& ptr_creator) const
    {
        return ptr_creator == owner || ptr_creator == holder_creator;
    }
    CreatorSlot& slot(const AgentId& q);

    SignatureScheme scheme_;
    std::optional<AgentId> owner_;
    std::size_t cap_ = 0;
    std::vector<BlockPtr> blocks_;
    std::unordered_map<Digest, Ord> by_digest_;
    std::vector<Bits> obs_;
    std::vector<char> pointed_;
    std::vector<std::int64_t> self_pred_;  // -1 unresolved or initial
    mutable std::vector<std::uint32_t> index_;  // 0 = not yet computed
    std::vector<std::uint16_t> slot_idx_;
    std::vector<CreatorSlot> slots_;
    std::unordered_map<AgentId, std::uint16_t> slot_of_;
    std::unordered_map<Digest, std::vector<Waiter>> waiting_;
    std::size_t owner_bad_ = 0;  // dangling pointers that break owner-closedness
    Bits empty_;
    mutable std::unordered_map<AgentId, std::pair<std::size_t, Bits>> held_;
};

// Free-function forms of the store operations.

std::vector<BlockPtr> roots(const Blocklace& B);

/// New block by `id`: points to every root, to the owner's own tip, and to any
/// block the owner-closure would otherwise miss, so that the closure of the new
/// block is exactly B plus the block. Without an own block in B, the result is
/// the initial block and the payload must be bottom.
BlockPtr create_block(const Blocklace& B, const AgentIdentity& id, const Payload& payload);

bool observes(const Blocklace& B, const Block& b, const Block& b2);
bool agent_observes(const Blocklace& B, const AgentId& q, const Block& b);
bool follows(const Blocklace& B, const AgentId& q, const AgentId& q2);
/// p has evidence that q follows p.
bool is_friend(const Blocklace& B, const AgentId& p, const AgentId& q);
bool is_closed(const Blocklace& B, const AgentId& owner);
Blocklace p_closure(const Blocklace& B, const Block& b, const AgentId& owner);
std::uint32_t index(const Blocklace& B, const Block& b);

/// One hex-encoded wire block per line, pointees first.
void dump_blocklace(const Blocklace& B, std::ostream& out);
Blocklace load_blocklace(std::istream& in, SignatureScheme scheme);

}  // namespace gdiss
