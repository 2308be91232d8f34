#pragma once

#include "gdiss/identity.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace gdiss {

/// A payload is either bytes or bottom (nullopt).
using Payload = std::optional<Bytes>;

struct SignedPointer {
    AgentId creator;
    Digest digest;
    Signature signature;

    bool operator==(const SignedPointer&) const = default;
    /// Canonical order: (creator, digest).
    bool operator<(const SignedPointer& o) const
    {
        if (creator != o.creator) return creator < o.creator;
        return digest < o.digest;
    }
};

struct Block {
    AgentId creator;
    SignedPointer self;
    std::vector<SignedPointer> pointers;  // canonical order, no duplicates
    Payload payload;

    bool initial() const { return pointers.empty(); }
    const Digest& digest() const { return self.digest; }

    /// Pointers whose creator is this block's creator.
    std::vector<const SignedPointer*> self_pointers() const;

    bool operator==(const Block& o) const { return self == o.self; }
};

using BlockPtr = std::shared_ptr<const Block>;

/// Canonical body bytes: everything the self-digest covers.
Bytes encode_body(const AgentId& creator, const std::vector<SignedPointer>& sorted_pointers,
                  const Payload& payload);

/// Builds and signs a block. Pointers are canonicalised (sorted, deduplicated).
/// Throws std::invalid_argument if the initial/bottom invariant would be broken.
BlockPtr make_block(const AgentIdentity& id, std::vector<SignedPointer> pointers, Payload payload);

enum class BlockFault {
    none,
    shape,          // initial iff no pointers iff bottom payload violated
    pointer_order,  // pointers not strictly sorted by (creator, digest)
    self_pointers,  // non-initial block without exactly one self-pointer
    digest,         // self digest does not match body
    signature,      // self or pointer signature fails
};

std::string_view to_string(BlockFault f);

/// Structural and cryptographic validation of a single block.
BlockFault validate_block(const Block& b, SignatureScheme scheme);

}  // namespace gdiss
