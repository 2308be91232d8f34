#pragma once

#include "gdiss/blocklace.hpp"
#include "gdiss/identity.hpp"

#include <string>

namespace testing_util {

inline gdiss::AgentIdentity ident(const std::string& name)
{
    return gdiss::gen_identity(gdiss::seed_from_name(name));
}

inline gdiss::Payload text(const std::string& s) { return gdiss::to_bytes(s); }

/// Creates and stores a block for `id` in `B`.
inline gdiss::BlockPtr grow(gdiss::Blocklace& B, const gdiss::AgentIdentity& id, const gdiss::Payload& x)
{
    auto b = gdiss::create_block(B, id, x);
    B.insert(b);
    return b;
}

}  // namespace testing_util
