#include "gdiss/blocklace.hpp"

#include "gdiss/wire.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <queue>
#include <stdexcept>

namespace gdiss {

Blocklace::Blocklace(SignatureScheme scheme, std::optional<AgentId> owner)
    : scheme_(scheme), owner_(std::move(owner))
{
}

void Blocklace::grow_to(std::size_t n)
{
    if (n <= cap_) return;
    std::size_t cap = std::max<std::size_t>(64, cap_);
    while (cap < n) cap *= 2;
    cap_ = cap;
    for (auto& b : obs_) b.resize(cap_);
    for (auto& s : slots_) {
        s.mask.resize(cap_);
        s.observed.resize(cap_);
    }
    empty_.resize(cap_);
}

Blocklace::CreatorSlot& Blocklace::slot(const AgentId& q)
{
    auto it = slot_of_.find(q);
    if (it != slot_of_.end()) return slots_[it->second];
    slot_of_.emplace(q, static_cast<std::uint16_t>(slots_.size()));
    slots_.push_back(CreatorSlot{q, Bits(cap_), Bits(cap_), {}});
    return slots_.back();
}

std::optional<Ord> Blocklace::find(const Digest& d) const
{
    auto it = by_digest_.find(d);
    if (it == by_digest_.end()) return std::nullopt;
    return it->second;
}

BlockFault Blocklace::insert(const BlockPtr& b)
{
    if (contains(b->digest())) return BlockFault::none;
    auto fault = validate_block(*b, scheme_);
    if (fault != BlockFault::none) return fault;
    insert_trusted(b);
    return BlockFault::none;
}

void Blocklace::insert_trusted(const BlockPtr& b)
{
    if (contains(b->digest())) return;
    const Ord x = static_cast<Ord>(blocks_.size());
    grow_to(x + 1);
    blocks_.push_back(b);
    by_digest_.emplace(b->digest(), x);
    obs_.emplace_back(cap_);
    obs_[x].set(x);
    pointed_.push_back(0);
    self_pred_.push_back(-1);
    index_.push_back(0);
    slot(b->creator);
    const std::uint16_t si = slot_of_.at(b->creator);
    slot_idx_.push_back(si);

    for (const auto& h : b->pointers) {
        auto it = by_digest_.find(h.digest);
        if (it != by_digest_.end() && it->second != x) {
            Ord y = it->second;
            obs_[x] |= obs_[y];
            pointed_[y] = 1;
            if (h.creator == b->creator) self_pred_[x] = y;
        } else {
            waiting_[h.digest].push_back(Waiter{x, h.creator});
            if (owner_ && bad_for_owner(*owner_, b->creator, h.creator)) ++owner_bad_;
        }
    }

    auto wit = waiting_.find(b->digest());
    if (wit != waiting_.end()) {
        Bits holders(cap_);
        for (const auto& w : wit->second) {
            const Block& hb = *blocks_[w.holder];
            holders.set(w.holder);
            if (owner_ && bad_for_owner(*owner_, hb.creator, w.pointer_creator)) --owner_bad_;
            if (w.pointer_creator == hb.creator) self_pred_[w.holder] = x;
        }
        waiting_.erase(wit);
        pointed_[x] = 1;
        for (Ord y = 0; y < x; ++y) {
            if (obs_[y].intersects(holders)) {
                obs_[y] |= obs_[x];
                slots_[slot_idx_[y]].observed |= obs_[x];
            }
        }
    }

    auto& s = slots_[si];
    s.mask.set(x);
    s.observed |= obs_[x];
    s.ords.push_back(x);
}

std::vector<Ord> Blocklace::roots() const
{
    std::vector<Ord> out;
    for (Ord o = 0; o < blocks_.size(); ++o)
        if (!pointed_[o]) out.push_back(o);
    return out;
}

bool Blocklace::agent_observes(const AgentId& q, Ord b) const
{
    auto it = slot_of_.find(q);
    return it != slot_of_.end() && slots_[it->second].observed.test(b);
}

bool Blocklace::follows(const AgentId& q, const AgentId& q2) const
{
    auto a = slot_of_.find(q);
    auto b = slot_of_.find(q2);
    if (a == slot_of_.end() || b == slot_of_.end()) return false;
    return slots_[a->second].observed.intersects(slots_[b->second].mask);
}

const Bits& Blocklace::held_by(const AgentId& q) const
{
    auto& [at, bits] = held_[q];
    if (at == blocks_.size() && bits.size() == cap_) return bits;
    at = blocks_.size();
    bits = Bits(cap_);
    std::vector<Ord> todo = blocks_of(q);
    for (Ord o : todo) bits.set(o);
    while (!todo.empty()) {
        Ord o = todo.back();
        todo.pop_back();
        const auto& b = *blocks_[o];
        for (const auto& h : b.pointers) {
            if (b.creator != q && h.creator != b.creator && h.creator != q) continue;
            auto t = find(h.digest);
            if (t && !bits.test(*t)) {
                bits.set(*t);
                todo.push_back(*t);
            }
        }
    }
    return bits;
}

bool Blocklace::holds_from(const AgentId& q, const AgentId& q2) const
{
    if (!has_creator(q) || !has_creator(q2)) return false;
    return held_by(q).intersects(creator_mask(q2));
}

const Bits& Blocklace::creator_mask(const AgentId& q) const
{
    auto it = slot_of_.find(q);
    return it == slot_of_.end() ? empty_ : slots_[it->second].mask;
}

const Bits& Blocklace::creator_observed(const AgentId& q) const
{
    auto it = slot_of_.find(q);
    return it == slot_of_.end() ? empty_ : slots_[it->second].observed;
}

std::vector<AgentId> Blocklace::creators() const
{
    std::vector<AgentId> out;
    for (const auto& s : slots_) out.push_back(s.id);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<Ord> Blocklace::blocks_of(const AgentId& q) const
{
    auto it = slot_of_.find(q);
    return it == slot_of_.end() ? std::vector<Ord>{} : slots_[it->second].ords;
}

bool Blocklace::is_closed(const AgentId& owner) const
{
    if (owner_ && *owner_ == owner) return owner_bad_ == 0;
    for (const auto& [d, ws] : waiting_)
        for (const auto& w : ws)
            if (bad_for_owner(owner, blocks_[w.holder]->creator, w.pointer_creator)) return false;
    return true;
}

bool Blocklace::closed_with(const Block& extra, const AgentId& owner) const
{
    if (contains(extra.digest())) return is_closed(owner);
    if (owner_ && *owner_ == owner) {
        std::size_t resolved = 0;
        auto it = waiting_.find(extra.digest());
        if (it != waiting_.end())
            for (const auto& w : it->second)
                if (bad_for_owner(owner, blocks_[w.holder]->creator, w.pointer_creator)) ++resolved;
        if (owner_bad_ != resolved) return false;
    } else {
        for (const auto& [d, ws] : waiting_) {
            if (d == extra.digest()) continue;
            for (const auto& w : ws)
                if (bad_for_owner(owner, blocks_[w.holder]->creator, w.pointer_creator)) return false;
        }
    }
    for (const auto& h : extra.pointers)
        if (!contains(h.digest) && bad_for_owner(owner, extra.creator, h.creator)) return false;
    return true;
}

namespace {

[[noreturn]] void missing(const SignedPointer& h)
{
    throw std::runtime_error("closure needs missing block " + h.creator.short_hex() + ":" +
                             h.digest.short_hex());
}

}  // namespace

std::vector<Ord> Blocklace::closure(Ord b, const AgentId& owner) const
{
    std::vector<char> seen(blocks_.size(), 0);
    std::vector<Ord> out{b}, stack{b};
    seen[b] = 1;
    while (!stack.empty()) {
        Ord v = stack.back();
        stack.pop_back();
        const Block& vb = *blocks_[v];
        for (const auto& h : vb.pointers) {
            if (!(vb.creator == owner || h.creator == vb.creator || h.creator == owner)) continue;
            auto y = find(h.digest);
            if (!y) missing(h);
            if (!seen[*y]) {
                seen[*y] = 1;
                out.push_back(*y);
                stack.push_back(*y);
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<Ord> Blocklace::closure_of_extra(const Block& extra, const AgentId& owner) const
{
    if (auto o = find(extra.digest())) return closure(*o, owner);
    std::vector<char> seen(blocks_.size(), 0);
    std::vector<Ord> out, stack;
    for (const auto& h : extra.pointers) {
        if (!(extra.creator == owner || h.creator == extra.creator || h.creator == owner)) continue;
        auto y = find(h.digest);
        if (!y) missing(h);
        if (!seen[*y]) {
            seen[*y] = 1;
            stack.push_back(*y);
        }
    }
    while (!stack.empty()) {
        Ord v = stack.back();
        stack.pop_back();
        out.push_back(v);
        const Block& vb = *blocks_[v];
        for (const auto& h : vb.pointers) {
            if (!(vb.creator == owner || h.creator == vb.creator || h.creator == owner)) continue;
            auto y = find(h.digest);
            if (!y) missing(h);
            if (!seen[*y]) {
                seen[*y] = 1;
                stack.push_back(*y);
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::uint32_t Blocklace::index(Ord o) const
{
    std::vector<Ord> chain;
    Ord cur = o;
    while (index_[cur] == 0) {
        if (blocks_[cur]->initial()) {
            index_[cur] = 1;
            break;
        }
        if (self_pred_[cur] < 0)
            throw std::runtime_error("broken self-path at block " + blocks_[cur]->digest().short_hex());
        chain.push_back(cur);
        cur = static_cast<Ord>(self_pred_[cur]);
    }
    for (auto it = chain.rbegin(); it != chain.rend(); ++it)
        index_[*it] = index_[static_cast<Ord>(self_pred_[*it])] + 1;
    return index_[o];
}

std::optional<Ord> Blocklace::self_predecessor(Ord o) const
{
    if (self_pred_[o] < 0) return std::nullopt;
    return static_cast<Ord>(self_pred_[o]);
}

std::optional<Ord> Blocklace::tip(const AgentId& q) const
{
    std::optional<Ord> best;
    std::uint32_t best_idx = 0;
    for (Ord o : blocks_of(q)) {
        std::uint32_t i = 0;
        try {
            i = index(o);
        } catch (const std::runtime_error&) {
            continue;
        }
        if (i > best_idx) {
            best_idx = i;
            best = o;
        }
    }
    return best;
}

std::uint32_t Blocklace::max_index(const AgentId& q) const
{
    auto t = tip(q);
    return t ? index(*t) : 0;
}

std::vector<std::pair<Ord, Ord>> Blocklace::equivocations() const
{
    std::vector<std::pair<Ord, Ord>> out;
    for (const auto& s : slots_) {
        for (std::size_t i = 0; i < s.ords.size(); ++i) {
            for (std::size_t j = i + 1; j < s.ords.size(); ++j) {
                Ord a = s.ords[i], b = s.ords[j];
                bool both_initial = blocks_[a]->initial() && blocks_[b]->initial();
                auto pa = blocks_[a]->self_pointers();
                auto pb = blocks_[b]->self_pointers();
                bool same_pred = pa.size() == 1 && pb.size() == 1 && pa[0]->digest == pb[0]->digest;
                if (both_initial || same_pred) out.emplace_back(std::min(a, b), std::max(a, b));
            }
        }
    }
    return out;
}

std::vector<Ord> Blocklace::topological_order() const
{
    const std::size_t n = blocks_.size();
    std::vector<std::vector<Ord>> dependents(n);
    std::vector<std::size_t> pending(n, 0);
    for (Ord x = 0; x < n; ++x) {
        for (const auto& h : blocks_[x]->pointers) {
            if (auto y = find(h.digest)) {
                dependents[*y].push_back(x);
                ++pending[x];
            }
        }
    }
    std::priority_queue<Ord, std::vector<Ord>, std::greater<>> ready;
    for (Ord x = 0; x < n; ++x)
        if (pending[x] == 0) ready.push(x);
    std::vector<Ord> out;
    out.reserve(n);
    while (!ready.empty()) {
        Ord x = ready.top();
        ready.pop();
        out.push_back(x);
        for (Ord d : dependents[x])
            if (--pending[d] == 0) ready.push(d);
    }
    if (out.size() != n) throw std::logic_error("blocklace contains a cycle");
    return out;
}

std::vector<std::pair<Ord, SignedPointer>> Blocklace::dangling() const
{
    std::vector<std::pair<Ord, SignedPointer>> out;
    for (Ord x = 0; x < blocks_.size(); ++x)
        for (const auto& h : blocks_[x]->pointers)
            if (!contains(h.digest)) out.emplace_back(x, h);
    return out;
}

std::vector<BlockPtr> roots(const Blocklace& B)
{
    std::vector<BlockPtr> out;
    for (Ord o : B.roots()) out.push_back(B.ptr(o));
    return out;
}

BlockPtr create_block(const Blocklace& B, const AgentIdentity& id, const Payload& payload)
{
    const AgentId& p = id.id;
    if (!B.has_creator(p)) {
        if (payload) throw std::invalid_argument("initial block must have empty payload");
        return make_block(id, {}, std::nullopt);
    }
    if (!payload) throw std::invalid_argument("non-initial block needs a payload");
    if (!B.is_closed(p)) throw std::invalid_argument("store is not closed for its owner");

    std::vector<Ord> targets = B.roots();
    auto own = B.tip(p);
    if (!own) throw std::invalid_argument("own blocks have no self-path to an initial block");
    if (!B.is_root(*own)) targets.push_back(*own);

    // Pointing at roots alone can leave blocks outside the new block's closure
    // (a foreign block reachable only through another creator's non-self pointer).
    std::vector<char> covered(B.size(), 0);
    auto cover = [&](Ord t) {
        covered[t] = 1;
        for (Ord o : B.closure(t, p)) covered[o] = 1;
    };
    for (Ord t : targets) cover(t);
    for (;;) {
        std::vector<Ord> uncovered;
        for (Ord o = 0; o < B.size(); ++o)
            if (!covered[o]) uncovered.push_back(o);
        if (uncovered.empty()) break;
        Ord pick = uncovered.front();
        for (Ord u : uncovered) {
            bool maximal = true;
            for (Ord v : uncovered)
                if (v != u && B.observes(v, u)) {
                    maximal = false;
                    break;
                }
            if (maximal) {
                pick = u;
                break;
            }
        }
        targets.push_back(pick);
        cover(pick);
    }

    std::vector<SignedPointer> ptrs;
    ptrs.reserve(targets.size());
    for (Ord t : targets) ptrs.push_back(B[t].self);
    return make_block(id, std::move(ptrs), payload);
}

bool observes(const Blocklace& B, const Block& b, const Block& b2)
{
    auto a = B.find(b.digest());
    if (!a) throw std::invalid_argument("observes: block not in blocklace");
    if (b.digest() == b2.digest()) return true;
    auto c = B.find(b2.digest());
    return c && B.observes(*a, *c);
}

bool agent_observes(const Blocklace& B, const AgentId& q, const Block& b)
{
    auto o = B.find(b.digest());
    return o && B.agent_observes(q, *o);
}

bool follows(const Blocklace& B, const AgentId& q, const AgentId& q2) { return B.follows(q, q2); }

bool is_friend(const Blocklace& B, const AgentId& p, const AgentId& q) { return B.follows(q, p); }

bool is_closed(const Blocklace& B, const AgentId& owner) { return B.is_closed(owner); }

Blocklace p_closure(const Blocklace& B, const Block& b, const AgentId& owner)
{
    auto o = B.find(b.digest());
    if (!o) throw std::invalid_argument("p_closure: block not in blocklace");
    Blocklace out(B.scheme(), owner);
    for (Ord x : B.closure(*o, owner)) out.insert_trusted(B.ptr(x));
    return out;
}

std::uint32_t index(const Blocklace& B, const Block& b)
{
    auto o = B.find(b.digest());
    if (!o) throw std::invalid_argument("index: block not in blocklace");
    return B.index(*o);
}

void dump_blocklace(const Blocklace& B, std::ostream& out)
{
    for (Ord o : B.topological_order()) out << to_hex(encode_block(B[o])) << "\n";
}

Blocklace load_blocklace(std::istream& in, SignatureScheme scheme)
{
    Blocklace B(scheme);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto r = decode_block(from_hex(line), scheme);
        if (!r)
            throw std::runtime_error("line " + std::to_string(lineno) + ": " +
                                     std::string(to_string(*r.error)) + " (" + r.detail + ")");
        B.insert_trusted(r.block);
    }
    return B;
}

}  // namespace gdiss
