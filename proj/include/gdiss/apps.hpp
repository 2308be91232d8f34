#pragma once

#include "gdiss/blocklace.hpp"
#include "gdiss/cgd.hpp"

#include <json.hpp>

#include <compare>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace gdiss::apps {

enum class AppKind : std::uint8_t { Tweet = 0x01, Respond = 0x02, Echo = 0x03 };

/// A post is named by its creator and 1-based index.
struct PostId {
    AgentId creator;
    std::uint32_t index = 0;

    auto operator<=>(const PostId&) const = default;
    std::string str() const;
    /// "<creator-hex>:<index>"
    static PostId parse(std::string_view s);
};

struct Tweet {
    std::string text;
    bool operator==(const Tweet&) const = default;
};

struct Respond {
    PostId target;
    std::string text;
    bool operator==(const Respond&) const = default;
};

/// Carries a whole block plus the echoer's statement of its index, which a
/// reader without the creator's self-path could not compute.
struct Echo {
    BlockPtr block;
    std::uint32_t index = 0;
    bool operator==(const Echo& o) const { return index == o.index && block && o.block && *block == *o.block; }
};

using AppPayload = std::variant<Tweet, Respond, Echo>;

struct AppDecodeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tweet:   0x01 | text
/// Respond: 0x02 | creator(32) | index u32 BE | text
/// Echo:    0x03 | index u32 BE | wire block
Bytes encode_payload(const AppPayload& p);
/// Throws AppDecodeError; an Echo's block is fully re-verified.
AppPayload decode_payload(std::span<const std::uint8_t> data, SignatureScheme scheme);
/// nullopt for bottom or non-app payloads.
std::optional<AppPayload> try_decode(const Payload& x, SignatureScheme scheme);

struct FeedEntry {
    PostId id;
    std::string text;
    std::optional<PostId> parent;
    Digest digest;
    bool orphaned = false;  // a response whose target is not in the view
    bool via_echo = false;  // known only through an Echo

    bool operator==(const FeedEntry&) const = default;
};

struct FeedView {
    AgentId viewer;
    std::vector<FeedEntry> entries;

    const FeedEntry* find(const PostId& id) const;
    std::size_t count(const PostId& id) const;
};

/// Every Tweet/Respond in B, including those inside Echoes, once per
/// (creator, index). Blocks are linearized topologically with ties by
/// (creator, index, digest); an echoed post takes its first carrier's place.
FeedView derive_feed(const Blocklace& B, const AgentId& viewer);

struct GroupError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GroupMessage {
    PostId id;
    std::string text;
    std::optional<PostId> parent;
    bool operator==(const GroupMessage&) const = default;
};

struct GroupView {
    PostId root;
    AgentId founder;
    bool is_public = true;
    std::vector<GroupMessage> transcript;  // depth-first thread order
    std::set<AgentId> members;
};

/// The root must be in B or echoed by the founder; throws GroupError otherwise.
/// A message counts if its author is the founder or the founder echoed it, and
/// it responds to a counted message.
GroupView derive_group(const Blocklace& B, const AgentId& founder, const PostId& root);

nlohmann::json to_json(const FeedView& v);
nlohmann::json to_json(const GroupView& v);

// ---- scripted scenarios ----

/// A small CGD world driven by hand: scripted volitional steps, then every
/// enabled Send/Receive until none remains.
class World {
public:
    explicit World(const std::vector<std::string>& names, SignatureScheme scheme = SignatureScheme::Mock);

    const AgentId& id(const std::string& name) const;
    const CGDConfig& config() const { return c_; }
    const Blocklace& B(const std::string& name) const { return c_.at(id(name)).B; }

    void befriend(const std::string& a, const std::string& b);
    BlockPtr post(const std::string& name, const AppPayload& p);
    PostId id_of(const BlockPtr& b) const;
    /// Applies Send/Receive until quiescent; returns the number applied.
    std::size_t settle();
    /// Every agent posts a greeting and the world settles, twice, so that
    /// following is known along every friendship.
    void greet();

private:
    std::map<std::string, AgentIdentity> ids_;
    CGDConfig c_;
};

struct TwitterOutcome {
    FeedView follower;      // follows the author only
    FeedView both;          // follows author and respondent
    PostId response;
    bool follower_lacks_respondent = false;
    std::shared_ptr<const World> world;
};

/// author a, follower f, respondent r, and g befriending both a and r.
/// a tweets, r responds, a echoes the response.
TwitterOutcome twitter_scenario(SignatureScheme scheme = SignatureScheme::Mock);

struct GroupOutcome {
    GroupView founder;
    std::map<std::string, GroupView> members;
    PostId unechoed;  // a later response the founder did not echo
    std::shared_ptr<const World> world;
};

/// Founder F with members m1..m3 befriending F only.
GroupOutcome group_scenario(SignatureScheme scheme = SignatureScheme::Mock);

}  // namespace gdiss::apps
