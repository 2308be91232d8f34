#include "gdiss/net.hpp"
#include "gdiss/wire.hpp"

#include <boost/asio.hpp>

#include <cstdio>
#include <deque>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>
#include <unistd.h>

namespace gdiss::net {

namespace asio = boost::asio;
using asio::ip::tcp;

FollowPolicy FollowPolicy::load(const std::filesystem::path& p)
{
    FollowPolicy pol;
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot read follow policy " + p.string());
    std::string line;
    while (std::getline(in, line)) {
        if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
        std::istringstream ss(line);
        std::string tok;
        if (!(ss >> tok)) continue;
        if (tok == "*")
            pol.any = true;
        else
            pol.allow.insert(AgentId::from_hex(tok));
    }
    return pol;
}

std::optional<AgentId> resolve_agent(std::string_view text, const std::vector<AgentId>& known)
{
    if (text.size() == 64) return AgentId::from_hex(text);
    std::optional<AgentId> hit;
    for (const auto& a : known)
        if (a.hex().starts_with(text)) {
            if (hit && *hit != a) return std::nullopt;  // ambiguous
            hit = a;
        }
    return hit;
}

namespace {

std::pair<std::string, std::uint16_t> split_addr(const std::string& addr)
{
    auto colon = addr.rfind(':');
    if (colon == std::string::npos) throw std::invalid_argument("address must be host:port: " + addr);
    return {addr.substr(0, colon), static_cast<std::uint16_t>(std::stoul(addr.substr(colon + 1)))};
}

}  // namespace

struct Node::Impl {
    struct Conn : std::enable_shared_from_this<Conn> {
        Impl* node;
        tcp::socket sock;
        std::string dial;  // set for outbound connections
        std::optional<AgentId> peer;
        std::deque<std::shared_ptr<Bytes>> queue;
        bool writing = false;
        bool closed = false;
        std::array<std::uint8_t, 4> hdr{};
        Bytes body;

        Conn(Impl* n, tcp::socket s, std::string d) : node(n), sock(std::move(s)), dial(std::move(d)) {}

        void send(std::shared_ptr<Bytes> frame)
        {
            if (closed) return;
            queue.push_back(std::move(frame));
            if (!writing) write_next();
        }

        void write_next()
        {
            if (queue.empty() || closed) {
                writing = false;
                return;
            }
            writing = true;
            auto self = shared_from_this();
            asio::async_write(sock, asio::buffer(*queue.front()), [self](boost::system::error_code ec, std::size_t) {
                if (ec) return self->node->drop(self, "write: " + ec.message());
                self->queue.pop_front();
                self->write_next();
            });
        }

        void read_header()
        {
            auto self = shared_from_this();
            asio::async_read(sock, asio::buffer(hdr), [self](boost::system::error_code ec, std::size_t) {
                if (ec) return self->node->drop(self, ec == asio::error::eof ? "closed by peer" : "read: " + ec.message());
                auto len = get_u32(self->hdr.data());
                if (len > self->node->opts.max_frame) return self->node->drop(self, "oversize frame (" + std::to_string(len) + ")");
                self->body.resize(len);
                self->read_body();
            });
        }

        void read_body()
        {
            auto self = shared_from_this();
            asio::async_read(sock, asio::buffer(body), [self](boost::system::error_code ec, std::size_t) {
                if (ec) return self->node->drop(self, "read: " + ec.message());
                self->node->on_frame(self, self->body);
                if (!self->closed) self->read_header();
            });
        }
    };
    using ConnPtr = std::shared_ptr<Conn>;

    NodeOptions opts;
    asio::io_context io;
    tcp::acceptor acceptor{io};
    std::thread thread;
    bool running = false;

    CGDLocalState s;
    AgentRuntime a;
    std::map<AgentId, ConnPtr> by_peer;
    std::set<ConnPtr> conns;
    std::map<AgentId, std::set<Digest>> written;  // per peer, for this process lifetime
    std::set<AgentId> seen_peers;
    std::deque<Digest> arrivals;  // input-buffer order, for eviction
    std::map<std::string, std::chrono::milliseconds> backoff;

    std::FILE* block_log = nullptr;
    std::ofstream session_log;

    explicit Impl(NodeOptions o) : opts(std::move(o)), s(opts.identity.scheme, opts.identity.id)
    {
        if (!opts.log) opts.log = [](const std::string& m) { std::cerr << m << std::endl; };
        a.id = opts.identity;
        a.universe = {opts.identity.id};
        a.accept = opts.policy.allow;
        a.accept_all = opts.policy.any;
        restore();
        if (!s.B.has_creator(id())) absorb(agent_step(s, a, AgentEvent::set_payload(std::nullopt)));
    }

    ~Impl()
    {
        if (block_log) std::fclose(block_log);
    }

    const AgentId& id() const { return opts.identity.id; }
    void log(const std::string& m) { opts.log("[" + id().short_hex() + "] " + m); }

    // ---- persistence ----

    void restore()
    {
        if (!opts.data_dir) return;
        std::filesystem::create_directories(*opts.data_dir);
        auto blocks = *opts.data_dir / "blocks.log";
        auto sess = *opts.data_dir / "session.jsonl";
        if (std::filesystem::exists(blocks)) {
            std::ifstream in(blocks);
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                auto r = decode_block(from_hex(line), opts.identity.scheme);
                // A torn final line after a crash is the only expected failure.
                if (!r) {
                    log("block log: skipping unreadable line (" + std::string(to_string(*r.error)) + ")");
                    continue;
                }
                s.B.insert_trusted(r.block);
            }
        }
        bool fresh = !std::filesystem::exists(sess);
        if (!fresh) {
            std::ifstream in(sess);
            auto old = read_session(in);
            for (const auto& t : old.steps)
                if ((t.kind == CGDKind::Offer || t.kind == CGDKind::Send) && t.peer)
                    if (auto o = s.B.find(t.block->digest())) s.add_out(*t.peer, *o);
        }
        block_log = std::fopen(blocks.c_str(), "a");
        if (!block_log) throw std::runtime_error("cannot open " + blocks.string());
        session_log.open(sess, std::ios::app);
        if (fresh)
            session_log << nlohmann::json{{"type", "session"}, {"owner", id().hex()}, {"scheme", to_string(opts.identity.scheme)}}.dump()
                        << std::endl;
        if (!s.B.empty()) log("restored " + std::to_string(s.B.size()) + " blocks");
    }

    void record(const CGDTransition& t)
    {
        bool absorbs = t.kind == CGDKind::Create || t.kind == CGDKind::Follow || t.kind == CGDKind::Receive;
        if (absorbs && block_log) {
            auto line = to_hex(encode_block(*t.block)) + "\n";
            std::fwrite(line.data(), 1, line.size(), block_log);
            std::fflush(block_log);
            ::fsync(fileno(block_log));
        }
        if (session_log.is_open()) {
            nlohmann::json j{{"type", "step"}, {"kind", to_string(t.kind)}, {"block", t.block->digest().hex()}};
            if (t.peer) j["peer"] = t.peer->hex();
            if (absorbs) j["wire"] = to_hex(encode_block(*t.block));
            session_log << j.dump() << std::endl;
        }
    }

    // ---- engine ----

    BlockPtr own_initial() const
    {
        for (Ord o : s.B.blocks_of(id()))
            if (s.B[o].initial()) return s.B.ptr(o);
        throw std::logic_error("node has no initial block");
    }

    void absorb(const std::vector<CGDTransition>& ts)
    {
        bool followed = false;
        for (const auto& t : ts) {
            record(t);
            if ((t.kind == CGDKind::Offer || t.kind == CGDKind::Send) && t.peer) flush(*t.peer);
            followed = followed || t.kind == CGDKind::Follow;
        }
        // Following only becomes visible to others through a later own block.
        if (followed && opts.ack_follows) absorb(agent_step(s, a, AgentEvent::set_payload(Bytes{})));
    }

    // Writes every Out entry for q not yet written to q.
    void flush(const AgentId& q)
    {
        auto it = by_peer.find(q);
        if (it == by_peer.end()) return;
        auto& w = written[q];
        for (Ord o : s.addressed_to(q))
            if (w.insert(s.B[o].digest()).second) it->second->send(std::make_shared<Bytes>(frame_block(s.B[o])));
    }

    void identify(const ConnPtr& c, const AgentId& q)
    {
        c->peer = q;
        if (c->dial.size()) backoff.erase(c->dial);
        if (auto old = by_peer.find(q); old != by_peer.end() && old->second != c) old->second->closed = true;
        by_peer[q] = c;
        if (std::find(a.universe.begin(), a.universe.end(), q) == a.universe.end()) {
            a.universe.push_back(q);
            std::sort(a.universe.begin(), a.universe.end());
        }
        auto own = own_initial();
        if (!seen_peers.insert(q).second) {
            // Reconnection: re-announce what q is not known to hold.
            auto& w = written[q];
            for (Ord o : s.addressed_to(q))
                if (!knows_holds(s.B, q, o)) w.erase(s.B[o].digest());
            log("reconnected to " + q.short_hex());
        } else {
            log("peer " + q.short_hex() + " connected");
        }
        written[q].insert(own->digest());  // the greeting carried it
        absorb(agent_step(s, a, AgentEvent::offer(q, own)));
        absorb(agent_step(s, a, AgentEvent::drain()));  // posts made while q was away
        flush(q);
    }

    void on_frame(const ConnPtr& c, const Bytes& frame)
    {
        auto r = decode_block(frame, opts.identity.scheme, opts.max_frame);
        if (!r) {
            log("dropped malformed block: " + std::string(to_string(*r.error)) + (r.detail.empty() ? "" : " (" + r.detail + ")"));
            return;
        }
        if (!c->peer) {
            if (!r.block->initial() || r.block->creator == id()) return drop(c, "greeting is not a foreign initial block");
            identify(c, r.block->creator);
        }
        if (s.B.contains(r.block->digest())) return;
        if (!s.input.count(r.block->digest())) arrivals.push_back(r.block->digest());
        absorb(agent_step(s, a, AgentEvent::receive(*c->peer, r.block)));
        evict();
    }

    void evict()
    {
        while (s.input.size() > opts.max_input && !arrivals.empty()) {
            auto d = arrivals.front();
            arrivals.pop_front();
            if (s.input.erase(d)) log("input buffer full: evicted " + d.short_hex());
        }
        if (arrivals.size() > 4 * opts.max_input + 64)
            std::erase_if(arrivals, [&](const Digest& d) { return !s.input.count(d); });
    }

    void drop(const ConnPtr& c, const std::string& why)
    {
        if (!conns.count(c)) return;
        conns.erase(c);
        c->closed = true;
        boost::system::error_code ec;
        c->sock.close(ec);
        if (c->peer) {
            auto it = by_peer.find(*c->peer);
            if (it != by_peer.end() && it->second == c) by_peer.erase(it);
        }
        log("connection " + (c->peer ? c->peer->short_hex() : c->dial) + " closed: " + why);
        if (c->dial.size() && running) redial(c->dial);
    }

    // ---- connections ----

    void adopt(tcp::socket sock, const std::string& dial)
    {
        sock.set_option(tcp::no_delay(true));
        auto c = std::make_shared<Conn>(this, std::move(sock), dial);
        conns.insert(c);
        c->send(std::make_shared<Bytes>(frame_block(*own_initial())));
        c->read_header();
    }

    void accept_loop()
    {
        acceptor.async_accept([this](boost::system::error_code ec, tcp::socket sock) {
            if (!running) return;
            if (!ec) adopt(std::move(sock), "");
            accept_loop();
        });
    }

    void dial(const std::string& addr)
    {
        auto [host, port] = split_addr(addr);
        auto sock = std::make_shared<tcp::socket>(io);
        tcp::endpoint ep(asio::ip::make_address(host), port);
        sock->async_connect(ep, [this, sock, addr](boost::system::error_code ec) {
            if (!running) return;
            if (ec) return redial(addr);
            adopt(std::move(*sock), addr);
        });
    }

    void redial(const std::string& addr)
    {
        auto& b = backoff[addr];
        b = b.count() ? std::min(b * 2, opts.backoff_max) : opts.backoff_min;
        auto timer = std::make_shared<asio::steady_timer>(io, b);
        timer->async_wait([this, timer, addr](boost::system::error_code ec) {
            if (!ec && running) dial(addr);
        });
    }

    template <class F>
    auto on_loop(F&& f) -> decltype(f())
    {
        if (!running || thread.get_id() == std::this_thread::get_id()) return f();
        std::packaged_task<decltype(f())()> task(std::forward<F>(f));
        auto fut = task.get_future();
        asio::post(io, [&task] { task(); });
        return fut.get();
    }
};

Node::Node(NodeOptions opts) : impl_(std::make_unique<Impl>(std::move(opts))) {}

Node::~Node() { stop(); }

void Node::start()
{
    auto& m = *impl_;
    if (m.running) return;
    auto [host, port] = split_addr(m.opts.listen);
    tcp::endpoint ep(asio::ip::make_address(host), port);
    m.acceptor.open(ep.protocol());
    m.acceptor.set_option(tcp::acceptor::reuse_address(true));
    m.acceptor.bind(ep);
    m.acceptor.listen();
    m.running = true;
    m.accept_loop();
    for (const auto& p : m.opts.peers) m.dial(p);
    m.thread = std::thread([&m] { m.io.run(); });
    m.log("listening on " + host + ":" + std::to_string(m.acceptor.local_endpoint().port()));
}

void Node::stop()
{
    auto& m = *impl_;
    if (!m.running) return;
    asio::post(m.io, [&m] {
        m.running = false;
        boost::system::error_code ec;
        m.acceptor.close(ec);
        for (const auto& c : std::vector(m.conns.begin(), m.conns.end())) {
            c->closed = true;
            c->sock.close(ec);
        }
        m.conns.clear();
        m.by_peer.clear();
        m.io.stop();
    });
    m.thread.join();
}

const AgentId& Node::id() const { return impl_->id(); }

std::uint16_t Node::port() const { return impl_->acceptor.local_endpoint().port(); }

BlockPtr Node::post(const Payload& x)
{
    return impl_->on_loop([&]() -> BlockPtr {
        auto ts = agent_step(impl_->s, impl_->a, AgentEvent::set_payload(x));
        impl_->absorb(ts);
        for (const auto& t : ts)
            if (t.kind == CGDKind::Create && t.block->payload) return t.block;
        return nullptr;
    });
}

bool Node::offer(const AgentId& peer, const AgentId& creator)
{
    return impl_->on_loop([&] {
        auto& s = impl_->s;
        auto mine = s.B.blocks_of(creator);
        for (Ord o : mine)
            if (s.B[o].initial()) {
                auto ts = agent_step(s, impl_->a, AgentEvent::offer(peer, s.B.ptr(o)));
                impl_->absorb(ts);
                return !ts.empty();
            }
        return false;
    });
}

void Node::accept(const AgentId& creator)
{
    impl_->on_loop([&] { impl_->absorb(agent_step(impl_->s, impl_->a, AgentEvent::follow(creator))); });
}

void Node::dump(const std::filesystem::path& p)
{
    impl_->on_loop([&] {
        std::ofstream out(p);
        if (!out) throw std::runtime_error("cannot write " + p.string());
        dump_blocklace(impl_->s.B, out);
    });
}

std::size_t Node::size()
{
    return impl_->on_loop([&] { return impl_->s.B.size(); });
}

std::set<Digest> Node::blocks_of(const AgentId& creator)
{
    return impl_->on_loop([&] {
        std::set<Digest> out;
        for (Ord o : impl_->s.B.blocks_of(creator)) out.insert(impl_->s.B[o].digest());
        return out;
    });
}

std::vector<AgentId> Node::peers()
{
    return impl_->on_loop([&] {
        std::vector<AgentId> out;
        for (const auto& [q, _] : impl_->by_peer) out.push_back(q);
        return out;
    });
}

Digest Node::checkpoint()
{
    return impl_->on_loop([&] {
        std::vector<Digest> ds;
        for (const auto& b : impl_->s.B.blocks()) ds.push_back(b->digest());
        std::sort(ds.begin(), ds.end());
        Bytes all;
        for (const auto& d : ds) all.insert(all.end(), d.bytes.begin(), d.bytes.end());
        return hash_bytes(all);
    });
}

nlohmann::json Node::status()
{
    auto digest = checkpoint();
    return impl_->on_loop([&] {
        const auto& s = impl_->s;
        nlohmann::json j{{"id", id().hex()},          {"blocks", s.B.size()},       {"input", s.input.size()},
                         {"out", s.out_size()},       {"checkpoint", digest.hex()}, {"peers", nlohmann::json::array()},
                         {"creators", nlohmann::json::object()}};
        for (const auto& [q, _] : impl_->by_peer) j["peers"].push_back(q.hex());
        for (const auto& q : s.B.creators()) j["creators"][q.hex()] = s.B.blocks_of(q).size();
        j["outbox"] = nlohmann::json::array();
        for (const auto& [q, d] : s.outbox()) j["outbox"].push_back(q.short_hex() + ":" + d.short_hex());
        j["waiting"] = nlohmann::json::array();
        for (const auto& [d, e] : s.input) j["waiting"].push_back(e.first->creator.short_hex() + ":" + d.short_hex());
        return j;
    });
}

std::string Node::command(const std::string& line)
{
    std::istringstream ss(line);
    std::string cmd;
    ss >> cmd;
    std::string rest;
    std::getline(ss >> std::ws, rest);
    auto known = [&] {
        return impl_->on_loop([&] {
            auto cs = impl_->s.B.creators();
            cs.insert(cs.end(), impl_->a.universe.begin(), impl_->a.universe.end());
            return cs;
        });
    };
    auto err = [](const std::string& m) { return nlohmann::json{{"ok", false}, {"error", m}}.dump(); };
    try {
        if (cmd == "post") {
            auto b = post(to_bytes(rest));
            return nlohmann::json{{"ok", b != nullptr}, {"block", b ? b->digest().hex() : ""}}.dump();
        }
        if (cmd == "offer") {
            std::istringstream args(rest);
            std::string peer, creator;
            args >> peer >> creator;
            auto ks = known();
            auto q = resolve_agent(peer, ks), r = resolve_agent(creator, ks);
            if (!q || !r) return err("unknown or ambiguous agent");
            return nlohmann::json{{"ok", offer(*q, *r)}}.dump();
        }
        if (cmd == "accept") {
            auto r = resolve_agent(rest, known());
            if (!r) return err("unknown or ambiguous agent");
            accept(*r);
            return nlohmann::json{{"ok", true}}.dump();
        }
        if (cmd == "dump") {
            if (rest.empty()) return err("dump needs a path");
            dump(rest);
            return nlohmann::json{{"ok", true}, {"path", rest}}.dump();
        }
        if (cmd == "status") {
            auto j = status();
            j["ok"] = true;
            return j.dump();
        }
        return err("unknown command: " + cmd);
    } catch (const std::exception& e) {
        return err(e.what());
    }
}

}  // namespace gdiss::net
