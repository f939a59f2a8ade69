#pragma once

#include "tcpmr/controller.hpp"
#include "tcpmr/core.hpp"
#include "tcpmr/network.hpp"
#include "tcpmr/topology.hpp"
#include "tcpmr/transport.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tcpmr {

constexpr std::uint16_t kDataNodeServicePort = 50010;

// A block to be stored: content is reproducible from (id, seed).
struct Block {
    std::uint64_t id = 0;
    std::uint64_t size = 0;

    static std::vector<std::uint8_t> content(std::uint64_t id, std::uint64_t seed, std::uint64_t size) {
        std::vector<std::uint8_t> out(size);
        Rng rng(derive_seed(seed, 0xb10c0000u + id));
        std::size_t i = 0;
        while (i + 8 <= out.size()) {
            std::uint64_t v = rng.next_u64();
            for (int b = 0; b < 8; ++b) out[i++] = static_cast<std::uint8_t>(v >> (8 * b));
        }
        if (i < out.size()) {
            std::uint64_t v = rng.next_u64();
            for (int b = 0; i < out.size(); ++b) out[i++] = static_cast<std::uint8_t>(v >> (8 * b));
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// Application wire format. Messages are [type:u8][body_len:u32le][body] and a
// data node forwards PACKET messages verbatim, which keeps the byte stream
// past the sync point identical on every pipeline hop.

enum class MsgType : std::uint8_t { setup_request = 1, ready = 2, packet = 3, packet_ack = 4 };

namespace wire {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

inline std::uint16_t get_u16(std::span<const std::uint8_t> in, std::size_t at) {
    return static_cast<std::uint16_t>(in[at] | (in[at + 1] << 8));
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(in[at + b]) << (8 * b);
    return v;
}

inline std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t at) {
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(in[at + b]) << (8 * b);
    return v;
}

inline std::vector<std::uint8_t> frame(MsgType type, std::span<const std::uint8_t> body) {
    std::vector<std::uint8_t> out;
    out.reserve(5 + body.size());
    out.push_back(static_cast<std::uint8_t>(type));
    put_u32(out, static_cast<std::uint32_t>(body.size()));
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

} // namespace wire

struct SetupRequest {
    bool mirrored = false;
    std::uint8_t position = 1; // 1-based index of the receiving data node
    std::uint8_t replication_factor = 1;
    std::vector<Endpoint> downstream; // service endpoints of D_{position+1}..D_k

    std::vector<std::uint8_t> encode() const {
        std::vector<std::uint8_t> body;
        body.push_back(mirrored ? 1 : 0);
        body.push_back(position);
        body.push_back(replication_factor);
        body.push_back(static_cast<std::uint8_t>(downstream.size()));
        for (const Endpoint& e : downstream) {
            wire::put_u32(body, e.ip);
            wire::put_u16(body, e.port);
        }
        return wire::frame(MsgType::setup_request, body);
    }

    static SetupRequest decode(std::span<const std::uint8_t> body) {
        SetupRequest r;
        r.mirrored = body[0] != 0;
        r.position = body[1];
        r.replication_factor = body[2];
        std::size_t n = body[3];
        std::size_t at = 4;
        for (std::size_t i = 0; i < n; ++i, at += 6)
            r.downstream.push_back(Endpoint{wire::get_u32(body, at), wire::get_u16(body, at + 4)});
        return r;
    }
};

struct ReadyMsg {
    std::vector<HopConnection> hops; // D_j->D_{j+1} connections, downstream order

    std::vector<std::uint8_t> encode() const {
        std::vector<std::uint8_t> body;
        body.push_back(static_cast<std::uint8_t>(hops.size()));
        for (const HopConnection& h : hops) {
            wire::put_u32(body, h.src.ip);
            wire::put_u16(body, h.src.port);
            wire::put_u32(body, h.dst.ip);
            wire::put_u16(body, h.dst.port);
        }
        return wire::frame(MsgType::ready, body);
    }

    static ReadyMsg decode(std::span<const std::uint8_t> body) {
        ReadyMsg r;
        std::size_t n = body[0];
        std::size_t at = 1;
        for (std::size_t i = 0; i < n; ++i, at += 12)
            r.hops.push_back(HopConnection{{wire::get_u32(body, at), wire::get_u16(body, at + 4)},
                                           {wire::get_u32(body, at + 6), wire::get_u16(body, at + 10)}});
        return r;
    }
};

struct PacketMsg {
    std::uint64_t block_id = 0;
    std::uint32_t index = 0;
    std::span<const std::uint8_t> payload; // view into the decoded body

    static std::vector<std::uint8_t> encode(std::uint64_t block_id, std::uint32_t index,
                                            std::span<const std::uint8_t> payload) {
        std::vector<std::uint8_t> body;
        body.reserve(12 + payload.size());
        wire::put_u64(body, block_id);
        wire::put_u32(body, index);
        body.insert(body.end(), payload.begin(), payload.end());
        return wire::frame(MsgType::packet, body);
    }

    static PacketMsg decode(std::span<const std::uint8_t> body) {
        PacketMsg p;
        p.block_id = wire::get_u64(body, 0);
        p.index = wire::get_u32(body, 8);
        p.payload = body.subspan(12);
        return p;
    }
};

struct PacketAckMsg {
    std::uint32_t index = 0;

    static std::vector<std::uint8_t> encode(std::uint32_t index) {
        std::vector<std::uint8_t> body;
        wire::put_u32(body, index);
        return wire::frame(MsgType::packet_ack, body);
    }

    static PacketAckMsg decode(std::span<const std::uint8_t> body) {
        return PacketAckMsg{wire::get_u32(body, 0)};
    }
};

// Reassembles framed messages from a byte stream and hands each one over
// along with its raw bytes (for verbatim forwarding).
class MessageParser {
public:
    using MessageFn =
        std::function<void(MsgType, std::span<const std::uint8_t> body, std::span<const std::uint8_t> raw)>;

    explicit MessageParser(MessageFn fn) : fn_(std::move(fn)) {}

    void feed(std::span<const std::uint8_t> bytes) {
        buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
        std::size_t at = 0;
        while (buffer_.size() - at >= 5) {
            std::uint32_t body_len = wire::get_u32(buffer_, at + 1);
            if (buffer_.size() - at < 5ull + body_len) break;
            MsgType type = static_cast<MsgType>(buffer_[at]);
            std::span<const std::uint8_t> raw(buffer_.data() + at, 5 + body_len);
            fn_(type, raw.subspan(5), raw);
            at += 5 + body_len;
        }
        buffer_.erase(buffer_.begin(), buffer_.begin() + at);
    }

private:
    std::vector<std::uint8_t> buffer_;
    MessageFn fn_;
};

// ---------------------------------------------------------------------------
// Name Node: placement policy and the controller notification path.

struct Placement {
    std::vector<NodeId> data_nodes; // D_1..D_k
};

// Default policy: D_1 and D_2 share a rack, D_3.. go to other racks. All
// choices come from a stream derived from the scenario seed.
inline Placement allocate_data_nodes(const Topology& topo, std::size_t k, NodeId client_node,
                                     std::uint64_t seed) {
    if (k < 1) throw std::invalid_argument("allocate_data_nodes: k must be >= 1");
    Rng rng(derive_seed(seed, 0x91ace00u));
    std::map<std::uint32_t, std::vector<NodeId>> by_rack;
    for (NodeId h : topo.hosts())
        if (h != client_node && topo.node(h).rack != kNoRack) by_rack[topo.node(h).rack].push_back(h);

    Placement placement;
    if (k == 1) {
        std::vector<NodeId> all;
        for (const auto& [rack, hosts] : by_rack) all.insert(all.end(), hosts.begin(), hosts.end());
        if (all.empty()) throw std::runtime_error("allocate_data_nodes: no eligible hosts");
        placement.data_nodes.push_back(all[rng.next_below(all.size())]);
        return placement;
    }
    std::vector<std::uint32_t> racks_with_two;
    for (const auto& [rack, hosts] : by_rack)
        if (hosts.size() >= 2) racks_with_two.push_back(rack);
    if (racks_with_two.empty())
        throw std::runtime_error("allocate_data_nodes: no rack can host D_1 and D_2");
    std::uint32_t first_rack = racks_with_two[rng.next_below(racks_with_two.size())];
    std::vector<NodeId> in_rack = by_rack[first_rack];
    std::size_t i1 = rng.next_below(in_rack.size());
    placement.data_nodes.push_back(in_rack[i1]);
    in_rack.erase(in_rack.begin() + i1);
    placement.data_nodes.push_back(in_rack[rng.next_below(in_rack.size())]);
    std::vector<NodeId> remote;
    for (const auto& [rack, hosts] : by_rack)
        if (rack != first_rack) remote.insert(remote.end(), hosts.begin(), hosts.end());
    for (std::size_t j = 2; j < k; ++j) {
        if (remote.empty())
            throw std::runtime_error("allocate_data_nodes: not enough hosts in other racks");
        std::size_t pick = rng.next_below(remote.size());
        placement.data_nodes.push_back(remote[pick]);
        remote.erase(remote.begin() + pick);
    }
    return placement;
}

// ---------------------------------------------------------------------------
// Pipeline session: wires a client, k data node runtimes, and the controller
// onto one network and drives a single block write end to end.

struct SessionConfig {
    std::size_t replication_factor = 3;
    std::uint64_t block_bytes = 4 * 1024 * 1024;
    std::uint64_t packet_bytes = 64 * 1024;
    std::uint32_t write_max_packets = 20;
    bool mirrored = false;
    SimTime persist_delay_ns = 0;
    std::uint64_t block_id = 1;
    std::uint64_t seed = 1;
};

class PipelineRun;

// Data-node runtime: accepts the upstream connection, extends the pipeline
// downstream, persists packets and relays HDFS acknowledgements. Packet work
// runs through the host's serial processor; forwarding goes through the plain
// byte-stream write, so whether bytes hit the wire is the transport's call.
class DataNodeApp {
public:
    DataNodeApp(Network& net, NodeId node, const SessionConfig& cfg, PipelineRun& run)
        : net_(net), node_(node), cfg_(cfg), run_(run) {
        net_.host(node_).listen(kDataNodeServicePort, [this](Connection& c) { on_accept(c); });
    }

    NodeId node() const { return node_; }
    std::size_t position() const { return position_; }
    bool persisted(std::uint32_t index) const { return persisted_.count(index) != 0; }
    std::size_t persisted_count() const { return persisted_.size(); }

    // Replica contents in packet-index order; throws if a gap remains.
    std::vector<std::uint8_t> replica_bytes() const {
        std::vector<std::uint8_t> out;
        for (std::uint32_t i = 0; i < store_.size(); ++i) {
            auto it = store_.find(i);
            if (it == store_.end()) throw std::runtime_error("replica_bytes: missing packet");
            out.insert(out.end(), it->second.begin(), it->second.end());
        }
        return out;
    }

    const std::map<MsgType, std::uint64_t>& received_message_counts() const { return msg_counts_; }

private:
    friend class PipelineRun;

    void on_accept(Connection& conn) {
        upstream_ = &conn;
        conn.on_data([this](Connection&, std::span<const std::uint8_t> bytes) {
            upstream_parser_.feed(bytes);
        });
        conn.on_eof([this](Connection& c) {
            if (downstream_) downstream_->close();
            c.close();
        });
    }

    void on_upstream_message(MsgType type, std::span<const std::uint8_t> body,
                             std::span<const std::uint8_t> raw);
    void on_downstream_message(MsgType type, std::span<const std::uint8_t> body);
    void send_ready_upstream(std::vector<HopConnection> hops);
    void handle_packet(std::uint32_t index, std::vector<std::uint8_t> payload,
                       std::vector<std::uint8_t> raw);
    void maybe_ack_upstream(std::uint32_t index);

    Network& net_;
    NodeId node_;
    SessionConfig cfg_;
    PipelineRun& run_;

    Connection* upstream_ = nullptr;
    Connection* downstream_ = nullptr;
    MessageParser upstream_parser_{[this](MsgType t, std::span<const std::uint8_t> b,
                                          std::span<const std::uint8_t> r) { on_upstream_message(t, b, r); }};
    MessageParser downstream_parser_{[this](MsgType t, std::span<const std::uint8_t> b,
                                            std::span<const std::uint8_t>) { on_downstream_message(t, b); }};

    std::size_t position_ = 0; // 1-based, set by the setup request
    bool mirrored_ = false;
    bool is_tail_ = true;

    std::map<std::uint32_t, std::vector<std::uint8_t>> store_;
    std::set<std::uint32_t> persisted_;
    std::set<std::uint32_t> successor_acked_;
    std::set<std::uint32_t> acked_upstream_;
    std::map<MsgType, std::uint64_t> msg_counts_;
};

// Client runtime: requests placement, sets up the pipeline, then streams the
// block as HDFS packets under the writeMaxPackets outstanding limit.
class ClientApp {
public:
    ClientApp(Network& net, NodeId node, const SessionConfig& cfg, PipelineRun& run)
        : net_(net), node_(node), cfg_(cfg), run_(run) {
        block_ = Block::content(cfg_.block_id, cfg_.seed, cfg_.block_bytes);
        packet_count_ = static_cast<std::uint32_t>((cfg_.block_bytes + cfg_.packet_bytes - 1) / cfg_.packet_bytes);
    }

    NodeId node() const { return node_; }
    const std::vector<std::uint8_t>& block() const { return block_; }
    std::uint32_t packet_count() const { return packet_count_; }
    std::uint32_t acked_packets() const { return static_cast<std::uint32_t>(acked_.size()); }
    std::uint32_t peak_outstanding() const { return peak_outstanding_; }
    bool complete() const { return complete_; }

    void start(const std::vector<PipelineSpec::Member>& data_nodes);

private:
    friend class PipelineRun;

    void on_message(MsgType type, std::span<const std::uint8_t> body);
    void on_pipeline_ready(const ReadyMsg& ready);
    void try_send_packets();
    void on_packet_ack(std::uint32_t index);

    Network& net_;
    NodeId node_;
    SessionConfig cfg_;
    PipelineRun& run_;

    std::vector<std::uint8_t> block_;
    std::uint32_t packet_count_ = 0;
    std::vector<PipelineSpec::Member> targets_;

    Connection* conn_ = nullptr;
    MessageParser parser_{[this](MsgType t, std::span<const std::uint8_t> b,
                                 std::span<const std::uint8_t>) { on_message(t, b); }};

    std::uint32_t next_scheduled_ = 0;
    std::uint32_t written_ = 0;
    std::set<std::uint32_t> acked_;
    std::uint32_t peak_outstanding_ = 0;
    bool complete_ = false;
};

class PipelineRun {
public:
    struct Result {
        SimTime session_start = 0;
        SimTime pipeline_ready = 0;
        SimTime data_start = 0;
        SimTime completion = 0;
        bool completed = false;
        std::uint32_t peak_outstanding = 0;
        std::uint64_t hdfs_ack_causality_violations = 0;
        std::uint64_t sync_count = 0; // data nodes that computed a delta
        PipelineSpec spec;            // populated once hops are known
    };

    PipelineRun(Network& net, NodeId client_node, std::vector<NodeId> data_nodes, SessionConfig cfg)
        : net_(net), cfg_(cfg) {
        client_ = std::make_unique<ClientApp>(net, client_node, cfg, *this);
        for (NodeId dn : data_nodes)
            data_nodes_.push_back(std::make_unique<DataNodeApp>(net, dn, cfg, *this));
        result_.spec.client.node = client_node;
        for (NodeId dn : data_nodes) {
            PipelineSpec::Member m;
            m.node = dn;
            m.addr = Endpoint{net.topology().ip_of(dn), kDataNodeServicePort};
            result_.spec.data_nodes.push_back(m);
        }
    }

    // Schedules the session start on the timeline; call net.run() afterwards.
    void start() {
        net_.engine().schedule_after(0, [this] {
            result_.session_start = net_.engine().now();
            client_->start(result_.spec.data_nodes);
        });
    }

    Network& net() { return net_; }
    const SessionConfig& config() const { return cfg_; }
    ClientApp& client() { return *client_; }
    DataNodeApp& data_node(std::size_t j) { return *data_nodes_.at(j); } // 0-based
    std::size_t data_node_count() const { return data_nodes_.size(); }
    const Result& result() const { return result_; }

    // Fires when the client starts streaming packets (entries are installed
    // by then in mirrored mode).
    std::function<void()> on_data_start;

    // Replica equality against the client's block, for all k nodes.
    bool replicas_match_source() const {
        for (const auto& dn : data_nodes_) {
            if (dn->persisted_count() != client_->packet_count()) return false;
            if (dn->replica_bytes() != client_->block()) return false;
        }
        return true;
    }

private:
    friend class ClientApp;
    friend class DataNodeApp;

    // Name Node -> controller notification, modeled as a zero-latency control
    // plane call. Runs strictly before the sync ACK reaches the first switch.
    void notify_controller(const std::vector<HopConnection>& hops) {
        result_.spec.hops = hops;
        result_.spec.client.addr = hops.at(0).src;
        TreePlan plan = compute_tree(net_.topology(), result_.spec);
        installs_ = program_mirroring(net_.topology(), plan, result_.spec);
        net_.install_entries(installs_);
        entries_installed_ = true;
    }

    void teardown_entries() {
        if (!entries_installed_) return;
        net_.remove_entries(pipeline_match(result_.spec));
        entries_installed_ = false;
    }

    void on_client_ready(const std::vector<HopConnection>& hops) {
        result_.pipeline_ready = net_.engine().now();
        // a single-node pipeline has nothing to mirror
        if (cfg_.mirrored && cfg_.replication_factor >= 2) notify_controller(hops);
        result_.spec.hops = hops;
        result_.spec.client.addr = hops.at(0).src;
    }

    void on_data_phase_start() {
        result_.data_start = net_.engine().now();
        if (on_data_start) on_data_start();
    }

    void on_client_ack(std::uint32_t index) {
        for (const auto& dn : data_nodes_)
            if (!dn->persisted(index)) result_.hdfs_ack_causality_violations++;
    }

    void on_complete() {
        result_.completion = net_.engine().now();
        result_.completed = true;
        result_.peak_outstanding = client_->peak_outstanding();
        for (const auto& dn : data_nodes_) {
            Connection* up = dn->upstream_;
            if (up && up->delta()) result_.sync_count++;
        }
        teardown_entries();
    }

    Network& net_;
    SessionConfig cfg_;
    std::unique_ptr<ClientApp> client_;
    std::vector<std::unique_ptr<DataNodeApp>> data_nodes_;
    std::vector<EntryInstall> installs_;
    bool entries_installed_ = false;
    Result result_;
};

// ---------------------------------------------------------------------------

inline void ClientApp::start(const std::vector<PipelineSpec::Member>& data_nodes) {
    targets_ = data_nodes;
    conn_ = &net_.host(node_).connect(targets_.at(0).addr, [this](Connection& c) {
        c.on_data([this](Connection&, std::span<const std::uint8_t> bytes) { parser_.feed(bytes); });
        SetupRequest req;
        req.mirrored = cfg_.mirrored;
        req.position = 1;
        req.replication_factor = static_cast<std::uint8_t>(cfg_.replication_factor);
        for (std::size_t j = 1; j < targets_.size(); ++j) req.downstream.push_back(targets_[j].addr);
        std::vector<std::uint8_t> msg = req.encode();
        c.write(msg);
    });
}

inline void ClientApp::on_message(MsgType type, std::span<const std::uint8_t> body) {
    if (type == MsgType::ready) {
        on_pipeline_ready(ReadyMsg::decode(body));
    } else if (type == MsgType::packet_ack) {
        on_packet_ack(PacketAckMsg::decode(body).index);
    }
}

inline void ClientApp::on_pipeline_ready(const ReadyMsg& ready) {
    std::vector<HopConnection> hops;
    hops.push_back(HopConnection{conn_->local(), conn_->remote()});
    hops.insert(hops.end(), ready.hops.begin(), ready.hops.end());
    run_.on_client_ready(hops);
    run_.on_data_phase_start();
    try_send_packets();
}

inline void ClientApp::try_send_packets() {
    while (next_scheduled_ < packet_count_ &&
           next_scheduled_ - static_cast<std::uint32_t>(acked_.size()) < cfg_.write_max_packets) {
        std::uint32_t index = next_scheduled_++;
        net_.processor(node_).run(net_.engine(), net_.timing().tx_packet_proc_ns, [this, index] {
            std::uint64_t off = std::uint64_t(index) * cfg_.packet_bytes;
            std::uint64_t len = std::min<std::uint64_t>(cfg_.packet_bytes, block_.size() - off);
            std::vector<std::uint8_t> msg = PacketMsg::encode(
                cfg_.block_id, index, std::span<const std::uint8_t>(block_.data() + off, len));
            written_++;
            std::uint32_t outstanding = written_ - static_cast<std::uint32_t>(acked_.size());
            peak_outstanding_ = std::max(peak_outstanding_, outstanding);
            conn_->write(msg);
        });
    }
}

inline void ClientApp::on_packet_ack(std::uint32_t index) {
    run_.on_client_ack(index);
    acked_.insert(index);
    if (acked_.size() == packet_count_ && !complete_) {
        complete_ = true;
        run_.on_complete();
        conn_->close();
        return;
    }
    try_send_packets();
}

inline void DataNodeApp::on_upstream_message(MsgType type, std::span<const std::uint8_t> body,
                                             std::span<const std::uint8_t> raw) {
    msg_counts_[type]++;
    if (type == MsgType::setup_request) {
        SetupRequest req = SetupRequest::decode(body);
        position_ = req.position;
        mirrored_ = req.mirrored;
        is_tail_ = req.downstream.empty();
        if (is_tail_) {
            send_ready_upstream({});
            return;
        }
        Endpoint next = req.downstream.front();
        downstream_ = &net_.host(node_).connect(next, [this, req](Connection& c) {
            c.on_data([this](Connection&, std::span<const std::uint8_t> bytes) {
                downstream_parser_.feed(bytes);
            });
            SetupRequest fwd;
            fwd.mirrored = req.mirrored;
            fwd.position = static_cast<std::uint8_t>(req.position + 1);
            fwd.replication_factor = req.replication_factor;
            fwd.downstream.assign(req.downstream.begin() + 1, req.downstream.end());
            std::vector<std::uint8_t> msg = fwd.encode();
            c.write(msg);
        });
        return;
    }
    if (type == MsgType::packet) {
        PacketMsg p = PacketMsg::decode(body);
        handle_packet(p.index, std::vector<std::uint8_t>(p.payload.begin(), p.payload.end()),
                      std::vector<std::uint8_t>(raw.begin(), raw.end()));
    }
}

inline void DataNodeApp::on_downstream_message(MsgType type, std::span<const std::uint8_t> body) {
    msg_counts_[type]++;
    if (type == MsgType::ready) {
        ReadyMsg ready = ReadyMsg::decode(body);
        std::vector<HopConnection> hops;
        hops.push_back(HopConnection{downstream_->local(), downstream_->remote()});
        hops.insert(hops.end(), ready.hops.begin(), ready.hops.end());
        send_ready_upstream(std::move(hops));
        return;
    }
    if (type == MsgType::packet_ack) {
        PacketAckMsg ack = PacketAckMsg::decode(body);
        successor_acked_.insert(ack.index);
        maybe_ack_upstream(ack.index);
    }
}

inline void DataNodeApp::send_ready_upstream(std::vector<HopConnection> hops) {
    // Arm mirrored reception just before reporting readiness: from here on the
    // only legitimate pre-sync traffic on the upstream connection is the
    // mirrored sync ACK.
    if (mirrored_ && position_ >= 2) upstream_->enable_mirror_reception();
    ReadyMsg msg;
    msg.hops = std::move(hops);
    std::vector<std::uint8_t> bytes = msg.encode();
    upstream_->write(bytes);
}

inline void DataNodeApp::handle_packet(std::uint32_t index, std::vector<std::uint8_t> payload,
                                       std::vector<std::uint8_t> raw) {
    SimTime rx_cost = net_.timing().rx_packet_proc_ns + cfg_.persist_delay_ns;
    net_.processor(node_).run(net_.engine(), rx_cost,
                              [this, index, payload = std::move(payload), raw = std::move(raw)]() mutable {
        if (!store_.count(index)) store_[index] = std::move(payload);
        persisted_.insert(index);
        maybe_ack_upstream(index);
        if (downstream_) {
            SimTime fwd_cost = downstream_->is_virtual_sender() ? net_.timing().virtual_tx_proc_ns
                                                                : net_.timing().tx_packet_proc_ns;
            net_.processor(node_).run(net_.engine(), fwd_cost, [this, raw = std::move(raw)] {
                downstream_->write(raw);
            });
        }
    });
}

inline void DataNodeApp::maybe_ack_upstream(std::uint32_t index) {
    if (!persisted_.count(index)) return;
    if (!is_tail_ && !successor_acked_.count(index)) return;
    if (!acked_upstream_.insert(index).second) return;
    std::vector<std::uint8_t> msg = PacketAckMsg::encode(index);
    upstream_->write(msg);
}

} // namespace tcpmr

