#pragma once

#include "tcpmr/controller.hpp"
#include "tcpmr/core.hpp"
#include "tcpmr/engine.hpp"
#include "tcpmr/fabric.hpp"
#include "tcpmr/segment.hpp"
#include "tcpmr/topology.hpp"
#include "tcpmr/transport.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tcpmr {

struct FlowKey {
    Endpoint src;
    Endpoint dst;
    friend auto operator<=>(const FlowKey&, const FlowKey&) = default;
};

// Per-direction traffic accounting. Bytes count on successful carriage only;
// frames killed by loss land in wasted_bytes. Payload is attributed per flow,
// split between mirrored copies (reserved=1) and everything else, so the
// eliminated-ascent checks can tell a mirror descent from a real
// retransmission.
struct LinkTraffic {
    std::uint64_t frames = 0;
    std::uint64_t total_bytes = 0;
    std::uint64_t payload_bytes = 0;
    std::uint64_t pure_ack_bytes = 0;
    std::uint64_t wasted_bytes = 0;
    std::uint64_t dropped_frames = 0;
    std::map<FlowKey, std::uint64_t> flow_payload_real;
    std::map<FlowKey, std::uint64_t> flow_payload_mirrored;

    std::uint64_t flow_payload_total(const FlowKey& key) const {
        std::uint64_t sum = 0;
        if (auto it = flow_payload_real.find(key); it != flow_payload_real.end()) sum += it->second;
        if (auto it = flow_payload_mirrored.find(key); it != flow_payload_mirrored.end()) sum += it->second;
        return sum;
    }
};

// Every transport-level emission, attributed to the emitting node (mirrored
// copies are attributed to the original sender, which is the point: mirror
// targets must never talk to the client).
struct EmissionRecord {
    SimTime time;
    NodeId node;
    Endpoint src;
    Endpoint dst;
    std::uint8_t flags;
    std::uint8_t reserved;
    std::uint32_t payload_bytes;
    bool retransmission;
};

struct NetworkParams {
    std::uint64_t seed = 1;
    double loss_probability = 0.0;
    TransportConfig transport;
    TimingParams timing;
    bool record_emissions = true;
};

// The simulated network: one event timeline, the switch fabric, and a
// transport host per topology host. Frames move host -> access link -> switch
// chain -> host; switches consult their flow tables and fall back to
// destination routing on a miss.
class Network {
public:
    using TraceFn = std::function<void(const std::string&)>;

    Network(Topology topo, NetworkParams params)
        : topo_(std::move(topo)), params_(params) {
        flow_tables_.resize(topo_.node_count());
        processors_.resize(topo_.node_count());
        traffic_.resize(topo_.link_count() * 2);
        link_dirs_.reserve(topo_.link_count() * 2);
        for (LinkId l = 0; l < topo_.link_count(); ++l) {
            const Topology::Link& lk = topo_.link(l);
            for (int dir = 0; dir < 2; ++dir)
                link_dirs_.emplace_back(lk.bandwidth_bps, lk.delay_ns, params_.loss_probability,
                                        derive_seed(params_.seed, (std::uint64_t(l) << 1) | unsigned(dir)));
        }
        hosts_.resize(topo_.node_count());
        for (NodeId n = 0; n < topo_.node_count(); ++n) {
            if (topo_.node(n).role != NodeRole::host) continue;
            hosts_[n] = std::make_unique<TransportHost>(
                engine_, topo_.ip_of(n), params_.transport,
                [this, n](const Segment& seg, bool retx) { host_emit(n, seg, retx); });
        }
    }

    Engine& engine() { return engine_; }
    const Topology& topology() const { return topo_; }
    const NetworkParams& params() const { return params_; }
    const TimingParams& timing() const { return params_.timing; }

    TransportHost& host(NodeId n) {
        if (!hosts_.at(n)) throw std::invalid_argument("host: node is not a host");
        return *hosts_[n];
    }

    SerialProcessor& processor(NodeId n) { return processors_.at(n); }
    FlowTable& flow_table(NodeId sw) {
        if (!topo_.is_switch(sw)) throw std::invalid_argument("flow_table: not a switch");
        return flow_tables_.at(sw);
    }

    // Controller-side entry management.
    void install_entries(const std::vector<EntryInstall>& installs) {
        for (const EntryInstall& in : installs) {
            flow_table(in.sw).install(in.entry);
            trace_line("t=" + std::to_string(engine_.now()) + " install sw=" + topo_.node(in.sw).label);
        }
    }

    std::size_t remove_entries(const MatchFields& match) {
        std::size_t removed = 0;
        for (NodeId n = 0; n < topo_.node_count(); ++n)
            if (topo_.is_switch(n)) removed += flow_tables_[n].remove_matching(match);
        return removed;
    }

    SimTime run() { return engine_.run_until_idle(); }

    const LinkTraffic& traffic(LinkId l, int direction) const { return traffic_.at(l * 2 + direction); }

    // Copy of every per-direction counter, e.g. to diff data-phase traffic
    // against the setup phase.
    std::vector<LinkTraffic> traffic_snapshot() const { return traffic_; }

    // Direction index for traversal from `from` over link l.
    int direction_from(LinkId l, NodeId from) const {
        const Topology::Link& lk = topo_.link(l);
        if (lk.end_a.node == from) return 0;
        if (lk.end_b.node == from) return 1;
        throw std::invalid_argument("direction_from: node not on link");
    }

    const std::vector<EmissionRecord>& emissions() const { return emissions_; }

    void set_trace(TraceFn fn) {
        trace_ = std::move(fn);
        for (NodeId n = 0; n < topo_.node_count(); ++n)
            if (hosts_[n]) {
                std::string label = topo_.node(n).label;
                hosts_[n]->set_trace([this, label](const std::string& line) {
                    trace_("node=" + label + " " + line);
                });
            }
    }

    std::uint64_t total_dropped_frames() const {
        std::uint64_t total = 0;
        for (const LinkTraffic& t : traffic_) total += t.dropped_frames;
        return total;
    }

private:
    void trace_line(const std::string& line) {
        if (trace_) trace_(line);
    }

    void host_emit(NodeId node, const Segment& seg, bool retransmission) {
        if (params_.record_emissions)
            emissions_.push_back(EmissionRecord{engine_.now(), node, seg.src, seg.dst, seg.flags,
                                                seg.reserved,
                                                static_cast<std::uint32_t>(seg.payload.size()),
                                                retransmission});
        const Topology::Node& n = topo_.node(node);
        transmit(n.ports.at(0), node, seg);
    }

    void transmit(LinkId l, NodeId from, const Segment& seg) {
        int dir = direction_from(l, from);
        LinkDirection& ld = link_dirs_[l * 2 + dir];
        LinkTraffic& stats = traffic_[l * 2 + dir];
        LinkDirection::TransmitResult res = ld.transmit(engine_.now(), seg.wire_bytes());
        if (!res.delivered) {
            stats.wasted_bytes += seg.wire_bytes();
            stats.dropped_frames++;
            return;
        }
        stats.frames++;
        stats.total_bytes += seg.wire_bytes();
        if (seg.payload.empty()) {
            stats.pure_ack_bytes += seg.wire_bytes();
        } else {
            stats.payload_bytes += seg.payload.size();
            FlowKey key{seg.src, seg.dst};
            if (seg.reserved == 1)
                stats.flow_payload_mirrored[key] += seg.payload.size();
            else
                stats.flow_payload_real[key] += seg.payload.size();
        }
        NodeId to = topo_.peer(l, from);
        InterfaceId in_if = topo_.interface_on(l, to);
        engine_.schedule_at(res.arrival, [this, to, in_if, seg] { arrive(to, in_if, seg); });
    }

    void arrive(NodeId node, InterfaceId in_if, const Segment& seg) {
        if (topo_.node(node).role == NodeRole::host) {
            hosts_[node]->deliver(seg);
            return;
        }
        SwitchTraceRecord rec;
        rec.time = engine_.now();
        std::vector<ForwardedFrame> out =
            process_frame(topo_, flow_tables_[node], node, in_if, seg, trace_ ? &rec : nullptr);
        if (trace_) {
            std::ostringstream os;
            os << "t=" << rec.time << " sw=" << topo_.node(node).label << " "
               << (rec.entry ? "entry=" + std::to_string(*rec.entry) : std::string("miss"))
               << " in=" << in_if.port << " out=[";
            for (std::size_t i = 0; i < rec.out_ifs.size(); ++i)
                os << (i ? "," : "") << rec.out_ifs[i].port;
            os << "]";
            trace_line(os.str());
        }
        for (ForwardedFrame& f : out) transmit(topo_.link_at(f.out_if), node, f.segment);
    }

    Topology topo_;
    NetworkParams params_;
    Engine engine_;
    std::vector<FlowTable> flow_tables_;
    std::vector<SerialProcessor> processors_;
    std::vector<std::unique_ptr<TransportHost>> hosts_;
    std::vector<LinkDirection> link_dirs_;
    std::vector<LinkTraffic> traffic_;
    std::vector<EmissionRecord> emissions_;
    TraceFn trace_;
};

} // namespace tcpmr
