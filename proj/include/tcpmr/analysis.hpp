#pragma once

#include "tcpmr/network.hpp"
#include "tcpmr/replication.hpp"
#include "tcpmr/topology.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tcpmr {

// ---------------------------------------------------------------------------
// Analytic traffic model: the chain transfer of hop j (D_j -> D_{j+1}, with
// the client as D_0) crosses some ascending links up to a peak switch and
// some descending links down to the next node. Mirroring eliminates the
// ascending links of every hop past the client's own.

enum class ClientClass : std::uint8_t { outside, co_server, co_rack, cross_rack };

inline const char* client_class_name(ClientClass c) {
    switch (c) {
        case ClientClass::outside: return "outside";
        case ClientClass::co_server: return "co_server";
        case ClientClass::co_rack: return "co_rack";
        case ClientClass::cross_rack: return "cross_rack";
    }
    return "?";
}

struct HopLinks {
    int ascending = 0;
    int descending = 0;
};

struct PlacementCase {
    ClientClass client_class = ClientClass::outside;
    std::vector<HopLinks> hops; // index 0 = client hop, 1..k-1 = inter-node hops

    std::size_t replication_factor() const { return hops.size(); }

    void validate() const {
        if (hops.empty()) throw std::invalid_argument("placement case: no hops");
        const HopLinks& h0 = hops[0];
        bool ok = false;
        switch (client_class) {
            case ClientClass::outside: ok = h0.ascending == 0 && h0.descending == 3; break;
            case ClientClass::co_server: ok = h0.ascending == 0 && h0.descending == 0; break;
            case ClientClass::co_rack: ok = h0.ascending == 1 && h0.descending == 1; break;
            case ClientClass::cross_rack:
                ok = h0.ascending == h0.descending && (h0.ascending == 2 || h0.ascending == 3);
                break;
        }
        if (!ok) throw std::invalid_argument("placement case: client hop violates its class");
        for (std::size_t j = 1; j < hops.size(); ++j)
            if (hops[j].ascending < 1 || hops[j].ascending > 3 || hops[j].descending < 1 ||
                hops[j].descending > 3)
                throw std::invalid_argument("placement case: inter-node hop counts must be 1..3");
    }
};

// Total traversed in-DC links of the chain transfer.
inline int l_total(const PlacementCase& c) {
    c.validate();
    int sum = 0;
    for (const HopLinks& h : c.hops) sum += h.ascending + h.descending;
    return sum;
}

// Fraction of traversals eliminated by mirroring: the ascending links of the
// inter-node hops. When the client shares D_1's server, D_1 stays the
// replication source and its ascent is not eliminable.
inline std::optional<double> saving_ratio(const PlacementCase& c) {
    int total = l_total(c);
    if (total == 0) return std::nullopt;
    int saved = 0;
    for (std::size_t j = 1; j < c.hops.size(); ++j) {
        if (j == 1 && c.client_class == ClientClass::co_server) continue;
        saved += c.hops[j].ascending;
    }
    return static_cast<double>(saved) / static_cast<double>(total);
}

struct SavingStats {
    std::size_t cases = 0;
    double mean = 0.0;
    double min = 1.0;
    double max = 0.0;
};

// Uniform enumeration of every placement case consistent with the class
// constraints: the client hop takes its class-fixed values (two variants for
// cross-rack) and each inter-node hop ranges over ascending x descending in
// {1,2,3}^2.
template <typename Fn>
inline void enumerate_cases(std::size_t k, ClientClass cls, Fn&& fn) {
    if (k < 1) throw std::invalid_argument("enumerate_cases: k must be >= 1");
    std::vector<HopLinks> first_hops;
    switch (cls) {
        case ClientClass::outside: first_hops = {{0, 3}}; break;
        case ClientClass::co_server: first_hops = {{0, 0}}; break;
        case ClientClass::co_rack: first_hops = {{1, 1}}; break;
        case ClientClass::cross_rack: first_hops = {{2, 2}, {3, 3}}; break;
    }
    for (const HopLinks& h0 : first_hops) {
        PlacementCase c;
        c.client_class = cls;
        c.hops.assign(k, HopLinks{1, 1});
        c.hops[0] = h0;
        // odometer over hops 1..k-1
        while (true) {
            fn(c);
            std::size_t j = 1;
            for (; j < k; ++j) {
                if (c.hops[j].descending < 3) {
                    c.hops[j].descending++;
                    break;
                }
                c.hops[j].descending = 1;
                if (c.hops[j].ascending < 3) {
                    c.hops[j].ascending++;
                    break;
                }
                c.hops[j].ascending = 1;
            }
            if (j == k) break;
        }
    }
}

inline SavingStats enumerate_average_savings(std::size_t k, ClientClass cls) {
    SavingStats stats;
    double sum = 0.0;
    enumerate_cases(k, cls, [&](const PlacementCase& c) {
        std::optional<double> r = saving_ratio(c);
        double v = r.value_or(0.0);
        stats.cases++;
        sum += v;
        stats.min = std::min(stats.min, v);
        stats.max = std::max(stats.max, v);
    });
    stats.mean = stats.cases ? sum / static_cast<double>(stats.cases) : 0.0;
    return stats;
}

// Equal-weight mean over the four client classes.
inline double pooled_average_saving(std::size_t k) {
    double sum = 0.0;
    for (ClientClass cls : {ClientClass::outside, ClientClass::co_server, ClientClass::co_rack,
                            ClientClass::cross_rack})
        sum += enumerate_average_savings(k, cls).mean;
    return sum / 4.0;
}

// ---------------------------------------------------------------------------
// Concrete placements: derive the per-hop link counts from the topology, so
// the analytic model and the simulation describe the same transfer.

inline int node_depth(const Topology& t, NodeId n) {
    switch (t.node(n).role) {
        case NodeRole::core_switch: return 0;
        case NodeRole::aggregation_switch: return 1;
        case NodeRole::edge_switch: return 2;
        case NodeRole::host: return 3;
    }
    return 3;
}

struct DirectedLink {
    LinkId link;
    int direction;
    friend auto operator<=>(const DirectedLink&, const DirectedLink&) = default;
};

// In-DC directed links of the shortest path, with the ascent/descent split.
struct HopPath {
    std::vector<DirectedLink> ascending;
    std::vector<DirectedLink> descending;
};

inline HopPath hop_path(const Topology& t, NodeId from, NodeId to) {
    HopPath out;
    NodeId cur = from;
    for (LinkId l : t.shortest_path(from, to)) {
        NodeId next = t.peer(l, cur);
        if (!t.link(l).external) {
            int dir = t.link(l).end_a.node == cur ? 0 : 1;
            if (node_depth(t, next) < node_depth(t, cur))
                out.ascending.push_back(DirectedLink{l, dir});
            else
                out.descending.push_back(DirectedLink{l, dir});
        }
        cur = next;
    }
    return out;
}

// Placement case of a concrete pipeline. `client_external` marks the
// outside-the-DC client (its uplink is not counted).
inline PlacementCase placement_case_of(const Topology& t, NodeId client,
                                       const std::vector<NodeId>& data_nodes, bool client_external) {
    PlacementCase c;
    if (client_external) {
        c.client_class = ClientClass::outside;
    } else if (t.node(client).rack == t.node(data_nodes.at(0)).rack) {
        c.client_class = ClientClass::co_rack;
    } else {
        c.client_class = ClientClass::cross_rack;
    }
    NodeId prev = client;
    for (NodeId dn : data_nodes) {
        HopPath p = hop_path(t, prev, dn);
        c.hops.push_back(HopLinks{static_cast<int>(p.ascending.size()),
                                  static_cast<int>(p.descending.size())});
        prev = dn;
    }
    return c;
}

// ---------------------------------------------------------------------------
// Scenario configuration and execution.

enum class RunMode : std::uint8_t { chain, mirrored, both };

inline const char* run_mode_name(RunMode m) {
    switch (m) {
        case RunMode::chain: return "chain";
        case RunMode::mirrored: return "mirrored";
        case RunMode::both: return "both";
    }
    return "?";
}

struct ScenarioConfig {
    std::string name = "default";
    ThreeLayerParams topo;
    bool external_client = true;

    std::size_t replication_factor = 3;
    RunMode mode = RunMode::both;
    std::uint64_t block_bytes = 4 * 1024 * 1024;
    std::uint64_t packet_bytes = 64 * 1024;
    std::uint32_t write_max_packets = 20;
    SimTime persist_delay_ns = 0;
    std::uint64_t block_id = 1;

    TransportConfig transport;
    std::uint64_t seed = 1;
    double loss_probability = 0.0;
    TimingParams timing;
    bool trace = false;

    void validate() const {
        if (replication_factor < 1) throw std::invalid_argument("config: k must be >= 1");
        if (block_bytes == 0 || packet_bytes == 0) throw std::invalid_argument("config: sizes must be positive");
        if (write_max_packets == 0) throw std::invalid_argument("config: writeMaxPackets must be positive");
        if (loss_probability < 0.0 || loss_probability > 1.0)
            throw std::invalid_argument("config: loss probability out of range");
        if (topo.core_count < 1 || topo.agg_per_core < 1 || topo.racks_per_agg < 1 ||
            topo.hosts_per_rack < 1)
            throw std::invalid_argument("config: topology counts must be >= 1");
        if (topo.link.bandwidth_bps < 1 || topo.link.delay_ns < 0)
            throw std::invalid_argument("config: bad link parameters");
        if (transport.mss < 1 || transport.rto_initial_ns < 1)
            throw std::invalid_argument("config: bad transport parameters");
        if (timing.rx_packet_proc_ns < 0 || timing.tx_packet_proc_ns < 0 ||
            timing.virtual_tx_proc_ns < 0 || persist_delay_ns < 0)
            throw std::invalid_argument("config: processing delays must be non-negative");
    }

    // The receive buffer defaults to writeMaxPackets x packet size.
    TransportConfig effective_transport() const {
        TransportConfig t = transport;
        if (t.recv_buffer_bytes == 0) t.recv_buffer_bytes = std::uint64_t(write_max_packets) * packet_bytes;
        return t;
    }
};

// One CSV row.
struct RunMetrics {
    std::string scenario;
    std::string mode;
    std::size_t replication_factor = 0;
    SimTime data_time_ns = 0;
    SimTime total_time_ns = 0;
    std::uint64_t payload_link_traversals = 0; // downstream-flow payload bytes summed over in-DC links
    std::uint64_t acks_bytes = 0;              // pure-ACK wire bytes on in-DC links
    std::uint64_t retx_count = 0;
    std::uint64_t early_ack_count = 0;
    double saving_ratio = 0.0; // analytic ratio of the concrete placement
};

// Everything a test might want to poke at after a run.
struct ScenarioRunDetail {
    RunMetrics metrics;
    bool replicas_ok = false;
    std::uint64_t mirror_segments_to_client = 0; // emissions from D_j (j>=2) addressed to the client
    std::uint64_t misdirected_acks = 0;          // pure ACKs from D_j not aimed at a pipeline neighbor
    std::uint64_t sync_count = 0;
    std::uint32_t peak_outstanding = 0;
    std::uint64_t dropped_frames = 0;
    std::uint64_t causality_violations = 0;
    PipelineSpec spec;
    std::vector<NodeId> data_nodes;
    NodeId client_node = kInvalidNode;
    std::shared_ptr<Network> net;      // kept alive for counter inspection
    std::shared_ptr<PipelineRun> run;
    std::string trace_text;
    std::vector<LinkTraffic> data_start_traffic; // counters when packet streaming began

    // Payload bytes a flow put on one directed link during the data phase.
    std::uint64_t data_phase_flow_payload(LinkId l, int dir, const FlowKey& f,
                                          bool mirrored_only = false, bool real_only = false) const {
        const LinkTraffic& now = net->traffic(l, dir);
        const LinkTraffic& base = data_start_traffic.at(l * 2 + dir);
        auto lookup = [&](const std::map<FlowKey, std::uint64_t>& m) {
            auto it = m.find(f);
            return it == m.end() ? 0ull : it->second;
        };
        std::uint64_t real = lookup(now.flow_payload_real) - lookup(base.flow_payload_real);
        std::uint64_t mirrored = lookup(now.flow_payload_mirrored) - lookup(base.flow_payload_mirrored);
        if (mirrored_only) return mirrored;
        if (real_only) return real;
        return real + mirrored;
    }
};

inline std::set<FlowKey> downstream_flows(const PipelineSpec& spec) {
    std::set<FlowKey> flows;
    for (const HopConnection& h : spec.hops) flows.insert(FlowKey{h.src, h.dst});
    return flows;
}

// Payload bytes of replication (downstream) flows summed over all in-DC
// directed links: the simulated counterpart of "data volume x traversed
// links".
inline std::uint64_t downstream_payload_traversals(const Network& net, const PipelineSpec& spec) {
    std::set<FlowKey> flows = downstream_flows(spec);
    std::uint64_t sum = 0;
    const Topology& t = net.topology();
    for (LinkId l = 0; l < t.link_count(); ++l) {
        if (t.link(l).external) continue;
        for (int dir = 0; dir < 2; ++dir) {
            const LinkTraffic& traffic = net.traffic(l, dir);
            for (const FlowKey& f : flows) sum += traffic.flow_payload_total(f);
        }
    }
    return sum;
}

inline std::uint64_t in_dc_pure_ack_bytes(const Network& net) {
    std::uint64_t sum = 0;
    const Topology& t = net.topology();
    for (LinkId l = 0; l < t.link_count(); ++l) {
        if (t.link(l).external) continue;
        for (int dir = 0; dir < 2; ++dir) sum += net.traffic(l, dir).pure_ack_bytes;
    }
    return sum;
}

// Runs one mode of a scenario end to end.
inline ScenarioRunDetail run_single_mode(const ScenarioConfig& cfg, bool mirrored) {
    cfg.validate();
    Topology topo = build_three_layer(cfg.topo);
    NodeId client;
    if (cfg.external_client) {
        client = attach_external_client(topo, cfg.topo.link);
    } else {
        std::vector<NodeId> hosts = topo.hosts();
        client = hosts.back(); // deterministic in-DC client
    }
    Placement placement = allocate_data_nodes(topo, cfg.replication_factor, client, cfg.seed);

    NetworkParams np;
    np.seed = cfg.seed;
    np.loss_probability = cfg.loss_probability;
    np.transport = cfg.effective_transport();
    np.timing = cfg.timing;

    ScenarioRunDetail detail;
    detail.net = std::make_shared<Network>(std::move(topo), np);
    Network& net = *detail.net;
    std::string trace_text;
    if (cfg.trace)
        net.set_trace([&trace_text](const std::string& line) {
            trace_text += line;
            trace_text += '\n';
        });

    SessionConfig session;
    session.replication_factor = cfg.replication_factor;
    session.block_bytes = cfg.block_bytes;
    session.packet_bytes = cfg.packet_bytes;
    session.write_max_packets = cfg.write_max_packets;
    session.mirrored = mirrored;
    session.persist_delay_ns = cfg.persist_delay_ns;
    session.block_id = cfg.block_id;
    session.seed = cfg.seed;

    detail.run = std::make_shared<PipelineRun>(net, client, placement.data_nodes, session);
    detail.run->on_data_start = [&detail, &net] { detail.data_start_traffic = net.traffic_snapshot(); };
    detail.run->start();
    net.run();

    const PipelineRun::Result& result = detail.run->result();
    if (!result.completed) throw std::runtime_error("run_single_mode: block write did not complete");

    detail.client_node = client;
    detail.data_nodes = placement.data_nodes;
    detail.spec = result.spec;
    detail.replicas_ok = detail.run->replicas_match_source();
    detail.sync_count = result.sync_count;
    detail.peak_outstanding = result.peak_outstanding;
    detail.causality_violations = result.hdfs_ack_causality_violations;
    detail.dropped_frames = net.total_dropped_frames();
    detail.trace_text = std::move(trace_text);

    // Table II discipline: a mirror target talks to its pipeline neighbors
    // only, never to the client.
    std::set<NodeId> mirror_nodes(placement.data_nodes.begin() + 1, placement.data_nodes.end());
    std::uint32_t client_ip = net.topology().ip_of(client);
    for (const EmissionRecord& e : net.emissions()) {
        if (!mirror_nodes.count(e.node)) continue;
        if (e.dst.ip == client_ip) detail.mirror_segments_to_client++;
        if (e.payload_bytes == 0) {
            std::size_t j = 0;
            while (placement.data_nodes[j] != e.node) ++j;
            std::uint32_t prev_ip = net.topology().ip_of(placement.data_nodes[j - 1]);
            bool ok = e.dst.ip == prev_ip;
            if (!ok && j + 1 < placement.data_nodes.size())
                ok = e.dst.ip == net.topology().ip_of(placement.data_nodes[j + 1]);
            if (!ok) detail.misdirected_acks++;
        }
    }

    RunMetrics& m = detail.metrics;
    m.scenario = cfg.name;
    m.mode = mirrored ? "mirrored" : "chain";
    m.replication_factor = cfg.replication_factor;
    m.data_time_ns = result.completion - result.data_start;
    m.total_time_ns = result.completion - result.session_start;
    m.payload_link_traversals = downstream_payload_traversals(net, result.spec);
    m.acks_bytes = in_dc_pure_ack_bytes(net);
    std::uint64_t retx = 0, early = 0;
    for (NodeId n = 0; n < net.topology().node_count(); ++n) {
        if (net.topology().node(n).role != NodeRole::host) continue;
        net.host(n).for_each_connection([&](const Connection& c) {
            retx += c.counters().retransmitted_segments;
            early += c.counters().early_acks_stored;
        });
    }
    m.retx_count = retx;
    m.early_ack_count = early;
    PlacementCase pc =
        placement_case_of(net.topology(), client, placement.data_nodes, cfg.external_client);
    m.saving_ratio = saving_ratio(pc).value_or(0.0);
    return detail;
}

inline std::vector<ScenarioRunDetail> run_scenario(const ScenarioConfig& cfg) {
    std::vector<ScenarioRunDetail> out;
    if (cfg.mode == RunMode::chain || cfg.mode == RunMode::both)
        out.push_back(run_single_mode(cfg, false));
    if (cfg.mode == RunMode::mirrored || cfg.mode == RunMode::both)
        out.push_back(run_single_mode(cfg, true));
    return out;
}

// ---------------------------------------------------------------------------
// CSV output.

inline const char* kCsvHeader =
    "scenario,mode,k,data_time_ns,total_time_ns,payload_link_traversals,acks_bytes,retx_count,"
    "early_ack_count,saving_ratio";

inline std::string csv_row(const RunMetrics& m) {
    char ratio[32];
    std::snprintf(ratio, sizeof(ratio), "%.6f", m.saving_ratio);
    std::ostringstream os;
    os << m.scenario << ',' << m.mode << ',' << m.replication_factor << ',' << m.data_time_ns << ','
       << m.total_time_ns << ',' << m.payload_link_traversals << ',' << m.acks_bytes << ','
       << m.retx_count << ',' << m.early_ack_count << ',' << ratio;
    return os.str();
}

inline void emit_csv(std::ostream& os, const std::vector<RunMetrics>& rows) {
    os << kCsvHeader << '\n';
    for (const RunMetrics& m : rows) os << csv_row(m) << '\n';
}

} // namespace tcpmr
