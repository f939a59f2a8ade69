#pragma once

#include "tcpmr/core.hpp"

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace tcpmr {

enum class NodeRole : std::uint8_t { host, edge_switch, aggregation_switch, core_switch };

inline const char* role_name(NodeRole r) {
    switch (r) {
        case NodeRole::host: return "host";
        case NodeRole::edge_switch: return "edge";
        case NodeRole::aggregation_switch: return "agg";
        case NodeRole::core_switch: return "core";
    }
    return "?";
}

struct LinkParams {
    SimTime delay_ns = 10000; // 10 us
    std::int64_t bandwidth_bps = 1000000000;
};

constexpr std::uint32_t kNoRack = 0xffffffffu;

// Three-layer data-center graph: hosts under edge (ToR) switches, edges under
// aggregation switches, aggregation switches meshed to the cores. Immutable
// once built; routing queries are deterministic.
class Topology {
public:
    struct Node {
        NodeRole role;
        std::uint32_t rack = kNoRack;        // hosts only
        std::vector<LinkId> ports;           // port index -> link
        std::string label;
    };

    struct Link {
        InterfaceId end_a;
        InterfaceId end_b;
        SimTime delay_ns;
        std::int64_t bandwidth_bps;
        bool external = false; // not part of the data-center network (client uplink)
    };

    NodeId add_node(NodeRole role, std::string label, std::uint32_t rack = kNoRack) {
        nodes_.push_back(Node{role, rack, {}, std::move(label)});
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    LinkId connect(NodeId a, NodeId b, const LinkParams& params, bool external = false) {
        if (a >= nodes_.size() || b >= nodes_.size() || a == b)
            throw std::invalid_argument("connect: bad endpoints");
        LinkId id = static_cast<LinkId>(links_.size());
        InterfaceId ia{a, static_cast<std::uint16_t>(nodes_[a].ports.size())};
        InterfaceId ib{b, static_cast<std::uint16_t>(nodes_[b].ports.size())};
        nodes_[a].ports.push_back(id);
        nodes_[b].ports.push_back(id);
        links_.push_back(Link{ia, ib, params.delay_ns, params.bandwidth_bps, external});
        return id;
    }

    std::size_t node_count() const { return nodes_.size(); }
    std::size_t link_count() const { return links_.size(); }
    const Node& node(NodeId n) const { return nodes_.at(n); }
    const Link& link(LinkId l) const { return links_.at(l); }

    bool is_switch(NodeId n) const { return nodes_.at(n).role != NodeRole::host; }

    // Every node gets a synthetic address; only hosts ever terminate traffic.
    std::uint32_t ip_of(NodeId n) const { return 0x0a000000u + n; }

    NodeId node_of_ip(std::uint32_t ip) const {
        if (ip < 0x0a000000u || ip - 0x0a000000u >= nodes_.size())
            throw std::out_of_range("node_of_ip: unknown address");
        return ip - 0x0a000000u;
    }

    NodeId peer(LinkId l, NodeId from) const {
        const Link& lk = links_.at(l);
        if (lk.end_a.node == from) return lk.end_b.node;
        if (lk.end_b.node == from) return lk.end_a.node;
        throw std::invalid_argument("peer: node not on link");
    }

    InterfaceId interface_on(LinkId l, NodeId at) const {
        const Link& lk = links_.at(l);
        if (lk.end_a.node == at) return lk.end_a;
        if (lk.end_b.node == at) return lk.end_b;
        throw std::invalid_argument("interface_on: node not on link");
    }

    LinkId link_at(InterfaceId ifc) const {
        const Node& n = nodes_.at(ifc.node);
        if (ifc.port >= n.ports.size()) throw std::out_of_range("link_at: bad port");
        return n.ports[ifc.port];
    }

    std::vector<NodeId> hosts() const {
        std::vector<NodeId> out;
        for (NodeId n = 0; n < nodes_.size(); ++n)
            if (nodes_[n].role == NodeRole::host) out.push_back(n);
        return out;
    }

    // ToR switch of a host (the far end of its single access link).
    NodeId edge_switch_of(NodeId host) const {
        const Node& n = nodes_.at(host);
        if (n.role != NodeRole::host || n.ports.size() != 1)
            throw std::invalid_argument("edge_switch_of: not an attached host");
        return peer(n.ports[0], host);
    }

    // Minimal-hop path as an ordered link list. Among equal-length paths the
    // walk always steps to the lowest-numbered next node, so the result is a
    // pure function of the topology.
    std::vector<LinkId> shortest_path(NodeId src, NodeId dst) const {
        if (src == dst) throw std::invalid_argument("shortest_path: src == dst");
        std::vector<std::uint32_t> dist = distances_from(dst);
        if (dist[src] == kUnreachable) throw std::runtime_error("shortest_path: unreachable");
        std::vector<LinkId> path;
        NodeId cur = src;
        while (cur != dst) {
            NodeId best_node = kInvalidNode;
            LinkId best_link = 0;
            for (LinkId l : nodes_[cur].ports) {
                NodeId nb = peer(l, cur);
                if (dist[nb] + 1 == dist[cur] && nb < best_node) {
                    best_node = nb;
                    best_link = l;
                }
            }
            path.push_back(best_link);
            cur = best_node;
        }
        return path;
    }

    // First interface on the shortest path from `sw` toward `dst`.
    InterfaceId egress_interface(NodeId sw, NodeId dst) const {
        if (sw == dst) throw std::invalid_argument("egress_interface: dst is the switch itself");
        std::vector<LinkId> path = shortest_path(sw, dst);
        return interface_on(path.front(), sw);
    }

    // Layering check: host-edge, edge-agg, agg-core in the data center, plus
    // the external client uplink which may attach a host to a core.
    void validate() const {
        if (nodes_.empty()) throw std::logic_error("validate: empty topology");
        std::vector<std::uint32_t> dist = distances_from(0);
        for (NodeId n = 0; n < nodes_.size(); ++n)
            if (dist[n] == kUnreachable) throw std::logic_error("validate: graph not connected");
        for (const Link& l : links_) {
            NodeRole ra = nodes_[l.end_a.node].role;
            NodeRole rb = nodes_[l.end_b.node].role;
            if (ra > rb) std::swap(ra, rb);
            bool ok = (ra == NodeRole::host && rb == NodeRole::edge_switch) ||
                      (ra == NodeRole::edge_switch && rb == NodeRole::aggregation_switch) ||
                      (ra == NodeRole::aggregation_switch && rb == NodeRole::core_switch) ||
                      (l.external && ra == NodeRole::host && rb == NodeRole::core_switch);
            if (!ok) throw std::logic_error("validate: link violates three-layer structure");
        }
        for (NodeId n = 0; n < nodes_.size(); ++n) {
            const Node& nd = nodes_[n];
            if (nd.role == NodeRole::host && nd.ports.size() != 1)
                throw std::logic_error("validate: host must have exactly one attachment");
        }
    }

private:
    static constexpr std::uint32_t kUnreachable = std::numeric_limits<std::uint32_t>::max();

    std::vector<std::uint32_t> distances_from(NodeId origin) const {
        std::vector<std::uint32_t> dist(nodes_.size(), kUnreachable);
        std::deque<NodeId> queue;
        dist[origin] = 0;
        queue.push_back(origin);
        while (!queue.empty()) {
            NodeId cur = queue.front();
            queue.pop_front();
            for (LinkId l : nodes_[cur].ports) {
                NodeId nb = peer(l, cur);
                if (dist[nb] == kUnreachable) {
                    dist[nb] = dist[cur] + 1;
                    queue.push_back(nb);
                }
            }
        }
        return dist;
    }

    std::vector<Node> nodes_;
    std::vector<Link> links_;
};

struct ThreeLayerParams {
    std::uint32_t core_count = 1;
    std::uint32_t agg_per_core = 2;
    std::uint32_t racks_per_agg = 1;
    std::uint32_t hosts_per_rack = 3;
    LinkParams link;
};

// Deterministic numbering, breadth-first from the core layer: cores first,
// then aggregation switches, then edge switches, then hosts. Every
// aggregation switch links to every core; each edge switch has one uplink.
// Link count: cores*aggs + edges + hosts.
inline Topology build_three_layer(const ThreeLayerParams& p) {
    if (p.core_count < 1 || p.agg_per_core < 1 || p.racks_per_agg < 1 || p.hosts_per_rack < 1)
        throw std::invalid_argument("build_three_layer: all counts must be >= 1");
    Topology t;
    const std::uint32_t aggs = p.core_count * p.agg_per_core;
    const std::uint32_t edges = aggs * p.racks_per_agg;

    std::vector<NodeId> core_ids, agg_ids, edge_ids;
    for (std::uint32_t i = 0; i < p.core_count; ++i)
        core_ids.push_back(t.add_node(NodeRole::core_switch, "core" + std::to_string(i)));
    for (std::uint32_t i = 0; i < aggs; ++i)
        agg_ids.push_back(t.add_node(NodeRole::aggregation_switch, "agg" + std::to_string(i)));
    for (std::uint32_t i = 0; i < edges; ++i)
        edge_ids.push_back(t.add_node(NodeRole::edge_switch, "edge" + std::to_string(i), i));
    for (std::uint32_t e = 0; e < edges; ++e)
        for (std::uint32_t h = 0; h < p.hosts_per_rack; ++h)
            t.add_node(NodeRole::host, "host" + std::to_string(e * p.hosts_per_rack + h), e);

    for (NodeId agg : agg_ids)
        for (NodeId core : core_ids) t.connect(agg, core, p.link);
    for (std::uint32_t e = 0; e < edges; ++e) t.connect(edge_ids[e], agg_ids[e / p.racks_per_agg], p.link);
    NodeId first_host = static_cast<NodeId>(p.core_count + aggs + edges);
    for (std::uint32_t e = 0; e < edges; ++e)
        for (std::uint32_t h = 0; h < p.hosts_per_rack; ++h)
            t.connect(first_host + e * p.hosts_per_rack + h, edge_ids[e], p.link);

    t.validate();
    return t;
}

// Attaches a host outside the data center through the lowest-numbered core
// switch. The uplink is flagged external and excluded from in-DC accounting.
inline NodeId attach_external_client(Topology& t, const LinkParams& params) {
    NodeId core = kInvalidNode;
    for (NodeId n = 0; n < t.node_count(); ++n)
        if (t.node(n).role == NodeRole::core_switch) {
            core = n;
            break;
        }
    if (core == kInvalidNode) throw std::logic_error("attach_external_client: no core switch");
    NodeId client = t.add_node(NodeRole::host, "client");
    t.connect(client, core, params, /*external=*/true);
    return client;
}

} // namespace tcpmr
