#pragma once

#include "tcpmr/core.hpp"
#include "tcpmr/fabric.hpp"
#include "tcpmr/topology.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tcpmr {

// One established pipeline connection, as seen on the wire.
struct HopConnection {
    Endpoint src;
    Endpoint dst;

    friend bool operator==(const HopConnection&, const HopConnection&) = default;
};

// Pipeline description handed from the Name Node to the controller after the
// pipeline connections exist: hops[0] is client->D_1, hops[j] is D_j->D_{j+1}.
struct PipelineSpec {
    struct Member {
        NodeId node = kInvalidNode;
        Endpoint addr; // service endpoint for data nodes, ephemeral for the client
    };

    Member client;
    std::vector<Member> data_nodes; // D_1..D_k
    std::vector<HopConnection> hops;

    std::size_t replication_factor() const { return data_nodes.size(); }

    void validate() const {
        if (data_nodes.empty()) throw std::invalid_argument("pipeline: k must be >= 1");
        if (hops.size() != data_nodes.size())
            throw std::invalid_argument("pipeline: one hop connection per data node expected");
        std::set<NodeId> distinct;
        for (const Member& m : data_nodes)
            if (!distinct.insert(m.node).second)
                throw std::invalid_argument("pipeline: data nodes must be distinct");
    }
};

// Per-switch forwarding computation: I_c toward the client, I_D toward every
// data node, and forwarding = I_D - I_c.
struct SwitchPlan {
    NodeId sw = kInvalidNode;
    InterfaceId to_client;
    std::vector<InterfaceId> to_data_nodes; // I_D, sorted, deduplicated
    std::vector<InterfaceId> forwarding;    // I_D - {I_c}, sorted
};

struct TreePlan {
    std::vector<SwitchPlan> switches; // sorted by switch id
};

inline TreePlan compute_tree(const Topology& topo, const PipelineSpec& spec) {
    spec.validate();
    std::set<NodeId> plan_switches;
    for (const PipelineSpec::Member& d : spec.data_nodes) {
        NodeId cur = spec.client.node;
        for (LinkId l : topo.shortest_path(spec.client.node, d.node)) {
            cur = topo.peer(l, cur);
            if (topo.is_switch(cur)) plan_switches.insert(cur);
        }
    }
    TreePlan plan;
    for (NodeId sw : plan_switches) {
        SwitchPlan sp;
        sp.sw = sw;
        sp.to_client = topo.egress_interface(sw, spec.client.node);
        std::set<InterfaceId> toward;
        for (const PipelineSpec::Member& d : spec.data_nodes)
            toward.insert(topo.egress_interface(sw, d.node));
        sp.to_data_nodes.assign(toward.begin(), toward.end());
        for (const InterfaceId& ifc : sp.to_data_nodes)
            if (ifc != sp.to_client) sp.forwarding.push_back(ifc);
        plan.switches.push_back(std::move(sp));
    }
    return plan;
}

constexpr std::int32_t kMirrorEntryPriority = 100;

inline MatchFields pipeline_match(const PipelineSpec& spec) {
    const HopConnection& h0 = spec.hops.at(0);
    MatchFields m;
    m.src_ip = h0.src.ip;
    m.dst_ip = h0.dst.ip;
    m.src_port = h0.src.port;
    m.dst_port = h0.dst.port;
    m.protocol = kProtoTcp;
    return m;
}

struct EntryInstall {
    NodeId sw;
    FlowEntry entry;
};

// Builds the mirroring entry per plan switch. Plain outputs (toward D_1 and
// toward downstream switches) come first; then, for each mirror target D_j
// (j >= 2) attached below this switch, a set-field group rewriting the header
// to the D_{j-1} -> D_j connection plus reserved=1, followed by the output to
// D_j. Each rewrite group sets all five fields, so consecutive groups on one
// switch reset each other.
inline std::vector<EntryInstall> program_mirroring(const Topology& topo, const TreePlan& plan,
                                                   const PipelineSpec& spec) {
    spec.validate();
    std::vector<EntryInstall> installs;
    for (const SwitchPlan& sp : plan.switches) {
        // Mirror targets attached directly below this switch, keyed by interface.
        std::map<InterfaceId, std::size_t> rewrite_for; // interface -> data node index (0-based)
        for (std::size_t j = 1; j < spec.data_nodes.size(); ++j) {
            for (const InterfaceId& ifc : sp.forwarding) {
                LinkId l = topo.link_at(ifc);
                if (topo.peer(l, sp.sw) == spec.data_nodes[j].node) rewrite_for[ifc] = j;
            }
        }
        FlowEntry entry;
        entry.priority = kMirrorEntryPriority;
        entry.match = pipeline_match(spec);
        for (const InterfaceId& ifc : sp.forwarding)
            if (!rewrite_for.count(ifc)) entry.actions.push_back(Action::output(ifc));
        // Ascending j keeps the action list deterministic when one ToR serves
        // several mirror targets.
        std::vector<std::pair<std::size_t, InterfaceId>> targets;
        for (const auto& [ifc, j] : rewrite_for) targets.push_back({j, ifc});
        std::sort(targets.begin(), targets.end());
        for (const auto& [j, ifc] : targets) {
            const HopConnection& hop = spec.hops.at(j); // D_j's inbound connection
            entry.actions.push_back(Action::set(Field::src_ip, hop.src.ip));
            entry.actions.push_back(Action::set(Field::dst_ip, hop.dst.ip));
            entry.actions.push_back(Action::set(Field::src_port, hop.src.port));
            entry.actions.push_back(Action::set(Field::dst_port, hop.dst.port));
            entry.actions.push_back(Action::set(Field::reserved_flag, 1));
            entry.actions.push_back(Action::output(ifc));
        }
        installs.push_back(EntryInstall{sp.sw, std::move(entry)});
    }
    return installs;
}

// Human-readable plan dump, stable across runs for golden-file comparison.
inline std::string plan_dump(const Topology& topo, const std::vector<EntryInstall>& installs) {
    std::ostringstream os;
    for (const EntryInstall& in : installs) {
        os << "switch " << topo.node(in.sw).label << " priority " << in.entry.priority << " match";
        const MatchFields& m = in.entry.match;
        if (m.src_ip) os << " src=" << ip_to_string(*m.src_ip) << ":" << (m.src_port ? std::to_string(*m.src_port) : "*");
        if (m.dst_ip) os << " dst=" << ip_to_string(*m.dst_ip) << ":" << (m.dst_port ? std::to_string(*m.dst_port) : "*");
        os << " actions";
        for (const Action& a : in.entry.actions) {
            if (a.kind == Action::Kind::output) {
                os << " output:" << topo.node(topo.peer(topo.link_at(a.out), in.sw)).label;
            } else if (a.field == Field::src_ip || a.field == Field::dst_ip) {
                os << " set:" << field_name(a.field) << "=" << ip_to_string(a.value);
            } else {
                os << " set:" << field_name(a.field) << "=" << a.value;
            }
        }
        os << "\n";
    }
    return os.str();
}

} // namespace tcpmr
