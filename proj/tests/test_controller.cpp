#include <doctest.h>

#include "tcpmr/controller.hpp"

#include "fixtures.hpp"

#include <deque>
#include <map>
#include <set>
#include <vector>

using namespace tcpmr;
using tcpmr::testing::ExampleFabric;

namespace {

const SwitchPlan* plan_for(const TreePlan& plan, NodeId sw) {
    for (const SwitchPlan& sp : plan.switches)
        if (sp.sw == sw) return &sp;
    return nullptr;
}

std::set<InterfaceId> as_set(const std::vector<InterfaceId>& v) { return {v.begin(), v.end()}; }

// Path-union oracle: walk every client->D_j shortest path and collect, per
// switch, the outgoing path edges minus the incoming (client-facing) ones.
std::map<NodeId, std::set<InterfaceId>> forwarding_oracle(const Topology& t, NodeId client,
                                                          const std::vector<NodeId>& data_nodes) {
    std::map<NodeId, std::set<InterfaceId>> outgoing, incoming;
    for (NodeId dn : data_nodes) {
        NodeId cur = client;
        for (LinkId l : t.shortest_path(client, dn)) {
            NodeId next = t.peer(l, cur);
            if (t.is_switch(cur)) outgoing[cur].insert(t.interface_on(l, cur));
            if (t.is_switch(next)) incoming[next].insert(t.interface_on(l, next));
            cur = next;
        }
    }
    std::map<NodeId, std::set<InterfaceId>> result;
    for (auto& [sw, outs] : outgoing) {
        for (const InterfaceId& in : incoming[sw]) outs.erase(in);
        result[sw] = outs;
    }
    for (auto& [sw, ins] : incoming)
        if (!result.count(sw)) result[sw] = {};
    return result;
}

// Floods one frame through the fabric and records what reaches each host.
std::vector<std::pair<NodeId, Segment>> flood(const Topology& t,
                                              const std::vector<FlowTable>& tables, NodeId first_sw,
                                              InterfaceId entry_if, const Segment& frame) {
    std::vector<std::pair<NodeId, Segment>> delivered;
    std::deque<std::tuple<NodeId, InterfaceId, Segment>> queue{{first_sw, entry_if, frame}};
    while (!queue.empty()) {
        auto [node, in_if, seg] = queue.front();
        queue.pop_front();
        if (!t.is_switch(node)) {
            delivered.push_back({node, seg});
            continue;
        }
        for (ForwardedFrame& out : process_frame(t, tables[node], node, in_if, seg)) {
            LinkId l = t.link_at(out.out_if);
            NodeId next = t.peer(l, node);
            queue.push_back({next, t.interface_on(l, next), std::move(out.segment)});
        }
    }
    return delivered;
}

} // namespace

TEST_CASE("forwarding interfaces on the example pipeline match the expected table") {
    ExampleFabric f;
    TreePlan plan = compute_tree(f.topo, f.pipeline());
    REQUIRE(plan.switches.size() == 5);

    const SwitchPlan* sa = plan_for(plan, f.s_a);
    REQUIRE(sa);
    CHECK(sa->to_client == f.toward(f.s_a, f.s_b));
    CHECK(as_set(sa->forwarding) ==
          std::set<InterfaceId>{f.toward(f.s_a, f.d1), f.toward(f.s_a, f.d2)});

    const SwitchPlan* sb = plan_for(plan, f.s_b);
    REQUIRE(sb);
    CHECK(sb->to_client == f.toward(f.s_b, f.s_c));
    CHECK(as_set(sb->forwarding) == std::set<InterfaceId>{f.toward(f.s_b, f.s_a)});

    const SwitchPlan* sc = plan_for(plan, f.s_c);
    REQUIRE(sc);
    CHECK(sc->to_client == f.toward(f.s_c, f.client));
    CHECK(as_set(sc->forwarding) ==
          std::set<InterfaceId>{f.toward(f.s_c, f.s_b), f.toward(f.s_c, f.s_d)});

    const SwitchPlan* sd = plan_for(plan, f.s_d);
    REQUIRE(sd);
    CHECK(sd->to_client == f.toward(f.s_d, f.s_c));
    CHECK(as_set(sd->to_data_nodes) ==
          std::set<InterfaceId>{f.toward(f.s_d, f.s_c), f.toward(f.s_d, f.s_e)});
    CHECK(as_set(sd->forwarding) == std::set<InterfaceId>{f.toward(f.s_d, f.s_e)});

    const SwitchPlan* se = plan_for(plan, f.s_e);
    REQUIRE(se);
    CHECK(se->to_client == f.toward(f.s_e, f.s_d));
    CHECK(as_set(se->forwarding) == std::set<InterfaceId>{f.toward(f.s_e, f.d3)});
}

TEST_CASE("never forward toward the client") {
    ExampleFabric f;
    TreePlan plan = compute_tree(f.topo, f.pipeline());
    for (const SwitchPlan& sp : plan.switches)
        for (const InterfaceId& ifc : sp.forwarding) CHECK(ifc != sp.to_client);
}

TEST_CASE("k=1 with the data node in the client's reach: plan follows the single path") {
    ExampleFabric f;
    PipelineSpec spec;
    spec.client = {f.client, f.host_endpoint(f.client, 40000)};
    spec.data_nodes = {{f.d1, f.host_endpoint(f.d1, 50010)}};
    spec.hops = {{f.host_endpoint(f.client, 40000), f.host_endpoint(f.d1, 50010)}};
    TreePlan plan = compute_tree(f.topo, spec);
    CHECK(plan.switches.size() == 3); // s_c, s_b, s_a
    const SwitchPlan* sa = plan_for(plan, f.s_a);
    REQUIRE(sa);
    CHECK(as_set(sa->forwarding) == std::set<InterfaceId>{f.toward(f.s_a, f.d1)});
}

TEST_CASE("random placements agree with the path-union oracle") {
    Topology t = build_three_layer({2, 2, 2, 2, {}});
    NodeId client = attach_external_client(t, {});
    std::vector<NodeId> hosts = t.hosts();
    Rng rng(1234);
    for (int trial = 0; trial < 25; ++trial) {
        std::set<NodeId> chosen;
        while (chosen.size() < 4) chosen.insert(hosts[rng.next_below(hosts.size() - 1)]);
        std::vector<NodeId> dns(chosen.begin(), chosen.end());
        PipelineSpec spec;
        spec.client = {client, Endpoint{t.ip_of(client), 40000}};
        for (NodeId dn : dns) spec.data_nodes.push_back({dn, Endpoint{t.ip_of(dn), 50010}});
        Endpoint prev = spec.client.addr;
        for (NodeId dn : dns) {
            spec.hops.push_back({prev, Endpoint{t.ip_of(dn), 50010}});
            prev = Endpoint{t.ip_of(dn), 40000};
        }
        TreePlan plan = compute_tree(t, spec);
        std::map<NodeId, std::set<InterfaceId>> oracle = forwarding_oracle(t, client, dns);
        REQUIRE(plan.switches.size() == oracle.size());
        for (const SwitchPlan& sp : plan.switches) {
            REQUIRE(oracle.count(sp.sw));
            CHECK(as_set(sp.forwarding) == oracle[sp.sw]);
        }
    }
}

TEST_CASE("mirroring entries: rewrite groups and action order") {
    ExampleFabric f;
    PipelineSpec spec = f.pipeline();
    TreePlan plan = compute_tree(f.topo, spec);
    std::vector<EntryInstall> installs = program_mirroring(f.topo, plan, spec);
    REQUIRE(installs.size() == 5);

    std::map<NodeId, FlowEntry> by_switch;
    for (const EntryInstall& in : installs) by_switch[in.sw] = in.entry;

    // every entry matches the client->D_1 connection
    for (auto& [sw, entry] : by_switch) {
        CHECK(entry.match.src_ip == f.topo.ip_of(f.client));
        CHECK(entry.match.dst_ip == f.topo.ip_of(f.d1));
        CHECK(entry.priority == kMirrorEntryPriority);
    }

    // the D_3 rack ToR rewrites to the D_2->D_3 connection then outputs
    const FlowEntry& se = by_switch[f.s_e];
    REQUIRE(se.actions.size() == 6);
    CHECK(se.actions[0] == Action::set(Field::src_ip, spec.hops[2].src.ip));
    CHECK(se.actions[1] == Action::set(Field::dst_ip, spec.hops[2].dst.ip));
    CHECK(se.actions[2] == Action::set(Field::src_port, spec.hops[2].src.port));
    CHECK(se.actions[3] == Action::set(Field::dst_port, spec.hops[2].dst.port));
    CHECK(se.actions[4] == Action::set(Field::reserved_flag, 1));
    CHECK(se.actions[5] == Action::output(f.toward(f.s_e, f.d3)));

    // the shared rack ToR outputs the untouched copy before rewriting
    const FlowEntry& sa = by_switch[f.s_a];
    REQUIRE(sa.actions.size() == 7);
    CHECK(sa.actions[0] == Action::output(f.toward(f.s_a, f.d1)));
    CHECK(sa.actions[1] == Action::set(Field::src_ip, spec.hops[1].src.ip));
    CHECK(sa.actions[5] == Action::set(Field::reserved_flag, 1));
    CHECK(sa.actions[6] == Action::output(f.toward(f.s_a, f.d2)));

    // the core only replicates
    const FlowEntry& sc = by_switch[f.s_c];
    REQUIRE(sc.actions.size() == 2);
    CHECK(sc.actions[0] == Action::output(f.toward(f.s_c, f.s_b)));
    CHECK(sc.actions[1] == Action::output(f.toward(f.s_c, f.s_d)));
}

TEST_CASE("one ToR serving two mirror targets resets the fields between rewrites") {
    // D_2 and D_3 share the second rack: the ToR entry carries two rewrite
    // groups back to back, each setting all five fields.
    ExampleFabric f;
    PipelineSpec spec;
    spec.client = {f.client, f.host_endpoint(f.client, 40000)};
    spec.data_nodes = {{f.d1, f.host_endpoint(f.d1, 50010)},
                       {f.d3, f.host_endpoint(f.d3, 50010)},
                       {NodeId(9), f.host_endpoint(9, 50010)}};
    spec.hops = {
        {f.host_endpoint(f.client, 40000), f.host_endpoint(f.d1, 50010)},
        {f.host_endpoint(f.d1, 40000), f.host_endpoint(f.d3, 50010)},
        {f.host_endpoint(f.d3, 40000), f.host_endpoint(9, 50010)},
    };
    std::vector<EntryInstall> installs = program_mirroring(f.topo, compute_tree(f.topo, spec), spec);
    const FlowEntry* tor = nullptr;
    for (const EntryInstall& in : installs)
        if (in.sw == f.s_e) tor = &in.entry;
    REQUIRE(tor);
    REQUIRE(tor->actions.size() == 12); // two groups of five set-fields + output
    CHECK(tor->actions[0] == Action::set(Field::src_ip, spec.hops[1].src.ip));
    CHECK(tor->actions[1] == Action::set(Field::dst_ip, spec.hops[1].dst.ip));
    CHECK(tor->actions[5] == Action::output(f.toward(f.s_e, f.d3)));
    CHECK(tor->actions[6] == Action::set(Field::src_ip, spec.hops[2].src.ip));
    CHECK(tor->actions[7] == Action::set(Field::dst_ip, spec.hops[2].dst.ip));
    CHECK(tor->actions[11] == Action::output(f.toward(f.s_e, 9)));

    // run a frame through: each target gets its own connection's header
    std::vector<FlowTable> tables(f.topo.node_count());
    for (const EntryInstall& in : installs) tables[in.sw].install(in.entry);
    Segment frame;
    frame.src = spec.hops[0].src;
    frame.dst = spec.hops[0].dst;
    frame.payload.assign(10, 0x1);
    auto delivered = flood(f.topo, tables, f.s_c, f.toward(f.s_c, f.client), frame);
    std::map<NodeId, Segment> at;
    for (auto& [node, seg] : delivered) at[node] = seg;
    REQUIRE(at.size() == 3);
    CHECK(at[f.d3].src == spec.hops[1].src);
    CHECK(at[f.d3].dst == spec.hops[1].dst);
    CHECK(at[9].src == spec.hops[2].src);
    CHECK(at[9].dst == spec.hops[2].dst);
    CHECK(at[f.d3].reserved == 1);
    CHECK(at[9].reserved == 1);
}

TEST_CASE("an injected client frame reaches every data node exactly once, rewritten") {
    ExampleFabric f;
    PipelineSpec spec = f.pipeline();
    std::vector<FlowTable> tables(f.topo.node_count());
    for (const EntryInstall& in : program_mirroring(f.topo, compute_tree(f.topo, spec), spec))
        tables[in.sw].install(in.entry);

    Segment frame;
    frame.src = spec.hops[0].src;
    frame.dst = spec.hops[0].dst;
    frame.seq = 77;
    frame.flags = flag::ack;
    frame.payload.assign(64, 0x5a);

    // inject at the core, arriving from the client's uplink
    auto delivered = flood(f.topo, tables, f.s_c, f.toward(f.s_c, f.client), frame);
    REQUIRE(delivered.size() == 3);
    std::map<NodeId, Segment> at;
    for (auto& [node, seg] : delivered) {
        CHECK_FALSE(at.count(node)); // exactly once each
        at[node] = seg;
    }
    REQUIRE(at.count(f.d1));
    REQUIRE(at.count(f.d2));
    REQUIRE(at.count(f.d3));
    CHECK(at[f.d1].src == spec.hops[0].src);
    CHECK(at[f.d1].reserved == 0);
    CHECK(at[f.d2].src == spec.hops[1].src);
    CHECK(at[f.d2].dst == spec.hops[1].dst);
    CHECK(at[f.d2].reserved == 1);
    CHECK(at[f.d3].src == spec.hops[2].src);
    CHECK(at[f.d3].dst == spec.hops[2].dst);
    CHECK(at[f.d3].reserved == 1);
    for (auto& [node, seg] : at) {
        CHECK(seg.payload == frame.payload);
        CHECK(seg.seq == frame.seq);
    }
}

TEST_CASE("distribution tree is acyclic and spans the data nodes") {
    Topology t = build_three_layer({2, 2, 2, 2, {}});
    NodeId client = attach_external_client(t, {});
    std::vector<NodeId> hosts = t.hosts();
    Rng rng(99);
    for (int trial = 0; trial < 10; ++trial) {
        std::set<NodeId> chosen;
        while (chosen.size() < 5) chosen.insert(hosts[rng.next_below(hosts.size() - 1)]);
        std::vector<NodeId> dns(chosen.begin(), chosen.end());
        PipelineSpec spec;
        spec.client = {client, Endpoint{t.ip_of(client), 40000}};
        Endpoint prev = spec.client.addr;
        for (NodeId dn : dns) {
            spec.data_nodes.push_back({dn, Endpoint{t.ip_of(dn), 50010}});
            spec.hops.push_back({prev, Endpoint{t.ip_of(dn), 50010}});
            prev = Endpoint{t.ip_of(dn), 40000};
        }
        TreePlan plan = compute_tree(t, spec);
        std::map<NodeId, const SwitchPlan*> by_sw;
        for (const SwitchPlan& sp : plan.switches) by_sw[sp.sw] = &sp;

        std::set<NodeId> visited;
        std::map<NodeId, int> host_hits;
        std::deque<NodeId> queue{t.edge_switch_of(client)};
        while (!queue.empty()) {
            NodeId sw = queue.front();
            queue.pop_front();
            CHECK(visited.insert(sw).second); // acyclic: no switch twice
            if (!by_sw.count(sw)) continue;
            for (const InterfaceId& ifc : by_sw[sw]->forwarding) {
                NodeId next = t.peer(t.link_at(ifc), sw);
                if (t.is_switch(next))
                    queue.push_back(next);
                else
                    host_hits[next]++;
            }
        }
        for (NodeId dn : dns) CHECK(host_hits[dn] == 1);
    }
}

TEST_CASE("teardown removes the pipeline entries and is idempotent") {
    ExampleFabric f;
    PipelineSpec spec = f.pipeline();
    FlowTable table;
    for (const EntryInstall& in : program_mirroring(f.topo, compute_tree(f.topo, spec), spec))
        if (in.sw == f.s_a) table.install(in.entry);
    CHECK(table.size() == 1);
    CHECK(table.remove_matching(pipeline_match(spec)) == 1);
    CHECK(table.remove_matching(pipeline_match(spec)) == 0); // second teardown: no-op
    Segment frame;
    frame.src = spec.hops[0].src;
    frame.dst = spec.hops[0].dst;
    CHECK_FALSE(table.lookup(frame).has_value());
}

TEST_CASE("plan dump is stable and human readable") {
    ExampleFabric f;
    PipelineSpec spec = f.pipeline();
    std::vector<EntryInstall> installs = program_mirroring(f.topo, compute_tree(f.topo, spec), spec);
    std::string dump = plan_dump(f.topo, installs);
    CHECK(dump == plan_dump(f.topo, installs)); // deterministic
    CHECK(dump.find("switch core0") != std::string::npos);
    CHECK(dump.find("set:reserved=1") != std::string::npos);
    CHECK(dump.find("output:host3") != std::string::npos); // D_3 behind edge1
}
