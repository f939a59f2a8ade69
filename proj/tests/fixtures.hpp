#pragma once

#include "tcpmr/controller.hpp"
#include "tcpmr/topology.hpp"

#include <vector>

namespace tcpmr::testing {

// The running example fabric: one core s_c, aggregation s_b / s_d, racks
// under s_a / s_e with three hosts each, client outside through the core.
// Pipeline D_1, D_2 in the first rack and D_3 in the second.
struct ExampleFabric {
    Topology topo;
    NodeId s_c = 0, s_b = 1, s_d = 2, s_a = 3, s_e = 4;
    NodeId d1 = 5, d2 = 6, d3 = 8;
    NodeId client;

    ExampleFabric() {
        topo = build_three_layer({1, 2, 1, 3, {}});
        client = attach_external_client(topo, {});
    }

    Endpoint host_endpoint(NodeId n, std::uint16_t port) const {
        return Endpoint{topo.ip_of(n), port};
    }

    // Pipeline spec with explicit hop connections, the way the controller
    // receives it after setup.
    PipelineSpec pipeline() const {
        PipelineSpec spec;
        spec.client = {client, host_endpoint(client, 40000)};
        spec.data_nodes = {{d1, host_endpoint(d1, 50010)},
                           {d2, host_endpoint(d2, 50010)},
                           {d3, host_endpoint(d3, 50010)}};
        spec.hops = {
            {host_endpoint(client, 40000), host_endpoint(d1, 50010)},
            {host_endpoint(d1, 40000), host_endpoint(d2, 50010)},
            {host_endpoint(d2, 40000), host_endpoint(d3, 50010)},
        };
        return spec;
    }

    NodeId next_node(NodeId sw, NodeId dst) const {
        return topo.peer(topo.link_at(topo.egress_interface(sw, dst)), sw);
    }

    InterfaceId toward(NodeId sw, NodeId dst) const { return topo.egress_interface(sw, dst); }
};

} // namespace tcpmr::testing
