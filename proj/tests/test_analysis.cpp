#include <doctest.h>

#include "tcpmr/analysis.hpp"
#include "tcpmr/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

using namespace tcpmr;

namespace {

// The running example placement: outside client descending three links, then
// an in-rack hop, then a cross-pod hop ascending and descending three links.
PlacementCase example_case() {
    PlacementCase c;
    c.client_class = ClientClass::outside;
    c.hops = {{0, 3}, {1, 1}, {3, 3}};
    return c;
}

} // namespace

TEST_CASE("total traversed links of the example chain is eleven") {
    CHECK(l_total(example_case()) == 11);
}

TEST_CASE("co-located single replica traverses nothing") {
    PlacementCase c;
    c.client_class = ClientClass::co_server;
    c.hops = {{0, 0}};
    CHECK(l_total(c) == 0);
    CHECK_FALSE(saving_ratio(c).has_value()); // not applicable
}

TEST_CASE("example saving ratio is exactly 4/11") {
    std::optional<double> r = saving_ratio(example_case());
    REQUIRE(r.has_value());
    CHECK(*r == doctest::Approx(4.0 / 11.0).epsilon(1e-12));
}

TEST_CASE("single replica saves nothing") {
    PlacementCase c;
    c.client_class = ClientClass::outside;
    c.hops = {{0, 3}};
    CHECK(saving_ratio(c) == 0.0);
}

TEST_CASE("a client on D_1's server keeps D_1's ascent") {
    PlacementCase c;
    c.client_class = ClientClass::co_server;
    c.hops = {{0, 0}, {2, 2}, {3, 3}};
    // the first inter-node ascent stays: only the second hop's 3 are saved
    CHECK(*saving_ratio(c) == doctest::Approx(3.0 / 10.0));
}

TEST_CASE("class constraints are enforced") {
    PlacementCase c;
    c.client_class = ClientClass::outside;
    c.hops = {{1, 3}, {1, 1}};
    CHECK_THROWS_AS(l_total(c), std::invalid_argument);
    c.hops = {{0, 3}, {0, 1}};
    CHECK_THROWS_AS(l_total(c), std::invalid_argument);
    c.hops = {{0, 3}, {4, 1}};
    CHECK_THROWS_AS(l_total(c), std::invalid_argument);
}

TEST_CASE("enumeration means match a hand-rolled oracle for k=3") {
    double sum = 0.0;
    std::size_t n = 0;
    for (int a1 = 1; a1 <= 3; ++a1)
        for (int d1 = 1; d1 <= 3; ++d1)
            for (int a2 = 1; a2 <= 3; ++a2)
                for (int d2 = 1; d2 <= 3; ++d2) {
                    sum += double(a1 + a2) / double(3 + a1 + d1 + a2 + d2);
                    n++;
                }
    SavingStats stats = enumerate_average_savings(3, ClientClass::outside);
    CHECK(stats.cases == n);
    CHECK(stats.mean == doctest::Approx(sum / n).epsilon(1e-12));
}

TEST_CASE("every enumerated ratio lies in [0, 1)") {
    for (std::size_t k = 1; k <= 5; ++k)
        for (ClientClass cls : {ClientClass::outside, ClientClass::co_server, ClientClass::co_rack,
                                ClientClass::cross_rack}) {
            SavingStats s = enumerate_average_savings(k, cls);
            CHECK(s.min >= 0.0);
            CHECK(s.max < 1.0);
        }
}

TEST_CASE("average savings sit in the expected band and grow with k") {
    double pooled3 = pooled_average_saving(3);
    CHECK(pooled3 >= 0.15);
    CHECK(pooled3 <= 0.40);
    double prev = pooled_average_saving(2);
    for (std::size_t k = 3; k <= 5; ++k) {
        double cur = pooled_average_saving(k);
        CHECK(cur > prev);
        prev = cur;
    }
}

TEST_CASE("concrete placements match independent path sums") {
    Topology t = build_three_layer({2, 2, 2, 2, {}});
    NodeId client = attach_external_client(t, {});
    Rng rng(4242);
    std::vector<NodeId> hosts = t.hosts();
    for (int trial = 0; trial < 20; ++trial) {
        std::set<NodeId> chosen;
        while (chosen.size() < 3) {
            NodeId h = hosts[rng.next_below(hosts.size())];
            if (h != client) chosen.insert(h);
        }
        std::vector<NodeId> dns(chosen.begin(), chosen.end());
        PlacementCase c = placement_case_of(t, client, dns, true);
        // independent: count non-external links over the chain's hop paths
        std::size_t expected = 0;
        NodeId prev = client;
        for (NodeId dn : dns) {
            for (LinkId l : t.shortest_path(prev, dn))
                if (!t.link(l).external) expected++;
            prev = dn;
        }
        CHECK(l_total(c) == static_cast<int>(expected));
    }
}

TEST_CASE("scenario config validation") {
    ScenarioConfig cfg;
    cfg.replication_factor = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.loss_probability = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.block_bytes = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.effective_transport().recv_buffer_bytes == 20ull * 65536);
}

TEST_CASE("scenario files parse with strict key checking") {
    SUBCASE("full file") {
        std::istringstream in(
            "# comment\n"
            "[topology]\n"
            "core_count = 1\n"
            "agg_per_core = 2\n"
            "link_delay_ns = 5000\n"
            "external_client = false\n"
            "[replication]\n"
            "k = 4\n"
            "mode = mirrored\n"
            "block_bytes = 1048576\n"
            "[transport]\n"
            "mss = 1000\n"
            "[engine]\n"
            "seed = 99\n"
            "loss_probability = 0.01\n"
            "name = demo\n");
        ScenarioConfig cfg = parse_scenario(in);
        CHECK(cfg.topo.agg_per_core == 2);
        CHECK(cfg.topo.link.delay_ns == 5000);
        CHECK_FALSE(cfg.external_client);
        CHECK(cfg.replication_factor == 4);
        CHECK(cfg.mode == RunMode::mirrored);
        CHECK(cfg.block_bytes == 1048576);
        CHECK(cfg.transport.mss == 1000);
        CHECK(cfg.seed == 99);
        CHECK(cfg.loss_probability == doctest::Approx(0.01));
        CHECK(cfg.name == "demo");
    }
    SUBCASE("defaults when empty") {
        std::istringstream in("");
        ScenarioConfig cfg = parse_scenario(in);
        CHECK(cfg.replication_factor == 3);
        CHECK(cfg.block_bytes == 4 * 1024 * 1024);
        CHECK(cfg.mode == RunMode::both);
    }
    SUBCASE("unknown key rejected") {
        std::istringstream in("[topology]\nhost_count = 3\n");
        CHECK_THROWS_AS(parse_scenario(in), ConfigError);
    }
    SUBCASE("unknown section rejected") {
        std::istringstream in("[links]\ndelay = 1\n");
        CHECK_THROWS_AS(parse_scenario(in), ConfigError);
    }
    SUBCASE("key outside a section rejected") {
        std::istringstream in("k = 3\n");
        CHECK_THROWS_AS(parse_scenario(in), ConfigError);
    }
    SUBCASE("malformed values rejected") {
        std::istringstream a("[engine]\nseed = twelve\n");
        CHECK_THROWS_AS(parse_scenario(a), ConfigError);
        std::istringstream b("[topology]\nexternal_client = maybe\n");
        CHECK_THROWS_AS(parse_scenario(b), ConfigError);
        std::istringstream c("[replication]\nmode = parallel\n");
        CHECK_THROWS_AS(parse_scenario(c), ConfigError);
    }
}

TEST_CASE("csv output shape") {
    RunMetrics a;
    a.scenario = "s1";
    a.mode = "chain";
    a.replication_factor = 3;
    a.data_time_ns = 123;
    a.total_time_ns = 456;
    a.saving_ratio = 4.0 / 11.0;
    RunMetrics b = a;
    b.mode = "mirrored";
    std::ostringstream os;
    emit_csv(os, {a, b});
    std::string text = os.str();
    CHECK(text.find(kCsvHeader) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 3); // header + two rows
    CHECK(text.find("s1,chain,3,123,456,0,0,0,0,0.363636") != std::string::npos);
}

TEST_CASE("identical seeds reproduce byte-identical csv and trace") {
    auto run_once = [] {
        ScenarioConfig cfg;
        cfg.block_bytes = 256 * 1024;
        cfg.trace = true;
        cfg.seed = 5;
        std::vector<RunMetrics> rows;
        std::string trace;
        for (const ScenarioRunDetail& d : run_scenario(cfg)) {
            rows.push_back(d.metrics);
            trace += d.trace_text;
        }
        std::ostringstream os;
        emit_csv(os, rows);
        return std::pair{os.str(), trace};
    };
    auto [csv1, trace1] = run_once();
    auto [csv2, trace2] = run_once();
    CHECK(csv1 == csv2);
    CHECK(trace1 == trace2);
    CHECK_FALSE(trace1.empty());
}

TEST_CASE("a k sweep emits one row per scenario and mode, mirrored never slower") {
    std::vector<RunMetrics> rows;
    for (std::size_t k = 2; k <= 5; ++k) {
        ScenarioConfig cfg;
        cfg.name = "k" + std::to_string(k);
        cfg.replication_factor = k;
        cfg.block_bytes = 128 * 1024;
        std::vector<ScenarioRunDetail> pair = run_scenario(cfg);
        CHECK(pair[1].metrics.total_time_ns <= pair[0].metrics.total_time_ns);
        for (const ScenarioRunDetail& d : pair) rows.push_back(d.metrics);
    }
    CHECK(rows.size() == 8);
    std::ostringstream os;
    emit_csv(os, rows);
    std::string text = os.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 9);
}

TEST_CASE("mirrored transfers finish sooner and move fewer bytes") {
    ScenarioConfig cfg;
    cfg.block_bytes = 1024 * 1024;
    std::vector<ScenarioRunDetail> runs = run_scenario(cfg);
    REQUIRE(runs.size() == 2);
    const RunMetrics& chain = runs[0].metrics;
    const RunMetrics& mirrored = runs[1].metrics;
    CHECK(mirrored.data_time_ns < chain.data_time_ns);
    CHECK(mirrored.total_time_ns < chain.total_time_ns);
    CHECK(mirrored.payload_link_traversals < chain.payload_link_traversals);
    // empirical traversal saving agrees with the analytic placement ratio
    double simulated = 1.0 - double(mirrored.payload_link_traversals) /
                                 double(chain.payload_link_traversals);
    CHECK(std::abs(simulated - mirrored.saving_ratio) < 0.02);
    CHECK(chain.saving_ratio == mirrored.saving_ratio); // property of the placement
}

TEST_CASE("analytic link count equals the links the chain payload actually crossed") {
    ScenarioConfig cfg;
    cfg.block_bytes = 256 * 1024;
    ScenarioRunDetail run = run_single_mode(cfg, false);
    PlacementCase pc = placement_case_of(run.net->topology(), run.client_node, run.data_nodes, true);
    std::set<FlowKey> flows = downstream_flows(run.spec);
    const Topology& t = run.net->topology();
    int traversed = 0;
    for (LinkId l = 0; l < t.link_count(); ++l) {
        if (t.link(l).external) continue;
        for (int dir = 0; dir < 2; ++dir)
            for (const FlowKey& f : flows)
                if (run.net->traffic(l, dir).flow_payload_total(f) > 0) traversed++;
    }
    CHECK(traversed == l_total(pc));
}
