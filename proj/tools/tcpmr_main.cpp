// Command-line front end: `simulate` runs a scenario and emits CSV metrics,
// `analytic` evaluates the link-count model, `sweep` runs a replication-factor
// range in both modes.
//
// Exit codes: 0 success, 1 configuration error, 2 simulation assertion failure.

#include <CLI11.hpp>

#include "tcpmr/analysis.hpp"
#include "tcpmr/config.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

using namespace tcpmr;

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> k;
    std::optional<std::string> mode;
    std::optional<std::uint64_t> block_bytes;
    std::optional<std::uint64_t> packet_bytes;
    std::optional<double> loss;
    std::optional<std::string> name;
    bool trace = false;
};

void apply(const Overrides& o, ScenarioConfig& cfg) {
    if (o.seed) cfg.seed = *o.seed;
    if (o.k) cfg.replication_factor = *o.k;
    if (o.mode) cfg.mode = parse_run_mode(*o.mode);
    if (o.block_bytes) cfg.block_bytes = *o.block_bytes;
    if (o.packet_bytes) cfg.packet_bytes = *o.packet_bytes;
    if (o.loss) cfg.loss_probability = *o.loss;
    if (o.name) cfg.name = *o.name;
    if (o.trace) cfg.trace = true;
    cfg.validate();
}

void write_or_print(const std::string& out_path, const std::string& text) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw ConfigError("cannot write output file: " + out_path);
    out << text;
}

// The post-run invariants a user-facing run always verifies.
void check_run(const ScenarioRunDetail& d) {
    if (!d.replicas_ok) throw std::runtime_error("replica mismatch after completed write");
    if (d.causality_violations != 0)
        throw std::runtime_error("an HDFS acknowledgement overtook persistence");
    if (d.mirror_segments_to_client != 0)
        throw std::runtime_error("a mirror target addressed the client");
}

std::string mirroring_plan_text(const ScenarioRunDetail& d) {
    if (d.spec.replication_factor() < 2) return "(single-node pipeline: no mirroring entries)\n";
    TreePlan plan = compute_tree(d.net->topology(), d.spec);
    return plan_dump(d.net->topology(), program_mirroring(d.net->topology(), plan, d.spec));
}

int cmd_simulate(const std::string& config_path, const Overrides& o, const std::string& out_path,
                 const std::string& trace_path, bool verbose) {
    ScenarioConfig cfg = config_path.empty() ? ScenarioConfig{} : parse_scenario_file(config_path);
    if (!trace_path.empty()) cfg.trace = true;
    apply(o, cfg);
    std::printf("seed: %llu\n", static_cast<unsigned long long>(cfg.seed));

    std::vector<RunMetrics> rows;
    std::string trace;
    for (ScenarioRunDetail& d : run_scenario(cfg)) {
        check_run(d);
        rows.push_back(d.metrics);
        trace += d.trace_text;
        if (verbose && d.metrics.mode == "mirrored") {
            std::printf("mirroring plan:\n%s", mirroring_plan_text(d).c_str());
        }
        std::printf("%s: data %.3f ms, total %.3f ms, %llu payload byte-traversals, %llu retx\n",
                    d.metrics.mode.c_str(), d.metrics.data_time_ns / 1e6,
                    d.metrics.total_time_ns / 1e6,
                    static_cast<unsigned long long>(d.metrics.payload_link_traversals),
                    static_cast<unsigned long long>(d.metrics.retx_count));
    }
    std::ostringstream csv;
    emit_csv(csv, rows);
    write_or_print(out_path, csv.str());
    if (!trace_path.empty()) write_or_print(trace_path, trace);
    return 0;
}

int cmd_analytic(std::size_t k_min, std::size_t k_max, const std::string& out_path) {
    if (k_min < 1 || k_max < k_min) throw ConfigError("bad replication-factor range");
    std::ostringstream os;
    os << "k,client_class,cases,mean_saving_ratio,min_saving_ratio,max_saving_ratio\n";
    char line[160];
    for (std::size_t k = k_min; k <= k_max; ++k) {
        for (ClientClass cls : {ClientClass::outside, ClientClass::co_server, ClientClass::co_rack,
                                ClientClass::cross_rack}) {
            SavingStats s = enumerate_average_savings(k, cls);
            std::snprintf(line, sizeof(line), "%zu,%s,%zu,%.6f,%.6f,%.6f\n", k,
                          client_class_name(cls), s.cases, s.mean, s.min, s.max);
            os << line;
        }
        std::snprintf(line, sizeof(line), "%zu,pooled,,%.6f,,\n", k, pooled_average_saving(k));
        os << line;
    }
    write_or_print(out_path, os.str());
    return 0;
}

int cmd_sweep(const std::string& config_path, const Overrides& o, std::size_t k_min,
              std::size_t k_max, const std::string& out_path) {
    if (k_min < 1 || k_max < k_min) throw ConfigError("bad replication-factor range");
    ScenarioConfig base = config_path.empty() ? ScenarioConfig{} : parse_scenario_file(config_path);
    apply(o, base);
    base.mode = RunMode::both;
    std::printf("seed: %llu\n", static_cast<unsigned long long>(base.seed));
    std::vector<RunMetrics> rows;
    for (std::size_t k = k_min; k <= k_max; ++k) {
        ScenarioConfig cfg = base;
        cfg.replication_factor = k;
        cfg.name = base.name + "-k" + std::to_string(k);
        for (ScenarioRunDetail& d : run_scenario(cfg)) {
            check_run(d);
            rows.push_back(d.metrics);
        }
    }
    std::ostringstream csv;
    emit_csv(csv, rows);
    write_or_print(out_path, csv.str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discrete-event simulator of SDN-assisted mirrored replication for cluster file systems"};
    app.require_subcommand(1);

    Overrides o;
    std::string config_path, out_path, trace_path;
    bool verbose = false;
    std::size_t k_min = 2, k_max = 5;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "scenario config file");
        cmd->add_option("--seed", o.seed, "override the random seed");
        cmd->add_option("--block-bytes", o.block_bytes, "override the block size");
        cmd->add_option("--packet-bytes", o.packet_bytes, "override the packet size");
        cmd->add_option("--loss", o.loss, "override the per-link drop probability");
        cmd->add_option("--name", o.name, "scenario name for the CSV");
        cmd->add_option("--out", out_path, "output CSV path (default: stdout)");
    };

    CLI::App* simulate = app.add_subcommand("simulate", "run one scenario");
    add_common(simulate);
    simulate->add_option("--k", o.k, "override the replication factor");
    simulate->add_option("--mode", o.mode, "chain | mirrored | both");
    simulate->add_option("--trace", trace_path, "write the event trace to a file");
    simulate->add_flag("--verbose", verbose, "print the installed mirroring plan");

    CLI::App* analytic = app.add_subcommand("analytic", "evaluate the link-count saving model");
    analytic->add_option("--k-min", k_min, "lowest replication factor");
    analytic->add_option("--k-max", k_max, "highest replication factor");
    analytic->add_option("--out", out_path, "output CSV path (default: stdout)");

    CLI::App* sweep = app.add_subcommand("sweep", "run a replication-factor range in both modes");
    add_common(sweep);
    sweep->add_option("--k-min", k_min, "lowest replication factor");
    sweep->add_option("--k-max", k_max, "highest replication factor");

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) return cmd_simulate(config_path, o, out_path, trace_path, verbose);
        if (analytic->parsed()) return cmd_analytic(k_min, k_max, out_path);
        if (sweep->parsed()) return cmd_sweep(config_path, o, k_min, k_max, out_path);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "simulation error: %s\n", e.what());
        return 2;
    }
    return 0;
}
