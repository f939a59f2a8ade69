#pragma once

#include "tcpmr/analysis.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace tcpmr {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        std::uint64_t v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (...) {
        throw ConfigError("bad integer for '" + key + "': " + value);
    }
}

inline double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (...) {
        throw ConfigError("bad number for '" + key + "': " + value);
    }
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("bad boolean for '" + key + "': " + value);
}

} // namespace detail

inline RunMode parse_run_mode(const std::string& value) {
    if (value == "chain") return RunMode::chain;
    if (value == "mirrored") return RunMode::mirrored;
    if (value == "both") return RunMode::both;
    throw ConfigError("bad mode: " + value + " (expected chain|mirrored|both)");
}

// Scenario files are ini-style: sections [topology], [replication],
// [transport], [engine]; '#' starts a comment. Unknown sections or keys are
// rejected so typos cannot silently fall back to defaults.
inline ScenarioConfig parse_scenario(std::istream& in) {
    ScenarioConfig cfg;
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        lineno++;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
            section = line.substr(1, line.size() - 2);
            if (section != "topology" && section != "replication" && section != "transport" &&
                section != "engine")
                throw ConfigError("unknown section [" + section + "]");
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (section.empty()) throw ConfigError("key '" + key + "' outside any section");

        using detail::parse_bool;
        using detail::parse_double;
        using detail::parse_u64;
        if (section == "topology") {
            if (key == "core_count") cfg.topo.core_count = static_cast<std::uint32_t>(parse_u64(key, value));
            else if (key == "agg_per_core") cfg.topo.agg_per_core = static_cast<std::uint32_t>(parse_u64(key, value));
            else if (key == "racks_per_agg") cfg.topo.racks_per_agg = static_cast<std::uint32_t>(parse_u64(key, value));
            else if (key == "hosts_per_rack") cfg.topo.hosts_per_rack = static_cast<std::uint32_t>(parse_u64(key, value));
            else if (key == "link_delay_ns") cfg.topo.link.delay_ns = static_cast<SimTime>(parse_u64(key, value));
            else if (key == "link_bandwidth_bps") cfg.topo.link.bandwidth_bps = static_cast<std::int64_t>(parse_u64(key, value));
            else if (key == "external_client") cfg.external_client = parse_bool(key, value);
            else throw ConfigError("unknown key '" + key + "' in [topology]");
        } else if (section == "replication") {
            if (key == "k") cfg.replication_factor = parse_u64(key, value);
            else if (key == "mode") cfg.mode = parse_run_mode(value);
            else if (key == "block_bytes") cfg.block_bytes = parse_u64(key, value);
            else if (key == "packet_bytes") cfg.packet_bytes = parse_u64(key, value);
            else if (key == "write_max_packets") cfg.write_max_packets = static_cast<std::uint32_t>(parse_u64(key, value));
            else if (key == "persist_delay_ns") cfg.persist_delay_ns = static_cast<SimTime>(parse_u64(key, value));
            else if (key == "block_id") cfg.block_id = parse_u64(key, value);
            else throw ConfigError("unknown key '" + key + "' in [replication]");
        } else if (section == "transport") {
            if (key == "mss") cfg.transport.mss = static_cast<std::uint32_t>(parse_u64(key, value));
            else if (key == "rto_initial_ns") cfg.transport.rto_initial_ns = static_cast<SimTime>(parse_u64(key, value));
            else if (key == "rto_max_ns") cfg.transport.rto_max_ns = static_cast<SimTime>(parse_u64(key, value));
            else if (key == "recv_buffer_bytes") cfg.transport.recv_buffer_bytes = parse_u64(key, value);
            else if (key == "ack_delay_ns") cfg.transport.ack_delay_ns = static_cast<SimTime>(parse_u64(key, value));
            else throw ConfigError("unknown key '" + key + "' in [transport]");
        } else { // engine
            if (key == "seed") cfg.seed = parse_u64(key, value);
            else if (key == "loss_probability") cfg.loss_probability = parse_double(key, value);
            else if (key == "rx_packet_proc_ns") cfg.timing.rx_packet_proc_ns = static_cast<SimTime>(parse_u64(key, value));
            else if (key == "tx_packet_proc_ns") cfg.timing.tx_packet_proc_ns = static_cast<SimTime>(parse_u64(key, value));
            else if (key == "virtual_tx_proc_ns") cfg.timing.virtual_tx_proc_ns = static_cast<SimTime>(parse_u64(key, value));
            else if (key == "trace") cfg.trace = parse_bool(key, value);
            else if (key == "name") cfg.name = value;
            else throw ConfigError("unknown key '" + key + "' in [engine]");
        }
    }
    cfg.validate();
    return cfg;
}

inline ScenarioConfig parse_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse_scenario(in);
}

} // namespace tcpmr
