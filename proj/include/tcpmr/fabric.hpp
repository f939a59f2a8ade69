#pragma once

#include "tcpmr/core.hpp"
#include "tcpmr/segment.hpp"
#include "tcpmr/topology.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tcpmr {

constexpr std::uint8_t kProtoTcp = 6;

// 5-tuple match with per-field wildcards.
struct MatchFields {
    std::optional<std::uint32_t> src_ip;
    std::optional<std::uint32_t> dst_ip;
    std::optional<std::uint16_t> src_port;
    std::optional<std::uint16_t> dst_port;
    std::optional<std::uint8_t> protocol;

    bool matches(const Segment& s) const {
        if (src_ip && *src_ip != s.src.ip) return false;
        if (dst_ip && *dst_ip != s.dst.ip) return false;
        if (src_port && *src_port != s.src.port) return false;
        if (dst_port && *dst_port != s.dst.port) return false;
        if (protocol && *protocol != kProtoTcp) return false;
        return true;
    }

    bool any_concrete() const { return src_ip || dst_ip || src_port || dst_port || protocol; }

    friend bool operator==(const MatchFields&, const MatchFields&) = default;
};

enum class Field : std::uint8_t { src_ip, dst_ip, src_port, dst_port, reserved_flag };

inline const char* field_name(Field f) {
    switch (f) {
        case Field::src_ip: return "src_ip";
        case Field::dst_ip: return "dst_ip";
        case Field::src_port: return "src_port";
        case Field::dst_port: return "dst_port";
        case Field::reserved_flag: return "reserved";
    }
    return "?";
}

// set-field rewrites the working header copy; output emits the frame in its
// current state on an interface. Applied strictly in list order.
struct Action {
    enum class Kind : std::uint8_t { set_field, output } kind;
    Field field = Field::src_ip;  // set_field
    std::uint32_t value = 0;      // set_field
    InterfaceId out;              // output

    static Action set(Field f, std::uint32_t v) { return Action{Kind::set_field, f, v, {}}; }
    static Action output(InterfaceId ifc) { return Action{Kind::output, Field::src_ip, 0, ifc}; }

    friend bool operator==(const Action&, const Action&) = default;
};

struct FlowEntry {
    std::int32_t priority = 0;
    MatchFields match;
    std::vector<Action> actions;

    friend bool operator==(const FlowEntry&, const FlowEntry&) = default;
};

struct SwitchTraceRecord {
    SimTime time;
    NodeId sw;
    std::optional<std::size_t> entry; // nullopt = table miss
    InterfaceId in_if;
    std::vector<InterfaceId> out_ifs;
};

// Per-switch flow table. Matching picks the highest priority; among equal
// priorities the earliest-installed entry wins.
class FlowTable {
public:
    // Idempotent for an identical entry. Returns the entry index.
    std::size_t install(const FlowEntry& entry) {
        for (std::size_t i = 0; i < entries_.size(); ++i)
            if (entries_[i] == entry) return i;
        entries_.push_back(entry);
        return entries_.size() - 1;
    }

    // Removes every entry with the given match. Returns how many went away.
    std::size_t remove_matching(const MatchFields& match) {
        std::size_t before = entries_.size();
        std::erase_if(entries_, [&](const FlowEntry& e) { return e.match == match; });
        return before - entries_.size();
    }

    std::optional<std::size_t> lookup(const Segment& s) const {
        std::optional<std::size_t> best;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (!entries_[i].match.matches(s)) continue;
            if (!best || entries_[i].priority > entries_[*best].priority) best = i;
        }
        return best;
    }

    std::size_t size() const { return entries_.size(); }
    const FlowEntry& entry(std::size_t i) const { return entries_.at(i); }

private:
    std::vector<FlowEntry> entries_;
};

inline void apply_set_field(Segment& s, Field f, std::uint32_t v) {
    switch (f) {
        case Field::src_ip: s.src.ip = v; break;
        case Field::dst_ip: s.dst.ip = v; break;
        case Field::src_port: s.src.port = static_cast<std::uint16_t>(v); break;
        case Field::dst_port: s.dst.port = static_cast<std::uint16_t>(v); break;
        case Field::reserved_flag:
            if (v > 2) throw std::invalid_argument("reserved flag out of range");
            s.reserved = static_cast<std::uint8_t>(v);
            break;
    }
}

struct ForwardedFrame {
    InterfaceId out_if;
    Segment segment;
};

// Runs one frame through a switch: matched entries execute their action list
// (each output emits a copy with the set-fields applied so far); a table miss
// falls back to destination-based shortest-path forwarding. A frame is never
// reflected out its ingress interface, and a frame addressed to the switch
// itself is consumed.
inline std::vector<ForwardedFrame> process_frame(const Topology& topo, const FlowTable& table,
                                                 NodeId sw, InterfaceId in_if, const Segment& frame,
                                                 SwitchTraceRecord* trace = nullptr) {
    if (!topo.is_switch(sw)) throw std::invalid_argument("process_frame: not a switch");
    std::vector<ForwardedFrame> out;
    std::optional<std::size_t> hit = table.lookup(frame);
    if (trace) {
        trace->sw = sw;
        trace->entry = hit;
        trace->in_if = in_if;
        trace->out_ifs.clear();
    }
    if (hit) {
        Segment working = frame;
        for (const Action& a : table.entry(*hit).actions) {
            if (a.kind == Action::Kind::set_field) {
                apply_set_field(working, a.field, a.value);
            } else {
                if (a.out == in_if) continue;
                out.push_back(ForwardedFrame{a.out, working});
                if (trace) trace->out_ifs.push_back(a.out);
            }
        }
        return out;
    }
    // Table miss: forward one unmodified copy toward the destination address.
    NodeId dst_node;
    try {
        dst_node = topo.node_of_ip(frame.dst.ip);
    } catch (const std::out_of_range&) {
        return out; // unroutable, drop
    }
    if (dst_node == sw) return out;
    InterfaceId egress = topo.egress_interface(sw, dst_node);
    if (egress == in_if) return out;
    out.push_back(ForwardedFrame{egress, frame});
    if (trace) trace->out_ifs.push_back(egress);
    return out;
}

} // namespace tcpmr
