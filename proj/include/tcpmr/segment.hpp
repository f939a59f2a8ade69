#pragma once

#include "tcpmr/core.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace tcpmr {

// TCP header flags carried by the simulated transport.
namespace flag {
constexpr std::uint8_t syn = 0x01;
constexpr std::uint8_t ack = 0x02;
constexpr std::uint8_t fin = 0x04;
constexpr std::uint8_t rst = 0x08;
constexpr std::uint8_t cwr = 0x10;
constexpr std::uint8_t ece = 0x20;
} // namespace flag

// Simulated transport segment. `reserved` is the 2-bit marker of the mirrored
// replication scheme: 1 tags a mirrored copy of a client segment, 2 tags an
// ACK from a mirror target to its pipeline predecessor.
struct Segment {
    Endpoint src;
    Endpoint dst;
    std::uint64_t seq = 0; // stream byte offset
    std::uint64_t ack = 0;
    std::uint8_t flags = 0;
    std::uint8_t reserved = 0; // 0, 1, or 2
    std::vector<std::uint8_t> payload;

    static constexpr std::uint64_t kHeaderBytes = 40; // IP + TCP, options ignored

    std::uint64_t wire_bytes() const { return kHeaderBytes + payload.size(); }
    bool has(std::uint8_t f) const { return (flags & f) != 0; }
};

inline std::string flags_to_string(std::uint8_t f) {
    std::string s;
    if (f & flag::syn) s += "S";
    if (f & flag::ack) s += "A";
    if (f & flag::fin) s += "F";
    if (f & flag::rst) s += "R";
    if (f & flag::cwr) s += "C";
    if (f & flag::ece) s += "E";
    return s.empty() ? "-" : s;
}

} // namespace tcpmr
