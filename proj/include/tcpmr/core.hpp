#pragma once

#include <cstdint>
#include <functional>
#include <string>

namespace tcpmr {

// Simulation time is integer nanoseconds so queue ordering never depends on
// floating-point rounding.
using SimTime = std::int64_t;

constexpr SimTime operator""_ns(unsigned long long v) { return static_cast<SimTime>(v); }
constexpr SimTime operator""_us(unsigned long long v) { return static_cast<SimTime>(v) * 1000; }
constexpr SimTime operator""_ms(unsigned long long v) { return static_cast<SimTime>(v) * 1000000; }
constexpr SimTime operator""_sec(unsigned long long v) { return static_cast<SimTime>(v) * 1000000000; }

using NodeId = std::uint32_t;
using LinkId = std::uint32_t;

constexpr NodeId kInvalidNode = 0xffffffffu;

// An interface is a (node, local port index) pair.
struct InterfaceId {
    NodeId node = kInvalidNode;
    std::uint16_t port = 0;

    friend bool operator==(const InterfaceId&, const InterfaceId&) = default;
    friend auto operator<=>(const InterfaceId&, const InterfaceId&) = default;
};

// Transport-layer endpoint address.
struct Endpoint {
    std::uint32_t ip = 0;
    std::uint16_t port = 0;

    friend bool operator==(const Endpoint&, const Endpoint&) = default;
    friend auto operator<=>(const Endpoint&, const Endpoint&) = default;
};

inline std::string ip_to_string(std::uint32_t ip) {
    return std::to_string((ip >> 24) & 0xff) + "." + std::to_string((ip >> 16) & 0xff) + "." +
           std::to_string((ip >> 8) & 0xff) + "." + std::to_string(ip & 0xff);
}

inline std::string endpoint_to_string(const Endpoint& e) {
    return ip_to_string(e.ip) + ":" + std::to_string(e.port);
}

// splitmix64: small, fast, and good enough for Bernoulli loss draws.
// Each consumer derives its own stream so adding streams never perturbs
// existing ones.
class Rng {
public:
    Rng() = default;
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) {
        if (p <= 0.0) return false;
        if (p >= 1.0) return true;
        return next_double() < p;
    }

    // Uniform in [0, n).
    std::uint64_t next_below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

private:
    std::uint64_t state_ = 0x9e3779b97f4a7c15ull;
};

// Deterministic stream derivation: mixes a label into a seed so independent
// subsystems (per-link loss, block content, placement) get unrelated streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t label) {
    std::uint64_t z = seed ^ (0x9e3779b97f4a7c15ull + (label << 1));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

} // namespace tcpmr

template <>
struct std::hash<tcpmr::Endpoint> {
    std::size_t operator()(const tcpmr::Endpoint& e) const noexcept {
        return std::hash<std::uint64_t>{}((std::uint64_t(e.ip) << 16) | e.port);
    }
};

template <>
struct std::hash<tcpmr::InterfaceId> {
    std::size_t operator()(const tcpmr::InterfaceId& i) const noexcept {
        return std::hash<std::uint64_t>{}((std::uint64_t(i.node) << 16) | i.port);
    }
};
