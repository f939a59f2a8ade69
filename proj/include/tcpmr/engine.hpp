#pragma once

#include "tcpmr/core.hpp"

#include <cstdint>
#include <functional>
#include <queue>
#include <stdexcept>
#include <vector>

namespace tcpmr {

// Discrete-event core. Events fire in (time, insertion sequence) order, which
// makes every run with the same inputs bit-identical.
class Engine {
public:
    using Handler = std::function<void()>;

    SimTime now() const { return now_; }

    void schedule_at(SimTime when, Handler fn) {
        if (when < now_) throw std::logic_error("event scheduled in the past");
        queue_.push(Entry{when, next_seq_++, std::move(fn)});
    }

    void schedule_after(SimTime delay, Handler fn) { schedule_at(now_ + delay, std::move(fn)); }

    bool empty() const { return queue_.empty(); }

    // Drains the queue; returns the final clock value.
    SimTime run_until_idle() {
        while (!queue_.empty()) {
            Entry e = std::move(const_cast<Entry&>(queue_.top()));
            queue_.pop();
            now_ = e.when;
            e.fn();
        }
        return now_;
    }

private:
    struct Entry {
        SimTime when;
        std::uint64_t seq;
        Handler fn;

        bool operator>(const Entry& o) const {
            if (when != o.when) return when > o.when;
            return seq > o.seq;
        }
    };

    SimTime now_ = 0;
    std::uint64_t next_seq_ = 0;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue_;
};

// One direction of a full-duplex link: FIFO serialization at `bandwidth_bps`,
// then fixed propagation delay. Loss is Bernoulli per frame from a stream
// derived from (seed, link id, direction), so the draw sequence of one link
// never depends on traffic elsewhere.
class LinkDirection {
public:
    LinkDirection() = default;
    LinkDirection(std::int64_t bandwidth_bps, SimTime propagation_ns, double drop_probability,
                  std::uint64_t stream_seed)
        : bandwidth_bps_(bandwidth_bps),
          propagation_ns_(propagation_ns),
          drop_probability_(drop_probability),
          rng_(stream_seed) {}

    SimTime serialization_delay(std::uint64_t bytes) const {
        return static_cast<SimTime>(bytes * 8u * 1000000000ull / static_cast<std::uint64_t>(bandwidth_bps_));
    }

    struct TransmitResult {
        bool delivered = false;
        SimTime arrival = 0; // valid only when delivered
    };

    // Decides drop/delivery and computes the arrival instant. The caller owns
    // scheduling the arrival event and all byte accounting.
    TransmitResult transmit(SimTime now, std::uint64_t frame_bytes) {
        offered_frames_++;
        if (rng_.bernoulli(drop_probability_)) {
            dropped_frames_++;
            return {};
        }
        delivered_frames_++;
        SimTime start = now > next_free_ ? now : next_free_;
        SimTime departure = start + serialization_delay(frame_bytes);
        next_free_ = departure;
        return {true, departure + propagation_ns_};
    }

    std::uint64_t offered_frames() const { return offered_frames_; }
    std::uint64_t delivered_frames() const { return delivered_frames_; }
    std::uint64_t dropped_frames() const { return dropped_frames_; }

private:
    std::int64_t bandwidth_bps_ = 1000000000;
    SimTime propagation_ns_ = 0;
    double drop_probability_ = 0.0;
    SimTime next_free_ = 0;
    Rng rng_;
    std::uint64_t offered_frames_ = 0;
    std::uint64_t delivered_frames_ = 0;
    std::uint64_t dropped_frames_ = 0;
};

// Per-node packet processing costs. The defaults model a processing-bound
// testbed: a data node pays the receive cost for every packet it assembles
// and the transmit cost only when it puts the packet on the wire for real; a
// virtual transmission is bookkeeping only. ACK generation delay lives in the
// transport configuration.
struct TimingParams {
    SimTime rx_packet_proc_ns = 350000;
    SimTime tx_packet_proc_ns = 350000;
    SimTime virtual_tx_proc_ns = 10000;
};

// Inputs to the early-ACK condition: an ACK from the mirror target reaches the
// predecessor before the predecessor's own virtual transmission when
// t_vtx > t_ack.
struct EarlyAckParams {
    SimTime client_to_prev_ns = 0;  // segment travel time, client -> D_{j-1}
    SimTime prev_proc_ns = 0;       // D_{j-1} work before its virtual transmission
    SimTime client_to_node_ns = 0;  // segment travel time, client -> D_j
    SimTime node_ack_proc_ns = 0;   // D_j work before it emits the ACK
    SimTime node_to_prev_ns = 0;    // ACK travel time, D_j -> D_{j-1}
};

inline SimTime early_ack_t_vtx(const EarlyAckParams& p) { return p.client_to_prev_ns + p.prev_proc_ns; }

inline SimTime early_ack_t_ack(const EarlyAckParams& p) {
    return p.client_to_node_ns + p.node_ack_proc_ns + p.node_to_prev_ns;
}

inline bool check_early_ack_condition(const EarlyAckParams& p) {
    return early_ack_t_vtx(p) > early_ack_t_ack(p);
}

// Serializes application-level work on one host: requests run back to back in
// submission order, each completing `cost` after the processor frees up.
class SerialProcessor {
public:
    void run(Engine& engine, SimTime cost, Engine::Handler fn) {
        SimTime start = engine.now() > busy_until_ ? engine.now() : busy_until_;
        busy_until_ = start + cost;
        engine.schedule_at(busy_until_, std::move(fn));
    }

    SimTime busy_until() const { return busy_until_; }

private:
    SimTime busy_until_ = 0;
};

} // namespace tcpmr
