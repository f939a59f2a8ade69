#pragma once

#include "tcpmr/core.hpp"
#include "tcpmr/engine.hpp"
#include "tcpmr/segment.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tcpmr {

enum class TcpState : std::uint8_t {
    closed,
    listen,
    syn_sent,
    syn_rcvd,
    established,
    mr_snd,   // virtual sender: window slides without wire traffic
    mr_rcv,   // mirrored receiver: client segments accepted via seq translation
    fin_wait_1,
    fin_wait_2,
    close_wait,
    last_ack,
    time_wait
};

inline const char* tcp_state_name(TcpState s) {
    switch (s) {
        case TcpState::closed: return "CLOSED";
        case TcpState::listen: return "LISTEN";
        case TcpState::syn_sent: return "SYN_SENT";
        case TcpState::syn_rcvd: return "SYN_RCVD";
        case TcpState::established: return "ESTABLISHED";
        case TcpState::mr_snd: return "MR_SND";
        case TcpState::mr_rcv: return "MR_RCV";
        case TcpState::fin_wait_1: return "FIN_WAIT_1";
        case TcpState::fin_wait_2: return "FIN_WAIT_2";
        case TcpState::close_wait: return "CLOSE_WAIT";
        case TcpState::last_ack: return "LAST_ACK";
        case TcpState::time_wait: return "TIME_WAIT";
    }
    return "?";
}

// Sequence number compensation: maps the client-stream offset space into the
// local predecessor-stream space. n_j is the receiver's current stream
// position, n_1 the sequence number carried by the mirrored sync ACK.
inline std::int64_t compute_delta(std::uint64_t n_j, std::uint64_t n_1) {
    return static_cast<std::int64_t>(n_j) - static_cast<std::int64_t>(n_1);
}

inline std::int64_t translate_seq(std::uint64_t seq, std::int64_t delta) {
    return static_cast<std::int64_t>(seq) + delta;
}

struct TransportConfig {
    std::uint32_t mss = 1460;
    SimTime rto_initial_ns = 200_ms;
    SimTime rto_max_ns = 3200_ms;
    std::uint64_t recv_buffer_bytes = 20ull * 65536; // writeMaxPackets x packet size
    SimTime ack_delay_ns = 0;
    int fast_retx_dupacks = 3;
    int max_rto_retries = 15; // consecutive timeouts without progress before giving up
};

struct ConnectionCounters {
    std::uint64_t sync_events = 0;
    std::uint64_t early_acks_stored = 0;
    std::uint64_t retransmitted_segments = 0; // RTO + fast retransmit
    std::uint64_t fast_retransmits = 0;
    std::uint64_t rto_fires = 0;
    std::uint64_t presync_mirrored_dropped = 0;
    std::uint64_t non_mr_reserved_dropped = 0;
    std::uint64_t negative_translation_dropped = 0;
    std::uint64_t window_dropped = 0;
    std::uint64_t duplicate_segments = 0;
    std::uint64_t mirrored_payload_bytes = 0;     // accepted via translation
    std::uint64_t conventional_payload_bytes = 0; // accepted at face value
    std::uint64_t virtual_tx_bytes = 0;
    std::uint64_t real_payload_bytes_sent = 0; // first transmissions, not retx
};

class TransportHost;

// One endpoint of a simulated TCP connection, extended with the mirrored
// replication states. All transitions run on the single simulation timeline.
class Connection {
public:
    using DataFn = std::function<void(Connection&, std::span<const std::uint8_t>)>;
    using EventFn = std::function<void(Connection&)>;

    Connection(TransportHost& host, Endpoint local, Endpoint remote, TcpState initial);

    Connection(const Connection&) = delete;
    Connection& operator=(const Connection&) = delete;

    // -- application surface (unchanged byte-stream interface) --------------

    // Appends to the send stream. Emits real segments unless this endpoint is
    // a virtual sender, in which case the window slides with nothing on the
    // wire.
    void write(std::span<const std::uint8_t> data);

    void close();

    void on_data(DataFn fn) { on_data_ = std::move(fn); }
    void on_established(EventFn fn) { on_established_ = std::move(fn); }
    void on_eof(EventFn fn) { on_eof_ = std::move(fn); }

    // -- mirrored replication controls ---------------------------------------

    // Allows this endpoint to interpret reserved=1 traffic. Armed when the
    // node is a mirror target; a reserved flag on an unarmed connection is
    // dropped and counted.
    void enable_mirror_reception();

    // Explicit virtual transmission; `write` routes here in MR_SND.
    void virtual_transmit(std::span<const std::uint8_t> data) {
        if (state_ != TcpState::mr_snd)
            throw std::logic_error("virtual_transmit: connection not in MR_SND");
        append_to_send_buffer(data);
        virtual_advance();
    }

    bool is_virtual_sender() const { return state_ == TcpState::mr_snd; }

    // Single sync point per connection per block.
    std::int64_t compute_sync_delta(std::uint64_t n_1) {
        if (delta_) throw std::logic_error("compute_sync_delta: delta already set");
        delta_ = compute_delta(rcv_nxt_, n_1);
        state_ = TcpState::mr_rcv;
        counters_.sync_events++;
        return *delta_;
    }

    // Admission check for the out-of-order store.
    bool flow_window_check(std::uint64_t incoming_bytes) const {
        return ooo_bytes_ + incoming_bytes <= config().recv_buffer_bytes;
    }

    // -- segment processing ---------------------------------------------------

    void on_segment(const Segment& seg);
    void on_rto();

    // -- introspection --------------------------------------------------------

    TcpState state() const { return state_; }
    Endpoint local() const { return local_; }
    Endpoint remote() const { return remote_; }
    std::uint64_t snd_una() const { return snd_una_; }
    std::uint64_t snd_nxt() const { return snd_nxt_; }
    std::uint64_t rcv_nxt() const { return rcv_nxt_; }
    std::optional<std::int64_t> delta() const { return delta_; }
    bool rto_armed() const { return rto_armed_; }
    std::uint64_t ooo_bytes() const { return ooo_bytes_; }
    const std::set<std::uint64_t>& early_acks() const { return early_acks_; }
    const ConnectionCounters& counters() const { return counters_; }

private:
    friend class TransportHost;

    const TransportConfig& config() const;
    Engine& engine() const;
    void emit(Segment seg, bool retransmission = false);
    void emit_data_segment(std::uint64_t seq, std::uint64_t len, bool retransmission);
    void emit_pure_ack();
    void trace(const std::string& what) const;

    void append_to_send_buffer(std::span<const std::uint8_t> data);
    std::uint64_t write_end() const { return buffer_base_ + send_buffer_.size(); }
    void real_transmit_pending();
    void virtual_advance();
    void apply_stored_early_acks();
    void process_ack(std::uint64_t ackno, bool had_payload);
    void advance_snd_una(std::uint64_t ackno);
    void accept_payload(std::uint64_t offset, std::span<const std::uint8_t> bytes, bool mirrored);
    void insert_out_of_order(std::uint64_t offset, std::span<const std::uint8_t> bytes);
    void handle_fin(const Segment& seg);
    void arm_rto();
    void cancel_rto();
    void restart_rto();
    void handshake(const Segment& seg);
    void deliver(std::vector<std::uint8_t>&& bytes);

    TransportHost& host_;
    Endpoint local_;
    Endpoint remote_;
    TcpState state_;

    std::uint64_t snd_una_ = 0;
    std::uint64_t snd_nxt_ = 0;
    std::uint64_t rcv_nxt_ = 0;

    // Retained send stream: send_buffer_[i] is stream byte buffer_base_ + i.
    // Compacted lazily as acknowledgements arrive.
    std::vector<std::uint8_t> send_buffer_;
    std::uint64_t buffer_base_ = 0;

    std::map<std::uint64_t, std::vector<std::uint8_t>> out_of_order_; // disjoint chunks past rcv_nxt
    std::uint64_t ooo_bytes_ = 0;

    std::optional<std::int64_t> delta_;
    bool mr_armed_ = false;
    bool conventional_since_arm_ = false;
    std::set<std::uint64_t> early_acks_;

    bool rto_armed_ = false;
    std::uint64_t rto_generation_ = 0;
    SimTime rto_current_ns_ = 0;
    int consecutive_rtos_ = 0;

    int dup_acks_ = 0;
    bool fin_sent_ = false;
    bool eof_delivered_ = false;

    ConnectionCounters counters_;

    DataFn on_data_;
    EventFn on_established_;
    EventFn on_eof_;
};

// Transport layer of one host: owns connections, dispatches arriving segments
// by 4-tuple, hands SYNs to listeners and allocates ephemeral ports.
class TransportHost {
public:
    using EmitFn = std::function<void(const Segment&, bool retransmission)>;
    using AcceptFn = std::function<void(Connection&)>;
    using TraceFn = std::function<void(const std::string&)>;

    TransportHost(Engine& engine, std::uint32_t ip, TransportConfig config, EmitFn emit)
        : engine_(engine), ip_(ip), config_(config), emit_(std::move(emit)) {}

    std::uint32_t ip() const { return ip_; }
    Engine& engine() { return engine_; }
    const TransportConfig& config() const { return config_; }
    void set_trace(TraceFn fn) { trace_ = std::move(fn); }

    Connection& connect(Endpoint remote, Connection::EventFn on_established) {
        Endpoint local{ip_, next_ephemeral_++};
        auto conn = std::make_unique<Connection>(*this, local, remote, TcpState::syn_sent);
        Connection& ref = *conn;
        connections_.emplace(ConnKey{local, remote}, std::move(conn));
        ref.on_established(std::move(on_established));
        Segment syn;
        syn.src = local;
        syn.dst = remote;
        syn.flags = flag::syn;
        ref.emit(std::move(syn));
        ref.arm_rto();
        return ref;
    }

    void listen(std::uint16_t port, AcceptFn on_accept) { listeners_[port] = std::move(on_accept); }

    // Entry point from the network layer.
    void deliver(const Segment& seg) {
        if (seg.dst.ip != ip_) {
            misaddressed_++;
            return;
        }
        auto it = connections_.find(ConnKey{seg.dst, seg.src});
        if (it != connections_.end()) {
            it->second->on_segment(seg);
            return;
        }
        if (seg.has(flag::syn) && !seg.has(flag::ack)) {
            auto lit = listeners_.find(seg.dst.port);
            if (lit == listeners_.end()) return;
            auto conn = std::make_unique<Connection>(*this, seg.dst, seg.src, TcpState::syn_rcvd);
            Connection& ref = *conn;
            pending_accept_[ConnKey{seg.dst, seg.src}] = lit->second;
            connections_.emplace(ConnKey{seg.dst, seg.src}, std::move(conn));
            Segment synack;
            synack.src = seg.dst;
            synack.dst = seg.src;
            synack.flags = flag::syn | flag::ack;
            ref.emit(std::move(synack));
            ref.arm_rto();
        }
        // anything else without a connection is silently ignored
    }

    Connection* find(Endpoint local, Endpoint remote) {
        auto it = connections_.find(ConnKey{local, remote});
        return it == connections_.end() ? nullptr : it->second.get();
    }

    template <typename Fn>
    void for_each_connection(Fn&& fn) const {
        for (const auto& [key, conn] : connections_) fn(*conn);
    }

    std::uint64_t misaddressed() const { return misaddressed_; }

private:
    friend class Connection;

    struct ConnKey {
        Endpoint local;
        Endpoint remote;
        friend auto operator<=>(const ConnKey&, const ConnKey&) = default;
    };

    void notify_established(Connection& conn) {
        auto it = pending_accept_.find(ConnKey{conn.local(), conn.remote()});
        if (it != pending_accept_.end()) {
            AcceptFn fn = it->second;
            pending_accept_.erase(it);
            if (fn) fn(conn);
        }
    }

    Engine& engine_;
    std::uint32_t ip_;
    TransportConfig config_;
    EmitFn emit_;
    TraceFn trace_;
    std::map<ConnKey, std::unique_ptr<Connection>> connections_;
    std::map<ConnKey, AcceptFn> pending_accept_;
    std::map<std::uint16_t, AcceptFn> listeners_;
    std::uint16_t next_ephemeral_ = 40000;
    std::uint64_t misaddressed_ = 0;
};

// ---------------------------------------------------------------------------

inline Connection::Connection(TransportHost& host, Endpoint local, Endpoint remote, TcpState initial)
    : host_(host), local_(local), remote_(remote), state_(initial) {}

inline const TransportConfig& Connection::config() const { return host_.config_; }
inline Engine& Connection::engine() const { return host_.engine_; }

inline void Connection::trace(const std::string& what) const {
    if (host_.trace_)
        host_.trace_("t=" + std::to_string(engine().now()) + " " + endpoint_to_string(local_) + ">" +
                     endpoint_to_string(remote_) + " st=" + tcp_state_name(state_) + " " + what);
}

inline void Connection::emit(Segment seg, bool retransmission) {
    trace("snd seq=" + std::to_string(seg.seq) + " ack=" + std::to_string(seg.ack) + " f=" +
          flags_to_string(seg.flags) + " res=" + std::to_string(seg.reserved) +
          " len=" + std::to_string(seg.payload.size()));
    host_.emit_(seg, retransmission);
}

inline void Connection::emit_data_segment(std::uint64_t seq, std::uint64_t len, bool retransmission) {
    Segment seg;
    seg.src = local_;
    seg.dst = remote_;
    seg.seq = seq;
    seg.ack = rcv_nxt_;
    seg.flags = flag::ack;
    seg.reserved = 0;
    if (seq < buffer_base_ || seq + len > write_end())
        throw std::logic_error("emit_data_segment: range outside retained buffer");
    std::size_t start = static_cast<std::size_t>(seq - buffer_base_);
    seg.payload.assign(send_buffer_.begin() + start, send_buffer_.begin() + start + len);
    if (!retransmission) counters_.real_payload_bytes_sent += len;
    emit(std::move(seg), retransmission);
}

inline void Connection::emit_pure_ack() {
    Segment seg;
    seg.src = local_;
    seg.dst = remote_;
    seg.seq = snd_nxt_;
    seg.ack = rcv_nxt_;
    seg.flags = flag::ack;
    seg.reserved = state_ == TcpState::mr_rcv ? 2 : 0;
    if (config().ack_delay_ns > 0) {
        engine().schedule_after(config().ack_delay_ns, [this, seg]() mutable {
            seg.ack = rcv_nxt_; // cumulative at emission time
            emit(std::move(seg));
        });
    } else {
        emit(std::move(seg));
    }
}

inline void Connection::append_to_send_buffer(std::span<const std::uint8_t> data) {
    send_buffer_.insert(send_buffer_.end(), data.begin(), data.end());
}

inline void Connection::write(std::span<const std::uint8_t> data) {
    if (state_ != TcpState::established && state_ != TcpState::mr_snd &&
        state_ != TcpState::mr_rcv && state_ != TcpState::close_wait)
        throw std::logic_error("write: connection not open");
    if (fin_sent_) throw std::logic_error("write: after close");
    append_to_send_buffer(data);
    if (state_ == TcpState::mr_snd)
        virtual_advance();
    else
        real_transmit_pending();
}

inline void Connection::real_transmit_pending() {
    const std::uint32_t mss = config().mss;
    while (snd_nxt_ < write_end()) {
        std::uint64_t len = std::min<std::uint64_t>(mss, write_end() - snd_nxt_);
        emit_data_segment(snd_nxt_, len, /*retransmission=*/false);
        snd_nxt_ += len;
    }
    if (snd_una_ < snd_nxt_ && !rto_armed_) arm_rto();
}

inline void Connection::virtual_advance() {
    std::uint64_t fresh = write_end() - snd_nxt_;
    snd_nxt_ = write_end();
    counters_.virtual_tx_bytes += fresh;
    if (snd_una_ < snd_nxt_ && !rto_armed_) arm_rto();
    apply_stored_early_acks();
}

inline void Connection::apply_stored_early_acks() {
    std::uint64_t best = 0;
    for (auto it = early_acks_.begin(); it != early_acks_.end() && *it <= snd_nxt_;)
        best = *it, it = early_acks_.erase(it);
    if (best > snd_una_) advance_snd_una(best);
}

inline void Connection::arm_rto() {
    rto_armed_ = true;
    if (rto_current_ns_ == 0) rto_current_ns_ = config().rto_initial_ns;
    std::uint64_t gen = ++rto_generation_;
    engine().schedule_after(rto_current_ns_, [this, gen] {
        if (rto_armed_ && gen == rto_generation_) on_rto();
    });
}

inline void Connection::cancel_rto() {
    rto_armed_ = false;
    ++rto_generation_;
    rto_current_ns_ = config().rto_initial_ns;
    consecutive_rtos_ = 0;
}

inline void Connection::restart_rto() {
    rto_current_ns_ = config().rto_initial_ns;
    rto_armed_ = true;
    std::uint64_t gen = ++rto_generation_;
    engine().schedule_after(rto_current_ns_, [this, gen] {
        if (rto_armed_ && gen == rto_generation_) on_rto();
    });
}

// Timeout: the whole unacknowledged range goes on the wire for real (this is
// how a virtual sender fills holes for its successor), then the timer backs
// off exponentially up to the configured cap. In the handshake states the
// timeout re-emits the handshake segment instead. A connection that makes no
// progress across max_rto_retries consecutive timeouts aborts, so a run with
// a permanently dead path still drains.
inline void Connection::on_rto() {
    if (++consecutive_rtos_ > config().max_rto_retries) {
        state_ = TcpState::closed;
        cancel_rto();
        return;
    }
    if (state_ == TcpState::syn_sent || state_ == TcpState::syn_rcvd) {
        counters_.rto_fires++;
        Segment hs;
        hs.src = local_;
        hs.dst = remote_;
        hs.flags = state_ == TcpState::syn_sent ? flag::syn : (flag::syn | flag::ack);
        emit(std::move(hs), /*retransmission=*/true);
        rto_current_ns_ = std::min(rto_current_ns_ * 2, config().rto_max_ns);
        rto_armed_ = true;
        std::uint64_t gen = ++rto_generation_;
        engine().schedule_after(rto_current_ns_, [this, gen] {
            if (rto_armed_ && gen == rto_generation_) on_rto();
        });
        return;
    }
    if (snd_una_ >= snd_nxt_) {
        cancel_rto();
        return;
    }
    counters_.rto_fires++;
    trace("rto una=" + std::to_string(snd_una_) + " nxt=" + std::to_string(snd_nxt_));
    const std::uint32_t mss = config().mss;
    for (std::uint64_t off = snd_una_; off < snd_nxt_; off += mss) {
        std::uint64_t len = std::min<std::uint64_t>(mss, snd_nxt_ - off);
        emit_data_segment(off, len, /*retransmission=*/true);
        counters_.retransmitted_segments++;
    }
    rto_current_ns_ = std::min(rto_current_ns_ * 2, config().rto_max_ns);
    rto_armed_ = true;
    std::uint64_t gen = ++rto_generation_;
    engine().schedule_after(rto_current_ns_, [this, gen] {
        if (rto_armed_ && gen == rto_generation_) on_rto();
    });
}

inline void Connection::advance_snd_una(std::uint64_t ackno) {
    snd_una_ = ackno;
    dup_acks_ = 0;
    consecutive_rtos_ = 0;
    // lazy trim of the retained stream
    std::uint64_t consumed = snd_una_ - buffer_base_;
    if (consumed > (1u << 20)) {
        send_buffer_.erase(send_buffer_.begin(), send_buffer_.begin() + static_cast<std::size_t>(consumed));
        buffer_base_ = snd_una_;
    }
    if (snd_una_ == snd_nxt_)
        cancel_rto();
    else
        restart_rto();
}

inline void Connection::process_ack(std::uint64_t ackno, bool had_payload) {
    if (ackno > snd_nxt_) {
        // ACK for data not yet (virtually) transmitted: stored and replayed
        // once the virtual transmission catches up.
        if (state_ == TcpState::mr_snd) {
            early_acks_.insert(ackno);
            counters_.early_acks_stored++;
            trace("early-ack stored " + std::to_string(ackno));
        }
        return;
    }
    if (ackno > snd_una_) {
        advance_snd_una(ackno);
        return;
    }
    if (ackno == snd_una_ && snd_nxt_ > snd_una_ && !had_payload && state_ != TcpState::mr_snd) {
        if (++dup_acks_ >= config().fast_retx_dupacks) {
            std::uint64_t len = std::min<std::uint64_t>(config().mss, snd_nxt_ - snd_una_);
            emit_data_segment(snd_una_, len, /*retransmission=*/true);
            counters_.retransmitted_segments++;
            counters_.fast_retransmits++;
            dup_acks_ = 0;
        }
    }
}

inline void Connection::insert_out_of_order(std::uint64_t offset, std::span<const std::uint8_t> bytes) {
    // Insert only sub-ranges not already buffered; chunks stay disjoint.
    std::uint64_t cur = offset;
    std::uint64_t end = offset + bytes.size();
    while (cur < end) {
        auto next = out_of_order_.lower_bound(cur);
        if (next != out_of_order_.begin()) {
            auto prev = std::prev(next);
            std::uint64_t prev_end = prev->first + prev->second.size();
            if (prev_end > cur) {
                cur = prev_end;
                continue;
            }
        }
        std::uint64_t stop = next == out_of_order_.end() ? end : std::min<std::uint64_t>(end, next->first);
        if (cur < stop) {
            std::vector<std::uint8_t> chunk(bytes.begin() + (cur - offset), bytes.begin() + (stop - offset));
            ooo_bytes_ += chunk.size();
            out_of_order_.emplace(cur, std::move(chunk));
        }
        cur = stop;
        if (next != out_of_order_.end() && cur == next->first) cur += next->second.size();
    }
}

inline void Connection::deliver(std::vector<std::uint8_t>&& bytes) {
    if (on_data_ && !bytes.empty()) on_data_(*this, std::span<const std::uint8_t>(bytes));
}

inline void Connection::accept_payload(std::uint64_t offset, std::span<const std::uint8_t> bytes,
                                       bool mirrored) {
    std::uint64_t end = offset + bytes.size();
    if (end <= rcv_nxt_) {
        counters_.duplicate_segments++;
        emit_pure_ack();
        return;
    }
    if (offset < rcv_nxt_) { // partial duplicate
        bytes = bytes.subspan(static_cast<std::size_t>(rcv_nxt_ - offset));
        offset = rcv_nxt_;
    }
    if (mirrored)
        counters_.mirrored_payload_bytes += bytes.size();
    else
        counters_.conventional_payload_bytes += bytes.size();
    if (offset > rcv_nxt_) {
        // Out of order: admitted only if the store has room; otherwise the
        // segment is lost here and the predecessor's retransmission recovers.
        if (!flow_window_check(bytes.size())) {
            counters_.window_dropped++;
            if (mirrored) counters_.mirrored_payload_bytes -= bytes.size();
            else counters_.conventional_payload_bytes -= bytes.size();
            emit_pure_ack();
            return;
        }
        insert_out_of_order(offset, bytes);
        emit_pure_ack();
        return;
    }
    // In order: deliver, drain the store, ACK cumulatively, then hand the
    // bytes to the application (ACK first so that anything the application
    // sends in response follows the ACK onto the wire).
    std::vector<std::uint8_t> staged(bytes.begin(), bytes.end());
    rcv_nxt_ = end;
    while (!out_of_order_.empty()) {
        auto it = out_of_order_.begin();
        std::uint64_t chunk_start = it->first;
        if (chunk_start > rcv_nxt_) break;
        std::uint64_t chunk_end = chunk_start + it->second.size();
        ooo_bytes_ -= it->second.size();
        if (chunk_end > rcv_nxt_) {
            std::size_t skip = static_cast<std::size_t>(rcv_nxt_ - chunk_start);
            staged.insert(staged.end(), it->second.begin() + skip, it->second.end());
            rcv_nxt_ = chunk_end;
        }
        out_of_order_.erase(it);
    }
    emit_pure_ack();
    deliver(std::move(staged));
}

inline void Connection::handle_fin(const Segment& seg) {
    std::uint64_t fin_at = seg.seq + seg.payload.size();
    if (fin_at != rcv_nxt_) return; // out-of-order FIN: recovered via retransmission
    if (!eof_delivered_) {
        eof_delivered_ = true;
        emit_pure_ack();
        if (state_ == TcpState::established || state_ == TcpState::mr_rcv || state_ == TcpState::mr_snd)
            state_ = TcpState::close_wait;
        else if (state_ == TcpState::fin_wait_1)
            state_ = TcpState::time_wait; // simultaneous close collapse
        else if (state_ == TcpState::fin_wait_2)
            state_ = TcpState::closed;
        if (on_eof_) on_eof_(*this);
    }
}

inline void Connection::handshake(const Segment& seg) {
    if (state_ == TcpState::syn_sent && seg.has(flag::syn) && seg.has(flag::ack)) {
        state_ = TcpState::established;
        cancel_rto();
        Segment ack;
        ack.src = local_;
        ack.dst = remote_;
        ack.flags = flag::ack;
        emit(std::move(ack));
        if (on_established_) on_established_(*this);
        return;
    }
    if (state_ == TcpState::syn_rcvd) {
        if (seg.has(flag::syn) && !seg.has(flag::ack)) { // duplicate SYN
            Segment synack;
            synack.src = local_;
            synack.dst = remote_;
            synack.flags = flag::syn | flag::ack;
            emit(std::move(synack));
            return;
        }
        if (seg.has(flag::ack)) {
            state_ = TcpState::established;
            cancel_rto();
            host_.notify_established(*this);
            // fall through in on_segment: the establishing ACK may carry data
        }
    }
}

inline void Connection::on_segment(const Segment& seg) {
    trace("rcv seq=" + std::to_string(seg.seq) + " ack=" + std::to_string(seg.ack) + " f=" +
          flags_to_string(seg.flags) + " res=" + std::to_string(seg.reserved) +
          " len=" + std::to_string(seg.payload.size()));
    if (state_ == TcpState::closed || state_ == TcpState::listen) return;
    if (state_ == TcpState::syn_sent || state_ == TcpState::syn_rcvd) {
        handshake(seg);
        if (state_ != TcpState::established) return;
        if (!seg.payload.empty() || seg.has(flag::fin)) {
            // continue below with the piggybacked remainder
        } else {
            return;
        }
    }

    if (seg.reserved == 1) {
        // Mirrored copy of a client segment (or client<->D_1 signaling).
        if (!mr_armed_) {
            counters_.non_mr_reserved_dropped++;
            return;
        }
        if (!delta_) {
            // Sync point: the mirrored ACK of the pipeline-readiness
            // notification, recognizable as the first pure ACK on an armed
            // connection that has seen no conventional payload since arming.
            // Anything else this early is a stray from the entry-installation
            // race and is dropped; the predecessor's RTO covers the loss.
            if (seg.has(flag::ack) && seg.payload.empty() && !conventional_since_arm_) {
                std::int64_t d = compute_sync_delta(seg.seq);
                trace("sync n1=" + std::to_string(seg.seq) + " delta=" + std::to_string(d));
            } else {
                counters_.presync_mirrored_dropped++;
            }
            return;
        }
        if (seg.payload.empty()) return; // client/D_1 signaling: ignored entirely
        // Data: control flags and the ACK number are ignored; the payload is
        // accepted at the translated offset.
        std::int64_t translated = translate_seq(seg.seq, *delta_);
        if (translated < 0) {
            counters_.negative_translation_dropped++;
            return;
        }
        accept_payload(static_cast<std::uint64_t>(translated), seg.payload, /*mirrored=*/true);
        return;
    }

    if (seg.reserved == 2 && state_ == TcpState::established) {
        state_ = TcpState::mr_snd; // successor acknowledged a mirrored copy
        trace("enter MR_SND");
    }

    if (seg.has(flag::rst)) {
        state_ = TcpState::closed;
        cancel_rto();
        return;
    }
    if (seg.has(flag::ack)) {
        process_ack(seg.ack, !seg.payload.empty());
        // FIN consumes no sequence space here, so its acknowledgement is any
        // ACK arriving once the send stream is fully covered.
        if (fin_sent_ && snd_una_ == snd_nxt_) {
            if (state_ == TcpState::fin_wait_1) state_ = TcpState::fin_wait_2;
            else if (state_ == TcpState::last_ack) {
                state_ = TcpState::closed;
                cancel_rto();
            }
        }
    }
    if (!seg.payload.empty()) {
        if (mr_armed_) conventional_since_arm_ = true;
        accept_payload(seg.seq, seg.payload, /*mirrored=*/false);
    }
    if (seg.has(flag::fin)) handle_fin(seg);
}

inline void Connection::enable_mirror_reception() {
    mr_armed_ = true;
    conventional_since_arm_ = false;
}

inline void Connection::close() {
    if (fin_sent_) return;
    fin_sent_ = true;
    Segment fin;
    fin.src = local_;
    fin.dst = remote_;
    fin.seq = snd_nxt_;
    fin.ack = rcv_nxt_;
    fin.flags = flag::fin | flag::ack;
    fin.reserved = state_ == TcpState::mr_rcv ? 2 : 0;
    emit(std::move(fin));
    if (state_ == TcpState::established || state_ == TcpState::mr_snd || state_ == TcpState::mr_rcv)
        state_ = TcpState::fin_wait_1;
    else if (state_ == TcpState::close_wait)
        state_ = TcpState::last_ack;
}

} // namespace tcpmr
