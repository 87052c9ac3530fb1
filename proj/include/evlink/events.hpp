#pragma once

#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace evlink {

/// One asynchronous pixel activation. Timestamps are integer microseconds;
/// polarity is exactly +1 or -1.
struct Event {
    std::uint64_t t_us = 0;
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    std::int8_t p = 1;
};

/// A fixed-duration window of events, [t_start_us, t_end_us).
/// Events are sorted by timestamp; ties keep arrival order.
struct EventPacket {
    std::uint64_t t_start_us = 0;
    std::uint64_t t_end_us = 0;
    std::vector<Event> events;

    std::uint64_t window_us() const { return t_end_us - t_start_us; }
    bool empty() const { return events.empty(); }
    std::size_t size() const { return events.size(); }
};

/// Splits a time-sorted stream into consecutive windows of `window_us`.
/// Windows are aligned to absolute time (first window starts at the first
/// event's timestamp floored to a window boundary), and empty windows are
/// emitted so silence stays representable downstream.
///
/// Throws std::invalid_argument on unsorted input or window_us == 0.
std::vector<EventPacket> packetize(std::span<const Event> stream,
                                   std::uint64_t window_us);

/// Single-producer / single-consumer packet queue between pipeline stages.
/// push() never waits for space: when full it drops the oldest retained
/// packet and counts the overflow. pop() returns packets in push order.
class PacketRingBuffer {
public:
    explicit PacketRingBuffer(std::size_t capacity = 64);

    /// Never blocks. Drops the oldest retained packet when full.
    void push(EventPacket packet);

    /// FIFO pop; empty buffer yields nullopt.
    std::optional<EventPacket> pop();

    std::size_t size() const;
    std::size_t capacity() const { return capacity_; }
    bool full() const;
    std::uint64_t overflow_count() const;

private:
    std::size_t capacity_;
    mutable std::mutex mutex_;
    std::deque<EventPacket> queue_;
    std::uint64_t overflow_ = 0;
};

/// Reads an event stream from disk. `.evb` files are packed little-endian
/// records (u64 t_us, u16 x, u16 y, i8 p); anything else is CSV with a
/// `t_us,x,y,p` header. Throws std::runtime_error on malformed input.
std::vector<Event> read_events(const std::string& path);

/// Writes events in the format implied by the filename (see read_events).
void write_events(const std::string& path, std::span<const Event> events);

} // namespace evlink
