#include "evlink/events.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace evlink {

std::vector<EventPacket> packetize(std::span<const Event> stream,
                                   std::uint64_t window_us) {
    if (window_us == 0) {
        throw std::invalid_argument("packetize: window_us must be > 0");
    }
    std::vector<EventPacket> packets;
    if (stream.empty()) {
        return packets;
    }

    const std::uint64_t t0 = (stream.front().t_us / window_us) * window_us;
    std::uint64_t win_start = t0;
    std::uint64_t win_end = t0 + window_us;
    EventPacket current{win_start, win_end, {}};

    std::uint64_t prev_t = stream.front().t_us;
    for (const Event& e : stream) {
        if (e.t_us < prev_t) {
            throw std::invalid_argument(
                "packetize: input not sorted by timestamp (event at " +
                std::to_string(e.t_us) + " us after " + std::to_string(prev_t) +
                " us)");
        }
        prev_t = e.t_us;
        while (e.t_us >= win_end) {
            packets.push_back(std::move(current));
            win_start = win_end;
            win_end += window_us;
            current = EventPacket{win_start, win_end, {}};
        }
        current.events.push_back(e);
    }
    packets.push_back(std::move(current));
    return packets;
}

PacketRingBuffer::PacketRingBuffer(std::size_t capacity)
    : capacity_(capacity == 0 ? 1 : capacity) {}

void PacketRingBuffer::push(EventPacket packet) {
    std::lock_guard lock(mutex_);
    if (queue_.size() == capacity_) {
        queue_.pop_front();
        ++overflow_;
    }
    queue_.push_back(std::move(packet));
}

std::optional<EventPacket> PacketRingBuffer::pop() {
    std::lock_guard lock(mutex_);
    if (queue_.empty()) {
        return std::nullopt;
    }
    EventPacket p = std::move(queue_.front());
    queue_.pop_front();
    return p;
}

std::size_t PacketRingBuffer::size() const {
    std::lock_guard lock(mutex_);
    return queue_.size();
}

bool PacketRingBuffer::full() const {
    std::lock_guard lock(mutex_);
    return queue_.size() == capacity_;
}

std::uint64_t PacketRingBuffer::overflow_count() const {
    std::lock_guard lock(mutex_);
    return overflow_;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Packed .evb record: u64 t_us, u16 x, u16 y, i8 p (13 bytes, little-endian).
constexpr std::size_t kEvbRecordSize = 13;

void encode_record(const Event& e, std::array<char, kEvbRecordSize>& out) {
    for (int i = 0; i < 8; ++i) out[i] = char((e.t_us >> (8 * i)) & 0xff);
    out[8] = char(e.x & 0xff);
    out[9] = char((e.x >> 8) & 0xff);
    out[10] = char(e.y & 0xff);
    out[11] = char((e.y >> 8) & 0xff);
    out[12] = char(e.p);
}

Event decode_record(const std::array<char, kEvbRecordSize>& in) {
    Event e;
    std::uint64_t t = 0;
    for (int i = 0; i < 8; ++i) {
        t |= std::uint64_t(static_cast<unsigned char>(in[i])) << (8 * i);
    }
    e.t_us = t;
    e.x = std::uint16_t(static_cast<unsigned char>(in[8]) |
                        (static_cast<unsigned char>(in[9]) << 8));
    e.y = std::uint16_t(static_cast<unsigned char>(in[10]) |
                        (static_cast<unsigned char>(in[11]) << 8));
    e.p = static_cast<std::int8_t>(in[12]);
    return e;
}

} // namespace

std::vector<Event> read_events(const std::string& path) {
    std::vector<Event> events;
    if (ends_with(path, ".evb")) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + path);
        std::array<char, kEvbRecordSize> rec{};
        while (in.read(rec.data(), rec.size())) {
            const Event e = decode_record(rec);
            if (e.p != 1 && e.p != -1) {
                throw std::runtime_error(path + ": polarity must be 1 or -1");
            }
            events.push_back(e);
        }
        if (in.gcount() != 0) {
            throw std::runtime_error(path + ": truncated .evb record");
        }
        return events;
    }

    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error(path + ": empty event file");
    }
    if (line != "t_us,x,y,p") {
        throw std::runtime_error(path + ": expected header 't_us,x,y,p', got '" +
                                 line + "'");
    }
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        Event e;
        long long t, x, y, p;
        char c1, c2, c3;
        std::istringstream ss(line);
        if (!(ss >> t >> c1 >> x >> c2 >> y >> c3 >> p) || c1 != ',' ||
            c2 != ',' || c3 != ',') {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": malformed event line '" + line + "'");
        }
        if (p != 1 && p != -1) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": polarity must be 1 or -1");
        }
        if (t < 0 || x < 0 || y < 0 || x > 0xffff || y > 0xffff) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": coordinates out of range");
        }
        e.t_us = std::uint64_t(t);
        e.x = std::uint16_t(x);
        e.y = std::uint16_t(y);
        e.p = std::int8_t(p);
        events.push_back(e);
    }
    return events;
}

void write_events(const std::string& path, std::span<const Event> events) {
    if (ends_with(path, ".evb")) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + path);
        std::array<char, kEvbRecordSize> rec{};
        for (const Event& e : events) {
            encode_record(e, rec);
            out.write(rec.data(), rec.size());
        }
        return;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "t_us,x,y,p\n";
    for (const Event& e : events) {
        out << e.t_us << ',' << e.x << ',' << e.y << ',' << int(e.p) << '\n';
    }
}

} // namespace evlink
