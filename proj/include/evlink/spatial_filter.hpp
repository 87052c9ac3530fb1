#pragma once

#include <cstdint>
#include <vector>

#include "evlink/events.hpp"

namespace evlink {

/// Grid-cell activity filter. An event survives a packet iff its cell or any
/// of the 8 neighboring cells collects at least `activity_threshold` events
/// within that packet. Counting runs before selection, so survival does not
/// depend on event order. Counters reset at every packet.
class GridFilter {
public:
    GridFilter(std::uint16_t sensor_width, std::uint16_t sensor_height,
               std::uint16_t cell_size = 16, std::uint32_t activity_threshold = 3);

    EventPacket filter_packet(const EventPacket& packet);

    /// |out| / |in|; 0 for an empty input.
    static double reduction_ratio(const EventPacket& in, const EventPacket& out);

    std::uint16_t cell_size() const { return cell_size_; }
    std::uint32_t activity_threshold() const { return threshold_; }

private:
    std::uint32_t cell_index(std::uint16_t x, std::uint16_t y) const;

    std::uint16_t width_;
    std::uint16_t height_;
    std::uint16_t cell_size_;
    std::uint32_t threshold_;
    std::uint32_t shift_ = 0;
    std::uint32_t cells_x_;
    std::uint32_t cells_y_;
    std::vector<std::uint32_t> counts_;
    std::vector<std::uint32_t> touched_;
    std::vector<std::uint8_t> pass_;
    std::vector<std::uint32_t> marked_;
    // Flattened 8-neighbor table, kNeighborStride entries per cell,
    // UINT32_MAX padding.
    static constexpr std::uint32_t kNoCell = 0xffffffff;
    static constexpr int kNeighborStride = 8;
    std::vector<std::uint32_t> neighbors_;
};

} // namespace evlink
