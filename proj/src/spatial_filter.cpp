#include "evlink/spatial_filter.hpp"

#include <stdexcept>

namespace evlink {

GridFilter::GridFilter(std::uint16_t sensor_width, std::uint16_t sensor_height,
                       std::uint16_t cell_size, std::uint32_t activity_threshold)
    : width_(sensor_width),
      height_(sensor_height),
      cell_size_(cell_size),
      threshold_(activity_threshold) {
    if (width_ == 0 || height_ == 0 || cell_size_ == 0) {
        throw std::invalid_argument("GridFilter: zero sensor or cell size");
    }
    cells_x_ = (width_ + cell_size_ - 1) / cell_size_;
    cells_y_ = (height_ + cell_size_ - 1) / cell_size_;
    shift_ = 0;
    if ((cell_size_ & (cell_size_ - 1)) == 0) {
        while ((1u << shift_) < cell_size_) ++shift_;
    }
    const std::size_t n = std::size_t(cells_x_) * cells_y_;
    counts_.assign(n, 0);
    pass_.assign(n, 0);
    neighbors_.assign(n * kNeighborStride, kNoCell);
    for (std::uint32_t cy = 0; cy < cells_y_; ++cy) {
        for (std::uint32_t cx = 0; cx < cells_x_; ++cx) {
            const std::size_t c = std::size_t(cy) * cells_x_ + cx;
            int k = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    const std::int64_t nx = std::int64_t(cx) + dx;
                    const std::int64_t ny = std::int64_t(cy) + dy;
                    if (nx < 0 || ny < 0 || nx >= cells_x_ || ny >= cells_y_) {
                        continue;
                    }
                    neighbors_[c * kNeighborStride + k++] =
                        std::uint32_t(ny) * cells_x_ + std::uint32_t(nx);
                }
            }
        }
    }
}

std::uint32_t GridFilter::cell_index(std::uint16_t x, std::uint16_t y) const {
    if (shift_ != 0) {
        return (std::uint32_t(y) >> shift_) * cells_x_ +
               (std::uint32_t(x) >> shift_);
    }
    return (std::uint32_t(y) / cell_size_) * cells_x_ +
           (std::uint32_t(x) / cell_size_);
}

EventPacket GridFilter::filter_packet(const EventPacket& packet) {
    EventPacket out{packet.t_start_us, packet.t_end_us, {}};
    if (packet.events.empty()) {
        return out;
    }

    // Pass 1: per-cell counts.
    touched_.clear();
    for (const Event& e : packet.events) {
        if (e.x >= width_ || e.y >= height_) {
            throw std::invalid_argument("GridFilter: event outside sensor");
        }
        const std::uint32_t c = cell_index(e.x, e.y);
        if (counts_[c]++ == 0) touched_.push_back(c);
    }

    // Dilate the active set: an event passes iff its cell is active or
    // adjacent to an active cell, so mark active cells and their neighbors.
    marked_.clear();
    for (std::uint32_t c : touched_) {
        if (counts_[c] < threshold_) continue;
        if (!pass_[c]) {
            pass_[c] = 1;
            marked_.push_back(c);
        }
        for (int k = 0; k < kNeighborStride; ++k) {
            const std::uint32_t n = neighbors_[c * kNeighborStride + k];
            if (n == kNoCell) break;
            if (!pass_[n]) {
                pass_[n] = 1;
                marked_.push_back(n);
            }
        }
    }

    // Pass 2: keep events in passing cells.
    out.events.reserve(packet.events.size());
    for (const Event& e : packet.events) {
        if (pass_[cell_index(e.x, e.y)]) out.events.push_back(e);
    }

    for (std::uint32_t c : touched_) counts_[c] = 0;
    for (std::uint32_t c : marked_) pass_[c] = 0;
    return out;
}

double GridFilter::reduction_ratio(const EventPacket& in, const EventPacket& out) {
    if (in.events.empty()) return 0.0;
    return double(out.events.size()) / double(in.events.size());
}

} // namespace evlink
