#pragma once

#include <cstdint>
#include <cstddef>

namespace rsteg {

// Internet one's-complement checksum accumulator. Spans added in sequence are
// treated as one contiguous byte stream (a trailing odd byte pairs with the
// first byte of the next span).
class ChecksumAccumulator {
public:
    void add(const std::uint8_t* data, std::size_t len) {
        std::size_t i = 0;
        if (have_odd_ && len > 0) {
            sum_ += (static_cast<std::uint32_t>(odd_) << 8) | data[0];
            have_odd_ = false;
            i = 1;
        }
        for (; i + 1 < len; i += 2)
            sum_ += (static_cast<std::uint32_t>(data[i]) << 8) | data[i + 1];
        if (i < len) {
            odd_ = data[i];
            have_odd_ = true;
        }
    }

    void add_u16(std::uint16_t v) {
        std::uint8_t b[2] = {static_cast<std::uint8_t>(v >> 8),
                             static_cast<std::uint8_t>(v)};
        add(b, 2);
    }

    void add_u32(std::uint32_t v) {
        std::uint8_t b[4] = {static_cast<std::uint8_t>(v >> 24),
                             static_cast<std::uint8_t>(v >> 16),
                             static_cast<std::uint8_t>(v >> 8),
                             static_cast<std::uint8_t>(v)};
        add(b, 4);
    }

    // Final fold. A trailing odd byte is zero-padded on the right.
    std::uint16_t finish() const {
        std::uint64_t s = sum_;
        if (have_odd_) s += static_cast<std::uint32_t>(odd_) << 8;
        while (s >> 16) s = (s & 0xffff) + (s >> 16);
        return static_cast<std::uint16_t>(~s & 0xffff);
    }

private:
    std::uint64_t sum_ = 0;
    std::uint8_t odd_ = 0;
    bool have_odd_ = false;
};

} // namespace rsteg
