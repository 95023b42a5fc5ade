#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace evetac {

inline constexpr int kSensorWidth = 640;
inline constexpr int kSensorHeight = 480;
inline constexpr std::int64_t kTickUs = 1000; // 1 ms readout interval

/*
 * A single camera event: pixel location, timestamp in microseconds and
 * polarity (+1 brightness increased, -1 decreased).
 */
struct Event {
    std::int64_t t_us{};
    std::uint16_t x{};
    std::uint16_t y{};
    std::int8_t polarity{};

    bool operator==(const Event&) const = default;
};

/*
 * All events accumulated over one 1 ms interval. t_end_us is the end of the
 * interval; every event satisfies t_end_us - 1000 <= t < t_end_us and events
 * are sorted non-decreasing in time.
 */
struct EventFrame {
    std::int64_t t_end_us{};
    std::vector<Event> events;

    bool operator==(const EventFrame&) const = default;
};

// Per-pixel trit: -1 off-event, 0 none, +1 on-event.
struct EventImage {
    int width = kSensorWidth;
    int height = kSensorHeight;
    std::vector<std::int8_t> values; // row-major, width * height

    std::int8_t at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
    std::int8_t& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
};

/*
 * Renders the last `window` frames into image form. A pixel shows the
 * polarity of the most recent event at its location within the window
 * (last-writer-wins), or none if no event occurred there.
 */
EventImage render_image(std::span<const EventFrame> frames, int window,
                        int width = kSensorWidth, int height = kSensorHeight);

} // namespace evetac
