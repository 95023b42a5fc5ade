#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "evetac/event.hpp"

namespace evetac {

/*
 * .evtc container: magic "EVTC", version byte, sensor width/height (u16 LE
 * each), then per frame: frame-end timestamp as u64 LE microseconds, event
 * count as u32 LE, followed by count * (x u16 LE, y u16 LE, polarity byte
 * 0=off / 1=on). Payload cost is exactly 5 bytes per event.
 *
 * Sub-millisecond event timing is not persisted; decoding assigns every
 * event the start time of its frame (t_end - 1000 us).
 */
inline constexpr std::size_t kEventPayloadBytes = 5;
inline constexpr std::size_t kFrameHeaderBytes = 12;
inline constexpr std::size_t kStreamHeaderBytes = 9;
inline constexpr std::uint8_t kCodecVersion = 1;

struct Recording {
    int width = kSensorWidth;
    int height = kSensorHeight;
    std::vector<EventFrame> frames;

    bool operator==(const Recording&) const = default;
};

std::vector<std::uint8_t> encode_frames(const Recording& rec);
Recording decode_frames(std::span<const std::uint8_t> bytes);

void write_evtc(const std::string& path, const Recording& rec);
Recording read_evtc(const std::string& path);

/*
 * Byte accounting of the event stream against an RGB camera equivalent
 * over [t_begin_us, t_end_us): event bytes are 5 per event, RGB bytes are
 * width * height * 3 per reading at the given rate.
 */
struct DataRateReport {
    std::uint64_t event_count = 0;
    std::uint64_t event_bytes = 0;
    double rgb_bytes = 0.0;
    double ratio = 0.0; // event_bytes / rgb_bytes
    double duration_s = 0.0;
};

DataRateReport data_rate_report(std::span<const EventFrame> frames,
                                int rgb_width, int rgb_height, double rgb_hz,
                                std::int64_t t_begin_us, std::int64_t t_end_us);

} // namespace evetac
