#include "evetac/codec.hpp"

#include <cstring>
#include <fstream>

#include "evetac/errors.hpp"

namespace evetac {
namespace {

constexpr char kMagic[4] = {'E', 'V', 'T', 'C'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v)
{
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint8_t u8()
    {
        need(1);
        return bytes_[pos_++];
    }
    std::uint16_t u16()
    {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32()
    {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64()
    {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    bool eof() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const
    {
        if (pos_ + n > bytes_.size())
            throw DecodeError("evtc: truncated stream");
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

} // namespace

std::vector<std::uint8_t> encode_frames(const Recording& rec)
{
    std::vector<std::uint8_t> out;
    std::size_t total = kStreamHeaderBytes;
    for (const EventFrame& f : rec.frames)
        total += kFrameHeaderBytes + kEventPayloadBytes * f.events.size();
    out.reserve(total);

    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(kCodecVersion);
    put_u16(out, static_cast<std::uint16_t>(rec.width));
    put_u16(out, static_cast<std::uint16_t>(rec.height));

    for (const EventFrame& f : rec.frames) {
        put_u64(out, static_cast<std::uint64_t>(f.t_end_us));
        put_u32(out, static_cast<std::uint32_t>(f.events.size()));
        for (const Event& e : f.events) {
            put_u16(out, e.x);
            put_u16(out, e.y);
            out.push_back(e.polarity > 0 ? 1 : 0);
        }
    }
    return out;
}

Recording decode_frames(std::span<const std::uint8_t> bytes)
{
    Reader r(bytes);
    char magic[4];
    for (char& c : magic)
        c = static_cast<char>(r.u8());
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw DecodeError("evtc: bad magic");
    const std::uint8_t version = r.u8();
    if (version != kCodecVersion)
        throw DecodeError("evtc: unsupported version " + std::to_string(version));

    Recording rec;
    rec.width = r.u16();
    rec.height = r.u16();
    if (rec.width == 0 || rec.height == 0)
        throw DecodeError("evtc: zero sensor dimension");

    while (!r.eof()) {
        EventFrame f;
        f.t_end_us = static_cast<std::int64_t>(r.u64());
        const std::uint32_t count = r.u32();
        f.events.reserve(count);
        for (std::uint32_t i = 0; i < count; ++i) {
            Event e;
            e.x = r.u16();
            e.y = r.u16();
            const std::uint8_t p = r.u8();
            if (p > 1)
                throw DecodeError("evtc: bad polarity byte");
            e.polarity = p ? 1 : -1;
            e.t_us = f.t_end_us - kTickUs;
            if (e.x >= rec.width || e.y >= rec.height)
                throw DecodeError("evtc: event outside sensor area");
            f.events.push_back(e);
        }
        rec.frames.push_back(std::move(f));
    }
    return rec;
}

void write_evtc(const std::string& path, const Recording& rec)
{
    const std::vector<std::uint8_t> bytes = encode_frames(rec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw InvalidInput("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw Error("write failed: " + path);
}

Recording read_evtc(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw InvalidInput("cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode_frames(bytes);
}

DataRateReport data_rate_report(std::span<const EventFrame> frames,
                                int rgb_width, int rgb_height, double rgb_hz,
                                std::int64_t t_begin_us, std::int64_t t_end_us)
{
    if (t_end_us <= t_begin_us)
        throw InvalidInput("data_rate_report: zero-length interval");
    if (frames.empty())
        throw InvalidInput("data_rate_report: no frames");
    const std::int64_t rec_begin = frames.front().t_end_us - kTickUs;
    const std::int64_t rec_end = frames.back().t_end_us;
    if (t_begin_us < rec_begin || t_end_us > rec_end)
        throw InvalidInput("data_rate_report: interval outside recording");

    DataRateReport rep;
    for (const EventFrame& f : frames) {
        // frame covers (t_end - 1000, t_end]
        if (f.t_end_us > t_begin_us && f.t_end_us <= t_end_us)
            rep.event_count += f.events.size();
    }
    rep.event_bytes = rep.event_count * kEventPayloadBytes;
    rep.duration_s = static_cast<double>(t_end_us - t_begin_us) * 1e-6;
    rep.rgb_bytes = static_cast<double>(rgb_width) * rgb_height * 3.0 * rgb_hz * rep.duration_s;
    rep.ratio = rep.rgb_bytes > 0.0 ? static_cast<double>(rep.event_bytes) / rep.rgb_bytes : 0.0;
    return rep;
}

} // namespace evetac
