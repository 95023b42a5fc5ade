#include "evetac/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "evetac/errors.hpp"

namespace evetac {

namespace {

long sad(const EventImage& a, int ax, int ay, const EventImage& b, int bx, int by, int n)
{
    long acc = 0;
    for (int y = 0; y < n; ++y) {
        const std::int8_t* ra = a.values.data() + static_cast<std::size_t>(ay + y) * a.width + ax;
        const std::int8_t* rb = b.values.data() + static_cast<std::size_t>(by + y) * b.width + bx;
        for (int x = 0; x < n; ++x)
            acc += std::abs(static_cast<int>(ra[x]) - static_cast<int>(rb[x]));
    }
    return acc;
}

} // namespace

FlowEstimate block_flow(const EventImage& from, const EventImage& to, const Rect& region,
                        const BlockFlowConfig& cfg)
{
    if (from.width != to.width || from.height != to.height)
        throw InvalidInput("block_flow: image sizes differ");

    FlowEstimate est;
    const int n = cfg.block;
    const int s = cfg.search;
    const int x_begin = std::max(0, static_cast<int>(std::ceil(region.x0)));
    const int y_begin = std::max(0, static_cast<int>(std::ceil(region.y0)));
    const int x_end = std::min(from.width, static_cast<int>(region.x1));
    const int y_end = std::min(from.height, static_cast<int>(region.y1));

    double total = 0.0;
    for (int by = y_begin; by + n <= y_end; by += n) {
        for (int bx = x_begin; bx + n <= x_end; bx += n) {
            int active = 0;
            for (int y = 0; y < n && active < cfg.min_active; ++y) {
                const std::int8_t* row =
                    from.values.data() + static_cast<std::size_t>(by + y) * from.width + bx;
                for (int x = 0; x < n; ++x)
                    active += row[x] != 0;
            }
            if (active < cfg.min_active)
                continue;

            auto try_shift = [&](int dx, int dy, long& best, int& best_dx, int& best_dy) {
                const int tx = bx + dx;
                const int ty = by + dy;
                if (tx < 0 || ty < 0 || tx + n > to.width || ty + n > to.height)
                    return;
                const long cost = sad(from, bx, by, to, tx, ty, n);
                const long d2 = dx * dx + dy * dy;
                const long bd2 = best_dx * best_dx + best_dy * best_dy;
                if (cost < best || (cost == best && d2 < bd2)) {
                    best = cost;
                    best_dx = dx;
                    best_dy = dy;
                }
            };

            long best = std::numeric_limits<long>::max();
            int best_dx = 0, best_dy = 0;
            for (int dy = -s; dy <= s; dy += 2)
                for (int dx = -s; dx <= s; dx += 2)
                    try_shift(dx, dy, best, best_dx, best_dy);
            const int cx = best_dx, cy = best_dy;
            for (int dy = cy - 1; dy <= cy + 1; ++dy)
                for (int dx = cx - 1; dx <= cx + 1; ++dx)
                    try_shift(dx, dy, best, best_dx, best_dy);

            total += std::hypot(static_cast<double>(best_dx), static_cast<double>(best_dy));
            ++est.blocks_used;
        }
    }
    if (est.blocks_used > 0)
        est.mean_magnitude = total / est.blocks_used;
    return est;
}

} // namespace evetac
