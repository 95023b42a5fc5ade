#include "evetac/event.hpp"

#include "evetac/errors.hpp"

namespace evetac {

EventImage render_image(std::span<const EventFrame> frames, int window, int width, int height)
{
    if (frames.empty())
        throw InvalidInput("render_image: empty frame sequence");
    if (window < 1)
        throw InvalidInput("render_image: window must be >= 1");

    EventImage img;
    img.width = width;
    img.height = height;
    img.values.assign(static_cast<std::size_t>(width) * height, 0);

    const std::size_t n = frames.size();
    const std::size_t first = n > static_cast<std::size_t>(window) ? n - window : 0;
    for (std::size_t i = first; i < n; ++i) {
        for (const Event& e : frames[i].events) {
            if (e.x < width && e.y < height)
                img.at(e.x, e.y) = e.polarity;
        }
    }
    return img;
}

} // namespace evetac
