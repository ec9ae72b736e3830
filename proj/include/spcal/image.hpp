#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "spcal/error.hpp"

namespace spcal {

/// Row-major 2D grid. Pixel (x, y) lives at index y * width + x.
template <class T>
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<T> values;

    Image() = default;
    Image(std::size_t w, std::size_t h, T fill = T{}) : width(w), height(h), values(w * h, fill) {}

    std::size_t size() const noexcept { return values.size(); }
    bool same_shape(std::size_t w, std::size_t h) const noexcept { return width == w && height == h; }
    template <class U>
    bool same_shape(const Image<U>& other) const noexcept
    {
        return width == other.width && height == other.height;
    }

    T& operator()(std::size_t x, std::size_t y) { return values[y * width + x]; }
    const T& operator()(std::size_t x, std::size_t y) const { return values[y * width + x]; }

    friend bool operator==(const Image&, const Image&) = default;
};

using Frame = Image<std::uint16_t>;
using RealGrid = Image<double>;
using Mask = Image<std::uint8_t>;

/// Half-open axis-aligned pixel rectangle [x0, x0+width) x [y0, y0+height).
struct Rect {
    std::size_t x0 = 0;
    std::size_t y0 = 0;
    std::size_t width = 0;
    std::size_t height = 0;

    bool empty() const noexcept { return width == 0 || height == 0; }
    std::size_t area() const noexcept { return width * height; }

    bool contains(double x, double y) const noexcept
    {
        return x >= static_cast<double>(x0) && x < static_cast<double>(x0 + width) &&
               y >= static_cast<double>(y0) && y < static_cast<double>(y0 + height);
    }

    bool fits_in(std::size_t w, std::size_t h) const noexcept
    {
        return x0 + width <= w && y0 + height <= h;
    }

    bool overlaps(const Rect& o) const noexcept
    {
        return x0 < o.x0 + o.width && o.x0 < x0 + width && y0 < o.y0 + o.height && o.y0 < y0 + height;
    }

    /// Grown by `margin` pixels on every side, clipped at the origin.
    Rect expanded(std::size_t margin) const noexcept
    {
        const std::size_t left = std::min(margin, x0), top = std::min(margin, y0);
        return {x0 - left, y0 - top, width + left + margin, height + top + margin};
    }

    friend bool operator==(const Rect&, const Rect&) = default;
};

/// Where a detection event landed on the sensor.
enum class Region { signal, idler, full, outside };

inline const char* to_string(Region r) noexcept
{
    switch (r) {
    case Region::signal: return "signal";
    case Region::idler: return "idler";
    case Region::full: return "full";
    case Region::outside: return "outside";
    }
    return "outside";
}

} // namespace spcal
