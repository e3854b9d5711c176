#pragma once

#include <cstdint>
#include <vector>

#include "salmet/common.hpp"

namespace salmet {

struct Shape3 {
    int h = 0;
    int w = 0;
    int c = 0;

    int size() const { return h * w * c; }
    bool operator==(const Shape3&) const = default;
};

// One dataset element: raw pixels in [0,1], interleaved row-major (y, x, c).
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> pixels;
    int label = -1;  // -1 = unlabeled
    std::int64_t id = 0;

    Image() = default;
    Image(int h, int w, int c)
        : height(h), width(w), channels(c),
          pixels(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c), 0.0) {}

    int pixel_count() const { return height * width; }

    double at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
                          static_cast<std::size_t>(channels) +
                      static_cast<std::size_t>(c)];
    }
    double& at(int y, int x, int c) {
        return pixels[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
                          static_cast<std::size_t>(channels) +
                      static_cast<std::size_t>(c)];
    }

    Shape3 shape() const { return {height, width, channels}; }
};

}  // namespace salmet
