#include "wideangle/image.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include "wideangle/errors.hpp"

namespace wideangle {

namespace {

struct Tap {
    int i0;
    int i1;
    float t;
};

Tap clamped_tap(double x, int size) {
    x = std::clamp(x, 0.0, static_cast<double>(size - 1));
    const int i0 = static_cast<int>(std::floor(x));
    const int i1 = std::min(i0 + 1, size - 1);
    return {i0, i1, static_cast<float>(x - i0)};
}

inline float lerp(float a, float b, float t) { return a + t * (b - a); }

}  // namespace

ImageBuffer::ImageBuffer(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels),
      samples_(static_cast<std::size_t>(width) * height * channels, fill) {
    if (width < 1 || height < 1 || (channels != 1 && channels != 3)) {
        throw ValidationError("image must be at least 1x1 with 1 or 3 channels");
    }
}

ImageBuffer::ImageBuffer(int width, int height, int channels, std::vector<float> samples)
    : width_(width), height_(height), channels_(channels), samples_(std::move(samples)) {
    if (width < 1 || height < 1 || (channels != 1 && channels != 3)) {
        throw ValidationError("image must be at least 1x1 with 1 or 3 channels");
    }
    if (samples_.size() != static_cast<std::size_t>(width) * height * channels) {
        throw DimensionMismatch("sample count does not match image shape");
    }
}

float ImageBuffer::sample(double x, double y, int c) const {
    const Tap tx = clamped_tap(x, width_);
    const Tap ty = clamped_tap(y, height_);
    const float top = lerp(at(tx.i0, ty.i0, c), at(tx.i1, ty.i0, c), tx.t);
    const float bottom = lerp(at(tx.i0, ty.i1, c), at(tx.i1, ty.i1, c), tx.t);
    return lerp(top, bottom, ty.t);
}

void ImageBuffer::clamp_unit() {
    for (float& v : samples_) {
        v = std::isnan(v) ? 0.0f : std::clamp(v, 0.0f, 1.0f);
    }
}

ImageBuffer to_luminance(const ImageBuffer& img) {
    if (img.channels() == 1) {
        return img;
    }
    ImageBuffer out(img.width(), img.height(), 1);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            out.at(x, y) = 0.299f * img.at(x, y, 0) + 0.587f * img.at(x, y, 1) +
                           0.114f * img.at(x, y, 2);
        }
    }
    out.clamp_unit();
    return out;
}

std::vector<float> sobel_magnitude(std::span<const float> plane, int width, int height) {
    auto px = [&](int x, int y) {
        x = std::clamp(x, 0, width - 1);
        y = std::clamp(y, 0, height - 1);
        return static_cast<double>(plane[static_cast<std::size_t>(y) * width + x]);
    };
    std::vector<float> out(plane.size());
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double gx = (px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1) -
                               px(x - 1, y - 1) - 2.0 * px(x - 1, y) - px(x - 1, y + 1)) /
                              4.0;
            const double gy = (px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1) -
                               px(x - 1, y - 1) - 2.0 * px(x, y - 1) - px(x + 1, y - 1)) /
                              4.0;
            out[static_cast<std::size_t>(y) * width + x] =
                static_cast<float>(std::sqrt(gx * gx + gy * gy));
        }
    }
    return out;
}

ImageBuffer sobel_edges(const ImageBuffer& img) {
    const ImageBuffer luma = to_luminance(img);
    std::vector<float> mag = sobel_magnitude(luma.samples(), luma.width(), luma.height());
    for (float& v : mag) {
        v = std::min(v, 1.0f);
    }
    ImageBuffer out(img.width(), img.height(), 1, std::move(mag));
    assert(std::all_of(out.samples().begin(), out.samples().end(),
                       [](float v) { return v >= 0.0f && v <= 1.0f; }));
    return out;
}

std::vector<float> resize_planes(std::span<const float> data, int width, int height,
                                 int channels, int new_width, int new_height) {
    if (new_width < 1 || new_height < 1) {
        throw ValidationError("resize target must be at least 1x1");
    }
    if (new_width == width && new_height == height) {
        return {data.begin(), data.end()};
    }
    const double sx = static_cast<double>(width) / new_width;
    const double sy = static_cast<double>(height) / new_height;
    std::vector<Tap> xs(new_width);
    for (int x = 0; x < new_width; ++x) {
        xs[x] = clamped_tap((x + 0.5) * sx - 0.5, width);
    }
    std::vector<float> out(static_cast<std::size_t>(new_width) * new_height * channels);
    auto in = [&](int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    };
    for (int y = 0; y < new_height; ++y) {
        const Tap ty = clamped_tap((y + 0.5) * sy - 0.5, height);
        for (int x = 0; x < new_width; ++x) {
            const Tap& tx = xs[x];
            for (int c = 0; c < channels; ++c) {
                const float top = lerp(in(tx.i0, ty.i0, c), in(tx.i1, ty.i0, c), tx.t);
                const float bottom = lerp(in(tx.i0, ty.i1, c), in(tx.i1, ty.i1, c), tx.t);
                out[(static_cast<std::size_t>(y) * new_width + x) * channels + c] =
                    lerp(top, bottom, ty.t);
            }
        }
    }
    return out;
}

ImageBuffer resize_bilinear(const ImageBuffer& img, int new_width, int new_height) {
    ImageBuffer out(new_width, new_height, img.channels(),
                    resize_planes(img.samples(), img.width(), img.height(), img.channels(),
                                  new_width, new_height));
    out.clamp_unit();
    return out;
}

double max_abs_diff(const ImageBuffer& a, const ImageBuffer& b) {
    if (a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels()) {
        throw DimensionMismatch("images differ in shape");
    }
    double worst = 0.0;
    auto sa = a.samples();
    auto sb = b.samples();
    for (std::size_t i = 0; i < sa.size(); ++i) {
        worst = std::max(worst, std::abs(static_cast<double>(sa[i]) - sb[i]));
    }
    return worst;
}

}  // namespace wideangle
