#include "wideangle/flow.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "wideangle/errors.hpp"
#include "wideangle/png_io.hpp"

namespace wideangle {

namespace {

void require_same_size(int w1, int h1, int w2, int h2, const char* what) {
    if (w1 != w2 || h1 != h2) {
        throw DimensionMismatch(std::string(what) + ": raster sizes differ");
    }
}

constexpr std::uint8_t kMagic[4] = {'P', 'F', 'L', 'O'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
    }
    return v;
}

}  // namespace

FlowField::FlowField(int width, int height)
    : width_(width), height_(height),
      data_(2 * static_cast<std::size_t>(width) * height, 0.0f) {
    if (width < 1 || height < 1) {
        throw ValidationError("flow field must be at least 1x1");
    }
}

FlowField::FlowField(int width, int height, std::vector<float> displacements)
    : width_(width), height_(height), data_(std::move(displacements)) {
    if (width < 1 || height < 1) {
        throw ValidationError("flow field must be at least 1x1");
    }
    if (data_.size() != 2 * static_cast<std::size_t>(width) * height) {
        throw DimensionMismatch("displacement count does not match flow shape");
    }
    for (float v : data_) {
        if (!std::isfinite(v)) {
            throw ValidationError("flow displacements must be finite");
        }
    }
}

FlowField FlowField::constant(int width, int height, float dx, float dy) {
    FlowField f(width, height);
    for (std::size_t i = 0; i < f.data_.size(); i += 2) {
        f.data_[i] = dx;
        f.data_[i + 1] = dy;
    }
    return f;
}

Vec2 FlowField::sample(double x, double y) const {
    x = std::clamp(x, 0.0, static_cast<double>(width_ - 1));
    y = std::clamp(y, 0.0, static_cast<double>(height_ - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, width_ - 1);
    const int y1 = std::min(y0 + 1, height_ - 1);
    const float tx = static_cast<float>(x - x0);
    const float ty = static_cast<float>(y - y0);
    Vec2 result;
    for (int c = 0; c < 2; ++c) {
        const float a = data_[index(x0, y0) + c];
        const float b = data_[index(x1, y0) + c];
        const float d = data_[index(x0, y1) + c];
        const float e = data_[index(x1, y1) + c];
        const float top = a + tx * (b - a);
        const float bottom = d + tx * (e - d);
        const float v = top + ty * (bottom - top);
        (c == 0 ? result.x : result.y) = v;
    }
    return result;
}

std::vector<float> FlowField::component(int c) const {
    std::vector<float> out(static_cast<std::size_t>(width_) * height_);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = data_[2 * i + c];
    }
    return out;
}

double FlowField::max_magnitude() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < data_.size(); i += 2) {
        worst = std::max(worst, std::hypot(static_cast<double>(data_[i]), data_[i + 1]));
    }
    return worst;
}

ImageBuffer warp(const ImageBuffer& img, const FlowField& flow) {
    require_same_size(img.width(), img.height(), flow.width(), flow.height(), "warp");
    ImageBuffer out(img.width(), img.height(), img.channels());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const Vec2 d = flow.at(x, y);
            const double sx = x + d.x;
            const double sy = y + d.y;
            for (int c = 0; c < img.channels(); ++c) {
                out.at(x, y, c) = img.sample(sx, sy, c);
            }
        }
    }
    out.clamp_unit();
    return out;
}

FlowField compose(const FlowField& second, const FlowField& first) {
    require_same_size(second.width(), second.height(), first.width(), first.height(), "compose");
    const int w = second.width();
    const int h = second.height();
    FlowField out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Vec2 d = second.at(x, y);
            const Vec2 inner = first.sample(x + d.x, y + d.y);
            out.set(x, y, {d.x + inner.x, d.y + inner.y});
        }
    }
    return out;
}

FlowField rescale_flow(const FlowField& flow, int new_width, int new_height) {
    if (new_width == flow.width() && new_height == flow.height()) {
        return flow;
    }
    std::vector<float> resized = resize_planes(flow.data(), flow.width(), flow.height(), 2,
                                               new_width, new_height);
    const double sx = static_cast<double>(new_width) / flow.width();
    const double sy = static_cast<double>(new_height) / flow.height();
    for (std::size_t i = 0; i < resized.size(); i += 2) {
        resized[i] = static_cast<float>(resized[i] * sx);
        resized[i + 1] = static_cast<float>(resized[i + 1] * sy);
    }
    return FlowField(new_width, new_height, std::move(resized));
}

namespace {

// One Newton solve of q + F(q) = target; returns the residual norm of the final iterate.
double newton_invert(const FlowField& flow, Vec2 target, Vec2& q) {
    q = target - flow.sample(target.x, target.y);
    double residual = 0.0;
    for (int iter = 0; iter < 50; ++iter) {
        const Vec2 f = flow.sample(q.x, q.y);
        const Vec2 r = q + f - target;
        residual = std::hypot(r.x, r.y);
        if (residual < 1e-7) {
            break;
        }
        constexpr double h = 0.5;
        const Vec2 fxp = flow.sample(q.x + h, q.y);
        const Vec2 fxm = flow.sample(q.x - h, q.y);
        const Vec2 fyp = flow.sample(q.x, q.y + h);
        const Vec2 fym = flow.sample(q.x, q.y - h);
        const double a = 1.0 + (fxp.x - fxm.x) / (2 * h);
        const double b = (fyp.x - fym.x) / (2 * h);
        const double c = (fxp.y - fxm.y) / (2 * h);
        const double d = 1.0 + (fyp.y - fym.y) / (2 * h);
        const double det = a * d - b * c;
        if (std::abs(det) < 1e-12) {
            q = q - r;
            continue;
        }
        q.x -= (d * r.x - b * r.y) / det;
        q.y -= (-c * r.x + a * r.y) / det;
    }
    const Vec2 r = q + flow.sample(q.x, q.y) - target;
    residual = std::hypot(r.x, r.y);
    return residual;
}

}  // namespace

bool invert_point(const FlowField& flow, Vec2 target, Vec2& out, double tolerance) {
    return newton_invert(flow, target, out) <= tolerance;
}

Vec2 forward_map(const FlowField& flow, Vec2 target) {
    Vec2 q;
    newton_invert(flow, target, q);
    return q;
}

double max_abs_diff(const FlowField& a, const FlowField& b) {
    require_same_size(a.width(), a.height(), b.width(), b.height(), "max_abs_diff");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        worst = std::max(worst, std::abs(static_cast<double>(a.data()[i]) - b.data()[i]));
    }
    return worst;
}

std::vector<std::uint8_t> encode_pflo(const FlowField& flow) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    out.reserve(12 + 4 * flow.data().size());
    put_u32(out, static_cast<std::uint32_t>(flow.width()));
    put_u32(out, static_cast<std::uint32_t>(flow.height()));
    for (float v : flow.data()) {
        put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

FlowField decode_pflo(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 12 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
        throw CorruptRecord("PFLO: bad magic or truncated header");
    }
    const std::uint32_t width = get_u32(bytes, 4);
    const std::uint32_t height = get_u32(bytes, 8);
    if (width == 0 || height == 0) {
        throw CorruptRecord("PFLO: zero-sized raster");
    }
    const std::uint64_t count = 2ull * width * height;
    if (bytes.size() - 12 != 4 * count) {
        throw CorruptRecord("PFLO: payload size does not match header");
    }
    std::vector<float> data(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        data[i] = std::bit_cast<float>(get_u32(bytes, 12 + 4 * i));
        if (!std::isfinite(data[i])) {
            throw CorruptRecord("PFLO: non-finite displacement");
        }
    }
    return FlowField(static_cast<int>(width), static_cast<int>(height), std::move(data));
}

FlowField read_pflo(const std::filesystem::path& path) {
    try {
        return decode_pflo(read_file(path));
    } catch (const ValidationError& e) {
        throw CorruptRecord(e.what());
    }
}

void write_pflo(const std::filesystem::path& path, const FlowField& flow) {
    write_file_atomic(path, encode_pflo(flow));
}

}  // namespace wideangle
