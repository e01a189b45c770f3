#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "wideangle/image.hpp"

namespace wideangle {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend bool operator==(Vec2, Vec2) = default;
};

/// Dense backward flow: the output pixel p samples the input at p + F(p).
/// Displacements are in destination-image pixels.
class FlowField {
public:
    FlowField() = default;
    /// Zero flow.
    FlowField(int width, int height);
    FlowField(int width, int height, std::vector<float> displacements);

    static FlowField constant(int width, int height, float dx, float dy);

    int width() const { return width_; }
    int height() const { return height_; }

    Vec2 at(int x, int y) const {
        const std::size_t i = index(x, y);
        return {data_[i], data_[i + 1]};
    }
    void set(int x, int y, Vec2 d) {
        const std::size_t i = index(x, y);
        data_[i] = static_cast<float>(d.x);
        data_[i + 1] = static_cast<float>(d.y);
    }

    /// Bilinear sample with edge-clamped coordinates.
    Vec2 sample(double x, double y) const;

    /// Interleaved (dx, dy) pairs, row-major.
    std::span<const float> data() const { return data_; }
    std::span<float> data() { return data_; }

    /// Per-component plane (0 = dx, 1 = dy).
    std::vector<float> component(int c) const;

    double max_magnitude() const;

    friend bool operator==(const FlowField&, const FlowField&) = default;

private:
    std::size_t index(int x, int y) const {
        return 2 * (static_cast<std::size_t>(y) * width_ + x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<float> data_;
};

/// out(p) = img(p + F(p)), bilinear, border-clamped. Throws DimensionMismatch.
ImageBuffer warp(const ImageBuffer& img, const FlowField& flow);

/// Fuses two backward flows into one. Argument order mirrors function
/// composition: the result applies `first` to the image, then `second`.
///
///   F(p) = second(p) + first(p + second(p)),  first sampled bilinearly (clamped)
///
/// so warp(warp(I, first), second) matches warp(I, compose(second, first)) up to
/// interpolation wherever the sampled positions stay inside the raster.
FlowField compose(const FlowField& second, const FlowField& first);

/// Bilinear resize of both components, then dx *= new_w / w and dy *= new_h / h.
FlowField rescale_flow(const FlowField& flow, int new_width, int new_height);

/// Solves q + F(q) = target for q, i.e. where the input point `target` lands in
/// the output of warp(., flow). Newton iteration on the bilinear field.
/// Returns false if it does not converge to within `tolerance` pixels.
bool invert_point(const FlowField& flow, Vec2 target, Vec2& out, double tolerance = 1e-4);

/// Like invert_point, but returns the best iterate even if not converged.
Vec2 forward_map(const FlowField& flow, Vec2 target);

/// Largest component-wise difference between two flows.
double max_abs_diff(const FlowField& a, const FlowField& b);

/// PFLO: "PFLO", u32le width, u32le height, then (f32le dx, f32le dy) pairs row-major.
std::vector<std::uint8_t> encode_pflo(const FlowField& flow);
/// Throws CorruptRecord on bad magic, truncation or trailing bytes.
FlowField decode_pflo(std::span<const std::uint8_t> bytes);

FlowField read_pflo(const std::filesystem::path& path);
void write_pflo(const std::filesystem::path& path, const FlowField& flow);

}  // namespace wideangle
