#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace wideangle {

/// Dense raster with float samples in [0,1], row-major and channel-interleaved.
///
/// Pixel (x, y) has its center at integer coordinates; sampling at fractional
/// positions clamps to the border.
class ImageBuffer {
public:
    ImageBuffer() = default;
    ImageBuffer(int width, int height, int channels, float fill = 0.0f);
    ImageBuffer(int width, int height, int channels, std::vector<float> samples);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    bool empty() const { return samples_.empty(); }

    float& at(int x, int y, int c = 0) { return samples_[index(x, y, c)]; }
    float at(int x, int y, int c = 0) const { return samples_[index(x, y, c)]; }

    std::span<float> samples() { return samples_; }
    std::span<const float> samples() const { return samples_; }

    /// Bilinear sample of one channel with edge-clamped coordinates.
    float sample(double x, double y, int c = 0) const;

    /// Clamps every sample into [0,1]; NaN becomes 0.
    void clamp_unit();

    friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

private:
    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<float> samples_;
};

/// Rec.601 luma for 3-channel input; 1-channel input is returned as is.
ImageBuffer to_luminance(const ImageBuffer& img);

/// Gradient magnitude with 1/4-normalized 3x3 Sobel kernels, clamped to 1.
/// Borders use edge replication.
ImageBuffer sobel_edges(const ImageBuffer& img);

/// Raw per-channel Sobel gradient magnitude, no clamping. Used on arbitrary
/// real-valued planes such as flow components.
std::vector<float> sobel_magnitude(std::span<const float> plane, int width, int height);

/// Half-pixel-center bilinear resize.
ImageBuffer resize_bilinear(const ImageBuffer& img, int new_width, int new_height);

/// Resamples one interleaved plane set. Shared by image and flow resizing.
std::vector<float> resize_planes(std::span<const float> data, int width, int height,
                                 int channels, int new_width, int new_height);

/// Largest absolute per-sample difference; throws DimensionMismatch on shape mismatch.
double max_abs_diff(const ImageBuffer& a, const ImageBuffer& b);

}  // namespace wideangle
