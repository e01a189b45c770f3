#include "wideangle/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <csetjmp>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "wideangle/errors.hpp"

namespace wideangle {

namespace {

struct ReadCursor {
    const std::vector<std::uint8_t>* bytes;
    std::size_t offset;
};

thread_local std::string png_message;

void read_callback(png_structp png, png_bytep out, png_size_t length) {
    auto* cursor = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cursor->offset + length > cursor->bytes->size()) {
        png_error(png, "truncated PNG stream");
    }
    std::memcpy(out, cursor->bytes->data() + cursor->offset, length);
    cursor->offset += length;
}

void write_callback(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

void flush_callback(png_structp) {}

// libpng is C; errors leave through longjmp and are rethrown once back in C++.
void error_callback(png_structp png, png_const_charp message) {
    png_message = message;
    png_longjmp(png, 1);
}

void warning_callback(png_structp, png_const_charp) {}

}  // namespace

namespace {

struct DecodedRaw {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;
};

// Returns false on a libpng error; no objects with destructors live across setjmp.
bool decode_raw(const std::vector<std::uint8_t>& bytes, DecodedRaw& result) {
    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, error_callback, warning_callback);
    png_infop info = png_create_info_struct(png);
    ReadCursor cursor{&bytes, 0};
    png_bytepp rows = nullptr;
    if (setjmp(png_jmpbuf(png))) {
        delete[] rows;
        png_destroy_read_struct(&png, &info, nullptr);
        return false;
    }
    png_set_read_fn(png, &cursor, read_callback);
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_packing(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    result.width = static_cast<int>(png_get_image_width(png, info));
    result.height = static_cast<int>(png_get_image_height(png, info));
    result.channels = png_get_channels(png, info);
    if (result.channels != 1 && result.channels != 3) {
        png_error(png, "unsupported PNG channel layout");
    }
    result.pixels.resize(static_cast<std::size_t>(result.width) * result.height * result.channels);
    rows = new png_bytep[result.height];
    for (int y = 0; y < result.height; ++y) {
        rows[y] = result.pixels.data() + static_cast<std::size_t>(y) * result.width * result.channels;
    }
    png_read_image(png, rows);
    png_read_end(png, nullptr);
    delete[] rows;
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
}

bool encode_raw(const std::vector<std::uint8_t>& raw, int width, int height, int channels,
                std::vector<std::uint8_t>& out) {
    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, error_callback, warning_callback);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return false;
    }
    png_set_write_fn(png, &out, write_callback, flush_callback);
    png_set_IHDR(png, info, width, height, 8,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(width) * channels;
    for (int y = 0; y < height; ++y) {
        png_write_row(png, raw.data() + y * stride);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

}  // namespace

ImageBuffer decode_png(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        throw ValidationError("not a PNG file");
    }
    DecodedRaw raw;
    if (!decode_raw(bytes, raw)) {
        throw ValidationError("PNG decode failed: " + png_message);
    }
    std::vector<float> samples(raw.pixels.size());
    for (std::size_t i = 0; i < raw.pixels.size(); ++i) {
        samples[i] = static_cast<float>(raw.pixels[i]) / 255.0f;
    }
    return ImageBuffer(raw.width, raw.height, raw.channels, std::move(samples));
}

std::vector<std::uint8_t> encode_png(const ImageBuffer& img) {
    std::vector<std::uint8_t> raw(img.samples().size());
    auto samples = img.samples();
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const float v = std::isnan(samples[i]) ? 0.0f : samples[i];
        raw[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
    }
    std::vector<std::uint8_t> out;
    if (!encode_raw(raw, img.width(), img.height(), img.channels(), out)) {
        throw ValidationError("PNG encode failed: " + png_message);
    }
    return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

namespace {

void write_atomic(const std::filesystem::path& path, const char* data, std::size_t size) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw ValidationError("cannot write " + path.string());
        }
        out.write(data, static_cast<std::streamsize>(size));
        if (!out) {
            throw ValidationError("short write to " + path.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    write_atomic(path, reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
    write_atomic(path, text.data(), text.size());
}

ImageBuffer read_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }

void write_png(const std::filesystem::path& path, const ImageBuffer& img) {
    write_file_atomic(path, encode_png(img));
}

}  // namespace wideangle
