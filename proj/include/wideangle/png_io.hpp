#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wideangle/image.hpp"

namespace wideangle {

/// Decodes an 8-bit PNG. Gray and gray+alpha load as 1 channel, everything
/// else as 3 channels (alpha dropped, palette expanded, 16-bit stripped).
ImageBuffer decode_png(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_png(const ImageBuffer& img);

ImageBuffer read_png(const std::filesystem::path& path);
/// Writes through a temporary sibling file and renames it into place.
void write_png(const std::filesystem::path& path, const ImageBuffer& img);

/// Reads or writes whole files; writes are temp-file-then-rename.
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace wideangle
