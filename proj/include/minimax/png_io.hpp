#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace minimax {

// Interleaved 8-bit raster, row-major. channels is 1 (gray) or 3 (RGB).
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(int y, int x, int c) { return pixels[(y * width + x) * channels + c]; }
  std::uint8_t at(int y, int x, int c) const { return pixels[(y * width + x) * channels + c]; }
};

// Reads any PNG and converts it to 8-bit gray or RGB. Alpha is dropped,
// palettes are expanded and 16-bit samples are reduced to their high byte.
Image8 read_png(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const Image8& img);

// Single-channel 16-bit PNG (big-endian samples as the format requires).
void write_png16(const std::filesystem::path& path, int width, int height,
                 const std::vector<std::uint16_t>& gray);
std::vector<std::uint16_t> read_png16(const std::filesystem::path& path, int* width,
                                      int* height);

}  // namespace minimax
