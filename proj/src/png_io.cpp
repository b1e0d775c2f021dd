#include "minimax/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>

#include "minimax/errors.hpp"

namespace minimax {
namespace {

// libpng reports errors by longjmp. Every guarded call below sets its own
// jump target in a frame with only trivially destructible locals and turns a
// failure into a bool, so no C++ object is ever skipped by the jump.

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open(const std::filesystem::path& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

void quiet_warning(png_structp, png_const_charp) {}

struct Reader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  explicit Reader(std::FILE* f) {
    png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, quiet_warning);
    if (png) info = png_create_info_struct(png);
    if (!png || !info) throw IoError("libpng initialisation failed");
    png_init_io(png, f);
  }
  ~Reader() { png_destroy_read_struct(&png, &info, nullptr); }
};

struct Writer {
  png_structp png = nullptr;
  png_infop info = nullptr;
  explicit Writer(std::FILE* f) {
    png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, quiet_warning);
    if (png) info = png_create_info_struct(png);
    if (!png || !info) throw IoError("libpng initialisation failed");
    png_init_io(png, f);
  }
  ~Writer() { png_destroy_write_struct(&png, &info); }
};

// Reads the header and configures conversion to 8-bit gray or RGB.
bool read_header_8bit(png_structp png, png_infop info) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  return true;
}

bool read_header_raw(png_structp png, png_infop info) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_info(png, info);
  return true;
}

bool read_body(png_structp png, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_image(png, rows);
  png_read_end(png, nullptr);
  return true;
}

bool write_body(png_structp png, png_infop info, int width, int height, int color_type,
                int depth, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), depth,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  // Fixed settings keep output byte-identical across runs.
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  png_write_image(png, rows);
  png_write_end(png, nullptr);
  return true;
}

template <typename Byte>
std::vector<png_bytep> row_pointers(Byte* base, int height, std::size_t stride) {
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y)
    rows[y] = const_cast<png_bytep>(reinterpret_cast<const png_byte*>(base)) + y * stride;
  return rows;
}

void write_rows(const std::filesystem::path& path, int width, int height, int color_type,
                int depth, std::vector<png_bytep>& rows) {
  File f = open(path, "wb");
  Writer w(f.get());
  if (!write_body(w.png, w.info, width, height, color_type, depth, rows.data()))
    throw IoError("failed to write " + path.string());
}

}  // namespace

Image8 read_png(const std::filesystem::path& path) {
  File f = open(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8))
    throw IoError(path.string() + " is not a PNG file");
  Reader r(f.get());
  png_set_sig_bytes(r.png, 8);
  if (!read_header_8bit(r.png, r.info)) throw IoError("corrupt PNG header in " + path.string());

  Image8 img;
  img.width = static_cast<int>(png_get_image_width(r.png, r.info));
  img.height = static_cast<int>(png_get_image_height(r.png, r.info));
  img.channels = png_get_channels(r.png, r.info);
  if (img.channels != 1 && img.channels != 3)
    throw IoError(path.string() + ": unsupported channel count " + std::to_string(img.channels));
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
  auto rows = row_pointers(img.pixels.data(), img.height,
                           static_cast<std::size_t>(img.width) * img.channels);
  if (!read_body(r.png, rows.data())) throw IoError("corrupt PNG data in " + path.string());
  return img;
}

void write_png(const std::filesystem::path& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3) throw ContractError("write_png: 1 or 3 channels");
  if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * img.channels)
    throw ContractError("write_png: pixel count does not match size");
  auto rows = row_pointers(img.pixels.data(), img.height,
                           static_cast<std::size_t>(img.width) * img.channels);
  write_rows(path, img.width, img.height,
             img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, 8, rows);
}

void write_png16(const std::filesystem::path& path, int width, int height,
                 const std::vector<std::uint16_t>& gray) {
  if (gray.size() != static_cast<std::size_t>(width) * height)
    throw ContractError("write_png16: pixel count does not match size");
  std::vector<std::uint8_t> bytes(gray.size() * 2);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    bytes[2 * i] = static_cast<std::uint8_t>(gray[i] >> 8);
    bytes[2 * i + 1] = static_cast<std::uint8_t>(gray[i] & 0xff);
  }
  auto rows = row_pointers(bytes.data(), height, static_cast<std::size_t>(width) * 2);
  write_rows(path, width, height, PNG_COLOR_TYPE_GRAY, 16, rows);
}

std::vector<std::uint16_t> read_png16(const std::filesystem::path& path, int* width,
                                      int* height) {
  File f = open(path, "rb");
  Reader r(f.get());
  if (!read_header_raw(r.png, r.info)) throw IoError("corrupt PNG header in " + path.string());
  if (png_get_bit_depth(r.png, r.info) != 16 ||
      png_get_color_type(r.png, r.info) != PNG_COLOR_TYPE_GRAY)
    throw IoError(path.string() + " is not a 16-bit grayscale PNG");
  const int w = static_cast<int>(png_get_image_width(r.png, r.info));
  const int h = static_cast<int>(png_get_image_height(r.png, r.info));
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * h * 2);
  auto rows = row_pointers(bytes.data(), h, static_cast<std::size_t>(w) * 2);
  if (!read_body(r.png, rows.data())) throw IoError("corrupt PNG data in " + path.string());
  std::vector<std::uint16_t> out(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1]);
  if (width) *width = w;
  if (height) *height = h;
  return out;
}

}  // namespace minimax
