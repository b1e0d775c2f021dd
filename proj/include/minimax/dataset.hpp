#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "minimax/png_io.hpp"
#include "minimax/tensor.hpp"

namespace minimax {

enum class Split { Train, Test };

struct Normalization {
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> std{0.229f, 0.224f, 0.225f};
};

struct Sample {
  std::string path;
  std::string category;
  std::string defect;  // "good" for normal images
  int label = 0;
  Tensor<float> image;              // (1, 3, R, R), normalised
  std::vector<std::uint8_t> mask;   // R * R row-major, 0/1
};

// Category directories under root: root itself when it holds train/,
// otherwise every subdirectory holding train/, in lexicographic order.
std::vector<std::filesystem::path> discover_categories(const std::filesystem::path& root);

// Bilinear resampling of an interleaved raster (half-pixel centres). Equal
// sizes return the input unchanged.
std::vector<float> resize_bilinear(const Image8& img, int out_h, int out_w);

std::vector<Sample> load_split(const std::filesystem::path& category_dir, Split split,
                               int resolution, const Normalization& norm = {});

// Stacks samples [begin, end) into an (n, 3, R, R) batch.
Tensor<float> stack_images(const std::vector<const Sample*>& samples);

}  // namespace minimax
