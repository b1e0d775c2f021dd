#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "minimax/png_io.hpp"

namespace minimax {

struct SynthConfig {
  std::uint64_t seed = 7;
  int categories = 5;
  int normals_per_cat = 40;
  int anomalies_per_cat = 10;
  int good_test_per_cat = -1;  // negative: same as anomalies_per_cat
  int resolution = 64;

  void validate() const;
  int good_test() const { return good_test_per_cat < 0 ? anomalies_per_cat : good_test_per_cat; }
};

enum class Texture { Stripes, Blobs, Checker, Noise, Dots };
enum class Defect { Square, Ellipse, Scratch };

const char* to_string(Texture t);
const char* to_string(Defect d);

// Category i uses texture family i mod 5; names repeat with a numeric suffix.
std::string category_name(int index);

// One normal image of category `cat`, drawn from the stream keyed by `key`.
Image8 render_normal(std::uint64_t seed, int cat, std::uint64_t key, int resolution);

struct AnomalySample {
  Image8 image;
  Image8 mask;  // 1 channel, 255 inside the defect
  long area = 0;
};

AnomalySample render_anomaly(std::uint64_t seed, int cat, std::uint64_t key, Defect defect,
                             int resolution);

// Writes an MVTec-style tree under root and returns the category names:
//   <cat>/train/good/NNN.png
//   <cat>/test/good/NNN.png
//   <cat>/test/<defect>/NNN.png
//   <cat>/ground_truth/<defect>/NNN_mask.png
std::vector<std::string> synth_dataset(const SynthConfig& cfg, const std::filesystem::path& root);

}  // namespace minimax
