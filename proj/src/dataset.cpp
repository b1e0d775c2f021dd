#include "minimax/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "minimax/errors.hpp"

namespace fs = std::filesystem;

namespace minimax {
namespace {

std::vector<fs::path> sorted_entries(const fs::path& dir, bool want_dirs) {
  std::vector<fs::path> out;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(dir, ec)) {
    if (want_dirs ? e.is_directory() : (e.is_regular_file() && e.path().extension() == ".png"))
      out.push_back(e.path());
  }
  if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
  std::sort(out.begin(), out.end());
  return out;
}

Tensor<float> to_tensor(const Image8& img, int resolution, const Normalization& norm) {
  const auto px = resize_bilinear(img, resolution, resolution);
  Tensor<float> t(Shape{1, 3, resolution, resolution});
  const Index plane = static_cast<Index>(resolution) * resolution;
  for (Index p = 0; p < plane; ++p)
    for (int c = 0; c < 3; ++c) {
      const float v = px[p * img.channels + (img.channels == 3 ? c : 0)] / 255.0f;
      t.plane(0, c)[p] = (v - norm.mean[c]) / norm.std[c];
    }
  return t;
}

std::vector<std::uint8_t> to_mask(const Image8& img, int resolution) {
  const auto px = resize_bilinear(img, resolution, resolution);
  std::vector<std::uint8_t> m(static_cast<std::size_t>(resolution) * resolution);
  for (std::size_t p = 0; p < m.size(); ++p) m[p] = px[p * img.channels] / 255.0f >= 0.5f;
  return m;
}

}  // namespace

std::vector<fs::path> discover_categories(const fs::path& root) {
  if (!fs::is_directory(root)) throw DatasetError("dataset root " + root.string() + " is not a directory");
  if (fs::is_directory(root / "train")) return {root};
  std::vector<fs::path> out;
  for (const auto& d : sorted_entries(root, true))
    if (fs::is_directory(d / "train")) out.push_back(d);
  if (out.empty()) throw DatasetError("no category with a train/ directory under " + root.string());
  return out;
}

std::vector<float> resize_bilinear(const Image8& img, int out_h, int out_w) {
  const int h = img.height, w = img.width, ch = img.channels;
  std::vector<float> out(static_cast<std::size_t>(out_h) * out_w * ch);
  if (h == out_h && w == out_w) {
    std::copy(img.pixels.begin(), img.pixels.end(), out.begin());
    return out;
  }
  auto taps = [](int in, int n, int o, int& i0, int& i1, float& f) {
    double src = (o + 0.5) * in / n - 0.5;
    if (src < 0) src = 0;
    i0 = std::min(static_cast<int>(src), in - 1);
    i1 = std::min(i0 + 1, in - 1);
    f = static_cast<float>(src - i0);
  };
  for (int y = 0; y < out_h; ++y) {
    int y0, y1;
    float fy;
    taps(h, out_h, y, y0, y1, fy);
    for (int x = 0; x < out_w; ++x) {
      int x0, x1;
      float fx;
      taps(w, out_w, x, x0, x1, fx);
      for (int c = 0; c < ch; ++c) {
        const float top = img.at(y0, x0, c) * (1 - fx) + img.at(y0, x1, c) * fx;
        const float bot = img.at(y1, x0, c) * (1 - fx) + img.at(y1, x1, c) * fx;
        out[(static_cast<std::size_t>(y) * out_w + x) * ch + c] = top * (1 - fy) + bot * fy;
      }
    }
  }
  return out;
}

std::vector<Sample> load_split(const fs::path& category_dir, Split split, int resolution,
                               const Normalization& norm) {
  const std::string category = category_dir.filename().string();
  std::vector<Sample> out;
  auto add = [&](const fs::path& file, const std::string& defect) {
    Sample s;
    s.path = file.string();
    s.category = category;
    s.defect = defect;
    s.label = defect != "good";
    s.image = to_tensor(read_png(file), resolution, norm);
    if (s.label) {
      const fs::path mask = category_dir / "ground_truth" / defect /
                            (file.stem().string() + "_mask.png");
      if (!fs::exists(mask))
        throw DatasetError("missing mask " + mask.string() + " for " + file.string());
      s.mask = to_mask(read_png(mask), resolution);
    } else {
      s.mask.assign(static_cast<std::size_t>(resolution) * resolution, 0);
    }
    out.push_back(std::move(s));
  };

  if (split == Split::Train) {
    const fs::path dir = category_dir / "train" / "good";
    if (!fs::is_directory(dir)) throw DatasetError("missing directory " + dir.string());
    for (const auto& f : sorted_entries(dir, false)) add(f, "good");
  } else {
    const fs::path dir = category_dir / "test";
    if (!fs::is_directory(dir)) throw DatasetError("missing directory " + dir.string());
    for (const auto& d : sorted_entries(dir, true))
      for (const auto& f : sorted_entries(d, false)) add(f, d.filename().string());
  }
  return out;
}

Tensor<float> stack_images(const std::vector<const Sample*>& samples) {
  if (samples.empty()) throw ContractError("stack_images: empty batch");
  const Shape one = samples.front()->image.shape();
  Tensor<float> out(Shape{static_cast<Index>(samples.size()), one.c, one.h, one.w});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i]->image.require_same_shape(samples.front()->image, "stack_images");
    std::copy_n(samples[i]->image.data(), one.item(), out.plane(static_cast<Index>(i), 0));
  }
  return out;
}

}  // namespace minimax
