#include "minimax/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>

#include "minimax/errors.hpp"

namespace minimax {
namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc908ULL;
  for (auto p : parts) h = splitmix(h ^ p);
  return h;
}

// Portable draws from the raw 64-bit stream; std distributions differ across
// standard libraries.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : gen_(seed) {}
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) {
    return lo + static_cast<int>(gen_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  double normal() {
    const double u1 = std::max(uniform(), 1e-300), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

 private:
  std::mt19937_64 gen_;
};

using Rgb = std::array<double, 3>;

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

// Fixed per-category appearance: two palette colours and a scale parameter.
struct Style {
  Texture texture;
  Rgb a, b;
  double scale;
  double angle;
};

Style category_style(std::uint64_t seed, int cat) {
  Stream s(mix({seed, 0xca7, static_cast<std::uint64_t>(cat)}));
  Style st;
  st.texture = static_cast<Texture>(cat % 5);
  const double hue = s.uniform(0.0, 2 * kPi);
  const double sat = s.uniform(40.0, 70.0);
  st.a = {110 + sat * std::cos(hue), 110 + sat * std::cos(hue + 2.1), 110 + sat * std::cos(hue + 4.2)};
  st.b = {st.a[0] * 0.55 + 20, st.a[1] * 0.55 + 20, st.a[2] * 0.55 + 20};
  st.scale = s.uniform(0.8, 1.2);
  st.angle = s.uniform(0.0, kPi);
  return st;
}

double smoothstep(double t) { return t * t * (3 - 2 * t); }

// Intensity field in [0, 1] for the texture family at (y, x).
std::vector<double> texture_field(const Style& st, Stream& s, int n) {
  std::vector<double> f(static_cast<std::size_t>(n) * n, 0.0);
  switch (st.texture) {
    case Texture::Stripes: {
      const double period = 10.0 * st.scale, phase = s.uniform(0.0, 2 * kPi);
      const double angle = st.angle + s.uniform(-0.08, 0.08);
      const double cy = std::sin(angle), cx = std::cos(angle);
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
          f[y * n + x] = 0.5 + 0.5 * std::sin(2 * kPi * (cx * x + cy * y) / period + phase);
      break;
    }
    case Texture::Blobs: {
      const int count = s.integer(5, 8);
      for (int k = 0; k < count; ++k) {
        const double by = s.uniform(0, n), bx = s.uniform(0, n);
        const double r = s.uniform(5.0, 9.0) * st.scale;
        for (int y = 0; y < n; ++y)
          for (int x = 0; x < n; ++x) {
            const double d2 = (y - by) * (y - by) + (x - bx) * (x - bx);
            f[y * n + x] += std::exp(-d2 / (2 * r * r));
          }
      }
      for (auto& v : f) v = std::min(1.0, v);
      break;
    }
    case Texture::Checker: {
      const int cell = std::max(4, static_cast<int>(std::lround(8 * st.scale)));
      const int oy = s.integer(0, 2 * cell - 1), ox = s.integer(0, 2 * cell - 1);
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) f[y * n + x] = (((y + oy) / cell + (x + ox) / cell) % 2) ? 1.0 : 0.0;
      break;
    }
    case Texture::Noise: {
      const int g = 9;
      std::vector<double> grid(g * g);
      for (auto& v : grid) v = s.uniform();
      const double step = (n - 1) / static_cast<double>(g - 1);
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          const double gy = y / step, gx = x / step;
          const int y0 = std::min(static_cast<int>(gy), g - 2), x0 = std::min(static_cast<int>(gx), g - 2);
          const double ty = smoothstep(gy - y0), tx = smoothstep(gx - x0);
          const double top = grid[y0 * g + x0] * (1 - tx) + grid[y0 * g + x0 + 1] * tx;
          const double bot = grid[(y0 + 1) * g + x0] * (1 - tx) + grid[(y0 + 1) * g + x0 + 1] * tx;
          f[y * n + x] = top * (1 - ty) + bot * ty;
        }
      break;
    }
    case Texture::Dots: {
      const double pitch = 8.0 * st.scale;
      const double oy = s.uniform(0, pitch), ox = s.uniform(0, pitch);
      const double r = 2.2 * st.scale;
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          const double dy = std::fmod(y + oy, pitch) - pitch / 2;
          const double dx = std::fmod(x + ox, pitch) - pitch / 2;
          f[y * n + x] = std::sqrt(dy * dy + dx * dx) <= r ? 1.0 : 0.0;
        }
      break;
    }
  }
  return f;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

Image8 paint(const Style& st, Stream& s, int n) {
  const auto f = texture_field(st, s, n);
  const double gain = s.uniform(0.92, 1.08);
  Image8 img{n, n, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(n) * n * 3)};
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const Rgb c = lerp(st.b, st.a, f[y * n + x]);
      for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = to_byte(c[ch] * gain + 3.0 * s.normal());
    }
  return img;
}

// Rasterised defect footprint: 1 inside, 0 outside.
std::vector<std::uint8_t> defect_mask(Defect d, Stream& s, int n) {
  std::vector<std::uint8_t> m(static_cast<std::size_t>(n) * n, 0);
  const int margin = 4;
  const double cy = s.uniform(margin + 6, n - margin - 6), cx = s.uniform(margin + 6, n - margin - 6);
  switch (d) {
    case Defect::Square: {
      const int side = s.integer(8, 14);
      const int y0 = static_cast<int>(cy) - side / 2, x0 = static_cast<int>(cx) - side / 2;
      for (int y = y0; y < y0 + side; ++y)
        for (int x = x0; x < x0 + side; ++x)
          if (y >= 0 && y < n && x >= 0 && x < n) m[y * n + x] = 1;
      break;
    }
    case Defect::Ellipse: {
      const double ry = s.uniform(4.0, 8.0), rx = s.uniform(4.0, 8.0);
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          const double u = (y - cy) / ry, v = (x - cx) / rx;
          if (u * u + v * v <= 1.0) m[y * n + x] = 1;
        }
      break;
    }
    case Defect::Scratch: {
      const double angle = s.uniform(0.0, kPi), half = s.uniform(8.0, 14.0);
      const double width = s.uniform(1.2, 2.2);
      const double dy = std::sin(angle), dx = std::cos(angle);
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          const double py = y - cy, px = x - cx;
          const double along = px * dx + py * dy, across = -px * dy + py * dx;
          if (std::abs(along) <= half && std::abs(across) <= width) m[y * n + x] = 1;
        }
      break;
    }
  }
  return m;
}

void ensure_dir(const std::filesystem::path& p) {
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

std::string numbered(int i, const char* suffix) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03d%s.png", i, suffix);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (categories < 1) throw ConfigError("categories must be at least 1");
  if (normals_per_cat < 1) throw ConfigError("normals_per_cat must be at least 1");
  if (anomalies_per_cat < 0) throw ConfigError("anomalies_per_cat must be nonnegative");
  if (resolution <= 0 || resolution % 32 != 0)
    throw ConfigError("resolution must be a positive multiple of 32");
}

const char* to_string(Texture t) {
  static const char* names[] = {"stripes", "blobs", "checker", "noise", "dots"};
  return names[static_cast<int>(t)];
}

const char* to_string(Defect d) {
  static const char* names[] = {"square", "ellipse", "scratch"};
  return names[static_cast<int>(d)];
}

std::string category_name(int index) {
  std::string name = to_string(static_cast<Texture>(index % 5));
  if (index >= 5) name += "_" + std::to_string(index / 5 + 1);
  return name;
}

Image8 render_normal(std::uint64_t seed, int cat, std::uint64_t key, int resolution) {
  const Style st = category_style(seed, cat);
  Stream s(mix({seed, static_cast<std::uint64_t>(cat), key}));
  return paint(st, s, resolution);
}

AnomalySample render_anomaly(std::uint64_t seed, int cat, std::uint64_t key, Defect defect,
                             int resolution) {
  const Style st = category_style(seed, cat);
  Stream s(mix({seed, static_cast<std::uint64_t>(cat), key}));
  AnomalySample out;
  out.image = paint(st, s, resolution);
  const auto m = defect_mask(defect, s, resolution);
  // A colour far from both palette entries, with its own fine noise.
  const double hue = s.uniform(0.0, 2 * kPi);
  Rgb c;
  for (int ch = 0; ch < 3; ++ch) {
    const double mid = 0.5 * (st.a[ch] + st.b[ch]);
    c[ch] = std::clamp(255.0 - mid + 35.0 * std::cos(hue + 2.1 * ch), 0.0, 255.0);
  }
  out.mask = Image8{resolution, resolution, 1, std::vector<std::uint8_t>(m.size(), 0)};
  for (int y = 0; y < resolution; ++y)
    for (int x = 0; x < resolution; ++x) {
      if (!m[y * resolution + x]) continue;
      out.mask.at(y, x, 0) = 255;
      ++out.area;
      for (int ch = 0; ch < 3; ++ch) out.image.at(y, x, ch) = to_byte(c[ch] + 6.0 * s.normal());
    }
  return out;
}

std::vector<std::string> synth_dataset(const SynthConfig& cfg, const std::filesystem::path& root) {
  cfg.validate();
  std::vector<std::string> names;
  for (int cat = 0; cat < cfg.categories; ++cat) {
    const std::string name = category_name(cat);
    names.push_back(name);
    const auto dir = root / name;
    ensure_dir(dir / "train" / "good");
    ensure_dir(dir / "test" / "good");
    for (int i = 0; i < cfg.normals_per_cat; ++i)
      write_png(dir / "train" / "good" / numbered(i, ""),
                render_normal(cfg.seed, cat, mix({1, static_cast<std::uint64_t>(i)}), cfg.resolution));
    for (int i = 0; i < cfg.good_test(); ++i)
      write_png(dir / "test" / "good" / numbered(i, ""),
                render_normal(cfg.seed, cat, mix({2, static_cast<std::uint64_t>(i)}), cfg.resolution));
    std::array<int, 3> per_defect{0, 0, 0};
    for (int i = 0; i < cfg.anomalies_per_cat; ++i) {
      const auto d = static_cast<Defect>(i % 3);
      const int k = per_defect[i % 3]++;
      const auto a = render_anomaly(cfg.seed, cat, mix({3, static_cast<std::uint64_t>(i)}), d,
                                    cfg.resolution);
      ensure_dir(dir / "test" / to_string(d));
      ensure_dir(dir / "ground_truth" / to_string(d));
      write_png(dir / "test" / to_string(d) / numbered(k, ""), a.image);
      write_png(dir / "ground_truth" / to_string(d) / numbered(k, "_mask"), a.mask);
    }
  }
  return names;
}

}  // namespace minimax
