#include "inklab/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace inklab::vision {

namespace {

int read_pnm_token(std::istream& is, const std::string& path) {
  // Token separated by whitespace; '#' starts a comment to end of line.
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {}
    } else if (!std::isspace(c)) {
      break;
    }
  }
  if (c == EOF) throw std::runtime_error("corrupt PNM header in " + path);
  int v = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    any = true;
    c = is.get();
  }
  if (!any) throw std::runtime_error("corrupt PNM header in " + path);
  return v;
}

std::vector<unsigned char> read_pnm(const std::filesystem::path& path, int& h, int& w, int& ch) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open image " + path.string());
  char m0 = static_cast<char>(is.get());
  char m1 = static_cast<char>(is.get());
  if (m0 != 'P' || (m1 != '5' && m1 != '6'))
    throw std::runtime_error("unsupported image format in " + path.string() + " (expected P5/P6 PNM)");
  ch = (m1 == '6') ? 3 : 1;
  w = read_pnm_token(is, path.string());
  h = read_pnm_token(is, path.string());
  // the token reader consumes exactly one whitespace byte after maxval,
  // which is where the binary payload begins
  const int maxval = read_pnm_token(is, path.string());
  if (maxval != 255) throw std::runtime_error("unsupported maxval in " + path.string());
  std::vector<unsigned char> bytes(static_cast<size_t>(h) * w * ch);
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!is) throw std::runtime_error("truncated image data in " + path.string());
  return bytes;
}

void write_pnm(const std::filesystem::path& path, int h, int w, int ch, const float* px) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write image " + path.string());
  os << (ch == 3 ? "P6" : "P5") << '\n' << w << ' ' << h << '\n' << 255 << '\n';
  std::vector<unsigned char> bytes(static_cast<size_t>(h) * w * ch);
  for (size_t i = 0; i < bytes.size(); ++i) {
    const float v = std::clamp(px[i], 0.0f, 1.0f);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

Image Image::zeros(int h, int w, int c) {
  Image img;
  img.height = h;
  img.width = w;
  img.channels = c;
  img.pixels.assign(static_cast<size_t>(h) * w * c, 0.0f);
  return img;
}

bool Image::valid() const {
  if (height <= 0 || width <= 0 || (channels != 1 && channels != 3)) return false;
  if (pixels.size() != static_cast<size_t>(height) * width * channels) return false;
  return std::all_of(pixels.begin(), pixels.end(), [](float v) { return v >= 0.0f && v <= 1.0f; });
}

EdgeMap EdgeMap::zeros(int h, int w) {
  EdgeMap e;
  e.height = h;
  e.width = w;
  e.pixels.assign(static_cast<size_t>(h) * w, 0.0f);
  return e;
}

double EdgeMap::density() const {
  if (pixels.empty()) return 0.0;
  double s = 0.0;
  for (float v : pixels) s += v;
  return s / static_cast<double>(pixels.size());
}

Image load_image(const std::filesystem::path& path) {
  int h, w, ch;
  auto bytes = read_pnm(path, h, w, ch);
  Image img = Image::zeros(h, w, ch);
  for (size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = static_cast<float>(bytes[i]) / 255.0f;
  return img;
}

void save_image(const Image& img, const std::filesystem::path& path) {
  if (img.pixels.size() != static_cast<size_t>(img.height) * img.width * img.channels)
    throw std::invalid_argument("save_image: inconsistent image buffer");
  write_pnm(path, img.height, img.width, img.channels, img.pixels.data());
}

EdgeMap load_edge_map(const std::filesystem::path& path) {
  int h, w, ch;
  auto bytes = read_pnm(path, h, w, ch);
  if (ch != 1) throw std::runtime_error("edge map must be grayscale: " + path.string());
  EdgeMap e = EdgeMap::zeros(h, w);
  for (size_t i = 0; i < bytes.size(); ++i) e.pixels[i] = bytes[i] >= 128 ? 1.0f : 0.0f;
  return e;
}

void save_edge_map(const EdgeMap& edge, const std::filesystem::path& path) {
  std::vector<float> px(edge.pixels.size());
  for (size_t i = 0; i < px.size(); ++i) px[i] = edge.pixels[i] >= 0.5f ? 1.0f : 0.0f;
  write_pnm(path, edge.height, edge.width, 1, px.data());
}

Image resize(const Image& img, int target) {
  if (target < 1) throw std::invalid_argument("resize: target must be >= 1");
  if (img.height == target && img.width == target) return img;

  Image out = Image::zeros(target, target, img.channels);
  const double sy = static_cast<double>(img.height) / target;
  const double sx = static_cast<double>(img.width) / target;
  for (int y = 0; y < target; ++y) {
    const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
    const int y0 = std::min(static_cast<int>(fy), img.height - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < target; ++x) {
      const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
      const int x0 = std::min(static_cast<int>(fx), img.width - 1);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double top = (1.0 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c);
        const double bot = (1.0 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c);
        out.at(y, x, c) = static_cast<float>(std::clamp((1.0 - wy) * top + wy * bot, 0.0, 1.0));
      }
    }
  }
  return out;
}

Image to_grayscale(const Image& img) {
  if (img.channels == 1) return img;
  Image gray = Image::zeros(img.height, img.width, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      gray.at(y, x, 0) = 0.299f * img.at(y, x, 0) + 0.587f * img.at(y, x, 1) + 0.114f * img.at(y, x, 2);
  return gray;
}

}  // namespace inklab::vision
