#include "inklab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace inklab::vision {

namespace fs = std::filesystem;

DatasetManifest DatasetManifest::load(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open manifest " + path.string());
  DatasetManifest m;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty manifest " + path.string());
  {
    std::istringstream hs(line);
    std::string key;
    if (!std::getline(hs, key, '\t') || key != "resolution" || !(hs >> m.resolution))
      throw std::runtime_error("manifest header must be 'resolution\\t<N>': " + path.string());
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestRecord r;
    if (!std::getline(ls, r.image_path, '\t') || !std::getline(ls, r.edge_path, '\t') ||
        !std::getline(ls, r.prompt, '\t') || !std::getline(ls, r.domain))
      throw std::runtime_error("malformed manifest record: " + line);
    m.records.push_back(std::move(r));
  }
  return m;
}

void DatasetManifest::save(const fs::path& path) const {
  std::ostringstream os;
  os << "resolution\t" << resolution << '\n';
  for (const auto& r : records)
    os << r.image_path << '\t' << r.edge_path << '\t' << r.prompt << '\t' << r.domain << '\n';
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write manifest " + path.string());
  f << os.str();
}

std::vector<const ManifestRecord*> DatasetManifest::by_domain(const std::string& domain) const {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : records)
    if (r.domain == domain) out.push_back(&r);
  return out;
}

std::string prompt_dropout(const std::string& prompt, double p, Rng& rng) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("prompt_dropout: p must be in [0,1]");
  return rng.uniform() < p ? std::string() : prompt;
}

TripletSample load_triplet(const ManifestRecord& rec) {
  TripletSample s;
  s.image = load_image(rec.image_path);
  s.edge = load_edge_map(rec.edge_path);
  s.prompt = rec.prompt;
  if (s.edge.height != s.image.height || s.edge.width != s.image.width)
    throw std::runtime_error("triplet image/edge size mismatch for " + rec.image_path);
  return s;
}

std::vector<TripletSample> load_all(const DatasetManifest& manifest) {
  std::vector<TripletSample> out;
  out.reserve(manifest.records.size());
  for (const auto& r : manifest.records) out.push_back(load_triplet(r));
  return out;
}

DatasetManifest build_manifest(const fs::path& image_dir, const std::vector<ArtistRule>& artists,
                               int resolution, const fs::path& out_dir,
                               const CannyParams& canny_params) {
  if (!fs::is_directory(image_dir))
    throw std::runtime_error("build_manifest: not a directory: " + image_dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(image_dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("build_manifest: no images in " + image_dir.string());

  fs::create_directories(out_dir);
  DatasetManifest m;
  m.resolution = resolution;
  for (const auto& f : files) {
    const std::string name = f.filename().string();
    const ArtistRule* rule = nullptr;
    for (const auto& a : artists)
      if (name.find(a.pattern) != std::string::npos) {
        rule = &a;
        break;
      }
    if (!rule) throw std::runtime_error("build_manifest: no artist rule matches " + f.string());

    Image img = resize(load_image(f), resolution);
    EdgeMap edge = canny(img, canny_params);

    const fs::path img_out = out_dir / (f.stem().string() + ".ppm");
    const fs::path edge_out = out_dir / (f.stem().string() + "_edge.pgm");
    save_image(img, img_out);
    save_edge_map(edge, edge_out);
    m.records.push_back(
        ManifestRecord{img_out.string(), edge_out.string(), rule->artist + " style", rule->domain});
  }
  return m;
}

namespace {

void draw_hline(Image& img, int y, int x0, int x1, int thickness, float shade) {
  for (int t = 0; t < thickness; ++t) {
    const int yy = y + t;
    if (yy < 0 || yy >= img.height) continue;
    for (int x = std::max(0, x0); x <= std::min(img.width - 1, x1); ++x)
      for (int c = 0; c < img.channels; ++c) img.at(yy, x, c) = shade;
  }
}

void draw_vline(Image& img, int x, int y0, int y1, int thickness, float shade) {
  for (int t = 0; t < thickness; ++t) {
    const int xx = x + t;
    if (xx < 0 || xx >= img.width) continue;
    for (int y = std::max(0, y0); y <= std::min(img.height - 1, y1); ++y)
      for (int c = 0; c < img.channels; ++c) img.at(y, xx, c) = shade;
  }
}

struct Anchor {
  int x, y, w, h;
};

std::vector<Anchor> sample_anchors(int res, Rng& rng) {
  const int n = 3 + static_cast<int>(rng.uniform_int(3));
  std::vector<Anchor> anchors;
  for (int i = 0; i < n; ++i) {
    Anchor a;
    a.w = res / 6 + static_cast<int>(rng.uniform_int(res / 3));
    a.h = res / 6 + static_cast<int>(rng.uniform_int(res / 3));
    a.x = static_cast<int>(rng.uniform_int(std::max(1, res - a.w)));
    a.y = static_cast<int>(rng.uniform_int(std::max(1, res - a.h)));
    anchors.push_back(a);
  }
  return anchors;
}

// Ruled style: pavilion-like rectangles with interior grids, dark strokes
// on warm paper.
Image render_ruled(int res, const std::vector<Anchor>& anchors, Rng& rng) {
  Image img = Image::zeros(res, res, 3);
  const float paper = 0.86f + static_cast<float>(rng.uniform(0.0, 0.08));
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      img.at(y, x, 0) = paper;
      img.at(y, x, 1) = paper - 0.03f;
      img.at(y, x, 2) = paper - 0.08f;
    }
  const float ink = 0.08f + static_cast<float>(rng.uniform(0.0, 0.08));
  // ground line
  draw_hline(img, res - 1 - static_cast<int>(rng.uniform_int(res / 8)), 0, res - 1, 1, ink);
  for (const auto& a : anchors) {
    draw_hline(img, a.y, a.x, a.x + a.w, 1, ink);
    draw_hline(img, a.y + a.h, a.x, a.x + a.w, 1, ink);
    draw_vline(img, a.x, a.y, a.y + a.h, 1, ink);
    draw_vline(img, a.x + a.w, a.y, a.y + a.h, 1, ink);
    // interior beams
    const int pitch = 3 + static_cast<int>(rng.uniform_int(4));
    for (int x = a.x + pitch; x < a.x + a.w; x += pitch) draw_vline(img, x, a.y, a.y + a.h, 1, ink);
    if (rng.uniform() < 0.5) {
      const int mid = a.y + a.h / 2;
      draw_hline(img, mid, a.x, a.x + a.w, 1, ink);
    }
    // roof line
    draw_hline(img, a.y - 2, a.x - 2, a.x + a.w + 2, 1, ink);
  }
  return img;
}

// Wash style: soft radial blobs at the same anchors over a pale ground.
Image render_wash(int res, const std::vector<Anchor>& anchors, Rng& rng) {
  Image img = Image::zeros(res, res, 3);
  const float base = 0.78f + static_cast<float>(rng.uniform(0.0, 0.1));
  const double phase = rng.uniform(0.0, 6.28318);
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      const float sway = 0.04f * static_cast<float>(std::sin(2.0 * std::numbers::pi * y /
                                                                 static_cast<double>(res) +
                                                             phase));
      img.at(y, x, 0) = base + sway - 0.05f;
      img.at(y, x, 1) = base + sway;
      img.at(y, x, 2) = base + sway - 0.02f;
    }
  for (const auto& a : anchors) {
    const double cx = a.x + a.w / 2.0, cy = a.y + a.h / 2.0;
    const double radius = 0.6 * std::max(a.w, a.h) + 2.0;
    const double amp = rng.uniform(0.25, 0.5);
    const double gtint = rng.uniform(0.0, 0.15);
    for (int y = 0; y < res; ++y)
      for (int x = 0; x < res; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        const double fall = amp * std::exp(-d2 / (2.0 * radius * radius));
        img.at(y, x, 0) = std::clamp(img.at(y, x, 0) - static_cast<float>(fall), 0.0f, 1.0f);
        img.at(y, x, 1) = std::clamp(img.at(y, x, 1) - static_cast<float>(fall * (1.0 - gtint)), 0.0f, 1.0f);
        img.at(y, x, 2) = std::clamp(img.at(y, x, 2) - static_cast<float>(fall * 0.8), 0.0f, 1.0f);
      }
  }
  return img;
}

}  // namespace

DatasetManifest synth_style_corpus(int n_per_style, int resolution, Rng& rng,
                                   const fs::path& out_dir, const CannyParams& canny_params) {
  if (n_per_style < 1) throw std::invalid_argument("synth_style_corpus: n_per_style must be >= 1");
  fs::create_directories(out_dir);

  DatasetManifest m;
  m.resolution = resolution;
  char buf[64];
  for (int i = 0; i < n_per_style; ++i) {
    for (int style = 0; style < 2; ++style) {
      const auto anchors = sample_anchors(resolution, rng);
      const bool ruled = style == 0;
      Image img = ruled ? render_ruled(resolution, anchors, rng) : render_wash(resolution, anchors, rng);
      EdgeMap edge = canny(img, canny_params);

      std::snprintf(buf, sizeof(buf), "%s_%03d", ruled ? "ruled" : "wash", i);
      const fs::path img_out = out_dir / (std::string(buf) + ".ppm");
      const fs::path edge_out = out_dir / (std::string(buf) + "_edge.pgm");
      save_image(img, img_out);
      save_edge_map(edge, edge_out);
      m.records.push_back(ManifestRecord{img_out.string(), edge_out.string(),
                                         std::string(ruled ? kRuledArtist : kWashArtist) + " style",
                                         ruled ? "jiehua" : "other"});
    }
  }
  // lexicographic record order, matching build_manifest
  std::sort(m.records.begin(), m.records.end(),
            [](const ManifestRecord& a, const ManifestRecord& b) { return a.image_path < b.image_path; });
  return m;
}

}  // namespace inklab::vision
