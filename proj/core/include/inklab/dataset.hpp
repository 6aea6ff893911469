#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "inklab/canny.hpp"
#include "inklab/image.hpp"
#include "inklab/rng.hpp"

namespace inklab::vision {

/// One training record: image, its edge map, and a text prompt (possibly
/// empty after dropout). Edge dimensions always match the image.
struct TripletSample {
  Image image;
  EdgeMap edge;
  std::string prompt;
};

struct ManifestRecord {
  std::string image_path;
  std::string edge_path;
  std::string prompt;
  std::string domain;  // "jiehua" or "other"
};

/// Line-oriented manifest: a header line "resolution\t<N>", then one
/// tab-separated record per line (image, edge, prompt, domain).
struct DatasetManifest {
  int resolution = 0;
  std::vector<ManifestRecord> records;

  static DatasetManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::vector<const ManifestRecord*> by_domain(const std::string& domain) const;
};

/// Returns "" with probability p, the prompt unchanged otherwise.
std::string prompt_dropout(const std::string& prompt, double p, Rng& rng);

/// Pattern -> artist mapping for directory ingestion. A record's prompt
/// becomes "<artist> style"; `pattern` matches as a filename substring.
struct ArtistRule {
  std::string pattern;
  std::string artist;
  std::string domain = "jiehua";
};

/// Ingest a directory of images: resize to `resolution`, run Canny, write
/// edge files next to the manifest, emit records in lexicographic path
/// order. An image no rule matches is an error.
DatasetManifest build_manifest(const std::filesystem::path& image_dir,
                               const std::vector<ArtistRule>& artists, int resolution,
                               const std::filesystem::path& out_dir,
                               const CannyParams& canny_params = {});

/// Procedural two-style corpus sharing one content distribution:
/// style A "ruled" (domain jiehua) draws axis-aligned line structures on a
/// light ground, style B "wash" (domain other) renders soft low-frequency
/// blobs at the same anchor layout. Writes images, edge files and the
/// manifest into out_dir.
DatasetManifest synth_style_corpus(int n_per_style, int resolution, Rng& rng,
                                   const std::filesystem::path& out_dir,
                                   const CannyParams& canny_params = {});

inline constexpr const char* kRuledArtist = "ruled";
inline constexpr const char* kWashArtist = "wash";

TripletSample load_triplet(const ManifestRecord& rec);
std::vector<TripletSample> load_all(const DatasetManifest& manifest);

}  // namespace inklab::vision
