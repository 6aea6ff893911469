#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "inklab/optim.hpp"
#include "inklab/params.hpp"

namespace inklab {

/// Versioned binary container: magic, format version, metadata block, name
/// table, then per-entry (shape, locked flag, little-endian f32 payload).
/// Round-trips are bitwise exact.
struct Checkpoint {
  struct Entry {
    std::string name;
    std::vector<int> shape;
    bool locked = false;
    std::vector<float> data;
  };

  std::map<std::string, std::string> meta;
  std::vector<Entry> entries;

  void put(const std::string& name, const Tensor& t, bool locked = false);
  const Entry* find(const std::string& name) const;

  /// Add every parameter of the registry under `prefix + name`.
  void add_registry(const ParamRegistry& reg, const std::string& prefix = "");
  /// Copy values (and locked flags) back into an existing registry whose
  /// layout matches; throws if an entry is missing or shaped differently.
  void restore_registry(ParamRegistry& reg, const std::string& prefix = "") const;

  /// Optimizer moments plus step count, stored as `opt.<prefix>m.<param>` /
  /// `opt.<prefix>v.<param>` entries and an `opt.<prefix>steps` meta key.
  void add_optimizer(const Adam& opt, const std::string& prefix = "");
  void restore_optimizer(Adam& opt, const std::string& prefix = "") const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Write text to a temp file in the same directory, then rename into place.
void atomic_write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace inklab
