#include "inklab/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace inklab {

namespace {

constexpr char kMagic[8] = {'I', 'N', 'K', 'C', 'K', 'P', 'T', '\0'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_str(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::istream& is) {
  const uint32_t n = read_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw std::runtime_error("checkpoint: truncated string");
  return s;
}

void write_f32(std::ostream& os, const std::vector<float>& v) {
  // Little-endian on every supported platform; byte-swap would go here for
  // big-endian hosts.
  static_assert(sizeof(float) == 4);
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 4));
}

}  // namespace

void Checkpoint::put(const std::string& name, const Tensor& t, bool locked) {
  entries.push_back(Entry{name, t.shape(), locked, t.data()});
}

const Checkpoint::Entry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

void Checkpoint::add_registry(const ParamRegistry& reg, const std::string& prefix) {
  for (const auto& p : reg.params()) put(prefix + p.name, p.value, p.locked);
}

void Checkpoint::restore_registry(ParamRegistry& reg, const std::string& prefix) const {
  for (auto& p : reg.params()) {
    const Entry* e = find(prefix + p.name);
    if (!e) throw std::runtime_error("checkpoint: missing parameter " + prefix + p.name);
    if (e->shape != p.value.shape())
      throw std::runtime_error("checkpoint: shape mismatch for " + p.name + ": stored " +
                               shape_str(e->shape) + " vs model " + shape_str(p.value.shape()));
    p.value.data() = e->data;
    p.set_locked(e->locked);
  }
}

void Checkpoint::add_optimizer(const Adam& opt, const std::string& prefix) {
  for (const auto& s : opt.slots()) {
    entries.push_back(Entry{"opt." + prefix + "m." + s.param->name, s.param->value.shape(), false, s.m});
    entries.push_back(Entry{"opt." + prefix + "v." + s.param->name, s.param->value.shape(), false, s.v});
  }
  meta["opt." + prefix + "steps"] = std::to_string(opt.step_count());
}

void Checkpoint::restore_optimizer(Adam& opt, const std::string& prefix) const {
  for (auto& s : opt.slots()) {
    const Entry* m = find("opt." + prefix + "m." + s.param->name);
    const Entry* v = find("opt." + prefix + "v." + s.param->name);
    if (!m || !v) throw std::runtime_error("checkpoint: missing optimizer state for " + s.param->name);
    s.m = m->data;
    s.v = v->data;
  }
  auto it = meta.find("opt." + prefix + "steps");
  if (it == meta.end()) throw std::runtime_error("checkpoint: missing optimizer step count");
  opt.set_step_count(std::stoll(it->second));
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto tmp = path.parent_path() / (path.filename().string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot write " + path.string());
    os.write(kMagic, sizeof(kMagic));
    write_u32(os, kVersion);

    write_u32(os, static_cast<uint32_t>(ckpt.meta.size()));
    for (const auto& [k, v] : ckpt.meta) {
      write_str(os, k);
      write_str(os, v);
    }

    write_u32(os, static_cast<uint32_t>(ckpt.entries.size()));
    for (const auto& e : ckpt.entries) write_str(os, e.name);
    for (const auto& e : ckpt.entries) {
      write_u32(os, static_cast<uint32_t>(e.shape.size()));
      for (int d : e.shape) write_u32(os, static_cast<uint32_t>(d));
      os.put(e.locked ? 1 : 0);
      write_f32(os, e.data);
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  const uint32_t version = read_u32(is);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));

  Checkpoint ckpt;
  const uint32_t nmeta = read_u32(is);
  for (uint32_t i = 0; i < nmeta; ++i) {
    std::string k = read_str(is);
    ckpt.meta[k] = read_str(is);
  }

  const uint32_t n = read_u32(is);
  std::vector<std::string> names(n);
  for (auto& name : names) name = read_str(is);
  for (uint32_t i = 0; i < n; ++i) {
    Checkpoint::Entry e;
    e.name = names[i];
    const uint32_t ndim = read_u32(is);
    int64_t numel = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      e.shape.push_back(static_cast<int>(read_u32(is)));
      numel *= e.shape.back();
    }
    e.locked = is.get() == 1;
    e.data.resize(static_cast<size_t>(numel));
    is.read(reinterpret_cast<char*>(e.data.data()), numel * 4);
    if (!is) throw std::runtime_error("checkpoint: truncated tensor data in " + path.string());
    ckpt.entries.push_back(std::move(e));
  }
  return ckpt;
}

void atomic_write_text(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = path.parent_path() / (path.filename().string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace inklab
