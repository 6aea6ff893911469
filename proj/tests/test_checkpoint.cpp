#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "inklab/checkpoint.hpp"

using namespace inklab;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const auto dir = fs::temp_directory_path() / "inklab_ckpt_test";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("checkpoint round-trips parameters bitwise") {
  ParamRegistry reg;
  Rng rng(77);
  reg.create("a.w", {3, 4}, 1.0f, rng);
  reg.create("a.b", {4}, 1.0f, rng);
  reg.create("deep.block.w", {2, 2, 3, 3}, 0.3f, rng);
  reg.find("a.b")->set_locked(true);

  Checkpoint out;
  out.meta["variant"] = "test";
  out.meta["rng"] = rng.state_hex();
  out.add_registry(reg, "m.");

  const fs::path path = temp_dir() / "roundtrip.ckpt";
  save_checkpoint(path, out);
  const Checkpoint in = load_checkpoint(path);

  CHECK(in.meta.at("variant") == "test");
  CHECK(in.meta.at("rng") == rng.state_hex());

  ParamRegistry reg2;
  Rng rng2(1);  // different values, overwritten by restore
  reg2.create("a.w", {3, 4}, 1.0f, rng2);
  reg2.create("a.b", {4}, 1.0f, rng2);
  reg2.create("deep.block.w", {2, 2, 3, 3}, 0.3f, rng2);
  in.restore_registry(reg2, "m.");

  for (size_t i = 0; i < reg.size(); ++i) {
    CHECK(reg.params()[i].value.data() == reg2.params()[i].value.data());
    CHECK(reg.params()[i].locked == reg2.params()[i].locked);
  }

  // the file itself is byte-stable for identical content
  Checkpoint again;
  again.meta = out.meta;
  again.entries = out.entries;
  const fs::path path2 = temp_dir() / "roundtrip2.ckpt";
  save_checkpoint(path2, again);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
}

TEST_CASE("checkpoint restores optimizer moments and step count") {
  ParamRegistry reg;
  Rng rng(5);
  Tensor w = reg.create("w", {4}, 1.0f, rng);
  Adam opt(reg);
  for (int i = 0; i < 3; ++i) {
    Tape tape;
    backward(mse(w, Tensor::zeros({4})));
    opt.step(0.01);
  }

  Checkpoint ckpt;
  ckpt.add_registry(reg);
  ckpt.add_optimizer(opt);
  const fs::path path = temp_dir() / "opt.ckpt";
  save_checkpoint(path, ckpt);

  ParamRegistry reg2;
  Rng rng2(6);
  reg2.create("w", {4}, 1.0f, rng2);
  Adam opt2(reg2);
  const Checkpoint in = load_checkpoint(path);
  in.restore_registry(reg2);
  in.restore_optimizer(opt2);

  CHECK(opt2.step_count() == 3);
  REQUIRE(opt2.slots().size() == opt.slots().size());
  CHECK(opt2.slots()[0].m == opt.slots()[0].m);
  CHECK(opt2.slots()[0].v == opt.slots()[0].v);
}

TEST_CASE("loading rejects missing files, bad magic and shape mismatches") {
  CHECK_THROWS_AS(load_checkpoint(temp_dir() / "nope.ckpt"), std::runtime_error);

  const fs::path bad = temp_dir() / "bad.ckpt";
  std::ofstream(bad, std::ios::binary) << "NOTMAGIC and then some";
  CHECK_THROWS_AS(load_checkpoint(bad), std::runtime_error);

  ParamRegistry reg;
  Rng rng(5);
  reg.create("w", {4}, 1.0f, rng);
  Checkpoint ckpt;
  ckpt.add_registry(reg);
  const fs::path path = temp_dir() / "shape.ckpt";
  save_checkpoint(path, ckpt);

  ParamRegistry other;
  Rng rng2(5);
  other.create("w", {5}, 1.0f, rng2);
  const Checkpoint in = load_checkpoint(path);
  CHECK_THROWS_AS(in.restore_registry(other), std::runtime_error);
}
