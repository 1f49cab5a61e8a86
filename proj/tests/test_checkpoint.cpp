#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "lazyrec/checkpoint.hpp"

using namespace lazyrec;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "lazyrec_test_checkpoint";
  fs::create_directories(dir);
  return dir / name;
}

ModelConfig moe_config() {
  ModelConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_head = 4;
  c.g_kv = 1;
  c.n_layers = 3;
  c.vocab = 5;
  c.context_len = 2;
  c.context_input_dim = 3;
  c.moe = MoeConfig{4, 1, 2, 6, 1};
  return c;
}

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("save and load round-trips parameters, router biases and config bitwise") {
    LazyDecoder m(moe_config(), 17);
    m.router_biases().at(2)[1] = -0.125;
    const fs::path path = scratch("roundtrip.ckpt");
    save_model(path, m);
    LazyDecoder back = load_model(path);
    CHECK(back.config() == m.config());
    REQUIRE(back.params().names() == m.params().names());
    for (std::size_t i = 0; i < m.params().vars().size(); ++i) {
      CHECK(back.params().vars()[i].value() == m.params().vars()[i].value());
    }
    CHECK(back.router_biases() == m.router_biases());
  }

  TEST_CASE("tensor values survive exactly, including awkward doubles") {
    CheckpointData d;
    d.config = moe_config();
    d.tensors["x"] = Array(Shape{2, 2}, {0.1, -0.0, 1e-300, 123456789.123456789});
    const fs::path path = scratch("raw.ckpt");
    write_checkpoint(path, d);
    CheckpointData r = read_checkpoint(path);
    CHECK(r.tensors.at("x") == d.tensors.at("x"));
    CHECK(std::signbit(r.tensors.at("x")[1]));
  }

  TEST_CASE("corrupt and mismatched files are rejected") {
    const fs::path bad = scratch("bad.ckpt");
    std::ofstream(bad) << "not a checkpoint";
    CHECK_THROWS_AS(read_checkpoint(bad), CheckpointError);
    CHECK_THROWS_AS(read_checkpoint(scratch("missing.ckpt")), CheckpointError);

    LazyDecoder m(moe_config(), 1);
    const fs::path good = scratch("good.ckpt");
    save_model(good, m);
    const auto size = fs::file_size(good);
    fs::resize_file(good, size - 9);
    CHECK_THROWS_AS(read_checkpoint(good), CheckpointError);

    ModelConfig other = moe_config();
    other.vocab = 6;
    LazyDecoder m2(other, 1);
    CHECK_THROWS_AS(restore(m2, snapshot(m)), CheckpointError);

    CheckpointData extra = snapshot(m);
    extra.tensors.emplace("blocks.0.cross_attn.k", Array(Shape{2}));
    CHECK_THROWS_AS(restore(m, extra), CheckpointError);
    CheckpointData missing = snapshot(m);
    missing.tensors.erase("embed");
    CHECK_THROWS_AS(restore(m, missing), CheckpointError);
    CheckpointData shape = snapshot(m);
    shape.tensors.at("embed") = Array(Shape{1});
    CHECK_THROWS_AS(restore(m, shape), CheckpointError);
  }
}
