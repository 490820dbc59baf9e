#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "bgaug/cachestore.hpp"
#include "bgaug/errors.hpp"
#include "bgaug/io_util.hpp"
#include "bgaug/synthgen.hpp"

using namespace bgaug;
namespace fs = std::filesystem;

namespace {

Dataset small_dataset(std::uint64_t seed = 1) {
  SynthConfig cfg;
  cfg.image_size = 16;
  cfg.n_train = 24;
  cfg.n_test = 1;
  cfg.seed = seed;
  return gen_dataset(cfg).train;
}

std::vector<std::uint8_t> slurp(const std::string& p) {
  return read_file_bytes(p);
}

}  // namespace

TEST_CASE("rle round-trips 1000 random masks") {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const int h = 1 + static_cast<int>(rng.uniform_index(20));
    const int w = 1 + static_cast<int>(rng.uniform_index(20));
    Mask m(h, w);
    const double density = rng.uniform();
    for (auto& b : m.bits) b = rng.bernoulli(density);
    auto runs = rle_encode(m);
    Mask back = rle_decode(runs.data(), runs.size(), h, w);
    CHECK(back.bits == m.bits);
  }
}

TEST_CASE("rle rejects malformed input") {
  Mask m(4, 4, 1);
  auto runs = rle_encode(m);
  CHECK_THROWS_AS(rle_decode(runs.data(), runs.size() - 1, 4, 4),
                  IntegrityError);
  CHECK_THROWS_AS(rle_decode(runs.data(), runs.size(), 3, 3),
                  IntegrityError);
  runs[1] += 64;  // runs now overflow the mask
  CHECK_THROWS_AS(rle_decode(runs.data(), runs.size(), 4, 4),
                  IntegrityError);
}

TEST_CASE("dataset_hash is order-sensitive and content-sensitive") {
  Dataset a = small_dataset();
  CHECK(dataset_hash(a) == dataset_hash(a));

  Dataset b = a;
  std::swap(b.samples[0], b.samples[1]);
  CHECK(dataset_hash(a) != dataset_hash(b));

  Dataset c = a;
  c.samples[3].image.data[10] += 0.001f;
  CHECK(dataset_hash(a) != dataset_hash(c));
}

TEST_CASE("build_cache round trip, idempotence, and integrity") {
  const std::string dir = "cachestore_test";
  fs::remove_all(dir);
  Dataset ds = small_dataset();

  CacheManifest m = build_cache(ds, dir, 1);
  REQUIRE(m.n_samples == 24);

  SUBCASE("load matches build inputs bit-exactly") {
    CacheStore cs = CacheStore::open(dir);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
      auto [mask, tiled] = cs.load_cached(static_cast<std::int64_t>(i));
      CHECK(mask.bits == ds.samples[i].mask.bits);
      CHECK(tiled.data == ds.samples[i].tiled_bg.data);
    }
    CHECK_THROWS_AS(cs.load_cached(24), IntegrityError);
    CHECK_THROWS_AS(cs.load_cached(-1), IntegrityError);
  }

  SUBCASE("rebuild is a no-op with identical manifest") {
    const auto before = slurp(dir + "/cache_manifest.json");
    CacheManifest again = build_cache(ds, dir, 1);
    CHECK(slurp(dir + "/cache_manifest.json") == before);
    CHECK(again.hash == m.hash);
  }

  SUBCASE("different dataset against existing cache is refused") {
    Dataset other = small_dataset(77);
    CHECK_THROWS_AS(build_cache(other, dir, 1), IntegrityError);
  }

  SUBCASE("workers do not change output bytes") {
    const std::string dir4 = dir + "_w4";
    fs::remove_all(dir4);
    build_cache(ds, dir4, 4);
    CHECK(slurp(dir4 + "/masks.bin") == slurp(dir + "/masks.bin"));
    CHECK(slurp(dir4 + "/tiled.bin") == slurp(dir + "/tiled.bin"));
    CHECK(slurp(dir4 + "/cache_manifest.json") ==
          slurp(dir + "/cache_manifest.json"));
    fs::remove_all(dir4);
  }

  SUBCASE("truncated tiled.bin raises an integrity error") {
    fs::resize_file(dir + "/tiled.bin", 100);
    CHECK_THROWS_AS(
        [&] {
          CacheStore cs = CacheStore::open(dir);
          cs.load_cached(5);
        }(),
        IntegrityError);
  }

  SUBCASE("corrupt rle stream names the sample") {
    std::fstream f(dir + "/masks.bin",
                   std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    std::uint32_t bad = 9999;
    f.write(reinterpret_cast<const char*>(&bad), 4);
    f.close();
    CacheStore cs = CacheStore::open(dir);
    try {
      cs.load_cached(0);
      FAIL("expected IntegrityError");
    } catch (const IntegrityError& e) {
      CHECK(std::string(e.what()).find("sample 0") != std::string::npos);
    }
  }

  fs::remove_all(dir);
}
