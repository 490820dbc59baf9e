#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bgaug/dataset.hpp"

namespace bgaug {

// Run-length codec for binary masks. Encoding: u32 run count followed by u32
// run lengths, alternating 0-runs and 1-runs, starting with the 0-run (which
// may be length zero).
std::vector<std::uint32_t> rle_encode(const Mask& mask);
Mask rle_decode(const std::uint32_t* runs, std::size_t n_words, int height,
                int width);

// Order-sensitive digest of all sample pixel bytes in manifest order.
std::uint64_t dataset_hash(const Dataset& ds);

struct CacheRecord {
  std::uint64_t mask_offset = 0;   // bytes into masks.bin
  std::uint64_t mask_len = 0;      // bytes
  std::uint64_t tiled_offset = 0;  // bytes into tiled.bin
  std::uint64_t tiled_len = 0;     // bytes
  int height = 0;
  int width = 0;
  int channels = 0;
};

struct CacheManifest {
  int version = 1;
  std::uint64_t hash = 0;
  std::int64_t n_samples = 0;
  std::vector<CacheRecord> records;
};

// Computes every sample's tiled background (in parallel across `workers`
// threads, assembled in id order so output bytes never depend on the worker
// count), RLE-encodes masks, and writes cache_manifest.json + masks.bin +
// tiled.bin into out_dir. Rebuilding over a valid cache for the same dataset
// is a no-op; a cache built from different data makes it refuse.
CacheManifest build_cache(const Dataset& ds, const std::string& out_dir,
                          int workers);

// Read-only view of a built cache, fully resident after open.
class CacheStore {
 public:
  static CacheStore open(const std::string& dir);

  // decoded mask + tiled background, bit-exact with build-time values
  std::pair<Mask, Image> load_cached(std::int64_t sample_id) const;

  const CacheManifest& manifest() const { return manifest_; }

 private:
  CacheManifest manifest_;
  std::vector<std::uint8_t> mask_bytes_;
  std::vector<std::uint8_t> tiled_bytes_;
};

}  // namespace bgaug
