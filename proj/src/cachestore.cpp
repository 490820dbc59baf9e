#include "bgaug/cachestore.hpp"

#include <atomic>
#include <cstring>
#include <filesystem>
#include <thread>

#include <json.hpp>

#include "bgaug/errors.hpp"
#include "bgaug/io_util.hpp"

namespace bgaug {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::uint32_t> rle_encode(const Mask& mask) {
  std::vector<std::uint32_t> runs;
  std::uint8_t cur = 0;  // runs always start with the 0-run
  std::uint32_t len = 0;
  for (auto b : mask.bits) {
    if (b == cur) {
      ++len;
    } else {
      runs.push_back(len);
      cur = b;
      len = 1;
    }
  }
  runs.push_back(len);
  runs.insert(runs.begin(), static_cast<std::uint32_t>(runs.size()));
  return runs;
}

Mask rle_decode(const std::uint32_t* runs, std::size_t n_words, int height,
                int width) {
  if (n_words < 1 || runs[0] != n_words - 1) {
    throw IntegrityError("rle_decode: header/word-count mismatch");
  }
  Mask m(height, width);
  std::size_t pos = 0;
  std::uint8_t val = 0;
  for (std::size_t i = 1; i < n_words; ++i) {
    const std::uint32_t len = runs[i];
    if (pos + len > m.bits.size()) {
      throw IntegrityError("rle_decode: runs exceed mask size");
    }
    if (val) std::memset(m.bits.data() + pos, 1, len);
    pos += len;
    val ^= 1;
  }
  if (pos != m.bits.size()) {
    throw IntegrityError("rle_decode: runs do not cover mask");
  }
  return m;
}

std::uint64_t dataset_hash(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& s : ds.samples) {
    h = fnv1a64(s.image.data.data(), s.image.data.size() * sizeof(float), h);
    h = fnv1a64(s.mask.bits.data(), s.mask.bits.size(), h);
  }
  return h;
}

namespace {

json manifest_to_json(const CacheManifest& m) {
  json j;
  j["schema_version"] = 1;
  j["kind"] = "bgaug-cache";
  j["version"] = m.version;
  j["dataset_hash"] = m.hash;
  j["n_samples"] = m.n_samples;
  json recs = json::array();
  for (const auto& r : m.records) {
    recs.push_back({{"mask_offset", r.mask_offset},
                    {"mask_len", r.mask_len},
                    {"tiled_offset", r.tiled_offset},
                    {"tiled_len", r.tiled_len},
                    {"height", r.height},
                    {"width", r.width},
                    {"channels", r.channels}});
  }
  j["records"] = std::move(recs);
  return j;
}

CacheManifest manifest_from_json(const json& j) {
  CacheManifest m;
  try {
    if (j.at("kind").get<std::string>() != "bgaug-cache") {
      throw IntegrityError("not a cache manifest");
    }
    m.version = j.at("version").get<int>();
    m.hash = j.at("dataset_hash").get<std::uint64_t>();
    m.n_samples = j.at("n_samples").get<std::int64_t>();
    for (const auto& r : j.at("records")) {
      CacheRecord c;
      c.mask_offset = r.at("mask_offset").get<std::uint64_t>();
      c.mask_len = r.at("mask_len").get<std::uint64_t>();
      c.tiled_offset = r.at("tiled_offset").get<std::uint64_t>();
      c.tiled_len = r.at("tiled_len").get<std::uint64_t>();
      c.height = r.at("height").get<int>();
      c.width = r.at("width").get<int>();
      c.channels = r.at("channels").get<int>();
      m.records.push_back(c);
    }
  } catch (const json::exception& e) {
    throw IntegrityError("bad cache manifest: " + std::string(e.what()));
  }
  if (m.n_samples != static_cast<std::int64_t>(m.records.size())) {
    throw IntegrityError("cache manifest record count mismatch");
  }
  return m;
}

}  // namespace

CacheManifest build_cache(const Dataset& ds, const std::string& out_dir,
                          int workers) {
  if (ds.samples.empty()) throw ConfigError("build_cache: empty dataset");
  if (workers < 1) workers = 1;
  const std::uint64_t hash = dataset_hash(ds);

  const std::string manifest_path = out_dir + "/cache_manifest.json";
  if (fs::exists(manifest_path)) {
    CacheManifest existing =
        manifest_from_json(json::parse(read_file_text(manifest_path)));
    if (existing.hash != hash) {
      throw IntegrityError(
          "build_cache: existing cache was built from different data "
          "(dataset_hash mismatch); remove " +
          out_dir + " to rebuild");
    }
    return existing;  // valid cache already present, no-op
  }
  fs::create_directories(out_dir);

  const std::size_t n = ds.samples.size();
  std::vector<std::vector<std::uint32_t>> rle(n);
  std::vector<Image> tiled(n);

  // parallel per-sample compute; results land in per-id slots so assembly
  // order below is independent of scheduling
  const int nthreads = std::min<std::size_t>(workers, n);
  std::vector<std::thread> pool;
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      rle[i] = rle_encode(ds.samples[i].mask);
      tiled[i] = tiled_background(ds.samples[i].image, ds.samples[i].mask);
    }
  };
  for (int t = 1; t < nthreads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  CacheManifest m;
  m.hash = hash;
  m.n_samples = static_cast<std::int64_t>(n);

  std::vector<std::uint8_t> mask_bytes;
  std::vector<float> tiled_floats;
  for (std::size_t i = 0; i < n; ++i) {
    CacheRecord r;
    r.height = ds.samples[i].mask.height;
    r.width = ds.samples[i].mask.width;
    r.channels = ds.samples[i].image.channels;
    r.mask_offset = mask_bytes.size();
    r.mask_len = rle[i].size() * sizeof(std::uint32_t);
    r.tiled_offset = tiled_floats.size() * sizeof(float);
    r.tiled_len = tiled[i].data.size() * sizeof(float);
    const auto* p = reinterpret_cast<const std::uint8_t*>(rle[i].data());
    mask_bytes.insert(mask_bytes.end(), p, p + r.mask_len);
    tiled_floats.insert(tiled_floats.end(), tiled[i].data.begin(),
                        tiled[i].data.end());
    m.records.push_back(r);
  }

  try {
    write_file_bytes(out_dir + "/masks.bin", mask_bytes.data(),
                     mask_bytes.size());
    write_file_bytes(out_dir + "/tiled.bin", tiled_floats.data(),
                     tiled_floats.size() * sizeof(float));
    write_file_text(manifest_path, manifest_to_json(m).dump(2) + "\n");
  } catch (...) {
    // never leave a half-written cache behind
    std::error_code ec;
    fs::remove(out_dir + "/masks.bin", ec);
    fs::remove(out_dir + "/tiled.bin", ec);
    fs::remove(manifest_path, ec);
    throw;
  }
  return m;
}

CacheStore CacheStore::open(const std::string& dir) {
  const std::string manifest_path = dir + "/cache_manifest.json";
  if (!fs::exists(manifest_path)) {
    throw IntegrityError("no cache_manifest.json in " + dir);
  }
  json j;
  try {
    j = json::parse(read_file_text(manifest_path));
  } catch (const json::exception& e) {
    throw IntegrityError("bad cache manifest: " + std::string(e.what()));
  }
  CacheStore cs;
  cs.manifest_ = manifest_from_json(j);
  cs.mask_bytes_ = read_file_bytes(dir + "/masks.bin");
  cs.tiled_bytes_ = read_file_bytes(dir + "/tiled.bin");
  return cs;
}

std::pair<Mask, Image> CacheStore::load_cached(std::int64_t sample_id) const {
  if (sample_id < 0 || sample_id >= manifest_.n_samples) {
    throw IntegrityError("load_cached: sample id " +
                         std::to_string(sample_id) + " out of range");
  }
  const CacheRecord& r = manifest_.records[static_cast<std::size_t>(sample_id)];
  const std::string tag = " (sample " + std::to_string(sample_id) + ")";

  if (r.mask_offset + r.mask_len > mask_bytes_.size() ||
      r.mask_len % sizeof(std::uint32_t) != 0) {
    throw IntegrityError("load_cached: mask record outside masks.bin" + tag);
  }
  std::vector<std::uint32_t> runs(r.mask_len / sizeof(std::uint32_t));
  std::memcpy(runs.data(), mask_bytes_.data() + r.mask_offset, r.mask_len);
  Mask mask;
  try {
    mask = rle_decode(runs.data(), runs.size(), r.height, r.width);
  } catch (const IntegrityError& e) {
    throw IntegrityError(std::string(e.what()) + tag);
  }

  const std::size_t want =
      static_cast<std::size_t>(r.height) * r.width * r.channels *
      sizeof(float);
  if (r.tiled_len != want ||
      r.tiled_offset + r.tiled_len > tiled_bytes_.size()) {
    throw IntegrityError("load_cached: tiled record length mismatch" + tag);
  }
  Image tiled(r.height, r.width, r.channels);
  std::memcpy(tiled.data.data(), tiled_bytes_.data() + r.tiled_offset,
              r.tiled_len);
  return {std::move(mask), std::move(tiled)};
}

}  // namespace bgaug
