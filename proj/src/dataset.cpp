#include "bgaug/dataset.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "bgaug/errors.hpp"
#include "bgaug/io_util.hpp"

namespace bgaug {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IntegrityError("cannot open " + path);
  f.seekg(0, std::ios::end);
  const auto len = static_cast<std::size_t>(f.tellg());
  f.seekg(0);
  std::vector<std::uint8_t> buf(len);
  if (len && !f.read(reinterpret_cast<char*>(buf.data()),
                     static_cast<std::streamsize>(len))) {
    throw IntegrityError("short read on " + path);
  }
  return buf;
}

void write_file_bytes(const std::string& path, const void* data,
                      std::size_t len) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f ||
      !f.write(static_cast<const char*>(data),
               static_cast<std::streamsize>(len))) {
    throw IntegrityError("cannot write " + path);
  }
}

std::string read_file_text(const std::string& path) {
  auto b = read_file_bytes(path);
  return std::string(b.begin(), b.end());
}

void write_file_text(const std::string& path, const std::string& text) {
  write_file_bytes(path, text.data(), text.size());
}

void save_dataset(const Dataset& ds, const std::string& dir,
                  const std::string& config_json) {
  if (ds.samples.empty()) throw ConfigError("save_dataset: empty dataset");
  fs::create_directories(dir);

  const Image& first = ds.samples.front().image;
  const int h = first.height, w = first.width, c = first.channels;
  const std::size_t img_floats = static_cast<std::size_t>(h) * w * c;
  const std::size_t mask_bytes = static_cast<std::size_t>(h) * w;

  std::vector<float> images, tiled;
  std::vector<std::uint8_t> masks;
  images.reserve(img_floats * ds.samples.size());
  tiled.reserve(img_floats * ds.samples.size());
  masks.reserve(mask_bytes * ds.samples.size());

  json records = json::array();
  for (const auto& s : ds.samples) {
    if (s.image.height != h || s.image.width != w || s.image.channels != c ||
        !s.tiled_bg.same_shape(s.image) || s.mask.height != h ||
        s.mask.width != w) {
      throw ConfigError("save_dataset: inconsistent sample shapes");
    }
    json r;
    r["id"] = s.id;
    r["fg_class"] = s.fg_class;
    r["bg_class"] = s.bg_class;
    r["image_offset"] = images.size() * sizeof(float);
    r["mask_offset"] = masks.size();
    r["tiled_offset"] = tiled.size() * sizeof(float);
    records.push_back(std::move(r));
    images.insert(images.end(), s.image.data.begin(), s.image.data.end());
    tiled.insert(tiled.end(), s.tiled_bg.data.begin(), s.tiled_bg.data.end());
    masks.insert(masks.end(), s.mask.bits.begin(), s.mask.bits.end());
  }

  write_file_bytes(dir + "/images.bin", images.data(),
                   images.size() * sizeof(float));
  write_file_bytes(dir + "/masks.bin", masks.data(), masks.size());
  write_file_bytes(dir + "/tiled.bin", tiled.data(),
                   tiled.size() * sizeof(float));

  json m;
  m["schema_version"] = 1;
  m["kind"] = "bgaug-dataset";
  m["height"] = h;
  m["width"] = w;
  m["channels"] = c;
  m["n_samples"] = ds.samples.size();
  m["n_fg_classes"] = ds.n_fg_classes;
  m["n_bg_classes"] = ds.n_bg_classes;
  m["fg_class_names"] = ds.fg_class_names;
  m["bg_class_names"] = ds.bg_class_names;
  m["config"] = json::parse(config_json);
  m["samples"] = std::move(records);
  write_file_text(dir + "/manifest.json", m.dump(2) + "\n");
}

namespace {

void check_values(const Image& img, std::int64_t id, const char* what) {
  for (float v : img.data) {
    if (!std::isfinite(v) || v < 0.f || v > 1.f) {
      throw IntegrityError("sample " + std::to_string(id) + ": " + what +
                           " value outside [0,1]");
    }
  }
}

}  // namespace

Dataset load_dataset(const std::string& dir, std::string* config_json_out) {
  if (!fs::exists(dir + "/manifest.json")) {
    throw IntegrityError("no manifest.json in " + dir);
  }
  json m;
  try {
    m = json::parse(read_file_text(dir + "/manifest.json"));
  } catch (const json::exception& e) {
    throw IntegrityError("bad manifest.json: " + std::string(e.what()));
  }
  if (m.value("kind", "") != "bgaug-dataset") {
    throw IntegrityError("manifest.json is not a dataset manifest");
  }

  Dataset ds;
  int h, w, c;
  std::size_t n;
  try {
    h = m.at("height").get<int>();
    w = m.at("width").get<int>();
    c = m.at("channels").get<int>();
    n = m.at("n_samples").get<std::size_t>();
    ds.n_fg_classes = m.at("n_fg_classes").get<int>();
    ds.n_bg_classes = m.at("n_bg_classes").get<int>();
    ds.fg_class_names =
        m.value("fg_class_names", std::vector<std::string>{});
    ds.bg_class_names =
        m.value("bg_class_names", std::vector<std::string>{});
    if (config_json_out) {
      *config_json_out = m.value("config", json::object()).dump();
    }
  } catch (const json::exception& e) {
    throw IntegrityError("manifest.json missing fields: " +
                         std::string(e.what()));
  }
  if (h < 1 || w < 1 || (c != 1 && c != 3) || n < 1) {
    throw IntegrityError("manifest.json has invalid dimensions");
  }
  const auto& recs = m.at("samples");
  if (recs.size() != n) {
    throw IntegrityError("manifest sample count mismatch");
  }

  const auto img_bytes = read_file_bytes(dir + "/images.bin");
  const auto mask_bytes = read_file_bytes(dir + "/masks.bin");
  const bool have_tiled = fs::exists(dir + "/tiled.bin");
  std::vector<std::uint8_t> tiled_bytes;
  if (have_tiled) tiled_bytes = read_file_bytes(dir + "/tiled.bin");

  const std::size_t img_sz = static_cast<std::size_t>(h) * w * c * 4;
  const std::size_t mask_sz = static_cast<std::size_t>(h) * w;

  ds.samples.reserve(n);
  for (const auto& r : recs) {
    Sample s;
    std::size_t img_off, mask_off, tiled_off;
    try {
      s.id = r.at("id").get<std::int64_t>();
      s.fg_class = r.at("fg_class").get<int>();
      s.bg_class = r.at("bg_class").get<int>();
      img_off = r.at("image_offset").get<std::size_t>();
      mask_off = r.at("mask_offset").get<std::size_t>();
      tiled_off = r.at("tiled_offset").get<std::size_t>();
    } catch (const json::exception& e) {
      throw IntegrityError("bad sample record: " + std::string(e.what()));
    }
    if (s.fg_class < 0 || s.fg_class >= ds.n_fg_classes || s.bg_class < 0 ||
        s.bg_class >= ds.n_bg_classes) {
      throw IntegrityError("sample " + std::to_string(s.id) +
                           ": label out of range");
    }
    if (img_off + img_sz > img_bytes.size() ||
        mask_off + mask_sz > mask_bytes.size()) {
      throw IntegrityError("sample " + std::to_string(s.id) +
                           ": offsets outside binary files");
    }
    s.image = Image(h, w, c);
    std::memcpy(s.image.data.data(), img_bytes.data() + img_off, img_sz);
    check_values(s.image, s.id, "image");

    s.mask = Mask(h, w);
    std::memcpy(s.mask.bits.data(), mask_bytes.data() + mask_off, mask_sz);
    for (auto b : s.mask.bits) {
      if (b > 1) {
        throw IntegrityError("sample " + std::to_string(s.id) +
                             ": mask byte not 0/1");
      }
    }

    if (have_tiled) {
      if (tiled_off + img_sz > tiled_bytes.size()) {
        throw IntegrityError("sample " + std::to_string(s.id) +
                             ": tiled offset outside tiled.bin");
      }
      s.tiled_bg = Image(h, w, c);
      std::memcpy(s.tiled_bg.data.data(), tiled_bytes.data() + tiled_off,
                  img_sz);
      check_values(s.tiled_bg, s.id, "tiled");
    } else {
      s.tiled_bg = tiled_background(s.image, s.mask);
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace bgaug
