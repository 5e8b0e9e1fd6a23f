#include "cseg/io.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace cseg {

namespace {

void write_bytes(const std::string& path, const std::string& header,
                 const std::vector<uint8_t>& bytes) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(header.data(), std::streamsize(header.size()));
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<uint8_t> read_pgm_bytes(const std::string& path, int& h, int& w) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  std::string magic;
  int maxval = 0;
  f >> magic >> w >> h >> maxval;
  if (!f || magic != "P5" || maxval != 255 || h < 1 || w < 1)
    throw std::runtime_error("not an 8-bit P5 PGM: " + path);
  f.get();  // single whitespace after maxval
  std::vector<uint8_t> bytes(std::size_t(h) * std::size_t(w));
  f.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
  if (f.gcount() != std::streamsize(bytes.size()))
    throw std::runtime_error("truncated PGM: " + path);
  return bytes;
}

std::string pgm_header(int h, int w) {
  std::ostringstream ss;
  ss << "P5\n" << w << " " << h << "\n255\n";
  return ss.str();
}

}  // namespace

void write_pgm(const std::string& path, const GrayImage& img) {
  std::vector<uint8_t> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i)
    bytes[i] = uint8_t(std::lround(img.data[i] * 255.0));
  write_bytes(path, pgm_header(img.height, img.width), bytes);
}

void write_pgm(const std::string& path, const BinaryMask& mask) {
  std::vector<uint8_t> bytes(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) bytes[i] = mask.data[i] ? 255 : 0;
  write_bytes(path, pgm_header(mask.height, mask.width), bytes);
}

GrayImage read_pgm_image(const std::string& path) {
  int h = 0, w = 0;
  auto bytes = read_pgm_bytes(path, h, w);
  GrayImage img(h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0;
  return img;
}

BinaryMask read_pgm_mask(const std::string& path) {
  int h = 0, w = 0;
  auto bytes = read_pgm_bytes(path, h, w);
  BinaryMask m(h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (bytes[i] != 0 && bytes[i] != 255)
      throw std::runtime_error("mask pixels must be 0 or 255: " + path);
    m.data[i] = bytes[i] ? 1 : 0;
  }
  return m;
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

ordered_json entry_to_json(const ManifestEntry& e) {
  ordered_json j;
  j["id"] = e.id;
  j["split"] = e.split;
  j["image"] = e.image;
  j["mask"] = e.mask;
  if (!e.constraint.empty()) j["constraint"] = e.constraint;
  if (e.has_corrupted) j["corrupted"] = e.corrupted;
  if (e.has_coverage) j["coverage"] = e.coverage;
  if (e.has_label) j["label"] = e.label;
  if (e.has_score) j["score"] = e.score;
  if (e.has_accepted) j["accepted"] = e.accepted;
  if (!e.final_constraint.empty()) j["final_constraint"] = e.final_constraint;
  return j;
}

ManifestEntry entry_from_json(const ordered_json& j) {
  ManifestEntry e;
  e.id = j.at("id").get<std::string>();
  e.split = j.at("split").get<std::string>();
  e.image = j.at("image").get<std::string>();
  e.mask = j.at("mask").get<std::string>();
  if (j.contains("constraint")) e.constraint = j["constraint"].get<std::string>();
  if (j.contains("corrupted")) {
    e.has_corrupted = true;
    e.corrupted = j["corrupted"].get<bool>();
  }
  if (j.contains("coverage")) {
    e.has_coverage = true;
    e.coverage = j["coverage"].get<double>();
  }
  if (j.contains("label")) {
    e.has_label = true;
    e.label = j["label"].get<int>();
  }
  if (j.contains("score")) {
    e.has_score = true;
    e.score = j["score"].get<double>();
  }
  if (j.contains("accepted")) {
    e.has_accepted = true;
    e.accepted = j["accepted"].get<bool>();
  }
  if (j.contains("final_constraint"))
    e.final_constraint = j["final_constraint"].get<std::string>();
  return e;
}

}  // namespace

void write_manifest(const std::string& dir, const ManifestData& m) {
  fs::create_directories(dir);
  ordered_json j;
  j["version"] = m.version;
  j["height"] = m.height;
  j["width"] = m.width;
  j["config_fingerprint"] = std::to_string(m.config_fingerprint);
  j["samples"] = ordered_json::array();
  for (const auto& e : m.entries) j["samples"].push_back(entry_to_json(e));
  std::ofstream f(dir + "/manifest.json", std::ios::binary);
  if (!f) throw std::runtime_error("cannot write manifest in " + dir);
  f << j.dump(2) << "\n";
}

ManifestData read_manifest(const std::string& dir) {
  std::ifstream f(dir + "/manifest.json", std::ios::binary);
  if (!f) throw std::runtime_error("no manifest.json in " + dir);
  ordered_json j;
  f >> j;
  ManifestData m;
  m.version = j.at("version").get<int>();
  if (m.version != 1) throw std::runtime_error("unsupported manifest version in " + dir);
  m.height = j.at("height").get<int>();
  m.width = j.at("width").get<int>();
  m.config_fingerprint = std::stoull(j.at("config_fingerprint").get<std::string>());
  for (const auto& je : j.at("samples")) {
    ManifestEntry e = entry_from_json(je);
    if (e.split != "train" && e.split != "valid" && e.split != "test")
      throw std::runtime_error("bad split tag '" + e.split + "' in " + dir);
    for (const std::string* rel :
         {&e.image, &e.mask, &e.constraint, &e.final_constraint}) {
      if (rel->empty()) continue;
      if (!fs::exists(fs::path(dir) / *rel))
        throw std::runtime_error("manifest references missing file: " + *rel);
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_dataset(const std::string& dir, const Dataset& ds,
                   std::uint64_t config_fingerprint) {
  ManifestData m;
  m.height = ds.height;
  m.width = ds.width;
  m.config_fingerprint = config_fingerprint;
  std::vector<std::string> split_of(ds.samples.size());
  for (int i : ds.splits.train) split_of[std::size_t(i)] = "train";
  for (int i : ds.splits.valid) split_of[std::size_t(i)] = "valid";
  for (int i : ds.splits.test) split_of[std::size_t(i)] = "test";
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    ManifestEntry e;
    e.id = s.id;
    e.split = split_of[i];
    e.image = "images/" + s.id + ".pgm";
    e.mask = "masks/" + s.id + ".pgm";
    write_pgm(dir + "/" + e.image, s.image);
    write_pgm(dir + "/" + e.mask, s.mask);
    m.entries.push_back(std::move(e));
  }
  write_manifest(dir, m);
}

DatasetReader::DatasetReader(const std::string& dir) : dir_(dir), man_(read_manifest(dir)) {}

GrayImage DatasetReader::image(int idx) const {
  return read_pgm_image(dir_ + "/" + man_.entries.at(std::size_t(idx)).image);
}

BinaryMask DatasetReader::mask(int idx) const {
  const ManifestEntry& e = man_.entries.at(std::size_t(idx));
  mask_log_.push_back(e.mask);
  return read_pgm_mask(dir_ + "/" + e.mask);
}

BinaryMask DatasetReader::candidate_constraint(int idx) const {
  const ManifestEntry& e = man_.entries.at(std::size_t(idx));
  if (e.constraint.empty())
    throw std::runtime_error("no candidate constraint recorded for " + e.id);
  return read_pgm_mask(dir_ + "/" + e.constraint);
}

BinaryMask DatasetReader::final_constraint(int idx) const {
  const ManifestEntry& e = man_.entries.at(std::size_t(idx));
  if (e.final_constraint.empty())
    throw std::runtime_error("no final constraint recorded for " + e.id);
  return read_pgm_mask(dir_ + "/" + e.final_constraint);
}

namespace {

void push_u32_le(std::vector<uint8_t>& out, std::uint32_t v) {
  out.push_back(uint8_t(v & 0xff));
  out.push_back(uint8_t((v >> 8) & 0xff));
  out.push_back(uint8_t((v >> 16) & 0xff));
  out.push_back(uint8_t((v >> 24) & 0xff));
}

std::uint32_t read_u32_le(const uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

constexpr char kCkptMagic[8] = {'C', 'S', 'E', 'G', 'P', 'A', 'R', 'M'};

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<double>& params) {
  std::vector<uint8_t> out;
  out.reserve(16 + params.size() * 4);
  out.insert(out.end(), kCkptMagic, kCkptMagic + 8);
  push_u32_le(out, 1);
  push_u32_le(out, std::uint32_t(params.size()));
  for (double d : params) {
    float fv = float(d);
    std::uint32_t bits;
    std::memcpy(&bits, &fv, 4);
    push_u32_le(out, bits);
  }
  write_bytes(path, "", out);
}

std::vector<double> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCkptMagic, 8) != 0)
    throw std::runtime_error("bad checkpoint header: " + path);
  if (read_u32_le(bytes.data() + 8) != 1)
    throw std::runtime_error("unsupported checkpoint version: " + path);
  const std::uint32_t count = read_u32_le(bytes.data() + 12);
  if (bytes.size() != 16 + std::size_t(count) * 4)
    throw std::runtime_error("checkpoint length mismatch: " + path);
  std::vector<double> params(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t bits = read_u32_le(bytes.data() + 16 + std::size_t(i) * 4);
    float fv;
    std::memcpy(&fv, &bits, 4);
    params[i] = double(fv);
  }
  return params;
}

namespace {

std::string format_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(12) << v;
  return ss.str();
}

}  // namespace

void Report::add(const std::string& key, const std::string& value) {
  items_.emplace_back(key, value);
  typed_.emplace_back(key, Typed{Kind::Str, value, 0, 0, 0, false});
}
void Report::add(const std::string& key, const char* value) {
  add(key, std::string(value));
}
void Report::add(const std::string& key, double value) {
  items_.emplace_back(key, format_double(value));
  typed_.emplace_back(key, Typed{Kind::Num, "", value, 0, 0, false});
}
void Report::add(const std::string& key, long long value) {
  items_.emplace_back(key, std::to_string(value));
  typed_.emplace_back(key, Typed{Kind::Int, "", 0, value, 0, false});
}
void Report::add(const std::string& key, std::uint64_t value) {
  items_.emplace_back(key, std::to_string(value));
  typed_.emplace_back(key, Typed{Kind::Uint, "", 0, 0, value, false});
}
void Report::add(const std::string& key, bool value) {
  items_.emplace_back(key, value ? "true" : "false");
  typed_.emplace_back(key, Typed{Kind::Bool, "", 0, 0, 0, value});
}

void Report::write(const std::string& base_path) const {
  fs::path p(base_path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  {
    std::ofstream f(base_path + ".txt", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write report: " + base_path + ".txt");
    for (const auto& [k, v] : items_) f << k << ": " << v << "\n";
  }
  {
    ordered_json j;
    for (const auto& [k, t] : typed_) {
      switch (t.kind) {
        case Kind::Str: j[k] = t.str; break;
        case Kind::Num: j[k] = t.num; break;
        case Kind::Int: j[k] = t.inum; break;
        case Kind::Uint: j[k] = t.unum; break;
        case Kind::Bool: j[k] = t.bnum; break;
      }
    }
    std::ofstream f(base_path + ".json", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write report: " + base_path + ".json");
    f << j.dump(2) << "\n";
  }
}

void write_tsv(const std::string& path, const std::vector<std::string>& columns,
               const std::vector<std::vector<double>>& rows) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write: " + path);
  for (std::size_t i = 0; i < columns.size(); ++i)
    f << columns[i] << (i + 1 < columns.size() ? "\t" : "\n");
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      f << format_double(row[i]) << (i + 1 < row.size() ? "\t" : "\n");
  }
}

}  // namespace cseg
