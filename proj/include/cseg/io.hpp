#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cseg/mask.hpp"
#include "cseg/synth.hpp"

namespace cseg {

// Binary 8-bit PGM (P5, maxval 255). Masks are stored as {0, 255}. Images
// are quantized to 8 bits at generation time, so a write/read cycle is
// lossless.
void write_pgm(const std::string& path, const GrayImage& img);
void write_pgm(const std::string& path, const BinaryMask& mask);
GrayImage read_pgm_image(const std::string& path);
BinaryMask read_pgm_mask(const std::string& path);

std::uint64_t fnv1a64(std::string_view s);

// Dataset/phase manifest. Optional fields appear only once the producing
// phase has run; paths are relative to the manifest's directory.
struct ManifestEntry {
  std::string id;
  std::string split;  // train | valid | test
  std::string image;
  std::string mask;
  std::string constraint;  // phase 1 candidate
  bool has_corrupted = false;
  bool corrupted = false;
  bool has_coverage = false;
  double coverage = 0.0;
  bool has_label = false;
  int label = 0;
  bool has_score = false;
  double score = 0.0;
  bool has_accepted = false;
  bool accepted = false;
  std::string final_constraint;  // phase 2 output
};

struct ManifestData {
  int version = 1;
  int height = 0;
  int width = 0;
  std::uint64_t config_fingerprint = 0;
  std::vector<ManifestEntry> entries;
};

void write_manifest(const std::string& dir, const ManifestData& m);

// Parses dir/manifest.json and checks that every referenced file exists and
// every split tag is valid.
ManifestData read_manifest(const std::string& dir);

// Writes images/, masks/ and manifest.json for a generated dataset.
void write_dataset(const std::string& dir, const Dataset& ds,
                   std::uint64_t config_fingerprint);

// Read-side access to a dataset directory. Every mask read is recorded so
// pipelines can prove they never touched test annotations before evaluation.
class DatasetReader {
 public:
  explicit DatasetReader(const std::string& dir);

  const ManifestData& manifest() const { return man_; }
  const std::string& dir() const { return dir_; }
  int size() const { return int(man_.entries.size()); }

  GrayImage image(int idx) const;
  BinaryMask mask(int idx) const;
  BinaryMask candidate_constraint(int idx) const;
  BinaryMask final_constraint(int idx) const;

  const std::vector<std::string>& mask_access_log() const { return mask_log_; }

 private:
  std::string dir_;
  ManifestData man_;
  mutable std::vector<std::string> mask_log_;
};

// Parameter checkpoint: 16-byte header (magic "CSEGPARM", version u32,
// count u32, both little-endian) followed by count little-endian float32
// values in declaration order.
void save_checkpoint(const std::string& path, const std::vector<double>& params);
std::vector<double> load_checkpoint(const std::string& path);

// Ordered key/value report emitted as both a flat text file and a JSON file.
class Report {
 public:
  void add(const std::string& key, const std::string& value);
  void add(const std::string& key, const char* value);
  void add(const std::string& key, double value);
  void add(const std::string& key, long long value);
  void add(const std::string& key, int value) { add(key, (long long)value); }
  void add(const std::string& key, std::uint64_t value);
  void add(const std::string& key, bool value);

  // Writes base_path + ".txt" and base_path + ".json".
  void write(const std::string& base_path) const;

  const std::vector<std::pair<std::string, std::string>>& items() const {
    return items_;
  }

 private:
  enum class Kind { Str, Num, Int, Uint, Bool };
  struct Typed {
    Kind kind;
    std::string str;
    double num = 0.0;
    long long inum = 0;
    std::uint64_t unum = 0;
    bool bnum = false;
  };
  std::vector<std::pair<std::string, std::string>> items_;
  std::vector<std::pair<std::string, Typed>> typed_;
};

// Tab-separated plot data; one header line then one line per row.
void write_tsv(const std::string& path, const std::vector<std::string>& columns,
               const std::vector<std::vector<double>>& rows);

}  // namespace cseg
