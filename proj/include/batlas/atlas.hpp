#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "batlas/barcode.hpp"
#include "batlas/image.hpp"
#include "batlas/mask.hpp"

namespace batlas {

// One case handed to build_atlas.
struct AtlasItem {
  std::string id;
  GrayImage image;
  std::vector<BinaryMask> segments;  // index = user
  std::optional<BinaryMask> gold;
  std::optional<std::string> image_ref;
};

struct AtlasEntry {
  std::string id;
  Barcode barcode;
  std::vector<BinaryMask> segments;
  std::optional<BinaryMask> gold;
  std::optional<std::string> image_ref;  // in-memory only; not part of the file format

  bool operator==(const AtlasEntry&) const = default;
};

struct SearchResult {
  std::size_t best_index = 0;
  std::string best_id;
  double similarity = 0.0;
  double elapsed_seconds = 0.0;
};

// Immutable store of (id, barcode, user segments) with a contiguous packed
// barcode matrix for the linear popcount scan.
class Atlas {
 public:
  // Validates uniform barcode parameters, segment counts, mask shapes and id
  // uniqueness. Throws BuildError.
  Atlas(BarcodeParams params, int n_users, std::vector<AtlasEntry> entries);

  const BarcodeParams& params() const { return params_; }
  std::size_t bit_len() const { return bit_len_; }
  int n_users() const { return n_users_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  const AtlasEntry& entry(std::size_t i) const { return entries_[i]; }
  std::span<const AtlasEntry> entries() const { return entries_; }
  std::optional<std::size_t> find(std::string_view id) const;

  std::size_t words_per_code() const { return words_per_code_; }
  std::span<const std::uint64_t> packed_code(std::size_t i) const {
    return std::span<const std::uint64_t>(packed_).subspan(i * words_per_code_, words_per_code_);
  }

  bool operator==(const Atlas& other) const {
    return params_ == other.params_ && n_users_ == other.n_users_ && entries_ == other.entries_;
  }

 private:
  BarcodeParams params_;
  std::size_t bit_len_ = 0;
  int n_users_ = 0;
  std::vector<AtlasEntry> entries_;
  std::size_t words_per_code_ = 0;
  std::vector<std::uint64_t> packed_;
};

// Normalizes and encodes every image with the shared parameters; entry order
// follows input order. Throws BuildError naming the offending id.
Atlas build_atlas(std::span<const AtlasItem> items, const BarcodeParams& params);

// Exhaustive scan for the maximal Hamming similarity; ties go to the lowest
// index. Throws EmptyAtlasError or IncompatibleBarcodeError.
SearchResult search(const Atlas& atlas, const Barcode& query);
// Same, skipping the entry whose id equals `excluded_id` (if any).
SearchResult search_excluding(const Atlas& atlas, const Barcode& query,
                              std::string_view excluded_id);

inline constexpr std::uint32_t kAtlasFormatVersion = 1;

std::vector<std::uint8_t> serialize_atlas(const Atlas& atlas);
// Throws MagicMismatchError, VersionMismatchError, TruncatedFileError,
// ChecksumError or AtlasFormatError.
Atlas deserialize_atlas(std::span<const std::uint8_t> bytes);

void save_atlas(const Atlas& atlas, const std::filesystem::path& path);
Atlas load_atlas(const std::filesystem::path& path);

}  // namespace batlas
