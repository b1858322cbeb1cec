#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "batlas/atlas.hpp"
#include "batlas/barcode.hpp"
#include "batlas/image.hpp"
#include "batlas/mask.hpp"
#include "batlas/synth.hpp"

namespace batlas {

struct DatasetCase {
  std::string id;
  std::uint64_t seed = 0;  // 0 for ingested data
  GrayImage image;
  std::optional<BinaryMask> gold;
  std::vector<BinaryMask> segments;  // index = user
};

struct Dataset {
  std::vector<DatasetCase> cases;
  std::vector<UserModel> users;  // empty when the user models are unknown
  std::uint64_t master_seed = 0;

  std::size_t size() const { return cases.size(); }
  int n_users() const;
  bool has_gold() const;
  // First n cases in manifest order.
  Dataset head(std::size_t n) const;
  // Keeps only the listed (0-based) users' segments, in the listed order.
  Dataset select_users(std::span<const int> users) const;
};

std::string case_id(std::size_t index);

Dataset generate_dataset(std::size_t n_images, std::span<const UserModel> users,
                         const GenConfig& cfg, int threads = 0);
Dataset generate_dataset(std::size_t n_images, std::span<const UserModel> users,
                         std::span<const ShapePrior> priors, const GenConfig& cfg, int threads = 0);

// Layout: images/<id>.pgm, gold/<id>.pgm, users/u<j>/<id>.pgm (j from 1),
// manifest.tsv, users.tsv, config.txt. Throws IoError.
void write_dataset(const std::filesystem::path& root, const Dataset& dataset,
                   const GenConfig* cfg = nullptr);
// Reads the same layout. gold/ is optional. users.tsv may be replaced by a
// plain list of users/u<j> directories. Throws IoError.
Dataset load_dataset(const std::filesystem::path& root);

// key=value lines, '#' comments. Generator keys use the GenConfig field
// names, user simulation keys carry a "user_" prefix, and per-user overrides
// are written "u<j>.<field>" with j counted from 1. Throws InvalidArgument
// naming the offending line.
void apply_config(std::string_view text, GenConfig& cfg, std::vector<UserModel>& users);
std::string format_config(const GenConfig& cfg);

std::vector<AtlasItem> atlas_items(const Dataset& dataset);
// Barcodes every case (in parallel) and stores all user segments and golds.
Atlas build_atlas(const Dataset& dataset, const BarcodeParams& params, int threads = 0);

}  // namespace batlas
