#include "batlas/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "batlas/error.hpp"
#include "batlas/image_io.hpp"
#include "batlas/parallel.hpp"

namespace fs = std::filesystem;

namespace batlas {

namespace {

// Stream indices under each item's seed.
constexpr std::uint64_t kGoldStream = 1;
constexpr std::uint64_t kRenderStream = 2;
constexpr std::uint64_t kUserStreamBase = 100;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    out.push_back(trim(std::string_view(line).substr(start, tab - start)));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

double to_double(const std::string& v, const std::string& where) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw InvalidArgument(where + ": '" + v + "' is not a number");
  }
}

long long to_int(const std::string& v, const std::string& where) {
  long long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw InvalidArgument(where + ": '" + v + "' is not an integer");
  }
  return out;
}

std::uint64_t to_u64(const std::string& v, const std::string& where) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw InvalidArgument(where + ": '" + v + "' is not an unsigned integer");
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.close();
  if (!out) throw IoError("cannot write " + path.string());
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

struct UserField {
  const char* name;
  std::function<void(UserModel&, const std::string&, const std::string&)> set;
  std::function<std::string(const UserModel&)> get;
};

const std::vector<UserField>& user_fields() {
  static const std::vector<UserField> fields = {
      {"experience", [](UserModel& u, const std::string& v, const std::string& w) { u.experience = to_double(v, w); },
       [](const UserModel& u) { return fmt(u.experience); }},
      {"attention", [](UserModel& u, const std::string& v, const std::string& w) { u.attention = to_double(v, w); },
       [](const UserModel& u) { return fmt(u.attention); }},
      {"size_tendency", [](UserModel& u, const std::string& v, const std::string& w) { u.size_tendency = to_double(v, w); },
       [](const UserModel& u) { return fmt(u.size_tendency); }},
      {"error_probability", [](UserModel& u, const std::string& v, const std::string& w) { u.error_probability = to_double(v, w); },
       [](const UserModel& u) { return fmt(u.error_probability); }},
      {"anatomical_difficulty", [](UserModel& u, const std::string& v, const std::string& w) { u.anatomical_difficulty = to_double(v, w); },
       [](const UserModel& u) { return fmt(u.anatomical_difficulty); }},
      {"morph_kernel", [](UserModel& u, const std::string& v, const std::string& w) { u.morph_kernel = static_cast<int>(to_int(v, w)); },
       [](const UserModel& u) { return std::to_string(u.morph_kernel); }},
  };
  return fields;
}


struct GenField {
  const char* name;
  std::function<void(GenConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const GenConfig&)> get;
};

#define BATLAS_DOUBLE_FIELD(key, member)                                                          \
  GenField {                                                                                      \
    key, [](GenConfig& c, const std::string& v, const std::string& w) { c.member = to_double(v, w); }, \
        [](const GenConfig& c) { return fmt(c.member); }                                          \
  }
#define BATLAS_INT_FIELD(key, member)                                                             \
  GenField {                                                                                      \
    key,                                                                                          \
        [](GenConfig& c, const std::string& v, const std::string& w) {                            \
          c.member = static_cast<int>(to_int(v, w));                                              \
        },                                                                                        \
        [](const GenConfig& c) { return std::to_string(c.member); }                               \
  }

const std::vector<GenField>& gen_fields() {
  static const std::vector<GenField> fields = {
      BATLAS_INT_FIELD("image_size", image_size),
      BATLAS_INT_FIELD("num_priors", num_priors),
      BATLAS_DOUBLE_FIELD("dirichlet_alpha", dirichlet_alpha),
      BATLAS_DOUBLE_FIELD("base_radius", base_radius),
      BATLAS_DOUBLE_FIELD("scale_range", scale_range),
      BATLAS_DOUBLE_FIELD("translation_range", translation_range),
      BATLAS_DOUBLE_FIELD("rotation_range", rotation_range),
      BATLAS_DOUBLE_FIELD("radial_noise", radial_noise),
      BATLAS_DOUBLE_FIELD("background", background),
      BATLAS_DOUBLE_FIELD("contrast", contrast),
      BATLAS_DOUBLE_FIELD("rim_width", rim_width),
      BATLAS_DOUBLE_FIELD("rim_darkening", rim_darkening),
      BATLAS_DOUBLE_FIELD("speckle", speckle),
      BATLAS_INT_FIELD("shadow_count", shadow_count),
      BATLAS_DOUBLE_FIELD("shadow_intensity", shadow_intensity),
      BATLAS_DOUBLE_FIELD("shadow_width_deg", shadow_width_deg),
      BATLAS_DOUBLE_FIELD("blur_sigma", blur_sigma),
      BATLAS_INT_FIELD("max_retries", max_retries),
      GenField{"seed",
               [](GenConfig& c, const std::string& v, const std::string& w) { c.seed = to_u64(v, w); },
               [](const GenConfig& c) { return std::to_string(c.seed); }},
      BATLAS_DOUBLE_FIELD("user_scale_coeff", user.scale_coeff),
      BATLAS_DOUBLE_FIELD("user_rotation_deg", user.rotation_deg),
      BATLAS_DOUBLE_FIELD("user_jitter_coeff", user.jitter_coeff),
      BATLAS_INT_FIELD("user_jitter_smoothing", user.jitter_smoothing),
      BATLAS_DOUBLE_FIELD("user_gross_error_fraction", user.gross_error_fraction),
  };
  return fields;
}

#undef BATLAS_DOUBLE_FIELD
#undef BATLAS_INT_FIELD

fs::path segment_path(const fs::path& root, int user, const std::string& id, const char* ext) {
  return root / "users" / ("u" + std::to_string(user + 1)) / (id + ext);
}

}  // namespace

int Dataset::n_users() const {
  return cases.empty() ? static_cast<int>(users.size()) : static_cast<int>(cases.front().segments.size());
}

bool Dataset::has_gold() const {
  return !cases.empty() &&
         std::all_of(cases.begin(), cases.end(), [](const DatasetCase& c) { return c.gold.has_value(); });
}

Dataset Dataset::head(std::size_t n) const {
  if (n > cases.size()) {
    throw InvalidArgument("requested " + std::to_string(n) + " images but the dataset has " +
                          std::to_string(cases.size()));
  }
  Dataset out;
  out.users = users;
  out.master_seed = master_seed;
  out.cases.assign(cases.begin(), cases.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

Dataset Dataset::select_users(std::span<const int> subset) const {
  const int n = n_users();
  for (int u : subset) {
    if (u < 0 || u >= n) {
      throw InvalidArgument("user " + std::to_string(u + 1) + " is out of range (dataset has " +
                            std::to_string(n) + " users)");
    }
  }
  Dataset out;
  out.master_seed = master_seed;
  for (int u : subset) {
    if (u < static_cast<int>(users.size())) out.users.push_back(users[u]);
  }
  if (out.users.size() != subset.size()) out.users.clear();
  out.cases.reserve(cases.size());
  for (const auto& c : cases) {
    DatasetCase d;
    d.id = c.id;
    d.seed = c.seed;
    d.image = c.image;
    d.gold = c.gold;
    for (int u : subset) d.segments.push_back(c.segments[u]);
    out.cases.push_back(std::move(d));
  }
  return out;
}

std::string case_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img%04zu", index + 1);
  return buf;
}

Dataset generate_dataset(std::size_t n_images, std::span<const UserModel> users,
                         const GenConfig& cfg, int threads) {
  return generate_dataset(n_images, users, default_priors(), cfg, threads);
}

Dataset generate_dataset(std::size_t n_images, std::span<const UserModel> users,
                         std::span<const ShapePrior> priors, const GenConfig& cfg, int threads) {
  if (n_images < 1) throw InvalidArgument("generate_dataset: need at least one image");
  if (users.empty()) throw InvalidArgument("generate_dataset: need at least one user");
  cfg.validate();
  for (const auto& u : users) u.validate();
  if (static_cast<std::size_t>(cfg.num_priors) > priors.size()) {
    throw InvalidArgument("num_priors = " + std::to_string(cfg.num_priors) + " but only " +
                          std::to_string(priors.size()) + " priors are available");
  }
  const auto bank = priors.first(static_cast<std::size_t>(cfg.num_priors));

  Dataset ds;
  ds.master_seed = cfg.seed;
  ds.users.assign(users.begin(), users.end());
  ds.cases.resize(n_images);
  parallel_for(n_images, threads, [&](std::size_t i) {
    DatasetCase& c = ds.cases[i];
    c.id = case_id(i);
    c.seed = derive_seed(cfg.seed, i);
    Rng gold_rng(derive_seed(c.seed, 0, kGoldStream));
    const GoldShape gold = generate_gold(bank, cfg, gold_rng);
    Rng render_rng(derive_seed(c.seed, 0, kRenderStream));
    c.image = render_image(gold.mask, cfg, render_rng);
    c.segments.reserve(users.size());
    for (std::size_t j = 0; j < users.size(); ++j) {
      Rng user_rng(derive_seed(c.seed, 0, kUserStreamBase + j));
      c.segments.push_back(simulate_user_segment(gold, users[j], cfg.user, user_rng));
    }
    c.gold = gold.mask;
  });
  return ds;
}

void write_dataset(const fs::path& root, const Dataset& dataset, const GenConfig* cfg) {
  std::error_code ec;
  const int n_users = dataset.n_users();
  fs::create_directories(root / "images", ec);
  if (dataset.has_gold()) fs::create_directories(root / "gold", ec);
  for (int j = 0; j < n_users; ++j) {
    fs::create_directories(root / "users" / ("u" + std::to_string(j + 1)), ec);
  }
  if (ec) throw IoError("cannot create dataset directories under " + root.string() + ": " + ec.message());

  std::ostringstream manifest;
  manifest << "# rng\t" << kRngAlgorithm << "\n";
  manifest << "# master_seed\t" << dataset.master_seed << "\n";
  manifest << "id\tseed\timage\tgold\n";
  for (const auto& c : dataset.cases) {
    const std::string image_rel = "images/" + c.id + ".pgm";
    const std::string gold_rel = c.gold ? "gold/" + c.id + ".pgm" : "";
    write_image(root / image_rel, c.image);
    if (c.gold) write_mask(root / gold_rel, *c.gold);
    for (int j = 0; j < n_users; ++j) write_mask(segment_path(root, j, c.id, ".pgm"), c.segments[j]);
    manifest << c.id << '\t' << c.seed << '\t' << image_rel << '\t' << gold_rel << '\n';
  }
  write_text(root / "manifest.tsv", manifest.str());

  std::ostringstream users;
  users << "user";
  for (const auto& f : user_fields()) users << '\t' << f.name;
  users << '\n';
  for (int j = 0; j < n_users; ++j) {
    users << "u" << (j + 1);
    for (const auto& f : user_fields()) {
      users << '\t' << (j < static_cast<int>(dataset.users.size()) ? f.get(dataset.users[j]) : "");
    }
    users << '\n';
  }
  write_text(root / "users.tsv", users.str());
  if (cfg) write_text(root / "config.txt", format_config(*cfg));
}

Dataset load_dataset(const fs::path& root) {
  const fs::path manifest_path = root / "manifest.tsv";
  const auto lines = read_lines(manifest_path);
  Dataset ds;
  std::vector<std::string> header;
  std::map<std::string, std::size_t> col;
  int line_no = 0;
  std::vector<std::vector<std::string>> rows;
  for (const auto& line : lines) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (line[0] == '#') {
      const auto f = split_tabs(line.substr(1));
      if (f.size() == 2 && trim(f[0]) == "master_seed") {
        ds.master_seed = to_u64(f[1], manifest_path.string() + ":" + std::to_string(line_no));
      }
      continue;
    }
    auto fields = split_tabs(line);
    if (header.empty()) {
      header = fields;
      for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
      if (!col.count("id") || !col.count("image")) {
        throw IoError(manifest_path.string() + ": header needs 'id' and 'image' columns");
      }
      continue;
    }
    if (fields.size() != header.size()) {
      throw IoError(manifest_path.string() + ":" + std::to_string(line_no) + ": expected " +
                    std::to_string(header.size()) + " columns, got " + std::to_string(fields.size()));
    }
    rows.push_back(std::move(fields));
  }
  if (rows.empty()) throw IoError(manifest_path.string() + ": no cases listed");

  int n_users = 0;
  if (fs::exists(root / "users.tsv")) {
    const auto ulines = read_lines(root / "users.tsv");
    std::vector<std::string> uheader;
    for (std::size_t li = 0; li < ulines.size(); ++li) {
      if (trim(ulines[li]).empty() || ulines[li][0] == '#') continue;
      auto f = split_tabs(ulines[li]);
      if (uheader.empty()) {
        uheader = f;
        continue;
      }
      ++n_users;
      UserModel u;
      bool complete = true;
      for (std::size_t k = 1; k < f.size() && k < uheader.size(); ++k) {
        for (const auto& uf : user_fields()) {
          if (uheader[k] != uf.name) continue;
          if (f[k].empty()) {
            complete = false;
          } else {
            uf.set(u, f[k], (root / "users.tsv").string() + ":" + std::to_string(li + 1));
          }
        }
      }
      if (complete && f.size() == uheader.size()) ds.users.push_back(u);
    }
    if (static_cast<int>(ds.users.size()) != n_users) ds.users.clear();
  } else {
    while (fs::is_directory(root / "users" / ("u" + std::to_string(n_users + 1)))) ++n_users;
  }
  if (n_users < 1) throw IoError(root.string() + ": no user segment directories");

  const bool gold_col = col.count("gold") > 0;
  const bool seed_col = col.count("seed") > 0;
  ds.cases.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    DatasetCase& c = ds.cases[i];
    c.id = r[col["id"]];
    if (seed_col && !r[col["seed"]].empty()) c.seed = to_u64(r[col["seed"]], manifest_path.string());
    c.image = read_image(root / r[col["image"]]);
    if (gold_col && !r[col["gold"]].empty()) c.gold = read_mask(root / r[col["gold"]]);
    for (int j = 0; j < n_users; ++j) {
      fs::path p = segment_path(root, j, c.id, ".pgm");
      if (!fs::exists(p)) p = segment_path(root, j, c.id, ".png");
      if (!fs::exists(p)) {
        throw IoError("missing segment of user " + std::to_string(j + 1) + " for '" + c.id + "': " +
                      segment_path(root, j, c.id, ".pgm").string());
      }
      c.segments.push_back(read_mask(p));
    }
  }
  return ds;
}

void apply_config(std::string_view text, GenConfig& cfg, std::vector<UserModel>& users) {
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument("config line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string where = "config line " + std::to_string(line_no) + " (" + key + ")";
    const std::string value = trim(std::string_view(line).substr(eq + 1));

    if (key.size() > 1 && key[0] == 'u' && key.find('.') != std::string::npos &&
        std::isdigit(static_cast<unsigned char>(key[1]))) {
      const auto dot = key.find('.');
      const long long j = to_int(key.substr(1, dot - 1), where);
      if (j < 1 || j > static_cast<long long>(users.size())) {
        throw InvalidArgument(where + ": user " + std::to_string(j) + " out of range");
      }
      const std::string field = key.substr(dot + 1);
      const auto& uf = user_fields();
      const auto it = std::find_if(uf.begin(), uf.end(), [&](const UserField& f) { return field == f.name; });
      if (it == uf.end()) throw InvalidArgument(where + ": unknown user field '" + field + "'");
      it->set(users[static_cast<std::size_t>(j - 1)], value, where);
      continue;
    }
    const auto& gf = gen_fields();
    const auto it = std::find_if(gf.begin(), gf.end(), [&](const GenField& f) { return key == f.name; });
    if (it == gf.end()) throw InvalidArgument(where + ": unknown key '" + key + "'");
    it->set(cfg, value, where);
  }
  cfg.validate();
  for (std::size_t j = 0; j < users.size(); ++j) {
    try {
      users[j].validate();
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("user " + std::to_string(j + 1) + ": " + e.what());
    }
  }
}

std::string format_config(const GenConfig& cfg) {
  std::ostringstream out;
  for (const auto& f : gen_fields()) out << f.name << " = " << f.get(cfg) << '\n';
  return out.str();
}

std::vector<AtlasItem> atlas_items(const Dataset& dataset) {
  std::vector<AtlasItem> items;
  items.reserve(dataset.size());
  for (const auto& c : dataset.cases) items.push_back(AtlasItem{c.id, c.image, c.segments, c.gold, {}});
  return items;
}

Atlas build_atlas(const Dataset& dataset, const BarcodeParams& params, int threads) {
  if (dataset.cases.empty()) throw BuildError("no items to build an atlas from");
  std::vector<std::optional<Barcode>> codes(dataset.size());
  parallel_for(dataset.size(), threads, [&](std::size_t i) {
    try {
      codes[i] = compute_barcode(dataset.cases[i].image, params);
    } catch (const Error& e) {
      throw BuildError("case '" + dataset.cases[i].id + "': " + e.what());
    }
  });
  std::vector<AtlasEntry> entries;
  entries.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& c = dataset.cases[i];
    entries.push_back(AtlasEntry{c.id, std::move(*codes[i]), c.segments, c.gold, {}});
  }
  return Atlas(params, dataset.n_users(), std::move(entries));
}

}  // namespace batlas
