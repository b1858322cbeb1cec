#include "batlas/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "batlas/atlas.hpp"
#include "batlas/barcode.hpp"
#include "batlas/consensus.hpp"
#include "batlas/dataset.hpp"
#include "batlas/error.hpp"
#include "batlas/eval.hpp"
#include "batlas/image_io.hpp"
#include "batlas/synth.hpp"

namespace fs = std::filesystem;

namespace batlas {

namespace {

const std::vector<std::string> kCodeNames = {"rbc-local", "rbc-incr", "rbc-global", "lbp"};

struct CodeFlags {
  std::string code = "rbc-incr";
  int norm = 32;
  int np = 8;

  void add(CLI::App* app) {
    app->add_option("--code", code, "Barcode type")->check(CLI::IsMember(kCodeNames))->capture_default_str();
    app->add_option("--norm", norm, "Normalized image side")->check(CLI::Range(2, 4096))->capture_default_str();
    app->add_option("--np", np, "Projection angles (Radon barcodes)")->check(CLI::Range(1, 3600))->capture_default_str();
  }
  BarcodeParams params() const { return BarcodeParams{parse_code_type(code), norm, np}; }
};

struct RoiFlags {
  std::string mask;
  int margin = 30;

  void add(CLI::App* app) {
    app->add_option("--roi", mask, "Mask whose bounding box (plus margin) crops the image");
    app->add_option("--margin", margin, "ROI margin in pixels")->check(CLI::NonNegativeNumber)->capture_default_str();
  }
  GrayImage apply(GrayImage img) const {
    if (mask.empty()) return img;
    const BinaryMask m = read_mask(mask);
    if (m.width() != img.width() || m.height() != img.height()) {
      throw InvalidArgument("ROI mask " + mask + " does not match the image size");
    }
    return bounding_box_roi(img, m, margin);
  }
};

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path sized_path(const fs::path& out, std::size_t n) {
  fs::path p = out;
  p.replace_filename(out.stem().string() + "_n" + std::to_string(n) + out.extension().string());
  return p;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || v < 2) throw CLI::ValidationError("--sizes", "bad size '" + item + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw CLI::ValidationError("--sizes", "no sizes given");
  return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Barcode atlas: retrieval of annotated images and consensus of their segments"};
  app.require_subcommand(1);
  app.fallthrough(false);
  int threads = 0;
  auto add_threads = [&](CLI::App* sub) {
    sub->add_option("--threads", threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber)->capture_default_str();
  };

  // synth gen
  auto* synth = app.add_subcommand("synth", "Synthetic data generation");
  synth->require_subcommand(1);
  auto* gen = synth->add_subcommand("gen", "Generate images, gold segments and simulated user segments");
  std::string gen_out, gen_config;
  std::size_t gen_images = 500;
  int gen_users = 20;
  std::uint64_t gen_seed = 42;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--n-images", gen_images, "Number of images")->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_option("--n-users", gen_users, "Number of simulated users")->check(CLI::PositiveNumber)->capture_default_str();
  auto* seed_opt = gen->add_option("--seed", gen_seed, "Master seed (overrides the config file)")->capture_default_str();
  gen->add_option("--config", gen_config, "key=value generator and user configuration")->check(CLI::ExistingFile);
  add_threads(gen);

  // barcode
  auto* bc = app.add_subcommand("barcode", "Print the barcode of an image");
  std::string bc_image, bc_out;
  CodeFlags bc_code;
  RoiFlags bc_roi;
  bc->add_option("--image", bc_image, "Image file (PGM or PNG)")->required();
  bc_code.add(bc);
  bc_roi.add(bc);
  bc->add_option("--out", bc_out, "Also write the barcode text to this file");

  // atlas build / search
  auto* atlas_cmd = app.add_subcommand("atlas", "Atlas management");
  atlas_cmd->require_subcommand(1);
  auto* build = atlas_cmd->add_subcommand("build", "Build an atlas file from a dataset directory");
  std::string build_data, build_out;
  CodeFlags build_code;
  build->add_option("--data", build_data, "Dataset directory")->required();
  build->add_option("--out", build_out, "Atlas file to write")->required();
  build_code.add(build);
  add_threads(build);

  auto* search_cmd = atlas_cmd->add_subcommand("search", "Find the most similar atlas entry");
  std::string search_atlas, search_image;
  RoiFlags search_roi;
  search_cmd->add_option("--atlas", search_atlas, "Atlas file")->required();
  search_cmd->add_option("--image", search_image, "Query image")->required();
  search_roi.add(search_cmd);

  // consensus
  auto* cons = app.add_subcommand("consensus", "Retrieve the best match and fuse its user segments");
  std::string cons_atlas, cons_image, cons_out, cons_segment;
  RoiFlags cons_roi;
  cons->add_option("--atlas", cons_atlas, "Atlas file")->required();
  cons->add_option("--image", cons_image, "Query image")->required();
  cons->add_option("--out", cons_out, "Consensus mask to write")->required();
  cons->add_option("--segment", cons_segment, "Query segment; reports J(segment, consensus)");
  cons_roi.add(cons);

  // eval
  auto* ev = app.add_subcommand("eval", "Leave-one-out evaluation");
  ev->require_subcommand(1);
  auto* loo = ev->add_subcommand("loo", "Leave-one-out retrieval + consensus accuracy");
  std::string loo_data, loo_out, loo_sizes = "10,20,50,100,250,500";
  CodeFlags loo_code;
  bool loo_timed = false;
  loo->add_option("--data", loo_data, "Dataset directory")->required();
  loo_code.add(loo);
  loo->add_option("--sizes", loo_sizes, "Comma-separated atlas sizes (first n images)")->capture_default_str();
  loo->add_option("--out", loo_out, "CSV file; with several sizes one file per size, suffixed _n<size>")->required();
  loo->add_flag("--timed", loo_timed, "Run searches one at a time so timings are meaningful");
  add_threads(loo);

  auto* maa = ev->add_subcommand("maa", "Maximum achievable accuracy (STAPLE of each image's own segments)");
  std::string maa_data, maa_out;
  maa->add_option("--data", maa_data, "Dataset directory")->required();
  maa->add_option("--out", maa_out, "CSV file")->required();
  add_threads(maa);

  auto* users = ev->add_subcommand("users", "Per-user error against the leave-one-out consensus");
  std::string users_data, users_out;
  CodeFlags users_code;
  users->add_option("--data", users_data, "Dataset directory")->required();
  users_code.add(users);
  users->add_option("--out", users_out, "CSV file")->required();
  add_threads(users);

  auto* subgroup = ev->add_subcommand("subgroup", "Leave-one-out accuracy with a subset of users");
  std::string sub_data, sub_out;
  std::vector<std::string> sub_users;
  std::size_t sub_images = 0;
  CodeFlags sub_code;
  subgroup->add_option("--data", sub_data, "Dataset directory")->required();
  subgroup->add_option("--users", sub_users, "1-based user ids, e.g. 9,11,19; repeat for several subsets")->required();
  subgroup->add_option("--n-images", sub_images, "Use the first N images")->required()->check(CLI::Range(2ul, 1ul << 30));
  sub_code.add(subgroup);
  subgroup->add_option("--out", sub_out, "CSV file")->required();
  add_threads(subgroup);

  std::vector<std::size_t> sizes;
  std::vector<std::vector<int>> subsets;
  try {
    app.parse(argc, argv);
    if (loo->parsed()) sizes = parse_sizes(loo_sizes);
    if (subgroup->parsed()) {
      for (const auto& s : sub_users) {
        try {
          subsets.push_back(parse_user_list(s));
        } catch (const InvalidArgument& e) {
          throw CLI::ValidationError("--users", e.what());
        }
      }
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      GenConfig cfg;
      std::vector<UserModel> bank = make_user_bank(gen_users, gen_seed);
      if (!gen_config.empty()) apply_config(read_text(gen_config), cfg, bank);
      if (seed_opt->count() > 0 || gen_config.empty()) cfg.seed = gen_seed;
      const Dataset ds = generate_dataset(gen_images, bank, cfg, threads);
      write_dataset(gen_out, ds, &cfg);
      out << "wrote " << ds.size() << " images x " << ds.n_users() << " users to " << gen_out
          << " (seed " << cfg.seed << ")\n";
    } else if (bc->parsed()) {
      const Barcode code = compute_barcode(bc_roi.apply(read_image(bc_image)), bc_code.params());
      const std::string text = to_text(code);
      out << text;
      if (!bc_out.empty()) {
        std::ofstream f(bc_out, std::ios::binary);
        f << text;
        if (!f) throw IoError("cannot write " + bc_out);
      }
    } else if (build->parsed()) {
      const Dataset ds = load_dataset(build_data);
      const Atlas atlas = build_atlas(ds, build_code.params(), threads);
      save_atlas(atlas, build_out);
      out << "atlas " << build_out << ": " << atlas.size() << " entries, " << atlas.n_users()
          << " users, " << code_type_label(atlas.params().code) << " " << atlas.bit_len() << " bits\n";
    } else if (search_cmd->parsed()) {
      const Atlas atlas = load_atlas(search_atlas);
      const Barcode q = compute_barcode(search_roi.apply(read_image(search_image)), atlas.params());
      const SearchResult hit = search(atlas, q);
      out << "best " << hit.best_id << "\n"
          << "similarity " << std::setprecision(6) << std::fixed << hit.similarity << "\n";
    } else if (cons->parsed()) {
      const Atlas atlas = load_atlas(cons_atlas);
      const Barcode q = compute_barcode(cons_roi.apply(read_image(cons_image)), atlas.params());
      const SearchResult hit = search(atlas, q);
      const ConsensusResult fused = staple(atlas.entry(hit.best_index).segments);
      write_mask(cons_out, fused.mask);
      out << "best " << hit.best_id << "\n"
          << "similarity " << std::setprecision(6) << std::fixed << hit.similarity << "\n"
          << "staple_iterations " << fused.iters << (fused.converged ? "" : " (not converged)") << "\n";
      if (!cons_segment.empty()) {
        const BinaryMask seg = read_mask(cons_segment);
        if (!seg.same_shape(fused.mask)) {
          throw InvalidArgument("segment " + cons_segment + " does not match the atlas mask size");
        }
        out << "jaccard " << std::setprecision(4) << jaccard(seg, fused.mask) << "\n";
      }
    } else if (loo->parsed()) {
      const Dataset ds = load_dataset(loo_data);
      for (std::size_t n : sizes) {
        if (n > ds.size()) {
          throw InvalidArgument("size " + std::to_string(n) + " exceeds the " + std::to_string(ds.size()) +
                                " images in " + loo_data);
        }
      }
      std::size_t largest = *std::max_element(sizes.begin(), sizes.end());
      const Dataset pool = ds.head(largest);
      const auto fused = case_consensus(pool, {}, threads);
      const std::optional<MaaReport> maa_rep =
          pool.has_gold() ? std::optional(compute_maa(pool, &fused)) : std::nullopt;
      out << "method " << code_type_label(loo_code.params().code) << ", " << pool.n_users() << " users\n";
      out << "n_I  mean_J  std_J  MAA   mean_search_s\n";
      for (std::size_t n : sizes) {
        const Dataset sub = ds.head(n);
        const Atlas atlas = build_atlas(sub, loo_code.params(), threads);
        const std::vector<BinaryMask> part(fused.begin(), fused.begin() + static_cast<std::ptrdiff_t>(n));
        LooOptions opt;
        opt.threads = threads;
        opt.timed = loo_timed;
        const LooReport rep = loo_consensus(sub, atlas, opt, &part);
        write_loo_csv(sizes.size() == 1 ? fs::path(loo_out) : sized_path(loo_out, n), rep);
        out << n << "  " << pct(rep.jaccard.mean) << "  " << pct(rep.jaccard.std) << "  ";
        if (maa_rep) {
          out << pct(summarize(std::span(maa_rep->jaccard).first(n)).mean);
        } else {
          out << "-";
        }
        out << "  " << std::scientific << std::setprecision(3) << rep.search_seconds.mean << std::defaultfloat
            << "\n";
      }
    } else if (maa->parsed()) {
      const Dataset ds = load_dataset(maa_data);
      const MaaReport rep = compute_maa(ds, nullptr, threads);
      write_maa_csv(maa_out, rep);
      out << "MAA " << pct(rep.stats.mean) << " +- " << pct(rep.stats.std) << " over " << rep.stats.n
          << " images\n";
    } else if (users->parsed()) {
      const Dataset ds = load_dataset(users_data);
      const Atlas atlas = build_atlas(ds, users_code.params(), threads);
      const auto fused = case_consensus(ds, {}, threads);
      LooOptions opt;
      opt.threads = threads;
      const LooReport rep = loo_consensus(ds, atlas, opt, &fused);
      const UserErrorReport errs = user_error_report(ds, rep.consensus);
      write_users_csv(users_out, errs);
      out << "user  J(G,S)  band  error\n";
      const auto groups = group_users(ds);
      for (std::size_t j = 0; j < groups.size(); ++j) {
        out << "u" << (j + 1) << "  " << pct(groups[j].mean_jaccard) << "  " << groups[j].band << "  "
            << pct(errs.users[j].error.mean) << "\n";
      }
      out << "grand mean error " << pct(errs.grand.mean) << " +- " << pct(errs.grand.std) << "\n";
    } else if (subgroup->parsed()) {
      const Dataset ds = load_dataset(sub_data);
      LooOptions opt;
      opt.threads = threads;
      std::vector<SubgroupResult> results;
      for (const auto& s : subsets) {
        results.push_back(subgroup_consensus_experiment(ds, sub_code.params(), s, sub_images, opt));
        const auto& r = results.back();
        out << "[" << format_user_list(r.users) << "] n_I=" << r.n_images << "  J " << pct(r.jaccard.mean)
            << " +- " << pct(r.jaccard.std) << "\n";
      }
      write_subgroup_csv(sub_out, results);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace batlas
