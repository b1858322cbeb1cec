#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "batlas/consensus.hpp"
#include "batlas/dataset.hpp"
#include "batlas/error.hpp"
#include "batlas/eval.hpp"
#include "batlas/image_io.hpp"
#include "batlas/random.hpp"
#include "batlas/synth.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace batlas;
namespace fs = std::filesystem;

namespace {

GenConfig quiet_config() {
  GenConfig cfg;
  cfg.speckle = 0.0;
  cfg.shadow_count = 0;
  cfg.blur_sigma = 0.0;
  cfg.rim_darkening = 0.0;
  return cfg;
}

UserModel perfect_user() { return UserModel{1.0, 1.0, 0.0, 0.0, 0.2, 1}; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("rng streams are deterministic and distributions have the right moments") {
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  std::set<std::uint64_t> seeds;
  for (std::uint64_t item = 0; item < 50; ++item) {
    for (std::uint64_t stream = 0; stream < 5; ++stream) seeds.insert(derive_seed(42, item, stream));
  }
  CHECK(seeds.size() == 250);

  Rng rng(123);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0, sg = 0, sg2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
    const double g = rng.gamma(4.0);
    REQUIRE(g > 0.0);
    sg += g;
    sg2 += g * g;
  }
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(std::abs(sn / n) < 0.01);
  CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.02));
  CHECK(sg / n == doctest::Approx(4.0).epsilon(0.01));
  CHECK(sg2 / n - (sg / n) * (sg / n) == doctest::Approx(4.0).epsilon(0.03));

  double small = 0;
  for (int i = 0; i < n; ++i) small += rng.gamma(0.5);
  CHECK(small / n == doctest::Approx(0.5).epsilon(0.02));

  for (int t = 0; t < 100; ++t) {
    const auto w = rng.dirichlet(1.0, 8);
    double total = 0;
    for (double x : w) {
      CHECK(x >= 0.0);
      total += x;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }

  int counts[3] = {0, 0, 0};
  for (int i = 0; i < 30000; ++i) counts[rng.uniform_int(-1, 1) + 1]++;
  for (int c : counts) CHECK(std::abs(c - 10000) < 400);
}

TEST_CASE("prior bank and spline") {
  const auto& priors = default_priors();
  REQUIRE(priors.size() == 8);
  for (const auto& p : priors) {
    CHECK(p.radii.size() == 32);
    double mean = 0;
    for (double r : p.radii) {
      CHECK(r > 0.0);
      mean += r;
    }
    CHECK(mean / 32 == doctest::Approx(1.0).epsilon(1e-3));
  }

  CHECK_THROWS_AS(parse_priors("a 1 2\n"), InvalidArgument);
  CHECK_THROWS_AS(parse_priors("a 1 2 -3\n"), InvalidArgument);
  CHECK_THROWS_AS(parse_priors("a 1 2 3\nb 1 2 3 4\n"), InvalidArgument);
  CHECK_THROWS_AS(parse_priors("a 1 2 x\n"), InvalidArgument);
  CHECK(parse_priors("# c\n\na 1 2 3 # tail\n").size() == 1);

  // Interpolating: control values are hit exactly at their angles.
  const std::vector<double> v = {1.0, 2.0, 0.5, 3.0, 1.5};
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double phi = 2.0 * std::numbers::pi * static_cast<double>(k) / v.size();
    CHECK(periodic_spline(v, phi) == doctest::Approx(v[k]).epsilon(1e-12));
    CHECK(periodic_spline(v, phi + 2.0 * std::numbers::pi) == doctest::Approx(v[k]).epsilon(1e-12));
  }
  const std::vector<double> flat(7, 2.5);
  for (double phi = -7.0; phi < 7.0; phi += 0.37) CHECK(periodic_spline(flat, phi) == 2.5);
}

TEST_CASE("rasterizing a constant radius gives the digital disk") {
  RadialContour c;
  c.cx = 30.0;
  c.cy = 27.5;
  c.radii.assign(16, 11.3);
  const BinaryMask m = rasterize(c, 64, 60);
  for (int y = 0; y < 60; ++y) {
    for (int x = 0; x < 64; ++x) {
      const double d2 = (x - c.cx) * (x - c.cx) + (y - c.cy) * (y - c.cy);
      REQUIRE(m.get(x, y) == (d2 <= 11.3 * 11.3));
    }
  }
  // Tiny contour still marks the centre pixel.
  c.radii.assign(16, 0.01);
  const BinaryMask dot = rasterize(c, 64, 60);
  CHECK(dot.count() >= 1);
  CHECK(dot.get(30, 28));
}

TEST_CASE("blending priors") {
  const auto& priors = default_priors();
  Pose pose{100.0, 110.0, 0.3, 40.0};
  for (std::size_t k = 0; k < priors.size(); ++k) {
    std::vector<double> w(priors.size(), 0.0);
    w[k] = 1.0;
    const RadialContour blended = blend_priors(priors, w, pose);
    RadialContour direct;
    direct.cx = pose.cx;
    direct.cy = pose.cy;
    direct.rotation = pose.rotation;
    for (double r : priors[k].radii) direct.radii.push_back(r * pose.scale);
    CHECK(rasterize(blended, 256, 256) == rasterize(direct, 256, 256));
  }

  const std::vector<ShapePrior> twins = {priors[2], priors[2]};
  const RadialContour one = blend_priors(std::span(twins).first(1), std::vector<double>{1.0}, pose);
  for (double a : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const RadialContour mix = blend_priors(twins, std::vector<double>{a, 1.0 - a}, pose);
    for (std::size_t i = 0; i < mix.radii.size(); ++i) {
      CHECK(mix.radii[i] == doctest::Approx(one.radii[i]).epsilon(1e-12));
    }
    CHECK(rasterize(mix, 256, 256) == rasterize(one, 256, 256));
  }

  CHECK_THROWS_AS(blend_priors(priors, std::vector<double>{1.0}, pose), InvalidArgument);
  std::vector<ShapePrior> mixed = {priors[0], ShapePrior{"odd", {1.0, 1.0, 1.0}}};
  CHECK_THROWS_AS(blend_priors(mixed, std::vector<double>{0.5, 0.5}, pose), InvalidArgument);
}

TEST_CASE("generate_gold: area bounds, determinism and golden output") {
  GenConfig cfg;
  const auto& priors = default_priors();
  for (std::uint64_t s = 0; s < 30; ++s) {
    Rng rng(s);
    const GoldShape g = generate_gold(priors, cfg, rng);
    const double frac = static_cast<double>(g.mask.count()) / (cfg.image_size * cfg.image_size);
    CHECK(frac >= 0.01);
    CHECK(frac <= 0.50);
    for (double r : g.contour.radii) CHECK(r > 0.0);
  }

  Rng r1(42), r2(42);
  const GoldShape a = generate_gold(priors, cfg, r1);
  const GoldShape b = generate_gold(priors, cfg, r2);
  CHECK(a.mask == b.mask);
  // Frozen reference for seed 42 with the default configuration and priors.
  CHECK(a.mask.count() == 8670);
  CHECK(testing::fnv1a(a.mask.to_bytes()) == 15438727048568036125ULL);

  GenConfig huge = cfg;
  huge.base_radius = 400.0;
  huge.max_retries = 5;
  Rng r3(1);
  CHECK_THROWS_AS(generate_gold(priors, huge, r3), GenerationError);
  Rng r4(1);
  CHECK_THROWS_AS(generate_gold(std::span(priors).first(1), cfg, r4), InvalidArgument);
}

TEST_CASE("render_image") {
  GenConfig cfg = quiet_config();
  Rng rng(3);
  const GoldShape g = generate_gold(default_priors(), cfg, rng);

  SUBCASE("noise-free rendering is two-level and follows the gold") {
    Rng r(9);
    const GrayImage img = render_image(g.mask, cfg, r);
    for (std::size_t i = 0; i < g.mask.size(); ++i) {
      const int x = static_cast<int>(i % img.width());
      const int y = static_cast<int>(i / img.width());
      REQUIRE(img.at(x, y) == (g.mask.test(i) ? cfg.background + cfg.contrast : cfg.background));
    }
  }

  SUBCASE("same seed, same image; integral 8-bit output") {
    GenConfig noisy;
    Rng r1(5), r2(5), r3(6);
    const GrayImage a = render_image(g.mask, noisy, r1);
    CHECK(a == render_image(g.mask, noisy, r2));
    CHECK_FALSE(a == render_image(g.mask, noisy, r3));
    for (double v : a.pixels()) {
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 255.0);
      REQUIRE(v == std::round(v));
    }
  }

  SUBCASE("speckle keeps the configured contrast on average") {
    GenConfig sp = quiet_config();
    sp.speckle = 0.3;
    Rng r(11);
    const GrayImage img = render_image(g.mask, sp, r);
    double si = 0, se = 0;
    std::size_t ni = 0, ne = 0;
    for (std::size_t i = 0; i < g.mask.size(); ++i) {
      const double v = img.pixels()[i];
      if (g.mask.test(i)) {
        si += v;
        ++ni;
      } else {
        se += v;
        ++ne;
      }
    }
    const double level_in = sp.background + sp.contrast;
    // Per-pixel sd is level * sqrt(speckle), plus up to 0.5 rounding.
    const double sigma_diff = std::sqrt(level_in * level_in * sp.speckle / ni +
                                        sp.background * sp.background * sp.speckle / ne);
    CHECK(std::abs((si / ni - se / ne) - sp.contrast) < 3.0 * sigma_diff + 0.5);
  }

  SUBCASE("shadows only darken") {
    GenConfig sh = quiet_config();
    sh.shadow_count = 3;
    sh.shadow_intensity = 0.5;
    Rng r(4);
    const GrayImage img = render_image(g.mask, sh, r);
    std::size_t darker = 0;
    for (std::size_t i = 0; i < g.mask.size(); ++i) {
      const double base = g.mask.test(i) ? sh.background + sh.contrast : sh.background;
      const double v = img.pixels()[i];
      REQUIRE(v <= base);
      darker += v < base;
    }
    CHECK(darker > 0);
  }

  Rng r(1);
  CHECK_THROWS_AS(render_image(BinaryMask(16, 16), cfg, r), EmptyMaskError);
}

TEST_CASE("simulated users") {
  GenConfig cfg;
  const auto& priors = default_priors();

  SUBCASE("a perfect user reproduces the gold exactly") {
    for (std::uint64_t s = 0; s < 10; ++s) {
      Rng g_rng(s);
      const GoldShape g = generate_gold(priors, cfg, g_rng);
      Rng u_rng(s + 100);
      CHECK(simulate_user_segment(g, perfect_user(), cfg.user, u_rng) == g.mask);
    }
  }

  SUBCASE("pure dilation path contains the gold") {
    UserSimConfig sim = cfg.user;
    sim.jitter_coeff = 0.0;
    const UserModel grower{0.3, 1.0, 1.0, 0.0, 0.2, 15};
    for (std::uint64_t s = 0; s < 10; ++s) {
      Rng g_rng(s);
      const GoldShape g = generate_gold(priors, cfg, g_rng);
      Rng u_rng(s);
      const BinaryMask seg = simulate_user_segment(g, grower, sim, u_rng);
      CHECK(seg.count() >= g.mask.count());
      CHECK(intersection_count(seg, g.mask) == g.mask.count());
    }
  }

  SUBCASE("segments always overlap the gold, even for the worst users") {
    const std::vector<UserModel> extremes = {
        {0.01, 0.0, -1.0, 0.05, 1.0, 21},
        {0.01, 0.0, 1.0, 0.05, 1.0, 21},
        {0.01, 0.0, -1.0, 0.05, 0.2, 21},
    };
    GenConfig tiny = cfg;
    tiny.base_radius = 16.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      Rng g_rng(s);
      const GoldShape g = generate_gold(priors, tiny, g_rng);
      for (const auto& u : extremes) {
        Rng u_rng(s * 7 + 1);
        const BinaryMask seg = simulate_user_segment(g, u, tiny.user, u_rng);
        CHECK(intersection_count(seg, g.mask) > 0);
      }
    }
  }

  SUBCASE("invalid users are rejected") {
    Rng g_rng(0);
    const GoldShape g = generate_gold(priors, cfg, g_rng);
    const std::vector<UserModel> bad = {
        {0.0, 1, 0, 0, 0.2, 1},  {1.1, 1, 0, 0, 0.2, 1},     {1, 1.5, 0, 0, 0.2, 1},
        {1, 1, 1.5, 0, 0.2, 1},  {1, 1, 0, 0.06, 0.2, 1},    {1, 1, 0, 0, 0.2, 2},
        {1, 1, 0, 0, 0.2, 23},   {1, 1, 0, 0, -0.1, 1},
    };
    for (const auto& u : bad) {
      Rng r(0);
      CHECK_THROWS_AS(simulate_user_segment(g, u, cfg.user, r), InvalidArgument);
    }
  }
}

TEST_CASE("user banks") {
  const auto& bank = default_user_bank();
  REQUIRE(bank.size() == 20);
  for (const auto& u : bank) {
    CHECK_NOTHROW(u.validate());
    CHECK(u.anatomical_difficulty == 0.2);
  }
  const auto users = make_user_bank(35, 9);
  REQUIRE(users.size() == 35);
  for (int j = 0; j < 20; ++j) CHECK(users[j] == bank[j]);
  for (const auto& u : users) CHECK_NOTHROW(u.validate());
  CHECK(make_user_bank(35, 9) == users);
  CHECK_THROWS_AS(make_user_bank(0, 9), InvalidArgument);
}

TEST_CASE("user bank statistics over a generated dataset") {
  const Dataset ds = generate_dataset(120, default_user_bank(), GenConfig{}, 0);
  const auto groups = group_users(ds);

  std::vector<double> experience, mean_j;
  for (const auto& g : groups) {
    experience.push_back(ds.users[g.user].experience);
    mean_j.push_back(g.mean_jaccard);
  }
  CHECK(testing::spearman(experience, mean_j) > 0.7);

  // Expected partition: six non-empty bands, best users 9, 11 and 19.
  std::string bands;
  for (const auto& g : groups) bands += g.band;
  CHECK(bands == "CCBBCCDBAEADFBEEEEAC");

  for (int j = 0; j < ds.n_users(); ++j) {
    const double t = ds.users[j].size_tendency;
    if (std::abs(t) <= 0.5) continue;
    double diff = 0;
    for (const auto& c : ds.cases) {
      diff += static_cast<double>(c.segments[j].count()) - static_cast<double>(c.gold->count());
    }
    CHECK_MESSAGE((diff > 0) == (t > 0), "user " << j + 1);
  }

  for (const auto& c : ds.cases) {
    for (const auto& s : c.segments) REQUIRE(jaccard(*c.gold, s) > 0.0);
  }
}

TEST_CASE("generate_dataset") {
  GenConfig cfg;
  const std::vector<UserModel> users(default_user_bank().begin(), default_user_bank().begin() + 3);

  const Dataset ds = generate_dataset(5, users, cfg, 1);
  REQUIRE(ds.size() == 5);
  CHECK(ds.n_users() == 3);
  CHECK(ds.has_gold());
  CHECK(ds.cases[0].id == "img0001");
  CHECK(ds.cases[4].id == "img0005");
  for (const auto& c : ds.cases) {
    CHECK(c.segments.size() == 3);
    CHECK(c.image.width() == cfg.image_size);
  }

  SUBCASE("independent of thread count and of dataset size") {
    const Dataset par = generate_dataset(5, users, cfg, 4);
    const Dataset longer = generate_dataset(8, users, cfg, 1);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(par.cases[i].image == ds.cases[i].image);
      CHECK(par.cases[i].segments == ds.cases[i].segments);
      CHECK(longer.cases[i].image == ds.cases[i].image);
      CHECK(*longer.cases[i].gold == *ds.cases[i].gold);
      CHECK(longer.cases[i].segments == ds.cases[i].segments);
    }
  }

  SUBCASE("single perfect user") {
    const std::vector<UserModel> one = {perfect_user()};
    const Dataset single = generate_dataset(1, one, cfg);
    REQUIRE(single.size() == 1);
    CHECK(single.cases[0].segments[0] == *single.cases[0].gold);
  }

  SUBCASE("different seeds differ") {
    GenConfig other = cfg;
    other.seed = 43;
    CHECK_FALSE(generate_dataset(1, users, other).cases[0].image == ds.cases[0].image);
  }

  SUBCASE("head and user selection") {
    const Dataset h = ds.head(2);
    CHECK(h.size() == 2);
    CHECK(h.cases[1].id == ds.cases[1].id);
    CHECK_THROWS_AS(ds.head(6), InvalidArgument);
    const std::vector<int> pick = {2, 0};
    const Dataset sel = ds.select_users(pick);
    CHECK(sel.n_users() == 2);
    CHECK(sel.cases[3].segments[0] == ds.cases[3].segments[2]);
    CHECK(sel.cases[3].segments[1] == ds.cases[3].segments[0]);
    CHECK(sel.users[0] == users[2]);
    const std::vector<int> bad = {5};
    CHECK_THROWS_AS(ds.select_users(bad), InvalidArgument);
  }

  CHECK_THROWS_AS(generate_dataset(0, users, cfg), InvalidArgument);
  CHECK_THROWS_AS(generate_dataset(2, std::vector<UserModel>{}, cfg), InvalidArgument);
}

TEST_CASE("dataset files round trip and are byte-stable") {
  GenConfig cfg;
  cfg.image_size = 64;
  cfg.base_radius = 14.0;
  cfg.translation_range = 2.0;
  const auto users = make_user_bank(4, cfg.seed);
  const Dataset ds = generate_dataset(6, users, cfg);

  const fs::path a = testing::scratch_dir("ds_a");
  const fs::path b = testing::scratch_dir("ds_b");
  write_dataset(a, ds, &cfg);
  write_dataset(b, generate_dataset(6, users, cfg), &cfg);

  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    REQUIRE(fs::exists(b / rel));
    CHECK_MESSAGE(slurp(entry.path()) == slurp(b / rel), rel.string());
  }
  CHECK(fs::exists(a / "users" / "u4" / "img0006.pgm"));
  CHECK(fs::exists(a / "gold" / "img0001.pgm"));

  const std::string manifest = slurp(a / "manifest.tsv");
  CHECK(manifest.find(std::string(kRngAlgorithm)) != std::string::npos);
  CHECK(manifest.find("id\tseed\timage\tgold\n") != std::string::npos);

  const Dataset back = load_dataset(a);
  REQUIRE(back.size() == ds.size());
  CHECK(back.master_seed == cfg.seed);
  CHECK(back.users == ds.users);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.cases[i].id == ds.cases[i].id);
    CHECK(back.cases[i].seed == ds.cases[i].seed);
    CHECK(back.cases[i].image == ds.cases[i].image);
    CHECK(*back.cases[i].gold == *ds.cases[i].gold);
    CHECK(back.cases[i].segments == ds.cases[i].segments);
  }

  GenConfig reread;
  std::vector<UserModel> none;
  apply_config(slurp(a / "config.txt"), reread, none);
  CHECK(format_config(reread) == format_config(cfg));

  SUBCASE("ingest without gold or user models") {
    const fs::path c = testing::scratch_dir("ds_c");
    fs::create_directories(c / "images");
    fs::create_directories(c / "users" / "u1");
    fs::create_directories(c / "users" / "u2");
    std::ofstream(c / "manifest.tsv") << "id\timage\nx1\timages/x1.pgm\n";
    write_image(c / "images" / "x1.pgm", ds.cases[0].image);
    write_mask(c / "users" / "u1" / "x1.pgm", ds.cases[0].segments[0]);
    write_mask(c / "users" / "u2" / "x1.png", ds.cases[0].segments[1]);
    const Dataset in = load_dataset(c);
    CHECK(in.size() == 1);
    CHECK(in.n_users() == 2);
    CHECK_FALSE(in.has_gold());
    CHECK(in.users.empty());
    CHECK(in.cases[0].segments[1] == ds.cases[0].segments[1]);

    fs::remove(c / "users" / "u2" / "x1.png");
    try {
      load_dataset(c);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("x1") != std::string::npos);
    }
  }

  CHECK_THROWS_AS(load_dataset(testing::scratch_dir("ds_empty")), IoError);
}

TEST_CASE("config parsing") {
  GenConfig cfg;
  auto users = make_user_bank(3, 1);
  apply_config("# comment\nimage_size = 128\nspeckle=0.5  # trailing\nseed=7\n"
               "user_jitter_coeff = 2\nu2.experience = 0.25\nu3.morph_kernel=9\n",
               cfg, users);
  CHECK(cfg.image_size == 128);
  CHECK(cfg.speckle == 0.5);
  CHECK(cfg.seed == 7);
  CHECK(cfg.user.jitter_coeff == 2.0);
  CHECK(users[1].experience == 0.25);
  CHECK(users[2].morph_kernel == 9);

  auto expect_error = [&](const std::string& text, const std::string& fragment) {
    GenConfig c;
    auto u = make_user_bank(3, 1);
    try {
      apply_config(text, c, u);
      FAIL("expected InvalidArgument for: " << text);
    } catch (const InvalidArgument& e) {
      CHECK_MESSAGE(std::string(e.what()).find(fragment) != std::string::npos, std::string(e.what()));
    }
  };
  expect_error("nonsense = 1\n", "nonsense");
  expect_error("speckle\n", "line 1");
  expect_error("\nspeckle = abc\n", "line 2");
  expect_error("image_size = 2.5\n", "image_size");
  expect_error("u4.experience = 0.5\n", "out of range");
  expect_error("u1.wisdom = 0.5\n", "wisdom");
  expect_error("u1.morph_kernel = 4\n", "user 1");
  expect_error("translation_range = -1\n", "translation_range");
}
