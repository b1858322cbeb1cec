#include <cmath>
#include <fstream>
#include <sstream>

#include "batlas/dataset.hpp"
#include "batlas/error.hpp"
#include "batlas/eval.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace batlas;
namespace fs = std::filesystem;

namespace {

GenConfig small_config() {
  GenConfig cfg;
  cfg.image_size = 96;
  cfg.base_radius = 22.0;
  cfg.translation_range = 3.0;
  return cfg;
}

const Dataset& small_dataset() {
  static const Dataset ds = generate_dataset(30, make_user_bank(6, 42), small_config());
  return ds;
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("summary statistics use the sample standard deviation") {
  const std::vector<double> v = {2, 4, 4, 4, 5, 5, 7, 9};
  const Stats s = summarize(v);
  CHECK(s.n == 8);
  CHECK(s.mean == doctest::Approx(5.0));
  CHECK(s.std == doctest::Approx(std::sqrt(32.0 / 7.0)));
  CHECK(summarize(std::vector<double>{3.0}).std == 0.0);
  CHECK(summarize(std::vector<double>{}).n == 0);
}

TEST_CASE("expertise bands") {
  CHECK(expertise_band(1.0) == 'A');
  CHECK(expertise_band(0.85) == 'A');
  CHECK(expertise_band(0.849) == 'B');
  CHECK(expertise_band(0.80) == 'B');
  CHECK(expertise_band(0.72) == 'C');
  CHECK(expertise_band(0.70) == 'C');
  CHECK(expertise_band(0.65) == 'D');
  CHECK(expertise_band(0.55) == 'E');
  CHECK(expertise_band(0.4999) == 'F');
  CHECK(expertise_band(0.0) == 'F');
}

TEST_CASE("perfect users give MAA 1, zero user error and band A") {
  const std::vector<UserModel> users(3, UserModel{1.0, 1.0, 0.0, 0.0, 0.2, 1});
  const Dataset ds = generate_dataset(8, users, small_config());
  const MaaReport maa = compute_maa(ds);
  CHECK(maa.stats.mean == 1.0);
  CHECK(maa.stats.std == 0.0);

  std::vector<BinaryMask> golds;
  for (const auto& c : ds.cases) golds.push_back(*c.gold);
  const UserErrorReport err = user_error_report(ds, golds);
  CHECK(err.grand.mean == 0.0);
  for (const auto& u : err.users) CHECK(u.error.mean == 0.0);

  for (const auto& g : group_users(ds)) {
    CHECK(g.mean_jaccard == 1.0);
    CHECK(g.band == 'A');
  }
}

TEST_CASE("two identical images retrieve each other") {
  const Dataset& src = small_dataset();
  Dataset ds;
  ds.users = src.users;
  ds.cases = {src.cases[0], src.cases[0]};
  ds.cases[1].id = "twin";
  const Atlas atlas = build_atlas(ds, BarcodeParams{});
  const LooReport rep = loo_consensus(ds, atlas);
  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.rows[0].best_id == "twin");
  CHECK(rep.rows[1].best_id == src.cases[0].id);
  CHECK(rep.rows[0].similarity == 1.0);
  const MaaReport maa = compute_maa(ds);
  CHECK(rep.rows[0].jaccard == maa.jaccard[0]);
  CHECK(rep.rows[1].jaccard == maa.jaccard[1]);
}

TEST_CASE("leave-one-out report") {
  const Dataset& ds = small_dataset();
  const auto consensus = case_consensus(ds);
  const MaaReport maa = compute_maa(ds, &consensus);

  for (auto code : {CodeType::kRbcLocal, CodeType::kRbcIncremental, CodeType::kRbcGlobal, CodeType::kLbp}) {
    BarcodeParams params;
    params.code = code;
    const Atlas atlas = build_atlas(ds, params);
    LooOptions timed;
    timed.timed = true;
    const LooReport rep = loo_consensus(ds, atlas, timed, &consensus);
    CAPTURE(rep.method);
    REQUIRE(rep.rows.size() == ds.size());
    CHECK(rep.n_images == ds.size());
    CHECK(rep.n_users == 6);

    std::vector<double> js, ts;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const LooRow& row = rep.rows[i];
      CHECK(row.query_id == ds.cases[i].id);
      CHECK(row.best_id != row.query_id);
      CHECK(row.best_id == atlas.entry(row.best_index).id);
      // Oracle: brute-force best similarity and a freshly computed STAPLE.
      const Barcode q = compute_barcode(ds.cases[i].image, params);
      double best = -1.0;
      for (std::size_t j = 0; j < ds.size(); ++j) {
        if (j != i) best = std::max(best, hamming_similarity(q, atlas.entry(j).barcode));
      }
      CHECK(row.similarity == best);
      const BinaryMask c = staple(ds.cases[row.best_index].segments).mask;
      CHECK(rep.consensus[i] == c);
      CHECK(row.jaccard == jaccard(c, *ds.cases[i].gold));
      CHECK(row.search_seconds >= 0.0);
      js.push_back(row.jaccard);
      ts.push_back(row.search_seconds);
    }
    CHECK(rep.jaccard.mean == summarize(js).mean);
    CHECK(rep.jaccard.std == summarize(js).std);
    CHECK(rep.search_seconds.mean == summarize(ts).mean);
    CHECK(rep.jaccard.mean <= maa.stats.mean);

    // Parallel and uncached paths agree on everything except timing.
    const LooReport par = loo_consensus(ds, atlas, LooOptions{4, false, {}});
    for (std::size_t i = 0; i < ds.size(); ++i) {
      CHECK(par.rows[i].best_id == rep.rows[i].best_id);
      CHECK(par.rows[i].jaccard == rep.rows[i].jaccard);
    }
  }

  const Atlas atlas = build_atlas(ds.head(10), BarcodeParams{});
  CHECK_THROWS_AS(loo_consensus(ds, atlas), InvalidArgument);
}

TEST_CASE("errors name the offending case") {
  const Dataset one = small_dataset().head(1);
  const Atlas atlas = build_atlas(one, BarcodeParams{});
  try {
    loo_consensus(one, atlas);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("img0001") != std::string::npos);
  }
  Dataset no_gold = small_dataset().head(3);
  no_gold.cases[2].gold.reset();
  try {
    compute_maa(no_gold);
    FAIL("expected InvalidArgument");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("img0003") != std::string::npos);
  }
}

TEST_CASE("user error report matches a recomputation from the masks") {
  const Dataset& ds = small_dataset();
  const Atlas atlas = build_atlas(ds, BarcodeParams{});
  const LooReport rep = loo_consensus(ds, atlas);
  const UserErrorReport err = user_error_report(ds, rep.consensus);
  REQUIRE(err.users.size() == 6);
  std::vector<double> means;
  for (int j = 0; j < 6; ++j) {
    std::vector<double> e;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto& s = ds.cases[i].segments[j];
      const double gi = static_cast<double>(intersection_count(*ds.cases[i].gold, s)) /
                        static_cast<double>(union_count(*ds.cases[i].gold, s));
      const double ci = static_cast<double>(intersection_count(rep.consensus[i], s)) /
                        static_cast<double>(union_count(rep.consensus[i], s));
      e.push_back(std::abs(gi - ci));
    }
    const Stats s = summarize(e);
    CHECK(err.users[j].error.mean == doctest::Approx(s.mean).epsilon(1e-12));
    CHECK(err.users[j].error.std == doctest::Approx(s.std).epsilon(1e-12));
    CHECK(s.mean >= 0.0);
    CHECK(s.mean <= 1.0);
    means.push_back(s.mean);
  }
  CHECK(err.grand.mean == doctest::Approx(summarize(means).mean).epsilon(1e-12));
  CHECK_THROWS_AS(user_error_report(ds, std::span(rep.consensus).first(3)), InvalidArgument);
}

TEST_CASE("subgroup experiments") {
  const Dataset& ds = small_dataset();
  const std::vector<int> all = {0, 1, 2, 3, 4, 5};
  const SubgroupResult full = subgroup_consensus_experiment(ds, BarcodeParams{}, all, ds.size());
  const LooReport rep = loo_consensus(ds, build_atlas(ds, BarcodeParams{}));
  CHECK(full.jaccard.mean == rep.jaccard.mean);
  CHECK(full.jaccard.std == rep.jaccard.std);
  CHECK(full.n_images == ds.size());

  const std::vector<int> pair = {0, 3};
  const SubgroupResult sub = subgroup_consensus_experiment(ds, BarcodeParams{}, pair, 12);
  CHECK(sub.jaccard.n == 12);
  CHECK(sub.users == pair);

  const std::vector<int> single = {1};
  CHECK_THROWS_AS(subgroup_consensus_experiment(ds, BarcodeParams{}, single, 10), InvalidArgument);
  CHECK_THROWS_AS(subgroup_consensus_experiment(ds, BarcodeParams{}, pair, 31), InvalidArgument);
  const std::vector<int> out_of_range = {0, 9};
  CHECK_THROWS_AS(subgroup_consensus_experiment(ds, BarcodeParams{}, out_of_range, 10), InvalidArgument);
}

TEST_CASE("user lists") {
  CHECK(parse_user_list("9,11,19") == std::vector<int>{8, 10, 18});
  CHECK(format_user_list(std::vector<int>{8, 10, 18}) == "u9 u11 u19");
  CHECK_THROWS_AS(parse_user_list(""), InvalidArgument);
  CHECK_THROWS_AS(parse_user_list("1,,2"), InvalidArgument);
  CHECK_THROWS_AS(parse_user_list("0"), InvalidArgument);
  CHECK_THROWS_AS(parse_user_list("3x"), InvalidArgument);
}

TEST_CASE("csv reports") {
  const Dataset& ds = small_dataset();
  const auto consensus = case_consensus(ds);
  const Atlas atlas = build_atlas(ds, BarcodeParams{});
  const LooReport rep = loo_consensus(ds, atlas, {}, &consensus);
  const fs::path dir = testing::scratch_dir("csv");

  write_loo_csv(dir / "loo.csv", rep);
  auto loo = lines_of(dir / "loo.csv");
  REQUIRE(loo.size() == ds.size() + 1);
  CHECK(loo[0] == "query_id,best_id,similarity,jaccard,search_seconds");
  {
    std::stringstream row(loo[1]);
    std::string q, b, sim, j, t;
    std::getline(row, q, ',');
    std::getline(row, b, ',');
    std::getline(row, sim, ',');
    std::getline(row, j, ',');
    std::getline(row, t, ',');
    CHECK(q == "img0001");
    CHECK(b == rep.rows[0].best_id);
    CHECK(std::stod(sim) == doctest::Approx(rep.rows[0].similarity).epsilon(1e-6));
    CHECK(std::stod(j) == doctest::Approx(100.0 * rep.rows[0].jaccard).epsilon(0.0006));
    CHECK(j.find('.') == j.size() - 2);
  }

  const MaaReport maa = compute_maa(ds, &consensus);
  write_maa_csv(dir / "maa.csv", maa);
  auto m = lines_of(dir / "maa.csv");
  REQUIRE(m.size() == ds.size() + 1);
  CHECK(m[0] == "image_id,maa_jaccard");

  write_users_csv(dir / "users.csv", user_error_report(ds, rep.consensus));
  auto u = lines_of(dir / "users.csv");
  REQUIRE(u.size() == 6 + 2);
  CHECK(u[0] == "user,mean_error,std_error");
  CHECK(u[1].rfind("u1,", 0) == 0);
  CHECK(u[7].rfind("all,", 0) == 0);

  const std::vector<SubgroupResult> subs = {SubgroupResult{{0, 1, 2}, 20, Stats{0.8812, 0.04, 20}}};
  write_subgroup_csv(dir / "sub.csv", subs);
  auto s = lines_of(dir / "sub.csv");
  REQUIRE(s.size() == 2);
  CHECK(s[0] == "subset,n_I,mean_j,std_j");
  CHECK(s[1] == "u1 u2 u3,20,88.1,4.0");

  CHECK_THROWS_AS(write_maa_csv(dir / "missing" / "x.csv", maa), IoError);
}
