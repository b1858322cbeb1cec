#include "batlas/eval.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>

#include "batlas/error.hpp"
#include "batlas/parallel.hpp"

namespace batlas {

Stats summarize(std::span<const double> values) {
  Stats s;
  s.n = values.size();
  if (s.n == 0) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

bool staple_in_range(const ConsensusResult& r) {
  for (double w : r.posterior) {
    if (!(w >= 0.0 && w <= 1.0)) return false;
  }
  for (const auto& p : r.per_rater) {
    if (!(p.sensitivity >= kRaterClamp && p.sensitivity <= 1.0)) return false;
    if (!(p.specificity >= kRaterClamp && p.specificity <= 1.0)) return false;
  }
  return true;
}

std::vector<BinaryMask> case_consensus(const Dataset& dataset, const StapleParams& params,
                                       int threads, StapleAudit* audit) {
  std::vector<BinaryMask> out(dataset.size());
  std::vector<char> ok(dataset.size(), 1);
  parallel_for(dataset.size(), threads, [&](std::size_t i) {
    const auto& c = dataset.cases[i];
    try {
      auto r = staple(c.segments, params);
      ok[i] = staple_in_range(r);
      out[i] = std::move(r.mask);
    } catch (const Error& e) {
      throw Error("consensus for '" + c.id + "': " + e.what());
    }
  });
  if (audit) {
    audit->runs += dataset.size();
    for (char v : ok) audit->violations += v ? 0 : 1;
  }
  return out;
}

MaaReport compute_maa(const Dataset& dataset, const std::vector<BinaryMask>* consensus, int threads) {
  for (const auto& c : dataset.cases) {
    if (!c.gold) throw InvalidArgument("case '" + c.id + "' has no gold segment");
  }
  std::vector<BinaryMask> local;
  if (!consensus) {
    local = case_consensus(dataset, {}, threads);
    consensus = &local;
  }
  if (consensus->size() != dataset.size()) throw InvalidArgument("consensus count does not match the dataset");
  MaaReport rep;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    rep.ids.push_back(dataset.cases[i].id);
    rep.jaccard.push_back(jaccard((*consensus)[i], *dataset.cases[i].gold));
  }
  rep.stats = summarize(rep.jaccard);
  return rep;
}

LooReport loo_consensus(const Dataset& dataset, const Atlas& atlas, const LooOptions& options,
                        const std::vector<BinaryMask>* consensus) {
  if (atlas.size() != dataset.size()) {
    throw InvalidArgument("atlas has " + std::to_string(atlas.size()) + " entries but the dataset has " +
                          std::to_string(dataset.size()) + " cases");
  }
  if (consensus && consensus->size() != dataset.size()) {
    throw InvalidArgument("consensus count does not match the dataset");
  }
  const std::size_t n = dataset.size();
  LooReport rep;
  rep.method = std::string(code_type_label(atlas.params().code));
  rep.n_images = n;
  rep.n_users = atlas.n_users();
  rep.rows.resize(n);
  rep.consensus.resize(n);

  std::vector<std::optional<Barcode>> codes(n);
  parallel_for(n, options.threads, [&](std::size_t i) {
    codes[i] = compute_barcode(dataset.cases[i].image, atlas.params());
  });

  auto run_query = [&](std::size_t i) {
    const auto& c = dataset.cases[i];
    LooRow& row = rep.rows[i];
    row.query_id = c.id;
    SearchResult hit;
    try {
      hit = search_excluding(atlas, *codes[i], c.id);
    } catch (const Error& e) {
      throw Error("query '" + c.id + "': " + e.what());
    }
    row.best_id = hit.best_id;
    row.best_index = hit.best_index;
    row.similarity = hit.similarity;
    row.search_seconds = hit.elapsed_seconds;
  };
  if (options.timed) {
    for (std::size_t i = 0; i < n; ++i) run_query(i);
  } else {
    parallel_for(n, options.threads, run_query);
  }

  // STAPLE once per distinct retrieved entry.
  std::vector<std::size_t> needed;
  std::vector<char> mark(n, 0);
  for (const auto& r : rep.rows) {
    if (!mark[r.best_index]) {
      mark[r.best_index] = 1;
      needed.push_back(r.best_index);
    }
  }
  std::vector<BinaryMask> fused(n);
  if (consensus) {
    for (std::size_t b : needed) fused[b] = (*consensus)[b];
  } else {
    parallel_for(needed.size(), options.threads, [&](std::size_t k) {
      const std::size_t b = needed[k];
      try {
        fused[b] = staple(atlas.entry(b).segments, options.staple).mask;
      } catch (const Error& e) {
        throw Error("consensus for '" + atlas.entry(b).id + "': " + e.what());
      }
    });
  }

  std::vector<double> js, ts;
  for (std::size_t i = 0; i < n; ++i) {
    LooRow& row = rep.rows[i];
    rep.consensus[i] = fused[row.best_index];
    const auto& gold = dataset.cases[i].gold;
    row.jaccard = gold ? jaccard(rep.consensus[i], *gold) : std::numeric_limits<double>::quiet_NaN();
    if (gold) js.push_back(row.jaccard);
    ts.push_back(row.search_seconds);
  }
  rep.jaccard = summarize(js);
  rep.search_seconds = summarize(ts);
  return rep;
}

UserErrorReport user_error_report(const Dataset& dataset, std::span<const BinaryMask> loo) {
  if (loo.size() != dataset.size()) throw InvalidArgument("consensus count does not match the dataset");
  UserErrorReport rep;
  const int n_users = dataset.n_users();
  std::vector<double> means;
  for (int j = 0; j < n_users; ++j) {
    std::vector<double> err;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const auto& c = dataset.cases[i];
      if (!c.gold) throw InvalidArgument("case '" + c.id + "' has no gold segment");
      err.push_back(std::abs(jaccard(*c.gold, c.segments[j]) - jaccard(loo[i], c.segments[j])));
    }
    rep.users.push_back(UserError{j, summarize(err)});
    means.push_back(rep.users.back().error.mean);
  }
  rep.grand = summarize(means);
  return rep;
}

char expertise_band(double j) {
  if (j >= 0.85) return 'A';
  if (j >= 0.80) return 'B';
  if (j >= 0.70) return 'C';
  if (j >= 0.60) return 'D';
  if (j >= 0.50) return 'E';
  return 'F';
}

std::vector<UserGroup> group_users(const Dataset& dataset) {
  std::vector<UserGroup> out;
  for (int j = 0; j < dataset.n_users(); ++j) {
    double total = 0.0;
    for (const auto& c : dataset.cases) {
      if (!c.gold) throw InvalidArgument("case '" + c.id + "' has no gold segment");
      total += jaccard(*c.gold, c.segments[j]);
    }
    const double mean = dataset.size() ? total / static_cast<double>(dataset.size()) : 0.0;
    out.push_back(UserGroup{j, mean, expertise_band(mean)});
  }
  return out;
}

SubgroupResult subgroup_consensus_experiment(const Dataset& dataset, const BarcodeParams& params,
                                             std::span<const int> users, std::size_t n_images,
                                             const LooOptions& options) {
  if (users.size() < 2) throw InvalidArgument("a user subgroup needs at least 2 users");
  if (n_images < 2) throw InvalidArgument("a subgroup experiment needs at least 2 images");
  const Dataset sub = dataset.head(n_images).select_users(users);
  const Atlas atlas = build_atlas(sub, params, options.threads);
  const LooReport rep = loo_consensus(sub, atlas, options);
  return SubgroupResult{std::vector<int>(users.begin(), users.end()), n_images, rep.jaccard};
}

std::vector<int> parse_user_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      throw InvalidArgument("bad user id '" + item + "'");
    }
    if (used != item.size() || v < 1) throw InvalidArgument("bad user id '" + item + "'");
    out.push_back(v - 1);
  }
  if (out.empty()) throw InvalidArgument("empty user list");
  return out;
}

std::string format_user_list(std::span<const int> users) {
  std::string s;
  for (std::size_t k = 0; k < users.size(); ++k) {
    if (k) s += ' ';
    s += 'u' + std::to_string(users[k] + 1);
  }
  return s;
}

namespace {

std::string pct(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

std::string num(double v, const char* f) {
  char buf[48];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void emit(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.close();
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace

void write_loo_csv(const std::filesystem::path& path, const LooReport& report) {
  std::ostringstream out;
  out << "query_id,best_id,similarity,jaccard,search_seconds\n";
  for (const auto& r : report.rows) {
    out << r.query_id << ',' << r.best_id << ',' << num(r.similarity, "%.6f") << ',' << pct(r.jaccard)
        << ',' << num(r.search_seconds, "%.9f") << '\n';
  }
  emit(path, out.str());
}

void write_maa_csv(const std::filesystem::path& path, const MaaReport& report) {
  std::ostringstream out;
  out << "image_id,maa_jaccard\n";
  for (std::size_t i = 0; i < report.ids.size(); ++i) out << report.ids[i] << ',' << pct(report.jaccard[i]) << '\n';
  emit(path, out.str());
}

void write_users_csv(const std::filesystem::path& path, const UserErrorReport& report) {
  std::ostringstream out;
  out << "user,mean_error,std_error\n";
  for (const auto& u : report.users) {
    out << 'u' << (u.user + 1) << ',' << pct(u.error.mean) << ',' << pct(u.error.std) << '\n';
  }
  out << "all," << pct(report.grand.mean) << ',' << pct(report.grand.std) << '\n';
  emit(path, out.str());
}

void write_subgroup_csv(const std::filesystem::path& path, std::span<const SubgroupResult> results) {
  std::ostringstream out;
  out << "subset,n_I,mean_j,std_j\n";
  for (const auto& r : results) {
    out << format_user_list(r.users) << ',' << r.n_images << ',' << pct(r.jaccard.mean) << ','
        << pct(r.jaccard.std) << '\n';
  }
  emit(path, out.str());
}

}  // namespace batlas
