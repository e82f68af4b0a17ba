#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "ialp/data.hpp"

using namespace ialp;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("ialp_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

InteractionLog log_of_size(std::size_t n) {
  InteractionLog log;
  for (std::size_t u = 0; u < n; ++u) {
    log.sequences.push_back({static_cast<UserId>(u), {0, 1}, {0, 1}});
  }
  return log;
}

}  // namespace

TEST(Catalog, ThreeRows) {
  std::istringstream in("id,title,artist\n0,A,x\n1,\"B, the second\",y\n2,C,\n");
  const auto cat = parse_catalog(in);
  EXPECT_EQ(cat.num_items(), 3u);
  EXPECT_EQ(*cat.at(1).attribute("title"), "B, the second");
  EXPECT_EQ(cat.schema, (std::vector<std::string>{"title", "artist"}));
}

TEST(Catalog, RowsMayArriveOutOfOrder) {
  std::istringstream in("id,title\n1,B\n0,A\n");
  const auto cat = parse_catalog(in);
  EXPECT_EQ(*cat.at(0).attribute("title"), "A");
}

TEST(Catalog, Errors) {
  auto parse = [](const std::string& text) {
    return error_of([&] {
      std::istringstream in(text);
      parse_catalog(in);
    });
  };
  EXPECT_EQ(parse("id,title\n0,a\n2,b\n"), "id gap at 1");
  EXPECT_NE(parse("id,title\n0,a\n0,b\n").find("line 3: duplicate id 0"), std::string::npos);
  EXPECT_NE(parse("id,title\n0,a\n1,b,c\n").find("line 3"), std::string::npos);
  EXPECT_NE(parse("id,title\nx,a\n1,b\n").find("line 2: malformed id"), std::string::npos);
  EXPECT_NE(parse("id,title\n0,\"a\n1,b\n").find("line 2"), std::string::npos);
  EXPECT_NE(parse("id,title\n0,a\n1,\n").find("no attribute text"), std::string::npos);
  EXPECT_FALSE(parse("id,title\n0,a\n").empty());
  EXPECT_FALSE(error_of([] { load_catalog("/nonexistent/catalog.csv"); }).empty());
}

TEST(Catalog, LargeCatalogLoads) {
  TempDir dir;
  {
    std::ofstream out(dir / "cat.csv");
    out << "id,title,album,artist\n";
    for (int i = 0; i < 18297; ++i) out << i << ",Song " << i << ",Album,Artist " << i % 97 << "\n";
  }
  EXPECT_EQ(load_catalog(dir / "cat.csv").num_items(), 18297u);
}

TEST(Interactions, GroupsAndOrdersByTimestamp) {
  std::istringstream in("user_id,item_id,timestamp\n7,2,30\n7,0,10\n7,1,20\n7,2,40\n3,1,5\n");
  const auto log = parse_interactions(in, 3);
  ASSERT_EQ(log.sequences.size(), 1u);
  EXPECT_EQ(log.sequences[0].items, (ItemSequence{0, 1, 2, 2}));
  EXPECT_EQ(log.dropped_short, 1u);
}

TEST(Interactions, Errors) {
  auto parse = [](const std::string& text) {
    return error_of([&] {
      std::istringstream in(text);
      parse_interactions(in, 3);
    });
  };
  EXPECT_NE(parse("user_id,item_id,timestamp\n1,0,1\n1,5,2\n").find("line 3: unknown item id 5"),
            std::string::npos);
  EXPECT_NE(parse("user_id,item_id,timestamp\n1,0,yesterday\n").find("line 2: unparseable"),
            std::string::npos);
  EXPECT_FALSE(parse("user,item\n").empty());
}

TEST(Interactions, IndustryScaleCounts) {
  TempDir dir;
  // 10,935 users: 4,673 with 6 interactions, 6,262 with 7 -> 71,872 rows.
  std::size_t rows = 0;
  {
    std::ofstream out(dir / "log.csv");
    out << "user_id,item_id,timestamp\n";
    for (int u = 0; u < 10935; ++u) {
      const int len = u < 4673 ? 6 : 7;
      for (int t = len - 1; t >= 0; --t, ++rows) out << u << ',' << (u * 31 + t) % 500 << ',' << t << "\n";
    }
  }
  ASSERT_EQ(rows, 71872u);
  ItemCatalog cat;
  for (ItemId i = 0; i < 500; ++i) cat.items.push_back({i, {{"title", "t"}}});
  const auto log = load_interactions(dir / "log.csv", cat);
  EXPECT_EQ(log.sequences.size(), 10935u);
  EXPECT_EQ(log.interaction_count(), 71872u);
  for (const auto& s : log.sequences) {
    EXPECT_TRUE(std::is_sorted(s.timestamps.begin(), s.timestamps.end()));
  }
}

TEST(Split, EightyTwenty) {
  auto [train, test] = split_log(log_of_size(10), 0.8, 1);
  EXPECT_EQ(train.sequences.size(), 8u);
  EXPECT_EQ(test.sequences.size(), 2u);
  auto [t5, s5] = split_log(log_of_size(5), 0.8, 1);
  EXPECT_EQ(t5.sequences.size(), 4u);
  EXPECT_EQ(s5.sequences.size(), 1u);
}

TEST(Split, DeterministicDisjointAndComplete) {
  for (std::size_t n : {3u, 7u, 10u, 33u}) {
    const auto log = log_of_size(n);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto [a, b] = split_log(log, 0.8, seed);
      auto [a2, b2] = split_log(log, 0.8, seed);
      EXPECT_EQ(a.sequences, a2.sequences);
      EXPECT_EQ(b.sequences, b2.sequences);
      std::multiset<UserId> seen;
      for (const auto& s : a.sequences) seen.insert(s.user_id);
      for (const auto& s : b.sequences) seen.insert(s.user_id);
      EXPECT_EQ(seen.size(), n);
      EXPECT_EQ(std::set<UserId>(seen.begin(), seen.end()).size(), n);
      const Real frac = static_cast<Real>(a.sequences.size()) / static_cast<Real>(n);
      EXPECT_LE(std::abs(frac - 0.8) * static_cast<Real>(n), 1.0);
    }
  }
}

TEST(Split, Errors) {
  EXPECT_THROW(split_log(log_of_size(4), 1.0, 0), DataError);
  EXPECT_THROW(split_log(log_of_size(4), 0.0, 0), DataError);
  EXPECT_THROW(split_log(InteractionLog{}, 0.5, 0), DataError);
}

TEST(Synthetic, ShapeAndDeterminism) {
  const auto a = generate_synthetic(10, 50, 8, 4, 7);
  const auto b = generate_synthetic(10, 50, 8, 4, 7);
  ASSERT_EQ(a.log.sequences.size(), 10u);
  for (const auto& s : a.log.sequences) EXPECT_EQ(s.items.size(), 8u);
  EXPECT_EQ(a.log.sequences, b.log.sequences);
  EXPECT_EQ(a.truth.item_latents, b.truth.item_latents);
  EXPECT_EQ(a.catalog.num_items(), 50u);
  EXPECT_THROW(generate_synthetic(1, 50, 8, 4, 7), DataError);
}

TEST(Synthetic, NoiselessSequencesAreExactTopByDotProduct) {
  const auto ds = generate_synthetic(20, 300, 12, 5, 3, 0.0);
  for (const auto& s : ds.log.sequences) {
    std::vector<std::pair<Real, ItemId>> all;
    for (ItemId i = 0; i < 300; ++i) {
      Real dotp = 0;
      for (std::size_t c = 0; c < 5; ++c) {
        dotp += ds.truth.user_latents[static_cast<std::size_t>(s.user_id)][c] *
                ds.truth.item_latents[i][c];
      }
      all.emplace_back(dotp, i);
    }
    std::sort(all.begin(), all.end(), [](auto& x, auto& y) { return x.first > y.first; });
    EXPECT_EQ(s.items[0], all[0].second);
    std::set<ItemId> expected, got(s.items.begin(), s.items.end());
    for (std::size_t t = 0; t < 12; ++t) expected.insert(all[t].second);
    EXPECT_EQ(got, expected);
  }
}

TEST(Synthetic, RoundTripThroughFiles) {
  TempDir dir;
  const auto ds = generate_synthetic(15, 40, 6, 3, 11);
  write_catalog(ds.catalog, dir / "items.csv");
  write_interactions(ds.log, dir / "log.csv");
  const auto cat = load_catalog(dir / "items.csv");
  const auto log = load_interactions(dir / "log.csv", cat);
  EXPECT_EQ(cat.num_items(), 40u);
  EXPECT_EQ(log.sequences, ds.log.sequences);
  for (ItemId i = 0; i < 40; ++i) EXPECT_EQ(cat.at(i).attributes, ds.catalog.at(i).attributes);
}
