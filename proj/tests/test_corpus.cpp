#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "connhs/connhs.hpp"
#include "oracles.hpp"

using namespace connhs;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

const std::string kGolden = std::string(CONNHS_TEST_DATA) + "/golden6.jsonl";

Corpus parse(const std::string& text) {
  std::istringstream in(text);
  return read_bundle(in);
}

std::string manifest(int dim = 4) {
  return R"({"schema":"connhs-bundle/1","dim":)" + std::to_string(dim) + R"(,"encoder":"t"})" + "\n";
}

std::string record(const std::string& id, const std::string& title = "[0,1,0,0]") {
  return R"({"id":")" + id + R"(","label":"x","split":"train","content_vec":[1,0,0,0],"title_vec":)" + title +
         R"(,"keyword_vecs":[],"event_vecs":[]})" + "\n";
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Bundle, TwoRecordsLoad) {
  const auto c = parse(manifest() + record("a") + record("b"));
  EXPECT_EQ(c.size(), 2u);
  EXPECT_EQ(c.dim(), 4u);
  EXPECT_EQ(c.encoder(), "t");
}

TEST(Bundle, TitleLengthMismatchNamesRecord) {
  const auto msg = error_of(manifest() + record("a") + record("bad-doc", "[1,0,0]"));
  EXPECT_NE(msg.find("bad-doc"), std::string::npos);
  EXPECT_NE(msg.find("title_vec"), std::string::npos);
}

TEST(Bundle, RejectsMalformedInput) {
  EXPECT_NE(error_of(""), "");
  EXPECT_NE(error_of(R"({"schema":"other","dim":4})" "\n"), "");
  EXPECT_NE(error_of(R"({"schema":"connhs-bundle/1","dim":0})" "\n"), "");
  EXPECT_NE(error_of(manifest() + record("a") + record("a")).find("duplicate"), std::string::npos);
  EXPECT_NE(error_of(manifest() + "{not json\n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of(manifest() + R"({"id":"q","label":"x","split":"train"})" "\n").find("content_vec"),
            std::string::npos);
  EXPECT_NE(error_of(manifest() + R"({"id":"q","label":"x","split":"dev","content_vec":[1,0,0,0],)"
                                  R"("title_vec":[1,0,0,0],"keyword_vecs":[],"event_vecs":[]})" "\n")
                .find("split"),
            std::string::npos);
}

TEST(Bundle, RejectsNonFiniteValues) {
  std::vector<DocumentFeatures> docs(1);
  docs[0].id = "nan-doc";
  docs[0].content_vec = {1.0, std::nan("")};
  docs[0].title_vec = {1.0, 0.0};
  try {
    Corpus::from_documents(docs);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("nan-doc"), std::string::npos);
  }
}

TEST(Bundle, EmptyBundleKeepsDimension) {
  const auto c = parse(manifest(7));
  EXPECT_EQ(c.size(), 0u);
  EXPECT_EQ(c.dim(), 7u);
  EXPECT_EQ(serialize_bundle(c), manifest(7));
}

TEST(Bundle, GoldenFieldValues) {
  const auto c = load_bundle(kGolden);
  ASSERT_EQ(c.size(), 6u);
  EXPECT_EQ(c.dim(), 3u);
  EXPECT_EQ(c.encoder(), "hand");
  const auto& d = c.docs();
  EXPECT_EQ(d[0].id, "a1");
  EXPECT_EQ(d[0].label, std::optional<std::string>("sport"));
  EXPECT_EQ(d[2].split, Split::test);
  EXPECT_EQ(d[1].content_vec, (Vec{0.9, 0.1, 0.0}));
  EXPECT_EQ(d[4].title_vec, (Vec{0.0, 0.8, 0.6}));
  EXPECT_EQ(d[4].keyword_vecs.size(), 4u);
  EXPECT_EQ(d[4].keyword_vecs[3], (Vec{0.0, 0.0, 1.0}));
  EXPECT_TRUE(d[5].keyword_vecs.empty());
  EXPECT_EQ(d[5].event_vecs, (std::vector<Vec>{{0.0, 0.5, 0.5}}));
  EXPECT_FALSE(d[5].label.has_value());
  EXPECT_EQ(c.class_set(), (std::vector<std::string>{"sport", "tech"}));
  EXPECT_EQ(c.index_of("b2"), std::optional<std::size_t>(4));
}

TEST(Bundle, GoldenByteRoundTrip) {
  const auto text = read_file(kGolden);
  EXPECT_EQ(serialize_bundle(parse(text)), text);
}

TEST(Bundle, SyntheticRoundTripIsExact) {
  const auto c = generate_synthetic({3, 7, 5, 0.4, 0.3, 11});
  const auto text = serialize_bundle(c);
  const auto back = parse(text);
  EXPECT_EQ(back, c);
  EXPECT_EQ(serialize_bundle(back), text);
}

TEST(Synthetic, SameSeedIsBitwiseIdentical) {
  const SyntheticSpec s{4, 10, 8, 0.3, 0.2, 7};
  EXPECT_EQ(serialize_bundle(generate_synthetic(s)), serialize_bundle(generate_synthetic(s)));
  SyntheticSpec other = s;
  other.seed = 8;
  EXPECT_NE(serialize_bundle(generate_synthetic(s)), serialize_bundle(generate_synthetic(other)));
}

TEST(Synthetic, ShapeAndSplit) {
  const auto c = generate_synthetic({4, 50, 16, 0.3, 0.1, 1});
  ASSERT_EQ(c.size(), 200u);
  EXPECT_EQ(c.dim(), 16u);
  EXPECT_EQ(c.class_set(), (std::vector<std::string>{"0", "1", "2", "3"}));
  std::map<std::string, int> train, test;
  for (const auto& d : c.docs()) {
    ++(d.split == Split::train ? train : test)[*d.label];
    EXPECT_GE(d.keyword_vecs.size(), 2u);
    EXPECT_LE(d.keyword_vecs.size(), 4u);
    EXPECT_GE(d.event_vecs.size(), 1u);
    EXPECT_LE(d.event_vecs.size(), 3u);
  }
  for (const auto& k : c.class_set()) {
    EXPECT_EQ(train[k], 40);
    EXPECT_EQ(test[k], 10);
  }
}

TEST(Synthetic, ZeroNoiseGivesIdenticalClusterMembers) {
  const auto c = generate_synthetic({4, 50, 16, 0.0, 0.0, 2});
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = i + 1; j < c.size(); ++j) {
      if (c.docs()[i].label == c.docs()[j].label) {
        EXPECT_NEAR(oracle::cosine(c.docs()[i].content_vec, c.docs()[j].content_vec), 1.0, 1e-12);
      }
    }
  }
}

TEST(Synthetic, IntraClusterMoreSimilarThanInter) {
  const auto c = generate_synthetic({2, 10, 16, 0.1, 0.0, 3});
  double intra = 0, inter = 0;
  int ni = 0, nx = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = i + 1; j < c.size(); ++j) {
      const double s = oracle::cosine(c.docs()[i].content_vec, c.docs()[j].content_vec);
      if (c.docs()[i].label == c.docs()[j].label) {
        intra += s;
        ++ni;
      } else {
        inter += s;
        ++nx;
      }
    }
  }
  EXPECT_GT(intra / ni, inter / nx);
}

TEST(Synthetic, ConfusersPlantForeignKeyword) {
  const auto c = generate_synthetic({4, 50, 16, 0.0, 1.0, 4});
  for (const auto& d : c.docs()) {
    EXPECT_LT(oracle::cosine(d.keyword_vecs.front(), d.content_vec), 0.5);
    EXPECT_NEAR(oracle::cosine(d.keyword_vecs.back(), d.content_vec), 1.0, 1e-12);
  }
}

TEST(Synthetic, RejectsInvalidSpec) {
  EXPECT_THROW(generate_synthetic({0, 5, 4, 0.1, 0.0, 0}), InputError);
  EXPECT_THROW(generate_synthetic({2, 0, 4, 0.1, 0.0, 0}), InputError);
  EXPECT_THROW(generate_synthetic({2, 5, 0, 0.1, 0.0, 0}), InputError);
  EXPECT_THROW(generate_synthetic({2, 5, 4, -0.1, 0.0, 0}), InputError);
  EXPECT_THROW(generate_synthetic({2, 5, 4, 0.1, 1.5, 0}), InputError);
}

TEST(SplitViews, FullRateLabelsAllTraining) {
  const auto c = generate_synthetic({3, 10, 4, 0.2, 0.0, 5});
  const auto v = split_views(c, 1.0);
  EXPECT_EQ(v.labeled.size(), 24u);
  EXPECT_TRUE(v.unlabeled.empty());
}

TEST(SplitViews, FourClassesTwentyFiveEachAtTenPercent) {
  // 25 train + 6 test per class: (4 * 31 + 2) / 5 = 25.
  const auto c = generate_synthetic({4, 31, 4, 0.2, 0.0, 5});
  const auto v = split_views(c, 0.1);
  std::map<std::string, int> per;
  for (const auto& id : v.labeled) ++per[*c.docs()[*c.index_of(id)].label];
  EXPECT_EQ(v.labeled.size(), 12u);
  for (const auto& [k, n] : per) EXPECT_EQ(n, 3) << k;
  EXPECT_EQ(v.labeled.size() + v.unlabeled.size(), 100u);
}

TEST(SplitViews, TooFewLabelsForClasses) {
  // 20 classes x 5 train docs = 100 train docs; 1% gives one document.
  const auto c = generate_synthetic({20, 6, 4, 0.2, 0.0, 5});
  EXPECT_THROW(split_views(c, 0.01), InputError);
  EXPECT_THROW(split_views(c, 0.0), InputError);
  EXPECT_THROW(split_views(c, 1.5), InputError);
}

TEST(SplitViews, NestedAsRateGrows) {
  const auto c = generate_synthetic({4, 50, 4, 0.2, 0.0, 6});
  std::set<std::string> prev;
  for (double r : {0.05, 0.1, 0.25, 0.5, 1.0}) {
    const auto v = split_views(c, r);
    std::set<std::string> cur(v.labeled.begin(), v.labeled.end());
    EXPECT_TRUE(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
    prev = cur;
  }
}
