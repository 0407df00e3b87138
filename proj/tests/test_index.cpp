#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>
#include <vector>

#include "henn/index.hpp"
#include "test_util.hpp"

using namespace henn;

namespace {

bool same_layers(const HennIndex& a, const HennIndex& b) {
  if (a.num_layers() != b.num_layers()) return false;
  for (std::size_t i = 0; i < a.num_layers(); ++i) {
    if (a.layers()[i].ids != b.layers()[i].ids) return false;
    if (!a.layers()[i].graph.same_structure(b.layers()[i].graph)) return false;
  }
  return true;
}

HennParams small_params(int m = 4) {
  HennParams p;
  p.eps.m = m;
  p.graph.M = 8;
  p.graph.ef_construction = 40;
  return p;
}

double recall_vs_truth(const HennIndex& idx, const PointSet& queries, std::size_t k, std::size_t ef) {
  Rng rng(77);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    auto got = idx.query_knn(queries[i], k, ef, rng);
    auto truth = brute_force_knn(idx.points(), queries[i], k, idx.metric());
    std::set<Id> t;
    for (const auto& n : truth) t.insert(n.id);
    for (const auto& n : got) hit += t.count(n.id);
  }
  return static_cast<double>(hit) / static_cast<double>(k * queries.size());
}

}  // namespace

TEST(AutoMaxLayers, Values) {
  EXPECT_EQ(auto_max_layers(0, 4), 0u);
  EXPECT_EQ(auto_max_layers(1, 4), 0u);
  EXPECT_EQ(auto_max_layers(15, 4), 0u);
  EXPECT_EQ(auto_max_layers(16, 4), 1u);
  EXPECT_EQ(auto_max_layers(1000, 4), 2u);
  EXPECT_EQ(auto_max_layers(65536, 4), 4u);
  EXPECT_EQ(auto_max_layers(1024, 1), 10u);
}

TEST(Build, LayerSizesFollowDecay) {
  auto ps = test::random_points(1000, 8, 1);
  for (int m : {1, 2, 4}) {
    auto idx = build_henn(ps, small_params(m), Metric::l2());
    const auto sizes = idx.layer_sizes();
    EXPECT_EQ(sizes.size(), auto_max_layers(1000, m) + 1) << "m=" << m;
    EXPECT_EQ(sizes[0], 1000u);
    for (std::size_t i = 1; i < sizes.size(); ++i) EXPECT_EQ(sizes[i], layer_target_size(sizes[i - 1], m));
    EXPECT_EQ(idx.check_invariants(), "");
  }
}

TEST(Build, MaxLayersIsClampedToAuto) {
  auto ps = test::random_points(1000, 4, 2);
  auto p = small_params();
  p.max_layers = 10;
  EXPECT_EQ(build_henn(ps, p, Metric::l2()).num_layers(), 3u);
  p.max_layers = 1;
  EXPECT_EQ(build_henn(ps, p, Metric::l2()).num_layers(), 2u);
}

TEST(Build, TinyInputs) {
  auto one = build_henn(test::random_points(1, 3, 3), small_params(), Metric::l2());
  EXPECT_EQ(one.num_layers(), 1u);
  Rng rng(1);
  std::vector<float> q{0.5f, 0.5f, 0.5f};
  EXPECT_EQ(one.query(q, rng).first, 0u);
  EXPECT_THROW(build_henn(PointSet::empty(3), small_params(), Metric::l2()), std::invalid_argument);
}

TEST(Build, DeterministicForSeed) {
  auto ps = test::random_points(600, 4, 4);
  auto a = build_henn(ps, small_params(2), Metric::l2());
  auto b = build_henn(ps, small_params(2), Metric::l2());
  EXPECT_TRUE(same_layers(a, b));
  auto p = small_params(2);
  p.seed = 43;
  EXPECT_FALSE(same_layers(a, build_henn(ps, p, Metric::l2())));
}

TEST(Build, BaselineHasSameLayerSizes) {
  auto ps = test::random_points(3000, 6, 5);
  for (int m : {1, 3, 4}) {
    auto h = build_henn(ps, small_params(m), Metric::l2());
    auto b = build_baseline(ps, small_params(m), Metric::l2());
    EXPECT_EQ(h.layer_sizes(), b.layer_sizes());
    for (const auto& ls : b.stats().layers) EXPECT_EQ(ls.trials, 0u);
  }
}

TEST(Build, AcceptedFirstTrialsMatchBaseline) {
  // When every layer's first sample passes, the verified hierarchy coincides
  // with the baseline; a rejected sample makes them diverge.
  auto ps = test::random_points(4096, 2, 6);
  bool saw_divergence = false;
  for (std::uint64_t seed = 0; seed < 6; ++seed)
    for (double c0 : {1.0, 0.2}) {
      auto p = small_params(2);
      p.eps.c0 = c0;
      p.eps.max_trials = 8;
      p.seed = seed;
      auto h = build_henn(ps, p, Metric::l2());
      auto b = build_baseline(ps, p, Metric::l2());
      EXPECT_EQ(h.check_invariants(), "");
      bool all_first = true;
      for (std::size_t i = 1; i < h.stats().layers.size(); ++i)
        all_first &= h.stats().layers[i].trials == 1 && !h.stats().layers[i].fallback;
      if (all_first) {
        EXPECT_TRUE(same_layers(h, b)) << "seed " << seed << " c0 " << c0;
      } else {
        EXPECT_FALSE(same_layers(h, b)) << "seed " << seed << " c0 " << c0;
        saw_divergence = true;
      }
    }
  EXPECT_TRUE(saw_divergence);
}

TEST(Build, StrictScheduleFallsBackToHalving) {
  auto ps = test::random_points(1024, 2, 7);
  auto p = small_params(2);
  p.eps.c0 = 0.01;
  p.eps.max_trials = 2;
  auto h = build_henn(ps, p, Metric::l2());
  ASSERT_GE(h.num_layers(), 2u);
  EXPECT_TRUE(h.stats().layers[1].fallback);
  EXPECT_EQ(h.stats().layers[1].trials, 2u);
  EXPECT_EQ(h.layer_sizes()[1], 256u);
  EXPECT_EQ(h.check_invariants(), "");
}

TEST(Build, EveryGraphKindBuildsAndAnswers) {
  auto ps = test::random_points(800, 5, 8);
  auto queries = test::random_points(30, 5, 9);
  for (GraphKind kind : {GraphKind::NSW, GraphKind::KNN, GraphKind::DimRedDT}) {
    auto p = small_params();
    p.graph.kind = kind;
    p.graph.knn_k = 10;
    auto idx = build_henn(ps, p, Metric::l2());
    EXPECT_EQ(idx.check_invariants(), "") << graph_kind_name(kind);
    EXPECT_GT(recall_vs_truth(idx, queries, 5, 100), 0.5) << graph_kind_name(kind);
  }
}

TEST(Build, NonNestedLayersSampleFromBottom) {
  auto ps = test::random_points(4096, 3, 10);
  auto p = small_params(2);
  p.nested = false;
  auto idx = build_henn(ps, p, Metric::l2());
  EXPECT_EQ(idx.check_invariants(), "");
  const auto sizes = idx.layer_sizes();
  for (std::size_t i = 1; i < sizes.size(); ++i) EXPECT_EQ(sizes[i], layer_target_size(sizes[i - 1], 2));
  bool escaped = false;
  for (std::size_t i = 2; i < idx.num_layers(); ++i)
    escaped |= !std::includes(idx.layers()[i - 1].ids.begin(), idx.layers()[i - 1].ids.end(),
                              idx.layers()[i].ids.begin(), idx.layers()[i].ids.end());
  EXPECT_TRUE(escaped);
}

TEST(Query, FindsStoredPoints) {
  auto ps = test::random_points(2000, 8, 11);
  auto idx = build_henn(ps, small_params(), Metric::l2());
  Rng rng(3);
  int exact = 0;
  for (Id id = 0; id < 2000; id += 20) exact += idx.query(ps[id], rng).first == id;
  EXPECT_GE(exact, 90);
}

TEST(Query, StatsAddUp) {
  auto ps = test::random_points(2000, 8, 12);
  auto idx = build_henn(ps, small_params(2), Metric::l2());
  Rng rng(4);
  std::mt19937_64 g(1);
  for (int t = 0; t < 20; ++t) {
    auto q = test::random_vector(8, g);
    auto [id, st] = idx.query(q, rng);
    EXPECT_LT(id, 2000u);
    ASSERT_EQ(st.layer_hops.size(), idx.num_layers());
    std::size_t sum = 0;
    for (auto h : st.layer_hops) sum += h;
    EXPECT_EQ(sum, st.total_hops);
    EXPECT_GE(st.dist_evals, idx.num_layers());
    QueryStats ks;
    auto nn = idx.query_knn(q, 10, 20, rng, &ks);
    EXPECT_EQ(nn.size(), 10u);
    for (std::size_t i = 1; i < nn.size(); ++i) EXPECT_LE(nn[i - 1].dist, nn[i].dist);
  }
}

TEST(Query, KnnRecallIsHigh) {
  auto ps = test::random_points(3000, 8, 13);
  auto queries = test::random_points(50, 8, 14);
  auto idx = build_henn(ps, HennParams{}, Metric::l2());
  EXPECT_GE(recall_vs_truth(idx, queries, 10, 100), 0.95);
}

TEST(Query, KnnArgumentChecks) {
  auto ps = test::random_points(50, 2, 15);
  auto idx = build_henn(ps, small_params(), Metric::l2());
  Rng rng(1);
  std::vector<float> q{0.1f, 0.2f};
  EXPECT_THROW(idx.query_knn(q, 10, 5, rng), std::invalid_argument);
  EXPECT_THROW(idx.query_knn(q, 0, 5, rng), std::invalid_argument);
  EXPECT_THROW(idx.query_knn(q, 51, 60, rng), std::invalid_argument);
  std::vector<float> wrong{0.1f};
  EXPECT_THROW(idx.query(wrong, rng), std::invalid_argument);
  EXPECT_EQ(idx.query_knn(q, 50, 50, rng).size(), 50u);
}

TEST(Query, CosineIgnoresScale) {
  auto ps = test::random_points(500, 6, 16, -1.0, 1.0);
  auto idx = build_henn(ps, small_params(), Metric::cosine());
  Rng rng(2);
  int exact = 0;
  for (Id id = 0; id < 500; id += 10) {
    std::vector<float> q(ps[id].begin(), ps[id].end());
    for (auto& v : q) v *= 7.5f;
    exact += idx.query_knn(q, 1, 32, rng)[0].id == id;
  }
  EXPECT_GE(exact, 48);
}

TEST(Serialize, RoundTripPreservesStructure) {
  auto ps = test::random_points(1500, 5, 17);
  for (GraphKind kind : {GraphKind::NSW, GraphKind::KNN, GraphKind::DimRedDT}) {
    auto p = small_params(2);
    p.graph.kind = kind;
    auto idx = build_henn(ps, p, Metric::lp(3));
    auto back = HennIndex::deserialize_bytes(idx.serialize_bytes(), ps);
    EXPECT_TRUE(idx.same_structure(back)) << graph_kind_name(kind);
    EXPECT_EQ(back.serialize_bytes(), idx.serialize_bytes());
  }
}

TEST(Serialize, FileRoundTrip) {
  test::TempDir dir("index");
  auto ps = test::random_points(700, 4, 18);
  auto idx = build_baseline(ps, small_params(), Metric::l2());
  idx.serialize(dir.file("a.idx"));
  auto back = HennIndex::deserialize(dir.file("a.idx"), ps);
  EXPECT_TRUE(idx.same_structure(back));
  EXPECT_EQ(back.params().mode, LayerMode::Random);
  EXPECT_THROW(HennIndex::deserialize(dir.file("missing.idx"), ps), IoError);
}

TEST(Serialize, RejectsCorruption) {
  auto ps = test::random_points(300, 3, 19);
  auto idx = build_henn(ps, small_params(2), Metric::l2());
  const auto bytes = idx.serialize_bytes();

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  try {
    HennIndex::deserialize_bytes(bad_magic, ps);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }

  auto bad_version = bytes;
  bad_version[8] = 9;
  try {
    HennIndex::deserialize_bytes(bad_version, ps);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 8u);
  }

  auto bad_metric = bytes;
  bad_metric[12] = 7;
  EXPECT_THROW(HennIndex::deserialize_bytes(bad_metric, ps), FormatError);

  for (std::size_t cut : {std::size_t{5}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    std::vector<char> t(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    EXPECT_THROW(HennIndex::deserialize_bytes(t, ps), FormatError) << "cut " << cut;
  }

  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(HennIndex::deserialize_bytes(trailing, ps), FormatError);

  EXPECT_THROW(HennIndex::deserialize_bytes(bytes, test::random_points(299, 3, 19)), FormatError);
  EXPECT_THROW(HennIndex::deserialize_bytes(bytes, test::random_points(300, 4, 19)), FormatError);
}

TEST(Serialize, RandomByteFlipsNeverCrash) {
  auto ps = test::random_points(200, 3, 20);
  auto idx = build_henn(ps, small_params(2), Metric::l2());
  const auto bytes = idx.serialize_bytes();
  std::mt19937_64 g(5);
  for (int t = 0; t < 300; ++t) {
    auto b = bytes;
    b[g() % b.size()] ^= static_cast<char>(1 + g() % 255);
    try {
      auto back = HennIndex::deserialize_bytes(b, ps);
      (void)back.check_invariants();
    } catch (const FormatError&) {
    }
  }
}

TEST(Dynamic, InsertIntoEmptyIndex) {
  auto p = small_params(2);
  auto idx = HennIndex::empty(4, p, Metric::l2());
  EXPECT_EQ(idx.size(), 0u);
  Rng rng(1);
  std::mt19937_64 g(2);
  for (int i = 0; i < 500; ++i) {
    auto x = test::random_vector(4, g);
    EXPECT_EQ(idx.insert(x, rng), static_cast<Id>(i));
  }
  EXPECT_EQ(idx.size(), 500u);
  EXPECT_EQ(idx.check_invariants(), "");
  EXPECT_GE(idx.num_layers(), 2u);
  auto queries = test::random_points(30, 4, 3);
  EXPECT_GE(recall_vs_truth(idx, queries, 5, 50), 0.9);
}

TEST(Dynamic, RandomOperationSequencesKeepInvariants) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    std::mt19937_64 g(seed);
    auto p = small_params(1 + static_cast<int>(seed % 3));
    p.nested = seed % 4 != 3;
    auto idx = build_henn(test::random_points(200, 3, seed), p, Metric::l2());
    Rng rng(seed);
    std::vector<Id> live = all_ids(200);
    for (int op = 0; op < 400; ++op) {
      if (live.empty() || g() % 3 != 0) {
        live.push_back(idx.insert(test::random_vector(3, g), rng));
      } else {
        const std::size_t k = g() % live.size();
        idx.remove(live[k]);
        live.erase(live.begin() + static_cast<std::ptrdiff_t>(k));
      }
      ASSERT_EQ(idx.check_invariants(), "") << "seed " << seed << " op " << op;
    }
    std::sort(live.begin(), live.end());
    EXPECT_EQ(idx.layers()[0].ids, live);
  }
}

TEST(Dynamic, DeleteEverythingThenRefill) {
  auto p = small_params(1);
  auto idx = build_henn(test::random_points(64, 2, 21), p, Metric::l2());
  for (Id id = 0; id < 64; ++id) idx.remove(id);
  EXPECT_EQ(idx.size(), 0u);
  EXPECT_EQ(idx.num_layers(), 1u);
  EXPECT_EQ(idx.check_invariants(), "");
  Rng rng(1);
  std::vector<float> q{0.5f, 0.5f};
  EXPECT_THROW(idx.query(q, rng), std::logic_error);
  std::mt19937_64 g(4);
  for (int i = 0; i < 50; ++i) idx.insert(test::random_vector(2, g), rng);
  EXPECT_EQ(idx.size(), 50u);
  EXPECT_EQ(idx.check_invariants(), "");
}

TEST(Dynamic, HeavyDeletionTriggersResample) {
  auto p = small_params(2);
  auto idx = build_henn(test::random_points(2048, 3, 22), p, Metric::l2());
  const auto top = idx.layers()[1].ids;
  // Removing upper-layer members shrinks layer 1 below its threshold.
  for (std::size_t i = 0; i < top.size() / 2; ++i) idx.remove(top[i]);
  EXPECT_GE(idx.stats().rebuilds, 1u);
  EXPECT_EQ(idx.check_invariants(), "");
  EXPECT_EQ(idx.stats().deletes, top.size() / 2);
}

TEST(Dynamic, ErrorsAreTyped) {
  auto ps = test::random_points(100, 2, 23);
  auto idx = build_henn(ps, small_params(), Metric::l2());
  EXPECT_THROW(idx.remove(100), NotFound);
  idx.remove(5);
  EXPECT_THROW(idx.remove(5), NotFound);
  Rng rng(1);
  std::vector<float> wrong{1.0f};
  EXPECT_THROW(idx.insert(wrong, rng), std::invalid_argument);
  auto p = small_params();
  p.graph.kind = GraphKind::KNN;
  auto knn = build_henn(ps, p, Metric::l2());
  std::vector<float> x{0.1f, 0.1f};
  EXPECT_THROW(knn.insert(x, rng), UnsupportedOperation);
  knn.remove(3);
  EXPECT_EQ(knn.check_invariants(), "");
}

TEST(Dynamic, RemovedIdsNeverReturned) {
  auto ps = test::random_points(1000, 4, 24);
  auto idx = build_henn(ps, small_params(2), Metric::l2());
  std::set<Id> gone;
  for (Id id = 0; id < 1000; id += 3) {
    idx.remove(id);
    gone.insert(id);
  }
  Rng rng(5);
  for (Id id = 0; id < 1000; id += 7) {
    for (const auto& n : idx.query_knn(ps[id], 10, 40, rng)) EXPECT_FALSE(gone.count(n.id));
    EXPECT_FALSE(gone.count(idx.query(ps[id], rng).first));
  }
}
