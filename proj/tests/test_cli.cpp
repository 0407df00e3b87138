#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "henn/cli.hpp"
#include "henn/io.hpp"

using namespace henn;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "henn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::path(HENN_TEST_TMP) / ::testing::UnitTest::GetInstance()->current_test_info()->name();
    std::filesystem::remove_all(dir_);
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::filesystem::path dir_;
};

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

std::vector<std::string> fields_of(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  return out;
}

// Value after "key:" in build output.
std::string build_field(const std::string& text, const std::string& key) {
  for (const auto& l : lines_of(text))
    if (l.rfind(key + ":", 0) == 0) return l.substr(key.size() + 1);
  return {};
}

std::map<std::string, std::size_t> rho_table(const std::string& text) {
  std::map<std::string, std::size_t> out;
  bool in_table = false;
  for (const auto& l : lines_of(text)) {
    if (l == "graph,rho,pooled_rho") {
      in_table = true;
      continue;
    }
    if (!in_table) continue;
    if (l.rfind("k,", 0) == 0) break;
    auto f = fields_of(l);
    out[f[0]] = std::stoul(f[1]);
  }
  return out;
}

}  // namespace

TEST_F(CliTest, GenIsDeterministicAndTruthIsExact) {
  const auto a = path("a"), b = path("b");
  ASSERT_EQ(run_cli({"gen", "--synthetic", "500,4,2", "--queries", "20", "--seed", "5", "--out", a}).code, 0);
  ASSERT_EQ(run_cli({"gen", "--synthetic", "500,4,2", "--queries", "20", "--seed", "5", "--out", b}).code, 0);
  for (const char* ext : {".pts", ".query.fvecs", ".gt.ivecs"})
    EXPECT_EQ(detail::read_file(a + ext), detail::read_file(b + ext)) << ext;

  auto pts = load_points(a + ".pts");
  auto qs = load_fvecs(a + ".query.fvecs");
  auto gt = load_ivecs(a + ".gt.ivecs");
  ASSERT_EQ(pts.size(), 500u);
  ASSERT_EQ(qs.size(), 20u);
  ASSERT_EQ(gt.size(), 20u);
  EXPECT_EQ(gt[0].size(), 100u);
  auto truth = brute_force_knn(pts, qs[0], 100, Metric::l2());
  for (std::size_t j = 0; j < 100; ++j) EXPECT_EQ(static_cast<Id>(gt[0][j]), truth[j].id);
}

TEST_F(CliTest, GenRejectsEmptySynthetic) {
  auto r = run_cli({"gen", "--synthetic", "0,4,1", "--out", path("x")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("n must be >= 1"), std::string::npos);
  EXPECT_FALSE(std::filesystem::exists(path("x.pts")));
}

TEST_F(CliTest, BuildWritesLoadableIndex) {
  const auto idx_path = path("h.idx");
  auto r = run_cli({"build", "--synthetic", "3000,6,1", "--m", "3", "--seed", "9", "--out", idx_path});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(build_field(r.out, "mode"), " henn");

  SyntheticSpec s;
  s.n = 3000;
  s.d = 6;
  s.seed = 9;
  s.n_queries = 0;
  auto idx = HennIndex::deserialize(idx_path, gen_synthetic(s).points);
  std::string sizes;
  for (auto v : idx.layer_sizes()) sizes += " " + std::to_string(v);
  EXPECT_EQ(build_field(r.out, "layer_sizes"), sizes);
  EXPECT_EQ(idx.params().m(), 3);
  EXPECT_EQ(idx.check_invariants(), "");
  EXPECT_EQ(build_field(r.out, "bytes"), " " + std::to_string(std::filesystem::file_size(idx_path)));

  auto base = run_cli({"build", "--synthetic", "3000,6,1", "--m", "3", "--seed", "9", "--mode", "baseline", "--out",
                       path("b.idx")});
  ASSERT_EQ(base.code, 0);
  EXPECT_EQ(build_field(base.out, "mode"), " baseline");
  EXPECT_EQ(build_field(base.out, "layer_sizes"), sizes);
}

TEST_F(CliTest, BenchSweepsBothMethods) {
  auto r = run_cli({"bench", "--synthetic", "2000,8,1", "--queries", "30", "--reps", "1", "--out", path("r.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream f(path("r.csv"));
  std::stringstream ss;
  ss << f.rdbuf();
  auto ls = lines_of(ss.str());
  ASSERT_FALSE(ls.empty());
  EXPECT_EQ(ls[0], csv_header());
  std::map<std::string, std::vector<std::vector<std::string>>> by_method;
  for (std::size_t i = 1; i < ls.size(); ++i) {
    if (ls[i].rfind("#", 0) == 0) continue;
    auto fl = fields_of(ls[i]);
    ASSERT_EQ(fl.size(), 15u) << ls[i];
    by_method[fl[0]].push_back(fl);
  }
  ASSERT_EQ(by_method.size(), 2u);
  for (const auto& [method, rows] : by_method) {
    ASSERT_EQ(rows.size(), 6u) << method;
    double prev = -1.0;
    for (const auto& row : rows) {
      const double recall = std::stod(row[7]);
      EXPECT_GE(recall, prev - 1e-12) << method << " ef=" << row[5];
      prev = recall;
      EXPECT_FALSE(row[12].empty());
      EXPECT_GE(std::stod(row[12]), 1.0);
      EXPECT_EQ(row[4], "1");
    }
  }
  EXPECT_NE(r.out.find("frontier"), std::string::npos);

  // A second run appends rows without repeating the header.
  ASSERT_EQ(run_cli({"bench", "--synthetic", "500,4,1", "--queries", "5", "--reps", "1", "--ef", "10", "--mode",
                     "henn", "--out", path("r.csv")})
                .code,
            0);
  std::ifstream g(path("r.csv"));
  std::stringstream ss2;
  ss2 << g.rdbuf();
  std::size_t headers = 0;
  for (const auto& l : lines_of(ss2.str())) headers += l == csv_header();
  EXPECT_EQ(headers, 1u);
}

TEST_F(CliTest, BenchOnGeneratedDataset) {
  const auto prefix = path("ds");
  ASSERT_EQ(run_cli({"gen", "--synthetic", "1000,4,uniform", "--queries", "20", "--out", prefix}).code, 0);
  auto r = run_cli({"bench", "--dataset", prefix + ".pts", "--queries", "20", "--reps", "1", "--ef", "10,50",
                    "--mode", "baseline"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto ls = lines_of(r.out);
  std::size_t rows = 0;
  for (const auto& l : ls)
    if (l.rfind("baseline,", 0) == 0) {
      ++rows;
      EXPECT_EQ(fields_of(l)[4], "0");
    }
  EXPECT_EQ(rows, 2u);
}

TEST_F(CliTest, BenchWithoutTruthExplains) {
  const auto prefix = path("ds");
  ASSERT_EQ(run_cli({"gen", "--synthetic", "300,4,1", "--queries", "10", "--out", prefix}).code, 0);
  std::filesystem::remove(prefix + ".gt.ivecs");
  auto r = run_cli({"bench", "--dataset", prefix + ".pts", "--queries", "10"});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("henn gen"), std::string::npos);
}

TEST_F(CliTest, RecallBoundIsDeterministicWithExactControl) {
  std::vector<std::string> args{"recall-bound", "--synthetic", "800,6,1", "--queries", "20", "--seed", "3"};
  auto a = run_cli(args);
  auto b = run_cli(args);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  auto t = rho_table(a.out);
  ASSERT_EQ(t.size(), 4u);
  EXPECT_EQ(t["complete"], 1u);
  for (const auto& [name, rho] : t) {
    EXPECT_GE(rho, 1u);
    EXPECT_LE(rho, 800u);
  }
}

TEST_F(CliTest, KnnGraphBoundBeatsNswMostSeeds) {
  // kNN degree 64, twice NSW's out-degree cap of 2M = 32.
  int wins = 0;
  for (int seed = 1; seed <= 20; ++seed) {
    auto r = run_cli({"recall-bound", "--synthetic", "2000,8,1", "--queries", "30", "--knn-k", "64", "--seed",
                      std::to_string(seed)});
    ASSERT_EQ(r.code, 0) << r.err;
    auto t = rho_table(r.out);
    wins += t["knn"] <= t["nsw"];
  }
  EXPECT_GE(wins, 14);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run_cli({"--help"}).code, 0);
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate", "--synthetic", "10,2,1"}).code, 2);
  EXPECT_EQ(run_cli({"build", "--out", path("x.idx")}).code, 2);
  EXPECT_EQ(run_cli({"build", "--synthetic", "10,2,1", "--dataset", "a.pts", "--out", path("x")}).code, 2);
  EXPECT_EQ(run_cli({"build", "--synthetic", "10,2,1", "--metric", "lp:-1", "--out", path("x")}).code, 2);
  EXPECT_EQ(run_cli({"build", "--synthetic", "10,2,1", "--graph", "tree", "--out", path("x")}).code, 2);
  EXPECT_EQ(run_cli({"build", "--synthetic", "10,2,1", "--m", "0", "--out", path("x")}).code, 2);
  EXPECT_EQ(run_cli({"bench", "--synthetic", "100,2,1", "--k", "10", "--ef", "5"}).code, 2);
  EXPECT_EQ(run_cli({"build", "--synthetic", "10,2,1", "--M", "abc", "--out", path("x")}).code, 2);
  EXPECT_EQ(run_cli({"build", "--dataset", path("missing.fvecs"), "--out", path("x")}).code, 3);
  EXPECT_EQ(run_cli({"build", "--synthetic", "10,2,1", "--out", path("no/such/dir/x.idx")}).code, 3);

  std::ofstream(path("bad.fvecs"), std::ios::binary) << "abc";
  auto r = run_cli({"build", "--dataset", path("bad.fvecs"), "--out", path("x")});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("offset"), std::string::npos);
}

TEST_F(CliTest, InsertingKnnIndexViaLibraryIsUnsupported) {
  // The CLI only batch-builds; the typed error is what callers see.
  HennParams p;
  p.graph.kind = GraphKind::KNN;
  SyntheticSpec s;
  s.n = 100;
  s.d = 2;
  auto idx = HennIndex::build(gen_synthetic(s).points, p, Metric::l2());
  Rng rng(1);
  std::vector<float> x{0.5f, 0.5f};
  EXPECT_THROW(idx.insert(x, rng), UnsupportedOperation);
}

TEST_F(CliTest, ConfigFileWithFlagOverride) {
  std::ofstream(path("run.toml")) << "m = 2\nseed = 7\nsynthetic = \"1024,4,1\"\n";
  auto r = run_cli({"build", "--config", path("run.toml"), "--out", path("c.idx")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(build_field(r.out, "layer_sizes"), " 1024 256 64 16 4 1");
  auto o = run_cli({"build", "--config", path("run.toml"), "--m", "5", "--out", path("d.idx")});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(build_field(o.out, "layer_sizes"), " 1024 32 1");
}

TEST(CliParse, Helpers) {
  EXPECT_EQ(cli::parse_metric("l2").kind, MetricKind::L2);
  EXPECT_EQ(cli::parse_metric("cosine").kind, MetricKind::Cosine);
  EXPECT_DOUBLE_EQ(cli::parse_metric("lp:3").p, 3.0);
  EXPECT_THROW(cli::parse_metric("lp:0"), cli::UsageError);
  EXPECT_THROW(cli::parse_metric("lp:2x"), cli::UsageError);
  EXPECT_EQ(cli::parse_graph("dimred"), GraphKind::DimRedDT);
  EXPECT_EQ(cli::parse_mode("baseline"), LayerMode::Random);
  auto s = cli::parse_synthetic("100,8,256");
  EXPECT_EQ(s.n, 100u);
  EXPECT_EQ(s.d, 8u);
  EXPECT_DOUBLE_EQ(s.lambda, 256.0);
  EXPECT_EQ(cli::parse_synthetic("5,2,uniform").dist, Distribution::Uniform);
  EXPECT_THROW(cli::parse_synthetic("5,2"), cli::UsageError);
  EXPECT_THROW(cli::parse_synthetic("5,2,-1"), cli::UsageError);
  EXPECT_THROW(cli::parse_synthetic("a,2,1"), cli::UsageError);
}
