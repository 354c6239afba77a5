#include <gtest/gtest.h>

#include <random>

#include "spatsurv/data.hpp"
#include "test_util.hpp"

using namespace spatsurv;

namespace {

std::string path_of(const std::filesystem::path& dir, const std::string& name, const std::string& text) {
  testutil::write_file(dir / name, text);
  return (dir / name).string();
}

}  // namespace

TEST(LoadSurvival, PassesThroughRecords) {
  auto dir = testutil::scratch_dir("data_pass");
  auto p = path_of(dir, "s.csv", "cluster_id,time,event,age\n1,1.0,1,30\n2,2.0,0,40\n1,0.5,1,50\n");
  auto data = load_survival(p, {}, 2);
  ASSERT_EQ(data.records.size(), 3u);
  EXPECT_EQ(data.records[0].time, 1.0);
  EXPECT_EQ(data.records[1].time, 2.0);
  EXPECT_EQ(data.records[2].time, 0.5);
  EXPECT_EQ(data.records[0].event, 1);
  EXPECT_EQ(data.records[1].event, 0);
  EXPECT_EQ(data.records[1].cluster, 1u);
  EXPECT_DOUBLE_EQ(data.scaler.time_scale(), 2.0 * (1.0 + kTimeMargin));
}

TEST(LoadSurvival, ScalesEndpointsToEpsilon) {
  auto dir = testutil::scratch_dir("data_eps");
  auto p = path_of(dir, "s.csv", "cluster_id,time,event,age\n1,1.0,1,20\n1,2.0,1,70\n");
  auto data = load_survival(p, {}, 1);
  EXPECT_DOUBLE_EQ(data.records[0].covariates[0], kScaleEps);
  EXPECT_DOUBLE_EQ(data.records[1].covariates[0], 1.0 - kScaleEps);
}

TEST(LoadSurvival, RejectsNonpositiveTime) {
  auto dir = testutil::scratch_dir("data_neg");
  auto p = path_of(dir, "s.csv", "cluster_id,time,event,age\n1,1.0,1,20\n1,-1,1,70\n");
  try {
    load_survival(p, {}, 1);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("nonpositive time at row 2"), std::string::npos);
  }
}

TEST(LoadSurvival, RejectsUnknownClusterAndMalformedRows) {
  auto dir = testutil::scratch_dir("data_bad");
  EXPECT_THROW(load_survival(path_of(dir, "a.csv", "cluster_id,time,event,x\n3,1.0,1,2\n1,1,1,3\n"), {}, 2), DataError);
  EXPECT_THROW(load_survival(path_of(dir, "b.csv", "cluster_id,time,event,x\n1,abc,1,2\n1,1,1,3\n"), {}, 2), DataError);
  EXPECT_THROW(load_survival(path_of(dir, "c.csv", "cluster_id,time,event,x\n1,1.0,2,2\n1,1,1,3\n"), {}, 2), DataError);
  EXPECT_THROW(load_survival(path_of(dir, "d.csv", "cluster_id,time,x\n1,1.0,2\n"), {}, 2), DataError);
  EXPECT_THROW(load_survival((dir / "missing.csv").string(), {}, 2), DataError);
}

TEST(LoadSurvival, CategoricalLevelsAreEquallySpaced) {
  auto dir = testutil::scratch_dir("data_cat");
  auto p = path_of(dir, "s.csv",
                   "cluster_id,time,event,stage,sex\n1,1,1,10,F\n1,2,1,2,M\n1,3,1,1,F\n1,4,0,2,M\n");
  auto data = load_survival(p, SurvivalSchema{{"stage", "sex"}}, 1);
  // numeric levels sort numerically: 1, 2, 10
  EXPECT_DOUBLE_EQ(data.records[0].covariates[0], 1.0);
  EXPECT_DOUBLE_EQ(data.records[1].covariates[0], 0.5);
  EXPECT_DOUBLE_EQ(data.records[2].covariates[0], 0.0);
  EXPECT_DOUBLE_EQ(data.records[0].covariates[1], 0.0);
  EXPECT_DOUBLE_EQ(data.records[1].covariates[1], 1.0);
  EXPECT_THROW(data.scaler.encode(std::map<std::string, std::string>{{"stage", "3"}, {"sex", "F"}}), DataError);
}

TEST(LoadSurvival, ReusesAGivenScaler) {
  auto dir = testutil::scratch_dir("data_reuse");
  auto train = load_survival(path_of(dir, "a.csv", "cluster_id,time,event,x\n1,1,1,0\n1,2,1,10\n"), {}, 1);
  auto test = load_survival(path_of(dir, "b.csv", "cluster_id,time,event,x\n1,5,1,5\n1,6,1,20\n"), {}, 1, &train.scaler);
  EXPECT_NEAR(test.records[0].covariates[0], 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(test.records[1].covariates[0], 1.0 - kScaleEps);  // clamped
  EXPECT_DOUBLE_EQ(test.scaler.time_scale(), train.scaler.time_scale());
}

TEST(Scaler, RoundTripsContinuousValues) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-50.0, 80.0);
  ColumnScale c;
  c.min = -50.0;
  c.max = 80.0;
  for (int k = 0; k < 10000; ++k) {
    const double x = u(rng);
    EXPECT_NEAR(c.unscale(c.scale(x)), x, 1e-12 * 80.0);
    EXPECT_GT(c.scale(x), 0.0);
    EXPECT_LT(c.scale(x), 1.0);
  }
}

TEST(Scaler, RejectsConstantColumns) {
  ColumnScale c;
  c.name = "flat";
  c.min = c.max = 3.0;
  EXPECT_THROW(CovariateScaler({c}, 1.0), DataError);
}

TEST(Adjacency, EdgeListOnTwoNodes) {
  auto dir = testutil::scratch_dir("adj_two");
  auto g = load_adjacency(path_of(dir, "a.csv", "i,j\n1,2\n"));
  Eigen::Matrix2d expected;
  expected << 0, 1, 1, 0;
  EXPECT_EQ(g.adjacency(), expected);
  EXPECT_EQ(g.degrees(), Eigen::Vector2d(1, 1));
}

TEST(Adjacency, PathDegrees) {
  auto dir = testutil::scratch_dir("adj_path");
  auto g = load_adjacency(path_of(dir, "a.csv", "i,j\n1,2\n2,3\n"));
  EXPECT_EQ(g.degrees(), Eigen::Vector3d(1, 2, 1));
}

TEST(Adjacency, DenseMatrixForm) {
  auto dir = testutil::scratch_dir("adj_dense");
  auto g = load_adjacency(path_of(dir, "a.csv", "a,b,c\n0,1,1\n1,0,0\n1,0,0\n"));
  EXPECT_EQ(g.degrees(), Eigen::Vector3d(2, 1, 1));
  EXPECT_EQ(g.edges().size(), 2u);
}

TEST(Adjacency, RejectsInvalidGraphs) {
  auto dir = testutil::scratch_dir("adj_bad");
  try {
    load_adjacency(path_of(dir, "loop.csv", "i,j\n1,1\n"));
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("self-loop"), std::string::npos);
  }
  EXPECT_THROW(load_adjacency(path_of(dir, "asym.csv", "a,b\n0,1\n0,0\n")), DataError);
  EXPECT_THROW(load_adjacency(path_of(dir, "iso.csv", "a,b,c\n0,1,0\n1,0,0\n0,0,0\n")), DataError);
  EXPECT_THROW(load_adjacency(path_of(dir, "diag.csv", "a,b\n1,1\n1,0\n")), DataError);
}

TEST(Adjacency, DegreesAreRowSums) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 3 + rep % 8;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (int e = 0; e < 5; ++e) {
      auto i = pick(rng), j = pick(rng);
      if (i != j) edges.emplace_back(i, j);
    }
    auto g = AdjacencyGraph::from_edges(n, edges);
    EXPECT_EQ(g.degrees(), Eigen::VectorXd(g.adjacency().rowwise().sum()));
    EXPECT_EQ(g.adjacency(), g.adjacency().transpose());
  }
}

TEST(Survey, AlignsToGraphOrder) {
  auto dir = testutil::scratch_dir("survey_ok");
  auto g = load_adjacency(path_of(dir, "a.csv", "i,j\n1,2\n"));
  auto s = load_survey(path_of(dir, "s.csv", "cluster_id,n0,m0\n2,40,10\n1,50,30\n"), g);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.n0[0], 50);
  EXPECT_EQ(s.m0[0], 30);
  EXPECT_EQ(s.n0[1], 40);
  EXPECT_EQ(s.m0[1], 10);
}

TEST(Survey, RejectsInconsistentCounts) {
  auto dir = testutil::scratch_dir("survey_bad");
  auto g2 = load_adjacency(path_of(dir, "a.csv", "i,j\n1,2\n"));
  EXPECT_THROW(load_survey(path_of(dir, "s.csv", "cluster_id,n0,m0\n1,3,5\n2,4,1\n"), g2), DataError);
  auto g3 = load_adjacency(path_of(dir, "b.csv", "i,j\n1,2\n2,3\n"));
  EXPECT_THROW(load_survey(path_of(dir, "t.csv", "cluster_id,n0,m0\n1,3,1\n2,4,1\n"), g3), DataError);
}

TEST(Survey, WriteThenLoad) {
  auto dir = testutil::scratch_dir("survey_rt");
  auto g = AdjacencyGraph::from_edges(3, {{0, 1}, {1, 2}});
  SurveyCounts s{{10, 20, 0}, {3, 20, 0}};
  write_survey((dir / "s.csv").string(), s);
  write_adjacency((dir / "a.csv").string(), g);
  auto g2 = load_adjacency((dir / "a.csv").string());
  auto s2 = load_survey((dir / "s.csv").string(), g2);
  EXPECT_EQ(g2.adjacency(), g.adjacency());
  EXPECT_EQ(s2.n0, s.n0);
  EXPECT_EQ(s2.m0, s.m0);
}
