#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rfr/metrics.hpp"

using Catch::Matchers::WithinAbs;
using namespace rfr;

namespace {

Network net_with_seed(std::uint64_t seed) {
  NetworkSpec spec{5, {7}, 3, Activation::identity, HeadInit::he_uniform};
  return make_network(spec, 4, seed);
}

Matrix probe(int n, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(n, 5);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 5; ++j) m(i, j) = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("average incremental accuracy", "[metrics]") {
  const std::vector<double> traj{0.80, 0.70, 0.60};
  CHECK(average_incremental_accuracy(traj) == 0.70);
  const std::vector<double> single{0.42};
  CHECK(average_incremental_accuracy(single) == 0.42);
  const std::vector<double> flat(6, 0.55);
  CHECK_THAT(average_incremental_accuracy(flat), WithinAbs(0.55, 1e-15));
  CHECK_THROWS_AS(average_incremental_accuracy(std::vector<double>{}), EmptyInput);
}

TEST_CASE("base task forgetting", "[metrics]") {
  const std::vector<double> base{0.9, 0.75, 0.95};
  const auto f = base_task_forgetting(base);
  REQUIRE(f.size() == 2);
  CHECK_THAT(f[0], WithinAbs(0.15, 1e-15));
  CHECK_THAT(f[1], WithinAbs(-0.05, 1e-15));
  const std::vector<double> constant(4, 0.6);
  for (double x : base_task_forgetting(constant)) CHECK(x == 0);
  CHECK_THROWS_AS(base_task_forgetting(std::vector<double>{}), MissingBaseline);
}

TEST_CASE("weight distance of a single perturbation", "[metrics]") {
  const Network a = net_with_seed(1);
  Network b = a;
  CHECK(weight_distance(a, a) == 0);
  b.extractor[1].affine.weight(2, 3) += 0.375;
  CHECK_THAT(weight_distance(a, b), WithinAbs(0.375, 1e-15));
  Network head_only = a;
  head_only.head.weight.setZero();
  CHECK(weight_distance(a, head_only) == 0);
}

TEST_CASE("weight distance of a random perturbation equals its norm", "[metrics]") {
  const Network a = net_with_seed(2);
  const auto params = all_parameters(a);
  const auto n_extractor = extractor_parameters(a).size();
  Rng rng(3);
  std::vector<double> shifted = params;
  double sq = 0;
  for (std::size_t i = 0; i < n_extractor; ++i) {
    const double v = rng.normal() * 0.1;
    shifted[i] += v;
    sq += v * v;
  }
  Network b = a;
  set_all_parameters(b, shifted);
  CHECK_THAT(weight_distance(a, b), WithinAbs(std::sqrt(sq), 1e-12));
}

TEST_CASE("weight distance is a metric", "[metrics]") {
  const Network a = net_with_seed(4), b = net_with_seed(5), c = net_with_seed(6);
  CHECK(weight_distance(a, b) == weight_distance(b, a));
  CHECK(weight_distance(a, c) <= weight_distance(a, b) + weight_distance(b, c));
  CHECK(weight_distance(a, b) > 0);

  NetworkSpec other{5, {6}, 3, Activation::identity, HeadInit::he_uniform};
  CHECK_THROWS_AS(weight_distance(a, make_network(other, 4, 1)), ShapeMismatch);
}

TEST_CASE("representation cosine", "[metrics]") {
  const Network a = net_with_seed(7);
  const Matrix x = probe(12, 3);
  REQUIRE(extract_features(a, x).rowwise().norm().minCoeff() > 1e-6);
  CHECK(representation_cosine(a, a, x) == 1.0);

  Network neg = a;
  neg.extractor.back().affine.weight *= -1;
  neg.extractor.back().affine.bias *= -1;
  CHECK_THAT(representation_cosine(a, neg, x), WithinAbs(-1.0, 1e-14));

  // two samples at 0 and 90 degrees
  NetworkSpec spec{2, {}, 2, Activation::identity, HeadInit::zero};
  Network p = make_network(spec, 1, 0);
  Network q = p;
  p.extractor[0].affine.weight = Matrix::Identity(2, 2);
  q.extractor[0].affine.weight << 1, 1, 0, 0;
  Matrix two(2, 2);
  two << 1, 0, 0, 1;
  // p maps the samples to (1,0), (0,1); q maps both to (1,0)
  CHECK_THAT(representation_cosine(p, q, two), WithinAbs(0.5, 1e-15));
  CHECK_THROWS_AS(representation_cosine(p, q, Matrix(0, 2)), EmptyInput);
  CHECK_THROWS_AS(representation_cosine(p, q, Matrix::Zero(1, 2)), ZeroRow);
}

TEST_CASE("erank of network features in both modes", "[metrics]") {
  NetworkSpec spec{5, {}, 3, Activation::identity, HeadInit::zero};
  Network constant = make_network(spec, 2, 1);
  constant.extractor[0].affine.weight.setZero();
  constant.extractor[0].affine.bias << 1, 2, 3;
  const Matrix x = probe(40, 2);
  CHECK_THAT(representation_erank(constant, x, 8, RankMode::pool, 0), WithinAbs(1.0, 1e-12));
  CHECK_THAT(representation_erank(constant, x, 8, RankMode::batch_mean, 0), WithinAbs(1.0, 1e-12));

  const Network net = net_with_seed(3);
  CHECK(representation_erank(net, x, 40, RankMode::batch_mean, 5) ==
        representation_erank(net, x, 40, RankMode::pool, 5));
  const double batch = representation_erank(net, x, 10, RankMode::batch_mean, 5);
  CHECK(batch >= 1.0);
  CHECK(batch <= 3.0 + 1e-12);
  CHECK(batch == representation_erank(net, x, 10, RankMode::batch_mean, 5));

  CHECK_THROWS_AS(representation_erank(net, x, 3, RankMode::batch_mean, 0), DimensionError);
  CHECK_THROWS_AS(representation_erank(net, probe(3, 1), 8, RankMode::pool, 0), DimensionError);

  const std::vector<Network> nets{net, constant};
  const auto traj = rank_trajectory(nets, x, 8, RankMode::pool, 0);
  REQUIRE(traj.size() == 2);
  CHECK_THAT(traj[1], WithinAbs(1.0, 1e-12));
}

TEST_CASE("metrics csv and json share a fixed column order", "[metrics]") {
  MetricsLog log;
  MetricsRow r;
  r.session = 0;
  r.overall_acc = 0.5;
  log.rows.push_back(r);
  r.session = 1;
  r.forgetting = 0.25;
  log.rows.push_back(r);
  std::ostringstream csv;
  write_metrics_csv(csv, log);
  std::istringstream lines(csv.str());
  std::string header;
  std::getline(lines, header);
  CHECK(header ==
        "session,overall_acc,novel_acc,base_acc,forgetting,weight_dist_base,weight_dist_prev,"
        "cos_sim_base,cos_sim_prev,erank_batch_mean,erank_pool,novel_acc_final");
  std::string row1, row2;
  std::getline(lines, row1);
  std::getline(lines, row2);
  CHECK(row2.rfind("1,0.5,0,0,0.25,", 0) == 0);

  const std::string json = metrics_json(log);
  CHECK(json.find("\"session\"") < json.find("\"overall_acc\""));
  CHECK(json.find("\"erank_pool\"") < json.find("\"novel_acc_final\""));
}

TEST_CASE("plot data series", "[metrics]") {
  MetricsLog log;
  for (int t = 0; t < 3; ++t) {
    MetricsRow r;
    r.session = t;
    r.forgetting = 0.1 * t;
    log.rows.push_back(r);
  }
  const auto dir = std::filesystem::temp_directory_path() / "rfr_plotdata_test";
  std::filesystem::remove_all(dir);
  const auto files = write_plotdata(dir.string(), log);
  CHECK(files.size() == 9);
  std::ifstream in(dir / "fig_forgetting.csv");
  std::string header, first, second;
  std::getline(in, header);
  std::getline(in, first);
  std::getline(in, second);
  CHECK(header == "session,value");
  CHECK(first == "0,0");
  CHECK(second == "1,0.10000000000000001");
  std::filesystem::remove_all(dir);
}
