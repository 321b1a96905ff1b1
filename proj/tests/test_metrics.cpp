#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fedsim/federation.hpp"
#include "fedsim/metrics.hpp"
#include "test_util.hpp"

using namespace fedsim;

namespace {

double pairwise_auroc(const std::vector<double>& scores,
                      const std::vector<int>& labels) {
  double sum = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j])
        sum += 1.0;
      else if (scores[i] == scores[j])
        sum += 0.5;
    }
  }
  return sum / static_cast<double>(pairs);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("f1_score worked examples") {
  CHECK(f1_score({1, 0, 1}, {1, 0, 1}) == 1.0);
  CHECK(f1_score({0, 0, 0}, {1, 0, 1}) == 0.0);
  // TP=2, FP=1, FN=1 -> 2/3
  CHECK(f1_score({1, 1, 0, 1}, {1, 1, 1, 0}) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(f1_score({1}, {1, 0}), ConfigError);
  // no positives anywhere: denominator 0 -> 0 by definition
  CHECK(f1_score({0, 0}, {0, 0}) == 0.0);
}

TEST_CASE("f1_score is invariant under permutation") {
  RngStream rng(3, 0, 0, RngPurpose::data_gen);
  std::vector<int> preds, labels;
  for (int i = 0; i < 60; ++i) {
    preds.push_back(rng.next_below(2) ? 1 : 0);
    labels.push_back(rng.next_below(2) ? 1 : 0);
  }
  const double base = f1_score(preds, labels);
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<int> p2, l2;
  for (std::size_t i : order) {
    p2.push_back(preds[i]);
    l2.push_back(labels[i]);
  }
  CHECK(f1_score(p2, l2) == base);
}

TEST_CASE("auroc worked examples") {
  CHECK(auroc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == 1.0);
  CHECK(auroc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}) == 0.5);
  CHECK_THROWS_AS(auroc({0.1, 0.9}, {1, 1}), MetricError);
}

TEST_CASE("rank-based auroc equals the exhaustive pairwise oracle") {
  for (int trial = 0; trial < 60; ++trial) {
    RngStream rng(200 + static_cast<std::uint64_t>(trial), 0, 0, RngPurpose::data_gen);
    const std::size_t n = 2 + rng.next_below(199);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      // half the trials draw from a coarse grid so ties are common
      scores[i] = trial % 2 == 0
                      ? static_cast<double>(rng.next_below(5)) / 4.0
                      : rng.next_double();
      labels[i] = rng.next_below(2) ? 1 : 0;
    }
    labels[0] = 1;  // both classes present
    labels[n - 1] = 0;
    CHECK(std::abs(auroc(scores, labels) - pairwise_auroc(scores, labels)) <= 1e-12);
  }
}

TEST_CASE("auroc is invariant under strictly increasing transforms") {
  RngStream rng(7, 0, 0, RngPurpose::data_gen);
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 100; ++i) {
    scores.push_back(static_cast<double>(rng.next_below(9)) / 8.0);
    labels.push_back(rng.next_below(2) ? 1 : 0);
  }
  labels[0] = 1;
  labels[1] = 0;
  const double base = auroc(scores, labels);
  std::vector<double> warped = scores;
  for (double& s : warped) s = std::exp(3.0 * s + 1.0);
  CHECK(auroc(warped, labels) == base);
}

TEST_CASE("evaluate_model emits one report per test set") {
  SynthConfig synth = testutil::small_synth(501, 21, 3);
  synth.patients_per_center = {3, 5};
  synth.tiles_per_patient = {3, 6};
  const auto datasets = generate_federation(synth);
  FederationLayout layout;
  int i = 0;
  for (const auto& [cid, _] : datasets)
    (i++ < 11 ? layout.training_centers : layout.independent_centers).push_back(cid);

  ModelSpec spec{Arch::logistic, 3, {}};
  RngStream rng(1, 0, 0, RngPurpose::param_init);
  const ParameterSet model = init_params(spec, rng);

  const auto reports = evaluate_model(spec, model, datasets, layout);
  REQUIRE(reports.size() == 21);
  int local = 0, indep = 0;
  for (const auto& r : reports) {
    if (r.group == EvalGroup::local_test) ++local;
    if (r.group == EvalGroup::independent) ++indep;
    CHECK(r.n_pos + r.n_neg >= 1);
    CHECK(r.threshold == 0.5);
  }
  CHECK(local == 11);
  CHECK(indep == 10);

  // independent centers are scored on every sample they own
  for (const auto& r : reports)
    if (r.group == EvalGroup::independent)
      CHECK(r.n_pos + r.n_neg == datasets.at(r.center_id).n_samples());

  const auto again = evaluate_model(spec, model, datasets, layout);
  for (std::size_t k = 0; k < reports.size(); ++k) {
    CHECK(reports[k].f1 == again[k].f1);
    CHECK(reports[k].auroc == again[k].auroc);
  }
}

TEST_CASE("summarize mean and sample standard deviation") {
  EvalReport a{"c1", EvalGroup::independent, 5, 5, 0.8, 0.9, 0.5};
  EvalReport b{"c2", EvalGroup::independent, 5, 5, 1.0, 0.9, 0.5};
  EvalReport c{"c1", EvalGroup::local_test, 5, 5, 0.7, 0.8, 0.5};
  EvalReport d{"c2", EvalGroup::local_test, 5, 5, 0.7, 0.8, 0.5};
  const auto rows = summarize({{"m", {a, b, c, d}}});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].group == EvalGroup::independent);
  CHECK(rows[0].mean_f1 == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(rows[0].sd_f1 == doctest::Approx(0.141421).epsilon(1e-5));
  CHECK(rows[1].mean_f1 == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(rows[1].sd_f1 == 0.0);

  const auto two = summarize({{"m1", {a, b, c, d}}, {"m2", {a, b, c, d}}});
  CHECK(two.size() == 4);  // methods x groups

  CHECK_THROWS_AS(summarize({{"m", {a, c, d}}}), ConfigError);
}

TEST_CASE("report and summary CSVs are deterministic") {
  EvalReport a{"c1", EvalGroup::independent, 5, 5, 0.8, 0.9, 0.5};
  EvalReport b{"c2", EvalGroup::independent, 3, 7, 1.0, std::nullopt, 0.5};
  EvalReport c{"c1", EvalGroup::local_test, 5, 5, 0.7, 0.8, 0.5};
  EvalReport d{"c2", EvalGroup::local_test, 5, 5, 0.6, 0.7, 0.5};
  const auto dir = std::filesystem::temp_directory_path() / "fedsim_metrics_test";
  std::filesystem::create_directories(dir);

  write_reports_csv(dir / "r1.csv", {{"m", {a, b}}});
  write_reports_csv(dir / "r2.csv", {{"m", {a, b}}});
  const std::string r1 = slurp(dir / "r1.csv");
  CHECK(r1 == slurp(dir / "r2.csv"));
  CHECK(r1.find("method,center_id,group,n_pos,n_neg,f1,auroc\n") == 0);
  CHECK(r1.find("m,c2,independent,3,7,1,\n") != std::string::npos);  // empty auroc

  EvalReport b2 = b;
  b2.auroc = 0.75;
  const auto rows = summarize({{"m", {a, b2, c, d}}});
  write_summary_csv(dir / "s1.csv", rows);
  write_summary_csv(dir / "s2.csv", rows);
  CHECK(slurp(dir / "s1.csv") == slurp(dir / "s2.csv"));
  std::filesystem::remove_all(dir);
}
