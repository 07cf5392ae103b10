#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace dedsi;

namespace {

ModelResult from_probs(int shard, std::vector<std::pair<std::string, double>> probs) {
  ModelResult r{{shard, -1}, {}};
  for (auto& [d, p] : probs) r.candidates.push_back({d, std::log(p)});
  return r;
}

}  // namespace

TEST(Softmax, TwoScores) {
  const auto n = softmax_normalize({{}, {{"a", 2.0}, {"b", 0.0}}});
  EXPECT_NEAR(n[0].prob, 0.8808, 1e-4);
  EXPECT_NEAR(n[1].prob, 0.1192, 1e-4);
}

TEST(Softmax, SingleCandidateIsCertain) {
  EXPECT_EQ(softmax_normalize({{}, {{"a", -40.0}}})[0].prob, 1.0);
}

TEST(Softmax, StableForLargeMagnitudes) {
  const auto n = softmax_normalize({{}, {{"a", -1000.0}, {"b", -1001.0}}});
  EXPECT_NEAR(n[0].prob + n[1].prob, 1.0, 1e-12);
  EXPECT_GT(n[0].prob, n[1].prob);
}

TEST(Softmax, ShiftInvariant) {
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    auto r = fixtures::random_model_results(rng, 1, 1).front();
    auto shifted = r;
    const double c = 50.0 * uniform_real(rng) - 25.0;
    for (auto& x : shifted.candidates) x.score += c;
    const auto a = softmax_normalize(r), b = softmax_normalize(shifted);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i].prob, b[i].prob, 1e-9);
  }
}

TEST(Merge, ConfidenceEnsembleWorkedExample) {
  const std::vector<ModelResult> results{
      from_probs(0, {{"DocA1", 0.6}, {"DocA2", 0.3}, {"DocA3", 0.1}}),
      from_probs(1, {{"DocB1", 0.82}, {"DocB2", 0.18}}),
      from_probs(2, {{"DocE1", 0.48}, {"DocE2", 0.42}, {"DocE3", 0.1}}),
      from_probs(3, {{"DocG1", 0.45}, {"DocG2", 0.35}, {"DocG3", 0.2}}),
      from_probs(4, {{"DocJ1", 0.5}, {"DocJ2", 0.3}, {"DocJ3", 0.2}}),
  };
  const auto r = merge_across_shards(results, 5, "q");
  const std::vector<std::pair<std::string, double>> want{
      {"DocB1", 0.82}, {"DocA1", 0.6}, {"DocJ1", 0.5}, {"DocE1", 0.48}, {"DocG1", 0.45}};
  ASSERT_EQ(r.ranked.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(r.ranked[i].docid, want[i].first);
    EXPECT_NEAR(r.ranked[i].score, want[i].second, 1e-12);
  }
  EXPECT_EQ(r.ranked[0].source.shard_id, 1);
}

TEST(Merge, SummedByHand) {
  const std::vector<ModelResult> results{
      from_probs(0, {{"Y", 0.5}, {"X", 0.3}, {"Z", 0.2}}),
      from_probs(0, {{"Y", 0.45}, {"Z", 0.25}, {"X", 0.3}}),
  };
  const auto r = merge_summed(results, 5);
  ASSERT_EQ(r.ranked.size(), 3u);
  EXPECT_EQ(r.ranked[0].docid, "Y");
  EXPECT_NEAR(r.ranked[0].score, 0.95, 1e-12);
  EXPECT_EQ(r.ranked[1].docid, "X");
  EXPECT_NEAR(r.ranked[1].score, 0.6, 1e-12);
  EXPECT_EQ(r.ranked[2].docid, "Z");
  EXPECT_NEAR(r.ranked[2].score, 0.45, 1e-12);
}

TEST(Merge, SummingCanReorderAcrossModels) {
  // "b" is never any model's favourite, but wins once probabilities are summed.
  const std::vector<ModelResult> results{
      from_probs(0, {{"a", 0.55}, {"b", 0.45}}),
      from_probs(0, {{"c", 0.55}, {"b", 0.45}}),
  };
  EXPECT_EQ(merge_summed(results, 1).ranked[0].docid, "b");
  EXPECT_EQ(merge_across_shards(results, 1).ranked[0].docid, "a");
}

TEST(Merge, TiesBreakByDocid) {
  const std::vector<ModelResult> results{{{0, -1}, {{"zeta", -1.0}, {"alpha", -1.0}}}};
  const auto r = merge_across_shards(results, 2);
  EXPECT_EQ(r.ranked[0].docid, "alpha");
  EXPECT_EQ(r.ranked[1].docid, "zeta");
}

TEST(Merge, MatchesBruteForceOracle) {
  Rng rng(17);
  for (int t = 0; t < 500; ++t) {
    const auto results = fixtures::random_model_results(rng);
    const auto k = static_cast<std::size_t>(uniform_between(rng, 1, 12));
    EXPECT_TRUE(fixtures::same_ranking(merge_across_shards(results, k), fixtures::oracle_merge(results, k, false)));
    EXPECT_TRUE(fixtures::same_ranking(merge_summed(results, k), fixtures::oracle_merge(results, k, true)));
  }
}

TEST(Merge, RejectsEmptyInputs) {
  EXPECT_THROW(merge_across_shards({}, 5), Error);
  EXPECT_THROW(merge_summed({{{0, -1}, {{"a", 0.0}}}}, 0), Error);
  EXPECT_THROW(softmax_normalize({}), Error);
}

TEST(Merge, JsonRoundTrip) {
  Rng rng(2);
  const auto r = merge_summed(fixtures::random_model_results(rng), 5, "some query");
  const auto back = ensemble_result_from_json(Json::parse(to_json(r).dump()));
  EXPECT_EQ(back.query, "some query");
  ASSERT_EQ(back.ranked.size(), r.ranked.size());
  for (std::size_t i = 0; i < r.ranked.size(); ++i) {
    EXPECT_EQ(back.ranked[i].docid, r.ranked[i].docid);
    EXPECT_EQ(back.ranked[i].score, r.ranked[i].score);
    EXPECT_EQ(back.ranked[i].source, r.ranked[i].source);
  }
}
