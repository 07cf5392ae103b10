#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "support.hpp"

using namespace dedsi;

TEST(Toml, TablesScalarsAndArrays) {
  std::istringstream in(R"(# comment
experiment = "content_oblivious"
seed = 11
doc_counts = [40, 60]   # trailing comment

[split]
train = 10
val = 5
test = 5

[model]
learning_rate = 0.02
name = "a # not a comment"

[corpus.synthetic]
filler_prob = 0.25
flag = true
)");
  const auto j = parse_toml(in);
  EXPECT_EQ(j.at("experiment"), "content_oblivious");
  EXPECT_EQ(j.at("seed"), 11);
  EXPECT_EQ(j.at("doc_counts"), Json::array({40, 60}));
  EXPECT_EQ(j.at("split").at("val"), 5);
  EXPECT_DOUBLE_EQ(j.at("model").at("learning_rate").get<double>(), 0.02);
  EXPECT_EQ(j.at("model").at("name"), "a # not a comment");
  EXPECT_EQ(j.at("corpus").at("synthetic").at("flag"), true);
}

TEST(Toml, Errors) {
  for (const char* bad : {"x = ", "x = [1, 2", "[a", "novalue", "x = 1\nx = 2", "x = abc"}) {
    std::istringstream in(bad);
    EXPECT_THROW(parse_toml(in), Error) << bad;
  }
}

TEST(Spec, DefaultsAndDerivedSeeds) {
  const auto s = experiment_spec_from_json(Json::object());
  EXPECT_EQ(s.experiment, ExperimentKind::single);
  EXPECT_EQ(s.model.seed, derive_seed(s.seed, "model"));
  EXPECT_EQ(s.train.seed, derive_seed(s.seed, "train"));
  EXPECT_EQ(s.synthetic.queries_per_doc, s.split.total());
  EXPECT_EQ(s.output_dir, "runs/single");
  const auto t = experiment_spec_from_json({{"seed", 8}});
  EXPECT_NE(t.model.seed, s.model.seed);
  EXPECT_NE(spec_hash(t), spec_hash(s));
}

TEST(Spec, SubSeedsCannotBeOverridden) {
  const auto s = experiment_spec_from_json({{"model", {{"seed", 1}}}});
  EXPECT_EQ(s.model.seed, derive_seed(s.seed, "model"));
}

TEST(Spec, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(experiment_spec_from_json({{"sed", 1}}), Error);
  EXPECT_THROW(experiment_spec_from_json({{"model", {{"dimm", 3}}}}), Error);
  EXPECT_THROW(experiment_spec_from_json({{"experiment", "nope"}}), Error);
  EXPECT_THROW(experiment_spec_from_json({{"ks", {1, 9}}, {"beam_width", 5}}), Error);
  EXPECT_THROW(experiment_spec_from_json({{"experiment", "content_oblivious"}, {"n_seen_max", 30}}), Error);
  EXPECT_THROW(experiment_spec_from_json({{"seed", "x"}}), Error);
}

TEST(Spec, JsonRoundTripKeepsHash) {
  const auto s = experiment_spec_from_json({{"experiment", "decentralized"},
                                            {"simulation", {{"num_peers", 6}, {"personal_min_docs", 5},
                                                            {"personal_max_docs", 8}}}});
  const auto back = experiment_spec_from_json(Json::parse(to_json(s).dump()));
  EXPECT_EQ(spec_hash(back), spec_hash(s));
}

TEST(Spec, PresetsLoad) {
  std::size_t n = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(DEDSI_PRESETS_DIR)) {
    if (!e.is_regular_file()) continue;
    SCOPED_TRACE(e.path().string());
    EXPECT_NO_THROW(load_experiment_spec(e.path()));
    ++n;
  }
  EXPECT_GE(n, 6u);
}
