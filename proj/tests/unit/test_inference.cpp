// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>

#include "emoalign/inference.hpp"
#include "test_support.hpp"

namespace emoalign {
namespace {

EmbeddingMatrix random_labels(std::size_t n, std::size_t m, Rng& rng) {
  std::vector<double> d(n * m);
  for (double& v : d) v = rng.normal();
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back("l" + std::to_string(i));
  return EmbeddingMatrix(n, m, std::move(d), std::move(names));
}

TEST(Rank, ExactMatchIsFirstWithZeroDistance) {
  Rng rng(1);
  const EmbeddingMatrix labels = random_labels(5, 6, rng);
  const auto row = labels.row(3);
  const std::vector<double> out(row.begin(), row.end());
  const Prediction p = rank_labels(out, labels, 1);
  EXPECT_EQ(p.labels, (std::vector<std::size_t>{3}));
  EXPECT_NEAR(p.distances[0], 0.0, 1e-15);
}

TEST(Rank, FullRankingIsSorted) {
  Rng rng(2);
  const EmbeddingMatrix labels = random_labels(7, 4, rng);
  const std::vector<double> out{0.1, -0.3, 0.7, 0.2};
  const Prediction p = rank_labels(out, labels, 7);
  ASSERT_EQ(p.labels.size(), 7u);
  EXPECT_TRUE(std::is_sorted(p.distances.begin(), p.distances.end()));
  std::vector<std::size_t> sorted = p.labels;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Rank, MatchesBruteForceSort) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(100 + seed);
    const EmbeddingMatrix labels = random_labels(5, 3, rng);
    std::vector<double> out{rng.normal(), rng.normal(), rng.normal()};
    std::vector<std::pair<double, std::size_t>> oracle;
    for (std::size_t i = 0; i < 5; ++i) {
      double dot = 0, na = 0, nb = 0;
      for (std::size_t c = 0; c < 3; ++c) {
        dot += out[c] * labels.row(i)[c];
        na += out[c] * out[c];
        nb += labels.row(i)[c] * labels.row(i)[c];
      }
      oracle.emplace_back(1.0 - dot / std::sqrt(na * nb), i);
    }
    std::sort(oracle.begin(), oracle.end());
    const std::size_t k = 1 + rng.index(5);
    const Prediction p = rank_labels(out, labels, k);
    for (std::size_t r = 0; r < k; ++r) {
      EXPECT_EQ(p.labels[r], oracle[r].second);
      EXPECT_NEAR(p.distances[r], oracle[r].first, 1e-12);
    }
  }
}

TEST(Rank, TiesGoToLowestIndex) {
  const EmbeddingMatrix labels(3, 2, {0, 1, 1, 0, 1, 0}, {"a", "b", "c"});
  const std::vector<double> out{1, 0};
  EXPECT_EQ(rank_labels(out, labels, 2).labels, (std::vector<std::size_t>{1, 2}));
}

TEST(Rank, KOutOfRangeNamesKAndN) {
  Rng rng(3);
  const EmbeddingMatrix labels = random_labels(4, 3, rng);
  const std::vector<double> out{1, 0, 0};
  try {
    rank_labels(out, labels, 5);
    FAIL() << "expected ArgumentError";
  } catch (const ArgumentError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('5'), std::string::npos) << msg;
    EXPECT_NE(msg.find('4'), std::string::npos) << msg;
  }
  EXPECT_THROW(rank_labels(out, labels, 0), ArgumentError);
}

TEST(F1, PerfectPredictor) {
  const LabelSets truth{{0}, {1, 2}, {2}};
  EXPECT_DOUBLE_EQ(macro_f1(truth, truth, 3), 1.0);
}

TEST(F1, HandComputedOneThird) {
  // Label 0: tp=1, fp=1, fn=0. Label 1: tp=0, fp=0, fn=1.
  const LabelSets pred{{0}, {0}};
  const LabelSets truth{{0}, {1}};
  const F1Scores s = f1_scores(pred, truth, 2);
  EXPECT_NEAR(s.per_label[0], 2.0 / 3.0, 1e-15);
  EXPECT_EQ(s.per_label[1], 0.0);
  EXPECT_NEAR(s.macro, 1.0 / 3.0, 1e-15);
}

TEST(F1, TotalMiss) {
  EXPECT_EQ(macro_f1({{1}, {0}}, {{0}, {1}}, 2), 0.0);
}

TEST(F1, UnusedLabelsCountAsZero) {
  EXPECT_DOUBLE_EQ(macro_f1({{0}}, {{0}}, 4), 0.25);
}

TEST(F1, MatchesConfusionMatrixOracle) {
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng.index(5), samples = 1 + rng.index(12);
    LabelSets pred(samples), truth(samples);
    for (std::size_t s = 0; s < samples; ++s) {
      for (std::size_t l = 0; l < n; ++l) {
        if (rng.uniform() < 0.4) pred[s].push_back(l);
        if (rng.uniform() < 0.4) truth[s].push_back(l);
      }
      if (truth[s].empty()) truth[s].push_back(rng.index(n));
    }
    double macro = 0;
    for (std::size_t l = 0; l < n; ++l) {
      double tp = 0, fp = 0, fn = 0;
      for (std::size_t s = 0; s < samples; ++s) {
        const bool p = std::count(pred[s].begin(), pred[s].end(), l) > 0;
        const bool t = std::count(truth[s].begin(), truth[s].end(), l) > 0;
        tp += p && t;
        fp += p && !t;
        fn += !p && t;
      }
      macro += (2 * tp + fp + fn) > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;
    }
    EXPECT_NEAR(macro_f1(pred, truth, n), macro / n, 1e-15);
  }
}

TEST(F1, EmptyInputIsArgumentError) { EXPECT_THROW(macro_f1({}, {}, 3), ArgumentError); }

TEST(ReferenceK, KnownCorpora) {
  EXPECT_EQ(reference_k("MTG-Jamendo"), 2u);
  EXPECT_EQ(reference_k("jamendo"), 2u);
  EXPECT_EQ(reference_k("CAL500"), 4u);
  EXPECT_EQ(reference_k("emotify"), 3u);
  EXPECT_FALSE(reference_k("synthetic").has_value());
}

ProjectorConfig tiny() {
  ProjectorConfig c;
  c.d_in = 6;
  c.d_model = 4;
  c.heads = 2;
  c.layers = 1;
  c.ffn_mult = 2;
  c.out_dim = 3;
  return c;
}

Dataset one_sample_dataset(const ProjectorParams& p, std::size_t n_labels) {
  Rng rng(11);
  Sample s;
  s.id = "only";
  s.features = testing::random_tensor({2, 6}, rng);
  s.labels = {0};
  const std::vector<double> out = project(p, s.features);
  std::vector<double> data(out.begin(), out.end());
  std::vector<std::string> names{"match"};
  for (std::size_t i = 1; i < n_labels; ++i) {
    // Pointing away from the output keeps the matching label strictly nearest.
    for (double v : out) data.push_back(-v + 0.1 * rng.normal());
    names.push_back("other" + std::to_string(i));
  }
  Dataset ds;
  ds.name = "single";
  ds.split = Split::test;
  ds.label_space.embedding = EmbeddingMatrix(n_labels, out.size(), std::move(data), std::move(names));
  ds.samples.push_back(std::move(s));
  return ds;
}

TEST(Evaluate, SingleCorrectSampleScoresOneOverN) {
  const ProjectorParams p = init_projector(tiny(), 1);
  const Dataset ds = one_sample_dataset(p, 4);
  const EvalReport r = evaluate(p, ds, 1);
  EXPECT_EQ(r.predictions.samples[0].labels, (std::vector<std::size_t>{0}));
  EXPECT_NEAR(r.macro_f1, 0.25, 1e-15);
  EXPECT_EQ(r.samples, 1u);
}

TEST(Evaluate, UnseenLabelSpaceAndThreadsAgree) {
  SynthSpec spec;
  spec.feature_dim = 6;
  spec.embedding_dim = 3;
  spec.datasets = {{"fresh", 0, 40}};
  const Dataset ds = generate_synthetic(spec, 3).datasets[0].test;
  const ProjectorParams p = init_projector(tiny(), 2);
  const EvalReport a = evaluate(p, ds, 1, false, 1);
  const EvalReport b = evaluate(p, ds, 1, false, 3);
  EXPECT_EQ(a.macro_f1, b.macro_f1);
  ASSERT_EQ(a.predictions.samples.size(), b.predictions.samples.size());
  for (std::size_t i = 0; i < a.predictions.samples.size(); ++i)
    EXPECT_EQ(a.predictions.samples[i].labels, b.predictions.samples[i].labels);
  EXPECT_EQ(default_k(ds), 1u);
}

TEST(Evaluate, SegmentLevelScoresEveryRow) {
  SynthSpec spec;
  spec.feature_dim = 6;
  spec.embedding_dim = 3;
  spec.segments = 5;
  spec.datasets = {{"seg", 0, 10}};
  const Dataset ds = generate_synthetic(spec, 4).datasets[0].test;
  const EvalReport r = evaluate(init_projector(tiny(), 2), ds, 1, true);
  EXPECT_EQ(r.samples, 50u);
  EXPECT_TRUE(r.segment_level);
}

TEST(Evaluate, ReportJsonHasPerLabelScores) {
  const ProjectorParams p = init_projector(tiny(), 1);
  const EvalReport r = evaluate(p, one_sample_dataset(p, 3), 1);
  const auto j = eval_report_to_json(r);
  EXPECT_EQ(j.at("dataset"), "single");
  EXPECT_EQ(j.at("per_label").size(), 3u);
}

}  // namespace
}  // namespace emoalign
