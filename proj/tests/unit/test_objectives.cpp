// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <map>

#include "emoalign/objectives.hpp"
#include "test_support.hpp"

namespace emoalign {
namespace {

constexpr double kTol = 1e-12;

Var vec(Tape& t, std::vector<double> v) { return t.constant(Tensor::vector(std::move(v))); }

double triplet(std::vector<double> a, std::vector<double> p, std::vector<double> n, double margin,
               HingeOrientation o = HingeOrientation::standard) {
  Tape t(false);
  Var av[] = {vec(t, a)}, pv[] = {vec(t, p)}, nv[] = {vec(t, n)};
  return t.scalar(triplet_align_loss(t, av, pv, nv, margin, o));
}

TEST(Triplet, EqualTargetsGiveMargin) {
  EXPECT_NEAR(triplet({0.3, -1, 2}, {1, 2, 3}, {1, 2, 3}, 0.2), 0.2, kTol);
}

TEST(Triplet, SatisfiedMarginClampsToZero) { EXPECT_EQ(triplet({1, 0}, {2, 0}, {0, 3}, 0.2), 0.0); }

TEST(Triplet, HandEvaluatedExample) {
  const double s = 1.0 / std::sqrt(2.0);
  EXPECT_EQ(triplet({1, 0}, {s, s}, {0, 1}, 0.1), 0.0);
}

TEST(Triplet, ActiveHingeValue) {
  // cos(a,pos) = 0, cos(a,neg) = 1: hinge = 1 - 0 + 0.2.
  EXPECT_NEAR(triplet({1, 0}, {0, 1}, {1, 0}, 0.2), 1.2, kTol);
}

TEST(Triplet, LiteralOrientationSwapsTerms) {
  const double s = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(triplet({1, 0}, {s, s}, {0, 1}, 0.1, HingeOrientation::literal), s + 0.1, kTol);
}

TEST(Triplet, MeanOverTriples) {
  Tape t(false);
  Var a[] = {vec(t, {1, 0}), vec(t, {1, 0})};
  Var p[] = {vec(t, {0, 1}), vec(t, {1, 0})};
  Var n[] = {vec(t, {1, 0}), vec(t, {0, 1})};
  EXPECT_NEAR(t.scalar(triplet_align_loss(t, a, p, n, 0.2)), (1.2 + 0.0) / 2, kTol);
}

TEST(Triplet, Errors) {
  Tape t(false);
  Var a[] = {vec(t, {1, 0})};
  Var z[] = {vec(t, {0, 0})};
  EXPECT_THROW(triplet_align_loss(t, a, a, z, 0.2), DegenerateError);
  EXPECT_THROW(triplet_align_loss(t, a, a, std::span<const Var>{}, 0.2), DimensionError);
  EXPECT_THROW(triplet_align_loss(t, a, a, a, -0.1), ArgumentError);
}

TEST(Triplet, StaysWithinCosineBounds) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(3), p(3), n(3);
    for (auto* v : {&a, &p, &n})
      for (double& x : *v) x = rng.normal();
    const double margin = rng.uniform();
    const double l = triplet(a, p, n, margin);
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, margin + 2.0);
  }
}

double reg(std::vector<std::vector<double>> outs, std::vector<ClusterSet> clusters, RegMode mode) {
  Tape t(false);
  std::vector<Var> vars;
  for (auto& o : outs) vars.push_back(vec(t, o));
  return t.scalar(reg_loss(t, vars, clusters, mode));
}

TEST(Reg, IdenticalOutputsDisjointClusters) {
  EXPECT_NEAR(reg({{1, 2}, {1, 2}}, {{0}, {1}}, RegMode::negative), 1.0, kTol);
}

TEST(Reg, OrthogonalOutputsDisjointClusters) {
  EXPECT_NEAR(reg({{1, 0}, {0, 3}}, {{0}, {1}}, RegMode::negative), 0.0, kTol);
}

TEST(Reg, ThreeOutputsTwoDisjointPairs) {
  // f0 and f2 share cluster 0; f1 is in cluster 1. cos(f0,f1) = 0.5, cos(f1,f2) = -0.5.
  const double s3 = std::sqrt(3.0) / 2.0;
  const std::vector<double> f0{1, 0}, f1{0.5, s3}, f2{-1, 0};
  EXPECT_NEAR(cosine_similarity(f0, f1), 0.5, kTol);
  EXPECT_NEAR(cosine_similarity(f1, f2), -0.5, kTol);
  EXPECT_NEAR(reg({f0, f1, f2}, {{0}, {1}, {0}}, RegMode::negative), 0.0, kTol);
  const std::vector<ClusterSet> cs{{0}, {1}, {0}};
  EXPECT_EQ(count_reg_pairs(cs, RegMode::negative), 2u);
  EXPECT_EQ(count_reg_pairs(cs, RegMode::positive), 1u);
}

TEST(Reg, PositiveModeAveragesDistanceOverSharedPairs) {
  // Shared pairs: (0,1) cos 0 and (0,2) cos 1; (1,2) is disjoint.
  const std::vector<ClusterSet> cs{{0, 1}, {0}, {1}};
  EXPECT_NEAR(reg({{1, 0}, {0, 1}, {2, 0}}, cs, RegMode::positive), ((1 - 0.0) + (1 - 1.0)) / 2, kTol);
}

TEST(Reg, NoEligiblePairsIsZero) {
  EXPECT_EQ(reg({{1, 0}, {0, 1}}, {{0}, {0}}, RegMode::negative), 0.0);
  EXPECT_EQ(reg({{1, 0}, {0, 1}}, {{0}, {1}}, RegMode::positive), 0.0);
  EXPECT_EQ(reg({{1, 0}}, {{0}}, RegMode::negative), 0.0);
}

TEST(Reg, NegativeModeFallsAsOutputsRotateApart) {
  double previous = 2.0;
  for (int step = 0; step <= 20; ++step) {
    const double angle = 3.14159265358979 * step / 20.0;
    const double value = reg({{1, 0}, {std::cos(angle), std::sin(angle)}}, {{0}, {1}}, RegMode::negative);
    EXPECT_LT(value, previous) << "step " << step;
    previous = value;
  }
}

TEST(Reg, OffModeIsAnError) {
  Tape t(false);
  Var v[] = {vec(t, {1, 0})};
  const ClusterSet cs[] = {{0}};
  EXPECT_THROW(reg_loss(t, v, cs, RegMode::off), ArgumentError);
}

TEST(Reg, MatchesPairEnumerationOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.index(7);
    std::vector<std::vector<double>> outs(n, std::vector<double>(4));
    std::vector<ClusterSet> cs(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (double& v : outs[i]) v = rng.normal();
      cs[i] = {rng.index(3)};
      if (rng.uniform() < 0.3) {
        const std::size_t extra = rng.index(3);
        if (extra != cs[i][0]) cs[i].push_back(extra);
        std::sort(cs[i].begin(), cs[i].end());
      }
    }
    double neg = 0, pos = 0;
    int n_neg = 0, n_pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        bool shared = false;
        for (auto a : cs[i])
          for (auto b : cs[j]) shared = shared || a == b;
        const double c = cosine_similarity(outs[i], outs[j]);
        if (shared) {
          pos += 1 - c;
          ++n_pos;
        } else {
          neg += c;
          ++n_neg;
        }
      }
    }
    EXPECT_NEAR(reg(outs, cs, RegMode::negative), n_neg ? neg / n_neg : 0.0, kTol);
    EXPECT_NEAR(reg(outs, cs, RegMode::positive), n_pos ? pos / n_pos : 0.0, kTol);
  }
}

// Two-label fixture: e0 and e1 sit in separate clusters.
struct Fixture {
  EmbeddingMatrix labels{2, 4, {1, 0, 0, 0, 0, 1, 0, 0}, {"e0", "e1"}};
  ClusterModel clusters;

  Fixture() {
    clusters.dim = 4;
    clusters.centers = labels.data;
    clusters.assignment = {0, 1};
    clusters.member_counts = {1, 1};
    clusters.labels = labels.names;
    clusters.bandwidth = 0.5;
  }

  BatchContext context(Tape& t, const std::vector<std::vector<double>>& outs,
                       const std::vector<std::vector<std::size_t>>& true_labels) const {
    BatchContext ctx;
    ctx.label_embeddings = &labels;
    ctx.cluster_model = &clusters;
    ctx.label_cluster = label_clusters(labels, clusters);
    for (std::size_t i = 0; i < outs.size(); ++i) {
      ctx.outputs.push_back(vec(t, outs[i]));
      ctx.labels.push_back(true_labels[i]);
      ctx.clusters.push_back(cluster_set_of(true_labels[i], ctx.label_cluster));
    }
    return ctx;
  }
};

// f0 and f1 are unit vectors with cos(f0,e0)=0.3, cos(f0,e1)=0.2,
// cos(f1,e0)=0.2, cos(f1,e1)=0.3 and cos(f0,f1)=0.04.
std::vector<std::vector<double>> lambda_fixture_outputs() {
  const double z0 = std::sqrt(0.87);
  const double x = -0.08 / z0;
  const double y = std::sqrt(1.0 - 0.04 - 0.09 - x * x);
  return {{0.3, 0.2, z0, 0.0}, {0.2, 0.3, x, y}};
}

TEST(TotalLoss, LambdaFixtureSumsTerms) {
  Fixture fx;
  Tape t(false);
  const BatchContext ctx = fx.context(t, lambda_fixture_outputs(), {{0}, {1}});
  ObjectiveConfig cfg;
  cfg.margin = 0.2;
  cfg.lambda = 2.5;
  cfg.reg_mode = RegMode::negative;
  Rng rng(0);
  const LossTerms terms = total_loss(t, ctx, cfg, rng);
  EXPECT_NEAR(terms.align, 0.1, kTol);
  EXPECT_NEAR(terms.reg, 0.04, kTol);
  EXPECT_NEAR(t.scalar(terms.total), 0.2, kTol);
  EXPECT_EQ(terms.triplets, 2u);
  EXPECT_EQ(terms.pairs, 1u);
}

TEST(TotalLoss, ZeroLambdaIsAlignOnly) {
  Fixture fx;
  Tape t(false);
  const BatchContext ctx = fx.context(t, lambda_fixture_outputs(), {{0}, {1}});
  ObjectiveConfig cfg;
  cfg.lambda = 0.0;
  Rng rng(0);
  const LossTerms terms = total_loss(t, ctx, cfg, rng);
  EXPECT_EQ(t.scalar(terms.total), terms.align);
}

TEST(TotalLoss, OffModeMatchesZeroLambda) {
  Fixture fx;
  auto run = [&](RegMode mode, double lambda) {
    Tape t(false);
    const BatchContext ctx = fx.context(t, lambda_fixture_outputs(), {{0}, {1}});
    ObjectiveConfig cfg;
    cfg.lambda = lambda;
    cfg.reg_mode = mode;
    Rng rng(3);
    return t.scalar(total_loss(t, ctx, cfg, rng).total);
  };
  EXPECT_EQ(run(RegMode::off, 2.5), run(RegMode::negative, 0.0));
}

TEST(TotalLoss, CentroidTargetsUseClusterCenters) {
  Fixture fx;
  fx.clusters.centers = {0.6, 0.8, 0, 0, 0, 0, 1, 0};
  Tape t(false);
  const BatchContext ctx = fx.context(t, {{1, 0, 0, 0}}, {{0}});
  ObjectiveConfig cfg;
  cfg.target_mode = TargetMode::centroid;
  cfg.reg_mode = RegMode::off;
  Rng rng(0);
  // cos(f, c0) = 0.6, cos(f, c1) = 0: hinge = 0 - 0.6 + 0.2 < 0.
  EXPECT_EQ(t.scalar(total_loss(t, ctx, cfg, rng).total), 0.0);
  cfg.margin = 0.9;
  EXPECT_NEAR(t.scalar(total_loss(t, ctx, cfg, rng).total), 0.3, kTol);
}

TEST(Negatives, ForcedChoice) {
  Fixture fx;
  Tape t(false);
  const BatchContext ctx = fx.context(t, {{1, 0, 0, 0}}, {{0}});
  Rng rng(1);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sample_negative(0, ctx, rng), 1u);
}

TEST(Negatives, FallbackWhenAllClustersCovered) {
  EmbeddingMatrix labels(3, 2, {1, 0, 0.9, 0.1, 0, 1}, {"a", "b", "c"});
  ClusterModel cm;
  cm.dim = 2;
  cm.centers = {0.95, 0.05, 0, 1};
  cm.assignment = {0, 0, 1};
  cm.member_counts = {2, 1};
  cm.labels = labels.names;
  BatchContext ctx;
  ctx.label_embeddings = &labels;
  ctx.label_cluster = label_clusters(labels, cm);
  ctx.labels = {{0, 2}};
  ctx.clusters = {cluster_set_of(ctx.labels[0], ctx.label_cluster)};
  Rng rng(2);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sample_negative(0, ctx, rng), 1u);
}

TEST(Negatives, UniformOverEligibleLabels) {
  // Six labels in three clusters; the sample owns cluster 0, so labels 2..5 are eligible.
  EmbeddingMatrix labels(6, 1, {1, 1, 2, 2, 3, 3}, {"a", "b", "c", "d", "e", "f"});
  ClusterModel cm;
  cm.dim = 1;
  cm.centers = {1, 2, 3};
  cm.assignment = {0, 0, 1, 1, 2, 2};
  cm.member_counts = {2, 2, 2};
  cm.labels = labels.names;
  BatchContext ctx;
  ctx.label_embeddings = &labels;
  ctx.label_cluster = label_clusters(labels, cm);
  ctx.labels = {{0}};
  ctx.clusters = {cluster_set_of(ctx.labels[0], ctx.label_cluster)};
  Rng rng(42);
  std::map<std::size_t, int> counts;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ++counts[sample_negative(0, ctx, rng)];
  EXPECT_EQ(counts.count(0), 0u);
  EXPECT_EQ(counts.count(1), 0u);
  const double p = 0.25, sigma = std::sqrt(draws * p * (1 - p));
  for (std::size_t l = 2; l < 6; ++l) EXPECT_NEAR(counts[l], draws * p, 3 * sigma) << "label " << l;
}

TEST(LabelClusters, UnknownLabelIsValidationError) {
  Fixture fx;
  EmbeddingMatrix other(1, 4, {1, 0, 0, 0}, {"mystery"});
  EXPECT_THROW(label_clusters(other, fx.clusters), ValidationError);
}

TEST(ObjectiveConfig, JsonRoundTrip) {
  ObjectiveConfig c;
  c.lambda = 2.5;
  c.reg_mode = RegMode::positive;
  c.target_mode = TargetMode::centroid;
  const ObjectiveConfig back = objective_config_from_json(nlohmann::json::parse(objective_config_to_json(c).dump()));
  EXPECT_EQ(back.lambda, 2.5);
  EXPECT_EQ(back.reg_mode, RegMode::positive);
  EXPECT_EQ(back.target_mode, TargetMode::centroid);
  EXPECT_THROW(objective_config_from_json(nlohmann::json::parse(R"({"lamda": 1})")), ValidationError);
}

}  // namespace
}  // namespace emoalign
