// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstring>

#include "emoalign/projector.hpp"
#include "test_support.hpp"

namespace emoalign {
namespace {

using testing::random_tensor;
using testing::read_bytes;
using testing::TempDir;
using testing::write_bytes;

ProjectorConfig tiny(std::size_t d_model = 8) {
  ProjectorConfig c;
  c.d_in = 12;
  c.d_model = d_model;
  c.layers = 2;
  c.heads = 2;
  c.ffn_mult = 2;
  c.out_dim = 5;
  return c;
}

TEST(ProjectorConfig, Validation) {
  ProjectorConfig c = tiny();
  c.heads = 3;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = tiny();
  c.layers = 0;
  EXPECT_THROW(c.validate(), ArgumentError);
}

TEST(ProjectorConfig, JsonRejectsUnknownKeys) {
  EXPECT_THROW(projector_config_from_json(nlohmann::json::parse(R"({"d_modle": 8})")), ValidationError);
  const ProjectorConfig c = projector_config_from_json(nlohmann::json::parse(R"({"d_model": 16, "heads": 2})"));
  EXPECT_EQ(c.d_model, 16u);
  EXPECT_EQ(c.d_in, 3072u);
  EXPECT_EQ(c.out_dim, 384u);
}

TEST(Init, SameSeedSameParams) {
  const ProjectorParams a = init_projector(tiny(), 7);
  const ProjectorParams b = init_projector(tiny(), 7);
  const auto na = a.named(), nb = b.named();
  ASSERT_EQ(na.size(), nb.size());
  for (std::size_t i = 0; i < na.size(); ++i) {
    const auto x = na[i].second->data(), y = nb[i].second->data();
    EXPECT_EQ(std::memcmp(x.data(), y.data(), x.size_bytes()), 0) << na[i].first;
  }
}

TEST(Init, BiasesZeroGainsOne) {
  const ProjectorParams p = init_projector(tiny(), 3);
  for (const auto& [name, t] : p.named()) {
    const bool is_bias = name.ends_with(".bias");
    const bool is_gain = name.ends_with(".gain");
    for (double v : t->data()) {
      if (is_bias) EXPECT_EQ(v, 0.0) << name;
      if (is_gain) EXPECT_EQ(v, 1.0) << name;
    }
  }
}

TEST(Init, WeightMeansWithinThreeSigma) {
  ProjectorConfig c = tiny(64);
  c.heads = 4;
  const ProjectorParams p = init_projector(c, 11);
  for (const auto& [name, t] : p.named()) {
    if (!name.ends_with(".weight")) continue;
    const double fan_in = static_cast<double>(t->rows());
    const double a = 1.0 / std::sqrt(fan_in);
    double mean = 0.0, lo = 0.0, hi = 0.0;
    for (double v : t->data()) {
      mean += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    mean /= static_cast<double>(t->numel());
    // Mean of n draws from U(-a, a) has standard deviation a / sqrt(3n).
    const double sigma = a / std::sqrt(3.0 * static_cast<double>(t->numel()));
    EXPECT_LT(std::abs(mean), 3.0 * sigma) << name;
    EXPECT_GE(lo, -a) << name;
    EXPECT_LE(hi, a) << name;
  }
}

TEST(Init, CanonicalNamesAndCount) {
  const ProjectorParams p = init_projector(tiny(), 0);
  const auto named = p.named();
  EXPECT_EQ(named.front().first, "input.weight");
  EXPECT_EQ(named[2].first, "blocks.0.attn.q.weight");
  EXPECT_EQ(named.back().first, "output.bias");
  std::size_t total = 0;
  for (const auto& [_, t] : named) total += t->numel();
  EXPECT_EQ(total, p.parameter_count());
  // d_in*d + d, per block 4(d*d + d) + 2*2d + (d*f + f) + (f*d + d), then d*m + m.
  const std::size_t d = 8, f = 16, per_block = 4 * (d * d + d) + 4 * d + (d * f + f) + (f * d + d);
  EXPECT_EQ(total, 12 * d + d + 2 * per_block + d * 5 + 5);
}

TEST(Forward, OutputShapeForAnyLength) {
  const ProjectorParams p = init_projector(tiny(), 1);
  Rng rng(2);
  for (std::size_t T : {1u, 3u, 17u}) {
    EXPECT_EQ(project(p, random_tensor({T, 12}, rng)).size(), 5u);
  }
}

TEST(Forward, ZeroWeightsGiveZeroOutput) {
  ProjectorParams p = init_projector(tiny(), 1);
  for (const auto& [name, t] : p.named()) {
    const double v = name.ends_with(".gain") ? 1.0 : 0.0;
    for (double& x : t->data()) x = v;
  }
  Rng rng(3);
  for (double v : project(p, random_tensor({3, 12}, rng))) EXPECT_EQ(v, 0.0);
}

TEST(Forward, SegmentOrderDoesNotMatter) {
  const ProjectorParams p = init_projector(tiny(), 4);
  Rng rng(5);
  const Tensor x = random_tensor({4, 12}, rng);
  Tensor perm(Shape{4, 12});
  const std::size_t order[] = {2, 0, 3, 1};
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 12; ++c) perm.at(r, c) = x.at(order[r], c);
  const auto a = project(p, x), b = project(p, perm);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Forward, RejectsWrongInputWidth) {
  const ProjectorParams p = init_projector(tiny(), 4);
  EXPECT_THROW(project(p, Tensor(Shape{2, 11}, 1.0)), DimensionError);
}

TEST(Forward, RejectsNonFiniteInput) {
  const ProjectorParams p = init_projector(tiny(), 4);
  Tensor x(Shape{2, 12}, 1.0);
  x[3] = std::nan("");
  EXPECT_THROW(project(p, x), NumericError);
}

TEST(Forward, GradientsMatchFiniteDifferences) {
  ProjectorParams p = init_projector(tiny(), 9);
  Rng rng(10);
  const Tensor x = random_tensor({3, 12}, rng);
  const Tensor w = random_tensor({5}, rng);
  const auto tensors = p.tensors();
  const double err = grad_check(
      [&](Tape& t) {
        const ProjectorVars vars = bind_parameters(t, p);
        return sum(t, mul(t, forward(t, vars, p.config, t.constant(x)), t.constant(w)));
      },
      tensors, 1e-4);
  EXPECT_LT(err, 1e-4);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir;
  const ProjectorParams p = init_projector(tiny(), 12);
  nlohmann::ordered_json meta = {{"note", "fixture"}};
  save_checkpoint(p, meta, dir / "a.ckpt");
  const Checkpoint ck = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(ck.params.config, p.config);
  EXPECT_EQ(ck.metadata, meta);
  const auto na = p.named(), nb = ck.params.named();
  for (std::size_t i = 0; i < na.size(); ++i) {
    const auto x = na[i].second->data(), y = nb[i].second->data();
    EXPECT_EQ(std::memcmp(x.data(), y.data(), x.size_bytes()), 0) << na[i].first;
  }
  save_checkpoint(ck.params, ck.metadata, dir / "b.ckpt");
  EXPECT_EQ(read_bytes(dir / "a.ckpt"), read_bytes(dir / "b.ckpt"));
}

TEST(Checkpoint, ForwardIdenticalAfterReload) {
  TempDir dir;
  const ProjectorParams p = init_projector(tiny(), 13);
  Rng rng(14);
  const Tensor x = random_tensor({3, 12}, rng);
  const auto before = project(p, x);
  save_checkpoint(p, {}, dir / "m.ckpt");
  const auto after = project(load_checkpoint(dir / "m.ckpt").params, x);
  ASSERT_EQ(before.size(), after.size());
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(std::memcmp(&before[i], &after[i], sizeof(double)), 0);
}

// Rewrites the JSON header of a checkpoint file.
void edit_header(const std::filesystem::path& path, const std::function<void(nlohmann::ordered_json&)>& edit) {
  auto b = read_bytes(path);
  const std::size_t hlen = b[8] | (b[9] << 8) | (b[10] << 16) | (static_cast<std::size_t>(b[11]) << 24);
  auto header = nlohmann::ordered_json::parse(std::string(b.begin() + 12, b.begin() + 12 + hlen));
  edit(header);
  const std::string h = header.dump();
  std::vector<unsigned char> out(b.begin(), b.begin() + 8);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((h.size() >> (8 * i)) & 0xFF));
  out.insert(out.end(), h.begin(), h.end());
  out.insert(out.end(), b.begin() + 12 + hlen, b.end());
  write_bytes(path, out);
}

TEST(Checkpoint, ConfigBlobMismatchIsFormatError) {
  TempDir dir;
  ProjectorConfig c = tiny(128);
  c.heads = 4;
  save_checkpoint(init_projector(c, 1), {}, dir / "m.ckpt");
  edit_header(dir / "m.ckpt", [](nlohmann::ordered_json& h) { h["config"]["d_model"] = 256; });
  EXPECT_THROW(load_checkpoint(dir / "m.ckpt"), FormatError);
}

TEST(Checkpoint, ConsistentHeaderWithShortBlobIsFormatError) {
  TempDir dir;
  ProjectorConfig small = tiny(128);
  small.heads = 4;
  save_checkpoint(init_projector(small, 1), {}, dir / "m.ckpt");
  ProjectorConfig big = small;
  big.d_model = 256;
  const ProjectorParams bigp = init_projector(big, 1);
  // Header fully describes the 256-wide model; the blob is still the 128-wide one.
  edit_header(dir / "m.ckpt", [&](nlohmann::ordered_json& h) {
    h["config"] = projector_config_to_json(big);
    auto table = nlohmann::ordered_json::array();
    std::size_t off = 0;
    for (const auto& [name, t] : bigp.named()) {
      table.push_back({{"name", name}, {"shape", t->shape()}, {"offset", off}});
      off += 4 * t->numel();
    }
    h["tensors"] = table;
  });
  try {
    load_checkpoint(dir / "m.ckpt");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, BadMagicAndTruncation) {
  TempDir dir;
  save_checkpoint(init_projector(tiny(), 1), {}, dir / "m.ckpt");
  auto b = read_bytes(dir / "m.ckpt");
  auto bad = b;
  bad[0] = 'X';
  write_bytes(dir / "bad.ckpt", bad);
  EXPECT_THROW(load_checkpoint(dir / "bad.ckpt"), FormatError);
  b.resize(b.size() - 3);
  write_bytes(dir / "short.ckpt", b);
  EXPECT_THROW(load_checkpoint(dir / "short.ckpt"), FormatError);
}

}  // namespace
}  // namespace emoalign
