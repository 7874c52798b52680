// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cstring>
#include <fstream>

#include "emoalign/data_io.hpp"
#include "test_support.hpp"

namespace emoalign {
namespace {

using testing::read_bytes;
using testing::TempDir;
using testing::write_bytes;

EmbeddingMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> data(rows * cols);
  // Values representable in float32 so the round trip is exact.
  for (double& v : data) v = static_cast<float>(rng.normal());
  std::vector<std::string> names;
  for (std::size_t i = 0; i < rows; ++i) names.push_back("label_" + std::to_string(i));
  return EmbeddingMatrix(rows, cols, std::move(data), std::move(names));
}

void write_label_file(const std::filesystem::path& p, const std::vector<std::string>& names, std::size_t dim) {
  std::vector<double> data(names.size() * dim, 0.0);
  for (std::size_t i = 0; i < names.size(); ++i) data[i * dim + (i % dim)] = 1.0;
  write_embedding_matrix(EmbeddingMatrix(names.size(), dim, data, names), p);
}

std::uint32_t le32(const std::vector<unsigned char>& b, std::size_t off) {
  return static_cast<std::uint32_t>(b[off]) | static_cast<std::uint32_t>(b[off + 1]) << 8 |
         static_cast<std::uint32_t>(b[off + 2]) << 16 | static_cast<std::uint32_t>(b[off + 3]) << 24;
}

TEST(Embmat, SmallestFileIsTwentyBytes) {
  TempDir dir;
  const auto p = dir / "one.emb";
  write_embedding_matrix(EmbeddingMatrix(1, 1, {0.0}, {"x"}), p);
  const auto b = read_bytes(p);
  ASSERT_EQ(b.size(), 20u);
  EXPECT_EQ(std::memcmp(b.data(), "EMBMAT01", 8), 0);
  EXPECT_EQ(le32(b, 8), 1u);
  EXPECT_EQ(le32(b, 12), 1u);
  for (std::size_t i = 16; i < 20; ++i) EXPECT_EQ(b[i], 0u);
}

TEST(Embmat, PayloadIsLittleEndianFloat32) {
  TempDir dir;
  const auto p = dir / "m.emb";
  write_embedding_matrix(EmbeddingMatrix(1, 2, {1.5, -2.0}, {"a"}), p);
  const auto b = read_bytes(p);
  EXPECT_EQ(le32(b, 16), std::bit_cast<std::uint32_t>(1.5f));
  EXPECT_EQ(le32(b, 20), std::bit_cast<std::uint32_t>(-2.0f));
}

TEST(Embmat, RoundTripIsExact) {
  TempDir dir;
  const auto p = dir / "m.emb";
  const EmbeddingMatrix m = random_matrix(5, 384, 1);
  write_embedding_matrix(m, p);
  const EmbeddingMatrix r = read_embedding_matrix(p);
  EXPECT_EQ(r.rows, 5u);
  EXPECT_EQ(r.cols, 384u);
  EXPECT_EQ(r.names, m.names);
  EXPECT_EQ(r.data, m.data);
  write_embedding_matrix(r, dir / "again.emb");
  EXPECT_EQ(read_bytes(p), read_bytes(dir / "again.emb"));
}

TEST(Embmat, FileSizeFollowsShape) {
  TempDir dir;
  for (auto [r, c] : {std::pair<std::size_t, std::size_t>{1, 1}, {3, 7}, {12, 5}, {2, 384}}) {
    const auto p = dir / "m.emb";
    write_embedding_matrix(random_matrix(r, c, r * 31 + c), p);
    EXPECT_EQ(std::filesystem::file_size(p), 16 + 4 * r * c);
  }
}

TEST(Embmat, BadMagicNamesExpectedMagic) {
  TempDir dir;
  const auto p = dir / "bad.emb";
  write_embedding_matrix(random_matrix(2, 3, 2), p);
  auto b = read_bytes(p);
  std::memcpy(b.data(), "XXXXXXXX", 8);
  write_bytes(p, b);
  try {
    read_embedding_matrix(p);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("EMBMAT01"), std::string::npos);
  }
}

TEST(Embmat, TruncatedPayloadIsRejected) {
  TempDir dir;
  const auto p = dir / "short.emb";
  write_embedding_matrix(random_matrix(2, 3, 3), p);
  auto b = read_bytes(p);
  b.resize(16 + 20);
  write_bytes(p, b);
  try {
    read_embedding_matrix(p);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
}

TEST(Embmat, TrailingBytesAreRejected) {
  TempDir dir;
  const auto p = dir / "long.emb";
  write_embedding_matrix(random_matrix(2, 3, 4), p);
  auto b = read_bytes(p);
  b.push_back(0);
  write_bytes(p, b);
  EXPECT_THROW(read_embedding_matrix(p), FormatError);
}

TEST(Embmat, MissingSidecarNamesRowsByIndex) {
  TempDir dir;
  const auto p = dir / "m.emb";
  write_embedding_matrix(random_matrix(3, 2, 5), p);
  std::filesystem::remove(names_sidecar_path(p));
  const EmbeddingMatrix r = read_embedding_matrix(p);
  EXPECT_EQ(r.names, (std::vector<std::string>{"0", "1", "2"}));
}

TEST(Embmat, DuplicateNamesFailValidation) {
  EmbeddingMatrix m(2, 1, {1.0, 2.0}, {"a", "a"});
  EXPECT_THROW(m.validate(), ValidationError);
}

TEST(Manifest, EmptyManifestGivesEmptyDataset) {
  TempDir dir;
  write_label_file(dir / "labels.emb", {"happy", "sad"}, 4);
  std::ofstream(dir / "m.jsonl") << R"({"label_space":"labels.emb","name":"empty","split":"test"})" << "\n";
  const Dataset ds = load_dataset(dir / "m.jsonl");
  EXPECT_TRUE(ds.samples.empty());
  EXPECT_EQ(ds.label_space.size(), 2u);
  EXPECT_EQ(ds.split, Split::test);
}

TEST(Manifest, TwoSamplesWithThreeSegments) {
  TempDir dir;
  write_label_file(dir / "labels.emb", {"happy", "sad", "calm"}, 4);
  std::ofstream m(dir / "m.jsonl");
  m << R"({"label_space":"labels.emb","name":"tiny","split":"train"})" << "\n";
  for (int i = 0; i < 2; ++i) {
    EmbeddingMatrix f = random_matrix(3, 3072, 10 + i);
    write_embedding_matrix(f, dir / ("s" + std::to_string(i) + ".emb"));
    m << R"({"id":"s)" << i << R"(","features":"s)" << i << R"(.emb","labels":["calm","happy"]})" << "\n";
  }
  m.close();
  const Dataset ds = load_dataset(dir / "m.jsonl");
  ASSERT_EQ(ds.samples.size(), 2u);
  for (const auto& s : ds.samples) {
    EXPECT_EQ(s.features.rows(), 3u);
    EXPECT_EQ(s.features.cols(), 3072u);
    EXPECT_EQ(s.labels, (std::vector<std::size_t>{0, 2}));
  }
  EXPECT_EQ(ds.feature_dim(), 3072u);
}

TEST(Manifest, UnknownLabelIsNamed) {
  TempDir dir;
  write_label_file(dir / "labels.emb", {"happy", "sad"}, 4);
  write_embedding_matrix(random_matrix(2, 4, 1), dir / "s.emb");
  std::ofstream(dir / "m.jsonl") << R"({"label_space":"labels.emb","name":"x","split":"train"})" << "\n"
                                 << R"({"id":"s","features":"s.emb","labels":["serene"]})" << "\n";
  try {
    load_dataset(dir / "m.jsonl");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("serene"), std::string::npos);
  }
}

TEST(Manifest, MissingFeatureFileIsIoError) {
  TempDir dir;
  write_label_file(dir / "labels.emb", {"happy"}, 4);
  std::ofstream(dir / "m.jsonl") << R"({"label_space":"labels.emb","name":"x","split":"train"})" << "\n"
                                 << R"({"id":"s","features":"nope.emb","labels":["happy"]})" << "\n";
  EXPECT_THROW(load_dataset(dir / "m.jsonl"), IoError);
}

TEST(Manifest, MissingHeaderIsFormatError) {
  TempDir dir;
  std::ofstream(dir / "m.jsonl") << "\n";
  EXPECT_THROW(load_dataset(dir / "m.jsonl"), FormatError);
}

TEST(Manifest, WriteThenLoadRoundTrips) {
  TempDir dir;
  Dataset ds;
  ds.name = "rt";
  ds.split = Split::test;
  ds.label_space.embedding = random_matrix(3, 4, 7);
  for (int i = 0; i < 3; ++i) {
    Sample s;
    s.id = "id" + std::to_string(i);
    s.features = read_embedding_matrix([&] {
      write_embedding_matrix(random_matrix(2, 5, 20 + i), dir / "tmp.emb");
      return dir / "tmp.emb";
    }()).to_tensor();
    s.labels = {static_cast<std::size_t>(i)};
    ds.samples.push_back(std::move(s));
  }
  const auto manifest = write_dataset(ds, dir / "out", dir / "out" / "labels.emb");
  const Dataset back = load_dataset(manifest);
  EXPECT_EQ(back.name, "rt");
  EXPECT_EQ(back.split, Split::test);
  ASSERT_EQ(back.samples.size(), 3u);
  EXPECT_EQ(back.label_space.embedding.data, ds.label_space.embedding.data);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.samples[i].id, ds.samples[i].id);
    EXPECT_EQ(back.samples[i].labels, ds.samples[i].labels);
    const auto a = back.samples[i].features.data();
    const auto b = ds.samples[i].features.data();
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }
}

RatingsTable table(std::vector<double> ratings, double lo = 1.0, double hi = 5.0) {
  RatingsTable t;
  t.sample_ids = {"s"};
  for (std::size_t i = 0; i < ratings.size(); ++i) t.label_names.push_back("l" + std::to_string(i));
  t.ratings = std::move(ratings);
  t.scale_min = lo;
  t.scale_max = hi;
  return t;
}

TEST(DeriveLabels, ThresholdStrictlyAbove) {
  EXPECT_EQ(derive_labels_mean_threshold(table({3.5, 2.0, 3.0}), 3.0)[0], (std::vector<std::size_t>{0}));
}

TEST(DeriveLabels, ThresholdFallsBackToArgmax) {
  EXPECT_EQ(derive_labels_mean_threshold(table({2.0, 2.5, 1.0}), 3.0)[0], (std::vector<std::size_t>{1}));
}

TEST(DeriveLabels, ThresholdAllPass) {
  EXPECT_EQ(derive_labels_mean_threshold(table({5, 5, 5}), 3.0)[0], (std::vector<std::size_t>{0, 1, 2}));
}

TEST(DeriveLabels, TopKSortOracle) {
  EXPECT_EQ(derive_labels_top_k(table({5, 1, 4, 4, 2}), 3)[0], (std::vector<std::size_t>{0, 2, 3}));
}

TEST(DeriveLabels, TopKAllTied) {
  EXPECT_EQ(derive_labels_top_k(table({1, 1, 1}), 3)[0], (std::vector<std::size_t>{0, 1, 2}));
}

TEST(DeriveLabels, TopKArgmax) {
  EXPECT_EQ(derive_labels_top_k(table({0, 9}, 0, 9), 1)[0], (std::vector<std::size_t>{1}));
}

TEST(DeriveLabels, TopKRangeChecked) {
  EXPECT_THROW(derive_labels_top_k(table({1, 2}), 0), ArgumentError);
  EXPECT_THROW(derive_labels_top_k(table({1, 2}), 3), ArgumentError);
}

TEST(DeriveLabels, TopKMatchesBruteForceOracle) {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> r(8);
    for (double& v : r) v = 1.0 + static_cast<double>(rng.index(5));
    const std::size_t k = 1 + rng.index(8);
    // Oracle: label i is chosen iff fewer than k labels beat it, counting
    // equal ratings at lower indices as beating it.
    std::vector<std::size_t> want;
    for (std::size_t i = 0; i < r.size(); ++i) {
      std::size_t ahead = 0;
      for (std::size_t j = 0; j < r.size(); ++j)
        if (r[j] > r[i] || (r[j] == r[i] && j < i)) ++ahead;
      if (ahead < k) want.push_back(i);
    }
    EXPECT_EQ(derive_labels_top_k(table(r), k)[0], want);
  }
}

TEST(Ratings, CsvWithQuotedHeader) {
  TempDir dir;
  std::ofstream(dir / "r.csv") << "id,\"calm, quiet\",angry\nsong1,4.5,1\nsong2,2,3.5\n";
  const RatingsTable t = read_ratings_csv(dir / "r.csv");
  EXPECT_EQ(t.label_names, (std::vector<std::string>{"calm, quiet", "angry"}));
  EXPECT_EQ(t.sample_ids, (std::vector<std::string>{"song1", "song2"}));
  EXPECT_EQ(t.ratings, (std::vector<double>{4.5, 1, 2, 3.5}));
}

TEST(Ratings, OutOfScaleRejected) {
  TempDir dir;
  std::ofstream(dir / "r.csv") << "id,a\nsong1,7\n";
  EXPECT_THROW(read_ratings_csv(dir / "r.csv"), ValidationError);
}

}  // namespace
}  // namespace emoalign
