// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "emoalign/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace emoalign {

namespace fs = std::filesystem;
using json = nlohmann::json;

EmbeddingMatrix::EmbeddingMatrix(std::size_t r, std::size_t c, std::vector<double> values,
                                 std::vector<std::string> row_names)
    : rows(r), cols(c), data(std::move(values)), names(std::move(row_names)) {
  if (data.size() != rows * cols) {
    throw DimensionError("embedding matrix data length " + std::to_string(data.size()) + " does not match " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
}

void EmbeddingMatrix::validate() const {
  if (data.size() != rows * cols) throw ValidationError("embedding matrix data length does not match its shape");
  if (names.size() != rows) {
    throw ValidationError("embedding matrix has " + std::to_string(rows) + " rows but " +
                          std::to_string(names.size()) + " names");
  }
  std::unordered_set<std::string> seen;
  for (const auto& n : names) {
    if (!seen.insert(n).second) throw ValidationError("duplicate row name '" + n + "'");
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw ValidationError("non-finite value in row " + std::to_string(i / std::max<std::size_t>(cols, 1)));
    }
  }
}

Tensor EmbeddingMatrix::to_tensor() const { return Tensor::matrix(rows, cols, data); }

std::optional<std::size_t> LabelSpace::index_of(const std::string& label) const {
  const auto& n = embedding.names;
  auto it = std::find(n.begin(), n.end(), label);
  if (it == n.end()) return std::nullopt;
  return static_cast<std::size_t>(it - n.begin());
}

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ValidationError("split must be \"train\" or \"test\", got \"" + s + "\"");
}

void Dataset::validate() const {
  if (label_space.size() == 0) throw ValidationError("dataset '" + name + "' has an empty label space");
  std::unordered_set<std::string> ids;
  const std::size_t d_in = feature_dim();
  for (const auto& s : samples) {
    if (!ids.insert(s.id).second) throw ValidationError("duplicate sample id '" + s.id + "' in '" + name + "'");
    if (s.features.rank() != 2 || s.features.cols() != d_in) {
      throw ValidationError("sample '" + s.id + "' has features " + shape_to_string(s.features.shape()) +
                            ", expected T x " + std::to_string(d_in));
    }
    if (!s.features.all_finite()) throw ValidationError("sample '" + s.id + "' has non-finite features");
    if (s.labels.empty()) throw ValidationError("sample '" + s.id + "' has no labels");
    for (std::size_t l : s.labels) {
      if (l >= label_space.size()) {
        throw ValidationError("sample '" + s.id + "' references label index " + std::to_string(l) + " of " +
                              std::to_string(label_space.size()));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// EMBMAT01

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace

fs::path names_sidecar_path(const fs::path& path) { return fs::path(path.string() + ".json"); }

void write_embedding_matrix(const EmbeddingMatrix& m, const fs::path& path) {
  m.validate();
  if (m.rows > UINT32_MAX || m.cols > UINT32_MAX) throw ValidationError("matrix too large for EMBMAT01");
  std::string bytes(kEmbMagic, 8);
  bytes.reserve(kEmbHeaderBytes + 4 * m.data.size());
  put_u32(bytes, static_cast<std::uint32_t>(m.rows));
  put_u32(bytes, static_cast<std::uint32_t>(m.cols));
  for (double v : m.data) put_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  write_file(path, bytes);
  write_file(names_sidecar_path(path), json{{"names", m.names}}.dump() + "\n");
}

EmbeddingMatrix read_embedding_matrix(const fs::path& path) {
  const std::string bytes = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 8 || std::memcmp(p, kEmbMagic, 8) != 0) {
    throw FormatError("'" + path.string() + "': bad magic, expected \"EMBMAT01\"");
  }
  if (bytes.size() < kEmbHeaderBytes) throw FormatError("'" + path.string() + "': truncated header");
  const std::size_t rows = get_u32(p + 8);
  const std::size_t cols = get_u32(p + 12);
  const std::size_t need = kEmbHeaderBytes + 4 * rows * cols;
  if (bytes.size() < need) {
    throw FormatError("'" + path.string() + "': truncated payload, " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " needs " + std::to_string(need - kEmbHeaderBytes) + " bytes, found " +
                      std::to_string(bytes.size() - kEmbHeaderBytes));
  }
  if (bytes.size() > need) throw FormatError("'" + path.string() + "': trailing bytes after payload");
  std::vector<double> data(rows * cols);
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = static_cast<double>(std::bit_cast<float>(get_u32(p + kEmbHeaderBytes + 4 * i)));
  }
  std::vector<std::string> names;
  const fs::path sidecar = names_sidecar_path(path);
  if (fs::exists(sidecar)) {
    json j;
    try {
      j = json::parse(read_file(sidecar));
      names = j.at("names").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw FormatError("'" + sidecar.string() + "': " + e.what());
    }
  } else {
    for (std::size_t i = 0; i < rows; ++i) names.push_back(std::to_string(i));
  }
  EmbeddingMatrix m(rows, cols, std::move(data), std::move(names));
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Datasets

Dataset load_dataset(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest '" + manifest_path.string() + "'");
  const fs::path base = manifest_path.parent_path();
  Dataset ds;
  bool have_header = false;
  std::string line;
  std::size_t lineno = 0;
  std::size_t d_in = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(manifest_path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    try {
      if (j.contains("label_space")) {
        if (have_header) throw FormatError(manifest_path.string() + ": more than one header line");
        have_header = true;
        ds.name = j.at("name").get<std::string>();
        ds.split = split_from_string(j.value("split", std::string("train")));
        const fs::path lp = base / j.at("label_space").get<std::string>();
        ds.label_space.embedding = read_embedding_matrix(lp);
        ds.label_space.source = ds.name;
        if (ds.label_space.size() == 0) throw ValidationError("label space '" + lp.string() + "' is empty");
        continue;
      }
      if (!have_header) {
        throw FormatError(manifest_path.string() + ":" + std::to_string(lineno) +
                          ": sample line before the label_space header");
      }
      Sample s;
      s.id = j.at("id").get<std::string>();
      const fs::path fp = base / j.at("features").get<std::string>();
      if (!fs::exists(fp)) throw IoError("missing feature file '" + fp.string() + "' for sample '" + s.id + "'");
      EmbeddingMatrix feats = read_embedding_matrix(fp);
      if (ds.samples.empty()) d_in = feats.cols;
      if (feats.cols != d_in) {
        throw ValidationError("sample '" + s.id + "' has feature dim " + std::to_string(feats.cols) + ", expected " +
                              std::to_string(d_in));
      }
      s.features = Tensor::matrix(feats.rows, feats.cols, std::move(feats.data));
      std::set<std::size_t> idx;
      for (const auto& label : j.at("labels").get<std::vector<std::string>>()) {
        auto li = ds.label_space.index_of(label);
        if (!li) throw ValidationError("sample '" + s.id + "' lists unknown label \"" + label + "\"");
        idx.insert(*li);
      }
      s.labels.assign(idx.begin(), idx.end());
      ds.samples.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw FormatError(manifest_path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_header) throw FormatError(manifest_path.string() + ": missing label_space header line");
  if (ds.samples.empty()) {
    std::cerr << "warning: dataset '" << ds.name << "' from " << manifest_path.string() << " has no samples\n";
  }
  ds.validate();
  return ds;
}

fs::path write_dataset(const Dataset& ds, const fs::path& dir, const fs::path& label_space_path) {
  ds.validate();
  fs::create_directories(dir);
  write_embedding_matrix(ds.label_space.embedding, label_space_path);
  const std::string stem = ds.name + "_" + to_string(ds.split);
  const fs::path manifest = dir / (stem + ".jsonl");
  std::string out;
  const fs::path rel_labels = fs::absolute(label_space_path).lexically_relative(fs::absolute(dir));
  out += json{{"label_space", rel_labels.generic_string()}, {"name", ds.name}, {"split", to_string(ds.split)}}.dump();
  out += "\n";
  for (const auto& s : ds.samples) {
    const fs::path rel = fs::path(stem) / (s.id + ".emb");
    std::vector<std::string> seg_names;
    for (std::size_t t = 0; t < s.features.rows(); ++t) seg_names.push_back("seg" + std::to_string(t));
    std::vector<double> values(s.features.data().begin(), s.features.data().end());
    write_embedding_matrix(EmbeddingMatrix(s.features.rows(), s.features.cols(), std::move(values), std::move(seg_names)),
                           dir / rel);
    std::vector<std::string> labels;
    for (std::size_t l : s.labels) labels.push_back(ds.label_space.name(l));
    out += json{{"id", s.id}, {"features", rel.generic_string()}, {"labels", labels}}.dump();
    out += "\n";
  }
  write_file(manifest, out);
  return manifest;
}

// ---------------------------------------------------------------------------
// Ratings and label derivation

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

}  // namespace

RatingsTable read_ratings_csv(const fs::path& path, double scale_min, double scale_max) {
  if (!(scale_min < scale_max)) throw ArgumentError("rating scale bounds must satisfy min < max");
  std::ifstream in(path);
  if (!in) throw IoError("cannot open ratings file '" + path.string() + "'");
  RatingsTable t;
  t.scale_min = scale_min;
  t.scale_max = scale_max;
  std::string line;
  if (!std::getline(in, line)) throw FormatError("'" + path.string() + "': empty ratings file");
  auto header = split_csv_line(line);
  if (header.size() < 2) throw FormatError("'" + path.string() + "': header needs an id column and at least one label");
  t.label_names.assign(header.begin() + 1, header.end());
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                        " fields, got " + std::to_string(fields.size()));
    }
    t.sample_ids.push_back(fields[0]);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      double v = 0.0;
      try {
        std::size_t used = 0;
        v = std::stod(fields[i], &used);
        if (used != fields[i].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad rating \"" + fields[i] + "\"");
      }
      if (!(v >= scale_min && v <= scale_max)) {
        throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": rating " + fields[i] +
                              " outside scale bounds");
      }
      t.ratings.push_back(v);
    }
  }
  return t;
}

LabelSets derive_labels_mean_threshold(const RatingsTable& r, double threshold) {
  if (!(threshold >= r.scale_min && threshold <= r.scale_max)) {
    throw ArgumentError("threshold " + std::to_string(threshold) + " is outside the rating scale");
  }
  if (r.num_labels() == 0) throw ValidationError("ratings table has no labels");
  LabelSets out;
  for (std::size_t s = 0; s < r.num_samples(); ++s) {
    auto row = r.row(s);
    if (row.empty()) throw ValidationError("empty ratings row for sample '" + r.sample_ids[s] + "'");
    std::vector<std::size_t> picked;
    for (std::size_t l = 0; l < row.size(); ++l)
      if (row[l] > threshold) picked.push_back(l);
    if (picked.empty()) {
      // max_element returns the first maximum, so ties resolve to the lowest index.
      picked.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
    out.push_back(std::move(picked));
  }
  return out;
}

LabelSets derive_labels_top_k(const RatingsTable& r, std::size_t k) {
  if (k == 0) throw ArgumentError("top-k label derivation needs k >= 1");
  if (k > r.num_labels()) {
    throw ArgumentError("k = " + std::to_string(k) + " exceeds the label count " + std::to_string(r.num_labels()));
  }
  LabelSets out;
  for (std::size_t s = 0; s < r.num_samples(); ++s) {
    auto row = r.row(s);
    std::vector<std::size_t> order(row.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    order.resize(k);
    std::sort(order.begin(), order.end());
    out.push_back(std::move(order));
  }
  return out;
}

}  // namespace emoalign
