#pragma once

// Catalog, embedding matrices, bundle file formats and the seeded synthetic
// catalog generator.
//
// Embedding file layout (little-endian):
//   "CFR1" | u32 version=1 | u32 dim | u64 count | count*dim f32, row-major
// Metadata: JSON Lines, one {"id","text","attributes","image_uri"} per item.
// Splits:   JSON {"train": [int], "test": [int]}.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cfr/error.hpp"

namespace cfr {

struct Item {
  ItemId id = 0;
  std::string text;
  std::vector<std::string> attributes;
  std::optional<std::string> image_uri;

  bool operator==(const Item&) const = default;
};

/// Dense row-major matrix of f32 vectors.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t dim, std::vector<float> data, bool normalized = false);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  bool normalized() const { return normalized_; }

  std::span<const float> row(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  std::span<float> mutable_row(std::size_t i) {
    return {data_.data() + i * dim_, dim_};
  }
  const std::vector<float>& data() const { return data_; }

  /// Throws FormatError naming the first row holding a NaN or infinity.
  void check_finite() const;

  /// Scales every row to unit L2 norm. Rows already within 1e-6 of unit
  /// norm are left untouched so normalization is idempotent bit-for-bit.
  /// Throws InvalidArgument on a zero row.
  void normalize_rows();

  bool operator==(const EmbeddingMatrix&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<float> data_;
  bool normalized_ = false;
};

/// Token -> vector table used to encode text queries.
struct Vocab {
  std::vector<std::string> tokens;
  EmbeddingMatrix vectors;

  std::optional<std::size_t> find(std::string_view token) const;
  void rebuild_index();

  bool operator==(const Vocab& o) const {
    return tokens == o.tokens && vectors == o.vectors;
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

struct Splits {
  std::vector<ItemId> train;
  std::vector<ItemId> test;

  bool operator==(const Splits&) const = default;
};

/// Immutable after construction.
struct Dataset {
  std::vector<Item> items;
  EmbeddingMatrix retrieval_images;   // what the retrieval model sees
  EmbeddingMatrix preference_images;  // what the feedback oracle sees
  Vocab vocab;
  Splits splits;
  // Optional precomputed query vectors, row i is the query for target i.
  std::optional<EmbeddingMatrix> query_vectors;

  std::size_t size() const { return items.size(); }
  /// Throws InvalidArgument if the parts disagree on n or splits overlap.
  void validate() const;
  /// Query vector for a target: precomputed row if present, otherwise the
  /// encoded item text.
  std::vector<float> query_for(ItemId target) const;

  bool operator==(const Dataset&) const = default;
};

struct SynthConfig {
  std::size_t n_items = 2000;
  std::size_t n_attributes = 32;
  std::size_t attrs_per_item = 5;
  // Leading attributes named in the item text (and hence in its query).
  std::size_t text_attrs = 2;
  std::size_t dim = 64;
  // Expected L2 norm of the perturbation added to each ground-truth vector.
  double noise_sigma = 0.35;
  // Rank of the subspace holding retrieval-space noise; 0 means isotropic.
  std::size_t nuisance_rank = 4;
  std::size_t n_test_queries = 200;
  std::uint64_t seed = 7;

  void validate() const;
};

/// Pure function of cfg: identical configs produce identical datasets.
Dataset generate_synthetic(const SynthConfig& cfg);

/// Lowercases and splits on whitespace.
std::vector<std::string> tokenize(std::string_view text);

/// Normalized mean of the vocab vectors of recognized tokens. Throws
/// InvalidArgument("unencodable query") when no token is recognized.
std::vector<float> encode_query(std::string_view text, const Vocab& vocab);

// ---- file formats ---------------------------------------------------------

void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m);
/// Raw read; does not normalize.
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);

void write_metadata(const std::filesystem::path& path, std::span<const Item> items);
std::vector<Item> read_metadata(const std::filesystem::path& path);

void write_splits(const std::filesystem::path& path, const Splits& splits);
Splits read_splits(const std::filesystem::path& path);

void write_tokens(const std::filesystem::path& path, std::span<const std::string> tokens);
std::vector<std::string> read_tokens(const std::filesystem::path& path);

/// File names inside a dataset bundle directory.
struct BundlePaths {
  std::filesystem::path retrieval;
  std::filesystem::path preference;
  std::filesystem::path metadata;
  std::filesystem::path vocab;
  std::filesystem::path vocab_tokens;
  std::filesystem::path splits;
  std::filesystem::path queries;  // optional

  static BundlePaths in(const std::filesystem::path& dir);
};

void write_bundle(const std::filesystem::path& dir, const Dataset& ds);

/// Loads a bundle, L2-normalizes every embedding row and validates it.
Dataset ingest(const BundlePaths& paths);
inline Dataset ingest(const std::filesystem::path& dir) {
  return ingest(BundlePaths::in(dir));
}

/// FNV-1a over every byte a bundle would contain.
std::uint64_t checksum(const Dataset& ds);

}  // namespace cfr
