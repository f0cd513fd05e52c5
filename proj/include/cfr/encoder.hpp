#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "cfr/embedding_store.hpp"

namespace cfr {

/// Linear d x d map over frozen base embeddings; the adapted embedding of a
/// row v is normalize(weight * v). Weights are row-major.
struct Adapter {
  std::size_t dim = 0;
  std::vector<double> weight;

  static Adapter identity(std::size_t dim);
  bool is_identity() const;

  /// normalize(weight * v). Identity adapters return v unchanged.
  std::vector<float> apply(std::span<const float> v) const;
  EmbeddingMatrix apply(const EmbeddingMatrix& m) const;

  bool operator==(const Adapter&) const = default;
};

/// Text adapter plus one or two image adapters. Without SepEnc the unimodal
/// (image-to-image) path uses the cross-modal adapter itself.
struct EncoderStack {
  Adapter text;
  Adapter image_crossmodal;
  std::optional<Adapter> image_unimodal_sep;

  static EncoderStack identity(std::size_t dim, bool sep_enc = false);

  bool sep_enc() const { return image_unimodal_sep.has_value(); }
  std::size_t dim() const { return text.dim; }
  const Adapter& image_unimodal() const {
    return image_unimodal_sep ? *image_unimodal_sep : image_crossmodal;
  }
  Adapter& image_unimodal() {
    return image_unimodal_sep ? *image_unimodal_sep : image_crossmodal;
  }

  bool operator==(const EncoderStack&) const = default;
};

/// Catalog rows pushed through an encoder stack. `unimodal` points at the
/// same matrix as `crossmodal` unless SepEnc is configured.
struct EncodedCatalog {
  std::shared_ptr<const EmbeddingMatrix> crossmodal;
  std::shared_ptr<const EmbeddingMatrix> unimodal;

  std::size_t size() const { return crossmodal->size(); }
  std::size_t dim() const { return crossmodal->dim(); }
};

EncodedCatalog encode_catalog(const EmbeddingMatrix& images, const EncoderStack& stack);

/// Adapter checkpoint: "CFA1" | u32 version | u32 dim | u8 sep_enc |
/// 2 or 3 d*d f32 matrices (text, crossmodal image, [unimodal image]).
void write_checkpoint(const std::filesystem::path& path, const EncoderStack& stack);
EncoderStack read_checkpoint(const std::filesystem::path& path);

}  // namespace cfr
