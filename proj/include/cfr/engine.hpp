#pragma once

#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "cfr/embedding_store.hpp"
#include "cfr/encoder.hpp"
#include "cfr/ranker.hpp"

namespace cfr {

/// A dataset bound to an encoder stack, with the catalog pre-encoded.
/// Immutable once built; safe to share across threads.
class Engine {
 public:
  Engine(std::shared_ptr<const Dataset> dataset, EncoderStack stack);

  const Dataset& dataset() const { return *dataset_; }
  const EncoderStack& stack() const { return stack_; }
  const EncodedCatalog& catalog() const { return catalog_; }
  std::size_t size() const { return dataset_->size(); }

  /// Text-adapted query vector for free text. Throws "unencodable query".
  std::vector<float> encode_text(std::string_view text) const;
  /// Text-adapted query vector for the query whose target is `target`.
  std::vector<float> query_for(ItemId target) const;

  std::vector<double> scores(std::span<const float> query) const;
  std::vector<double> scores(std::span<const float> query, const Feedback& feedback,
                             const RankerParams& params) const;

 private:
  std::shared_ptr<const Dataset> dataset_;
  EncoderStack stack_;
  EncodedCatalog catalog_;
};

}  // namespace cfr
