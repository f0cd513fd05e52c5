#include "cfr/engine.hpp"

namespace cfr {

Engine::Engine(std::shared_ptr<const Dataset> dataset, EncoderStack stack)
    : dataset_(std::move(dataset)), stack_(std::move(stack)) {
  if (!dataset_) throw InvalidArgument("engine needs a dataset");
  if (stack_.dim() != dataset_->retrieval_images.dim()) {
    throw InvalidArgument("encoder stack dimension does not match dataset");
  }
  catalog_ = encode_catalog(dataset_->retrieval_images, stack_);
}

std::vector<float> Engine::encode_text(std::string_view text) const {
  return stack_.text.apply(encode_query(text, dataset_->vocab));
}

std::vector<float> Engine::query_for(ItemId target) const {
  return stack_.text.apply(dataset_->query_for(target));
}

std::vector<double> Engine::scores(std::span<const float> query) const {
  return score_no_feedback(query, catalog_);
}

std::vector<double> Engine::scores(std::span<const float> query, const Feedback& feedback,
                                   const RankerParams& params) const {
  return score_with_feedback(query, feedback, params, catalog_);
}

}  // namespace cfr
