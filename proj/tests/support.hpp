#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "cfr/embedding_store.hpp"
#include "cfr/rng.hpp"

namespace cfr::testing {

inline std::vector<float> random_unit(Rng& rng, std::size_t dim) {
  std::vector<float> v(dim);
  double s = 0.0;
  for (auto& x : v) {
    x = static_cast<float>(rng.normal());
    s += static_cast<double>(x) * x;
  }
  for (auto& x : v) x = static_cast<float>(x / std::sqrt(s));
  return v;
}

inline EmbeddingMatrix random_matrix(Rng& rng, std::size_t n, std::size_t dim) {
  std::vector<float> data;
  data.reserve(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = random_unit(rng, dim);
    data.insert(data.end(), v.begin(), v.end());
  }
  EmbeddingMatrix m(dim, std::move(data));
  m.normalize_rows();
  return m;
}

inline SynthConfig small_config(std::uint64_t seed = 7) {
  SynthConfig cfg;
  cfg.n_items = 300;
  cfg.n_attributes = 16;
  cfg.attrs_per_item = 4;
  cfg.dim = 16;
  cfg.n_test_queries = 40;
  cfg.seed = seed;
  return cfg;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("cfr_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace cfr::testing
