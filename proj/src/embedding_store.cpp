#include "cfr/embedding_store.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "cfr/rng.hpp"

namespace cfr {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "embedding files are little-endian; big-endian hosts need byte swapping");

namespace {

constexpr char kMagic[4] = {'C', 'F', 'R', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
bool get(std::istream& in, T& value) {
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  return static_cast<std::size_t>(in.gcount()) == sizeof(T);
}

double norm_of(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw FormatError("cannot open: " + path.string());
  return in;
}

// Small fixed vocabulary so synthetic items read like catalog entries.
constexpr std::string_view kWords[] = {
    "black",   "white",   "red",     "navy",     "beige",    "green",   "pink",
    "grey",    "floral",  "striped", "plaid",    "denim",    "leather", "silk",
    "cotton",  "linen",   "wool",    "lace",     "sleeveless", "cropped", "maxi",
    "mini",    "midi",    "pleated", "ruffled",  "wrap",     "slim",    "oversized",
    "v-neck",  "hooded",  "belted",  "embroidered", "ribbed", "sequined", "velvet",
    "knit",    "chiffon", "satin",   "tiered",   "asymmetric"};

std::string attribute_token(std::size_t a) {
  if (a < std::size(kWords)) return std::string(kWords[a]);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "attr%03zu", a);
  return buf;
}

}  // namespace

// ---- EmbeddingMatrix ------------------------------------------------------

EmbeddingMatrix::EmbeddingMatrix(std::size_t dim, std::vector<float> data, bool normalized)
    : dim_(dim), data_(std::move(data)), normalized_(normalized) {
  if (dim_ == 0) throw InvalidArgument("embedding dim must be positive");
  if (data_.size() % dim_ != 0) throw InvalidArgument("embedding data is not a whole number of rows");
}

void EmbeddingMatrix::check_finite() const {
  for (std::size_t i = 0; i < size(); ++i) {
    for (float x : row(i)) {
      if (!std::isfinite(x)) throw FormatError("non-finite value at row " + std::to_string(i));
    }
  }
}

void EmbeddingMatrix::normalize_rows() {
  for (std::size_t i = 0; i < size(); ++i) {
    auto r = mutable_row(i);
    const double n = norm_of(r);
    if (n == 0.0) throw InvalidArgument("zero-norm embedding at row " + std::to_string(i));
    if (std::abs(n - 1.0) <= 1e-6) continue;
    for (float& x : r) x = static_cast<float>(x / n);
  }
  normalized_ = true;
}

// ---- Vocab / Dataset ------------------------------------------------------

std::optional<std::size_t> Vocab::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void Vocab::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < tokens.size(); ++i) index_.emplace(tokens[i], i);
}

void Dataset::validate() const {
  const std::size_t n = items.size();
  if (retrieval_images.size() != n || preference_images.size() != n) {
    throw InvalidArgument("row count mismatch between metadata and embeddings");
  }
  if (retrieval_images.dim() != preference_images.dim() ||
      (vocab.vectors.size() > 0 && vocab.vectors.dim() != retrieval_images.dim())) {
    throw InvalidArgument("dimension mismatch between embedding matrices");
  }
  if (vocab.tokens.size() != vocab.vectors.size()) {
    throw InvalidArgument("vocab token count does not match vocab rows");
  }
  if (query_vectors && (query_vectors->size() != n || query_vectors->dim() != retrieval_images.dim())) {
    throw InvalidArgument("query vector matrix does not match catalog");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (items[i].id != i) throw InvalidArgument("item ids must be dense 0..n-1");
  }
  std::vector<bool> seen(n, false);
  for (const auto* list : {&splits.train, &splits.test}) {
    for (ItemId q : *list) {
      if (q >= n) throw InvalidArgument("split references unknown item " + std::to_string(q));
    }
  }
  for (ItemId q : splits.train) seen[q] = true;
  for (ItemId q : splits.test) {
    if (seen[q]) throw InvalidArgument("train and test splits overlap at item " + std::to_string(q));
  }
}

std::vector<float> Dataset::query_for(ItemId target) const {
  if (target >= items.size()) throw InvalidArgument("unknown item " + std::to_string(target));
  if (query_vectors) {
    auto r = query_vectors->row(target);
    return {r.begin(), r.end()};
  }
  return encode_query(items[target].text, vocab);
}

// ---- synthetic generation -------------------------------------------------

void SynthConfig::validate() const {
  if (n_items == 0 || n_attributes == 0 || attrs_per_item == 0 || dim == 0 || text_attrs == 0) {
    throw InvalidArgument("synthetic config counts must be positive");
  }
  if (attrs_per_item > n_attributes) throw InvalidArgument("attrs_per_item exceeds n_attributes");
  if (text_attrs > attrs_per_item) throw InvalidArgument("text_attrs exceeds attrs_per_item");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw InvalidArgument("noise_sigma must be finite and non-negative");
  }
  if (nuisance_rank > dim) throw InvalidArgument("nuisance_rank exceeds dim");
  if (n_test_queries > n_items) throw InvalidArgument("n_test_queries exceeds n_items");
}

namespace {

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double s = 0.0;
  do {
    s = 0.0;
    for (double& x : v) {
      x = rng.normal();
      s += x * x;
    }
  } while (s == 0.0);
  const double n = std::sqrt(s);
  for (double& x : v) x /= n;
  return v;
}

// Gram-Schmidt over Gaussian draws: an orthonormal basis of a random
// rank-r subspace.
std::vector<std::vector<double>> random_subspace(Rng& rng, std::size_t dim, std::size_t rank) {
  std::vector<std::vector<double>> basis;
  while (basis.size() < rank) {
    auto v = random_unit(rng, dim);
    for (const auto& b : basis) {
      const double p = std::inner_product(v.begin(), v.end(), b.begin(), 0.0);
      for (std::size_t k = 0; k < dim; ++k) v[k] -= p * b[k];
    }
    const double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (n < 1e-6) continue;
    for (double& x : v) x /= n;
    basis.push_back(std::move(v));
  }
  return basis;
}

EmbeddingMatrix perturb(const std::vector<std::vector<double>>& truth, double sigma,
                        const std::vector<std::vector<double>>& subspace, Rng& rng) {
  const std::size_t dim = truth.front().size();
  std::vector<float> data;
  data.reserve(truth.size() * dim);
  std::vector<double> v(dim);
  for (const auto& g : truth) {
    v = g;
    if (sigma > 0.0) {
      if (subspace.empty()) {
        const double scale = sigma / std::sqrt(static_cast<double>(dim));
        for (double& x : v) x += scale * rng.normal();
      } else {
        const double scale = sigma / std::sqrt(static_cast<double>(subspace.size()));
        for (const auto& b : subspace) {
          const double z = scale * rng.normal();
          for (std::size_t k = 0; k < dim; ++k) v[k] += z * b[k];
        }
      }
    }
    const double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    for (double x : v) data.push_back(static_cast<float>(x / n));
  }
  return EmbeddingMatrix(dim, std::move(data), true);
}

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng basis_rng = Rng::stream(cfg.seed, "synth/basis");
  Rng attr_rng = Rng::stream(cfg.seed, "synth/attributes");
  Rng split_rng = Rng::stream(cfg.seed, "synth/splits");
  Rng retrieval_rng = Rng::stream(cfg.seed, "synth/retrieval-noise");
  Rng preference_rng = Rng::stream(cfg.seed, "synth/preference-noise");

  std::vector<std::vector<double>> basis;
  basis.reserve(cfg.n_attributes);
  for (std::size_t a = 0; a < cfg.n_attributes; ++a) basis.push_back(random_unit(basis_rng, cfg.dim));

  Dataset ds;
  std::vector<std::vector<double>> truth;
  truth.reserve(cfg.n_items);
  std::vector<std::size_t> pool(cfg.n_attributes);
  for (std::size_t i = 0; i < cfg.n_items; ++i) {
    // Partial Fisher-Yates: first attrs_per_item entries are the sample,
    // in draw order.
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t j = 0; j < cfg.attrs_per_item; ++j) {
      const std::size_t pick = j + attr_rng.below(cfg.n_attributes - j);
      std::swap(pool[j], pool[pick]);
    }
    Item item;
    item.id = static_cast<ItemId>(i);
    std::vector<double> g(cfg.dim, 0.0);
    for (std::size_t j = 0; j < cfg.attrs_per_item; ++j) {
      item.attributes.push_back(attribute_token(pool[j]));
      for (std::size_t k = 0; k < cfg.dim; ++k) g[k] += basis[pool[j]][k];
      if (j < cfg.text_attrs) {
        if (j > 0) item.text += ' ';
        item.text += item.attributes.back();
      }
    }
    const double n = std::sqrt(std::inner_product(g.begin(), g.end(), g.begin(), 0.0));
    if (n == 0.0) throw InvalidArgument("degenerate attribute sum; change the seed");
    for (double& x : g) x /= n;
    truth.push_back(std::move(g));
    ds.items.push_back(std::move(item));
  }

  const auto nuisance = random_subspace(retrieval_rng, cfg.dim, cfg.nuisance_rank);
  ds.retrieval_images = perturb(truth, cfg.noise_sigma, nuisance, retrieval_rng);
  ds.preference_images = perturb(truth, cfg.noise_sigma, {}, preference_rng);

  std::vector<float> vocab_data;
  for (std::size_t a = 0; a < cfg.n_attributes; ++a) {
    ds.vocab.tokens.push_back(attribute_token(a));
    for (double x : basis[a]) vocab_data.push_back(static_cast<float>(x));
  }
  ds.vocab.vectors = EmbeddingMatrix(cfg.dim, std::move(vocab_data));
  ds.vocab.vectors.normalize_rows();
  ds.vocab.rebuild_index();

  std::vector<ItemId> order(cfg.n_items);
  std::iota(order.begin(), order.end(), ItemId{0});
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[split_rng.below(i)]);
  }
  ds.splits.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cfg.n_test_queries));
  ds.splits.train.assign(order.begin() + static_cast<std::ptrdiff_t>(cfg.n_test_queries), order.end());
  std::sort(ds.splits.test.begin(), ds.splits.test.end());
  std::sort(ds.splits.train.begin(), ds.splits.train.end());

  ds.validate();
  return ds;
}

// ---- query encoding -------------------------------------------------------

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<float> encode_query(std::string_view text, const Vocab& vocab) {
  const std::size_t dim = vocab.vectors.dim();
  std::vector<double> acc(dim, 0.0);
  std::size_t hits = 0;
  for (const auto& tok : tokenize(text)) {
    auto idx = vocab.find(tok);
    if (!idx) continue;
    auto r = vocab.vectors.row(*idx);
    for (std::size_t k = 0; k < dim; ++k) acc[k] += r[k];
    ++hits;
  }
  if (hits == 0) throw InvalidArgument("unencodable query");
  // The mean and the sum share a direction; normalize the sum directly.
  const double n = std::sqrt(std::inner_product(acc.begin(), acc.end(), acc.begin(), 0.0));
  if (n == 0.0) throw InvalidArgument("unencodable query");
  std::vector<float> out(dim);
  for (std::size_t k = 0; k < dim; ++k) out[k] = static_cast<float>(acc[k] / n);
  return out;
}

// ---- binary embeddings ----------------------------------------------------

void write_embeddings(const fs::path& path, const EmbeddingMatrix& m) {
  auto out = open_out(path, std::ios::binary);
  out.write(kMagic, 4);
  put(out, kVersion);
  put(out, static_cast<std::uint32_t>(m.dim()));
  put(out, static_cast<std::uint64_t>(m.size()));
  out.write(reinterpret_cast<const char*>(m.data().data()),
            static_cast<std::streamsize>(m.data().size() * sizeof(float)));
  if (!out) throw Error("write failed: " + path.string());
}

EmbeddingMatrix read_embeddings(const fs::path& path) {
  auto in = open_in(path, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("bad magic in " + path.string());
  }
  std::uint32_t version = 0, dim = 0;
  std::uint64_t count = 0;
  if (!get(in, version) || !get(in, dim) || !get(in, count)) {
    throw FormatError("truncated header in " + path.string());
  }
  if (version != kVersion) throw FormatError("unsupported version " + std::to_string(version));
  if (dim == 0) throw FormatError("dim must be positive");

  const auto header_bytes = static_cast<std::uintmax_t>(in.tellg());
  const auto payload = fs::file_size(path) - header_bytes;
  const std::uintmax_t row_bytes = std::uintmax_t{dim} * sizeof(float);
  if (payload % row_bytes != 0 || payload / row_bytes != count) {
    throw FormatError("row count mismatch: header says " + std::to_string(count) + ", file holds " +
                      std::to_string(payload / row_bytes) + " rows");
  }
  std::vector<float> data(count * dim);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(payload));
  EmbeddingMatrix m(dim, std::move(data));
  m.check_finite();
  return m;
}

// ---- metadata / splits / tokens --------------------------------------------

void write_metadata(const fs::path& path, std::span<const Item> items) {
  auto out = open_out(path);
  for (const auto& item : items) {
    nlohmann::ordered_json j;
    j["id"] = item.id;
    j["text"] = item.text;
    j["attributes"] = item.attributes;
    j["image_uri"] = item.image_uri ? json(*item.image_uri) : json(nullptr);
    out << j.dump() << '\n';
  }
}

std::vector<Item> read_metadata(const fs::path& path) {
  auto in = open_in(path);
  std::vector<Item> items;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      Item item;
      const auto id = j.at("id").get<std::int64_t>();
      if (id < 0) throw FormatError("negative id");
      item.id = static_cast<ItemId>(id);
      item.text = j.at("text").get<std::string>();
      item.attributes = j.at("attributes").get<std::vector<std::string>>();
      if (j.contains("image_uri") && !j["image_uri"].is_null()) {
        item.image_uri = j["image_uri"].get<std::string>();
      }
      items.push_back(std::move(item));
    } catch (const json::exception& e) {
      throw FormatError("metadata line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  std::vector<Item> by_id(items.size());
  std::vector<bool> seen(items.size(), false);
  for (auto& item : items) {
    if (item.id >= items.size()) {
      throw FormatError("item ids must be dense 0..n-1, got " + std::to_string(item.id));
    }
    if (seen[item.id]) throw FormatError("duplicate id " + std::to_string(item.id));
    seen[item.id] = true;
    by_id[item.id] = std::move(item);
  }
  return by_id;
}

void write_splits(const fs::path& path, const Splits& splits) {
  nlohmann::ordered_json j;
  j["train"] = splits.train;
  j["test"] = splits.test;
  open_out(path) << j.dump() << '\n';
}

Splits read_splits(const fs::path& path) {
  auto in = open_in(path);
  try {
    const json j = json::parse(in);
    Splits s;
    s.train = j.at("train").get<std::vector<ItemId>>();
    s.test = j.at("test").get<std::vector<ItemId>>();
    return s;
  } catch (const json::exception& e) {
    throw FormatError("splits file: " + std::string(e.what()));
  }
}

void write_tokens(const fs::path& path, std::span<const std::string> tokens) {
  auto out = open_out(path);
  for (const auto& t : tokens) out << t << '\n';
}

std::vector<std::string> read_tokens(const fs::path& path) {
  auto in = open_in(path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return tokens;
}

// ---- bundles ---------------------------------------------------------------

BundlePaths BundlePaths::in(const fs::path& dir) {
  return {dir / "retrieval.cfr", dir / "preference.cfr", dir / "items.jsonl",
          dir / "vocab.cfr",     dir / "vocab.txt",      dir / "splits.json",
          dir / "queries.cfr"};
}

void write_bundle(const fs::path& dir, const Dataset& ds) {
  fs::create_directories(dir);
  const auto p = BundlePaths::in(dir);
  write_embeddings(p.retrieval, ds.retrieval_images);
  write_embeddings(p.preference, ds.preference_images);
  write_embeddings(p.vocab, ds.vocab.vectors);
  write_tokens(p.vocab_tokens, ds.vocab.tokens);
  write_metadata(p.metadata, ds.items);
  write_splits(p.splits, ds.splits);
  if (ds.query_vectors) write_embeddings(p.queries, *ds.query_vectors);
}

Dataset ingest(const BundlePaths& paths) {
  Dataset ds;
  ds.items = read_metadata(paths.metadata);
  ds.retrieval_images = read_embeddings(paths.retrieval);
  ds.preference_images = read_embeddings(paths.preference);
  if (ds.retrieval_images.size() != ds.items.size() || ds.preference_images.size() != ds.items.size()) {
    throw FormatError("row count mismatch: metadata has " + std::to_string(ds.items.size()) +
                      " items, embeddings have " + std::to_string(ds.retrieval_images.size()) + "/" +
                      std::to_string(ds.preference_images.size()));
  }
  ds.retrieval_images.normalize_rows();
  ds.preference_images.normalize_rows();
  ds.vocab.vectors = read_embeddings(paths.vocab);
  ds.vocab.vectors.normalize_rows();
  ds.vocab.tokens = read_tokens(paths.vocab_tokens);
  for (auto& t : ds.vocab.tokens) {
    auto lowered = tokenize(t);
    if (lowered.size() != 1) throw FormatError("vocab token must be a single word: '" + t + "'");
    t = lowered.front();
  }
  ds.vocab.rebuild_index();
  ds.splits = read_splits(paths.splits);
  if (!paths.queries.empty() && fs::exists(paths.queries)) {
    ds.query_vectors = read_embeddings(paths.queries);
    ds.query_vectors->normalize_rows();
  }
  try {
    ds.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what());
  }
  return ds;
}

std::uint64_t checksum(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix_bytes = [&h](const void* p, std::size_t n) {
    h = fnv1a64(std::string_view(static_cast<const char*>(p), n), h);
  };
  auto mix_matrix = [&](const EmbeddingMatrix& m) {
    const std::uint64_t header[2] = {m.dim(), m.size()};
    mix_bytes(header, sizeof(header));
    mix_bytes(m.data().data(), m.data().size() * sizeof(float));
  };
  mix_matrix(ds.retrieval_images);
  mix_matrix(ds.preference_images);
  mix_matrix(ds.vocab.vectors);
  for (const auto& t : ds.vocab.tokens) mix_bytes(t.data(), t.size() + 1);
  std::ostringstream meta;
  for (const auto& item : ds.items) {
    meta << item.id << '\t' << item.text << '\t';
    for (const auto& a : item.attributes) meta << a << ',';
    meta << '\t' << item.image_uri.value_or("") << '\n';
  }
  const auto m = meta.str();
  mix_bytes(m.data(), m.size());
  mix_bytes(ds.splits.train.data(), ds.splits.train.size() * sizeof(ItemId));
  mix_bytes(ds.splits.test.data(), ds.splits.test.size() * sizeof(ItemId));
  return h;
}

}  // namespace cfr
