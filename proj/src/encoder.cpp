#include "cfr/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace cfr {

Adapter Adapter::identity(std::size_t dim) {
  Adapter a{dim, std::vector<double>(dim * dim, 0.0)};
  for (std::size_t i = 0; i < dim; ++i) a.weight[i * dim + i] = 1.0;
  return a;
}

bool Adapter::is_identity() const {
  for (std::size_t r = 0; r < dim; ++r) {
    for (std::size_t c = 0; c < dim; ++c) {
      if (weight[r * dim + c] != (r == c ? 1.0 : 0.0)) return false;
    }
  }
  return true;
}

std::vector<float> Adapter::apply(std::span<const float> v) const {
  if (v.size() != dim) throw InvalidArgument("adapter dimension mismatch");
  if (is_identity()) return {v.begin(), v.end()};
  std::vector<double> z(dim, 0.0);
  double norm2 = 0.0;
  for (std::size_t r = 0; r < dim; ++r) {
    const double* w = weight.data() + r * dim;
    double s = 0.0;
    for (std::size_t c = 0; c < dim; ++c) s += w[c] * v[c];
    z[r] = s;
    norm2 += s * s;
  }
  if (!(norm2 > 0.0) || !std::isfinite(norm2)) throw InvalidArgument("adapter maps vector to zero or non-finite");
  const double n = std::sqrt(norm2);
  std::vector<float> out(dim);
  for (std::size_t r = 0; r < dim; ++r) out[r] = static_cast<float>(z[r] / n);
  return out;
}

EmbeddingMatrix Adapter::apply(const EmbeddingMatrix& m) const {
  if (m.dim() != dim) throw InvalidArgument("adapter dimension mismatch");
  if (is_identity()) return m;
  std::vector<float> data;
  data.reserve(m.data().size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    auto row = apply(m.row(i));
    data.insert(data.end(), row.begin(), row.end());
  }
  return EmbeddingMatrix(dim, std::move(data), true);
}

EncoderStack EncoderStack::identity(std::size_t dim, bool sep_enc) {
  EncoderStack s{Adapter::identity(dim), Adapter::identity(dim), std::nullopt};
  if (sep_enc) s.image_unimodal_sep = Adapter::identity(dim);
  return s;
}

EncodedCatalog encode_catalog(const EmbeddingMatrix& images, const EncoderStack& stack) {
  EncodedCatalog cat;
  cat.crossmodal = std::make_shared<const EmbeddingMatrix>(stack.image_crossmodal.apply(images));
  cat.unimodal = stack.sep_enc()
                     ? std::make_shared<const EmbeddingMatrix>(stack.image_unimodal_sep->apply(images))
                     : cat.crossmodal;
  return cat;
}

namespace {

constexpr char kMagic[4] = {'C', 'F', 'A', '1'};
constexpr std::uint32_t kVersion = 1;

void write_matrix(std::ostream& out, const Adapter& a) {
  for (double w : a.weight) {
    const float f = static_cast<float>(w);
    out.write(reinterpret_cast<const char*>(&f), sizeof(f));
  }
}

Adapter read_matrix(std::istream& in, std::size_t dim) {
  Adapter a{dim, std::vector<double>(dim * dim)};
  for (double& w : a.weight) {
    float f;
    in.read(reinterpret_cast<char*>(&f), sizeof(f));
    if (in.gcount() != sizeof(f)) throw FormatError("truncated adapter checkpoint");
    if (!std::isfinite(f)) throw FormatError("non-finite adapter weight");
    w = f;
  }
  return a;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const EncoderStack& stack) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  const auto dim = static_cast<std::uint32_t>(stack.dim());
  const std::uint8_t sep = stack.sep_enc() ? 1 : 0;
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
  out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
  out.write(reinterpret_cast<const char*>(&sep), sizeof(sep));
  write_matrix(out, stack.text);
  write_matrix(out, stack.image_crossmodal);
  if (stack.sep_enc()) write_matrix(out, *stack.image_unimodal_sep);
  if (!out) throw Error("write failed: " + path.string());
}

EncoderStack read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open: " + path.string());
  char magic[4];
  std::uint32_t version = 0, dim = 0;
  std::uint8_t sep = 0;
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad adapter checkpoint magic");
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
  in.read(reinterpret_cast<char*>(&sep), sizeof(sep));
  if (!in) throw FormatError("truncated adapter checkpoint header");
  if (version != kVersion) throw FormatError("unsupported adapter checkpoint version");
  if (dim == 0) throw FormatError("adapter dim must be positive");
  if (sep > 1) throw FormatError("bad sep_enc flag");
  EncoderStack s;
  s.text = read_matrix(in, dim);
  s.image_crossmodal = read_matrix(in, dim);
  if (sep) s.image_unimodal_sep = read_matrix(in, dim);
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in adapter checkpoint");
  return s;
}

}  // namespace cfr
