#include "idrank/embedding_store.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <optional>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <unordered_set>

#include "idrank/atomic_file.hpp"
#include "idrank/error.hpp"

namespace idrank {

static_assert(std::endian::native == std::endian::little,
              "the embedding format is little-endian and is mapped directly onto memory");

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::io: return "io";
    case ErrorKind::format: return "format";
    case ErrorKind::validation: return "validation";
    case ErrorKind::sampling: return "sampling";
    case ErrorKind::usage: return "usage";
  }
  return "unknown";
}

std::string_view to_string(Gender g) noexcept {
  switch (g) {
    case Gender::male: return "male";
    case Gender::female: return "female";
    case Gender::unknown: return "unknown";
  }
  return "unknown";
}

Gender parse_gender(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "male" || lower == "m") return Gender::male;
  if (lower == "female" || lower == "f") return Gender::female;
  if (lower == "unknown" || lower.empty()) return Gender::unknown;
  throw Error(ErrorKind::validation, "unrecognized gender label '" + std::string(text) + "'");
}

EmbeddingSet::EmbeddingSet(std::uint32_t dim, std::vector<float> vectors,
                           std::vector<std::string> image_ids,
                           std::vector<std::string> identity_ids)
    : dim_(dim),
      vectors_(std::move(vectors)),
      image_ids_(std::move(image_ids)),
      identity_ids_(std::move(identity_ids)) {
  if (dim_ == 0) throw Error(ErrorKind::validation, "embedding dim must be positive");
  if (image_ids_.size() != identity_ids_.size()) {
    throw Error(ErrorKind::validation,
                "label count mismatch: " + std::to_string(image_ids_.size()) + " image ids vs " +
                    std::to_string(identity_ids_.size()) + " identity ids");
  }
  const std::size_t n = image_ids_.size();
  if (vectors_.size() != n * dim_) {
    throw Error(ErrorKind::validation, "matrix holds " + std::to_string(vectors_.size()) +
                                           " values, expected " + std::to_string(n) + " x " +
                                           std::to_string(dim_));
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < dim_; ++d) {
      if (!std::isfinite(vectors_[i * dim_ + d])) {
        throw Error(ErrorKind::validation, "non-finite value at row " + std::to_string(i) +
                                               ", column " + std::to_string(d));
      }
    }
  }
  std::unordered_set<std::string_view> seen;
  seen.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!seen.insert(image_ids_[i]).second) {
      throw Error(ErrorKind::validation,
                  "duplicate image_id '" + image_ids_[i] + "' at row " + std::to_string(i));
    }
  }
}

bool operator==(const EmbeddingSet& a, const EmbeddingSet& b) {
  if (a.dim_ != b.dim_ || a.image_ids_ != b.image_ids_ || a.identity_ids_ != b.identity_ids_) {
    return false;
  }
  return a.vectors_.size() == b.vectors_.size() &&
         (a.vectors_.empty() ||
          std::memcmp(a.vectors_.data(), b.vectors_.data(), a.vectors_.size() * sizeof(float)) ==
              0);
}

std::uint32_t crc32(std::span<const unsigned char> bytes, std::uint32_t seed) noexcept {
  uLong crc = seed;
  constexpr std::size_t kChunk = std::size_t{1} << 30;
  while (!bytes.empty()) {
    const std::size_t n = std::min(bytes.size(), kChunk);
    crc = ::crc32(crc, bytes.data(), static_cast<uInt>(n));
    bytes = bytes.subspan(n);
  }
  return static_cast<std::uint32_t>(crc);
}

std::string format_fingerprint(std::uint32_t crc) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", crc);
  return std::string("crc32:") + buf;
}

namespace {

using ByteSink = std::function<void(const void*, std::size_t)>;

template <typename T>
void put(const ByteSink& sink, T value) {
  sink(&value, sizeof value);
}

// Emits everything but the CRC trailer.
void encode_body(std::uint32_t dim, std::span<const float> vectors,
                 std::span<const std::string> image_ids, std::span<const std::string> identity_ids,
                 const ByteSink& sink) {
  sink(kEmbeddingMagic, sizeof kEmbeddingMagic);
  put<std::uint32_t>(sink, kEmbeddingFormatVersion);
  put<std::uint32_t>(sink, dim);
  put<std::uint64_t>(sink, image_ids.size());
  if (!vectors.empty()) sink(vectors.data(), vectors.size_bytes());
  auto put_string = [&](const std::string& s) {
    if (s.size() > std::numeric_limits<std::uint32_t>::max()) {
      throw Error(ErrorKind::validation, "label longer than 4 GiB");
    }
    put<std::uint32_t>(sink, static_cast<std::uint32_t>(s.size()));
    sink(s.data(), s.size());
  };
  for (std::size_t i = 0; i < image_ids.size(); ++i) {
    put_string(image_ids[i]);
    put_string(identity_ids[i]);
  }
}

class CrcReader {
 public:
  explicit CrcReader(std::istream& in) : in_(in) {
    const auto here = in_.tellg();
    if (here != std::streampos(-1)) {
      in_.seekg(0, std::ios::end);
      const auto end = in_.tellg();
      in_.seekg(here);
      if (end != std::streampos(-1)) {
        remaining_ = static_cast<std::uint64_t>(end - here);
        sized_ = true;
      }
    }
  }

  void read(void* dst, std::size_t n, const char* what) {
    if (sized_ && remaining_ < n) truncated(what);
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) truncated(what);
    if (sized_) remaining_ -= n;
    crc_ = crc32({static_cast<const unsigned char*>(dst), n}, crc_);
  }

  template <typename T>
  T get(const char* what) {
    T value;
    read(&value, sizeof value, what);
    return value;
  }

  /// Fails early when a declared size cannot fit in what is left.
  void require(std::uint64_t n, const char* what) const {
    if (sized_ && remaining_ < n) truncated(what);
  }

  std::uint32_t crc() const noexcept { return crc_; }
  std::istream& stream() { return in_; }

 private:
  [[noreturn]] static void truncated(const char* what) {
    throw Error(ErrorKind::format, std::string("truncated embedding file while reading ") + what);
  }

  std::istream& in_;
  std::uint64_t remaining_ = 0;
  bool sized_ = false;
  std::uint32_t crc_ = 0;
};

}  // namespace

namespace detail {
std::string encode_unchecked(std::uint32_t dim, std::span<const float> vectors,
                             std::span<const std::string> image_ids,
                             std::span<const std::string> identity_ids) {
  std::string bytes;
  encode_body(dim, vectors, image_ids, identity_ids,
              [&](const void* p, std::size_t n) { bytes.append(static_cast<const char*>(p), n); });
  const std::uint32_t crc = crc32({reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()});
  bytes.append(reinterpret_cast<const char*>(&crc), sizeof crc);
  return bytes;
}
}  // namespace detail

std::uint64_t write_embedding_set(const EmbeddingSet& set, std::ostream& out) {
  std::uint64_t written = 0;
  std::uint32_t crc = 0;
  encode_body(set.dim(), set.vectors(), set.image_ids(), set.identity_ids(),
              [&](const void* p, std::size_t n) {
                out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
                crc = crc32({static_cast<const unsigned char*>(p), n}, crc);
                written += n;
              });
  out.write(reinterpret_cast<const char*>(&crc), sizeof crc);
  written += sizeof crc;
  if (!out) throw Error(ErrorKind::io, "failed writing embedding set");
  return written;
}

std::string fingerprint(const EmbeddingSet& set) {
  std::uint32_t crc = 0;
  encode_body(set.dim(), set.vectors(), set.image_ids(), set.identity_ids(),
              [&](const void* p, std::size_t n) {
                crc = crc32({static_cast<const unsigned char*>(p), n}, crc);
              });
  return format_fingerprint(crc);
}

EmbeddingSet read_embedding_set(std::istream& in) {
  CrcReader reader(in);
  char magic[4];
  reader.read(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kEmbeddingMagic, sizeof magic) != 0) {
    throw Error(ErrorKind::format, "bad magic: not an IDRK embedding file");
  }
  const auto version = reader.get<std::uint32_t>("version");
  if (version != kEmbeddingFormatVersion) {
    throw Error(ErrorKind::format, "unsupported embedding format version " + std::to_string(version));
  }
  const auto dim = reader.get<std::uint32_t>("dim");
  const auto count = reader.get<std::uint64_t>("count");
  if (dim == 0) throw Error(ErrorKind::format, "embedding dim must be positive");
  if (count > std::numeric_limits<std::uint64_t>::max() / 4 / dim) {
    throw Error(ErrorKind::format, "declared matrix size overflows");
  }
  const std::uint64_t matrix_bytes = count * dim * sizeof(float);
  reader.require(matrix_bytes, "matrix");

  std::vector<float> vectors(count * dim);
  if (!vectors.empty()) reader.read(vectors.data(), matrix_bytes, "matrix");

  std::vector<std::string> image_ids(count), identity_ids(count);
  auto get_string = [&](std::string& s, const char* what) {
    const auto len = reader.get<std::uint32_t>(what);
    reader.require(len, what);
    s.resize(len);
    if (len) reader.read(s.data(), len, what);
  };
  for (std::uint64_t i = 0; i < count; ++i) {
    get_string(image_ids[i], "image_id");
    get_string(identity_ids[i], "identity_id");
  }
  const std::uint32_t computed = reader.crc();
  std::uint32_t stored;
  reader.read(&stored, sizeof stored, "crc trailer");
  if (stored != computed) {
    throw Error(ErrorKind::format, "CRC mismatch: stored " + format_fingerprint(stored) +
                                       ", computed " + format_fingerprint(computed));
  }
  if (reader.stream().peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorKind::format, "trailing bytes after CRC trailer");
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    for (std::uint32_t d = 0; d < dim; ++d) {
      if (!std::isfinite(vectors[i * dim + d])) {
        throw Error(ErrorKind::validation, "non-finite value at row " + std::to_string(i) +
                                               ", column " + std::to_string(d));
      }
    }
  }
  return EmbeddingSet(dim, std::move(vectors), std::move(image_ids), std::move(identity_ids));
}

EmbeddingSet load_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  try {
    return read_embedding_set(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::uint64_t save_embedding_file(const EmbeddingSet& set, const std::filesystem::path& path) {
  std::uint64_t written = 0;
  write_file_atomically(path, [&](std::ostream& out) { written = write_embedding_set(set, out); });
  return written;
}

EmbeddingSet concat(std::span<const EmbeddingSet> sets) {
  if (sets.empty()) throw Error(ErrorKind::validation, "concat of an empty list has no dim");
  const std::uint32_t dim = sets.front().dim();
  std::size_t total = 0;
  for (const auto& s : sets) {
    if (s.dim() != dim) {
      throw Error(ErrorKind::validation, "concat dimension mismatch: " + std::to_string(dim) +
                                             " vs " + std::to_string(s.dim()));
    }
    total += s.count();
  }
  std::vector<float> vectors;
  vectors.reserve(total * dim);
  std::vector<std::string> image_ids, identity_ids;
  image_ids.reserve(total);
  identity_ids.reserve(total);
  for (const auto& s : sets) {
    vectors.insert(vectors.end(), s.vectors().begin(), s.vectors().end());
    image_ids.insert(image_ids.end(), s.image_ids().begin(), s.image_ids().end());
    identity_ids.insert(identity_ids.end(), s.identity_ids().begin(), s.identity_ids().end());
  }
  return EmbeddingSet(dim, std::move(vectors), std::move(image_ids), std::move(identity_ids));
}

EmbeddingSet normalize_rows(const EmbeddingSet& set) {
  std::vector<float> vectors(set.vectors().begin(), set.vectors().end());
  const std::size_t dim = set.dim();
  for (std::size_t i = 0; i < set.count(); ++i) {
    double norm2 = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double v = vectors[i * dim + d];
      norm2 += v * v;
    }
    if (norm2 == 0.0) continue;
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::size_t d = 0; d < dim; ++d) {
      vectors[i * dim + d] = static_cast<float>(vectors[i * dim + d] * inv);
    }
  }
  return EmbeddingSet(set.dim(), std::move(vectors), set.image_ids(), set.identity_ids());
}

std::vector<IdentityRecord> identity_records(const EmbeddingSet& set) {
  std::map<std::string, std::uint64_t> counts;
  for (const auto& id : set.identity_ids()) ++counts[id];
  std::vector<IdentityRecord> out;
  out.reserve(counts.size());
  for (const auto& [id, n] : counts) out.push_back({id, id, Gender::unknown, n});
  return out;
}

}  // namespace idrank
