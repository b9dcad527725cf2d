#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace idrank {

enum class Gender { male, female, unknown };

std::string_view to_string(Gender g) noexcept;
/// Accepts "male"/"m", "female"/"f", "unknown"/"" (case-insensitive).
Gender parse_gender(std::string_view text);

struct IdentityRecord {
  std::string identity_id;
  std::string display_name;
  Gender gender = Gender::unknown;
  std::uint64_t image_count = 0;
};

/// Non-owning row-major view over a dense float matrix.
struct MatrixView {
  std::span<const float> data;
  std::size_t rows = 0;
  std::size_t dim = 0;

  std::span<const float> row(std::size_t i) const { return data.subspan(i * dim, dim); }
};

/// Dense matrix of embeddings with per-row image and identity labels.
///
/// Instances are validated on construction and immutable afterwards, so a
/// single set can be shared read-only between threads:
///   - vectors holds exactly count * dim finite values
///   - image ids are unique
///   - one identity label per row
class EmbeddingSet {
 public:
  EmbeddingSet() = default;

  /// Validates every invariant; throws Error(validation) naming the first
  /// offending row.
  EmbeddingSet(std::uint32_t dim, std::vector<float> vectors, std::vector<std::string> image_ids,
               std::vector<std::string> identity_ids);

  std::uint32_t dim() const noexcept { return dim_; }
  std::size_t count() const noexcept { return image_ids_.size(); }
  bool empty() const noexcept { return image_ids_.empty(); }

  std::span<const float> vectors() const noexcept { return vectors_; }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(vectors_).subspan(i * dim_, dim_);
  }
  MatrixView view() const noexcept { return {vectors_, count(), dim_}; }

  const std::vector<std::string>& image_ids() const noexcept { return image_ids_; }
  const std::vector<std::string>& identity_ids() const noexcept { return identity_ids_; }

  friend bool operator==(const EmbeddingSet& a, const EmbeddingSet& b);

 private:
  std::uint32_t dim_ = 0;
  std::vector<float> vectors_;
  std::vector<std::string> image_ids_;
  std::vector<std::string> identity_ids_;
};

inline constexpr char kEmbeddingMagic[4] = {'I', 'D', 'R', 'K'};
inline constexpr std::uint32_t kEmbeddingFormatVersion = 1;
/// magic + version + dim + count
inline constexpr std::size_t kEmbeddingHeaderBytes = 4 + 4 + 4 + 8;

/// Serializes `set`; returns the number of bytes written (header, matrix,
/// string table and CRC trailer).
std::uint64_t write_embedding_set(const EmbeddingSet& set, std::ostream& out);

/// Parses and validates a complete embedding file.
EmbeddingSet read_embedding_set(std::istream& in);

EmbeddingSet load_embedding_file(const std::filesystem::path& path);
/// Atomic: the final path is either untouched or fully written.
std::uint64_t save_embedding_file(const EmbeddingSet& set, const std::filesystem::path& path);

/// Row-order concatenation. An empty list is an error since dim is undefined.
EmbeddingSet concat(std::span<const EmbeddingSet> sets);

/// CRC32 (IEEE) of the serialized bytes, i.e. the trailer a file holding
/// `set` carries. Formatted as "crc32:xxxxxxxx".
std::string fingerprint(const EmbeddingSet& set);
std::string format_fingerprint(std::uint32_t crc);

/// Scales every row to unit L2 norm. All-zero rows are left as they are.
EmbeddingSet normalize_rows(const EmbeddingSet& set);

/// Counts rows per identity label.
std::vector<IdentityRecord> identity_records(const EmbeddingSet& set);

std::uint32_t crc32(std::span<const unsigned char> bytes, std::uint32_t seed = 0) noexcept;

namespace detail {
/// Encodes without validating `vectors`, for producing deliberately bad files
/// in tests. Labels must still be consistent in length.
std::string encode_unchecked(std::uint32_t dim, std::span<const float> vectors,
                             std::span<const std::string> image_ids,
                             std::span<const std::string> identity_ids);
}  // namespace detail

}  // namespace idrank
