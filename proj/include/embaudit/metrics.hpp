#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "embaudit/types.hpp"

namespace embaudit {

/// One (segment set, permutation, position) similarity observation.
struct SimilarityRecord {
  enum class Kind { kRepresentation, kRetention };

  std::string segment_set_id;
  std::string permutation_id;
  int position = 0;  // 1-based
  Kind kind = Kind::kRepresentation;
  double value = 0.0;
  int n = 0;
  std::string language_config_id;
  std::string model_id;
  std::string calibration_id;
};

std::string to_string(SimilarityRecord::Kind kind);
SimilarityRecord::Kind record_kind_from_string(const std::string& name);

/// Cosine similarity of two nonzero vectors, accumulated in double.
template <typename DerivedA, typename DerivedB>
double cosine(const Eigen::MatrixBase<DerivedA>& u, const Eigen::MatrixBase<DerivedB>& v) {
  if (u.size() != v.size()) throw Error("cosine: dimension mismatch");
  const double norm_u = u.template cast<double>().norm();
  const double norm_v = v.template cast<double>().norm();
  if (norm_u < 1e-12 || norm_v < 1e-12) throw Error("cosine: zero vector");
  return u.template cast<double>().cwiseProduct(v.template cast<double>()).sum() /
         (norm_u * norm_v);
}

/// Shared metadata copied onto every record produced for one document.
struct RecordMeta {
  std::string segment_set_id;
  std::string permutation_id;
  int n = 0;
  std::string language_config_id;
  std::string model_id;
  std::string calibration_id;
};

/// sim over positions: cosine between the document embedding and the
/// standalone embedding of the segment placed at each position.
/// standalone_by_position[i] belongs to document position i+1.
std::vector<SimilarityRecord> positional_fairness_scores(
    const Vector& doc_embedding, std::span<const Vector> standalone_by_position,
    const RecordMeta& meta);

/// Retention per position: cosine between standalone and contextualized
/// embeddings of the same segment.
std::vector<SimilarityRecord> information_retention_scores(
    std::span<const Vector> standalone_by_position,
    std::span<const Vector> contextualized_by_position, const RecordMeta& meta);

struct PositionAggregate {
  std::string group;
  int position = 0;
  double mean = 0.0;
  double stddev = 0.0;
  int count = 0;
};

using GroupKeyFn = std::function<std::string(const SimilarityRecord&)>;

/// Per-(group, position) mean/stddev/count, sorted by (group, position).
/// The default key separates curves by kind and calibration variant.
std::vector<PositionAggregate> aggregate_by_position(
    std::span<const SimilarityRecord> records, const GroupKeyFn& key = {});

void write_records_csv(std::ostream& out, std::span<const SimilarityRecord> records);
void write_records_csv(const std::filesystem::path& path,
                       std::span<const SimilarityRecord> records);
std::vector<SimilarityRecord> read_records_csv(const std::filesystem::path& path);

/// RFC-4180-style field quoting.
std::string csv_escape(const std::string& field);
std::vector<std::string> parse_csv_line(const std::string& line);

}  // namespace embaudit
