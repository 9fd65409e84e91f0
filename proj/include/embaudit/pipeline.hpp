#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "embaudit/cache.hpp"
#include "embaudit/corpus.hpp"
#include "embaudit/encoder.hpp"
#include "embaudit/metrics.hpp"
#include "embaudit/stats.hpp"

namespace embaudit {

/// Doc-only control: calibrated variants embed documents with calibration
/// but keep standalone segment embeddings uncalibrated, isolating the
/// document side of the similarity.
enum class ControlMode { kOff, kDocOnly };

ControlMode control_mode_from_string(const std::string& name);
std::string to_string(ControlMode mode);

struct InstanceSpec {
  int n = 0;
  LanguageConfig language_config;
  int set_count = 0;
  int permutations_per_set = kAllPermutations;
};

/// Corpus input: inline synthetic generation or a JSONL file.
struct CorpusSource {
  bool generate = true;
  // generation parameters
  std::uint64_t seed = 0;
  std::vector<std::string> languages = {"en", "zh", "de", "it", "ko", "hi"};
  int segments_per_language = 16;
  std::pair<int, int> length_band = {24, 48};
  // load parameters
  std::filesystem::path path;
};

struct RunManifest {
  std::string run_id = "run";
  std::uint64_t seed = 0;
  EncoderConfig encoder;
  CorpusSource corpus;
  std::vector<InstanceSpec> instances;
  std::vector<CalibrationConfig> variants;  // baseline "none" always runs too
  ControlMode control_mode = ControlMode::kOff;
  int max_doc_tokens = 8192;
  int workers = 1;
  std::filesystem::path cache_path;  // default: <out_dir>/embedding_cache.jsonl

  void validate() const;
};

RunManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const RunManifest& manifest, const std::filesystem::path& path);

struct FailureNote {
  std::string instance_id;
  std::string segment_set_id;
  std::string error;
};

/// Records + fits of one (instance, variant) pass, with per-set
/// quarantine already applied: a document failure drops the whole
/// segment set to preserve position balance.
struct InstanceRun {
  std::vector<SimilarityRecord> records;
  std::vector<LabeledFit> fits;
  std::vector<FailureNote> failures;
};

/// `variant` empty means the uncalibrated baseline.
InstanceRun run_experiment_instance(const ExperimentInstance& instance,
                                    const Corpus& corpus, const Encoder& encoder,
                                    EmbeddingCache& cache,
                                    const std::optional<CalibrationConfig>& variant,
                                    ControlMode control_mode, int workers = 1);

struct ComparisonRow {
  std::string instance_id;
  std::string kind;
  int p = 0;
  std::string variant_id;
  double beta_baseline = 0.0;
  double beta_variant = 0.0;
  std::optional<double> reduction_ratio;  // |beta_cal| / |beta_base|; empty if base is 0
};

/// Side-by-side position coefficients, baseline vs each calibrated
/// variant. Requires the baseline fit for every compared instance.
std::vector<ComparisonRow> compare_calibrations(std::span<const LabeledFit> fits);

void write_comparison_csv(const std::filesystem::path& path,
                          std::span<const ComparisonRow> rows);

struct AuditOutputs {
  std::vector<SimilarityRecord> records;
  std::vector<LabeledFit> fits;
  std::vector<ComparisonRow> comparison;
  std::vector<FailureNote> failures;
};

/// Materializes the manifest end-to-end and writes records.csv, ols.csv,
/// comparison.csv, run_metadata.json (and failures.json when needed)
/// under out_dir. All embeddings are served through the on-disk cache, so
/// re-running a completed audit performs no encoder forward passes.
class AuditRun {
 public:
  AuditRun(RunManifest manifest, std::filesystem::path out_dir);

  const Encoder& encoder() const { return *encoder_; }
  const Corpus& corpus() const { return corpus_; }
  const RunManifest& manifest() const { return manifest_; }
  std::span<const ExperimentInstance> instances() const { return instances_; }

  AuditOutputs execute();

 private:
  RunManifest manifest_;
  std::filesystem::path out_dir_;
  Corpus corpus_;
  std::unique_ptr<Encoder> encoder_;
  std::unique_ptr<EmbeddingCache> cache_;
  std::vector<ExperimentInstance> instances_;
  std::vector<FailureNote> materialization_failures_;
};

}  // namespace embaudit
