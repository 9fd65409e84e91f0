#pragma once

#include <string>
#include <vector>

#include "embaudit/types.hpp"

namespace embaudit {

/// Contiguous partition of the key positions of an L-token sequence.
/// Basket 0 holds only the pooling token (key index 0); the remaining
/// L-1 keys are tiled into basket_size-sized chunks, the last chunk
/// possibly partial. Total basket count is ceil((L-1)/B) + 1.
struct BasketPartition {
  struct Range {
    int begin = 0;  // inclusive key index
    int end = 0;    // exclusive
    int size() const { return end - begin; }
  };

  int sequence_length = 0;
  int basket_size = 0;
  std::vector<Range> baskets;

  int count() const { return static_cast<int>(baskets.size()); }
};

BasketPartition partition_keys(int sequence_length, int basket_size);

enum class MassMode {
  kUniformPerBasket,   // every basket ends up with total mass 1/m
  kSizeProportional,   // basket b ends up with total mass |b|/L
};

MassMode mass_mode_from_string(const std::string& name);
std::string to_string(MassMode mode);

/// Redistributes attention mass so each basket carries its target mass
/// while intra-basket ratios are preserved exactly (one scale factor per
/// basket). Input must be a probability distribution over the keys.
Vector calibrate_row(Eigen::Ref<const Vector> row, const BasketPartition& partition,
                     MassMode mode = MassMode::kUniformPerBasket);

/// Parameters of the inference-time calibration operator.
struct CalibrationConfig {
  int basket_size = 128;
  std::vector<int> calibrated_layers;  // 1-based layer ids, subset of {1..layer_count}
  MassMode mass_mode = MassMode::kUniformPerBasket;
  std::string id;  // cache/report label; empty means "derive via variant_id()"

  std::string variant_id() const;
};

/// Canonical variant label, e.g. "B128-L7..12-uniform". Non-contiguous
/// layer sets fall back to a comma-joined list.
std::string make_variant_id(const CalibrationConfig& config);

/// Basket-level view of pooling-token attention. Special tokens are kept
/// out of the content baskets so the first/last basket only reflect
/// content keys.
struct AttentionProfile {
  double start_mass = 0.0;  // mass on the pooling token key
  double end_mass = 0.0;    // mass on the end-of-sequence key
  std::vector<double> basket_mass;  // content baskets, in key order
  std::string layer_descriptor;

  double total() const;
};

/// Aggregates pooling-token attention rows into a basket profile: mean
/// over heads within a layer, then mean over the selected layers.
/// `rows_per_layer[l]` is a (heads x L) matrix of post-softmax rows;
/// `selected_layers` uses 1-based layer ids.
AttentionProfile basket_profile(const std::vector<Matrix>& rows_per_layer,
                                const BasketPartition& partition,
                                const std::vector<int>& selected_layers,
                                int end_token_index = -1);

}  // namespace embaudit
