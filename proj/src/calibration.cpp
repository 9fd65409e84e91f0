#include "embaudit/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace embaudit {

BasketPartition partition_keys(int sequence_length, int basket_size) {
  if (sequence_length < 1) throw Error("partition_keys: sequence length must be >= 1");
  if (basket_size < 1) throw Error("partition_keys: basket size must be >= 1");

  BasketPartition partition;
  partition.sequence_length = sequence_length;
  partition.basket_size = basket_size;
  partition.baskets.push_back({0, 1});  // pooling token sits alone
  for (int begin = 1; begin < sequence_length; begin += basket_size) {
    int end = std::min(begin + basket_size, sequence_length);
    partition.baskets.push_back({begin, end});
  }
  return partition;
}

MassMode mass_mode_from_string(const std::string& name) {
  if (name == "uniform") return MassMode::kUniformPerBasket;
  if (name == "proportional") return MassMode::kSizeProportional;
  throw Error("unknown mass mode: " + name);
}

std::string to_string(MassMode mode) {
  return mode == MassMode::kUniformPerBasket ? "uniform" : "proportional";
}

Vector calibrate_row(Eigen::Ref<const Vector> row, const BasketPartition& partition,
                     MassMode mode) {
  const int length = static_cast<int>(row.size());
  if (length != partition.sequence_length)
    throw Error("calibrate_row: row length " + std::to_string(length) +
                " does not match partition length " +
                std::to_string(partition.sequence_length));

  const double m = static_cast<double>(partition.count());
  Vector out(length);
  for (const auto& basket : partition.baskets) {
    const double mass = row.segment(basket.begin, basket.size()).sum();
    if (mass == 0.0)
      throw Error("calibrate_row: basket with zero mass (degenerate input row)");
    const double target = mode == MassMode::kUniformPerBasket
                              ? 1.0 / m
                              : static_cast<double>(basket.size()) / length;
    out.segment(basket.begin, basket.size()) =
        row.segment(basket.begin, basket.size()) * (target / mass);
  }
  return out;
}

std::string CalibrationConfig::variant_id() const {
  return id.empty() ? make_variant_id(*this) : id;
}

std::string make_variant_id(const CalibrationConfig& config) {
  std::ostringstream os;
  os << "B" << config.basket_size << "-L";
  auto layers = config.calibrated_layers;
  std::sort(layers.begin(), layers.end());
  if (layers.empty()) {
    os << "none";
  } else {
    bool contiguous = true;
    for (std::size_t i = 1; i < layers.size(); ++i)
      if (layers[i] != layers[i - 1] + 1) contiguous = false;
    if (contiguous) {
      os << layers.front() << ".." << layers.back();
    } else {
      for (std::size_t i = 0; i < layers.size(); ++i)
        os << (i ? "," : "") << layers[i];
    }
  }
  os << "-" << to_string(config.mass_mode);
  return os.str();
}

double AttentionProfile::total() const {
  return start_mass + end_mass +
         std::accumulate(basket_mass.begin(), basket_mass.end(), 0.0);
}

AttentionProfile basket_profile(const std::vector<Matrix>& rows_per_layer,
                                const BasketPartition& partition,
                                const std::vector<int>& selected_layers,
                                int end_token_index) {
  if (selected_layers.empty()) throw Error("basket_profile: empty layer selection");
  if (rows_per_layer.empty()) throw Error("basket_profile: no attention rows");
  const int layer_count = static_cast<int>(rows_per_layer.size());
  for (int layer : selected_layers)
    if (layer < 1 || layer > layer_count)
      throw Error("basket_profile: layer " + std::to_string(layer) +
                  " outside {1.." + std::to_string(layer_count) + "}");

  const int length = partition.sequence_length;
  if (end_token_index < 0) end_token_index = length - 1;

  // Mean over heads within each selected layer, then mean over layers.
  Vector mean_row = Vector::Zero(length);
  for (int layer : selected_layers) {
    const Matrix& rows = rows_per_layer[layer - 1];
    if (rows.cols() != length)
      throw Error("basket_profile: attention row length mismatch");
    mean_row += rows.colwise().mean().transpose();
  }
  mean_row /= static_cast<double>(selected_layers.size());

  AttentionProfile profile;
  profile.start_mass = mean_row(0);
  profile.end_mass = end_token_index > 0 ? mean_row(end_token_index) : 0.0;
  for (std::size_t b = 1; b < partition.baskets.size(); ++b) {
    const auto& basket = partition.baskets[b];
    double mass = 0.0;
    bool has_content = false;
    for (int k = basket.begin; k < basket.end; ++k) {
      if (k == end_token_index) continue;
      mass += mean_row(k);
      has_content = true;
    }
    if (has_content) profile.basket_mass.push_back(mass);
  }
  {
    std::ostringstream os;
    os << "mean over layers {";
    for (std::size_t i = 0; i < selected_layers.size(); ++i)
      os << (i ? "," : "") << selected_layers[i];
    os << "} and all heads";
    profile.layer_descriptor = os.str();
  }
  return profile;
}

}  // namespace embaudit
