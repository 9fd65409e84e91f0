#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "embaudit/metrics.hpp"
#include "embaudit/types.hpp"

namespace embaudit {

/// Saturated position-dummy OLS fit with cluster-robust inference.
/// coefficients(0) is the intercept (position-1 mean); coefficients(p-1)
/// for p in 2..n is the deviation of position p from that baseline.
struct OlsFit {
  SimilarityRecord::Kind kind = SimilarityRecord::Kind::kRepresentation;
  int n_positions = 0;
  Vector coefficients;
  Vector standard_errors;
  Vector t_statistics;
  Vector p_values;
  Matrix covariance;
  int cluster_count = 0;
  int observation_count = 0;

  double intercept() const { return coefficients(0); }
  /// Position coefficient accessors, p in {2..n}.
  double beta(int p) const { return coefficients(p - 1); }
  double se(int p) const { return standard_errors(p - 1); }
  double t(int p) const { return t_statistics(p - 1); }
  double p_value(int p) const { return p_values(p - 1); }
};

/// Fits value ~ 1 + sum_p beta_p * 1{position == p} over the records of
/// one experiment instance and one kind, clustering errors by segment
/// set. Requires every position 1..n observed and at least two clusters.
OlsFit fit_position_ols(std::span<const SimilarityRecord> records);

/// CR1 cluster sandwich: (X'X)^-1 (sum_g X_g' e_g e_g' X_g) (X'X)^-1
/// scaled by G/(G-1) * (N-1)/(N-K).
Matrix cluster_robust_covariance(const Matrix& design, const Vector& residuals,
                                 std::span<const int> cluster_labels);

struct FairnessDecision {
  double alpha = 0.05;
  std::vector<int> positions;  // p = 2..n
  std::vector<bool> reject;

  bool all_retained() const;
};

/// Two-sided tests of beta_p = 0 against t(G-1).
FairnessDecision test_fairness(const OlsFit& fit, double alpha);

/// Two-sided p-value of a t statistic with `dof` degrees of freedom.
double student_t_two_sided_p(double t, double dof);

/// Regularized incomplete beta function I_x(a, b).
double regularized_incomplete_beta(double a, double b, double x);

/// One fit labeled for reporting/CSV.
struct LabeledFit {
  std::string instance_id;
  std::string calibration_id;
  OlsFit fit;
};

/// Appendix-style OLS results CSV. Row p=1 carries the intercept.
void write_ols_csv(const std::filesystem::path& path, std::span<const LabeledFit> fits);

}  // namespace embaudit
