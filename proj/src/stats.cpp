#include "embaudit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace embaudit {
namespace {

// Continued-fraction core of the incomplete beta function (modified
// Lentz algorithm).
double incomplete_beta_cf(double a, double b, double x) {
  constexpr int kMaxIterations = 300;
  constexpr double kEpsilon = 3e-15;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEpsilon) return h;
  }
  throw Error("regularized_incomplete_beta: continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0)
    throw Error("regularized_incomplete_beta: parameters must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * incomplete_beta_cf(a, b, x) / a;
  return 1.0 - front * incomplete_beta_cf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double dof) {
  if (dof <= 0.0) throw Error("student_t_two_sided_p: dof must be positive");
  if (std::isinf(t)) return 0.0;
  if (t == 0.0) return 1.0;
  // P(|T| > t) = I_{v/(v+t^2)}(v/2, 1/2)
  const double x = dof / (dof + t * t);
  return regularized_incomplete_beta(dof / 2.0, 0.5, x);
}

Matrix cluster_robust_covariance(const Matrix& design, const Vector& residuals,
                                 std::span<const int> cluster_labels) {
  const int observations = static_cast<int>(design.rows());
  const int parameters = static_cast<int>(design.cols());
  if (residuals.size() != observations ||
      static_cast<int>(cluster_labels.size()) != observations)
    throw Error("cluster_robust_covariance: size mismatch");

  const Matrix xtx = design.transpose() * design;
  Eigen::FullPivLU<Matrix> lu(xtx);
  if (!lu.isInvertible())
    throw Error("cluster_robust_covariance: singular X'X");
  const Matrix bread = lu.inverse();

  // Group score sums per cluster.
  std::map<int, Vector> scores;
  for (int i = 0; i < observations; ++i) {
    auto [it, inserted] = scores.try_emplace(cluster_labels[i], Vector::Zero(parameters));
    it->second += design.row(i).transpose() * residuals(i);
  }
  const int clusters = static_cast<int>(scores.size());
  if (clusters < 2) throw Error("cluster_robust_covariance: need at least 2 clusters");
  if (observations <= parameters)
    throw Error("cluster_robust_covariance: N must exceed K");

  Matrix meat = Matrix::Zero(parameters, parameters);
  for (const auto& [label, score] : scores) meat += score * score.transpose();

  const double scale = (static_cast<double>(clusters) / (clusters - 1)) *
                       (static_cast<double>(observations - 1) / (observations - parameters));
  return scale * bread * meat * bread;
}

OlsFit fit_position_ols(std::span<const SimilarityRecord> records) {
  if (records.empty()) throw Error("fit_position_ols: no records");

  const SimilarityRecord::Kind kind = records.front().kind;
  int n = 0;
  std::set<int> positions_seen;
  for (const auto& record : records) {
    if (record.kind != kind)
      throw Error("fit_position_ols: mixed record kinds in one fit");
    if (record.position < 1)
      throw Error("fit_position_ols: positions are 1-based");
    n = std::max(n, record.position);
    positions_seen.insert(record.position);
  }
  if (static_cast<int>(positions_seen.size()) < 2)
    throw Error("fit_position_ols: records span fewer than 2 positions");
  for (int p = 1; p <= n; ++p)
    if (!positions_seen.count(p))
      throw Error("fit_position_ols: position " + std::to_string(p) +
                  " absent; design would be rank-deficient");

  const int observations = static_cast<int>(records.size());
  const int parameters = n;  // intercept + (n-1) dummies

  Matrix design = Matrix::Zero(observations, parameters);
  Vector response(observations);
  std::vector<int> cluster_labels(observations);
  std::map<std::string, int> cluster_index;
  for (int i = 0; i < observations; ++i) {
    const auto& record = records[i];
    design(i, 0) = 1.0;
    if (record.position >= 2) design(i, record.position - 1) = 1.0;
    response(i) = record.value;
    auto [it, inserted] =
        cluster_index.try_emplace(record.segment_set_id,
                                  static_cast<int>(cluster_index.size()));
    cluster_labels[i] = it->second;
  }
  if (cluster_index.size() < 2)
    throw Error("fit_position_ols: need records from at least 2 segment sets");

  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < parameters) throw Error("fit_position_ols: rank-deficient design");

  OlsFit fit;
  fit.kind = kind;
  fit.n_positions = n;
  fit.coefficients = qr.solve(response);
  const Vector residuals = response - design * fit.coefficients;
  fit.covariance = cluster_robust_covariance(design, residuals, cluster_labels);
  fit.cluster_count = static_cast<int>(cluster_index.size());
  fit.observation_count = observations;

  fit.standard_errors = fit.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  fit.t_statistics.resize(parameters);
  fit.p_values.resize(parameters);
  const double dof = fit.cluster_count - 1;
  // Coefficient and SE both at rounding-noise level means the estimate
  // sits exactly on the null (e.g. an order-invariant encoder, or a
  // constant response); 0/0 must not masquerade as an infinite t.
  constexpr double kNumericalZero = 1e-10;
  for (int k = 0; k < parameters; ++k) {
    const double beta = fit.coefficients(k);
    const double se = fit.standard_errors(k);
    double t;
    if (std::abs(beta) < kNumericalZero && se < kNumericalZero) {
      t = 0.0;
    } else if (se > 0.0) {
      t = beta / se;
    } else {
      t = std::copysign(std::numeric_limits<double>::infinity(), beta);
    }
    fit.t_statistics(k) = t;
    fit.p_values(k) = student_t_two_sided_p(t, dof);
  }
  return fit;
}

bool FairnessDecision::all_retained() const {
  return std::none_of(reject.begin(), reject.end(), [](bool r) { return r; });
}

FairnessDecision test_fairness(const OlsFit& fit, double alpha) {
  if (fit.n_positions < 2) throw Error("test_fairness: fit has no position coefficients");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error("test_fairness: alpha must be in (0,1]");
  FairnessDecision decision;
  decision.alpha = alpha;
  for (int p = 2; p <= fit.n_positions; ++p) {
    decision.positions.push_back(p);
    decision.reject.push_back(fit.p_value(p) < alpha);
  }
  return decision;
}

void write_ols_csv(const std::filesystem::path& path, std::span<const LabeledFit> fits) {
  std::ofstream out(path);
  if (!out) throw Error("write_ols_csv: cannot open '" + path.string() + "'");
  out << "instance_id,kind,p,beta,se,t,p_value,clusters,observations,calibration_id\n";
  out.precision(12);
  for (const auto& labeled : fits) {
    const OlsFit& fit = labeled.fit;
    for (int p = 1; p <= fit.n_positions; ++p) {
      out << csv_escape(labeled.instance_id) << ',' << to_string(fit.kind) << ',' << p
          << ',' << fit.coefficients(p - 1) << ',' << fit.standard_errors(p - 1) << ','
          << fit.t_statistics(p - 1) << ',' << fit.p_values(p - 1) << ','
          << fit.cluster_count << ',' << fit.observation_count << ','
          << csv_escape(labeled.calibration_id) << '\n';
    }
  }
}

}  // namespace embaudit
