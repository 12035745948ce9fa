#pragma once

#include <span>
#include <string>
#include <vector>

#include "cdnd/rng.hpp"
#include "cdnd/tensor.hpp"

namespace cdnd {

/// Finite metric space: point ids 0..size-1 with a validated distance table
/// (symmetry, zero diagonal, positivity off the diagonal, triangle
/// inequality — all checked at construction).
class FiniteMetric {
 public:
  explicit FiniteMetric(Tensor distances);

  static FiniteMetric from_line(std::span<const double> coordinates);
  static FiniteMetric from_coordinates(const std::vector<std::vector<double>>& points);
  /// Union of two spaces with a constant cross-block distance; `cross` must be
  /// at least half the larger diameter for the triangle inequality to survive.
  static FiniteMetric two_block(const FiniteMetric& a, const FiniteMetric& b, double cross);

  int size() const { return static_cast<int>(table_.rows()); }
  double distance(int i, int j) const {
    return table_.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  }

 private:
  Tensor table_;
};

/// Finite-support probability measure over point ids of a metric space.
/// Plain aggregate: corrupt instances are constructible on purpose so that
/// the axiom checker can flag them.
struct DiscreteMeasure {
  std::vector<int> support;
  std::vector<double> weights;

  void validate() const;  // distinct support, weights >= 0 summing to 1 (1e-12)
  static DiscreteMeasure dirac(int point);
  static DiscreteMeasure uniform(std::vector<int> support);
  /// nu(A) for an event given as a set of point ids.
  double measure_of(std::span<const int> event) const;
};

/// Scaled concatenation nu3 = p1*nu1 + p2*nu2 on disjoint supports.
/// Overlapping supports are an error.
DiscreteMeasure mixture(const DiscreteMeasure& nu1, const DiscreteMeasure& nu2, double p1,
                        double p2);

struct AxiomReport {
  bool pass = true;
  double worst_deviation = 0.0;
  std::string detail;
};

/// Non-negativity, normalization (1e-12) and sigma-additivity over `trials`
/// random finite partitions of the support.
AxiomReport check_probability_axioms(const DiscreteMeasure& nu, int trials, Rng& rng);

/// Exact 1-Wasserstein distance between uniform measures on equal-size
/// supports, solved as an assignment problem (mean matched cost).
double wasserstein1_exact(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                          const FiniteMetric& metric);

/// W1 symmetry, identity and the triangle inequality over all pairs/triples
/// of the given measures, tolerance 1e-9.
AxiomReport metric_axioms_check(const FiniteMetric& metric,
                                std::span<const DiscreteMeasure> samples);

struct NormBoundsReport {
  bool pass = true;
  double worst_deviation = 0.0;
  double frobenius = 0.0;
  double nuclear = 0.0;
};

/// |P|_F <= |P|_* <= sqrt(min(b,K))*|P|_F within 1e-8, plus I_a + I_e = b
/// when P is row-stochastic.
NormBoundsReport nuclear_frobenius_bounds(const Tensor& p);

/// Minimum-cost perfect matching on a square cost matrix (shortest augmenting
/// path / Hungarian method). Exposed for reuse by the verification suites.
double solve_assignment(const std::vector<std::vector<double>>& cost);

}  // namespace cdnd
