#include "cdnd/ot_theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "cdnd/losses.hpp"

namespace cdnd {

namespace {

constexpr double kWeightTol = 1e-12;

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace

FiniteMetric::FiniteMetric(Tensor distances) : table_(std::move(distances)) {
  require(table_.rank() == 2 && table_.rows() == table_.cols() && table_.rows() >= 1,
          "FiniteMetric: square table required");
  const std::size_t n = table_.rows();
  for (std::size_t i = 0; i < n; ++i) {
    require(table_.at(i, i) == 0.0, "FiniteMetric: nonzero diagonal");
    for (std::size_t j = i + 1; j < n; ++j) {
      require(table_.at(i, j) == table_.at(j, i), "FiniteMetric: asymmetric table");
      require(table_.at(i, j) > 0.0, "FiniteMetric: distinct points need positive distance");
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k)
        require(table_.at(i, j) <= table_.at(i, k) + table_.at(k, j) + 1e-12,
                "FiniteMetric: triangle inequality violated");
}

FiniteMetric FiniteMetric::from_line(std::span<const double> coordinates) {
  const std::size_t n = coordinates.size();
  Tensor table({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) table.at(i, j) = std::abs(coordinates[i] - coordinates[j]);
  return FiniteMetric(std::move(table));
}

FiniteMetric FiniteMetric::from_coordinates(const std::vector<std::vector<double>>& points) {
  const std::size_t n = points.size();
  require(n >= 1, "FiniteMetric: empty point set");
  Tensor table({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    require(points[i].size() == points[0].size(), "FiniteMetric: mixed dimensions");
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t d = 0; d < points[i].size(); ++d) {
        const double diff = points[i][d] - points[j][d];
        acc += diff * diff;
      }
      table.at(i, j) = std::sqrt(acc);
    }
  }
  return FiniteMetric(std::move(table));
}

FiniteMetric FiniteMetric::two_block(const FiniteMetric& a, const FiniteMetric& b, double cross) {
  const std::size_t na = static_cast<std::size_t>(a.size());
  const std::size_t nb = static_cast<std::size_t>(b.size());
  Tensor table({na + nb, na + nb});
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < na; ++j)
      table.at(i, j) = a.distance(static_cast<int>(i), static_cast<int>(j));
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = 0; j < nb; ++j)
      table.at(na + i, na + j) = b.distance(static_cast<int>(i), static_cast<int>(j));
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j) {
      table.at(i, na + j) = cross;
      table.at(na + j, i) = cross;
    }
  return FiniteMetric(std::move(table));
}

void DiscreteMeasure::validate() const {
  require(!support.empty(), "DiscreteMeasure: empty support");
  require(support.size() == weights.size(), "DiscreteMeasure: support/weight size mismatch");
  std::set<int> distinct(support.begin(), support.end());
  require(distinct.size() == support.size(), "DiscreteMeasure: support points must be distinct");
  double total = 0.0;
  for (double w : weights) {
    require(w >= 0.0, "DiscreteMeasure: negative weight");
    total += w;
  }
  require(std::abs(total - 1.0) <= kWeightTol, "DiscreteMeasure: weights must sum to 1");
}

DiscreteMeasure DiscreteMeasure::dirac(int point) { return DiscreteMeasure{{point}, {1.0}}; }

DiscreteMeasure DiscreteMeasure::uniform(std::vector<int> support) {
  DiscreteMeasure nu;
  nu.weights.assign(support.size(), 1.0 / static_cast<double>(support.size()));
  nu.support = std::move(support);
  return nu;
}

double DiscreteMeasure::measure_of(std::span<const int> event) const {
  double total = 0.0;
  for (int point : event) {
    for (std::size_t i = 0; i < support.size(); ++i) {
      if (support[i] == point) {
        total += weights[i];
        break;
      }
    }
  }
  return total;
}

DiscreteMeasure mixture(const DiscreteMeasure& nu1, const DiscreteMeasure& nu2, double p1,
                        double p2) {
  nu1.validate();
  nu2.validate();
  require(p1 >= 0.0 && p2 >= 0.0, "mixture: negative mixing weight");
  require(std::abs(p1 + p2 - 1.0) <= kWeightTol, "mixture: p1 + p2 must equal 1");
  std::set<int> s1(nu1.support.begin(), nu1.support.end());
  for (int p : nu2.support)
    require(s1.find(p) == s1.end(), "mixture: sample spaces must be disjoint");

  DiscreteMeasure out;
  out.support = nu1.support;
  out.support.insert(out.support.end(), nu2.support.begin(), nu2.support.end());
  out.weights.reserve(out.support.size());
  for (double w : nu1.weights) out.weights.push_back(p1 * w);
  for (double w : nu2.weights) out.weights.push_back(p2 * w);
  return out;
}

AxiomReport check_probability_axioms(const DiscreteMeasure& nu, int trials, Rng& rng) {
  AxiomReport report;
  const auto record = [&](double deviation, const std::string& what) {
    if (deviation > report.worst_deviation) {
      report.worst_deviation = deviation;
      report.detail = what;
    }
  };

  for (double w : nu.weights) {
    if (w < 0.0) {
      report.pass = false;
      record(-w, "non-negativity violated");
    }
  }

  double total = 0.0;
  for (double w : nu.weights) total += w;
  const double norm_dev = std::abs(total - 1.0);
  record(norm_dev, "normalization deviation");
  if (norm_dev > kWeightTol) report.pass = false;

  // Sigma-additivity over random partitions: the atoms are split into g
  // disjoint events whose measures must add back to nu(Omega).
  const std::size_t atoms = nu.support.size();
  for (int trial = 0; trial < trials; ++trial) {
    const int groups = 2 + static_cast<int>(rng.uniform_index(4));
    std::vector<std::vector<int>> events(static_cast<std::size_t>(groups));
    for (std::size_t i = 0; i < atoms; ++i) {
      events[rng.uniform_index(static_cast<std::uint64_t>(groups))].push_back(nu.support[i]);
    }
    double sum_of_parts = 0.0;
    for (const std::vector<int>& event : events) sum_of_parts += nu.measure_of(event);
    const double dev = std::abs(sum_of_parts - total);
    record(dev, "sigma-additivity deviation");
    if (dev > kWeightTol) report.pass = false;
  }
  return report;
}

double solve_assignment(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  require(n >= 1, "solve_assignment: empty cost matrix");
  for (const auto& row : cost)
    require(row.size() == n, "solve_assignment: non-square cost matrix");

  // Shortest augmenting path with potentials (1-indexed internals).
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    std::vector<double> min_slack(n + 1, kInf);
    std::vector<std::size_t> prev(n + 1, 0);
    std::vector<bool> used(n + 1, false);
    std::size_t j0 = 0;
    match[0] = i;
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double slack = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (slack < min_slack[j]) {
          min_slack[j] = slack;
          prev[j] = j0;
        }
        if (min_slack[j] < delta) {
          delta = min_slack[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          min_slack[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = prev[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j) total += cost[match[j] - 1][j - 1];
  return total;
}

double wasserstein1_exact(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                          const FiniteMetric& metric) {
  mu.validate();
  nu.validate();
  require(mu.support.size() == nu.support.size(),
          "wasserstein1_exact: supports must have equal size");
  const std::size_t s = mu.support.size();
  const double uniform = 1.0 / static_cast<double>(s);
  for (double w : mu.weights)
    require(std::abs(w - uniform) <= 1e-12, "wasserstein1_exact: mu must be uniform");
  for (double w : nu.weights)
    require(std::abs(w - uniform) <= 1e-12, "wasserstein1_exact: nu must be uniform");
  for (int p : mu.support)
    require(p >= 0 && p < metric.size(), "wasserstein1_exact: mu support outside metric");
  for (int p : nu.support)
    require(p >= 0 && p < metric.size(), "wasserstein1_exact: nu support outside metric");

  std::vector<std::vector<double>> cost(s, std::vector<double>(s, 0.0));
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j) cost[i][j] = metric.distance(mu.support[i], nu.support[j]);
  return solve_assignment(cost) * uniform;
}

AxiomReport metric_axioms_check(const FiniteMetric& metric,
                                std::span<const DiscreteMeasure> samples) {
  AxiomReport report;
  const auto record = [&](double deviation, const std::string& what) {
    if (deviation > report.worst_deviation) {
      report.worst_deviation = deviation;
      report.detail = what;
    }
    if (deviation > 1e-9) report.pass = false;
  };

  const std::size_t n = samples.size();
  std::vector<std::vector<double>> w1(n, std::vector<double>(n, 0.0));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) w1[a][b] = wasserstein1_exact(samples[a], samples[b], metric);
  }
  for (std::size_t a = 0; a < n; ++a) {
    record(std::abs(w1[a][a]), "W1(mu, mu) != 0");
    for (std::size_t b = a + 1; b < n; ++b)
      record(std::abs(w1[a][b] - w1[b][a]), "W1 symmetry violated");
  }
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t c = 0; c < n; ++c)
        record(std::max(0.0, w1[a][c] - (w1[a][b] + w1[b][c])), "triangle inequality violated");
  return report;
}

NormBoundsReport nuclear_frobenius_bounds(const Tensor& p) {
  NormBoundsReport report;
  report.frobenius = frobenius_norm(p);
  report.nuclear = nuclear_norm_value(p);
  const double upper =
      std::sqrt(static_cast<double>(std::min(p.rows(), p.cols()))) * report.frobenius;

  const double lower_violation = std::max(0.0, report.frobenius - report.nuclear);
  const double upper_violation = std::max(0.0, report.nuclear - upper);
  report.worst_deviation = std::max(lower_violation, upper_violation);
  if (report.worst_deviation > 1e-8) report.pass = false;

  if (is_row_stochastic(p)) {
    const double identity_dev = std::abs(intra_class_correlation(p) + inter_class_correlation(p) -
                                         static_cast<double>(p.rows()));
    report.worst_deviation = std::max(report.worst_deviation, identity_dev);
    if (identity_dev > 1e-9) report.pass = false;
  }
  return report;
}

}  // namespace cdnd
