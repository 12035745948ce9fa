#include "cdnd/geometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cdnd/errors.hpp"

namespace cdnd {

Vec3 PointCloud::centroid() const {
  Vec3 c;
  for (const Vec3& p : points) c = c + p;
  const double inv = points.empty() ? 0.0 : 1.0 / static_cast<double>(points.size());
  return c * inv;
}

int DeformConfig::resolved_m(std::size_t n) const {
  if (m >= 0) return m;
  const int per_region = static_cast<int>((n + static_cast<std::size_t>(k) - 1) /
                                          static_cast<std::size_t>(k));
  return per_region - 1;
}

void DeformConfig::validate(std::size_t n) const {
  if (k < 1 || static_cast<std::size_t>(k) > n)
    throw std::invalid_argument("DeformConfig: k out of range");
  if (n_deform < 1 || n_deform > k)
    throw std::invalid_argument("DeformConfig: n_deform out of range");
  const int rm = resolved_m(n);
  if (rm < 0 || static_cast<std::size_t>(rm) + 1 > n)
    throw std::invalid_argument("DeformConfig: m out of range");
  if (!(variance > 0.0)) throw std::invalid_argument("DeformConfig: variance must be positive");
  if (curvature_neighborhood < 3 || static_cast<std::size_t>(curvature_neighborhood) > n)
    throw std::invalid_argument("DeformConfig: curvature_neighborhood out of range");
}

std::vector<int> farthest_point_sample(const PointCloud& cloud, int k, FpsStart start, Rng& rng) {
  const std::size_t n = cloud.size();
  if (k < 1 || static_cast<std::size_t>(k) > n)
    throw std::invalid_argument("farthest_point_sample: k out of range");

  std::vector<int> chosen;
  chosen.reserve(static_cast<std::size_t>(k));
  const int first = start == FpsStart::kIndexZero
                        ? 0
                        : static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n)));
  chosen.push_back(first);

  std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
  min_dist[static_cast<std::size_t>(first)] = -1.0;  // chosen points never re-selected
  int last = first;
  while (chosen.size() < static_cast<std::size_t>(k)) {
    const Vec3& anchor = cloud.points[static_cast<std::size_t>(last)];
    int best = -1;
    double best_dist = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = squared_distance(cloud.points[i], anchor);
      if (d < min_dist[i]) min_dist[i] = d;
      if (min_dist[i] > best_dist) {
        best_dist = min_dist[i];
        best = static_cast<int>(i);
      }
    }
    chosen.push_back(best);
    min_dist[static_cast<std::size_t>(best)] = -1.0;  // never re-selected
    last = best;
  }
  return chosen;
}

std::vector<int> k_nearest(const PointCloud& cloud, int query_index, int m) {
  const std::size_t n = cloud.size();
  if (query_index < 0 || static_cast<std::size_t>(query_index) >= n)
    throw std::invalid_argument("k_nearest: query index out of range");
  if (m < 0 || static_cast<std::size_t>(m) >= n)
    throw std::invalid_argument("k_nearest: m must be < point count");

  const Vec3& q = cloud.points[static_cast<std::size_t>(query_index)];
  std::vector<std::pair<double, int>> dist;
  dist.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (static_cast<int>(i) == query_index) continue;
    dist.emplace_back(squared_distance(cloud.points[i], q), static_cast<int>(i));
  }
  std::partial_sort(dist.begin(), dist.begin() + m, dist.end());
  std::vector<int> out(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) out[static_cast<std::size_t>(i)] = dist[static_cast<std::size_t>(i)].second;
  return out;
}

CurvatureField pca_curvature(const PointCloud& cloud, int neighborhood_size) {
  const std::size_t n = cloud.size();
  if (neighborhood_size < 3) throw std::invalid_argument("pca_curvature: neighborhood_size < 3");
  if (static_cast<std::size_t>(neighborhood_size) > n)
    throw std::invalid_argument("pca_curvature: neighborhood_size > point count");

  CurvatureField field;
  field.neighborhood_size = neighborhood_size;
  field.curvatures.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<int> nbhd = k_nearest(cloud, static_cast<int>(i), neighborhood_size - 1);
    nbhd.push_back(static_cast<int>(i));

    Vec3 mean;
    for (int idx : nbhd) mean = mean + cloud.points[static_cast<std::size_t>(idx)];
    mean = mean * (1.0 / static_cast<double>(nbhd.size()));

    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int idx : nbhd) {
      const Vec3 d = cloud.points[static_cast<std::size_t>(idx)] - mean;
      const Eigen::Vector3d v(d.x, d.y, d.z);
      cov += v * v.transpose();
    }
    cov /= static_cast<double>(nbhd.size());

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
    Eigen::Vector3d lambda = solver.eigenvalues();  // ascending
    // Covariance is PSD; clamp the tiny negatives rounding can introduce.
    for (int e = 0; e < 3; ++e) lambda[e] = std::max(lambda[e], 0.0);
    const double total = lambda.sum();
    field.curvatures[i] = total < 1e-12 ? 0.0 : lambda[0] / total;
  }
  return field;
}

RegionSet partition_regions(const PointCloud& cloud, const DeformConfig& config, Rng& rng) {
  config.validate(cloud.size());
  const int m = config.resolved_m(cloud.size());
  const std::vector<int> centers = farthest_point_sample(cloud, config.k, config.fps_start, rng);

  RegionSet set;
  set.regions.reserve(centers.size());
  for (int center : centers) {
    Region region;
    region.center_index = center;
    region.member_indices = k_nearest(cloud, center, m);
    region.member_indices.push_back(center);
    std::sort(region.member_indices.begin(), region.member_indices.end());
    set.regions.push_back(std::move(region));
  }
  return set;
}

DiversityScore diversity_score(const Region& region, const CurvatureField& field,
                               DiversityStatistic statistic) {
  constexpr double kGuard = 1e-10;
  std::vector<double> c;
  c.reserve(region.member_indices.size());
  for (int idx : region.member_indices) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= field.curvatures.size())
      throw std::invalid_argument("diversity_score: region index outside curvature field");
    c.push_back(field.curvatures[static_cast<std::size_t>(idx)]);
  }

  DiversityScore score;
  score.statistic = statistic;
  if (statistic == DiversityStatistic::kEntropy) {
    const auto [lo_it, hi_it] = std::minmax_element(c.begin(), c.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    double h = 0.0;
    for (double ci : c) {
      const double cn = (ci - lo) / (hi - lo + kGuard);
      if (cn != 0.0) h -= cn * std::log(cn + kGuard);
    }
    score.score = h;
  } else {
    const double mean = std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(c.size());
    double var = 0.0;
    for (double ci : c) var += (ci - mean) * (ci - mean);
    score.score = std::sqrt(var / static_cast<double>(c.size()));
  }
  return score;
}

std::vector<Region> select_regions(const RegionSet& set, const std::vector<DiversityScore>& scores,
                                   int n_deform, DeformMode mode, Rng& rng) {
  const std::size_t k = set.size();
  if (scores.size() != k) throw std::invalid_argument("select_regions: scores must cover all regions");
  if (n_deform < 1 || static_cast<std::size_t>(n_deform) > k)
    throw std::invalid_argument("select_regions: n_deform out of range");

  std::vector<int> picked;
  if (mode == DeformMode::kRandom) {
    picked = rng.sample_without_replacement(static_cast<int>(k), n_deform);
  } else {
    std::vector<int> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      const double sa = scores[static_cast<std::size_t>(a)].score;
      const double sb = scores[static_cast<std::size_t>(b)].score;
      if (sa != sb) return mode == DeformMode::kLowest ? sa < sb : sa > sb;
      return a < b;
    });
    picked.assign(order.begin(), order.begin() + n_deform);
  }

  std::vector<Region> out;
  out.reserve(picked.size());
  for (int idx : picked) out.push_back(set.regions[static_cast<std::size_t>(idx)]);
  return out;
}

DeformedCloud deform(const PointCloud& cloud, const std::vector<Region>& selected, double variance,
                     Rng& rng) {
  if (selected.empty()) throw std::invalid_argument("deform: empty region selection");
  if (!(variance > 0.0)) throw std::invalid_argument("deform: variance must be positive");

  const std::size_t n = cloud.size();
  // First containing region (by selection order) decides each point's Gaussian.
  std::vector<int> owner(n, -1);
  for (std::size_t r = 0; r < selected.size(); ++r) {
    for (int idx : selected[r].member_indices) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= n)
        throw std::invalid_argument("deform: region index outside cloud");
      if (owner[static_cast<std::size_t>(idx)] < 0)
        owner[static_cast<std::size_t>(idx)] = static_cast<int>(r);
    }
  }

  std::vector<Vec3> centroids(selected.size());
  for (std::size_t r = 0; r < selected.size(); ++r) {
    Vec3 c;
    for (int idx : selected[r].member_indices) c = c + cloud.points[static_cast<std::size_t>(idx)];
    centroids[r] = c * (1.0 / static_cast<double>(selected[r].member_indices.size()));
  }

  DeformedCloud out;
  out.points = cloud.points;
  const double stddev = std::sqrt(variance);
  for (std::size_t i = 0; i < n; ++i) {
    if (owner[i] < 0) continue;
    const Vec3& mean = centroids[static_cast<std::size_t>(owner[i])];
    out.deformed_indices.push_back(static_cast<int>(i));
    out.original_region_points.push_back(cloud.points[i]);
    out.points[i] = {rng.normal(mean.x, stddev), rng.normal(mean.y, stddev),
                     rng.normal(mean.z, stddev)};
  }
  return out;
}

DeformedCloud deform_cloud(const PointCloud& cloud, const DeformConfig& config, Rng& rng) {
  config.validate(cloud.size());
  const CurvatureField field = pca_curvature(cloud, config.curvature_neighborhood);
  const RegionSet set = partition_regions(cloud, config, rng);
  std::vector<DiversityScore> scores;
  scores.reserve(set.size());
  for (std::size_t r = 0; r < set.size(); ++r) {
    DiversityScore s = diversity_score(set.regions[r], field, config.statistic);
    s.region_index = static_cast<int>(r);
    scores.push_back(s);
  }
  const std::vector<Region> selected =
      select_regions(set, scores, config.n_deform, config.mode, rng);
  return deform(cloud, selected, config.variance, rng);
}

std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

PointCloud read_cloud(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open cloud file: " + path.string());
  PointCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Vec3 p;
    if (!(ls >> p.x >> p.y >> p.z)) {
      throw IoError("parse error in " + path.string() + " at line " + std::to_string(line_no));
    }
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw IoError("non-finite coordinate in " + path.string() + " at line " +
                    std::to_string(line_no));
    }
    cloud.points.push_back(p);
  }
  if (cloud.points.empty()) throw IoError("empty cloud file: " + path.string());
  return cloud;
}

void write_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary);  // binary: LF endings everywhere
  if (!out) throw IoError("cannot write cloud file: " + path.string());
  for (const Vec3& p : cloud.points) {
    out << format_double(p.x) << ' ' << format_double(p.y) << ' ' << format_double(p.z) << '\n';
  }
  if (!out) throw IoError("write failure: " + path.string());
}

}  // namespace cdnd
