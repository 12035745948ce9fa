#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "cdnd/rng.hpp"

namespace cdnd {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm2() const { return dot(*this); }
  double norm() const { return std::sqrt(norm2()); }
};

inline double squared_distance(const Vec3& a, const Vec3& b) { return (a - b).norm2(); }

/// n x 3 coordinate set; the unit of all geometry.
struct PointCloud {
  std::vector<Vec3> points;

  std::size_t size() const { return points.size(); }
  Vec3 centroid() const;
};

/// Per-point curvature c = lambda_min / sum(lambda_i) of the neighborhood
/// covariance; each value lies in [0, 1/3].
struct CurvatureField {
  std::vector<double> curvatures;
  int neighborhood_size = 0;
};

/// A center point plus its m nearest neighbors (center included in members).
struct Region {
  int center_index = 0;
  std::vector<int> member_indices;
};

struct RegionSet {
  std::vector<Region> regions;
  std::size_t size() const { return regions.size(); }
};

enum class DiversityStatistic { kEntropy, kStd };

struct DiversityScore {
  int region_index = 0;
  double score = 0.0;
  DiversityStatistic statistic = DiversityStatistic::kEntropy;
};

enum class DeformMode { kLowest, kHighest, kRandom };
enum class FpsStart { kIndexZero, kSeededRandom };

struct DeformConfig {
  int k = 8;             // region count
  int m = -1;            // neighbors per region; -1 resolves to ceil(n/k) - 1
  int n_deform = 1;      // regions to deform
  DeformMode mode = DeformMode::kLowest;
  DiversityStatistic statistic = DiversityStatistic::kEntropy;
  double variance = 0.001;
  int curvature_neighborhood = 20;  // points per PCA neighborhood, self included
  FpsStart fps_start = FpsStart::kIndexZero;

  int resolved_m(std::size_t n) const;
  void validate(std::size_t n) const;
};

/// A deformed cloud together with the replaced index set I and the original
/// coordinates at I (the reconstruction target).
struct DeformedCloud {
  std::vector<Vec3> points;
  std::vector<int> deformed_indices;        // sorted, deduplicated
  std::vector<Vec3> original_region_points; // originals at deformed_indices
  std::string source_cloud_id;

  std::size_t size() const { return points.size(); }
};

/// Greedy farthest point sampling: each new index maximizes the minimum
/// distance to the chosen set; ties pick the lowest index.
std::vector<int> farthest_point_sample(const PointCloud& cloud, int k, FpsStart start, Rng& rng);

/// Indices of the m nearest points to cloud[query_index] (query excluded),
/// by Euclidean distance, ties to the lowest index.
std::vector<int> k_nearest(const PointCloud& cloud, int query_index, int m);

CurvatureField pca_curvature(const PointCloud& cloud, int neighborhood_size);

/// FPS centers plus kNN membership. Regions may overlap.
RegionSet partition_regions(const PointCloud& cloud, const DeformConfig& config, Rng& rng);

DiversityScore diversity_score(const Region& region, const CurvatureField& field,
                               DiversityStatistic statistic);

/// The n_deform regions with extremal scores for the mode (score ties to the
/// lowest region index); random mode samples uniformly without replacement.
std::vector<Region> select_regions(const RegionSet& set, const std::vector<DiversityScore>& scores,
                                   int n_deform, DeformMode mode, Rng& rng);

/// Replaces every point of the selected regions with draws from an isotropic
/// Gaussian centered at the (original-coordinates) centroid of the first
/// region containing it, per-axis variance `variance`.
DeformedCloud deform(const PointCloud& cloud, const std::vector<Region>& selected, double variance,
                     Rng& rng);

/// Full pipeline: curvature, FPS+kNN regions, diversity scoring, selection,
/// Gaussian replacement.
DeformedCloud deform_cloud(const PointCloud& cloud, const DeformConfig& config, Rng& rng);

/// Plain-text cloud format: one `x y z` triple per line, LF endings; lines
/// starting with '#' are comments. Throws IoError with the line number on
/// parse failure.
PointCloud read_cloud(const std::filesystem::path& path);
void write_cloud(const std::filesystem::path& path, const PointCloud& cloud);

/// Shortest round-trip decimal form of v (used by every text emitter so that
/// reruns are byte-identical).
std::string format_double(double v);

}  // namespace cdnd
