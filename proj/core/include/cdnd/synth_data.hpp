#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cdnd/geometry.hpp"
#include "cdnd/rng.hpp"

namespace cdnd {

enum class ShapeClass { kSphere, kBox, kCylinder, kCone };

std::string shape_class_name(ShapeClass c);

struct ShapeSpec {
  ShapeClass cls = ShapeClass::kSphere;
  int points = 128;
  // Per-parameter aspect jitter (ignored by the sphere, which must stay a
  // sphere) and a global scale jitter (absorbed by normalization).
  double aspect_lo = 0.7;
  double aspect_hi = 1.3;
  double scale_lo = 0.8;
  double scale_hi = 1.2;
};

enum class ShiftRotation { kNone, kZRandom };

/// Clean-to-scan style corruption: per-point noise, half-space occlusion with
/// resampling back to n points, view-dependent density bias, optional random
/// z rotation.
struct DomainShiftConfig {
  double jitter_sigma = 0.0;
  double crop_fraction = 0.0;  // in [0, 0.5]
  double density_bias = 0.0;   // resampling weight exponent; 0 disables
  ShiftRotation rotation = ShiftRotation::kNone;

  void validate() const;
};

struct ManifestEntry {
  std::string path;  // relative to the dataset directory
  int label = 0;
  std::string domain;  // "clean" | "shifted"
  std::string split;   // "train" | "val" | "test"
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::pair<std::string, std::string>> config_echo;  // key=value header
};

/// n surface points, centered at the origin and scaled to unit max norm.
PointCloud generate_shape(const ShapeSpec& spec, Rng& rng);

PointCloud apply_domain_shift(const PointCloud& cloud, const DomainShiftConfig& config, Rng& rng);

/// Writes the two-domain benchmark (clean + shifted) with balanced classes
/// and a 70/15/15 split, plus manifest.tsv. Deterministic in (specs, shift,
/// per_class, seed).
DatasetManifest generate_dataset(const std::vector<ShapeSpec>& shapes,
                                 const DomainShiftConfig& shift, int per_class,
                                 std::uint64_t seed, const std::filesystem::path& out_dir);

DatasetManifest read_manifest(const std::filesystem::path& manifest_path);
void write_manifest(const std::filesystem::path& manifest_path, const DatasetManifest& manifest);

}  // namespace cdnd
