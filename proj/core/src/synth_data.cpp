#include "cdnd/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cdnd/errors.hpp"

namespace cdnd {

namespace {

Vec3 random_unit(Rng& rng) {
  while (true) {
    const Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    const double n = v.norm();
    if (n > 1e-9) return v * (1.0 / n);
  }
}

// Shapes are generated centered at the origin by construction; normalization
// therefore only rescales so the farthest point sits on the unit sphere
// (an empirical re-centering would push sphere samples off their surface).
void normalize_scale(PointCloud& cloud) {
  double max_norm = 0.0;
  for (const Vec3& p : cloud.points) max_norm = std::max(max_norm, p.norm());
  if (max_norm <= 0.0) return;
  const double inv = 1.0 / max_norm;
  for (Vec3& p : cloud.points) p = p * inv;
}

PointCloud sample_sphere(int n, Rng& rng) {
  PointCloud cloud;
  cloud.points.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) cloud.points.push_back(random_unit(rng));
  return cloud;
}

PointCloud sample_box(int n, double ax, double ay, double az, Rng& rng) {
  // Face areas for the pairs normal to x, y, z.
  const double area_x = ay * az;
  const double area_y = ax * az;
  const double area_z = ax * ay;
  const double total = area_x + area_y + area_z;
  PointCloud cloud;
  cloud.points.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double pick = rng.uniform() * total;
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double u = rng.uniform(-1.0, 1.0);
    const double v = rng.uniform(-1.0, 1.0);
    Vec3 p;
    if (pick < area_x) {
      p = {sign * ax, u * ay, v * az};
    } else if (pick < area_x + area_y) {
      p = {u * ax, sign * ay, v * az};
    } else {
      p = {u * ax, v * ay, sign * az};
    }
    cloud.points.push_back(p);
  }
  return cloud;
}

PointCloud sample_cylinder(int n, double radius, double half_height, Rng& rng) {
  const double lateral = 2.0 * std::numbers::pi * radius * 2.0 * half_height;
  const double cap = std::numbers::pi * radius * radius;
  const double total = lateral + 2.0 * cap;
  PointCloud cloud;
  cloud.points.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double pick = rng.uniform() * total;
    const double theta = rng.uniform() * 2.0 * std::numbers::pi;
    if (pick < lateral) {
      cloud.points.push_back(
          {radius * std::cos(theta), radius * std::sin(theta), rng.uniform(-half_height, half_height)});
    } else {
      const double r = radius * std::sqrt(rng.uniform());
      const double z = pick < lateral + cap ? half_height : -half_height;
      cloud.points.push_back({r * std::cos(theta), r * std::sin(theta), z});
    }
  }
  return cloud;
}

PointCloud sample_cone(int n, double radius, double height, Rng& rng) {
  const double slant = std::sqrt(radius * radius + height * height);
  const double lateral = std::numbers::pi * radius * slant;
  const double base = std::numbers::pi * radius * radius;
  const double total = lateral + base;
  const Vec3 apex{0.0, 0.0, height / 2.0};
  const double base_z = -height / 2.0;
  PointCloud cloud;
  cloud.points.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double pick = rng.uniform() * total;
    const double theta = rng.uniform() * 2.0 * std::numbers::pi;
    if (pick < lateral) {
      // Area grows linearly with distance from the apex along the slant.
      const double rho = std::sqrt(rng.uniform());
      const Vec3 rim{radius * std::cos(theta), radius * std::sin(theta), base_z};
      cloud.points.push_back(apex + (rim - apex) * rho);
    } else {
      const double r = radius * std::sqrt(rng.uniform());
      cloud.points.push_back({r * std::cos(theta), r * std::sin(theta), base_z});
    }
  }
  return cloud;
}

// Largest-remainder split counts; val extras go to the lowest class indices,
// test extras to the highest, which keeps every split balanced within 1.
struct SplitCounts {
  int train = 0;
  int val = 0;
  int test = 0;
};

std::vector<SplitCounts> split_counts(int num_classes, int per_class) {
  const int total = num_classes * per_class;
  const int val_total = static_cast<int>(std::lround(total * 0.15));
  const int test_total = val_total;
  const int val_base = val_total / num_classes;
  const int val_extra = val_total % num_classes;
  const int test_base = test_total / num_classes;
  const int test_extra = test_total % num_classes;
  std::vector<SplitCounts> out(static_cast<std::size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    SplitCounts& s = out[static_cast<std::size_t>(c)];
    s.val = val_base + (c < val_extra ? 1 : 0);
    s.test = test_base + (c >= num_classes - test_extra ? 1 : 0);
    s.train = per_class - s.val - s.test;
    if (s.train < 0) throw std::invalid_argument("generate_dataset: per_class too small for split");
  }
  return out;
}

}  // namespace

std::string shape_class_name(ShapeClass c) {
  switch (c) {
    case ShapeClass::kSphere: return "sphere";
    case ShapeClass::kBox: return "box";
    case ShapeClass::kCylinder: return "cylinder";
    case ShapeClass::kCone: return "cone";
  }
  return "unknown";
}

void DomainShiftConfig::validate() const {
  if (jitter_sigma < 0.0) throw std::invalid_argument("DomainShiftConfig: jitter_sigma < 0");
  if (crop_fraction < 0.0 || crop_fraction > 0.5)
    throw std::invalid_argument("DomainShiftConfig: crop_fraction outside [0, 0.5]");
  if (density_bias < 0.0) throw std::invalid_argument("DomainShiftConfig: density_bias < 0");
}

PointCloud generate_shape(const ShapeSpec& spec, Rng& rng) {
  if (spec.points < 16) throw std::invalid_argument("ShapeSpec: points < 16");
  const double a1 = rng.uniform(spec.aspect_lo, spec.aspect_hi);
  const double a2 = rng.uniform(spec.aspect_lo, spec.aspect_hi);
  const double scale = rng.uniform(spec.scale_lo, spec.scale_hi);

  PointCloud cloud;
  switch (spec.cls) {
    case ShapeClass::kSphere:
      cloud = sample_sphere(spec.points, rng);
      break;
    case ShapeClass::kBox:
      cloud = sample_box(spec.points, 1.0, a1, a2, rng);
      break;
    case ShapeClass::kCylinder:
      cloud = sample_cylinder(spec.points, 0.5 * a1, a2, rng);
      break;
    case ShapeClass::kCone:
      cloud = sample_cone(spec.points, 0.7 * a1, 1.4 * a2, rng);
      break;
  }
  for (Vec3& p : cloud.points) p = p * scale;
  normalize_scale(cloud);
  return cloud;
}

PointCloud apply_domain_shift(const PointCloud& cloud, const DomainShiftConfig& config, Rng& rng) {
  config.validate();
  const std::size_t n = cloud.size();
  PointCloud out = cloud;

  if (config.jitter_sigma > 0.0) {
    for (Vec3& p : out.points) {
      p.x += rng.normal(0.0, config.jitter_sigma);
      p.y += rng.normal(0.0, config.jitter_sigma);
      p.z += rng.normal(0.0, config.jitter_sigma);
    }
  }

  if (config.crop_fraction > 0.0) {
    const std::size_t removed =
        std::min(n - 1, static_cast<std::size_t>(std::ceil(config.crop_fraction * static_cast<double>(n))));
    const Vec3 dir = random_unit(rng);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double pa = out.points[a].dot(dir);
      const double pb = out.points[b].dot(dir);
      if (pa != pb) return pa < pb;
      return a < b;
    });
    std::vector<Vec3> survivors;
    survivors.reserve(n - removed);
    for (std::size_t i = 0; i + removed < n; ++i) survivors.push_back(out.points[order[i]]);
    out.points = survivors;
    // Occlusion keeps the point budget: refill with noisy copies of survivors.
    constexpr double kRefillSigma = 0.01;
    while (out.points.size() < n) {
      const Vec3& base = survivors[rng.uniform_index(survivors.size())];
      out.points.push_back({rng.normal(base.x, kRefillSigma), rng.normal(base.y, kRefillSigma),
                            rng.normal(base.z, kRefillSigma)});
    }
  }

  if (config.density_bias > 0.0) {
    const Vec3 dir = random_unit(rng);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    std::vector<double> proj(n);
    for (std::size_t i = 0; i < n; ++i) {
      proj[i] = out.points[i].dot(dir);
      lo = std::min(lo, proj[i]);
      hi = std::max(hi, proj[i]);
    }
    std::vector<double> cumulative(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = (proj[i] - lo) / (hi - lo + 1e-12);
      acc += std::pow(s + 0.05, config.density_bias);
      cumulative[i] = acc;
    }
    std::vector<Vec3> resampled;
    resampled.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double pick = rng.uniform() * acc;
      const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), pick);
      const std::size_t idx = static_cast<std::size_t>(it - cumulative.begin());
      resampled.push_back(out.points[std::min(idx, n - 1)]);
    }
    out.points = std::move(resampled);
  }

  if (config.rotation == ShiftRotation::kZRandom) {
    const double theta = rng.uniform() * 2.0 * std::numbers::pi;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    for (Vec3& p : out.points) {
      const double x = c * p.x - s * p.y;
      const double y = s * p.x + c * p.y;
      p.x = x;
      p.y = y;
    }
  }

  normalize_scale(out);
  return out;
}

DatasetManifest generate_dataset(const std::vector<ShapeSpec>& shapes,
                                 const DomainShiftConfig& shift, int per_class,
                                 std::uint64_t seed, const std::filesystem::path& out_dir) {
  if (shapes.empty()) throw std::invalid_argument("generate_dataset: no shape specs");
  if (per_class < 1) throw std::invalid_argument("generate_dataset: per_class < 1");
  shift.validate();

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "clean", ec);
  std::filesystem::create_directories(out_dir / "shifted", ec);
  if (!std::filesystem::is_directory(out_dir / "clean") ||
      !std::filesystem::is_directory(out_dir / "shifted"))
    throw IoError("generate_dataset: cannot create output directory " + out_dir.string());

  const int num_classes = static_cast<int>(shapes.size());
  const std::vector<SplitCounts> splits = split_counts(num_classes, per_class);

  DatasetManifest manifest;
  manifest.config_echo.emplace_back("seed", std::to_string(seed));
  manifest.config_echo.emplace_back("per_class", std::to_string(per_class));
  manifest.config_echo.emplace_back("points", std::to_string(shapes[0].points));
  {
    std::string names;
    for (int c = 0; c < num_classes; ++c) {
      if (c) names += ",";
      names += shape_class_name(shapes[static_cast<std::size_t>(c)].cls);
    }
    manifest.config_echo.emplace_back("classes", names);
  }
  manifest.config_echo.emplace_back("jitter_sigma", format_double(shift.jitter_sigma));
  manifest.config_echo.emplace_back("crop_fraction", format_double(shift.crop_fraction));
  manifest.config_echo.emplace_back("density_bias", format_double(shift.density_bias));
  manifest.config_echo.emplace_back(
      "rotation", shift.rotation == ShiftRotation::kZRandom ? "z-random" : "none");

  Rng rng(seed);
  for (const std::string& domain : {std::string("clean"), std::string("shifted")}) {
    for (int c = 0; c < num_classes; ++c) {
      const ShapeSpec& spec = shapes[static_cast<std::size_t>(c)];
      const SplitCounts& sc = splits[static_cast<std::size_t>(c)];
      for (int i = 0; i < per_class; ++i) {
        PointCloud cloud = generate_shape(spec, rng);
        if (domain == "shifted") cloud = apply_domain_shift(cloud, shift, rng);

        std::ostringstream name;
        name << domain << "/" << shape_class_name(spec.cls) << "_";
        name.fill('0');
        name.width(4);
        name << i;
        const std::string rel = name.str() + ".xyz";
        write_cloud(out_dir / rel, cloud);

        ManifestEntry entry;
        entry.path = rel;
        entry.label = c;
        entry.domain = domain;
        entry.split = i < sc.train ? "train" : (i < sc.train + sc.val ? "val" : "test");
        manifest.entries.push_back(std::move(entry));
      }
    }
  }

  write_manifest(out_dir / "manifest.tsv", manifest);
  return manifest;
}

DatasetManifest read_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest: " + manifest_path.string());
  DatasetManifest manifest;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (line.find('\t') == std::string::npos) {
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw IoError("manifest parse error at line " + std::to_string(line_no) + " in " +
                      manifest_path.string());
      manifest.config_echo.emplace_back(line.substr(0, eq), line.substr(eq + 1));
      continue;
    }
    std::istringstream ls(line);
    ManifestEntry entry;
    std::string label;
    if (!std::getline(ls, entry.path, '\t') || !std::getline(ls, label, '\t') ||
        !std::getline(ls, entry.domain, '\t') || !std::getline(ls, entry.split)) {
      throw IoError("manifest parse error at line " + std::to_string(line_no) + " in " +
                    manifest_path.string());
    }
    try {
      entry.label = std::stoi(label);
    } catch (const std::exception&) {
      throw IoError("manifest label parse error at line " + std::to_string(line_no));
    }
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

void write_manifest(const std::filesystem::path& manifest_path, const DatasetManifest& manifest) {
  std::ofstream out(manifest_path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest: " + manifest_path.string());
  for (const auto& [key, value] : manifest.config_echo) out << key << '=' << value << '\n';
  for (const ManifestEntry& e : manifest.entries) {
    out << e.path << '\t' << e.label << '\t' << e.domain << '\t' << e.split << '\n';
  }
  if (!out) throw IoError("manifest write failure: " + manifest_path.string());
}

}  // namespace cdnd
