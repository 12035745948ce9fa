// cdnd command line: dataset generation, deformation inspection, training and
// verification suites. Exit codes: 0 success, 1 verification failure,
// 2 usage, 3 I/O or parse failure, 4 numeric failure.

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "cdnd/config.hpp"
#include "cdnd/errors.hpp"
#include "cdnd/geometry.hpp"
#include "cdnd/synth_data.hpp"
#include "cdnd/training.hpp"
#include "cdnd/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct GenDataArgs {
  std::string out;
  std::uint64_t seed = 7;
  int per_class = 50;
  int points = 128;
  double jitter_sigma = 0.02;
  double crop_fraction = 0.25;
  double density_bias = 1.5;
  std::string rotation = "z-random";
};

int cmd_gen_data(const GenDataArgs& args) {
  using namespace cdnd;
  DomainShiftConfig shift;
  shift.jitter_sigma = args.jitter_sigma;
  shift.crop_fraction = args.crop_fraction;
  shift.density_bias = args.density_bias;
  shift.rotation = args.rotation == "none" ? ShiftRotation::kNone : ShiftRotation::kZRandom;

  std::vector<ShapeSpec> shapes;
  for (ShapeClass cls :
       {ShapeClass::kSphere, ShapeClass::kBox, ShapeClass::kCylinder, ShapeClass::kCone}) {
    ShapeSpec spec;
    spec.cls = cls;
    spec.points = args.points;
    shapes.push_back(spec);
  }
  const DatasetManifest manifest =
      generate_dataset(shapes, shift, args.per_class, args.seed, args.out);
  std::cout << "wrote " << manifest.entries.size() << " clouds under " << args.out << "\n";
  return kExitOk;
}

struct DeformArgs {
  std::string in;
  std::string out;
  std::string report;
  int k = 8;
  int m = -1;
  int n_deform = 1;
  std::string mode = "lowest";
  std::string stat = "entropy";
  double variance = 0.001;
  int curvature_neighborhood = 20;
  std::string fps_start = "index_zero";
  std::uint64_t seed = 0;
};

int cmd_deform(const DeformArgs& args) {
  using namespace cdnd;
  const PointCloud cloud = read_cloud(args.in);

  DeformConfig config;
  config.k = args.k;
  config.m = args.m;
  config.n_deform = args.n_deform;
  config.mode = args.mode == "lowest"
                    ? DeformMode::kLowest
                    : (args.mode == "highest" ? DeformMode::kHighest : DeformMode::kRandom);
  config.statistic = args.stat == "std" ? DiversityStatistic::kStd : DiversityStatistic::kEntropy;
  config.variance = args.variance;
  config.curvature_neighborhood = args.curvature_neighborhood;
  config.fps_start =
      args.fps_start == "seeded_random" ? FpsStart::kSeededRandom : FpsStart::kIndexZero;
  config.validate(cloud.size());

  Rng rng(args.seed);
  const CurvatureField field = pca_curvature(cloud, config.curvature_neighborhood);
  const RegionSet set = partition_regions(cloud, config, rng);
  std::vector<DiversityScore> scores;
  for (std::size_t r = 0; r < set.size(); ++r) {
    DiversityScore s = diversity_score(set.regions[r], field, config.statistic);
    s.region_index = static_cast<int>(r);
    scores.push_back(s);
  }
  const std::vector<Region> selected =
      select_regions(set, scores, config.n_deform, config.mode, rng);
  const DeformedCloud deformed = deform(cloud, selected, config.variance, rng);

  PointCloud out_cloud;
  out_cloud.points = deformed.points;
  write_cloud(args.out, out_cloud);

  const std::string report_path = args.report.empty() ? args.out + ".regions.csv" : args.report;
  std::ofstream report(report_path, std::ios::binary);
  if (!report) throw IoError("cannot write region report: " + report_path);
  report << "region_index,center_index,member_count,score,selected\n";
  for (std::size_t r = 0; r < set.size(); ++r) {
    const bool is_selected =
        std::any_of(selected.begin(), selected.end(), [&](const Region& region) {
          return region.center_index == set.regions[r].center_index;
        });
    report << r << ',' << set.regions[r].center_index << ','
           << set.regions[r].member_indices.size() << ',' << format_double(scores[r].score) << ','
           << (is_selected ? 1 : 0) << '\n';
  }
  std::cout << "deformed " << deformed.deformed_indices.size() << " of " << cloud.size()
            << " points; report at " << report_path << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string config_path;
  std::string out;
  std::string label;
  int jobs = 1;
  std::string alignment;  // optional overrides of the config's variant axes
  std::string deform_mode;
  std::string deform_stat;
  double gamma = -1.0;
  int epochs = -1;
};

int cmd_train(const TrainArgs& args) {
  using namespace cdnd;
  RunConfig config = parse_run_config_file(args.config_path);
  if (!args.alignment.empty()) {
    if (args.alignment == "none") config.train.alignment = Alignment::kNone;
    else if (args.alignment == "nwd") config.train.alignment = Alignment::kNwd;
    else if (args.alignment == "dnwd") config.train.alignment = Alignment::kDnwd;
    else throw std::invalid_argument("--alignment must be none|nwd|dnwd");
  }
  if (!args.deform_mode.empty()) {
    if (args.deform_mode == "lowest") config.train.deform.mode = DeformMode::kLowest;
    else if (args.deform_mode == "highest") config.train.deform.mode = DeformMode::kHighest;
    else if (args.deform_mode == "random") config.train.deform.mode = DeformMode::kRandom;
    else throw std::invalid_argument("--deform-mode must be lowest|highest|random");
  }
  if (!args.deform_stat.empty()) {
    if (args.deform_stat == "entropy") config.train.deform.statistic = DiversityStatistic::kEntropy;
    else if (args.deform_stat == "std") config.train.deform.statistic = DiversityStatistic::kStd;
    else throw std::invalid_argument("--deform-stat must be entropy|std");
  }
  if (args.gamma >= 0.0) config.train.weights.gamma = args.gamma;
  if (args.epochs > 0) config.train.epochs = args.epochs;
  config.train.validate();
  if (config.dataset_dir.empty())
    throw std::invalid_argument("config [data] dataset_dir is required for train");

  const Dataset dataset =
      load_dataset(config.dataset_dir, config.source_domain, config.target_domain);

  const std::filesystem::path out_dir(args.out);
  std::filesystem::create_directories(out_dir);
  const std::string resolved = render_run_config(config);
  {
    std::ofstream echo(out_dir / "config.resolved", std::ios::binary);
    if (!echo) throw IoError("cannot write " + (out_dir / "config.resolved").string());
    echo << resolved;
  }

  RunMetrics metrics;
  try {
    metrics = run_experiment(config.train, dataset, out_dir, resolved, args.jobs);
  } catch (const NumericError& e) {
    std::ofstream error_log(out_dir / "error.txt", std::ios::binary);
    error_log << e.what() << "\n";
    throw;
  }

  for (const SeedResult& seed : metrics.per_seed) {
    std::cout << "seed " << seed.seed << ": src_val=" << format_double(seed.final_src_val)
              << " tgt_val=" << format_double(seed.final_tgt_val)
              << " tgt_test=" << format_double(seed.final_tgt_test) << "\n";
  }
  std::cout << "aggregate: src_val=" << format_double(metrics.src_val_mean) << "+-"
            << format_double(metrics.src_val_std)
            << " tgt_test=" << format_double(metrics.tgt_test_mean) << "+-"
            << format_double(metrics.tgt_test_std) << "\n";

  const std::filesystem::path summary_path = out_dir / "summary.csv";
  const bool fresh = !std::filesystem::exists(summary_path);
  std::ofstream summary(summary_path, std::ios::binary | std::ios::app);
  if (!summary) throw IoError("cannot write " + summary_path.string());
  if (fresh)
    summary << "config,alignment,deform_mode,deform_statistic,seeds,src_val_mean,src_val_std,"
               "tgt_test_mean,tgt_test_std\n";
  const std::string label =
      args.label.empty() ? std::filesystem::path(args.config_path).stem().string() : args.label;
  const DeformConfig& d = config.train.deform;
  summary << label << ',' << alignment_name(config.train.alignment) << ','
          << (d.mode == DeformMode::kLowest ? "lowest"
                                            : (d.mode == DeformMode::kHighest ? "highest" : "random"))
          << ',' << (d.statistic == DiversityStatistic::kEntropy ? "entropy" : "std") << ','
          << config.train.seeds.size() << ',' << format_double(metrics.src_val_mean) << ','
          << format_double(metrics.src_val_std) << ',' << format_double(metrics.tgt_test_mean)
          << ',' << format_double(metrics.tgt_test_std) << '\n';
  return kExitOk;
}

int cmd_verify(const std::string& suite) {
  using namespace cdnd;
  std::vector<SuiteReport> reports;
  if (suite == "all") reports = verify_all();
  else if (suite == "grad") reports.push_back(verify_grad());
  else if (suite == "theory") reports.push_back(verify_theory());
  else if (suite == "geometry") reports.push_back(verify_geometry());
  else throw std::invalid_argument("suite must be one of grad|theory|geometry|all");

  bool all_pass = true;
  for (const SuiteReport& report : reports) {
    print_report(std::cout, report);
    all_pass = all_pass && report.all_pass();
  }
  std::cout << (all_pass ? "verification passed" : "verification FAILED") << "\n";
  return all_pass ? kExitOk : kExitVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"curvature-diversity deformation + nuclear-norm domain alignment"};
  app.require_subcommand(1);

  GenDataArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen-data", "generate the two-domain synthetic benchmark");
  gen->add_option("--out", gen_args.out, "output dataset directory")->required();
  gen->add_option("--seed", gen_args.seed, "generator seed");
  gen->add_option("--per-class", gen_args.per_class, "clouds per class per domain");
  gen->add_option("--points", gen_args.points, "points per cloud");
  gen->add_option("--jitter-sigma", gen_args.jitter_sigma, "shifted-domain per-point noise");
  gen->add_option("--crop-fraction", gen_args.crop_fraction, "shifted-domain occlusion fraction");
  gen->add_option("--density-bias", gen_args.density_bias, "shifted-domain resampling exponent");
  gen->add_option("--rotation", gen_args.rotation, "shifted-domain rotation: none|z-random");

  DeformArgs deform_args;
  CLI::App* deform = app.add_subcommand("deform", "deform one cloud and report region scores");
  deform->add_option("--in", deform_args.in, "input cloud (x y z per line)")->required();
  deform->add_option("--out", deform_args.out, "output deformed cloud")->required();
  deform->add_option("--report", deform_args.report, "region report path (default <out>.regions.csv)");
  deform->add_option("--k", deform_args.k, "region count");
  deform->add_option("--m", deform_args.m, "neighbors per region (-1: ceil(n/k)-1)");
  deform->add_option("--n-deform", deform_args.n_deform, "regions to deform");
  deform->add_option("--mode", deform_args.mode, "lowest|highest|random");
  deform->add_option("--stat", deform_args.stat, "entropy|std");
  deform->add_option("--variance", deform_args.variance, "replacement Gaussian variance");
  deform->add_option("--curvature-neighborhood", deform_args.curvature_neighborhood,
                     "points per curvature PCA neighborhood");
  deform->add_option("--fps-start", deform_args.fps_start, "index_zero|seeded_random");
  deform->add_option("--seed", deform_args.seed, "random seed");

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "run the multi-seed training experiment");
  train->add_option("--config", train_args.config_path, "run configuration file")->required();
  train->add_option("--out", train_args.out, "run output directory")->required();
  train->add_option("--label", train_args.label, "summary row label (default: config stem)");
  train->add_option("--jobs", train_args.jobs, "parallel seed workers");
  train->add_option("--alignment", train_args.alignment, "override: none|nwd|dnwd");
  train->add_option("--deform-mode", train_args.deform_mode, "override: lowest|highest|random");
  train->add_option("--deform-stat", train_args.deform_stat, "override: entropy|std");
  train->add_option("--gamma", train_args.gamma, "override reconstruction weight");
  train->add_option("--epochs", train_args.epochs, "override epoch count");

  std::string verify_suite = "all";
  CLI::App* verify = app.add_subcommand("verify", "run verification suites");
  verify->add_option("suite", verify_suite, "grad|theory|geometry|all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_args);
    if (deform->parsed()) return cmd_deform(deform_args);
    if (train->parsed()) return cmd_train(train_args);
    if (verify->parsed()) return cmd_verify(verify_suite);
    std::cerr << "no subcommand\n";
    return kExitUsage;
  } catch (const cdnd::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const cdnd::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
}
