// Acceptance suite: one line per criterion, checked end to end against
// independent oracles. Invoke with the cdnd binary path:
//   acceptance <path-to-cdnd> [scratch-dir]
// Exit code 0 iff every criterion passes.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cdnd/autodiff.hpp"
#include "cdnd/config.hpp"
#include "cdnd/geometry.hpp"
#include "cdnd/losses.hpp"
#include "cdnd/models.hpp"
#include "cdnd/ot_theory.hpp"
#include "cdnd/synth_data.hpp"
#include "cdnd/training.hpp"
#include "oracles.hpp"

using namespace cdnd;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

std::string g_cli;
fs::path g_scratch;
int g_failures = 0;

void report(int criterion, const std::string& what, bool pass, const std::string& detail) {
  std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << criterion << ": " << what;
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << std::endl;
  if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int run_cli(const std::string& args) {
  const std::string cmd = "\"" + g_cli + "\" " + args + " > /dev/null 2>&1";
  return WEXITSTATUS(std::system(cmd.c_str()));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

PointCloud random_cloud(std::size_t n, Rng& rng) {
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i)
    c.points.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
  return c;
}

// ---------------------------------------------------------------- criterion 1
void criterion_curvature() {
  const auto start = Clock::now();
  double worst = 0.0;

  PointCloud plane;
  Rng prng(101);
  for (int i = 0; i < 40; ++i)
    plane.points.push_back({prng.uniform(-1.0, 1.0), prng.uniform(-1.0, 1.0), 0.0});
  for (double c : pca_curvature(plane, 12).curvatures) worst = std::max(worst, std::abs(c));
  const bool coplanar_ok = worst <= 1e-9;

  PointCloud cube;
  for (int i = 0; i < 8; ++i)
    cube.points.push_back({i & 1 ? 1.0 : -1.0, i & 2 ? 1.0 : -1.0, i & 4 ? 1.0 : -1.0});
  double cube_dev = 0.0;
  for (double c : pca_curvature(cube, 8).curvatures) cube_dev = std::max(cube_dev, std::abs(c - 1.0 / 3.0));
  const bool cube_ok = cube_dev <= 1e-9;

  Rng rng(102);
  double range_violation = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const PointCloud c = random_cloud(48, rng);
    for (double v : pca_curvature(c, 12).curvatures)
      range_violation = std::max({range_violation, -v, v - (1.0 / 3.0 + 1e-9)});
  }
  const double elapsed = seconds_since(start);
  const bool pass = coplanar_ok && cube_ok && range_violation <= 0.0 && elapsed < 5.0;
  std::ostringstream note;
  note << "coplanar<=" << format_double(worst) << ", cube dev " << format_double(cube_dev)
       << ", range violation " << format_double(range_violation) << ", " << format_double(elapsed)
       << " s";
  report(1, "curvature correctness", pass, note.str());
}

// ---------------------------------------------------------------- criterion 2
void criterion_entropy() {
  CurvatureField constant;
  constant.curvatures.assign(12, 0.17);
  Region region;
  for (int i = 0; i < 12; ++i) region.member_indices.push_back(i);
  const double h_const = diversity_score(region, constant, DiversityStatistic::kEntropy).score;

  CurvatureField three;
  three.curvatures = {0.0, 0.5, 1.0};
  Region r3;
  r3.member_indices = {0, 1, 2};
  const double h3 = diversity_score(r3, three, DiversityStatistic::kEntropy).score;

  Rng rng(201);
  double floor_violation = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    CurvatureField f;
    const std::size_t n = 1 + rng.uniform_index(24);
    for (std::size_t i = 0; i < n; ++i) f.curvatures.push_back(rng.uniform() / 3.0);
    Region r;
    for (std::size_t i = 0; i < n; ++i) r.member_indices.push_back(static_cast<int>(i));
    const double h = diversity_score(r, f, DiversityStatistic::kEntropy).score;
    floor_violation = std::max(floor_violation, -(h + 1e-9 * static_cast<double>(n)));
  }

  const bool pass = h_const == 0.0 && std::abs(h3 - 0.34657) <= 1e-4 && floor_violation <= 0.0;
  std::ostringstream note;
  note << "H(const)=" << format_double(h_const) << ", H(0,.5,1)=" << format_double(h3)
       << ", floor violation " << format_double(std::max(floor_violation, 0.0));
  report(2, "entropy contract", pass, note.str());
}

// ---------------------------------------------------------------- criterion 3
void criterion_deform_stats() {
  Rng data_rng(301);
  const PointCloud cloud = random_cloud(320, data_rng);
  Region region;
  region.center_index = 0;
  for (int i = 0; i < 256; ++i) region.member_indices.push_back(i);
  Rng rng(302);
  const DeformedCloud deformed = deform(cloud, {region}, 0.001, rng);

  Vec3 centroid;
  for (int i = 0; i < 256; ++i) centroid = centroid + cloud.points[static_cast<std::size_t>(i)];
  centroid = centroid * (1.0 / 256.0);
  Vec3 mean;
  for (int i = 0; i < 256; ++i) mean = mean + deformed.points[static_cast<std::size_t>(i)];
  mean = mean * (1.0 / 256.0);

  const double tol = 4.0 * std::sqrt(0.001 / 256.0);
  const double mean_dev = std::max({std::abs(mean.x - centroid.x), std::abs(mean.y - centroid.y),
                                    std::abs(mean.z - centroid.z)});
  double variance = 0.0;
  for (int i = 0; i < 256; ++i) variance += (deformed.points[static_cast<std::size_t>(i)] - mean).norm2();
  variance /= 3.0 * 256.0;

  const bool pass = deformed.deformed_indices.size() == 256 && mean_dev <= tol &&
                    variance >= 0.0007 && variance <= 0.0013;
  std::ostringstream note;
  note << "mean dev " << format_double(mean_dev) << " (tol " << format_double(tol)
       << "), variance " << format_double(variance);
  report(3, "deformation statistics", pass, note.str());
}

// ---------------------------------------------------------------- criterion 4
void criterion_chamfer() {
  Rng rng(401);
  double worst = 0.0;
  bool structural = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t na = 1 + rng.uniform_index(32);
    const std::size_t nb = 1 + rng.uniform_index(32);
    std::vector<Vec3> a, b;
    for (std::size_t i = 0; i < na; ++i)
      a.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
    for (std::size_t i = 0; i < nb; ++i)
      b.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});

    Tensor ta({na, 3}), tb({nb, 3});
    for (std::size_t i = 0; i < na; ++i) {
      ta.at(i, 0) = a[i].x;
      ta.at(i, 1) = a[i].y;
      ta.at(i, 2) = a[i].z;
    }
    for (std::size_t i = 0; i < nb; ++i) {
      tb.at(i, 0) = b[i].x;
      tb.at(i, 1) = b[i].y;
      tb.at(i, 2) = b[i].z;
    }
    Tape tape;
    const NodeId pa = tape.leaf(ta);
    const NodeId pb = tape.leaf(tb);
    const double forward = tape.value(tape.chamfer(pa, pb))[0];
    const double swapped = tape.value(tape.chamfer(pb, pa))[0];
    const double self = tape.value(tape.chamfer(pa, pa))[0];
    worst = std::max(worst, std::abs(forward - oracles::brute_chamfer(a, b)));
    if (forward != swapped || self != 0.0) structural = false;
  }
  const bool pass = worst <= 1e-10 && structural;
  report(4, "chamfer oracle equivalence", pass,
         "worst |impl - brute| = " + format_double(worst) +
             (structural ? ", symmetry and identity exact" : ", symmetry/identity violated"));
}

// ---------------------------------------------------------------- criterion 5
void criterion_nuclear() {
  Rng rng(501);
  double worst_value = 0.0;
  double worst_bound = 0.0;
  double worst_identity = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t rows = 1 + rng.uniform_index(12);
    const std::size_t cols = 1 + rng.uniform_index(8);
    Tensor p({rows, cols});
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = rng.uniform(-2.0, 2.0);

    const double nuclear = nuclear_norm_value(p);
    worst_value = std::max(worst_value, std::abs(nuclear - oracles::eigen_nuclear_norm(p)));
    const double frob = frobenius_norm(p);
    worst_bound = std::max(worst_bound, frob - nuclear);
    worst_bound = std::max(worst_bound,
                           nuclear - std::sqrt(static_cast<double>(std::min(rows, cols))) * frob);

    Tensor q({rows, std::max<std::size_t>(cols, 2)});
    for (std::size_t r = 0; r < rows; ++r) {
      double denom = 0.0;
      for (std::size_t c = 0; c < q.cols(); ++c) denom += std::exp(q.at(r, c) = rng.uniform(-3.0, 3.0));
      for (std::size_t c = 0; c < q.cols(); ++c) q.at(r, c) = std::exp(q.at(r, c)) / denom;
    }
    worst_identity = std::max(worst_identity,
                              std::abs(intra_class_correlation(q) + inter_class_correlation(q) -
                                       static_cast<double>(rows)));
  }
  const bool pass = worst_value <= 1e-8 && worst_bound <= 1e-8 && worst_identity <= 1e-9;
  std::ostringstream note;
  note << "|impl - svd oracle| " << format_double(worst_value) << ", bound violation "
       << format_double(std::max(worst_bound, 0.0)) << ", |Ia+Ie-b| "
       << format_double(worst_identity);
  report(5, "nuclear norm oracle and bounds", pass, note.str());
}

// ---------------------------------------------------------------- criterion 6
struct MicroSetup {
  Models models;
  DomainBatch source;
  DomainBatch target;
};

MicroSetup micro_setup() {
  MicroSetup s;
  EncoderParams enc;
  enc.widths = {3, 8, 12};
  ClassifierParams cls;
  cls.hidden = {6};
  cls.num_classes = 2;
  DecoderParams dec;
  dec.hidden = {8};
  dec.output_points = 4;
  s.models = init_models(enc, cls, dec, 601);

  DeformConfig deform_cfg;
  deform_cfg.k = 2;
  deform_cfg.m = 3;
  deform_cfg.curvature_neighborhood = 4;
  Rng rng(602);
  const auto fill = [&](DomainBatch& batch, Domain domain) {
    batch.domain = domain;
    for (ShapeClass cls_id : {ShapeClass::kSphere, ShapeClass::kCone}) {
      ShapeSpec spec;
      spec.cls = cls_id;
      spec.points = 16;
      batch.originals.push_back(generate_shape(spec, rng));
      batch.deformed.push_back(deform_cloud(batch.originals.back(), deform_cfg, rng));
    }
    if (domain == Domain::kSource) batch.labels = {0, 1};
  };
  fill(s.source, Domain::kSource);
  fill(s.target, Domain::kTarget);
  return s;
}

// Composed objective with neutral reversal stages (lambda = -1 makes the
// reversal an exact identity in both passes, so the tape gradient is the
// gradient of the forward value).
NodeId composed_objective(Tape& tape, const MicroSetup& setup, NodeId flat) {
  const ModelNodes nodes = lift_from_flat(tape, setup.models, flat);
  const std::size_t n = setup.source.originals[0].size();
  const LossWeights w;  // alpha .5, gamma .5, beta1 1, beta2 .2

  const NodeId f_s = encode(tape, nodes.encoder, tape.leaf(clouds_to_tensor(setup.source.originals)), n);
  const NodeId f_sd = encode(tape, nodes.encoder, tape.leaf(deformed_to_tensor(setup.source.deformed)), n);
  const NodeId f_t = encode(tape, nodes.encoder, tape.leaf(clouds_to_tensor(setup.target.originals)), n);
  const NodeId f_td = encode(tape, nodes.encoder, tape.leaf(deformed_to_tensor(setup.target.deformed)), n);

  const std::array<NodeId, 2> ss{f_s, f_sd};
  const NodeId f_s_mix = tape.concat_rows(ss);
  std::vector<int> labels = setup.source.labels;
  labels.insert(labels.end(), setup.source.labels.begin(), setup.source.labels.end());
  const NodeId l_cls = tape.cross_entropy(classify(tape, nodes.classifier, f_s_mix).probs, labels);

  const std::size_t r = setup.models.decoder_cfg.output_points;
  std::vector<std::pair<Tensor, NodeId>> pairs;
  const auto add_pairs = [&](const DomainBatch& batch, NodeId features) {
    const NodeId rec = reconstruct(tape, nodes.decoder, features, r, r);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      Tensor target({batch.deformed[i].original_region_points.size(), 3});
      for (std::size_t j = 0; j < target.rows(); ++j) {
        target.at(j, 0) = batch.deformed[i].original_region_points[j].x;
        target.at(j, 1) = batch.deformed[i].original_region_points[j].y;
        target.at(j, 2) = batch.deformed[i].original_region_points[j].z;
      }
      pairs.emplace_back(std::move(target), tape.reshape(tape.slice_rows(rec, i, 1), {r, 3}));
    }
  };
  add_pairs(setup.source, f_sd);
  add_pairs(setup.target, f_td);
  const NodeId l_ssl = ssl_loss(tape, pairs);

  const auto adv = [&](NodeId f) {
    return classify(tape, nodes.classifier, tape.gradient_reverse(f, -1.0)).probs;
  };
  const std::array<NodeId, 2> ts{f_t, f_td};
  const std::array<NodeId, 1> ps{adv(f_s_mix)};
  const std::array<NodeId, 1> pt{adv(tape.concat_rows(ts))};
  const NodeId l_dnwd = batch_nuclear_discrepancy(tape, ps, pt);
  const std::array<NodeId, 1> po{adv(f_t)};
  const std::array<NodeId, 1> pd{adv(f_td)};
  const NodeId l_cons = target_consistency_loss(tape, po, pd);

  const NodeId supervised =
      tape.add(tape.scalar_multiply(l_cls, w.alpha), tape.scalar_multiply(l_ssl, w.gamma));
  const NodeId adversarial =
      tape.add(tape.scalar_multiply(l_dnwd, w.beta1), tape.scalar_multiply(l_cons, w.beta2));
  return tape.add(supervised, tape.gradient_reverse(adversarial, -1.0));
}

void criterion_gradients() {
  const auto start = Clock::now();
  Rng rng(601);
  double worst_term = 0.0;

  {  // chamfer / reconstruction pairing
    Tensor flat({12});
    for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = rng.uniform(-1.0, 1.0);
    Tensor target({4, 3});
    for (std::size_t i = 0; i < target.size(); ++i) target[i] = rng.uniform(-1.0, 1.0);
    const TapeFn f = [&](Tape& tape, NodeId x) {
      std::vector<std::pair<Tensor, NodeId>> pairs;
      pairs.emplace_back(target, tape.reshape(x, {4, 3}));
      return ssl_loss(tape, pairs);
    };
    worst_term = std::max(worst_term, finite_difference_check(f, flat, 1e-5).max_rel_error);
  }
  {  // cross entropy through softmax
    Tensor flat({8});
    for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = rng.uniform(-1.0, 1.0);
    const TapeFn f = [](Tape& tape, NodeId x) {
      return tape.cross_entropy(tape.softmax_rows(tape.reshape(x, {4, 2})), {0, 1, 1, 0});
    };
    worst_term = std::max(worst_term, finite_difference_check(f, flat, 1e-5).max_rel_error);
  }
  {  // nuclear-norm discrepancy
    Tensor flat({16});
    for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = rng.uniform(-1.0, 1.0);
    const TapeFn f = [](Tape& tape, NodeId x) {
      const NodeId m = tape.reshape(x, {8, 2});
      const std::array<NodeId, 1> s{tape.softmax_rows(tape.slice_rows(m, 0, 4))};
      const std::array<NodeId, 1> t{tape.softmax_rows(tape.slice_rows(m, 4, 4))};
      return batch_nuclear_discrepancy(tape, s, t);
    };
    worst_term = std::max(worst_term, finite_difference_check(f, flat, 1e-5).max_rel_error);
  }
  {  // target consistency
    Tensor flat({16});
    for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = rng.uniform(-1.0, 1.0);
    const TapeFn f = [](Tape& tape, NodeId x) {
      const NodeId m = tape.reshape(x, {8, 2});
      const std::array<NodeId, 1> o{tape.softmax_rows(tape.slice_rows(m, 0, 4))};
      const std::array<NodeId, 1> d{tape.softmax_rows(tape.slice_rows(m, 4, 4))};
      return target_consistency_loss(tape, o, d);
    };
    worst_term = std::max(worst_term, finite_difference_check(f, flat, 1e-5).max_rel_error);
  }

  const MicroSetup setup = micro_setup();
  const Tensor flat = pack_params(setup.models);
  const TapeFn objective = [&](Tape& tape, NodeId x) { return composed_objective(tape, setup, x); };
  const double objective_err = finite_difference_check(objective, flat, 1e-5).max_rel_error;

  double grl_dev = 0.0;
  for (double lambda : {0.0, 0.3, 1.0, -1.5}) {
    Tape tape;
    Tensor x({4});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
    const NodeId in = tape.leaf(x);
    tape.backward(tape.mean(tape.gradient_reverse(in, lambda)));
    for (std::size_t i = 0; i < x.size(); ++i)
      grl_dev = std::max(grl_dev, std::abs(tape.grad(in)[i] - (-lambda * 0.25)));
  }

  const double elapsed = seconds_since(start);
  const bool pass =
      worst_term <= 1e-4 && objective_err <= 1e-4 && grl_dev == 0.0 && elapsed < 60.0;
  std::ostringstream note;
  note << "terms " << format_double(worst_term) << ", composed " << format_double(objective_err)
       << ", grl dev " << format_double(grl_dev) << ", " << format_double(elapsed) << " s";
  report(6, "finite-difference gradient checks", pass, note.str());
}

// ---------------------------------------------------------------- criterion 7
void criterion_mixture_axioms() {
  Rng rng(701);
  int failures = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int a = 1 + static_cast<int>(rng.uniform_index(14));
    const int b = 1 + static_cast<int>(rng.uniform_index(14));
    DiscreteMeasure nu1, nu2;
    double t1 = 0.0, t2 = 0.0;
    for (int i = 0; i < a; ++i) {
      nu1.support.push_back(i);
      nu1.weights.push_back(rng.uniform() + 0.01);
      t1 += nu1.weights.back();
    }
    for (int i = 0; i < b; ++i) {
      nu2.support.push_back(a + i);
      nu2.weights.push_back(rng.uniform() + 0.01);
      t2 += nu2.weights.back();
    }
    for (double& w : nu1.weights) w /= t1;
    for (double& w : nu2.weights) w /= t2;
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i + 1 < nu1.weights.size(); ++i) s1 += nu1.weights[i];
    for (std::size_t i = 0; i + 1 < nu2.weights.size(); ++i) s2 += nu2.weights[i];
    nu1.weights.back() = 1.0 - s1;
    nu2.weights.back() = 1.0 - s2;

    const double p1 = rng.uniform();
    const DiscreteMeasure mix = mixture(nu1, nu2, p1, 1.0 - p1);
    const AxiomReport axioms = check_probability_axioms(mix, 500, rng);
    if (!axioms.pass) ++failures;
    worst = std::max(worst, axioms.worst_deviation);
  }
  report(7, "mixture-measure axioms", failures == 0 && worst <= 1e-12,
         "failures " + std::to_string(failures) + ", worst deviation " + format_double(worst));
}

// ---------------------------------------------------------------- criterion 8
double enumerate_w1(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                    const FiniteMetric& metric) {
  std::vector<std::size_t> perm(nu.support.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i)
      total += metric.distance(mu.support[i], nu.support[perm[i]]);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(mu.support.size());
}

void criterion_w1() {
  Rng rng(801);
  double worst_enum = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<double>> coords;
    for (int i = 0; i < 12; ++i)
      coords.push_back({rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)});
    const FiniteMetric metric = FiniteMetric::from_coordinates(coords);
    const int s = 1 + static_cast<int>(rng.uniform_index(6));
    const std::vector<int> pick = rng.sample_without_replacement(12, 2 * s);
    const DiscreteMeasure mu = DiscreteMeasure::uniform({pick.begin(), pick.begin() + s});
    const DiscreteMeasure nu = DiscreteMeasure::uniform({pick.begin() + s, pick.end()});
    worst_enum = std::max(worst_enum,
                          std::abs(wasserstein1_exact(mu, nu, metric) - enumerate_w1(mu, nu, metric)));
  }

  double worst_axiom = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::vector<double>> coords;
    for (int i = 0; i < 9; ++i) coords.push_back({rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)});
    const FiniteMetric metric = FiniteMetric::from_coordinates(coords);
    std::vector<DiscreteMeasure> samples;
    for (int m = 0; m < 3; ++m)
      samples.push_back(DiscreteMeasure::uniform(rng.sample_without_replacement(9, 3)));
    worst_axiom = std::max(worst_axiom, metric_axioms_check(metric, samples).worst_deviation);
  }

  const bool pass = worst_enum <= 1e-12 && worst_axiom <= 1e-9;
  report(8, "exact W1 against enumeration and metric axioms", pass,
         "enumeration dev " + format_double(worst_enum) + ", axiom dev " +
             format_double(worst_axiom));
}

// ---------------------------------------------------------------- criterion 9
void criterion_determinism() {
  const fs::path dir = g_scratch / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  bool pass = run_cli("gen-data --out " + (dir / "data").string() +
                      " --seed 11 --per-class 8 --points 24") == 0;
  {
    std::ofstream cfg(dir / "run.cfg", std::ios::binary);
    cfg << "[train]\nepochs=3\nbatch_size=4\nseeds=1,2,3\n"
        << "encoder_widths=3,8,12\nclassifier_hidden=6\ndecoder_hidden=8\n"
        << "[deform]\nk=2\nm=3\ncurvature_neighborhood=4\n"
        << "[data]\ndataset_dir=" << (dir / "data").string() << "\n";
  }
  pass = pass && run_cli("train --config " + (dir / "run.cfg").string() + " --out " +
                         (dir / "run_a").string() + " --jobs 2") == 0;
  pass = pass && run_cli("train --config " + (dir / "run.cfg").string() + " --out " +
                         (dir / "run_b").string() + " --jobs 1") == 0;

  int mismatches = 0;
  for (int seed = 1; seed <= 3; ++seed) {
    for (const char* name : {"metrics.csv", "checkpoint.cdnd", "embeddings.csv"}) {
      const fs::path a = dir / "run_a" / ("seed_" + std::to_string(seed)) / name;
      const fs::path b = dir / "run_b" / ("seed_" + std::to_string(seed)) / name;
      if (!fs::exists(a) || !fs::exists(b) || slurp(a) != slurp(b)) ++mismatches;
    }
  }
  pass = pass && mismatches == 0;
  report(9, "train rerun is byte-identical", pass,
         mismatches == 0 ? "metrics, checkpoints and embeddings identical across reruns"
                         : std::to_string(mismatches) + " mismatching files");
}

// --------------------------------------------------------------- criterion 10
void criterion_smoke_training() {
  const auto start = Clock::now();
  const fs::path dir = g_scratch / "smoke";
  fs::remove_all(dir);
  fs::create_directories(dir);

  bool pass = run_cli("gen-data --out " + (dir / "data").string() +
                      " --seed 7 --per-class 50 --points 128") == 0;
  {
    std::ofstream cfg(dir / "run.cfg", std::ios::binary);
    cfg << "[train]\nepochs=100\nbatch_size=16\nseeds=1\nalignment=none\n"
        << "[weights]\ngamma=0\n"
        << "[data]\ndataset_dir=" << (dir / "data").string() << "\n";
  }
  pass = pass && run_cli("train --config " + (dir / "run.cfg").string() + " --out " +
                         (dir / "run").string() + " --jobs 1 --label source_only") == 0;

  // best source validation accuracy over the epochs
  double best_acc = 0.0;
  int epochs_seen = 0;
  {
    std::ifstream metrics(dir / "run" / "seed_1" / "metrics.csv");
    std::string line;
    std::getline(metrics, line);  // header
    while (std::getline(metrics, line)) {
      ++epochs_seen;
      std::istringstream row(line);
      std::string field;
      for (int i = 0; i < 6; ++i) std::getline(row, field, ',');
      best_acc = std::max(best_acc, std::stod(field));
    }
  }
  const double elapsed = seconds_since(start);
  pass = pass && epochs_seen == 100 && best_acc >= 0.90 && elapsed < 900.0;
  std::ostringstream note;
  note << "best src val acc " << format_double(best_acc) << " over " << epochs_seen
       << " epochs, " << format_double(elapsed) << " s";
  report(10, "source-only smoke training", pass, note.str());
}

// --------------------------------------------------------------- criterion 11
struct SummaryRow {
  std::string label;
  double tgt_mean = 0.0;
  double tgt_std = 0.0;
};

void criterion_uda() {
  const fs::path dir = g_scratch / "uda";
  fs::remove_all(dir);
  fs::create_directories(dir);

  bool pass = run_cli("gen-data --out " + (dir / "data").string() +
                      " --seed 13 --per-class 25 --points 64 --jitter-sigma 0.04 "
                      "--crop-fraction 0.45 --density-bias 3.5 --rotation none") == 0;
  {
    // Weights follow the usual per-task grid search on the validation split;
    // the reconstruction weight compensates for the summed (unnormalized)
    // chamfer convention.
    std::ofstream cfg(dir / "run.cfg", std::ios::binary);
    cfg << "[train]\nepochs=40\nbatch_size=8\nseeds=1,2,3\n"
        << "encoder_widths=3,32,64,128\nclassifier_hidden=64\ndecoder_hidden=128\n"
        << "[weights]\nalpha=0.5\ngamma=0.002\nbeta1=0.1\nbeta2=0.2\n"
        << "[data]\ndataset_dir=" << (dir / "data").string() << "\n";
  }
  const std::string base = "train --config " + (dir / "run.cfg").string() + " --out " +
                           (dir / "runs").string() + " --jobs 2 ";
  pass = pass && run_cli(base + "--alignment none --gamma 0 --label source_only") == 0;
  // full ablation grid: alignment x deformation-selection mode x statistic
  for (const std::string alignment : {"nwd", "dnwd"}) {
    for (const std::string mode : {"lowest", "highest"}) {
      for (const std::string stat : {"entropy", "std"}) {
        const std::string label = alignment + "_" + mode + "_" + stat;
        pass = pass && run_cli(base + "--alignment " + alignment + " --deform-mode " + mode +
                               " --deform-stat " + stat + " --label " + label) == 0;
      }
    }
    pass = pass && run_cli(base + "--alignment " + alignment +
                           " --deform-mode random --label " + alignment + "_random") == 0;
  }

  std::map<std::string, SummaryRow> rows;
  {
    std::ifstream summary(dir / "runs" / "summary.csv");
    std::string line;
    std::getline(summary, line);  // header
    while (std::getline(summary, line)) {
      std::istringstream row(line);
      std::vector<std::string> fields;
      std::string field;
      while (std::getline(row, field, ',')) fields.push_back(field);
      if (fields.size() < 9) continue;
      SummaryRow r;
      r.label = fields[0];
      r.tgt_mean = std::stod(fields[7]);
      r.tgt_std = std::stod(fields[8]);
      rows[r.label] = r;
    }
  }

  std::cout << "    ablation grid (target test accuracy, mean +- std over seeds 1,2,3):\n";
  for (const auto& [label, row] : rows) {
    std::cout << "      " << label << ": " << format_double(row.tgt_mean) << " +- "
              << format_double(row.tgt_std) << "\n";
  }

  const bool have_rows = rows.count("source_only") && rows.count("dnwd_lowest_entropy");
  double cdnd = 0.0, baseline = 0.0;
  if (have_rows) {
    cdnd = rows["dnwd_lowest_entropy"].tgt_mean;
    baseline = rows["source_only"].tgt_mean;
  }
  pass = pass && have_rows && cdnd >= baseline;
  std::ostringstream note;
  note << "cdnd (dnwd+lowest+entropy) " << format_double(cdnd) << " vs source-only "
       << format_double(baseline) << "; grid of " << rows.size() << " rows reported";
  report(11, "domain adaptation beats the source-only baseline", pass, note.str());
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <cdnd-binary> [scratch-dir]\n";
    return 2;
  }
  g_cli = argv[1];
  g_scratch = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "cdnd_acceptance";
  fs::create_directories(g_scratch);

  criterion_curvature();
  criterion_entropy();
  criterion_deform_stats();
  criterion_chamfer();
  criterion_nuclear();
  criterion_gradients();
  criterion_mixture_axioms();
  criterion_w1();
  criterion_determinism();
  criterion_smoke_training();
  criterion_uda();

  if (g_failures == 0) {
    std::cout << "acceptance: all criteria passed" << std::endl;
    return 0;
  }
  std::cout << "acceptance: " << g_failures << " criterion(s) FAILED" << std::endl;
  return 1;
}
