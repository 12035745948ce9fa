#include "cdnd/verify.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "cdnd/autodiff.hpp"
#include "cdnd/geometry.hpp"
#include "cdnd/losses.hpp"
#include "cdnd/models.hpp"
#include "cdnd/ot_theory.hpp"
#include "cdnd/synth_data.hpp"

namespace cdnd {

namespace {

void check(SuiteReport& report, const std::string& name, double deviation, double tolerance,
           const std::string& note = "") {
  report.checks.push_back(CheckResult{name, deviation <= tolerance, deviation, note});
}

PointCloud random_cloud(std::size_t n, Rng& rng) {
  PointCloud cloud;
  cloud.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    cloud.points.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
  return cloud;
}

// ---- geometry oracles (independent re-derivations) ----

std::vector<int> fps_oracle(const PointCloud& cloud, int k) {
  const std::size_t n = cloud.size();
  std::vector<int> chosen{0};
  std::vector<bool> taken(n, false);
  taken[0] = true;
  while (chosen.size() < static_cast<std::size_t>(k)) {
    int best = -1;
    double best_dist = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      double nearest = std::numeric_limits<double>::infinity();
      for (int c : chosen)
        nearest = std::min(nearest, (cloud.points[i] - cloud.points[static_cast<std::size_t>(c)]).norm());
      if (nearest > best_dist) {
        best_dist = nearest;
        best = static_cast<int>(i);
      }
    }
    chosen.push_back(best);
    taken[static_cast<std::size_t>(best)] = true;
  }
  return chosen;
}

std::vector<int> knn_oracle(const PointCloud& cloud, int query, int m) {
  std::vector<std::pair<double, int>> all;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (static_cast<int>(i) == query) continue;
    all.emplace_back((cloud.points[i] - cloud.points[static_cast<std::size_t>(query)]).norm(),
                     static_cast<int>(i));
  }
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second < b.second;
  });
  std::vector<int> out;
  for (int i = 0; i < m; ++i) out.push_back(all[static_cast<std::size_t>(i)].second);
  return out;
}

SuiteReport geometry_suite() {
  SuiteReport report;
  report.suite = "geometry";
  Rng rng(20240601);

  {  // FPS and kNN agree with exhaustive recomputation on small clouds
    int fps_mismatch = 0;
    int knn_mismatch = 0;
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 8 + rng.uniform_index(57);  // up to 64
      const PointCloud cloud = random_cloud(n, rng);
      const int k = 1 + static_cast<int>(rng.uniform_index(n));
      Rng fps_rng(0);
      if (farthest_point_sample(cloud, k, FpsStart::kIndexZero, fps_rng) != fps_oracle(cloud, k))
        ++fps_mismatch;
      const int m = 1 + static_cast<int>(rng.uniform_index(n - 1));
      const int query = static_cast<int>(rng.uniform_index(n));
      if (k_nearest(cloud, query, m) != knn_oracle(cloud, query, m)) ++knn_mismatch;
    }
    check(report, "fps_matches_bruteforce", fps_mismatch, 0, "mismatching clouds");
    check(report, "knn_matches_bruteforce", knn_mismatch, 0, "mismatching clouds");
  }

  {  // coplanar neighborhoods have zero curvature
    PointCloud plane;
    Rng prng(7);
    for (int i = 0; i < 24; ++i)
      plane.points.push_back({prng.uniform(-1.0, 1.0), prng.uniform(-1.0, 1.0), 0.0});
    const CurvatureField field = pca_curvature(plane, 12);
    double worst = 0.0;
    for (double c : field.curvatures) worst = std::max(worst, std::abs(c));
    check(report, "curvature_coplanar_zero", worst, 1e-9);
  }

  {  // isotropic cube-corner neighborhood reaches the 1/3 ceiling
    PointCloud cube;
    for (int i = 0; i < 8; ++i)
      cube.points.push_back({i & 1 ? 1.0 : -1.0, i & 2 ? 1.0 : -1.0, i & 4 ? 1.0 : -1.0});
    const CurvatureField field = pca_curvature(cube, 8);
    double worst = 0.0;
    for (double c : field.curvatures) worst = std::max(worst, std::abs(c - 1.0 / 3.0));
    check(report, "curvature_cube_third", worst, 1e-9);
  }

  {  // range bound and rigid invariance
    double out_of_range = 0.0;
    double invariance = 0.0;
    for (int trial = 0; trial < 25; ++trial) {
      const PointCloud cloud = random_cloud(40, rng);
      const CurvatureField field = pca_curvature(cloud, 10);
      for (double c : field.curvatures)
        out_of_range = std::max({out_of_range, -c, c - (1.0 / 3.0 + 1e-9)});

      const double angle = rng.uniform() * 6.28318530717958647;
      const double ca = std::cos(angle);
      const double sa = std::sin(angle);
      const Vec3 shift{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
      PointCloud moved = cloud;
      for (Vec3& p : moved.points) {
        const double x = ca * p.x - sa * p.y;
        const double y = sa * p.x + ca * p.y;
        p = Vec3{x, y, p.z} + shift;
      }
      const CurvatureField moved_field = pca_curvature(moved, 10);
      for (std::size_t i = 0; i < field.curvatures.size(); ++i)
        invariance = std::max(invariance, std::abs(field.curvatures[i] - moved_field.curvatures[i]));
    }
    check(report, "curvature_in_range", out_of_range, 0.0);
    check(report, "curvature_rigid_invariance", invariance, 1e-6);
  }

  {  // entropy contract
    CurvatureField constant_field;
    constant_field.curvatures.assign(9, 0.2);
    Region region;
    region.member_indices = {0, 1, 2, 3, 4, 5, 6, 7, 8};
    region.center_index = 0;
    const double h_const =
        diversity_score(region, constant_field, DiversityStatistic::kEntropy).score;
    check(report, "entropy_constant_zero", std::abs(h_const), 0.0);

    CurvatureField three;
    three.curvatures = {0.0, 0.5, 1.0};
    Region r3;
    r3.member_indices = {0, 1, 2};
    const double h3 = diversity_score(r3, three, DiversityStatistic::kEntropy).score;
    check(report, "entropy_known_value", std::abs(h3 - 0.34657), 1e-4);

    double floor_violation = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      CurvatureField f;
      const std::size_t count = 2 + rng.uniform_index(15);
      for (std::size_t i = 0; i < count; ++i) f.curvatures.push_back(rng.uniform() / 3.0);
      Region rr;
      for (std::size_t i = 0; i < count; ++i) rr.member_indices.push_back(static_cast<int>(i));
      const double h = diversity_score(rr, f, DiversityStatistic::kEntropy).score;
      floor_violation =
          std::max(floor_violation, -(h + 1e-9 * static_cast<double>(count)));
    }
    check(report, "entropy_floor", std::max(floor_violation, 0.0), 0.0);
  }

  {  // deformation locality and Gaussian statistics
    const PointCloud cloud = random_cloud(300, rng);
    Region region;
    region.center_index = 0;
    std::vector<int> members(280);
    std::iota(members.begin(), members.end(), 0);
    region.member_indices = members;
    Rng drng(99);
    const DeformedCloud deformed = deform(cloud, {region}, 0.001, drng);

    double outside = 0.0;
    for (std::size_t i = 280; i < cloud.size(); ++i) {
      outside = std::max(outside, std::abs(cloud.points[i].x - deformed.points[i].x) +
                                      std::abs(cloud.points[i].y - deformed.points[i].y) +
                                      std::abs(cloud.points[i].z - deformed.points[i].z));
    }
    check(report, "deform_locality", outside, 0.0);

    Vec3 centroid;
    for (int idx : members) centroid = centroid + cloud.points[static_cast<std::size_t>(idx)];
    centroid = centroid * (1.0 / 280.0);
    Vec3 mean;
    for (int idx : deformed.deformed_indices) mean = mean + deformed.points[static_cast<std::size_t>(idx)];
    mean = mean * (1.0 / 280.0);
    const double mean_tol = 4.0 * std::sqrt(0.001 / 280.0);
    const double mean_dev = std::max({std::abs(mean.x - centroid.x), std::abs(mean.y - centroid.y),
                                      std::abs(mean.z - centroid.z)});
    check(report, "deform_mean_near_centroid", mean_dev, mean_tol);

    double var = 0.0;
    for (int idx : deformed.deformed_indices) {
      const Vec3 d = deformed.points[static_cast<std::size_t>(idx)] - mean;
      var += d.norm2();
    }
    var /= 3.0 * 280.0;
    const double var_dev = std::max({0.0007 - var, var - 0.0013});
    check(report, "deform_variance_window", std::max(var_dev, 0.0), 0.0,
          "sample variance " + format_double(var));
  }

  return report;
}

// ---- gradient suite ----

struct MicroSetup {
  Models models;
  DomainBatch source;
  DomainBatch target;
  LossWeights weights;
};

MicroSetup make_micro_setup() {
  MicroSetup setup;
  EncoderParams enc;
  enc.widths = {3, 8, 12};
  ClassifierParams cls;
  cls.hidden = {6};
  cls.num_classes = 2;
  DecoderParams dec;
  dec.hidden = {8};
  dec.output_points = 4;
  setup.models = init_models(enc, cls, dec, 11);

  DeformConfig deform_cfg;
  deform_cfg.k = 2;
  deform_cfg.m = 3;
  deform_cfg.n_deform = 1;
  deform_cfg.curvature_neighborhood = 4;

  Rng rng(31);
  const auto fill = [&](DomainBatch& batch, Domain domain, ShapeClass a, ShapeClass b) {
    batch.domain = domain;
    for (ShapeClass c : {a, b}) {
      ShapeSpec spec;
      spec.cls = c;
      spec.points = 16;
      batch.originals.push_back(generate_shape(spec, rng));
      batch.deformed.push_back(deform_cloud(batch.originals.back(), deform_cfg, rng));
    }
    if (domain == Domain::kSource) batch.labels = {0, 1};
  };
  fill(setup.source, Domain::kSource, ShapeClass::kSphere, ShapeClass::kBox);
  fill(setup.target, Domain::kTarget, ShapeClass::kCone, ShapeClass::kCylinder);
  return setup;
}

// The full objective with both gradient-reversal stages exposed: inner_lambda
// sits between encoder and the adversarial classifier passes, top_lambda
// wraps the adversarial scalar. (-1, -1) turns both into exact identities so
// the tape gradient equals the gradient of the forward value.
NodeId build_objective(Tape& tape, const ModelNodes& nodes, const MicroSetup& setup,
                       double inner_lambda, double top_lambda) {
  const std::size_t n = setup.source.originals[0].size();
  const NodeId f_s = encode(tape, nodes.encoder, tape.leaf(clouds_to_tensor(setup.source.originals)), n);
  const NodeId f_sd = encode(tape, nodes.encoder, tape.leaf(deformed_to_tensor(setup.source.deformed)), n);
  const NodeId f_t = encode(tape, nodes.encoder, tape.leaf(clouds_to_tensor(setup.target.originals)), n);
  const NodeId f_td = encode(tape, nodes.encoder, tape.leaf(deformed_to_tensor(setup.target.deformed)), n);

  const std::array<NodeId, 2> source_streams{f_s, f_sd};
  const NodeId f_s_mix = tape.concat_rows(source_streams);
  std::vector<int> labels = setup.source.labels;
  labels.insert(labels.end(), setup.source.labels.begin(), setup.source.labels.end());
  const NodeId l_cls = cls_loss(tape, classify(tape, nodes.classifier, f_s_mix).probs, labels);

  const std::size_t r = setup.models.decoder_cfg.output_points;
  const NodeId rec_s = reconstruct(tape, nodes.decoder, f_sd, r, r);
  const NodeId rec_t = reconstruct(tape, nodes.decoder, f_td, r, r);
  std::vector<std::pair<Tensor, NodeId>> pairs;
  const auto add_pairs = [&](const DomainBatch& batch, NodeId rec) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      Tensor target({batch.deformed[i].original_region_points.size(), 3});
      for (std::size_t j = 0; j < batch.deformed[i].original_region_points.size(); ++j) {
        target.at(j, 0) = batch.deformed[i].original_region_points[j].x;
        target.at(j, 1) = batch.deformed[i].original_region_points[j].y;
        target.at(j, 2) = batch.deformed[i].original_region_points[j].z;
      }
      pairs.emplace_back(std::move(target), tape.reshape(tape.slice_rows(rec, i, 1), {r, 3}));
    }
  };
  add_pairs(setup.source, rec_s);
  add_pairs(setup.target, rec_t);
  const NodeId l_ssl = ssl_loss(tape, pairs);

  const auto adv_probs = [&](NodeId features) {
    return classify(tape, nodes.classifier, tape.gradient_reverse(features, inner_lambda)).probs;
  };
  const std::array<NodeId, 2> target_streams{f_t, f_td};
  const std::array<NodeId, 1> ps{adv_probs(f_s_mix)};
  const std::array<NodeId, 1> pt{adv_probs(tape.concat_rows(target_streams))};
  const NodeId l_align = batch_nuclear_discrepancy(tape, ps, pt);
  const std::array<NodeId, 1> pt_orig{adv_probs(f_t)};
  const std::array<NodeId, 1> pt_def{adv_probs(f_td)};
  const NodeId l_cons = target_consistency_loss(tape, pt_orig, pt_def);

  const NodeId supervised = tape.add(tape.scalar_multiply(l_cls, setup.weights.alpha),
                                     tape.scalar_multiply(l_ssl, setup.weights.gamma));
  const NodeId adversarial = tape.add(tape.scalar_multiply(l_align, setup.weights.beta1),
                                      tape.scalar_multiply(l_cons, setup.weights.beta2));
  return tape.add(supervised, tape.gradient_reverse(adversarial, top_lambda));
}

SuiteReport grad_suite() {
  SuiteReport report;
  report.suite = "grad";
  Rng rng(515151);

  {  // exact-gradient sanity: f(x) = |x|^2
    Tensor x({6});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
    const TapeFn f = [](Tape& tape, NodeId in) {
      const NodeId m = tape.reshape(in, {1, 6});
      const NodeId mt = tape.reshape(in, {6, 1});
      return tape.reshape(tape.matmul(m, mt), {1});
    };
    check(report, "fd_quadratic", finite_difference_check(f, x, 1e-5).max_rel_error, 1e-6);
  }

  {  // dense relu chain + softmax + cross entropy
    Tensor x({12});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
    const TapeFn f = [&](Tape& tape, NodeId in) {
      const NodeId m = tape.reshape(in, {4, 3});
      Tensor w({3, 3});
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 * static_cast<double>(i % 5) - 0.5;
      const NodeId h = tape.relu(tape.matmul(m, tape.leaf(w)));
      const NodeId p = tape.softmax_rows(h);
      return tape.cross_entropy(p, {0, 2, 1, 0});
    };
    check(report, "fd_mlp_cross_entropy", finite_difference_check(f, x, 1e-5).max_rel_error, 1e-4);
  }

  {  // nuclear norm at a matrix with distinct singular values
    Tensor x({12});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0) + 0.1 * static_cast<double>(i);
    const TapeFn f = [](Tape& tape, NodeId in) {
      return tape.nuclear_norm(tape.reshape(in, {4, 3}));
    };
    check(report, "fd_nuclear_norm", finite_difference_check(f, x, 1e-5).max_rel_error, 1e-4);
  }

  {  // chamfer between two free point sets
    Tensor x({24});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
    const TapeFn f = [](Tape& tape, NodeId in) {
      const NodeId m = tape.reshape(in, {8, 3});
      const NodeId a = tape.slice_rows(m, 0, 4);
      const NodeId b = tape.slice_rows(m, 4, 4);
      return tape.chamfer(a, b);
    };
    check(report, "fd_chamfer", finite_difference_check(f, x, 1e-5).max_rel_error, 1e-4);
  }

  MicroSetup setup = make_micro_setup();

  {  // composed objective (both reversal stages neutralized)
    const Tensor flat = pack_params(setup.models);
    const TapeFn f = [&](Tape& tape, NodeId in) {
      const ModelNodes nodes = lift_from_flat(tape, setup.models, in);
      return build_objective(tape, nodes, setup, -1.0, -1.0);
    };
    const FdCheckReport fd = finite_difference_check(f, flat, 1e-5);
    check(report, "fd_full_objective", fd.max_rel_error, 1e-4,
          "worst coordinate " + std::to_string(fd.worst_coordinate));
  }

  {  // gradient reversal is exactly -lambda times the upstream gradient
    double worst = 0.0;
    for (double lambda : {0.0, 0.5, 1.0, -2.0}) {
      Tape tape;
      Tensor x({3});
      x[0] = 0.3;
      x[1] = -0.4;
      x[2] = 1.7;
      const NodeId in = tape.leaf(x);
      const NodeId out = tape.gradient_reverse(in, lambda);
      const NodeId root = tape.mean(out);
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (tape.value(out)[i] != x[i]) worst = std::max(worst, 1.0);  // forward must be bit-exact
      }
      tape.backward(root);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double expected = -lambda * (1.0 / 3.0);
        worst = std::max(worst, std::abs(tape.grad(in)[i] - expected));
      }
    }
    check(report, "grl_backward_exact", worst, 0.0);
  }

  {  // double reversal restores the gradient exactly
    Tape tape;
    Tensor x({4});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.25 * static_cast<double>(i + 1);
    const NodeId in = tape.leaf(x);
    const NodeId plain = tape.mean(in);
    tape.backward(plain);
    const Tensor reference = tape.grad(in);

    Tape tape2;
    const NodeId in2 = tape2.leaf(x);
    const NodeId twice = tape2.mean(tape2.gradient_reverse(tape2.gradient_reverse(in2, 1.0), 1.0));
    tape2.backward(twice);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
      worst = std::max(worst, std::abs(tape2.grad(in2)[i] - reference[i]));
    check(report, "grl_double_restores", worst, 0.0);
  }

  {  // backward of a sum equals the sum of backwards
    Tensor x({10});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
    Tape tape;
    const NodeId in = tape.leaf(x);
    const NodeId m = tape.reshape(in, {5, 2});
    const NodeId l1 = tape.mean(tape.relu(m));
    const NodeId l2 = tape.nuclear_norm(m);
    const NodeId sum = tape.add(l1, l2);
    tape.backward(l1);
    Tensor g1 = tape.grad(in);
    tape.backward(l2);
    Tensor g2 = tape.grad(in);
    tape.backward(sum);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
      worst = std::max(worst, std::abs(tape.grad(in)[i] - (g1[i] + g2[i])));
    check(report, "backward_linearity", worst, 1e-10);
  }

  {  // two identical passes produce bit-identical gradients
    const Tensor flat = pack_params(setup.models);
    Tape tape;
    const NodeId in = tape.leaf(flat);
    const ModelNodes nodes = lift_from_flat(tape, setup.models, in);
    const NodeId root = build_objective(tape, nodes, setup, 1.0, 1.0);
    tape.backward(root);
    const Tensor first = tape.grad(in);
    tape.recompute();
    tape.backward(root);
    double worst = 0.0;
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (tape.grad(in)[i] != first[i]) worst = 1.0;
    }
    check(report, "two_pass_bit_identical", worst, 0.0);
  }

  return report;
}

// ---- theory suite ----

double w1_enumeration_oracle(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                             const FiniteMetric& metric) {
  std::vector<std::size_t> perm(nu.support.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i)
      total += metric.distance(mu.support[i], nu.support[perm[i]]);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(mu.support.size());
}

DiscreteMeasure random_measure(int atom_count, int id_offset, Rng& rng) {
  DiscreteMeasure nu;
  double total = 0.0;
  for (int i = 0; i < atom_count; ++i) {
    nu.support.push_back(id_offset + i);
    const double w = rng.uniform() + 1e-3;
    nu.weights.push_back(w);
    total += w;
  }
  for (double& w : nu.weights) w /= total;
  // Exact renormalization: push the rounding residual into the last atom.
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < nu.weights.size(); ++i) sum += nu.weights[i];
  nu.weights.back() = 1.0 - sum;
  return nu;
}

SuiteReport theory_suite() {
  SuiteReport report;
  report.suite = "theory";
  Rng rng(77001);

  {  // mixture measures satisfy the probability axioms
    int failures = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const int a = 1 + static_cast<int>(rng.uniform_index(12));
      const int b = 1 + static_cast<int>(rng.uniform_index(12));
      const double p1 = rng.uniform();
      const DiscreteMeasure nu1 = random_measure(a, 0, rng);
      const DiscreteMeasure nu2 = random_measure(b, a, rng);
      const DiscreteMeasure nu3 = mixture(nu1, nu2, p1, 1.0 - p1);
      const AxiomReport axioms = check_probability_axioms(nu3, 500, rng);
      if (!axioms.pass) ++failures;
      worst = std::max(worst, axioms.worst_deviation);
    }
    check(report, "mixture_measure_axioms", failures, 0,
          "worst deviation " + format_double(worst));
  }

  {  // exact solver equals exhaustive matching enumeration (supports <= 6)
    double worst = 0.0;
    for (int trial = 0; trial < 60; ++trial) {
      const int total_points = 12;
      std::vector<std::vector<double>> coords;
      for (int i = 0; i < total_points; ++i)
        coords.push_back({rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)});
      const FiniteMetric metric = FiniteMetric::from_coordinates(coords);
      const int s = 1 + static_cast<int>(rng.uniform_index(6));
      const std::vector<int> picks = rng.sample_without_replacement(total_points, 2 * s);
      DiscreteMeasure mu = DiscreteMeasure::uniform({picks.begin(), picks.begin() + s});
      DiscreteMeasure nu = DiscreteMeasure::uniform({picks.begin() + s, picks.end()});
      worst = std::max(worst, std::abs(wasserstein1_exact(mu, nu, metric) -
                                       w1_enumeration_oracle(mu, nu, metric)));
    }
    check(report, "w1_matches_enumeration", worst, 1e-12);
  }

  {  // sorted-coordinate closed form on the real line
    double worst = 0.0;
    for (int trial = 0; trial < 40; ++trial) {
      const int s = 2 + static_cast<int>(rng.uniform_index(7));
      std::vector<double> coords;
      for (int i = 0; i < 2 * s; ++i) coords.push_back(rng.uniform(-5.0, 5.0));
      const FiniteMetric metric = FiniteMetric::from_line(coords);
      std::vector<int> ids(2 * s);
      std::iota(ids.begin(), ids.end(), 0);
      DiscreteMeasure mu = DiscreteMeasure::uniform({ids.begin(), ids.begin() + s});
      DiscreteMeasure nu = DiscreteMeasure::uniform({ids.begin() + s, ids.end()});

      std::vector<double> xs, ys;
      for (int i = 0; i < s; ++i) xs.push_back(coords[static_cast<std::size_t>(i)]);
      for (int i = s; i < 2 * s; ++i) ys.push_back(coords[static_cast<std::size_t>(i)]);
      std::sort(xs.begin(), xs.end());
      std::sort(ys.begin(), ys.end());
      double closed_form = 0.0;
      for (int i = 0; i < s; ++i) closed_form += std::abs(xs[static_cast<std::size_t>(i)] - ys[static_cast<std::size_t>(i)]);
      closed_form /= static_cast<double>(s);
      worst = std::max(worst, std::abs(wasserstein1_exact(mu, nu, metric) - closed_form));
    }
    check(report, "w1_line_closed_form", worst, 1e-12);
  }

  {  // W1 between point masses is the ground distance
    const FiniteMetric metric = FiniteMetric::from_line(std::array{0.0, 2.5, 7.0});
    const double w = wasserstein1_exact(DiscreteMeasure::dirac(0), DiscreteMeasure::dirac(2), metric);
    check(report, "w1_dirac_distance", std::abs(w - 7.0), 1e-12);
  }

  {  // distance axioms on random metrics, including constant cross-block ones
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
      FiniteMetric metric = [&]() {
        if (trial % 2 == 0) {
          std::vector<std::vector<double>> coords;
          for (int i = 0; i < 9; ++i) coords.push_back({rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)});
          return FiniteMetric::from_coordinates(coords);
        }
        std::vector<double> left, right;
        for (int i = 0; i < 5; ++i) left.push_back(rng.uniform(0.0, 2.0) + static_cast<double>(i));
        for (int i = 0; i < 4; ++i) right.push_back(rng.uniform(0.0, 2.0) + static_cast<double>(i));
        const FiniteMetric a = FiniteMetric::from_line(left);
        const FiniteMetric b = FiniteMetric::from_line(right);
        return FiniteMetric::two_block(a, b, 6.0 + rng.uniform());
      }();
      const int s = 2 + static_cast<int>(rng.uniform_index(2));
      std::vector<DiscreteMeasure> samples;
      for (int m = 0; m < 3; ++m)
        samples.push_back(DiscreteMeasure::uniform(rng.sample_without_replacement(metric.size(), s)));
      const AxiomReport axioms = metric_axioms_check(metric, samples);
      worst = std::max(worst, axioms.worst_deviation);
    }
    check(report, "w1_metric_axioms", worst, 1e-9);
  }

  {  // Frobenius/nuclear sandwich and the row-stochastic trace identity
    double worst = 0.0;
    int failures = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t rows = 1 + rng.uniform_index(8);
      const std::size_t cols = 1 + rng.uniform_index(6);
      Tensor p({rows, cols});
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = rng.uniform(-2.0, 2.0);
      if (trial % 2 == 0) {
        // softmax rows make it a prediction matrix
        for (std::size_t r = 0; r < rows; ++r) {
          double denom = 0.0;
          for (std::size_t c = 0; c < cols; ++c) denom += std::exp(p.at(r, c));
          for (std::size_t c = 0; c < cols; ++c) p.at(r, c) = std::exp(p.at(r, c)) / denom;
        }
      }
      const NormBoundsReport bounds = nuclear_frobenius_bounds(p);
      if (!bounds.pass) ++failures;
      worst = std::max(worst, bounds.worst_deviation);
    }
    check(report, "nuclear_frobenius_sandwich", failures, 0,
          "worst deviation " + format_double(worst));
  }

  return report;
}

}  // namespace

bool SuiteReport::all_pass() const {
  for (const CheckResult& c : checks)
    if (!c.pass) return false;
  return true;
}

SuiteReport verify_grad() { return grad_suite(); }
SuiteReport verify_theory() { return theory_suite(); }
SuiteReport verify_geometry() { return geometry_suite(); }

std::vector<SuiteReport> verify_all() {
  return {verify_geometry(), verify_grad(), verify_theory()};
}

void print_report(std::ostream& out, const SuiteReport& report) {
  out << "suite " << report.suite << "\n";
  for (const CheckResult& c : report.checks) {
    out << (c.pass ? "  [ok]   " : "  [FAIL] ") << c.name
        << " deviation=" << format_double(c.deviation);
    if (!c.note.empty()) out << " (" << c.note << ")";
    out << "\n";
  }
}

}  // namespace cdnd
