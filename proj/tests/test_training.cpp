#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cdnd/errors.hpp"
#include "cdnd/training.hpp"

using namespace cdnd;
namespace fs = std::filesystem;

namespace {

TrainConfig micro_config() {
  TrainConfig config;
  config.encoder.widths = {3, 8, 12};
  config.classifier_hidden = {6};
  config.decoder_hidden = {8};
  config.batch_size = 2;
  config.epochs = 1;
  config.deform.k = 2;
  config.deform.m = 3;
  config.deform.curvature_neighborhood = 4;
  return config;
}

Models micro_models(const TrainConfig& config, int num_classes, std::uint64_t seed) {
  ClassifierParams cls;
  cls.hidden = config.classifier_hidden;
  cls.num_classes = static_cast<std::size_t>(num_classes);
  DecoderParams dec;
  dec.hidden = config.decoder_hidden;
  dec.output_points = static_cast<std::size_t>(config.deform.m + 1);
  return init_models(config.encoder, cls, dec, seed);
}

DomainBatch micro_batch(Domain domain, const DeformConfig& deform_cfg, std::uint64_t seed) {
  DomainBatch batch;
  batch.domain = domain;
  Rng rng(seed);
  for (int item = 0; item < 2; ++item) {
    ShapeSpec spec;
    spec.cls = item == 0 ? ShapeClass::kSphere : ShapeClass::kCone;
    spec.points = 16;
    batch.originals.push_back(generate_shape(spec, rng));
    batch.deformed.push_back(deform_cloud(batch.originals.back(), deform_cfg, rng));
  }
  if (domain == Domain::kSource) batch.labels = {0, 1};
  return batch;
}

bool tensors_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace

TEST_CASE("adam first step moves by about the learning rate") {
  Tensor param({4});
  param.fill(1.0);
  Tensor grad({4});
  grad.fill(1.0);
  Adam adam(0.001);
  std::vector<std::pair<std::string, Tensor*>> params{{"p", &param}};
  const std::vector<Tensor> grads{grad};
  adam.step(params, grads);
  for (std::size_t i = 0; i < param.size(); ++i)
    CHECK(param[i] == doctest::Approx(1.0 - 0.001).epsilon(1e-7));
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
  Tensor param({3}, {0.5, -0.25, 2.0});
  Tensor zero({3});
  Adam adam(0.01);
  std::vector<std::pair<std::string, Tensor*>> params{{"p", &param}};
  adam.step(params, std::array<Tensor, 1>{zero});
  CHECK(param[0] == 0.5);
  CHECK(param[1] == -0.25);
  CHECK(param[2] == 2.0);
}

TEST_CASE("adam matches a hand-stepped scalar recurrence on x^2") {
  const double lr = 0.1;
  Tensor x({1}, {1.0});
  Adam adam(lr);
  std::vector<std::pair<std::string, Tensor*>> params{{"x", &x}};

  // independent scalar recurrence
  double xr = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 3; ++t) {
    const double g_impl = 2.0 * x[0];
    Tensor g({1}, {g_impl});
    adam.step(params, std::array<Tensor, 1>{g});

    const double gr = 2.0 * xr;
    m = 0.9 * m + 0.1 * gr;
    v = 0.999 * v + 0.001 * gr * gr;
    const double mh = m / (1.0 - std::pow(0.9, t));
    const double vh = v / (1.0 - std::pow(0.999, t));
    xr -= lr * mh / (std::sqrt(vh) + 1e-8);
    CHECK(x[0] == doctest::Approx(xr).epsilon(1e-12));
  }
}

TEST_CASE("adam rejects non-finite gradients naming the parameter") {
  Tensor param({2});
  Tensor bad({2}, {1.0, std::nan("")});
  Adam adam(0.001);
  std::vector<std::pair<std::string, Tensor*>> params{{"enc.0.w", &param}};
  try {
    adam.step(params, std::array<Tensor, 1>{bad});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("enc.0.w") != std::string::npos);
  }
}

TEST_CASE("train_step is deterministic for fixed inputs") {
  const TrainConfig config = micro_config();
  const DomainBatch source = micro_batch(Domain::kSource, config.deform, 21);
  const DomainBatch target = micro_batch(Domain::kTarget, config.deform, 22);

  Models m1 = micro_models(config, 2, 5);
  Models m2 = micro_models(config, 2, 5);
  Adam a1(config.learning_rate), a2(config.learning_rate);
  train_step(m1, a1, source, target, config);
  train_step(m2, a2, source, target, config);
  const auto p1 = named_params(m1);
  const auto p2 = named_params(m2);
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(tensors_equal(*p1[i].second, *p2[i].second));
}

TEST_CASE("grl_lambda zero silences the adversarial gradient entirely") {
  TrainConfig with_adv = micro_config();
  with_adv.alignment = Alignment::kDnwd;
  with_adv.grl_lambda = 0.0;
  TrainConfig without = micro_config();
  without.alignment = Alignment::kNone;

  const DomainBatch source = micro_batch(Domain::kSource, with_adv.deform, 31);
  const DomainBatch target = micro_batch(Domain::kTarget, with_adv.deform, 32);

  Models m1 = micro_models(with_adv, 2, 6);
  Models m2 = micro_models(without, 2, 6);
  Adam a1(0.001), a2(0.001);
  train_step(m1, a1, source, target, with_adv);
  train_step(m2, a2, source, target, without);
  const auto p1 = named_params(m1);
  const auto p2 = named_params(m2);
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(tensors_equal(*p1[i].second, *p2[i].second));
}

TEST_CASE("min-max wiring: classifier ascends, encoder descends") {
  TrainConfig config = micro_config();
  config.alignment = Alignment::kDnwd;
  config.grl_lambda = 1.0;
  config.weights.alpha = 0.0;  // isolate the adversarial part
  config.weights.gamma = 0.0;

  const DomainBatch source = micro_batch(Domain::kSource, config.deform, 41);
  const DomainBatch target = micro_batch(Domain::kTarget, config.deform, 42);
  Models models = micro_models(config, 2, 7);

  // product wiring
  Tape tape;
  const ModelNodes nodes = lift(tape, models);
  const NodeId objective = build_train_objective(tape, nodes, models, source, target, config, nullptr);
  tape.backward(objective);

  // plain reference: the same adversarial losses without any reversal
  Tape ref;
  const ModelNodes ref_nodes = lift(ref, models);
  const std::size_t n = source.originals[0].size();
  const NodeId f_s = encode(ref, ref_nodes.encoder, ref.leaf(clouds_to_tensor(source.originals)), n);
  const NodeId f_sd = encode(ref, ref_nodes.encoder, ref.leaf(deformed_to_tensor(source.deformed)), n);
  const NodeId f_t = encode(ref, ref_nodes.encoder, ref.leaf(clouds_to_tensor(target.originals)), n);
  const NodeId f_td = encode(ref, ref_nodes.encoder, ref.leaf(deformed_to_tensor(target.deformed)), n);
  const std::array<NodeId, 2> s_streams{f_s, f_sd};
  const std::array<NodeId, 2> t_streams{f_t, f_td};
  const std::array<NodeId, 1> ps{classify(ref, ref_nodes.classifier, ref.concat_rows(s_streams)).probs};
  const std::array<NodeId, 1> pt{classify(ref, ref_nodes.classifier, ref.concat_rows(t_streams)).probs};
  const NodeId align = batch_nuclear_discrepancy(ref, ps, pt);
  const std::array<NodeId, 1> po{classify(ref, ref_nodes.classifier, f_t).probs};
  const std::array<NodeId, 1> pd{classify(ref, ref_nodes.classifier, f_td).probs};
  const NodeId cons = target_consistency_loss(ref, po, pd);
  const NodeId plain = ref.add(ref.scalar_multiply(align, config.weights.beta1),
                               ref.scalar_multiply(cons, config.weights.beta2));
  ref.backward(plain);

  const std::vector<NodeId> ours = param_node_order(nodes);
  const std::vector<NodeId> theirs = param_node_order(ref_nodes);
  const auto names = named_params(models);
  REQUIRE(ours.size() == names.size());
  for (std::size_t i = 0; i < ours.size(); ++i) {
    const Tensor& g = tape.grad(ours[i]);
    const Tensor& g_plain = ref.grad(theirs[i]);
    const bool is_classifier = names[i].first.starts_with("cls.");
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (is_classifier) {
        CHECK(g[j] == -g_plain[j]);  // ascends the discrepancy
      } else {
        CHECK(g[j] == g_plain[j]);  // descends it, sign unchanged
      }
    }
  }
}

TEST_CASE("evaluate argmax accuracy with lowest-index tie rule") {
  TrainConfig config = micro_config();
  Models models = micro_models(config, 4, 8);
  // zero classifier => all logits equal => argmax always class 0
  for (Tensor& w : models.classifier.weights) w.fill(0.0);
  for (Tensor& b : models.classifier.biases) b.fill(0.0);

  std::vector<LabeledCloud> items;
  Rng rng(9);
  for (int label = 0; label < 4; ++label) {
    for (int i = 0; i < 3; ++i) {
      ShapeSpec spec;
      spec.cls = static_cast<ShapeClass>(label);
      spec.points = 16;
      LabeledCloud item;
      item.cloud = generate_shape(spec, rng);
      item.label = label;
      items.push_back(std::move(item));
    }
  }
  CHECK(evaluate(models, items) == doctest::Approx(0.25));  // class 0 share

  // with the tie rule every prediction is class 0, so a label-0 item scores 1
  std::vector<LabeledCloud> zeros{items[0]};
  zeros[0].label = 0;
  CHECK(evaluate(models, zeros) == doctest::Approx(1.0));

  CHECK_THROWS_AS(evaluate(models, std::vector<LabeledCloud>{}), std::invalid_argument);
}

TEST_CASE("evaluate matches a per-sample recount oracle") {
  TrainConfig config = micro_config();
  const Models models = micro_models(config, 4, 12);
  std::vector<LabeledCloud> items;
  Rng rng(13);
  for (int label = 0; label < 4; ++label) {
    for (int i = 0; i < 4; ++i) {
      ShapeSpec spec;
      spec.cls = static_cast<ShapeClass>(label);
      spec.points = 16;
      LabeledCloud item;
      item.cloud = generate_shape(spec, rng);
      item.label = label;
      items.push_back(std::move(item));
    }
  }
  std::vector<PointCloud> clouds;
  for (const LabeledCloud& item : items) clouds.push_back(item.cloud);
  const Tensor logits = classify_logits(models, clouds);
  int correct = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c)
      if (logits.at(r, c) > logits.at(r, best)) best = c;
    if (static_cast<int>(best) == items[r].label) ++correct;
  }
  CHECK(evaluate(models, items) ==
        doctest::Approx(static_cast<double>(correct) / static_cast<double>(items.size())));
}

TEST_CASE("training on the smoke setup reduces the classification loss") {
  TrainConfig config = micro_config();
  config.alignment = Alignment::kNone;
  config.weights.gamma = 0.0;
  config.learning_rate = 0.003;

  Models models = micro_models(config, 2, 10);
  Adam adam(config.learning_rate);
  Rng batch_rng(11);

  double first_epoch = 0.0, last_epoch = 0.0;
  const int epochs = 100;
  const DomainBatch target = micro_batch(Domain::kTarget, config.deform, 77);
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    const DomainBatch source = micro_batch(Domain::kSource, config.deform, 50 + epoch % 3);
    const StepLosses losses = train_step(models, adam, source, target, config);
    if (epoch == 1) first_epoch = losses.cls;
    if (epoch == epochs) last_epoch = losses.cls;
  }
  CHECK(last_epoch < first_epoch);
}

TEST_CASE("run_experiment writes per-seed files and aggregates") {
  const fs::path dir = fs::temp_directory_path() / "cdnd_training_test";
  fs::remove_all(dir);
  fs::create_directories(dir / "data");

  std::vector<ShapeSpec> shapes;
  for (ShapeClass cls : {ShapeClass::kSphere, ShapeClass::kBox}) {
    ShapeSpec spec;
    spec.cls = cls;
    spec.points = 16;
    shapes.push_back(spec);
  }
  DomainShiftConfig shift;
  shift.jitter_sigma = 0.03;
  generate_dataset(shapes, shift, 10, 5, dir / "data");
  const Dataset dataset = load_dataset(dir / "data", "clean", "shifted");
  CHECK(dataset.num_classes == 2);
  CHECK(dataset.points_per_cloud == 16);
  CHECK(dataset.source.train.size() == 14);
  CHECK(dataset.source.val.size() == 3);
  CHECK(dataset.source.test.size() == 3);

  TrainConfig config = micro_config();
  config.epochs = 2;
  config.batch_size = 4;
  config.seeds = {1};
  config.deform.curvature_neighborhood = 4;

  const RunMetrics metrics = run_experiment(config, dataset, dir / "run", "echo=1\n", 1);
  CHECK(metrics.per_seed.size() == 1);
  CHECK(metrics.src_val_std == 0.0);  // single seed
  CHECK(metrics.tgt_test_std == 0.0);
  CHECK(fs::exists(dir / "run" / "seed_1" / "metrics.csv"));
  CHECK(fs::exists(dir / "run" / "seed_1" / "checkpoint.cdnd"));
  CHECK(fs::exists(dir / "run" / "seed_1" / "embeddings.csv"));

  const std::string metrics_text = slurp(dir / "run" / "seed_1" / "metrics.csv");
  CHECK(metrics_text.starts_with("epoch,l_cls,l_ssl,l_dnwd,l_nwd_t,src_acc,tgt_acc\n"));

  const std::string embeddings = slurp(dir / "run" / "seed_1" / "embeddings.csv");
  CHECK(embeddings.starts_with("sample_id,domain,label,dim_0,dim_1\n"));

  // rerun reproduces every byte
  const RunMetrics again = run_experiment(config, dataset, dir / "run2", "echo=1\n", 1);
  CHECK(slurp(dir / "run2" / "seed_1" / "metrics.csv") == metrics_text);
  CHECK(slurp(dir / "run2" / "seed_1" / "checkpoint.cdnd") ==
        slurp(dir / "run" / "seed_1" / "checkpoint.cdnd"));
  CHECK(again.tgt_test_mean == metrics.tgt_test_mean);

  fs::remove_all(dir);
}

TEST_CASE("checkpoint from run_experiment restores and reproduces evaluation") {
  const fs::path dir = fs::temp_directory_path() / "cdnd_training_ckpt";
  fs::remove_all(dir);
  std::vector<ShapeSpec> shapes;
  for (ShapeClass cls : {ShapeClass::kSphere, ShapeClass::kCone}) {
    ShapeSpec spec;
    spec.cls = cls;
    spec.points = 16;
    shapes.push_back(spec);
  }
  generate_dataset(shapes, DomainShiftConfig{}, 8, 3, dir / "data");
  const Dataset dataset = load_dataset(dir / "data", "clean", "shifted");

  TrainConfig config = micro_config();
  config.epochs = 1;
  config.batch_size = 4;
  config.seeds = {2};
  run_experiment(config, dataset, dir / "run", "", 1);

  const Checkpoint ckpt = load_checkpoint(dir / "run" / "seed_2" / "checkpoint.cdnd");
  CHECK(ckpt.seed == 2);
  CHECK(ckpt.epoch == 1);
  Models restored = micro_models(config, dataset.num_classes, 999);
  restore_models(restored, ckpt);
  const double acc = evaluate(restored, dataset.source.val);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  fs::remove_all(dir);
}
