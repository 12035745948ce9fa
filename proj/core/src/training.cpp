#include "cdnd/training.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "cdnd/errors.hpp"

namespace cdnd {

namespace {

constexpr std::uint64_t kDeformStreamSalt = 0x9E3779B97F4A7C15ULL;

Tensor region_target(const DeformedCloud& deformed) {
  Tensor target({deformed.original_region_points.size(), 3});
  for (std::size_t i = 0; i < deformed.original_region_points.size(); ++i) {
    target.at(i, 0) = deformed.original_region_points[i].x;
    target.at(i, 1) = deformed.original_region_points[i].y;
    target.at(i, 2) = deformed.original_region_points[i].z;
  }
  return target;
}

DomainBatch make_batch(std::span<const LabeledCloud> items, std::span<const std::size_t> order,
                       std::size_t begin, std::size_t end, Domain domain,
                       const DeformConfig& deform_cfg, Rng& deform_rng) {
  DomainBatch batch;
  batch.domain = domain;
  for (std::size_t s = begin; s < end; ++s) {
    const LabeledCloud& item = items[order[s]];
    batch.originals.push_back(item.cloud);
    batch.deformed.push_back(deform_cloud(item.cloud, deform_cfg, deform_rng));
    batch.deformed.back().source_cloud_id = item.id;
    if (domain == Domain::kSource) batch.labels.push_back(item.label);
  }
  return batch;
}

double mean_of(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double std_of(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(xs.size()));
}

}  // namespace

std::string alignment_name(Alignment a) {
  switch (a) {
    case Alignment::kNone: return "none";
    case Alignment::kNwd: return "nwd";
    case Alignment::kDnwd: return "dnwd";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate <= 0");
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs < 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size < 1");
  if (!std::isfinite(grl_lambda)) throw std::invalid_argument("TrainConfig: grl_lambda not finite");
  if (seeds.empty()) throw std::invalid_argument("TrainConfig: no seeds");
  weights.validate();
}

void Adam::step(std::span<const std::pair<std::string, Tensor*>> params,
                std::span<const Tensor> grads) {
  if (params.size() != grads.size())
    throw std::invalid_argument("Adam::step: parameter/gradient count mismatch");
  ++step_count_;
  const double bias1 = 1.0 - std::pow(beta1_, step_count_);
  const double bias2 = 1.0 - std::pow(beta2_, step_count_);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& param = *params[p].second;
    const Tensor& grad = grads[p];
    if (!param.same_shape(grad))
      throw std::invalid_argument("Adam::step: gradient shape mismatch for " + params[p].first);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      if (!std::isfinite(grad[i]))
        throw NumericError("non-finite gradient in parameter " + params[p].first);
    }
    Moments& mom = moments_[params[p].first];
    if (mom.m.empty()) {
      mom.m = Tensor::zeros(param.shape());
      mom.v = Tensor::zeros(param.shape());
    }
    for (std::size_t i = 0; i < param.size(); ++i) {
      mom.m[i] = beta1_ * mom.m[i] + (1.0 - beta1_) * grad[i];
      mom.v[i] = beta2_ * mom.v[i] + (1.0 - beta2_) * grad[i] * grad[i];
      const double m_hat = mom.m[i] / bias1;
      const double v_hat = mom.v[i] / bias2;
      param[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

Dataset load_dataset(const std::filesystem::path& dataset_dir, const std::string& source_domain,
                     const std::string& target_domain) {
  const DatasetManifest manifest = read_manifest(dataset_dir / "manifest.tsv");
  if (manifest.entries.empty()) throw IoError("empty manifest in " + dataset_dir.string());

  Dataset dataset;
  int max_label = 0;
  std::size_t points = 0;
  for (const ManifestEntry& entry : manifest.entries) {
    DomainSplits* splits = nullptr;
    if (entry.domain == source_domain) splits = &dataset.source;
    else if (entry.domain == target_domain) splits = &dataset.target;
    else continue;

    LabeledCloud item;
    item.cloud = read_cloud(dataset_dir / entry.path);
    item.label = entry.label;
    item.id = entry.path;
    max_label = std::max(max_label, entry.label);
    if (points == 0) points = item.cloud.size();
    if (item.cloud.size() != points)
      throw IoError("mixed point counts in dataset " + dataset_dir.string());

    if (entry.split == "train") splits->train.push_back(std::move(item));
    else if (entry.split == "val") splits->val.push_back(std::move(item));
    else if (entry.split == "test") splits->test.push_back(std::move(item));
    else throw IoError("unknown split tag '" + entry.split + "' in manifest");
  }
  if (dataset.source.train.empty() || dataset.target.train.empty())
    throw IoError("manifest lacks train data for domain tags '" + source_domain + "'/'" +
                  target_domain + "'");
  dataset.num_classes = max_label + 1;
  dataset.points_per_cloud = points;
  return dataset;
}

std::vector<NodeId> param_node_order(const ModelNodes& nodes) {
  std::vector<NodeId> out;
  for (const MlpNodes* mlp : {&nodes.encoder, &nodes.classifier, &nodes.decoder}) {
    for (std::size_t l = 0; l < mlp->weights.size(); ++l) {
      out.push_back(mlp->weights[l]);
      out.push_back(mlp->biases[l]);
    }
  }
  return out;
}

NodeId build_train_objective(Tape& tape, const ModelNodes& nodes, const Models& models,
                             const DomainBatch& source, const DomainBatch& target,
                             const TrainConfig& config, StepLosses* out_losses) {
  source.validate();
  target.validate();
  if (source.domain != Domain::kSource || target.domain != Domain::kTarget)
    throw std::invalid_argument("train objective: batches must be (source, target)");
  config.weights.validate();

  const std::size_t n_source = source.originals[0].size();
  const std::size_t n_target = target.originals[0].size();

  const bool use_ssl = config.weights.gamma != 0.0;
  const bool use_align = config.alignment != Alignment::kNone;
  const bool use_consistency = use_align && config.weights.beta2 != 0.0;
  // Streams that no active loss consumes are skipped outright; no random
  // draws depend on this, so each configuration stays bit-reproducible.
  const bool need_f_t = use_align;
  const bool need_f_td = use_ssl || config.alignment == Alignment::kDnwd || use_consistency;

  const NodeId f_s = encode(tape, nodes.encoder, tape.leaf(clouds_to_tensor(source.originals)), n_source);
  const NodeId f_sd = encode(tape, nodes.encoder, tape.leaf(deformed_to_tensor(source.deformed)), n_source);
  const NodeId f_t = need_f_t
                         ? encode(tape, nodes.encoder, tape.leaf(clouds_to_tensor(target.originals)), n_target)
                         : -1;
  const NodeId f_td = need_f_td
                          ? encode(tape, nodes.encoder, tape.leaf(deformed_to_tensor(target.deformed)), n_target)
                          : -1;

  // Supervised classification over the mixed source batch: originals and
  // their deformations concatenated, labels repeated.
  const std::array<NodeId, 2> source_streams{f_s, f_sd};
  const NodeId f_s_mix = tape.concat_rows(source_streams);
  std::vector<int> labels = source.labels;
  labels.insert(labels.end(), source.labels.begin(), source.labels.end());
  const NodeId l_cls = cls_loss(tape, classify(tape, nodes.classifier, f_s_mix).probs, labels);

  StepLosses losses;
  losses.cls = tape.value(l_cls)[0];
  NodeId objective = tape.scalar_multiply(l_cls, config.weights.alpha);

  if (config.weights.gamma != 0.0) {
    const std::size_t r = models.decoder_cfg.output_points;
    const NodeId rec_s = reconstruct(tape, nodes.decoder, f_sd, r, r);
    const NodeId rec_t = reconstruct(tape, nodes.decoder, f_td, r, r);
    std::vector<std::pair<Tensor, NodeId>> pairs;
    const auto add_pairs = [&](const DomainBatch& batch, NodeId rec) {
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const NodeId coords = tape.reshape(tape.slice_rows(rec, i, 1), {r, 3});
        pairs.emplace_back(region_target(batch.deformed[i]), coords);
      }
    };
    add_pairs(source, rec_s);
    add_pairs(target, rec_t);
    const NodeId l_ssl = ssl_loss(tape, pairs);
    losses.ssl = tape.value(l_ssl)[0];
    objective = tape.add(objective, tape.scalar_multiply(l_ssl, config.weights.gamma));
  }

  if (config.alignment != Alignment::kNone) {
    // Features feeding the adversarial classifier passes run through a sign
    // flip, and the whole adversarial term through gradient_reverse(lambda):
    // the classifier then ascends the discrepancy while the encoder descends
    // it, both scaled by lambda, in one optimizer pass.
    const auto adversarial_probs = [&](NodeId features) {
      return classify(tape, nodes.classifier, tape.gradient_reverse(features, 1.0)).probs;
    };

    NodeId align;
    if (config.alignment == Alignment::kDnwd) {
      const std::array<NodeId, 2> target_streams{f_t, f_td};
      const NodeId p_s = adversarial_probs(f_s_mix);
      const NodeId p_t = adversarial_probs(tape.concat_rows(target_streams));
      const std::array<NodeId, 1> ps{p_s};
      const std::array<NodeId, 1> pt{p_t};
      align = batch_nuclear_discrepancy(tape, ps, pt);
    } else {
      const NodeId p_s = adversarial_probs(f_s);
      const NodeId p_t = adversarial_probs(f_t);
      const std::array<NodeId, 1> ps{p_s};
      const std::array<NodeId, 1> pt{p_t};
      align = batch_nuclear_discrepancy(tape, ps, pt);
    }
    losses.align = tape.value(align)[0];
    NodeId adversarial = tape.scalar_multiply(align, config.weights.beta1);

    if (config.weights.beta2 != 0.0) {
      const std::array<NodeId, 1> orig{adversarial_probs(f_t)};
      const std::array<NodeId, 1> def{adversarial_probs(f_td)};
      const NodeId consistency = target_consistency_loss(tape, orig, def);
      losses.consistency = tape.value(consistency)[0];
      adversarial =
          tape.add(adversarial, tape.scalar_multiply(consistency, config.weights.beta2));
    }
    objective = tape.add(objective, tape.gradient_reverse(adversarial, config.grl_lambda));
  }

  if (out_losses) *out_losses = losses;
  return objective;
}

StepLosses train_step(Models& models, Adam& adam, const DomainBatch& source,
                      const DomainBatch& target, const TrainConfig& config) {
  Tape tape;
  const ModelNodes nodes = lift(tape, models);
  StepLosses losses;
  const NodeId objective =
      build_train_objective(tape, nodes, models, source, target, config, &losses);
  tape.backward(objective);

  auto params = named_params(models);
  const std::vector<NodeId> node_ids = param_node_order(nodes);
  std::vector<Tensor> grads;
  grads.reserve(node_ids.size());
  for (NodeId id : node_ids) grads.push_back(tape.grad(id));
  adam.step(params, grads);
  return losses;
}

double evaluate(const Models& models, std::span<const LabeledCloud> items) {
  if (items.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::vector<PointCloud> clouds;
  clouds.reserve(items.size());
  for (const LabeledCloud& item : items) clouds.push_back(item.cloud);
  const Tensor logits = classify_logits(models, clouds);

  std::size_t correct = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c) {
      if (logits.at(r, c) > logits.at(r, best)) best = c;
    }
    if (static_cast<int>(best) == items[r].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(items.size());
}

namespace {

SeedResult run_single_seed(const TrainConfig& config, const Dataset& dataset, std::uint64_t seed,
                           const std::filesystem::path& seed_dir, const std::string& config_echo) {
  std::filesystem::create_directories(seed_dir);

  ClassifierParams cls_cfg;
  cls_cfg.hidden = config.classifier_hidden;
  cls_cfg.num_classes = static_cast<std::size_t>(dataset.num_classes);
  DecoderParams dec_cfg;
  dec_cfg.hidden = config.decoder_hidden;
  const int m = config.deform.resolved_m(dataset.points_per_cloud);
  dec_cfg.output_points =
      static_cast<std::size_t>(config.deform.n_deform) * (static_cast<std::size_t>(m) + 1);

  Models models = init_models(config.encoder, cls_cfg, dec_cfg, seed);
  Adam adam(config.learning_rate);
  Rng deform_rng(seed ^ kDeformStreamSalt);
  Rng shuffle_rng(config.shuffle_seed);

  std::ofstream metrics(seed_dir / "metrics.csv", std::ios::binary);
  if (!metrics) throw IoError("cannot write metrics: " + (seed_dir / "metrics.csv").string());
  metrics << "epoch,l_cls,l_ssl,l_dnwd,l_nwd_t,src_acc,tgt_acc\n";

  const std::size_t limit = std::min(dataset.source.train.size(), dataset.target.train.size());
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  const std::size_t steps = (limit + batch - 1) / batch;

  std::vector<std::size_t> source_order(dataset.source.train.size());
  std::iota(source_order.begin(), source_order.end(), 0);
  std::vector<std::size_t> target_order(dataset.target.train.size());
  std::iota(target_order.begin(), target_order.end(), 0);

  SeedResult result;
  result.seed = seed;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(source_order);
    shuffle_rng.shuffle(target_order);

    StepLosses sums;
    for (std::size_t s = 0; s < steps; ++s) {
      const std::size_t begin = s * batch;
      const std::size_t end = std::min(begin + batch, limit);
      DomainBatch src = make_batch(dataset.source.train, source_order, begin, end, Domain::kSource,
                                   config.deform, deform_rng);
      DomainBatch tgt = make_batch(dataset.target.train, target_order, begin, end, Domain::kTarget,
                                   config.deform, deform_rng);
      StepLosses step;
      try {
        step = train_step(models, adam, src, tgt, config);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " step " + std::to_string(s) +
                           ": " + e.what());
      }
      sums.cls += step.cls;
      sums.ssl += step.ssl;
      sums.align += step.align;
      sums.consistency += step.consistency;
    }

    EpochRow row;
    row.epoch = epoch;
    const double inv_steps = 1.0 / static_cast<double>(steps);
    row.l_cls = sums.cls * inv_steps;
    row.l_ssl = sums.ssl * inv_steps;
    row.l_dnwd = sums.align * inv_steps;
    row.l_nwd_t = sums.consistency * inv_steps;
    row.src_acc = evaluate(models, dataset.source.val);
    row.tgt_acc = evaluate(models, dataset.target.val);
    result.rows.push_back(row);

    metrics << row.epoch << ',' << format_double(row.l_cls) << ',' << format_double(row.l_ssl)
            << ',' << format_double(row.l_dnwd) << ',' << format_double(row.l_nwd_t) << ','
            << format_double(row.src_acc) << ',' << format_double(row.tgt_acc) << '\n';
    metrics.flush();
  }

  result.final_src_val = result.rows.back().src_acc;
  result.final_tgt_val = result.rows.back().tgt_acc;
  result.final_src_test = evaluate(models, dataset.source.test);
  result.final_tgt_test = evaluate(models, dataset.target.test);

  save_checkpoint(seed_dir / "checkpoint.cdnd",
                  make_checkpoint(models, seed, static_cast<std::uint32_t>(config.epochs),
                                  config_echo));

  // Classifier outputs before softmax for the source validation and target
  // test samples; consumed by external visualization tooling.
  std::ofstream embeddings(seed_dir / "embeddings.csv", std::ios::binary);
  if (!embeddings)
    throw IoError("cannot write embeddings: " + (seed_dir / "embeddings.csv").string());
  embeddings << "sample_id,domain,label";
  for (int c = 0; c < dataset.num_classes; ++c) embeddings << ",dim_" << c;
  embeddings << '\n';
  const auto dump = [&](std::span<const LabeledCloud> items, const char* domain) {
    std::vector<PointCloud> clouds;
    clouds.reserve(items.size());
    for (const LabeledCloud& item : items) clouds.push_back(item.cloud);
    const Tensor logits = classify_logits(models, clouds);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      embeddings << items[r].id << ',' << domain << ',' << items[r].label;
      for (std::size_t c = 0; c < logits.cols(); ++c)
        embeddings << ',' << format_double(logits.at(r, c));
      embeddings << '\n';
    }
  };
  dump(dataset.source.val, "source");
  dump(dataset.target.test, "target");
  return result;
}

}  // namespace

RunMetrics run_experiment(const TrainConfig& config, const Dataset& dataset,
                          const std::filesystem::path& out_dir, const std::string& config_echo,
                          int jobs) {
  config.validate();
  if (dataset.source.val.empty() || dataset.target.val.empty() || dataset.source.test.empty() ||
      dataset.target.test.empty())
    throw std::invalid_argument("run_experiment: dataset needs val and test splits");
  std::filesystem::create_directories(out_dir);

  RunMetrics metrics;
  metrics.per_seed.resize(config.seeds.size());
  std::vector<std::exception_ptr> failures(config.seeds.size());

  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(config.seeds.size())));
  std::vector<std::thread> pool;
  std::size_t next = 0;
  const auto run_seed_at = [&](std::size_t idx) {
    const std::uint64_t seed = config.seeds[idx];
    try {
      metrics.per_seed[idx] =
          run_single_seed(config, dataset, seed, out_dir / ("seed_" + std::to_string(seed)),
                          config_echo);
    } catch (...) {
      failures[idx] = std::current_exception();
    }
  };
  if (workers == 1) {
    for (std::size_t i = 0; i < config.seeds.size(); ++i) run_seed_at(i);
  } else {
    std::mutex take;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        while (true) {
          std::size_t idx;
          {
            std::lock_guard<std::mutex> lock(take);
            if (next >= config.seeds.size()) return;
            idx = next++;
          }
          run_seed_at(idx);
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& failure : failures) {
    if (failure) std::rethrow_exception(failure);
  }

  std::vector<double> src_vals, tgt_tests;
  for (const SeedResult& r : metrics.per_seed) {
    src_vals.push_back(r.final_src_val);
    tgt_tests.push_back(r.final_tgt_test);
  }
  metrics.src_val_mean = mean_of(src_vals);
  metrics.src_val_std = std_of(src_vals);
  metrics.tgt_test_mean = mean_of(tgt_tests);
  metrics.tgt_test_std = std_of(tgt_tests);
  return metrics;
}

}  // namespace cdnd
