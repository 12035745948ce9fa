#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cdnd/losses.hpp"
#include "cdnd/models.hpp"
#include "cdnd/synth_data.hpp"

namespace cdnd {

enum class Alignment { kNone, kNwd, kDnwd };

std::string alignment_name(Alignment a);

struct TrainConfig {
  double learning_rate = 0.001;
  int epochs = 100;
  int batch_size = 16;
  LossWeights weights;
  double grl_lambda = 1.0;
  DeformConfig deform;
  Alignment alignment = Alignment::kDnwd;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::uint64_t shuffle_seed = 7;  // held fixed across method variants
  EncoderParams encoder;
  std::vector<std::size_t> classifier_hidden = {128};
  std::vector<std::size_t> decoder_hidden = {256};

  void validate() const;
};

/// Standard Adam with bias correction; moments are kept per parameter name.
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

  /// One update over (name, parameter) pairs with matching gradients.
  /// Throws NumericError naming the parameter on a non-finite gradient.
  void step(std::span<const std::pair<std::string, Tensor*>> params,
            std::span<const Tensor> grads);

  int step_count() const { return step_count_; }

 private:
  struct Moments {
    Tensor m;
    Tensor v;
  };
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  int step_count_ = 0;
  std::map<std::string, Moments> moments_;
};

struct LabeledCloud {
  PointCloud cloud;
  int label = 0;
  std::string id;
};

struct DomainSplits {
  std::vector<LabeledCloud> train;
  std::vector<LabeledCloud> val;
  std::vector<LabeledCloud> test;
};

struct Dataset {
  DomainSplits source;
  DomainSplits target;
  int num_classes = 0;
  std::size_t points_per_cloud = 0;
};

/// Loads every cloud referenced by <dataset_dir>/manifest.tsv, mapping the
/// two manifest domain tags onto source and target.
Dataset load_dataset(const std::filesystem::path& dataset_dir, const std::string& source_domain,
                     const std::string& target_domain);

struct StepLosses {
  double cls = 0.0;
  double ssl = 0.0;
  double align = 0.0;        // D-NWD (or NWD variant) discrepancy
  double consistency = 0.0;  // target original-vs-deformed discrepancy
};

/// Builds the full objective on the tape: supervised classification over the
/// mixed source batch, reconstruction of both deformed streams, and the
/// adversarial discrepancies wired through gradient reversal (so one descent
/// pass minimizes them for the encoder while maximizing for the classifier).
/// Fills per-term loss values when out_losses is given.
NodeId build_train_objective(Tape& tape, const ModelNodes& nodes, const Models& models,
                             const DomainBatch& source, const DomainBatch& target,
                             const TrainConfig& config, StepLosses* out_losses);

/// Parameter node handles in named_params order.
std::vector<NodeId> param_node_order(const ModelNodes& nodes);

/// One optimizer step over all four streams (source/target, original and
/// deformed). Supervised terms backpropagate plainly; the adversarial terms
/// run through gradient reversal so the single update descends for the
/// encoder and ascends for the classifier.
StepLosses train_step(Models& models, Adam& adam, const DomainBatch& source,
                      const DomainBatch& target, const TrainConfig& config);

/// Argmax-class accuracy (ties resolve to the lowest class index).
double evaluate(const Models& models, std::span<const LabeledCloud> items);

struct EpochRow {
  int epoch = 0;
  double l_cls = 0.0;
  double l_ssl = 0.0;
  double l_dnwd = 0.0;
  double l_nwd_t = 0.0;
  double src_acc = 0.0;  // source validation accuracy
  double tgt_acc = 0.0;  // target validation accuracy
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<EpochRow> rows;
  double final_src_val = 0.0;
  double final_tgt_val = 0.0;
  double final_src_test = 0.0;
  double final_tgt_test = 0.0;
};

struct RunMetrics {
  std::vector<SeedResult> per_seed;
  double src_val_mean = 0.0;
  double src_val_std = 0.0;
  double tgt_test_mean = 0.0;
  double tgt_test_std = 0.0;
};

/// Full multi-seed experiment. Each seed trains independently (optionally in
/// parallel) and owns its out_dir/seed_<s>/ files: metrics.csv (flushed per
/// epoch), checkpoint.cdnd and embeddings.csv. Outputs are bit-identical
/// across reruns and independent of `jobs`.
RunMetrics run_experiment(const TrainConfig& config, const Dataset& dataset,
                          const std::filesystem::path& out_dir, const std::string& config_echo,
                          int jobs = 1);

}  // namespace cdnd
