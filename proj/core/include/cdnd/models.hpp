#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cdnd/autodiff.hpp"
#include "cdnd/geometry.hpp"
#include "cdnd/rng.hpp"
#include "cdnd/tensor.hpp"

namespace cdnd {

/// Per-point shared MLP widths; the last width is the pooled feature size.
struct EncoderParams {
  std::vector<std::size_t> widths = {3, 64, 128, 256};
};

/// Hidden widths between the pooled feature and the K-way softmax output.
struct ClassifierParams {
  std::vector<std::size_t> hidden = {128};
  std::size_t num_classes = 4;
};

/// Hidden widths between the pooled feature and the 3*output_points output.
struct DecoderParams {
  std::vector<std::size_t> hidden = {256};
  std::size_t output_points = 16;
};

struct Mlp {
  std::vector<Tensor> weights;  // layer i: widths[i] x widths[i+1]
  std::vector<Tensor> biases;   // layer i: widths[i+1]
};

struct Models {
  EncoderParams encoder_cfg;
  ClassifierParams classifier_cfg;
  DecoderParams decoder_cfg;
  Mlp encoder;
  Mlp classifier;
  Mlp decoder;
};

/// Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] from the run seed,
/// biases zero. Draw order is fixed (encoder, classifier, decoder).
Models init_models(const EncoderParams& enc, const ClassifierParams& cls,
                   const DecoderParams& dec, std::uint64_t seed);

std::vector<std::pair<std::string, Tensor*>> named_params(Models& models);
std::vector<std::pair<std::string, const Tensor*>> named_params(const Models& models);

/// Tape-side handles of one MLP's parameters.
struct MlpNodes {
  std::vector<NodeId> weights;
  std::vector<NodeId> biases;
};

struct ModelNodes {
  MlpNodes encoder;
  MlpNodes classifier;
  MlpNodes decoder;
};

ModelNodes lift(Tape& tape, const Models& models);

/// Rebuilds all parameter nodes from one flat leaf (the layout of
/// pack_params); used to gradient-check whole model compositions.
ModelNodes lift_from_flat(Tape& tape, const Models& shapes, NodeId flat);
Tensor pack_params(const Models& models);

/// Batch of same-size clouds as a (b*n) x 3 tensor.
Tensor clouds_to_tensor(std::span<const PointCloud> clouds);
Tensor deformed_to_tensor(std::span<const DeformedCloud> clouds);

/// Shared per-point MLP with relu after every layer, then max-pool over each
/// cloud's points: (b*n) x 3 input node -> b x F features. Permutation
/// invariant in the point order within each cloud.
NodeId encode(Tape& tape, const MlpNodes& encoder, NodeId points, std::size_t points_per_cloud);

struct ClassifyNodes {
  NodeId logits;  // pre-softmax, the embedding dump source
  NodeId probs;   // row-stochastic prediction matrix
};

ClassifyNodes classify(Tape& tape, const MlpNodes& classifier, NodeId features);

/// b x (3*r) decoded coordinates; callers slice per item and reshape to r x 3.
/// Throws invalid-argument when r != the decoder's configured output_points.
NodeId reconstruct(Tape& tape, const MlpNodes& decoder, NodeId features, std::size_t r,
                   std::size_t configured_r);

/// Convenience forward passes without gradient bookkeeping kept around.
Tensor encode_values(const Models& models, std::span<const PointCloud> clouds);
Tensor classify_logits(const Models& models, std::span<const PointCloud> clouds);

struct Checkpoint {
  std::uint64_t seed = 0;
  std::uint32_t epoch = 0;
  std::string config_echo;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

Checkpoint make_checkpoint(const Models& models, std::uint64_t seed, std::uint32_t epoch,
                           std::string config_echo);
void restore_models(Models& models, const Checkpoint& checkpoint);

/// Binary format: magic "CDND1", seed, epoch, config echo, then one record
/// per tensor (name length, name, rank, dims, little-endian float64 payload).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cdnd
