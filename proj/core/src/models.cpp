#include "cdnd/models.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "cdnd/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is written as native little-endian float64");

namespace cdnd {

namespace {

std::vector<std::size_t> chain_of(const EncoderParams& p) { return p.widths; }

std::vector<std::size_t> chain_of(const ClassifierParams& p, std::size_t feature_width) {
  std::vector<std::size_t> chain{feature_width};
  chain.insert(chain.end(), p.hidden.begin(), p.hidden.end());
  chain.push_back(p.num_classes);
  return chain;
}

std::vector<std::size_t> chain_of(const DecoderParams& p, std::size_t feature_width) {
  std::vector<std::size_t> chain{feature_width};
  chain.insert(chain.end(), p.hidden.begin(), p.hidden.end());
  chain.push_back(3 * p.output_points);
  return chain;
}

Mlp init_mlp(const std::vector<std::size_t>& chain, Rng& rng) {
  Mlp mlp;
  for (std::size_t l = 0; l + 1 < chain.size(); ++l) {
    const std::size_t fan_in = chain[l];
    const std::size_t fan_out = chain[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor w({fan_in, fan_out});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
    mlp.weights.push_back(std::move(w));
    mlp.biases.emplace_back(std::vector<std::size_t>{fan_out});
  }
  return mlp;
}

void collect(const char* prefix, const Mlp& mlp,
             std::vector<std::pair<std::string, const Tensor*>>& out) {
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    out.emplace_back(std::string(prefix) + "." + std::to_string(l) + ".w", &mlp.weights[l]);
    out.emplace_back(std::string(prefix) + "." + std::to_string(l) + ".b", &mlp.biases[l]);
  }
}

MlpNodes lift_mlp(Tape& tape, const Mlp& mlp) {
  MlpNodes nodes;
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    nodes.weights.push_back(tape.leaf(mlp.weights[l]));
    nodes.biases.push_back(tape.leaf(mlp.biases[l]));
  }
  return nodes;
}

/// Dense chain; relu after every layer when relu_last, else only between.
NodeId mlp_forward(Tape& tape, const MlpNodes& mlp, NodeId input, bool relu_last) {
  NodeId x = input;
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    x = tape.row_bias_add(tape.matmul(x, mlp.weights[l]), mlp.biases[l]);
    if (relu_last || l + 1 < mlp.weights.size()) x = tape.relu(x);
  }
  return x;
}

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

}  // namespace

Models init_models(const EncoderParams& enc, const ClassifierParams& cls,
                   const DecoderParams& dec, std::uint64_t seed) {
  for (std::size_t w : enc.widths)
    if (w < 1) throw std::invalid_argument("EncoderParams: zero width");
  if (enc.widths.size() < 2 || enc.widths.front() != 3)
    throw std::invalid_argument("EncoderParams: widths must start at 3");
  if (cls.num_classes < 2) throw std::invalid_argument("ClassifierParams: num_classes < 2");
  if (dec.output_points < 1) throw std::invalid_argument("DecoderParams: output_points < 1");

  Models models;
  models.encoder_cfg = enc;
  models.classifier_cfg = cls;
  models.decoder_cfg = dec;
  Rng rng(seed);
  const std::size_t feature_width = enc.widths.back();
  models.encoder = init_mlp(chain_of(enc), rng);
  models.classifier = init_mlp(chain_of(cls, feature_width), rng);
  models.decoder = init_mlp(chain_of(dec, feature_width), rng);
  return models;
}

std::vector<std::pair<std::string, const Tensor*>> named_params(const Models& models) {
  std::vector<std::pair<std::string, const Tensor*>> out;
  collect("enc", models.encoder, out);
  collect("cls", models.classifier, out);
  collect("dec", models.decoder, out);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> named_params(Models& models) {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (auto& [name, tensor] : named_params(static_cast<const Models&>(models))) {
    out.emplace_back(name, const_cast<Tensor*>(tensor));
  }
  return out;
}

ModelNodes lift(Tape& tape, const Models& models) {
  return ModelNodes{lift_mlp(tape, models.encoder), lift_mlp(tape, models.classifier),
                    lift_mlp(tape, models.decoder)};
}

Tensor pack_params(const Models& models) {
  std::size_t total = 0;
  const auto params = named_params(models);
  for (const auto& [name, tensor] : params) total += tensor->size();
  Tensor flat({total});
  std::size_t offset = 0;
  for (const auto& [name, tensor] : params) {
    std::copy(tensor->data(), tensor->data() + tensor->size(), flat.data() + offset);
    offset += tensor->size();
  }
  return flat;
}

ModelNodes lift_from_flat(Tape& tape, const Models& shapes, NodeId flat) {
  const std::size_t total = tape.value(flat).size();
  const NodeId column = tape.reshape(flat, {total, 1});
  std::size_t offset = 0;
  const auto take = [&](const Tensor& like) {
    const NodeId slice = tape.slice_rows(column, offset, like.size());
    offset += like.size();
    return tape.reshape(slice, like.shape());
  };
  ModelNodes nodes;
  const auto lift_one = [&](const Mlp& mlp, MlpNodes& out) {
    for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
      out.weights.push_back(take(mlp.weights[l]));
      out.biases.push_back(take(mlp.biases[l]));
    }
  };
  lift_one(shapes.encoder, nodes.encoder);
  lift_one(shapes.classifier, nodes.classifier);
  lift_one(shapes.decoder, nodes.decoder);
  if (offset != total)
    throw std::invalid_argument("lift_from_flat: flat parameter size mismatch");
  return nodes;
}

Tensor clouds_to_tensor(std::span<const PointCloud> clouds) {
  if (clouds.empty()) throw std::invalid_argument("clouds_to_tensor: empty batch");
  const std::size_t n = clouds[0].size();
  for (const PointCloud& c : clouds)
    if (c.size() != n) throw std::invalid_argument("clouds_to_tensor: mixed point counts in batch");
  Tensor out({clouds.size() * n, 3});
  std::size_t row = 0;
  for (const PointCloud& c : clouds) {
    for (const Vec3& p : c.points) {
      out.at(row, 0) = p.x;
      out.at(row, 1) = p.y;
      out.at(row, 2) = p.z;
      ++row;
    }
  }
  return out;
}

Tensor deformed_to_tensor(std::span<const DeformedCloud> clouds) {
  if (clouds.empty()) throw std::invalid_argument("deformed_to_tensor: empty batch");
  const std::size_t n = clouds[0].size();
  for (const DeformedCloud& c : clouds)
    if (c.size() != n) throw std::invalid_argument("deformed_to_tensor: mixed point counts in batch");
  Tensor out({clouds.size() * n, 3});
  std::size_t row = 0;
  for (const DeformedCloud& c : clouds) {
    for (const Vec3& p : c.points) {
      out.at(row, 0) = p.x;
      out.at(row, 1) = p.y;
      out.at(row, 2) = p.z;
      ++row;
    }
  }
  return out;
}

NodeId encode(Tape& tape, const MlpNodes& encoder, NodeId points, std::size_t points_per_cloud) {
  if (tape.value(points).cols() != 3)
    throw std::invalid_argument("encode: input must be (b*n) x 3");
  if (points_per_cloud < 1 || tape.value(points).rows() % points_per_cloud != 0)
    throw std::invalid_argument("encode: rows not divisible by points per cloud");
  const NodeId per_point = mlp_forward(tape, encoder, points, /*relu_last=*/true);
  return tape.max_pool_rows(per_point, points_per_cloud);
}

ClassifyNodes classify(Tape& tape, const MlpNodes& classifier, NodeId features) {
  const NodeId logits = mlp_forward(tape, classifier, features, /*relu_last=*/false);
  const NodeId probs = tape.softmax_rows(logits);
  // Row-stochastic trace identity, asserted on every prediction matrix:
  // with Z = P^T P, trace(Z) + offdiag(Z) must equal the batch size.
  const Tensor& p = tape.value(probs);
  double frob2 = 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double row_sum = 0.0;
    for (std::size_t c = 0; c < p.cols(); ++c) {
      frob2 += p.at(r, c) * p.at(r, c);
      row_sum += p.at(r, c);
    }
    total += row_sum * row_sum;
  }
  if (std::abs(total - static_cast<double>(p.rows())) > 1e-9 || !std::isfinite(frob2)) {
    throw NumericError("classify: prediction matrix violates the row-stochastic identity");
  }
  return ClassifyNodes{logits, probs};
}

NodeId reconstruct(Tape& tape, const MlpNodes& decoder, NodeId features, std::size_t r,
                   std::size_t configured_r) {
  if (r != configured_r)
    throw std::invalid_argument("reconstruct: requested point count != configured output_points");
  return mlp_forward(tape, decoder, features, /*relu_last=*/false);
}

Tensor encode_values(const Models& models, std::span<const PointCloud> clouds) {
  Tape tape;
  const ModelNodes nodes = lift(tape, models);
  const NodeId input = tape.leaf(clouds_to_tensor(clouds));
  const NodeId features = encode(tape, nodes.encoder, input, clouds[0].size());
  return tape.value(features);
}

Tensor classify_logits(const Models& models, std::span<const PointCloud> clouds) {
  Tape tape;
  const ModelNodes nodes = lift(tape, models);
  const NodeId input = tape.leaf(clouds_to_tensor(clouds));
  const NodeId features = encode(tape, nodes.encoder, input, clouds[0].size());
  return tape.value(classify(tape, nodes.classifier, features).logits);
}

Checkpoint make_checkpoint(const Models& models, std::uint64_t seed, std::uint32_t epoch,
                           std::string config_echo) {
  Checkpoint ckpt;
  ckpt.seed = seed;
  ckpt.epoch = epoch;
  ckpt.config_echo = std::move(config_echo);
  for (const auto& [name, tensor] : named_params(models)) ckpt.tensors.emplace_back(name, *tensor);
  return ckpt;
}

void restore_models(Models& models, const Checkpoint& checkpoint) {
  auto params = named_params(models);
  if (params.size() != checkpoint.tensors.size())
    throw std::invalid_argument("restore_models: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, stored] = checkpoint.tensors[i];
    if (name != params[i].first || !stored.same_shape(*params[i].second))
      throw std::invalid_argument("restore_models: mismatch at parameter " + name);
    *params[i].second = stored;
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out.write("CDND1", 5);
  write_u64(out, checkpoint.seed);
  write_u32(out, checkpoint.epoch);
  write_u32(out, static_cast<std::uint32_t>(checkpoint.config_echo.size()));
  out.write(checkpoint.config_echo.data(),
            static_cast<std::streamsize>(checkpoint.config_echo.size()));
  write_u32(out, static_cast<std::uint32_t>(checkpoint.tensors.size()));
  for (const auto& [name, tensor] : checkpoint.tensors) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(tensor.shape().size()));
    for (std::size_t d : tensor.shape()) write_u64(out, d);
    out.write(reinterpret_cast<const char*>(tensor.data()),
              static_cast<std::streamsize>(tensor.size() * sizeof(double)));
  }
  if (!out) throw IoError("checkpoint write failure: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[5] = {};
  in.read(magic, 5);
  if (!in || std::memcmp(magic, "CDND1", 5) != 0)
    throw IoError("bad checkpoint magic in " + path.string());
  Checkpoint ckpt;
  ckpt.seed = read_u64(in);
  ckpt.epoch = read_u32(in);
  const std::uint32_t config_len = read_u32(in);
  ckpt.config_echo.resize(config_len);
  in.read(ckpt.config_echo.data(), config_len);
  const std::uint32_t count = read_u32(in);
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint32_t rank = read_u32(in);
    std::vector<std::size_t> shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<std::size_t>(read_u64(in));
    Tensor tensor(shape);
    in.read(reinterpret_cast<char*>(tensor.data()),
            static_cast<std::streamsize>(tensor.size() * sizeof(double)));
    if (!in) throw IoError("truncated checkpoint: " + path.string());
    ckpt.tensors.emplace_back(std::move(name), std::move(tensor));
  }
  return ckpt;
}

}  // namespace cdnd
