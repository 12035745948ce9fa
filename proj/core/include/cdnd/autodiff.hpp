#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "cdnd/tensor.hpp"

namespace cdnd {

using NodeId = std::int32_t;

/// Thin SVD A = U diag(s) V^T with r = min(rows, cols), singular values
/// descending, U and V with orthonormal columns.
struct SvdResult {
  Tensor u;
  std::vector<double> singular_values;
  Tensor v;
};

/// One-sided Jacobi SVD. Orthogonalizes column pairs until a full sweep makes
/// no rotation; throws NumericError (with the matrix embedded in the message)
/// if `max_sweeps` is exceeded.
SvdResult jacobi_svd(const Tensor& a, int max_sweeps = 100);

/// Reverse-mode tape. Nodes are created in topological order (inputs before
/// outputs) with eagerly computed forward values; backward() walks the nodes
/// once in reverse creation order. A tape is single-owner: one execution
/// context builds, runs and reads it.
class Tape {
 public:
  /// Input node (constant or parameter; parameters are just leaves whose
  /// gradient the caller reads after backward()).
  NodeId leaf(Tensor value);

  NodeId add(NodeId a, NodeId b);
  NodeId subtract(NodeId a, NodeId b);
  NodeId scalar_multiply(NodeId a, double s);
  NodeId matmul(NodeId a, NodeId b);
  /// rows(a) x cols(a) matrix plus a length-cols(a) bias added to every row.
  NodeId row_bias_add(NodeId a, NodeId bias);
  NodeId relu(NodeId a);
  NodeId log(NodeId a);
  NodeId exp(NodeId a);
  NodeId softmax_rows(NodeId a);
  /// Input (group_size * n_groups) x C; output n_groups x C, column-wise max
  /// over each consecutive row group. Gradient flows to argmax rows only,
  /// ties resolved to the lowest row index.
  NodeId max_pool_rows(NodeId a, std::size_t group_size);
  NodeId mean(NodeId a);
  NodeId concat_rows(std::span<const NodeId> parts);
  NodeId slice_rows(NodeId a, std::size_t begin, std::size_t count);
  NodeId reshape(NodeId a, std::vector<std::size_t> shape);

  /// Mean over rows of -log(P[row, label] + 1e-12); P row-stochastic b x K.
  NodeId cross_entropy(NodeId probs, const std::vector<int>& labels);

  /// Symmetric sum of squared nearest-neighbor distances between two point
  /// sets (rows of a and b are 3-vectors). Gradient treats the forward
  /// matching as fixed; nearest-neighbor ties pick the lowest index.
  NodeId chamfer(NodeId a, NodeId b);

  /// Sum of singular values. The backward pass contributes U V^T restricted
  /// to singular values above 1e-10 (a subgradient at repeated/zero values).
  NodeId nuclear_norm(NodeId a);

  /// Identity forward; backward multiplies the upstream gradient by -lambda.
  NodeId gradient_reverse(NodeId a, double lambda);

  /// Zero all gradients, seed `root` with 1 and accumulate in reverse
  /// topological order. `root` must be scalar.
  void backward(NodeId root);

  /// Re-run every forward computation in creation order. Call after mutating
  /// a leaf through mutable_value().
  void recompute();

  const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  Tensor& mutable_value(NodeId id) { return nodes_[static_cast<std::size_t>(id)].value; }
  const Tensor& grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kLeaf,
    kAdd,
    kSub,
    kScalarMul,
    kMatmul,
    kRowBiasAdd,
    kRelu,
    kLog,
    kExp,
    kSoftmaxRows,
    kMaxPoolRows,
    kMean,
    kConcatRows,
    kSliceRows,
    kReshape,
    kCrossEntropy,
    kChamfer,
    kNuclearNorm,
    kGradReverse,
  };

  struct Node {
    Op op;
    std::vector<NodeId> inputs;
    Tensor value;
    Tensor grad;
    std::vector<int> iaux;  // argmax rows, chamfer matches, labels, slice info
    double daux = 0.0;      // scalar multiplier / GRL lambda
    Tensor taux;            // cached nuclear-norm subgradient
  };

  NodeId push(Node node);
  void eval(Node& node);
  void backprop(const Node& node);
  Tensor& grad_of(NodeId id) { return nodes_[static_cast<std::size_t>(id)].grad; }

  // deque: node references stay valid while new nodes are pushed
  std::deque<Node> nodes_;
};

/// Builds a scalar function of one tensor input on a fresh tape: receives the
/// tape and the input's node, returns the scalar root node.
using TapeFn = std::function<NodeId(Tape&, NodeId)>;

struct FdCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_coordinate = 0;
  double tape_gradient = 0.0;
  double fd_gradient = 0.0;
};

/// Central-difference check of the tape gradient of `f` at `point`.
/// Per-coordinate relative error uses denominator max(|g|, 1e-8).
/// Throws NumericError if any function evaluation is non-finite.
FdCheckReport finite_difference_check(const TapeFn& f, const Tensor& point, double step);

}  // namespace cdnd
