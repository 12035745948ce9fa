#pragma once

#include <span>
#include <utility>
#include <vector>

#include "cdnd/autodiff.hpp"
#include "cdnd/geometry.hpp"
#include "cdnd/tensor.hpp"

namespace cdnd {

struct LossWeights {
  double alpha = 0.5;
  double gamma = 0.5;
  double beta1 = 1.0;
  double beta2 = 0.2;

  void validate() const;
};

enum class Domain { kSource, kTarget };

/// Paired originals and their deformations (1:1 ratio by construction).
/// Labels are populated for the source domain only.
struct DomainBatch {
  std::vector<PointCloud> originals;
  std::vector<DeformedCloud> deformed;
  std::vector<int> labels;
  Domain domain = Domain::kSource;

  std::size_t size() const { return originals.size(); }
  void validate() const;
};

/// Sum of squared singular values of P: the intra-class correlation
/// trace(P^T P).
double intra_class_correlation(const Tensor& p);
/// Sum of the off-diagonal entries of P^T P.
double inter_class_correlation(const Tensor& p);
double frobenius_norm(const Tensor& p);
/// Sum of singular values (no tape).
double nuclear_norm_value(const Tensor& p);
bool is_row_stochastic(const Tensor& p, double tol = 1e-9);

/// Sum over pairs of chamfer(original points at I, reconstruction). Each pair
/// is (replaced original coordinates, decoded r x 3 node). Reconstruction
/// count must equal |I|.
NodeId ssl_loss(Tape& tape, std::span<const std::pair<Tensor, NodeId>> pairs);

/// Mean over rows of -log(P[row, label] + 1e-12).
NodeId cls_loss(Tape& tape, NodeId probs, const std::vector<int>& labels);

/// (1/Ns) sum_i ||P_s^i||_* - (1/Nt) sum_i ||P_t^i||_*. The same arithmetic
/// serves the mixed-batch discrepancy (prediction matrices built from
/// original+deformed concatenations) and the originals-only baseline.
NodeId batch_nuclear_discrepancy(Tape& tape, std::span<const NodeId> source_preds,
                                 std::span<const NodeId> target_preds);

/// Prediction-consistency discrepancy between paired original and deformed
/// target batches: (1/Nt) (sum ||P_t^i||_* - sum ||P_td^i||_*).
NodeId target_consistency_loss(Tape& tape, std::span<const NodeId> original_preds,
                               std::span<const NodeId> deformed_preds);

/// (supervised, adversarial) = (alpha*cls + gamma*ssl, beta1*align + beta2*consistency).
std::pair<double, double> total_objective(const LossWeights& weights, double cls, double ssl,
                                          double align, double consistency);

}  // namespace cdnd
