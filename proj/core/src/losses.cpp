#include "cdnd/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace cdnd {

void LossWeights::validate() const {
  for (double w : {alpha, gamma, beta1, beta2}) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw std::invalid_argument("LossWeights: weights must be finite and non-negative");
  }
}

void DomainBatch::validate() const {
  if (originals.empty()) throw std::invalid_argument("DomainBatch: empty batch");
  if (originals.size() != deformed.size())
    throw std::invalid_argument("DomainBatch: original/deformed ratio must be 1:1");
  if (domain == Domain::kSource && labels.size() != originals.size())
    throw std::invalid_argument("DomainBatch: source batch requires one label per original");
  for (std::size_t i = 0; i < originals.size(); ++i) {
    if (originals[i].size() != deformed[i].size())
      throw std::invalid_argument("DomainBatch: deformed item size differs from its original");
  }
}

double intra_class_correlation(const Tensor& p) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += p[i] * p[i];
  return acc;
}

double inter_class_correlation(const Tensor& p) {
  // With Z = P^T P: sum(Z) = sum_r (row sum of P)^2 and trace(Z) = |P|_F^2,
  // so the off-diagonal sum never needs Z materialized.
  double total = 0.0;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double row_sum = 0.0;
    for (std::size_t c = 0; c < p.cols(); ++c) row_sum += p.at(r, c);
    total += row_sum * row_sum;
  }
  return total - intra_class_correlation(p);
}

double frobenius_norm(const Tensor& p) { return std::sqrt(intra_class_correlation(p)); }

double nuclear_norm_value(const Tensor& p) {
  const SvdResult svd = jacobi_svd(p);
  double acc = 0.0;
  for (double s : svd.singular_values) acc += s;
  return acc;
}

bool is_row_stochastic(const Tensor& p, double tol) {
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double row_sum = 0.0;
    for (std::size_t c = 0; c < p.cols(); ++c) {
      const double v = p.at(r, c);
      if (v < 0.0 || v > 1.0) return false;
      row_sum += v;
    }
    if (std::abs(row_sum - 1.0) > tol) return false;
  }
  return true;
}

NodeId ssl_loss(Tape& tape, std::span<const std::pair<Tensor, NodeId>> pairs) {
  if (pairs.empty()) throw std::invalid_argument("ssl_loss: no reconstruction pairs");
  NodeId total = -1;
  for (const auto& [target, recon] : pairs) {
    if (target.rows() != tape.value(recon).rows())
      throw std::invalid_argument("ssl_loss: reconstruction count != |I|");
    const NodeId target_node = tape.leaf(target);
    const NodeId d = tape.chamfer(target_node, recon);
    total = total < 0 ? d : tape.add(total, d);
  }
  return total;
}

NodeId cls_loss(Tape& tape, NodeId probs, const std::vector<int>& labels) {
  return tape.cross_entropy(probs, labels);
}

NodeId batch_nuclear_discrepancy(Tape& tape, std::span<const NodeId> source_preds,
                                 std::span<const NodeId> target_preds) {
  if (source_preds.empty() || target_preds.empty())
    throw std::invalid_argument("batch_nuclear_discrepancy: empty batch list");
  NodeId source_sum = -1;
  for (NodeId p : source_preds) {
    const NodeId n = tape.nuclear_norm(p);
    source_sum = source_sum < 0 ? n : tape.add(source_sum, n);
  }
  NodeId target_sum = -1;
  for (NodeId p : target_preds) {
    const NodeId n = tape.nuclear_norm(p);
    target_sum = target_sum < 0 ? n : tape.add(target_sum, n);
  }
  return tape.subtract(
      tape.scalar_multiply(source_sum, 1.0 / static_cast<double>(source_preds.size())),
      tape.scalar_multiply(target_sum, 1.0 / static_cast<double>(target_preds.size())));
}

NodeId target_consistency_loss(Tape& tape, std::span<const NodeId> original_preds,
                               std::span<const NodeId> deformed_preds) {
  if (original_preds.size() != deformed_preds.size())
    throw std::invalid_argument("target_consistency_loss: list length mismatch");
  return batch_nuclear_discrepancy(tape, original_preds, deformed_preds);
}

std::pair<double, double> total_objective(const LossWeights& weights, double cls, double ssl,
                                          double align, double consistency) {
  weights.validate();
  for (double v : {cls, ssl, align, consistency}) {
    if (!std::isfinite(v)) throw std::invalid_argument("total_objective: non-finite loss term");
  }
  return {weights.alpha * cls + weights.gamma * ssl,
          weights.beta1 * align + weights.beta2 * consistency};
}

}  // namespace cdnd
