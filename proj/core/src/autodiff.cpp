#include "cdnd/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cdnd/errors.hpp"

namespace cdnd {

namespace {

constexpr double kCrossEntropyEps = 1e-12;
constexpr double kNuclearRankTol = 1e-10;

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(what);
}

// c += a * b for row-major a (r x k) and b (k x c); ikj order keeps the inner
// loop contiguous in both b and c.
void matmul_accum(const double* a, const double* b, double* out, std::size_t rows,
                  std::size_t inner, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    double* out_row = out + i * cols;
    const double* a_row = a + i * inner;
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = a_row[k];
      if (aik == 0.0) continue;
      const double* b_row = b + k * cols;
      for (std::size_t j = 0; j < cols; ++j) out_row[j] += aik * b_row[j];
    }
  }
}

// da += g * b^T : da (r x k), g (r x c), b (k x c).
void matmul_grad_lhs(const double* g, const double* b, double* da, std::size_t rows,
                     std::size_t inner, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* g_row = g + i * cols;
    double* da_row = da + i * inner;
    for (std::size_t k = 0; k < inner; ++k) {
      const double* b_row = b + k * cols;
      double acc = 0.0;
      for (std::size_t j = 0; j < cols; ++j) acc += g_row[j] * b_row[j];
      da_row[k] += acc;
    }
  }
}

// db += a^T * g : db (k x c), a (r x k), g (r x c).
void matmul_grad_rhs(const double* a, const double* g, double* db, std::size_t rows,
                     std::size_t inner, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* a_row = a + i * inner;
    const double* g_row = g + i * cols;
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = a_row[k];
      if (aik == 0.0) continue;
      double* db_row = db + k * cols;
      for (std::size_t j = 0; j < cols; ++j) db_row[j] += aik * g_row[j];
    }
  }
}

double sq(double x) { return x * x; }

std::string matrix_to_string(const Tensor& a) {
  std::ostringstream os;
  os << a.rows() << "x" << a.cols() << " [";
  char buf[40];
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", a[i]);
    os << (i ? " " : "") << buf;
  }
  os << "]";
  return os.str();
}

// Replaces zero columns of u (rank-deficient inputs) with unit vectors
// orthogonal to all other columns, so u always has orthonormal columns.
void complete_orthonormal_columns(Tensor& u) {
  const std::size_t m = u.rows();
  const std::size_t r = u.cols();
  for (std::size_t j = 0; j < r; ++j) {
    double norm2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) norm2 += sq(u.at(i, j));
    if (norm2 > 0.5) continue;
    for (std::size_t basis = 0; basis < m; ++basis) {
      std::vector<double> cand(m, 0.0);
      cand[basis] = 1.0;
      for (std::size_t c = 0; c < r; ++c) {
        if (c == j) continue;
        double dot = 0.0;
        for (std::size_t i = 0; i < m; ++i) dot += cand[i] * u.at(i, c);
        for (std::size_t i = 0; i < m; ++i) cand[i] -= dot * u.at(i, c);
      }
      double cnorm2 = 0.0;
      for (double x : cand) cnorm2 += sq(x);
      if (cnorm2 > 0.25) {
        const double inv = 1.0 / std::sqrt(cnorm2);
        for (std::size_t i = 0; i < m; ++i) u.at(i, j) = cand[i] * inv;
        break;
      }
    }
  }
}

SvdResult jacobi_svd_tall(const Tensor& a, int max_sweeps) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  Tensor b = a;
  Tensor v({n, n});
  for (std::size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;

  const double tol = 1e-14;
  bool converged = (n <= 1);
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double bp = b.at(i, p);
          const double bq = b.at(i, q);
          app += bp * bp;
          aqq += bq * bq;
          apq += bp * bq;
        }
        // Second clause: once |apq| sits at the rounding noise floor of the
        // larger column, further rotations only chatter (cancellation keeps
        // regenerating noise-level cross terms on near-parallel columns).
        if (std::abs(apq) <= tol * std::sqrt(app * aqq) || apq == 0.0 ||
            std::abs(apq) <= 5e-16 * std::max(app, aqq))
          continue;
        converged = false;
        const double zeta = (aqq - app) / (2.0 * apq);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double bp = b.at(i, p);
          const double bq = b.at(i, q);
          b.at(i, p) = c * bp - s * bq;
          b.at(i, q) = s * bp + c * bq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v.at(i, p);
          const double vq = v.at(i, q);
          v.at(i, p) = c * vp - s * vq;
          v.at(i, q) = s * vp + c * vq;
        }
      }
    }
  }
  if (!converged) {
    throw NumericError("jacobi_svd: no convergence after " + std::to_string(max_sweeps) +
                       " sweeps on matrix " + matrix_to_string(a));
  }

  std::vector<double> sigma(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double norm2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) norm2 += sq(b.at(i, j));
    sigma[j] = std::sqrt(norm2);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  SvdResult out;
  out.u = Tensor({m, n});
  out.v = Tensor({n, n});
  out.singular_values.resize(n);
  const double sigma_max = sigma[order[0]];
  for (std::size_t jj = 0; jj < n; ++jj) {
    const std::size_t src = order[jj];
    out.singular_values[jj] = sigma[src];
    // Numerically-zero columns carry no usable direction; leave them zero and
    // let the completion below rebuild an orthonormal basis vector.
    if (sigma[src] <= 1e-12 * sigma_max || sigma[src] == 0.0) continue;
    const double inv = 1.0 / sigma[src];
    for (std::size_t i = 0; i < m; ++i) out.u.at(i, jj) = b.at(i, src) * inv;
  }
  for (std::size_t jj = 0; jj < n; ++jj) {
    const std::size_t src = order[jj];
    for (std::size_t i = 0; i < n; ++i) out.v.at(i, jj) = v.at(i, src);
  }
  complete_orthonormal_columns(out.u);
  return out;
}

}  // namespace

SvdResult jacobi_svd(const Tensor& a, int max_sweeps) {
  require(a.rank() == 2 && a.rows() >= 1 && a.cols() >= 1, "jacobi_svd: 2-D non-empty input required");
  if (a.rows() >= a.cols()) return jacobi_svd_tall(a, max_sweeps);
  Tensor at({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) at.at(j, i) = a.at(i, j);
  SvdResult t = jacobi_svd_tall(at, max_sweeps);
  return SvdResult{std::move(t.v), std::move(t.singular_values), std::move(t.u)};
}

NodeId Tape::push(Node node) {
  if (node.op != Op::kLeaf) eval(node);
  node.grad = Tensor::zeros(node.value.shape());
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::leaf(Tensor value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  require(value(a).same_shape(value(b)), "add: shape mismatch");
  Node n;
  n.op = Op::kAdd;
  n.inputs = {a, b};
  return push(std::move(n));
}

NodeId Tape::subtract(NodeId a, NodeId b) {
  require(value(a).same_shape(value(b)), "subtract: shape mismatch");
  Node n;
  n.op = Op::kSub;
  n.inputs = {a, b};
  return push(std::move(n));
}

NodeId Tape::scalar_multiply(NodeId a, double s) {
  Node n;
  n.op = Op::kScalarMul;
  n.inputs = {a};
  n.daux = s;
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  require(value(a).rank() == 2 && value(b).rank() == 2, "matmul: 2-D inputs required");
  require(value(a).cols() == value(b).rows(), "matmul: inner dimension mismatch");
  Node n;
  n.op = Op::kMatmul;
  n.inputs = {a, b};
  return push(std::move(n));
}

NodeId Tape::row_bias_add(NodeId a, NodeId bias) {
  require(value(a).rank() == 2, "row_bias_add: 2-D input required");
  require(value(bias).size() == value(a).cols(), "row_bias_add: bias length != cols");
  Node n;
  n.op = Op::kRowBiasAdd;
  n.inputs = {a, bias};
  return push(std::move(n));
}

NodeId Tape::relu(NodeId a) {
  Node n;
  n.op = Op::kRelu;
  n.inputs = {a};
  return push(std::move(n));
}

NodeId Tape::log(NodeId a) {
  Node n;
  n.op = Op::kLog;
  n.inputs = {a};
  return push(std::move(n));
}

NodeId Tape::exp(NodeId a) {
  Node n;
  n.op = Op::kExp;
  n.inputs = {a};
  return push(std::move(n));
}

NodeId Tape::softmax_rows(NodeId a) {
  require(value(a).rank() == 2, "softmax_rows: 2-D input required");
  Node n;
  n.op = Op::kSoftmaxRows;
  n.inputs = {a};
  return push(std::move(n));
}

NodeId Tape::max_pool_rows(NodeId a, std::size_t group_size) {
  require(value(a).rank() == 2, "max_pool_rows: 2-D input required");
  require(group_size >= 1 && value(a).rows() % group_size == 0,
          "max_pool_rows: rows not divisible by group size");
  Node n;
  n.op = Op::kMaxPoolRows;
  n.inputs = {a};
  n.iaux.resize(2);
  n.iaux[0] = static_cast<int>(group_size);
  return push(std::move(n));
}

NodeId Tape::mean(NodeId a) {
  require(value(a).size() >= 1, "mean: empty input");
  Node n;
  n.op = Op::kMean;
  n.inputs = {a};
  return push(std::move(n));
}

NodeId Tape::concat_rows(std::span<const NodeId> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const std::size_t cols = value(parts[0]).cols();
  for (NodeId p : parts) {
    require(value(p).rank() == 2 && value(p).cols() == cols, "concat_rows: column mismatch");
  }
  Node n;
  n.op = Op::kConcatRows;
  n.inputs.assign(parts.begin(), parts.end());
  return push(std::move(n));
}

NodeId Tape::slice_rows(NodeId a, std::size_t begin, std::size_t count) {
  require(value(a).rank() == 2, "slice_rows: 2-D input required");
  require(begin + count <= value(a).rows(), "slice_rows: out of range");
  Node n;
  n.op = Op::kSliceRows;
  n.inputs = {a};
  n.iaux = {static_cast<int>(begin), static_cast<int>(count)};
  return push(std::move(n));
}

NodeId Tape::reshape(NodeId a, std::vector<std::size_t> shape) {
  require(Tensor::count(shape) == value(a).size(), "reshape: element count mismatch");
  Node n;
  n.op = Op::kReshape;
  n.inputs = {a};
  n.value = Tensor(std::move(shape));
  return push(std::move(n));
}

NodeId Tape::cross_entropy(NodeId probs, const std::vector<int>& labels) {
  require(value(probs).rank() == 2, "cross_entropy: 2-D input required");
  require(labels.size() == value(probs).rows(), "cross_entropy: label count != rows");
  const int num_classes = static_cast<int>(value(probs).cols());
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw std::invalid_argument("cross_entropy: label out of range");
  }
  Node n;
  n.op = Op::kCrossEntropy;
  n.inputs = {probs};
  n.iaux = labels;
  return push(std::move(n));
}

NodeId Tape::chamfer(NodeId a, NodeId b) {
  require(value(a).rank() == 2 && value(b).rank() == 2, "chamfer: 2-D inputs required");
  require(value(a).cols() == value(b).cols(), "chamfer: coordinate dimension mismatch");
  require(value(a).rows() >= 1 && value(b).rows() >= 1, "chamfer: empty point set");
  Node n;
  n.op = Op::kChamfer;
  n.inputs = {a, b};
  return push(std::move(n));
}

NodeId Tape::nuclear_norm(NodeId a) {
  require(value(a).rank() == 2 && value(a).size() >= 1, "nuclear_norm: 2-D non-empty input required");
  Node n;
  n.op = Op::kNuclearNorm;
  n.inputs = {a};
  return push(std::move(n));
}

NodeId Tape::gradient_reverse(NodeId a, double lambda) {
  require(std::isfinite(lambda), "gradient_reverse: lambda must be finite");
  Node n;
  n.op = Op::kGradReverse;
  n.inputs = {a};
  n.daux = lambda;
  return push(std::move(n));
}

void Tape::eval(Node& node) {
  const auto in = [&](std::size_t i) -> const Tensor& {
    return nodes_[static_cast<std::size_t>(node.inputs[i])].value;
  };
  switch (node.op) {
    case Op::kLeaf:
      break;
    case Op::kAdd: {
      node.value = in(0);
      const Tensor& b = in(1);
      for (std::size_t i = 0; i < node.value.size(); ++i) node.value[i] += b[i];
      break;
    }
    case Op::kSub: {
      node.value = in(0);
      const Tensor& b = in(1);
      for (std::size_t i = 0; i < node.value.size(); ++i) node.value[i] -= b[i];
      break;
    }
    case Op::kScalarMul: {
      node.value = in(0);
      for (std::size_t i = 0; i < node.value.size(); ++i) node.value[i] *= node.daux;
      break;
    }
    case Op::kMatmul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      node.value = Tensor({a.rows(), b.cols()});
      matmul_accum(a.data(), b.data(), node.value.data(), a.rows(), a.cols(), b.cols());
      break;
    }
    case Op::kRowBiasAdd: {
      const Tensor& a = in(0);
      const Tensor& bias = in(1);
      node.value = a;
      for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) node.value.at(r, c) += bias[c];
      break;
    }
    case Op::kRelu: {
      node.value = in(0);
      for (std::size_t i = 0; i < node.value.size(); ++i)
        if (node.value[i] < 0.0) node.value[i] = 0.0;
      break;
    }
    case Op::kLog: {
      node.value = in(0);
      for (std::size_t i = 0; i < node.value.size(); ++i) node.value[i] = std::log(node.value[i]);
      break;
    }
    case Op::kExp: {
      node.value = in(0);
      for (std::size_t i = 0; i < node.value.size(); ++i) node.value[i] = std::exp(node.value[i]);
      break;
    }
    case Op::kSoftmaxRows: {
      const Tensor& a = in(0);
      node.value = Tensor(a.shape());
      for (std::size_t r = 0; r < a.rows(); ++r) {
        double row_max = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < a.cols(); ++c) row_max = std::max(row_max, a.at(r, c));
        double denom = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) {
          const double e = std::exp(a.at(r, c) - row_max);
          node.value.at(r, c) = e;
          denom += e;
        }
        for (std::size_t c = 0; c < a.cols(); ++c) node.value.at(r, c) /= denom;
      }
      break;
    }
    case Op::kMaxPoolRows: {
      const Tensor& a = in(0);
      const std::size_t group = static_cast<std::size_t>(node.iaux[0]);
      const std::size_t groups = a.rows() / group;
      const std::size_t cols = a.cols();
      node.value = Tensor({groups, cols});
      node.iaux.resize(2 + groups * cols);
      for (std::size_t t = 0; t < groups; ++t) {
        for (std::size_t c = 0; c < cols; ++c) {
          std::size_t best = t * group;
          double best_val = a.at(best, c);
          for (std::size_t r = t * group + 1; r < (t + 1) * group; ++r) {
            if (a.at(r, c) > best_val) {
              best_val = a.at(r, c);
              best = r;
            }
          }
          node.value.at(t, c) = best_val;
          node.iaux[2 + t * cols + c] = static_cast<int>(best);
        }
      }
      break;
    }
    case Op::kMean: {
      const Tensor& a = in(0);
      double acc = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
      node.value = Tensor::scalar(acc / static_cast<double>(a.size()));
      break;
    }
    case Op::kConcatRows: {
      std::size_t rows = 0;
      const std::size_t cols = in(0).cols();
      for (std::size_t p = 0; p < node.inputs.size(); ++p) rows += in(p).rows();
      node.value = Tensor({rows, cols});
      std::size_t row = 0;
      for (std::size_t p = 0; p < node.inputs.size(); ++p) {
        const Tensor& part = in(p);
        std::copy(part.data(), part.data() + part.size(), node.value.data() + row * cols);
        row += part.rows();
      }
      break;
    }
    case Op::kSliceRows: {
      const Tensor& a = in(0);
      const std::size_t begin = static_cast<std::size_t>(node.iaux[0]);
      const std::size_t count = static_cast<std::size_t>(node.iaux[1]);
      node.value = Tensor({count, a.cols()});
      std::copy(a.data() + begin * a.cols(), a.data() + (begin + count) * a.cols(),
                node.value.data());
      break;
    }
    case Op::kReshape: {
      const Tensor& a = in(0);
      std::vector<std::size_t> shape = node.value.shape();
      node.value = Tensor(std::move(shape), a.values());
      break;
    }
    case Op::kCrossEntropy: {
      const Tensor& p = in(0);
      double acc = 0.0;
      for (std::size_t r = 0; r < p.rows(); ++r) {
        acc -= std::log(p.at(r, static_cast<std::size_t>(node.iaux[r])) + kCrossEntropyEps);
      }
      node.value = Tensor::scalar(acc / static_cast<double>(p.rows()));
      break;
    }
    case Op::kChamfer: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const std::size_t dim = a.cols();
      node.iaux.assign(a.rows() + b.rows(), 0);
      // The two directed sums accumulate separately; their final commutative
      // addition makes chamfer(a, b) == chamfer(b, a) bit-exact.
      double sum_ab = 0.0;
      for (std::size_t i = 0; i < a.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < b.rows(); ++j) {
          double d = 0.0;
          for (std::size_t c = 0; c < dim; ++c) d += sq(a.at(i, c) - b.at(j, c));
          if (d < best) {
            best = d;
            best_j = j;
          }
        }
        node.iaux[i] = static_cast<int>(best_j);
        sum_ab += best;
      }
      double sum_ba = 0.0;
      for (std::size_t j = 0; j < b.rows(); ++j) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (std::size_t i = 0; i < a.rows(); ++i) {
          double d = 0.0;
          for (std::size_t c = 0; c < dim; ++c) d += sq(b.at(j, c) - a.at(i, c));
          if (d < best) {
            best = d;
            best_i = i;
          }
        }
        node.iaux[a.rows() + j] = static_cast<int>(best_i);
        sum_ba += best;
      }
      node.value = Tensor::scalar(sum_ab + sum_ba);
      break;
    }
    case Op::kNuclearNorm: {
      const Tensor& a = in(0);
      const SvdResult svd = jacobi_svd(a);
      double total = 0.0;
      for (double s : svd.singular_values) total += s;
      // Always-on sanity bound: |A|_F <= sum(sigma) <= sqrt(r)*|A|_F.
      double frob2 = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) frob2 += a[i] * a[i];
      const double frob = std::sqrt(frob2);
      const double upper = std::sqrt(static_cast<double>(svd.singular_values.size())) * frob;
      if (total < frob - 1e-8 || total > upper + 1e-8) {
        throw NumericError("nuclear_norm: value escapes the Frobenius bounds on matrix " +
                           matrix_to_string(a));
      }
      node.value = Tensor::scalar(total);
      node.taux = Tensor(a.shape());
      for (std::size_t k = 0; k < svd.singular_values.size(); ++k) {
        if (svd.singular_values[k] < kNuclearRankTol) continue;
        for (std::size_t i = 0; i < a.rows(); ++i)
          for (std::size_t j = 0; j < a.cols(); ++j)
            node.taux.at(i, j) += svd.u.at(i, k) * svd.v.at(j, k);
      }
      break;
    }
    case Op::kGradReverse: {
      node.value = in(0);
      break;
    }
  }
}

void Tape::backprop(const Node& node) {
  const Tensor& g = node.grad;
  const auto in = [&](std::size_t i) -> const Tensor& {
    return nodes_[static_cast<std::size_t>(node.inputs[i])].value;
  };
  const auto gin = [&](std::size_t i) -> Tensor& { return grad_of(node.inputs[i]); };
  switch (node.op) {
    case Op::kLeaf:
      break;
    case Op::kAdd: {
      Tensor& ga = gin(0);
      Tensor& gb = gin(1);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] += g[i];
      }
      break;
    }
    case Op::kSub: {
      Tensor& ga = gin(0);
      Tensor& gb = gin(1);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] -= g[i];
      }
      break;
    }
    case Op::kScalarMul: {
      Tensor& ga = gin(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += node.daux * g[i];
      break;
    }
    case Op::kMatmul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      matmul_grad_lhs(g.data(), b.data(), gin(0).data(), a.rows(), a.cols(), b.cols());
      matmul_grad_rhs(a.data(), g.data(), gin(1).data(), a.rows(), a.cols(), b.cols());
      break;
    }
    case Op::kRowBiasAdd: {
      Tensor& ga = gin(0);
      Tensor& gbias = gin(1);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gbias[c] += g.at(r, c);
      break;
    }
    case Op::kRelu: {
      const Tensor& x = in(0);
      Tensor& ga = gin(0);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] > 0.0) ga[i] += g[i];
      break;
    }
    case Op::kLog: {
      const Tensor& x = in(0);
      Tensor& ga = gin(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
      break;
    }
    case Op::kExp: {
      Tensor& ga = gin(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * node.value[i];
      break;
    }
    case Op::kSoftmaxRows: {
      const Tensor& y = node.value;
      Tensor& ga = gin(0);
      for (std::size_t r = 0; r < y.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < y.cols(); ++c) dot += g.at(r, c) * y.at(r, c);
        for (std::size_t c = 0; c < y.cols(); ++c)
          ga.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
      }
      break;
    }
    case Op::kMaxPoolRows: {
      Tensor& ga = gin(0);
      const std::size_t cols = node.value.cols();
      for (std::size_t t = 0; t < node.value.rows(); ++t)
        for (std::size_t c = 0; c < cols; ++c)
          ga.at(static_cast<std::size_t>(node.iaux[2 + t * cols + c]), c) += g.at(t, c);
      break;
    }
    case Op::kMean: {
      Tensor& ga = gin(0);
      const double scale = g[0] / static_cast<double>(ga.size());
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += scale;
      break;
    }
    case Op::kConcatRows: {
      std::size_t row = 0;
      for (std::size_t p = 0; p < node.inputs.size(); ++p) {
        Tensor& gp = gin(p);
        const std::size_t count = gp.size();
        const double* src = g.data() + row * g.cols();
        for (std::size_t i = 0; i < count; ++i) gp[i] += src[i];
        row += gp.rows();
      }
      break;
    }
    case Op::kSliceRows: {
      Tensor& ga = gin(0);
      const std::size_t begin = static_cast<std::size_t>(node.iaux[0]);
      double* dst = ga.data() + begin * ga.cols();
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
      break;
    }
    case Op::kReshape: {
      Tensor& ga = gin(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      break;
    }
    case Op::kCrossEntropy: {
      const Tensor& p = in(0);
      Tensor& gp = gin(0);
      const double scale = -g[0] / static_cast<double>(p.rows());
      for (std::size_t r = 0; r < p.rows(); ++r) {
        const std::size_t y = static_cast<std::size_t>(node.iaux[r]);
        gp.at(r, y) += scale / (p.at(r, y) + kCrossEntropyEps);
      }
      break;
    }
    case Op::kChamfer: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      Tensor& ga = gin(0);
      Tensor& gb = gin(1);
      const std::size_t dim = a.cols();
      const double s = 2.0 * g[0];
      for (std::size_t i = 0; i < a.rows(); ++i) {
        const std::size_t j = static_cast<std::size_t>(node.iaux[i]);
        for (std::size_t c = 0; c < dim; ++c) {
          const double diff = a.at(i, c) - b.at(j, c);
          ga.at(i, c) += s * diff;
          gb.at(j, c) -= s * diff;
        }
      }
      for (std::size_t j = 0; j < b.rows(); ++j) {
        const std::size_t i = static_cast<std::size_t>(node.iaux[a.rows() + j]);
        for (std::size_t c = 0; c < dim; ++c) {
          const double diff = b.at(j, c) - a.at(i, c);
          gb.at(j, c) += s * diff;
          ga.at(i, c) -= s * diff;
        }
      }
      break;
    }
    case Op::kNuclearNorm: {
      Tensor& ga = gin(0);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0] * node.taux[i];
      break;
    }
    case Op::kGradReverse: {
      Tensor& ga = gin(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += -node.daux * g[i];
      break;
    }
  }
}

void Tape::backward(NodeId root) {
  require(root >= 0 && static_cast<std::size_t>(root) < nodes_.size(), "backward: bad root");
  require(value(root).size() == 1, "backward: root must be scalar");
  for (Node& n : nodes_) n.grad.fill(0.0);
  grad_of(root)[0] = 1.0;
  for (std::size_t i = static_cast<std::size_t>(root) + 1; i-- > 0;) {
    backprop(nodes_[i]);
  }
}

void Tape::recompute() {
  for (Node& n : nodes_) {
    if (n.op != Op::kLeaf) eval(n);
  }
}

FdCheckReport finite_difference_check(const TapeFn& f, const Tensor& point, double step) {
  Tape tape;
  const NodeId x = tape.leaf(point);
  const NodeId root = f(tape, x);
  if (tape.value(root).size() != 1) throw std::invalid_argument("finite_difference_check: f must be scalar-valued");
  if (!std::isfinite(tape.value(root)[0]))
    throw NumericError("finite_difference_check: non-finite function value at base point");
  tape.backward(root);
  const Tensor tape_grad = tape.grad(x);

  FdCheckReport report;
  for (std::size_t i = 0; i < point.size(); ++i) {
    Tensor& xv = tape.mutable_value(x);
    const double saved = xv[i];
    xv[i] = saved + step;
    tape.recompute();
    const double f_plus = tape.value(root)[0];
    xv[i] = saved - step;
    tape.recompute();
    const double f_minus = tape.value(root)[0];
    xv[i] = saved;
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
      throw NumericError("finite_difference_check: non-finite function value near coordinate " +
                         std::to_string(i));
    const double fd = (f_plus - f_minus) / (2.0 * step);
    const double rel = std::abs(fd - tape_grad[i]) / std::max(std::abs(tape_grad[i]), 1e-8);
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_coordinate = i;
      report.tape_gradient = tape_grad[i];
      report.fd_gradient = fd;
    }
  }
  tape.recompute();
  return report;
}

}  // namespace cdnd
