#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace proper::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
// tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }

  const Matrix& value() const;
  double scalar() const;  // value of a 1x1 node
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Records a computation graph over dense matrices and replays it backwards to
// accumulate gradients. Nodes that depend on no leaf are marked constant and
// skipped during the backward sweep.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var constant(double value);
  // A differentiable input; its gradient is available after backward().
  Var leaf(Matrix value);

  Var record(Matrix value, std::initializer_list<Var> parents, Backward backward);
  Var record(Matrix value, bool requires_grad, Backward backward);

  // Seeds d(root)/d(root) = 1 for a 1x1 root and sweeps the tape in reverse.
  void backward(const Var& root);

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  // Zero matrix of the right shape when no gradient reached the node.
  Matrix grad(const Var& v) const;

  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  void accumulate(int id, const Matrix& g);
  // Adds u * vᵀ. Contributions to leaves are buffered and applied as a single
  // product when the sweep ends.
  void accumulate_outer(int id, const Matrix& u, const Matrix& v);
  // Adds g into the block of the gradient whose top-left corner is (row, col).
  void accumulate_block(int id, Eigen::Index row, Eigen::Index col, const Matrix& g);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
    bool has_grad = false;
  };
  struct Outer {
    std::vector<Matrix> u, v;
    Eigen::Index columns = 0;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<int, Outer>> pending_;
  std::vector<int> pending_slot_;  // node id -> index into pending_, or -1
};

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var scale(const Var& a, double s);
Var neg(const Var& a);
Var add_scalar(const Var& a, double s);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);

Var sum(const Var& a);             // 1x1
Var dot(const Var& a, const Var& b);  // 1x1, same shape inputs

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var column(const Var& a, Eigen::Index j);
Var element(const Var& a, Eigen::Index i);  // 1x1 from a column vector
// Columns of `a` picked by index; a negative index yields a zero column.
Var gather_cols(const Var& a, std::span<const int> index);
Var add_col_broadcast(const Var& m, const Var& col);
Var mean_cols(const Var& m);

// Column-vector softmax / log-softmax. Entries with mask == 0 are excluded:
// probability exactly 0, log-probability -inf, zero gradient.
Var softmax(const Var& logits);
Var log_softmax(const Var& logits, std::span<const char> mask = {});
Var logsumexp(const Var& v);  // 1x1

Var cosine(const Var& a, const Var& b);  // 1x1; inputs must be nonzero

Var stop_gradient(const Var& a);

// Gated recurrent unit, PyTorch gate layout (reset, update, new):
//   gx = wx * x + b, gh = wh * h
//   r = sigmoid(gx_r + gh_r), z = sigmoid(gx_z + gh_z)
//   n = tanh(gx_n + r .* gh_n),  h' = (1 - z) .* n + z .* h
Var gru_cell(const Var& x, const Var& h, const Var& wx, const Var& wh, const Var& b);

// Attention readout: softmax(keysᵀ query) weighted sum of the key columns.
Var attend(const Var& keys, const Var& query);

}  // namespace proper::ad
