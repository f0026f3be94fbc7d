#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace xgen::ad {

// Reverse-mode tape over row-major matrices (rows x cols; scalars are 1x1).
// Each op appends a value node and a backward rule; backward() replays the
// rules in reverse, accumulating into node gradients. All math is double and
// routed through the runtime-dispatched kernel table.
class Tape {
 public:
  using Index = int;

  struct Node {
    int rows = 0, cols = 0;
    std::vector<double> val;
    std::vector<double> grad;
    bool needs_grad = false;
  };

  // --- leaves ---------------------------------------------------------------
  Index leaf(int rows, int cols, const double* data, bool needs_grad);
  Index leaf(int rows, int cols, const std::vector<double>& data, bool needs_grad) {
    return leaf(rows, cols, data.data(), needs_grad);
  }
  Index zeros(int rows, int cols, bool needs_grad);

  // --- elementwise / linear algebra ------------------------------------
  Index add(Index a, Index b);
  Index sub(Index a, Index b);
  Index mul(Index a, Index b);
  Index scale(Index a, double s);
  // y = x * w^T + bias(row-broadcast); w is out_dim x in_dim, bias out_dim (or -1)
  Index linear(Index x, Index w, Index bias);
  Index leaky_relu(Index x, double slope);
  // pass-through gradient inside [lo, hi], zero outside
  Index clamp(Index x, double lo, double hi);

  // --- structure ops ----------------------------------------------------
  // out row r = x row indices[r]; backward scatter-adds (indices may repeat)
  Index gather_rows(Index x, std::vector<int> indices);
  Index concat_cols(Index a, Index b);
  // out row r = sum_j weights[r*8+j] * x row indices[r*8+j] (index -1 = zero)
  Index trilinear_gather(Index x, std::vector<int64_t> indices, std::vector<double> weights);
  // sparse 3^3 convolution: w is (27*c_out) x c_in, neighbors is s_out*27
  // indices into x rows (-1 for unoccupied)
  Index sparse_conv(Index x, Index w, Index bias, std::vector<int32_t> neighbors, int c_out);

  // --- distribution / losses -------------------------------------------------
  // mean + exp(logvar/2) * eta, eta constant per element
  Index reparameterize(Index mean, Index logvar, std::vector<double> eta);
  // rows of raw (n x 3) projected to tangent planes of constant unit normals
  // and normalized; throws if any projection magnitude < 1e-8
  Index project_normalize(Index raw, const std::vector<double>& normals);
  // alpha = cos(theta) t1 + sin(theta) t2 (t1, t2 constant n x 3)
  Index rotation_frame(Index theta, std::vector<double> t1, std::vector<double> t2);
  // mean_r max(0, |a_r.mu_r| + |a_r.nu_r| - 1)
  Index crossfield_loss(Index alpha, std::vector<double> mu, std::vector<double> nu);
  // mean |pred - target|
  Index l1_loss(Index pred, std::vector<double> target);
  // mean of numerically stable BCE-with-logits against labels in {0,1}
  Index bce_logits_loss(Index logits, std::vector<double> labels);
  // mean over elements of 0.5 (mu^2 + exp(lv) - lv - 1)
  Index kl_loss(Index mean, Index logvar);
  Index mean_all(Index x);
  Index weighted_sum(const std::vector<std::pair<Index, double>>& terms);

  // --- access ----------------------------------------------------------------
  const Node& node(Index i) const { return nodes_[size_t(i)]; }
  double scalar(Index i) const { return nodes_[size_t(i)].val[0]; }
  const std::vector<double>& value(Index i) const { return nodes_[size_t(i)].val; }
  const std::vector<double>& gradient(Index i) const { return nodes_[size_t(i)].grad; }

  void backward(Index loss);
  size_t size() const { return nodes_.size(); }

 private:
  Index push(int rows, int cols, bool needs_grad);
  void check_same_shape(Index a, Index b, const char* op) const;

  std::vector<Node> nodes_;
  std::vector<std::function<void(Tape&)>> rules_;
};

}  // namespace xgen::ad
