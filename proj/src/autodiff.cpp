#include "xgen/autodiff.hpp"

#include <cmath>
#include <cstring>

#include "xgen/kernels.hpp"
#include "xgen/util.hpp"

namespace xgen::ad {

using kernels::active;

Tape::Index Tape::push(int rows, int cols, bool needs_grad) {
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.val.assign(size_t(rows) * cols, 0.0);
  if (needs_grad) n.grad.assign(size_t(rows) * cols, 0.0);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Index(nodes_.size()) - 1;
}

void Tape::check_same_shape(Index a, Index b, const char* op) const {
  const Node &na = nodes_[size_t(a)], &nb = nodes_[size_t(b)];
  if (na.rows != nb.rows || na.cols != nb.cols)
    throw Error(std::string(op) + ": shape mismatch");
}

Tape::Index Tape::leaf(int rows, int cols, const double* data, bool needs_grad) {
  Index i = push(rows, cols, needs_grad);
  std::memcpy(nodes_[size_t(i)].val.data(), data, sizeof(double) * size_t(rows) * cols);
  return i;
}

Tape::Index Tape::zeros(int rows, int cols, bool needs_grad) {
  return push(rows, cols, needs_grad);
}

Tape::Index Tape::add(Index a, Index b) {
  check_same_shape(a, b, "add");
  const Node &na = nodes_[size_t(a)], &nb = nodes_[size_t(b)];
  Index out = push(na.rows, na.cols, na.needs_grad || nb.needs_grad);
  Node& no = nodes_[size_t(out)];
  for (size_t i = 0; i < no.val.size(); ++i) no.val[i] = na.val[i] + nb.val[i];
  rules_.push_back([a, b, out](Tape& t) {
    const auto& g = t.nodes_[size_t(out)].grad;
    if (t.nodes_[size_t(a)].needs_grad)
      active().axpy(1.0, g.data(), t.nodes_[size_t(a)].grad.data(), g.size());
    if (t.nodes_[size_t(b)].needs_grad)
      active().axpy(1.0, g.data(), t.nodes_[size_t(b)].grad.data(), g.size());
  });
  return out;
}

Tape::Index Tape::sub(Index a, Index b) {
  check_same_shape(a, b, "sub");
  const Node &na = nodes_[size_t(a)], &nb = nodes_[size_t(b)];
  Index out = push(na.rows, na.cols, na.needs_grad || nb.needs_grad);
  Node& no = nodes_[size_t(out)];
  for (size_t i = 0; i < no.val.size(); ++i) no.val[i] = na.val[i] - nb.val[i];
  rules_.push_back([a, b, out](Tape& t) {
    const auto& g = t.nodes_[size_t(out)].grad;
    if (t.nodes_[size_t(a)].needs_grad)
      active().axpy(1.0, g.data(), t.nodes_[size_t(a)].grad.data(), g.size());
    if (t.nodes_[size_t(b)].needs_grad)
      active().axpy(-1.0, g.data(), t.nodes_[size_t(b)].grad.data(), g.size());
  });
  return out;
}

Tape::Index Tape::mul(Index a, Index b) {
  check_same_shape(a, b, "mul");
  const Node &na = nodes_[size_t(a)], &nb = nodes_[size_t(b)];
  Index out = push(na.rows, na.cols, na.needs_grad || nb.needs_grad);
  Node& no = nodes_[size_t(out)];
  for (size_t i = 0; i < no.val.size(); ++i) no.val[i] = na.val[i] * nb.val[i];
  rules_.push_back([a, b, out](Tape& t) {
    const auto& g = t.nodes_[size_t(out)].grad;
    Node &xa = t.nodes_[size_t(a)], &xb = t.nodes_[size_t(b)];
    if (xa.needs_grad)
      for (size_t i = 0; i < g.size(); ++i) xa.grad[i] += g[i] * xb.val[i];
    if (xb.needs_grad)
      for (size_t i = 0; i < g.size(); ++i) xb.grad[i] += g[i] * xa.val[i];
  });
  return out;
}

Tape::Index Tape::scale(Index a, double s) {
  const Node& na = nodes_[size_t(a)];
  Index out = push(na.rows, na.cols, na.needs_grad);
  Node& no = nodes_[size_t(out)];
  for (size_t i = 0; i < no.val.size(); ++i) no.val[i] = s * na.val[i];
  rules_.push_back([a, out, s](Tape& t) {
    if (!t.nodes_[size_t(a)].needs_grad) return;
    const auto& g = t.nodes_[size_t(out)].grad;
    active().axpy(s, g.data(), t.nodes_[size_t(a)].grad.data(), g.size());
  });
  return out;
}

Tape::Index Tape::linear(Index x, Index w, Index bias) {
  const Node &nx = nodes_[size_t(x)], &nw = nodes_[size_t(w)];
  if (nx.cols != nw.cols) throw Error("linear: inner dimension mismatch");
  const int n = nx.rows, kin = nx.cols, m = nw.rows;
  bool has_bias = bias >= 0;
  if (has_bias && (nodes_[size_t(bias)].rows * nodes_[size_t(bias)].cols != m))
    throw Error("linear: bias size mismatch");
  bool ng = nx.needs_grad || nw.needs_grad || (has_bias && nodes_[size_t(bias)].needs_grad);
  Index out = push(n, m, ng);
  Node& no = nodes_[size_t(out)];
  for (int r = 0; r < n; ++r) {
    double* yrow = no.val.data() + size_t(r) * m;
    if (has_bias)
      std::memcpy(yrow, nodes_[size_t(bias)].val.data(), sizeof(double) * m);
    active().matvec(nw.val.data(), nx.val.data() + size_t(r) * kin, yrow, m, kin);
  }
  rules_.push_back([x, w, bias, out, n, kin, m, has_bias](Tape& t) {
    const auto& g = t.nodes_[size_t(out)].grad;
    Node &xn = t.nodes_[size_t(x)], &wn = t.nodes_[size_t(w)];
    for (int r = 0; r < n; ++r) {
      const double* grow = g.data() + size_t(r) * m;
      if (xn.needs_grad)
        active().matvec_t(wn.val.data(), grow, xn.grad.data() + size_t(r) * kin, m, kin);
      if (wn.needs_grad)
        active().outer_acc(grow, xn.val.data() + size_t(r) * kin, wn.grad.data(), m, kin);
      if (has_bias && t.nodes_[size_t(bias)].needs_grad)
        active().axpy(1.0, grow, t.nodes_[size_t(bias)].grad.data(), m);
    }
  });
  return out;
}

Tape::Index Tape::leaky_relu(Index x, double slope) {
  const Node& nx = nodes_[size_t(x)];
  Index out = push(nx.rows, nx.cols, nx.needs_grad);
  Node& no = nodes_[size_t(out)];
  active().lrelu(nx.val.data(), no.val.data(), no.val.size(), slope);
  rules_.push_back([x, out, slope](Tape& t) {
    Node& xn = t.nodes_[size_t(x)];
    if (!xn.needs_grad) return;
    const auto& g = t.nodes_[size_t(out)].grad;
    active().lrelu_bwd(xn.val.data(), g.data(), xn.grad.data(), g.size(), slope);
  });
  return out;
}

Tape::Index Tape::clamp(Index x, double lo, double hi) {
  const Node& nx = nodes_[size_t(x)];
  Index out = push(nx.rows, nx.cols, nx.needs_grad);
  Node& no = nodes_[size_t(out)];
  for (size_t i = 0; i < no.val.size(); ++i) no.val[i] = std::clamp(nx.val[i], lo, hi);
  rules_.push_back([x, out, lo, hi](Tape& t) {
    Node& xn = t.nodes_[size_t(x)];
    if (!xn.needs_grad) return;
    const auto& g = t.nodes_[size_t(out)].grad;
    for (size_t i = 0; i < g.size(); ++i)
      if (xn.val[i] > lo && xn.val[i] < hi) xn.grad[i] += g[i];
  });
  return out;
}

Tape::Index Tape::gather_rows(Index x, std::vector<int> indices) {
  const Node& nx = nodes_[size_t(x)];
  const int c = nx.cols;
  Index out = push(int(indices.size()), c, nx.needs_grad);
  Node& no = nodes_[size_t(out)];
  for (size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] < 0 || indices[r] >= nx.rows) throw Error("gather_rows: index out of range");
    std::memcpy(no.val.data() + r * c, nx.val.data() + size_t(indices[r]) * c,
                sizeof(double) * c);
  }
  rules_.push_back([x, out, idx = std::move(indices), c](Tape& t) {
    Node& xn = t.nodes_[size_t(x)];
    if (!xn.needs_grad) return;
    const auto& g = t.nodes_[size_t(out)].grad;
    for (size_t r = 0; r < idx.size(); ++r)
      active().axpy(1.0, g.data() + r * c, xn.grad.data() + size_t(idx[r]) * c, c);
  });
  return out;
}

Tape::Index Tape::concat_cols(Index a, Index b) {
  const Node &na = nodes_[size_t(a)], &nb = nodes_[size_t(b)];
  if (na.rows != nb.rows) throw Error("concat_cols: row count mismatch");
  const int ca = na.cols, cb = nb.cols;
  Index out = push(na.rows, ca + cb, na.needs_grad || nb.needs_grad);
  Node& no = nodes_[size_t(out)];
  for (int r = 0; r < na.rows; ++r) {
    std::memcpy(no.val.data() + size_t(r) * (ca + cb), na.val.data() + size_t(r) * ca,
                sizeof(double) * ca);
    std::memcpy(no.val.data() + size_t(r) * (ca + cb) + ca, nb.val.data() + size_t(r) * cb,
                sizeof(double) * cb);
  }
  rules_.push_back([a, b, out, ca, cb](Tape& t) {
    Node &xa = t.nodes_[size_t(a)], &xb = t.nodes_[size_t(b)];
    const auto& g = t.nodes_[size_t(out)].grad;
    for (int r = 0; r < xa.rows; ++r) {
      if (xa.needs_grad)
        active().axpy(1.0, g.data() + size_t(r) * (ca + cb), xa.grad.data() + size_t(r) * ca, ca);
      if (xb.needs_grad)
        active().axpy(1.0, g.data() + size_t(r) * (ca + cb) + ca,
                      xb.grad.data() + size_t(r) * cb, cb);
    }
  });
  return out;
}

Tape::Index Tape::trilinear_gather(Index x, std::vector<int64_t> indices,
                                   std::vector<double> weights) {
  if (indices.size() != weights.size() || indices.size() % 8 != 0)
    throw Error("trilinear_gather: malformed stencil");
  const Node& nx = nodes_[size_t(x)];
  const int c = nx.cols;
  const int n = int(indices.size() / 8);
  Index out = push(n, c, nx.needs_grad);
  Node& no = nodes_[size_t(out)];
  for (int r = 0; r < n; ++r)
    for (int j = 0; j < 8; ++j) {
      int64_t src = indices[size_t(r) * 8 + j];
      if (src < 0) continue;
      active().axpy(weights[size_t(r) * 8 + j], nx.val.data() + size_t(src) * c,
                    no.val.data() + size_t(r) * c, c);
    }
  rules_.push_back([x, out, idx = std::move(indices), w = std::move(weights), n, c](Tape& t) {
    Node& xn = t.nodes_[size_t(x)];
    if (!xn.needs_grad) return;
    const auto& g = t.nodes_[size_t(out)].grad;
    for (int r = 0; r < n; ++r)
      for (int j = 0; j < 8; ++j) {
        int64_t src = idx[size_t(r) * 8 + j];
        if (src < 0) continue;
        active().axpy(w[size_t(r) * 8 + j], g.data() + size_t(r) * c,
                      xn.grad.data() + size_t(src) * c, c);
      }
  });
  return out;
}

Tape::Index Tape::sparse_conv(Index x, Index w, Index bias, std::vector<int32_t> neighbors,
                              int c_out) {
  const Node &nx = nodes_[size_t(x)], &nw = nodes_[size_t(w)];
  const int c_in = nx.cols;
  if (nw.cols != c_in || nw.rows != 27 * c_out) throw Error("sparse_conv: weight shape mismatch");
  if (neighbors.size() % 27 != 0) throw Error("sparse_conv: malformed neighbor table");
  const int s_out = int(neighbors.size() / 27);
  bool has_bias = bias >= 0;
  if (has_bias && nodes_[size_t(bias)].val.size() != size_t(c_out))
    throw Error("sparse_conv: bias size mismatch");
  bool ng = nx.needs_grad || nw.needs_grad || (has_bias && nodes_[size_t(bias)].needs_grad);
  Index out = push(s_out, c_out, ng);
  Node& no = nodes_[size_t(out)];
  for (int o = 0; o < s_out; ++o) {
    double* yrow = no.val.data() + size_t(o) * c_out;
    if (has_bias) std::memcpy(yrow, nodes_[size_t(bias)].val.data(), sizeof(double) * c_out);
    for (int tap = 0; tap < 27; ++tap) {
      int32_t src = neighbors[size_t(o) * 27 + tap];
      if (src < 0) continue;
      active().matvec(nw.val.data() + size_t(tap) * c_out * c_in,
                      nx.val.data() + size_t(src) * c_in, yrow, c_out, c_in);
    }
  }
  rules_.push_back(
      [x, w, bias, out, nb = std::move(neighbors), s_out, c_in, c_out, has_bias](Tape& t) {
        Node &xn = t.nodes_[size_t(x)], &wn = t.nodes_[size_t(w)];
        const auto& g = t.nodes_[size_t(out)].grad;
        for (int o = 0; o < s_out; ++o) {
          const double* grow = g.data() + size_t(o) * c_out;
          for (int tap = 0; tap < 27; ++tap) {
            int32_t src = nb[size_t(o) * 27 + tap];
            if (src < 0) continue;
            if (xn.needs_grad)
              active().matvec_t(wn.val.data() + size_t(tap) * c_out * c_in, grow,
                                xn.grad.data() + size_t(src) * c_in, c_out, c_in);
            if (wn.needs_grad)
              active().outer_acc(grow, xn.val.data() + size_t(src) * c_in,
                                 wn.grad.data() + size_t(tap) * c_out * c_in, c_out, c_in);
          }
          if (has_bias && t.nodes_[size_t(bias)].needs_grad)
            active().axpy(1.0, grow, t.nodes_[size_t(bias)].grad.data(), c_out);
        }
      });
  return out;
}

Tape::Index Tape::reparameterize(Index mean, Index logvar, std::vector<double> eta) {
  check_same_shape(mean, logvar, "reparameterize");
  const Node &nm = nodes_[size_t(mean)], &nl = nodes_[size_t(logvar)];
  if (eta.size() != nm.val.size()) throw Error("reparameterize: eta size mismatch");
  Index out = push(nm.rows, nm.cols, nm.needs_grad || nl.needs_grad);
  Node& no = nodes_[size_t(out)];
  for (size_t i = 0; i < no.val.size(); ++i)
    no.val[i] = nm.val[i] + std::exp(0.5 * nl.val[i]) * eta[i];
  rules_.push_back([mean, logvar, out, e = std::move(eta)](Tape& t) {
    Node &nm2 = t.nodes_[size_t(mean)], &nl2 = t.nodes_[size_t(logvar)];
    const auto& g = t.nodes_[size_t(out)].grad;
    if (nm2.needs_grad) active().axpy(1.0, g.data(), nm2.grad.data(), g.size());
    if (nl2.needs_grad)
      for (size_t i = 0; i < g.size(); ++i)
        nl2.grad[i] += g[i] * 0.5 * std::exp(0.5 * nl2.val[i]) * e[i];
  });
  return out;
}

Tape::Index Tape::project_normalize(Index raw, const std::vector<double>& normals) {
  const Node& nr = nodes_[size_t(raw)];
  if (nr.cols != 3 || normals.size() != nr.val.size())
    throw Error("project_normalize: expects n x 3 and matching normals");
  const int n = nr.rows;
  Index out = push(n, 3, nr.needs_grad);
  Node& no = nodes_[size_t(out)];
  std::vector<double> inv_len(n);
  for (int r = 0; r < n; ++r) {
    const double* v = nr.val.data() + 3 * size_t(r);
    const double* nn = normals.data() + 3 * size_t(r);
    double d = v[0] * nn[0] + v[1] * nn[1] + v[2] * nn[2];
    double t[3] = {v[0] - d * nn[0], v[1] - d * nn[1], v[2] - d * nn[2]};
    double len = std::sqrt(t[0] * t[0] + t[1] * t[1] + t[2] * t[2]);
    if (len < 1e-8)
      throw Error("project_normalize: direction parallel to normal at row " + std::to_string(r));
    inv_len[r] = 1.0 / len;
    double* o = no.val.data() + 3 * size_t(r);
    for (int c = 0; c < 3; ++c) o[c] = t[c] * inv_len[r];
  }
  rules_.push_back([raw, out, nrm = normals, il = std::move(inv_len)](Tape& t) {
    Node& xr = t.nodes_[size_t(raw)];
    if (!xr.needs_grad) return;
    const Node& o = t.nodes_[size_t(out)];
    for (int r = 0; r < o.rows; ++r) {
      const double* g = o.grad.data() + 3 * size_t(r);
      const double* a = o.val.data() + 3 * size_t(r);
      const double* nn = nrm.data() + 3 * size_t(r);
      // dL/dt = (g - (g.a) a) / len, then remove the normal component
      double ga = g[0] * a[0] + g[1] * a[1] + g[2] * a[2];
      double gt[3];
      for (int c = 0; c < 3; ++c) gt[c] = (g[c] - ga * a[c]) * il[r];
      double gn = gt[0] * nn[0] + gt[1] * nn[1] + gt[2] * nn[2];
      double* xg = xr.grad.data() + 3 * size_t(r);
      for (int c = 0; c < 3; ++c) xg[c] += gt[c] - gn * nn[c];
    }
  });
  return out;
}

Tape::Index Tape::rotation_frame(Index theta, std::vector<double> t1, std::vector<double> t2) {
  const Node& nt = nodes_[size_t(theta)];
  const int n = nt.rows;
  if (nt.cols != 1 || t1.size() != size_t(3 * n) || t2.size() != size_t(3 * n))
    throw Error("rotation_frame: shape mismatch");
  Index out = push(n, 3, nt.needs_grad);
  Node& no = nodes_[size_t(out)];
  for (int r = 0; r < n; ++r) {
    double c = std::cos(nt.val[size_t(r)]), s = std::sin(nt.val[size_t(r)]);
    for (int k = 0; k < 3; ++k)
      no.val[3 * size_t(r) + k] = c * t1[3 * size_t(r) + k] + s * t2[3 * size_t(r) + k];
  }
  rules_.push_back([theta, out, a = std::move(t1), b = std::move(t2)](Tape& t) {
    Node& tn = t.nodes_[size_t(theta)];
    if (!tn.needs_grad) return;
    const Node& o = t.nodes_[size_t(out)];
    for (int r = 0; r < o.rows; ++r) {
      double c = std::cos(tn.val[size_t(r)]), s = std::sin(tn.val[size_t(r)]);
      const double* g = o.grad.data() + 3 * size_t(r);
      double acc = 0;
      for (int k = 0; k < 3; ++k)
        acc += g[k] * (-s * a[3 * size_t(r) + k] + c * b[3 * size_t(r) + k]);
      tn.grad[size_t(r)] += acc;
    }
  });
  return out;
}

Tape::Index Tape::crossfield_loss(Index alpha, std::vector<double> mu, std::vector<double> nu) {
  const Node& na = nodes_[size_t(alpha)];
  const int n = na.rows;
  if (na.cols != 3 || mu.size() != size_t(3 * n) || nu.size() != size_t(3 * n))
    throw Error("crossfield_loss: shape mismatch");
  if (n == 0) throw Error("crossfield_loss: empty point set");
  Index out = push(1, 1, na.needs_grad);
  double acc = 0;
  for (int r = 0; r < n; ++r) {
    const double* a = na.val.data() + 3 * size_t(r);
    double dm = 0, dn = 0;
    for (int k = 0; k < 3; ++k) {
      dm += a[k] * mu[3 * size_t(r) + k];
      dn += a[k] * nu[3 * size_t(r) + k];
    }
    acc += std::max(0.0, std::fabs(dm) + std::fabs(dn) - 1.0);
  }
  nodes_[size_t(out)].val[0] = acc / n;
  rules_.push_back([alpha, out, m = std::move(mu), v = std::move(nu), n](Tape& t) {
    Node& an = t.nodes_[size_t(alpha)];
    if (!an.needs_grad) return;
    double g = t.nodes_[size_t(out)].grad[0] / n;
    for (int r = 0; r < n; ++r) {
      const double* a = an.val.data() + 3 * size_t(r);
      double dm = 0, dn = 0;
      for (int k = 0; k < 3; ++k) {
        dm += a[k] * m[3 * size_t(r) + k];
        dn += a[k] * v[3 * size_t(r) + k];
      }
      if (std::fabs(dm) + std::fabs(dn) - 1.0 <= 0.0) continue;  // clamped
      double sm = dm >= 0 ? 1.0 : -1.0, sn = dn >= 0 ? 1.0 : -1.0;
      double* ag = an.grad.data() + 3 * size_t(r);
      for (int k = 0; k < 3; ++k)
        ag[k] += g * (sm * m[3 * size_t(r) + k] + sn * v[3 * size_t(r) + k]);
    }
  });
  return out;
}

Tape::Index Tape::l1_loss(Index pred, std::vector<double> target) {
  const Node& np = nodes_[size_t(pred)];
  if (np.val.size() != target.size()) throw Error("l1_loss: size mismatch");
  if (target.empty()) throw Error("l1_loss: empty target");
  Index out = push(1, 1, np.needs_grad);
  double acc = 0;
  for (size_t i = 0; i < target.size(); ++i) acc += std::fabs(np.val[i] - target[i]);
  nodes_[size_t(out)].val[0] = acc / double(target.size());
  rules_.push_back([pred, out, tgt = std::move(target)](Tape& t) {
    Node& pn = t.nodes_[size_t(pred)];
    if (!pn.needs_grad) return;
    double g = t.nodes_[size_t(out)].grad[0] / double(tgt.size());
    for (size_t i = 0; i < tgt.size(); ++i) {
      double d = pn.val[i] - tgt[i];
      pn.grad[i] += d > 0 ? g : d < 0 ? -g : 0.0;
    }
  });
  return out;
}

Tape::Index Tape::bce_logits_loss(Index logits, std::vector<double> labels) {
  const Node& nl = nodes_[size_t(logits)];
  if (nl.val.size() != labels.size()) throw Error("bce_logits_loss: size mismatch");
  if (labels.empty()) throw Error("bce_logits_loss: empty labels");
  Index out = push(1, 1, nl.needs_grad);
  double acc = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    double z = nl.val[i], y = labels[i];
    acc += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z)));
  }
  nodes_[size_t(out)].val[0] = acc / double(labels.size());
  rules_.push_back([logits, out, lbl = std::move(labels)](Tape& t) {
    Node& ln = t.nodes_[size_t(logits)];
    if (!ln.needs_grad) return;
    double g = t.nodes_[size_t(out)].grad[0] / double(lbl.size());
    for (size_t i = 0; i < lbl.size(); ++i) {
      double z = ln.val[i];
      double sigma = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      ln.grad[i] += g * (sigma - lbl[i]);
    }
  });
  return out;
}

Tape::Index Tape::kl_loss(Index mean, Index logvar) {
  check_same_shape(mean, logvar, "kl_loss");
  const Node &nm = nodes_[size_t(mean)], &nl = nodes_[size_t(logvar)];
  if (nm.val.empty()) throw Error("kl_loss: empty latent");
  Index out = push(1, 1, nm.needs_grad || nl.needs_grad);
  double acc = 0;
  for (size_t i = 0; i < nm.val.size(); ++i)
    acc += 0.5 * (nm.val[i] * nm.val[i] + std::exp(nl.val[i]) - nl.val[i] - 1.0);
  nodes_[size_t(out)].val[0] = acc / double(nm.val.size());
  rules_.push_back([mean, logvar, out](Tape& t) {
    Node &nm2 = t.nodes_[size_t(mean)], &nl2 = t.nodes_[size_t(logvar)];
    double g = t.nodes_[size_t(out)].grad[0] / double(nm2.val.size());
    for (size_t i = 0; i < nm2.val.size(); ++i) {
      if (nm2.needs_grad) nm2.grad[i] += g * nm2.val[i];
      if (nl2.needs_grad) nl2.grad[i] += g * 0.5 * (std::exp(nl2.val[i]) - 1.0);
    }
  });
  return out;
}

Tape::Index Tape::mean_all(Index x) {
  const Node& nx = nodes_[size_t(x)];
  if (nx.val.empty()) throw Error("mean_all: empty input");
  Index out = push(1, 1, nx.needs_grad);
  nodes_[size_t(out)].val[0] = active().sum(nx.val.data(), nx.val.size()) / double(nx.val.size());
  rules_.push_back([x, out](Tape& t) {
    Node& xn = t.nodes_[size_t(x)];
    if (!xn.needs_grad) return;
    double g = t.nodes_[size_t(out)].grad[0] / double(xn.val.size());
    for (auto& v : xn.grad) v += g;
  });
  return out;
}

Tape::Index Tape::weighted_sum(const std::vector<std::pair<Index, double>>& terms) {
  if (terms.empty()) throw Error("weighted_sum: no terms");
  bool ng = false;
  double acc = 0;
  for (auto& [idx, w] : terms) {
    const Node& n = nodes_[size_t(idx)];
    if (n.val.size() != 1) throw Error("weighted_sum: terms must be scalars");
    acc += w * n.val[0];
    ng = ng || n.needs_grad;
  }
  Index out = push(1, 1, ng);
  nodes_[size_t(out)].val[0] = acc;
  rules_.push_back([ts = terms, out](Tape& t) {
    double g = t.nodes_[size_t(out)].grad[0];
    for (auto& [idx, w] : ts)
      if (t.nodes_[size_t(idx)].needs_grad) t.nodes_[size_t(idx)].grad[0] += g * w;
  });
  return out;
}

void Tape::backward(Index loss) {
  Node& ln = nodes_[size_t(loss)];
  if (ln.val.size() != 1) throw Error("backward: loss must be scalar");
  if (!ln.needs_grad) throw Error("backward: loss does not require grad");
  ln.grad[0] = 1.0;
  for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)(*this);
}

}  // namespace xgen::ad
