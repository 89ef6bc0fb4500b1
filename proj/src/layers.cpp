#include "scan/layers.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace scan {

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Softmax over LeakyReLU(a1·s + a2·z_k). `raw` receives the pre-activation scores.
RowVector head_attention(const RowVector& s, const Matrix& z, const RowVector& a, double slope, RowVector* raw) {
  const Eigen::Index dh = s.size();
  const RowVector a_self = a.head(dh);
  const RowVector a_nb = a.tail(dh);
  const double self_term = a_self.dot(s);
  RowVector e(z.rows());
  for (Eigen::Index k = 0; k < z.rows(); ++k) e(k) = self_term + a_nb.dot(z.row(k));
  RowVector f = e.unaryExpr([slope](double x) { return leaky_relu(x, slope); });
  RowVector alpha = (f.array() - f.maxCoeff()).exp().matrix();
  alpha /= alpha.sum();
  if (raw) *raw = std::move(e);
  return alpha;
}

struct LstmCache {
  Matrix gates;  // T×4d post-activation i, f, g, o
  Matrix cells;  // T×d
  Matrix hidden;  // T×d
};

}  // namespace

Var lstm(Tape& tape, Var input, Var wx, Var wh, Var b) {
  const Matrix& x = tape.value(input);
  const Matrix& wxv = tape.value(wx);
  const Matrix& whv = tape.value(wh);
  const Matrix& bv = tape.value(b);
  const Eigen::Index steps = x.rows();
  const Eigen::Index d = whv.cols();
  if (steps == 0) throw std::invalid_argument("lstm: empty sequence");
  if (wxv.rows() != 4 * d || wxv.cols() != x.cols() || whv.rows() != 4 * d || bv.rows() != 4 * d ||
      bv.cols() != 1) {
    throw std::invalid_argument("lstm: weight shapes do not match input width and hidden size");
  }

  auto cache = std::make_shared<LstmCache>();
  Matrix pre = x * wxv.transpose();
  pre.rowwise() += bv.col(0).transpose();
  cache->gates.resize(steps, 4 * d);
  cache->cells.resize(steps, d);
  cache->hidden.resize(steps, d);
  RowVector h_prev = RowVector::Zero(d);
  RowVector c_prev = RowVector::Zero(d);
  for (Eigen::Index t = 0; t < steps; ++t) {
    RowVector z = pre.row(t) + h_prev * whv.transpose();
    RowVector g(4 * d);
    for (Eigen::Index k = 0; k < d; ++k) {
      g(k) = logistic(z(k));
      g(d + k) = logistic(z(d + k));
      g(2 * d + k) = std::tanh(z(2 * d + k));
      g(3 * d + k) = logistic(z(3 * d + k));
    }
    RowVector c = g.segment(d, d).cwiseProduct(c_prev) + g.head(d).cwiseProduct(g.segment(2 * d, d));
    RowVector h = g.tail(d).cwiseProduct(c.array().tanh().matrix());
    cache->gates.row(t) = g;
    cache->cells.row(t) = c;
    cache->hidden.row(t) = h;
    h_prev = h;
    c_prev = c;
  }

  Matrix out = cache->hidden;
  const Var inputs[] = {input, wx, wh, b};
  return tape.record(std::move(out), inputs, [=](Tape& t, const Matrix& grad_h) {
    const Matrix& xs = t.value(input);
    const Matrix& w_in = t.value(wx);
    const Matrix& w_rec = t.value(wh);
    Matrix d_pre(steps, 4 * d);
    RowVector dh_next = RowVector::Zero(d);
    RowVector dc_next = RowVector::Zero(d);
    Matrix d_wh = Matrix::Zero(4 * d, d);
    for (Eigen::Index step = steps; step-- > 0;) {
      const RowVector g = cache->gates.row(step);
      const RowVector c = cache->cells.row(step);
      const RowVector c_before = step > 0 ? RowVector(cache->cells.row(step - 1)) : RowVector::Zero(d);
      const RowVector h_before = step > 0 ? RowVector(cache->hidden.row(step - 1)) : RowVector::Zero(d);
      const RowVector dh = grad_h.row(step) + dh_next;
      const Eigen::ArrayXXd tc = c.array().tanh();
      RowVector dz(4 * d);
      for (Eigen::Index k = 0; k < d; ++k) {
        const double i = g(k), f = g(d + k), cand = g(2 * d + k), o = g(3 * d + k);
        const double dc = dh(k) * o * (1.0 - tc(0, k) * tc(0, k)) + dc_next(k);
        dz(k) = dc * cand * i * (1.0 - i);
        dz(d + k) = dc * c_before(k) * f * (1.0 - f);
        dz(2 * d + k) = dc * i * (1.0 - cand * cand);
        dz(3 * d + k) = dh(k) * tc(0, k) * o * (1.0 - o);
        dc_next(k) = dc * f;
      }
      d_pre.row(step) = dz;
      dh_next = dz * w_rec;
      d_wh.noalias() += dz.transpose() * h_before;
    }
    if (t.requires_grad(input)) t.grad(input).noalias() += d_pre * w_in;
    if (t.requires_grad(wx)) t.grad(wx).noalias() += d_pre.transpose() * xs;
    if (t.requires_grad(wh)) t.grad(wh) += d_wh;
    if (t.requires_grad(b)) t.grad(b) += d_pre.colwise().sum().transpose();
  });
}

RowVector gat_coefficients(const Vector& h_i, const Matrix& neighbor_states, const Matrix& w,
                           const RowVector& a, double slope) {
  if (neighbor_states.rows() == 0) throw std::invalid_argument("gat_coefficients: empty neighbor set");
  if (a.size() != 2 * w.rows()) throw std::invalid_argument("gat_coefficients: context vector must be 2d/L long");
  const RowVector s = (w * h_i).transpose();
  const Matrix z = neighbor_states * w.transpose();
  return head_attention(s, z, a, slope, nullptr);
}

Var gat(Tape& tape, Var h, Var w, Var a, const ConstituencyGraph& graph, double slope, GatAlphas* alphas) {
  const Matrix& hv = tape.value(h);
  const Matrix& wv = tape.value(w);
  const Matrix& av = tape.value(a);
  const auto n = static_cast<Eigen::Index>(graph.n);
  const auto nodes = static_cast<Eigen::Index>(graph.size());
  const Eigen::Index heads = av.rows();
  const Eigen::Index dh = av.cols() / 2;
  if (hv.rows() != n) {
    throw std::invalid_argument("gat: " + std::to_string(hv.rows()) + " leaf states for a graph with " +
                                std::to_string(n) + " leaves");
  }
  if (heads == 0 || av.cols() != 2 * dh || wv.rows() != heads * dh || wv.cols() != hv.cols()) {
    throw std::invalid_argument("gat: projection/context shapes inconsistent with head count");
  }
  if (graph.neighbors.size() != graph.size()) throw std::invalid_argument("gat: malformed graph");

  struct Cache {
    Matrix z;
    Matrix out;
    std::vector<RowVector> alpha;  // [node * heads + head]
    std::vector<RowVector> score;
  };
  auto cache = std::make_shared<Cache>();
  cache->z = hv * wv.transpose();
  cache->out.resize(nodes, heads * dh);
  cache->alpha.resize(static_cast<std::size_t>(nodes * heads));
  cache->score.resize(cache->alpha.size());
  if (alphas) alphas->assign(graph.size(), std::vector<RowVector>(static_cast<std::size_t>(heads)));

  for (Eigen::Index i = 0; i < nodes; ++i) {
    const auto& nb = graph.neighbors[static_cast<std::size_t>(i)];
    if (nb.empty()) throw std::invalid_argument("gat: node " + std::to_string(i) + " has no sources");
    for (Eigen::Index l = 0; l < heads; ++l) {
      const RowVector s = i < n ? RowVector(cache->z.block(i, l * dh, 1, dh)) : RowVector::Zero(dh);
      Matrix zn(static_cast<Eigen::Index>(nb.size()), dh);
      for (std::size_t k = 0; k < nb.size(); ++k) {
        zn.row(static_cast<Eigen::Index>(k)) = cache->z.block(static_cast<Eigen::Index>(nb[k]), l * dh, 1, dh);
      }
      const std::size_t slot = static_cast<std::size_t>(i * heads + l);
      RowVector alpha = head_attention(s, zn, av.row(l), slope, &cache->score[slot]);
      RowVector agg = alpha * zn;
      cache->out.block(i, l * dh, 1, dh) = agg.unaryExpr([](double v) { return logistic(v); });
      if (alphas) (*alphas)[static_cast<std::size_t>(i)][static_cast<std::size_t>(l)] = alpha;
      cache->alpha[slot] = std::move(alpha);
    }
  }

  Matrix out = cache->out;
  const Var inputs[] = {h, w, a};
  const std::vector<std::vector<std::size_t>> neighbors = graph.neighbors;
  return tape.record(std::move(out), inputs, [=](Tape& t, const Matrix& grad_out) {
    const Matrix& hs = t.value(h);
    const Matrix& ws = t.value(w);
    const Matrix& ctx = t.value(a);
    Matrix dz = Matrix::Zero(n, heads * dh);
    Matrix da = Matrix::Zero(heads, 2 * dh);
    for (Eigen::Index i = 0; i < nodes; ++i) {
      const auto& nb = neighbors[static_cast<std::size_t>(i)];
      for (Eigen::Index l = 0; l < heads; ++l) {
        const std::size_t slot = static_cast<std::size_t>(i * heads + l);
        const RowVector& alpha = cache->alpha[slot];
        const RowVector& score = cache->score[slot];
        const RowVector y = cache->out.block(i, l * dh, 1, dh);
        const RowVector d_agg =
            grad_out.block(i, l * dh, 1, dh).cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()));
        const RowVector s = i < n ? RowVector(cache->z.block(i, l * dh, 1, dh)) : RowVector::Zero(dh);
        const RowVector a_self = ctx.row(l).head(dh);
        const RowVector a_nb = ctx.row(l).tail(dh);
        RowVector d_alpha(alpha.size());
        for (std::size_t k = 0; k < nb.size(); ++k) {
          const auto src = static_cast<Eigen::Index>(nb[k]);
          const auto kk = static_cast<Eigen::Index>(k);
          d_alpha(kk) = d_agg.dot(cache->z.row(src).segment(l * dh, dh));
          dz.block(src, l * dh, 1, dh) += alpha(kk) * d_agg;
        }
        const double mean = alpha.dot(d_alpha);
        RowVector d_self = RowVector::Zero(dh);
        for (std::size_t k = 0; k < nb.size(); ++k) {
          const auto src = static_cast<Eigen::Index>(nb[k]);
          const auto kk = static_cast<Eigen::Index>(k);
          const double de = alpha(kk) * (d_alpha(kk) - mean) * (score(kk) > 0.0 ? 1.0 : slope);
          const RowVector z_src = cache->z.block(src, l * dh, 1, dh);
          da.block(l, 0, 1, dh) += de * s;
          da.block(l, dh, 1, dh) += de * z_src;
          d_self += de * a_self;
          dz.block(src, l * dh, 1, dh) += de * a_nb;
        }
        if (i < n) dz.block(i, l * dh, 1, dh) += d_self;
      }
    }
    if (t.requires_grad(h)) t.grad(h).noalias() += dz * ws;
    if (t.requires_grad(w)) t.grad(w).noalias() += dz.transpose() * hs;
    if (t.requires_grad(a)) t.grad(a) += da;
  });
}

}  // namespace scan
