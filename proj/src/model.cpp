#include "scan/model.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <random>
#include <stdexcept>

namespace scan {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full:
      return "full";
    case Variant::no_iloss:
      return "no_iloss";
    case Variant::no_tree:
      return "no_tree";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  if (name == "full") return Variant::full;
  if (name == "no_iloss" || name == "no-iloss") return Variant::no_iloss;
  if (name == "no_tree" || name == "no-tree") return Variant::no_tree;
  throw std::invalid_argument("unknown variant '" + std::string(name) + "' (expected full, no_iloss or no_tree)");
}

void ModelConfig::validate() const {
  if (vocab_size < 2) throw std::invalid_argument("model: vocabulary must hold at least PAD and UNK");
  if (dim < 1 || heads < 1) throw std::invalid_argument("model: dim and heads must be positive");
  if (dim % heads != 0) {
    throw std::invalid_argument("model: dim " + std::to_string(dim) + " is not divisible by " +
                                std::to_string(heads) + " heads");
  }
  if (num_categories < 1) throw std::invalid_argument("model: need at least one aspect category");
  if (num_polarities < 2) throw std::invalid_argument("model: need at least two polarities");
  if (leaky_slope < 0.0) throw std::invalid_argument("model: negative LeakyReLU slope");
}

namespace {

Matrix uniform(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = dist(rng);
  }
  return m;
}

// Glorot bound for a fan_out×fan_in weight.
double glorot(Eigen::Index fan_out, Eigen::Index fan_in) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const Eigen::Index d = config.dim;
  const Eigen::Index dh = d / config.heads;
  const Eigen::Index n_cat = config.num_categories;
  const Eigen::Index n_pol = config.num_polarities;

  ModelParams p;
  p.config = config;
  Matrix emb = uniform(config.vocab_size, d, 0.25, rng);
  emb.row(0).setZero();
  p.embedding = Parameter("embedding", std::move(emb));
  const double lstm_bound = 1.0 / std::sqrt(static_cast<double>(d));
  p.lstm_wx = Parameter("lstm.wx", uniform(4 * d, d, lstm_bound, rng));
  p.lstm_wh = Parameter("lstm.wh", uniform(4 * d, d, lstm_bound, rng));
  p.lstm_b = Parameter("lstm.b", uniform(4 * d, 1, lstm_bound, rng));
  for (auto* gat : {&p.gat_acd, &p.gat_acsa}) {
    const std::string prefix = gat == &p.gat_acd ? "gat_acd" : "gat_acsa";
    gat->w = Parameter(prefix + ".w", uniform(d, d, glorot(dh, d), rng));
    gat->a = Parameter(prefix + ".a", uniform(config.heads, 2 * dh, glorot(1, 2 * dh), rng));
  }
  for (Eigen::Index j = 0; j < n_cat; ++j) {
    const std::string suffix = "." + std::to_string(j);
    p.attention_w.emplace_back("attention.w" + suffix, uniform(d, d, glorot(d, d), rng));
    p.attention_b.emplace_back("attention.b" + suffix, Matrix::Zero(1, d));
    p.attention_u.emplace_back("attention.u" + suffix, uniform(1, d, glorot(1, d), rng));
  }
  p.acd_w = Parameter("acd.w", uniform(n_cat, d, glorot(1, d), rng));
  p.acd_b = Parameter("acd.b", Matrix::Zero(1, n_cat));
  p.acsa_w1 = Parameter("acsa.w1", uniform(d, d, glorot(d, d), rng));
  p.acsa_b1 = Parameter("acsa.b1", Matrix::Zero(n_cat, d));
  p.acsa_w2 = Parameter("acsa.w2", uniform(n_pol, d, glorot(n_pol, d), rng));
  p.acsa_b2 = Parameter("acsa.b2", Matrix::Zero(n_cat, n_pol));
  return p;
}

std::vector<Parameter*> ModelParams::all() {
  std::vector<Parameter*> out = {&embedding, &lstm_wx, &lstm_wh, &lstm_b,
                                 &gat_acd.w, &gat_acd.a, &gat_acsa.w, &gat_acsa.a};
  for (auto* group : {&attention_w, &attention_b, &attention_u}) {
    for (auto& p : *group) out.push_back(&p);
  }
  for (auto* p : {&acd_w, &acd_b, &acsa_w1, &acsa_b1, &acsa_w2, &acsa_b2}) out.push_back(p);
  return out;
}

std::vector<const Parameter*> ModelParams::all() const {
  auto mutable_view = const_cast<ModelParams*>(this)->all();
  return {mutable_view.begin(), mutable_view.end()};
}

void ModelParams::zero_grad() {
  for (auto* p : all()) p->zero_grad();
}

std::size_t ModelParams::count() const {
  std::size_t total = 0;
  for (const auto* p : all()) total += static_cast<std::size_t>(p->value.size());
  return total;
}

namespace {

std::vector<bool> all_nodes(Eigen::Index count) { return std::vector<bool>(static_cast<std::size_t>(count), true); }

template <typename Params>
Var attention_row(Tape& t, Var states, Params& p, std::size_t j, const std::vector<bool>& mask) {
  Var scores_in = t.tanh(t.add_row(t.matmul_bt(states, t.param(p.attention_w.at(j))), t.param(p.attention_b.at(j))));
  Var scores = t.matmul_bt(t.param(p.attention_u.at(j)), scores_in);
  return t.masked_softmax(scores, mask);
}

template <typename Params>
SentenceNodes build_sentence_impl(Tape& t, Params& p, const SentenceInput& in, Variant variant) {
  const auto n_cat = static_cast<std::size_t>(p.config.num_categories);
  if (in.token_ids.empty()) throw std::invalid_argument("sentence has no tokens");
  if (variant != Variant::no_tree && in.graph.n != in.token_ids.size()) {
    throw std::invalid_argument("graph has " + std::to_string(in.graph.n) + " leaves for " +
                                std::to_string(in.token_ids.size()) + " tokens");
  }
  SentenceNodes out;
  Var emb = t.lookup(p.embedding, in.token_ids);
  Var hidden = lstm(t, emb, t.param(p.lstm_wx), t.param(p.lstm_wh), t.param(p.lstm_b));
  Var states_acd = hidden;
  Var states_acsa = hidden;
  if (variant != Variant::no_tree) {
    const double slope = p.config.leaky_slope;
    states_acd = gat(t, hidden, t.param(p.gat_acd.w), t.param(p.gat_acd.a), in.graph, slope, &out.alpha_acd);
    states_acsa = gat(t, hidden, t.param(p.gat_acsa.w), t.param(p.gat_acsa.a), in.graph, slope, &out.alpha_acsa);
  }
  const auto mask = all_nodes(t.value(states_acd).rows());
  std::vector<Var> rows;
  rows.reserve(n_cat);
  for (std::size_t j = 0; j < n_cat; ++j) rows.push_back(attention_row(t, states_acd, p, j, mask));
  out.beta = t.stack_rows(rows);

  Var rep_acd = t.matmul(out.beta, states_acd);
  out.y_hat_acd = t.sigmoid(t.add_row(t.matmul_bt(rep_acd, t.param(p.acd_w)), t.param(p.acd_b)));

  Var rep_acsa = t.matmul(out.beta, states_acsa);
  Var hid = t.relu(t.add(t.matmul_bt(rep_acsa, t.param(p.acsa_w1)), t.param(p.acsa_b1)));
  out.y_hat_acsa = t.softmax_rows(t.add(t.matmul_bt(hid, t.param(p.acsa_w2)), t.param(p.acsa_b2)));
  return out;
}

double clamp_prob(double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }
bool inside(double p) { return p > kProbFloor && p < 1.0 - kProbFloor; }

void check_square(const Matrix& y, std::size_t gold_size, const char* who) {
  if (y.rows() != y.cols()) throw std::invalid_argument(std::string(who) + ": ACD output must be N×N");
  if (gold_size != static_cast<std::size_t>(y.rows())) {
    throw std::invalid_argument(std::string(who) + ": gold vector length differs from N");
  }
}

}  // namespace

SentenceNodes build_sentence(Tape& tape, ModelParams& params, const SentenceInput& input, Variant variant) {
  return build_sentence_impl(tape, params, input, variant);
}

SentenceNodes build_sentence(Tape& tape, const ModelParams& params, const SentenceInput& input,
                             Variant variant) {
  return build_sentence_impl(tape, params, input, variant);
}

Matrix embed(std::span<const int> token_ids, const ModelParams& params) {
  Tape t;
  return t.value(t.lookup(params.embedding, token_ids));
}

Matrix encode(const Matrix& embeddings, const ModelParams& params) {
  if (embeddings.rows() == 0) throw std::invalid_argument("encode: empty sequence");
  Tape t;
  return t.value(lstm(t, t.constant(embeddings), t.param(params.lstm_wx), t.param(params.lstm_wh),
                      t.param(params.lstm_b)));
}

GatResult gat_layer(const Matrix& leaf_states, const ConstituencyGraph& graph, const GatParams& params,
                    double slope) {
  Tape t;
  GatResult result;
  Var out = gat(t, t.constant(leaf_states), t.param(params.w), t.param(params.a), graph, slope, &result.alpha);
  result.states = t.value(out);
  return result;
}

RowVector aspect_attention(const Matrix& node_states, std::size_t category, const ModelParams& params,
                           const std::vector<bool>& node_mask) {
  if (category >= params.attention_w.size()) throw std::out_of_range("aspect_attention: no such category");
  if (node_mask.size() != static_cast<std::size_t>(node_states.rows())) {
    throw std::invalid_argument("aspect_attention: mask length differs from node count");
  }
  Tape t;
  return t.value(attention_row(t, t.constant(node_states), params, category, node_mask));
}

AcdPrediction acd_predict(const Matrix& node_states, const RowVector& beta, const ModelParams& params) {
  if (beta.size() != node_states.rows()) throw std::invalid_argument("acd_predict: β length differs from node count");
  Tape t;
  Var rep = t.matmul(t.constant(beta), t.constant(node_states));
  Var y = t.sigmoid(t.add_row(t.matmul_bt(rep, t.param(params.acd_w)), t.param(params.acd_b)));
  return {t.value(rep), t.value(y)};
}

RowVector acsa_predict(const Matrix& node_states, const RowVector& beta, std::size_t category,
                       const ModelParams& params) {
  if (beta.size() != node_states.rows()) throw std::invalid_argument("acsa_predict: β length differs from node count");
  if (category >= static_cast<std::size_t>(params.acsa_b1.value.rows())) {
    throw std::out_of_range("acsa_predict: no such category");
  }
  const auto j = static_cast<Eigen::Index>(category);
  Tape t;
  Var rep = t.matmul(t.constant(beta), t.constant(node_states));
  Var hid = t.relu(t.add(t.matmul_bt(rep, t.param(params.acsa_w1)), t.constant(params.acsa_b1.value.row(j))));
  Var logits = t.add(t.matmul_bt(hid, t.param(params.acsa_w2)), t.constant(params.acsa_b2.value.row(j)));
  return t.value(t.softmax_rows(logits));
}

double loss_acd(const Matrix& y_hat_acd, std::span<const int> gold_acd) {
  check_square(y_hat_acd, gold_acd.size(), "loss_acd");
  double total = 0.0;
  for (Eigen::Index j = 0; j < y_hat_acd.rows(); ++j) {
    const double p = clamp_prob(y_hat_acd(j, j));
    total -= gold_acd[static_cast<std::size_t>(j)] != 0 ? std::log(p) : std::log(1.0 - p);
  }
  return total;
}

double loss_iloss(const Matrix& y_hat_acd) {
  check_square(y_hat_acd, static_cast<std::size_t>(y_hat_acd.rows()), "loss_iloss");
  const Eigen::Index n = y_hat_acd.rows();
  if (n <= 1) return 0.0;
  double total = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i != j) total -= std::log(1.0 - clamp_prob(y_hat_acd(j, i)));
    }
  }
  return total / static_cast<double>(n - 1);
}

double loss_acsa(const Matrix& y_hat_acsa, std::span<const int> gold_acsa) {
  if (gold_acsa.size() != static_cast<std::size_t>(y_hat_acsa.rows())) {
    throw std::invalid_argument("loss_acsa: gold vector length differs from N");
  }
  double total = 0.0;
  bool any = false;
  for (Eigen::Index j = 0; j < y_hat_acsa.rows(); ++j) {
    const int gold = gold_acsa[static_cast<std::size_t>(j)];
    if (gold < 0) continue;
    if (gold >= y_hat_acsa.cols()) throw std::out_of_range("loss_acsa: gold polarity outside M");
    any = true;
    total -= std::log(clamp_prob(y_hat_acsa(j, gold)));
  }
  if (!any) std::cerr << "warning: loss_acsa called on a sentence with no mentioned category\n";
  return total;
}

double l2_norm_sq(const ModelParams& params) {
  double total = 0.0;
  for (const auto* p : params.all()) total += p->value.squaredNorm();
  return total;
}

double total_loss(double l_acd, double l_iloss, double l_acsa, const ModelParams& params,
                  const LossWeights& weights) {
  if (weights.acd < 0 || weights.iloss < 0 || weights.acsa < 0 || weights.l2 < 0) {
    throw std::invalid_argument("total_loss: loss weights must be non-negative");
  }
  return weights.acd * l_acd + weights.iloss * l_iloss + weights.acsa * l_acsa + weights.l2 * l2_norm_sq(params);
}

Var loss_acd(Tape& tape, Var y_hat_acd, std::span<const int> gold_acd) {
  Matrix value(1, 1);
  value(0, 0) = loss_acd(tape.value(y_hat_acd), gold_acd);
  std::vector<int> gold(gold_acd.begin(), gold_acd.end());
  const Var inputs[] = {y_hat_acd};
  return tape.record(std::move(value), inputs, [y_hat_acd, gold = std::move(gold)](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(y_hat_acd);
    Matrix& dy = t.grad(y_hat_acd);
    for (Eigen::Index j = 0; j < y.rows(); ++j) {
      const double p = y(j, j);
      if (!inside(p)) continue;
      dy(j, j) += g(0, 0) * (gold[static_cast<std::size_t>(j)] != 0 ? -1.0 / p : 1.0 / (1.0 - p));
    }
  });
}

Var loss_iloss(Tape& tape, Var y_hat_acd) {
  Matrix value(1, 1);
  value(0, 0) = loss_iloss(tape.value(y_hat_acd));
  const Var inputs[] = {y_hat_acd};
  return tape.record(std::move(value), inputs, [y_hat_acd](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(y_hat_acd);
    const Eigen::Index n = y.rows();
    if (n <= 1) return;
    Matrix& dy = t.grad(y_hat_acd);
    const double k = g(0, 0) / static_cast<double>(n - 1);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (i != j && inside(y(j, i))) dy(j, i) += k / (1.0 - y(j, i));
      }
    }
  });
}

Var loss_acsa(Tape& tape, Var y_hat_acsa, std::span<const int> gold_acsa) {
  Matrix value(1, 1);
  value(0, 0) = loss_acsa(tape.value(y_hat_acsa), gold_acsa);
  std::vector<int> gold(gold_acsa.begin(), gold_acsa.end());
  const Var inputs[] = {y_hat_acsa};
  return tape.record(std::move(value), inputs, [y_hat_acsa, gold = std::move(gold)](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(y_hat_acsa);
    Matrix& dy = t.grad(y_hat_acsa);
    for (std::size_t j = 0; j < gold.size(); ++j) {
      if (gold[j] < 0) continue;
      const auto r = static_cast<Eigen::Index>(j);
      const double p = y(r, gold[j]);
      if (inside(p)) dy(r, gold[j]) -= g(0, 0) / p;
    }
  });
}

Var sentence_loss(Tape& tape, const SentenceNodes& nodes, const SentenceInput& input, const LossWeights& weights) {
  const Var terms[] = {loss_acd(tape, nodes.y_hat_acd, input.gold_acd), loss_iloss(tape, nodes.y_hat_acd),
                       loss_acsa(tape, nodes.y_hat_acsa, input.gold_acsa)};
  const double w[] = {weights.acd, weights.iloss, weights.acsa};
  return tape.weighted_sum(terms, w);
}

Var l2_term(Tape& tape, ModelParams& params, double lambda) {
  std::vector<Var> terms;
  for (auto* p : params.all()) terms.push_back(tape.sum_squares(tape.param(*p)));
  std::vector<double> w(terms.size(), lambda);
  return tape.weighted_sum(terms, w);
}

int argmax_polarity(const RowVector& distribution) {
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < distribution.size(); ++c) {
    if (distribution(c) > distribution(best)) best = c;
  }
  return static_cast<int>(best);
}

Batch Batch::assemble(std::span<const SentenceInput> sentences, std::vector<std::string> ids) {
  if (sentences.empty()) throw std::invalid_argument("batch: no sentences");
  if (!ids.empty() && ids.size() != sentences.size()) throw std::invalid_argument("batch: id count mismatch");
  const auto b_size = static_cast<Eigen::Index>(sentences.size());
  const auto n_cat = static_cast<Eigen::Index>(sentences.front().gold_acd.size());
  Eigen::Index max_t = 0, max_m = 0;
  for (const auto& s : sentences) {
    if (s.token_ids.size() != s.graph.n) throw std::invalid_argument("batch: token count differs from graph leaves");
    if (static_cast<Eigen::Index>(s.gold_acd.size()) != n_cat || s.gold_acsa.size() != s.gold_acd.size()) {
      throw std::invalid_argument("batch: inconsistent category count");
    }
    max_t = std::max<Eigen::Index>(max_t, static_cast<Eigen::Index>(s.graph.n));
    max_m = std::max<Eigen::Index>(max_m, static_cast<Eigen::Index>(s.graph.m));
  }
  Batch batch;
  batch.ids = ids.empty() ? std::vector<std::string>(sentences.size()) : std::move(ids);
  batch.token_ids = Eigen::MatrixXi::Zero(b_size, max_t);
  batch.token_mask = Mask::Constant(b_size, max_t, false);
  batch.node_mask = Mask::Constant(b_size, max_t + max_m, false);
  batch.gold_acd.resize(b_size, n_cat);
  batch.gold_acsa.resize(b_size, n_cat);
  batch.mentioned_mask = Mask::Constant(b_size, n_cat, false);
  for (Eigen::Index b = 0; b < b_size; ++b) {
    const auto& s = sentences[static_cast<std::size_t>(b)];
    for (std::size_t t = 0; t < s.token_ids.size(); ++t) {
      batch.token_ids(b, static_cast<Eigen::Index>(t)) = s.token_ids[t];
      batch.token_mask(b, static_cast<Eigen::Index>(t)) = true;
      batch.node_mask(b, static_cast<Eigen::Index>(t)) = true;
    }
    for (std::size_t k = 0; k < s.graph.m; ++k) batch.node_mask(b, max_t + static_cast<Eigen::Index>(k)) = true;
    for (Eigen::Index j = 0; j < n_cat; ++j) {
      batch.gold_acd(b, j) = s.gold_acd[static_cast<std::size_t>(j)];
      batch.gold_acsa(b, j) = s.gold_acsa[static_cast<std::size_t>(j)];
      batch.mentioned_mask(b, j) = s.gold_acsa[static_cast<std::size_t>(j)] >= 0;
    }
    batch.graphs.push_back(s.graph);
  }
  return batch;
}

std::vector<Eigen::Index> Batch::node_slots(std::size_t b) const {
  const auto& g = graphs.at(b);
  std::vector<Eigen::Index> slots;
  slots.reserve(g.size());
  for (std::size_t k = 0; k < g.n; ++k) slots.push_back(static_cast<Eigen::Index>(k));
  for (std::size_t k = 0; k < g.m; ++k) slots.push_back(max_tokens() + static_cast<Eigen::Index>(k));
  return slots;
}

SentenceInput Batch::sentence(std::size_t b) const {
  const auto row = static_cast<Eigen::Index>(b);
  SentenceInput s;
  s.graph = graphs.at(b);
  for (std::size_t t = 0; t < s.graph.n; ++t) s.token_ids.push_back(token_ids(row, static_cast<Eigen::Index>(t)));
  for (Eigen::Index j = 0; j < gold_acd.cols(); ++j) {
    s.gold_acd.push_back(gold_acd(row, j));
    s.gold_acsa.push_back(gold_acsa(row, j));
  }
  return s;
}

namespace {

void collect_output(const Tape& t, const SentenceNodes& nodes, const Batch& batch, std::size_t b, Variant variant,
                    ModelOutput& out) {
  out.y_hat_acd.push_back(t.value(nodes.y_hat_acd));
  out.y_hat_acsa.push_back(t.value(nodes.y_hat_acsa));
  const Matrix& beta = t.value(nodes.beta);
  const bool tree = variant != Variant::no_tree;
  const Eigen::Index width = tree ? batch.node_mask.cols() : batch.max_tokens();
  Matrix padded = Matrix::Zero(beta.rows(), width);
  const auto slots = batch.node_slots(b);
  for (Eigen::Index k = 0; k < beta.cols(); ++k) padded.col(slots[static_cast<std::size_t>(k)]) = beta.col(k);
  out.beta.push_back(std::move(padded));
  out.alpha_acd.push_back(nodes.alpha_acd);
  out.alpha_acsa.push_back(nodes.alpha_acsa);
}

}  // namespace

ModelOutput forward(const Batch& batch, const ModelParams& params, Variant variant) {
  ModelOutput out;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    Tape t;
    const SentenceInput input = batch.sentence(b);
    SentenceNodes nodes = build_sentence(t, params, input, variant);
    collect_output(t, nodes, batch, b, variant, out);
  }
  return out;
}

Var batch_objective(Tape& tape, ModelParams& params, const Batch& batch, Variant variant,
                    const LossWeights& weights, ModelOutput* output) {
  std::vector<Var> losses;
  losses.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const SentenceInput input = batch.sentence(b);
    SentenceNodes nodes = build_sentence(tape, params, input, variant);
    losses.push_back(sentence_loss(tape, nodes, input, weights));
    if (output) collect_output(tape, nodes, batch, b, variant, *output);
  }
  std::vector<double> mean_w(losses.size(), 1.0 / static_cast<double>(losses.size()));
  const Var parts[] = {tape.weighted_sum(losses, mean_w), l2_term(tape, params, weights.l2)};
  const double unit[] = {1.0, 1.0};
  return tape.weighted_sum(parts, unit);
}

}  // namespace scan
