#pragma once

#include "scan/layers.hpp"
#include "scan/tape.hpp"
#include "scan/treebank.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace scan {

enum class Variant {
  full,
  /// Trained without the interactive loss.
  no_iloss,
  /// No graph attention: aspect attention and both heads read the LSTM states.
  no_tree,
};

std::string to_string(Variant v);
Variant parse_variant(std::string_view name);

struct ModelConfig {
  int vocab_size = 2;
  int dim = 300;
  int heads = 4;
  int num_categories = 5;
  int num_polarities = 3;
  double leaky_slope = 0.2;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Projection and context vectors of one graph attention layer.
struct GatParams {
  Parameter w;  // d×d, head l owns rows [l·d/L, (l+1)·d/L)
  Parameter a;  // L × 2d/L
};

/// Every learnable tensor of the network. Copyable; copies are independent.
struct ModelParams {
  ModelConfig config;

  Parameter embedding;  // |V|×d, row 0 is padding
  Parameter lstm_wx;  // 4d×d
  Parameter lstm_wh;  // 4d×d
  Parameter lstm_b;  // 4d×1
  GatParams gat_acd;
  GatParams gat_acsa;
  // Per-category attention: W_j (d×d), b_j (1×d), u_j (1×d).
  std::vector<Parameter> attention_w;
  std::vector<Parameter> attention_b;
  std::vector<Parameter> attention_u;
  Parameter acd_w;  // N×d, row i scores category i
  Parameter acd_b;  // 1×N
  Parameter acsa_w1;  // d×d, shared across categories
  Parameter acsa_b1;  // N×d, row j is the bias for category j
  Parameter acsa_w2;  // M×d, shared across categories
  Parameter acsa_b2;  // N×M

  static ModelParams init(const ModelConfig& config, std::uint64_t seed);

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  void zero_grad();
  std::size_t count() const;
};

struct LossWeights {
  double acd = 1.0;
  double iloss = 1.0;
  double acsa = 1.0;
  double l2 = 1e-5;
};

constexpr double kProbFloor = 1e-12;

// Per-operation building blocks. These run on an inference tape and return
// plain matrices; forward() and the training objective use the same code.

Matrix embed(std::span<const int> token_ids, const ModelParams& params);
/// Hidden states of the recurrent encoder for an n×d embedding matrix.
Matrix encode(const Matrix& embeddings, const ModelParams& params);

struct GatResult {
  Matrix states;  // (n+m)×d
  GatAlphas alpha;
};
GatResult gat_layer(const Matrix& leaf_states, const ConstituencyGraph& graph, const GatParams& gat,
                    double slope);

/// Attention of category j over node states; masked nodes receive exactly zero weight.
RowVector aspect_attention(const Matrix& node_states, std::size_t category, const ModelParams& params,
                           const std::vector<bool>& node_mask);

struct AcdPrediction {
  RowVector representation;  // Σ β·states
  RowVector probabilities;  // ŷ_{j_i} for i = 1..N
};
AcdPrediction acd_predict(const Matrix& node_states, const RowVector& beta, const ModelParams& params);

/// Polarity distribution for category j from the ACSA node states and the ACD attention β_j.
RowVector acsa_predict(const Matrix& node_states, const RowVector& beta, std::size_t category,
                       const ModelParams& params);

/// Binary cross-entropy over the diagonal ŷ_{j_j} against the gold detection labels.
double loss_acd(const Matrix& y_hat_acd, std::span<const int> gold_acd);
/// Interactive loss: −1/(N−1) Σ_j Σ_{i≠j} log(1 − ŷ_{j_i}); zero when N = 1.
double loss_iloss(const Matrix& y_hat_acd);
/// Negative log-likelihood of the gold polarity over mentioned categories.
/// gold_acsa[j] < 0 marks category j as not mentioned.
double loss_acsa(const Matrix& y_hat_acsa, std::span<const int> gold_acsa);
/// Σ‖θ‖² over every parameter.
double l2_norm_sq(const ModelParams& params);
double total_loss(double l_acd, double l_iloss, double l_acsa, const ModelParams& params,
                  const LossWeights& weights);

// Tape versions of the losses, used for training.
Var loss_acd(Tape& tape, Var y_hat_acd, std::span<const int> gold_acd);
Var loss_iloss(Tape& tape, Var y_hat_acd);
Var loss_acsa(Tape& tape, Var y_hat_acsa, std::span<const int> gold_acsa);

/// One sentence as the network consumes it.
struct SentenceInput {
  std::vector<int> token_ids;
  ConstituencyGraph graph;
  std::vector<int> gold_acd;  // N entries, 0/1
  std::vector<int> gold_acsa;  // N entries, polarity index or -1 when not mentioned
};

/// Tape nodes produced for one sentence.
struct SentenceNodes {
  Var y_hat_acd;  // N×N
  Var y_hat_acsa;  // N×M
  Var beta;  // N×nodes
  GatAlphas alpha_acd;
  GatAlphas alpha_acsa;
};

SentenceNodes build_sentence(Tape& tape, ModelParams& params, const SentenceInput& input, Variant variant);
SentenceNodes build_sentence(Tape& tape, const ModelParams& params, const SentenceInput& input,
                             Variant variant);

/// ε·L_ACD + η·L_iLoss + μ·L_ACSA for one sentence (no L2 term).
Var sentence_loss(Tape& tape, const SentenceNodes& nodes, const SentenceInput& input,
                  const LossWeights& weights);
/// λ·Σ‖θ‖² as a tape node.
Var l2_term(Tape& tape, ModelParams& params, double lambda);

/// Argmax polarity; ties go to the lowest index.
int argmax_polarity(const RowVector& distribution);

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Padded minibatch. Node slots follow the token axis: leaves of sentence b
/// sit at columns [0, n_b) and its internal nodes at [T, T + m_b).
struct Batch {
  std::vector<std::string> ids;
  Eigen::MatrixXi token_ids;  // B×T, 0 = padding
  Mask token_mask;  // B×T
  std::vector<ConstituencyGraph> graphs;
  Mask node_mask;  // B×(T + M_max)
  Eigen::MatrixXi gold_acd;  // B×N
  Eigen::MatrixXi gold_acsa;  // B×N, -1 where not mentioned
  Mask mentioned_mask;  // B×N

  static Batch assemble(std::span<const SentenceInput> sentences, std::vector<std::string> ids = {});

  std::size_t size() const { return graphs.size(); }
  Eigen::Index max_tokens() const { return token_ids.cols(); }
  /// Padded column of each graph node of sentence b, in graph order.
  std::vector<Eigen::Index> node_slots(std::size_t b) const;
  SentenceInput sentence(std::size_t b) const;
};

struct ModelOutput {
  std::vector<Matrix> y_hat_acd;  // N×N per sentence, row j = source category
  std::vector<Matrix> y_hat_acsa;  // N×M per sentence
  /// N × padded node slots per sentence (T + M_max, or T for no_tree), zero on masked slots.
  std::vector<Matrix> beta;
  std::vector<GatAlphas> alpha_acd;
  std::vector<GatAlphas> alpha_acsa;
};

ModelOutput forward(const Batch& batch, const ModelParams& params, Variant variant);

/// Mean sentence loss over the batch plus λ·Σ‖θ‖². Fills `output` when given.
Var batch_objective(Tape& tape, ModelParams& params, const Batch& batch, Variant variant,
                    const LossWeights& weights, ModelOutput* output = nullptr);

}  // namespace scan
