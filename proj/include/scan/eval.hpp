#pragma once

#include "scan/data.hpp"
#include "scan/model.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace scan {

/// Fraction of mentioned (sentence, category) pairs whose predicted polarity
/// equals the gold one. All three matrices are sentences × categories.
/// Throws std::invalid_argument when no pair is mentioned.
double accuracy(const Eigen::MatrixXi& predictions, const Eigen::MatrixXi& gold, const Mask& mentioned);

struct AcdMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  /// False when there were no predicted positives, so precision was set to 0.
  bool precision_defined = true;
  /// False when there were no gold positives, so recall was set to 0.
  bool recall_defined = true;
  std::size_t true_positives = 0, false_positives = 0, false_negatives = 0;
};

/// Binary detection metrics over every (sentence, category) cell. `diagonal`
/// holds ŷ_{j_j}; a cell is predicted positive when it is ≥ threshold.
AcdMetrics acd_metrics(const Matrix& diagonal, const Eigen::MatrixXi& gold_acd, double threshold = 0.5);

struct EvalOptions {
  /// Score only categories the detector finds (ŷ_{j_j} ≥ 0.5). A gold pair
  /// whose category is not detected counts as wrong. Off by default: gold
  /// categories are given at evaluation time.
  bool joint = false;
  std::size_t batch_size = 32;
};

struct EvalResult {
  double acsa_accuracy = 0.0;
  std::size_t pairs = 0;
  std::size_t correct = 0;
  AcdMetrics acd;
  Eigen::MatrixXi predictions;  // sentences × categories, −1 where no prediction
};

EvalResult evaluate(const ModelParams& params, std::span<const SentenceInput> inputs, Variant variant,
                    const EvalOptions& options = {});

/// Attention weights of one example, in ConstituencyGraph node order.
struct AttentionDump {
  static constexpr int kSchemaVersion = 1;

  std::string id;
  std::vector<std::string> tokens;
  std::size_t leaf_count = 0;  // nodes [0, leaf_count) are leaves
  std::vector<std::string> node_tags;  // leaves carry their preterminal tag or ""
  std::vector<std::pair<std::size_t, std::size_t>> node_spans;  // half-open token spans
  std::vector<std::vector<std::size_t>> neighbors;
  std::vector<std::string> categories;
  std::vector<std::string> polarities;
  Matrix beta;  // categories × attended nodes (all nodes, or leaves for no_tree)
  GatAlphas alpha_acd;  // node → head → weights over neighbors; empty for no_tree
  GatAlphas alpha_acsa;
  Matrix acd_probabilities;  // categories × categories
  Matrix polarity_distribution;  // categories × polarities
  std::vector<std::optional<std::string>> predicted;  // per category, set when detected (ŷ_{j_j} ≥ 0.5)
  std::vector<std::optional<std::string>> gold;
  std::string variant;
};

AttentionDump make_attention_dump(const ModelParams& params, const Example& example, const Vocab& vocab,
                                  const std::vector<std::string>& categories,
                                  const std::vector<std::string>& polarities, Variant variant,
                                  const GraphOptions& options = {});

std::string attention_json(const AttentionDump& dump);
void write_attention_json(const AttentionDump& dump, const std::string& path);
/// Heatmap of β: one row per category, one column per attended node.
std::string attention_svg(const AttentionDump& dump);
void write_attention_svg(const AttentionDump& dump, const std::string& path);

}  // namespace scan
