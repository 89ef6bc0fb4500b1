#include "scan/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace scan {

using ojson = nlohmann::ordered_json;

double accuracy(const Eigen::MatrixXi& predictions, const Eigen::MatrixXi& gold, const Mask& mentioned) {
  if (predictions.rows() != gold.rows() || predictions.cols() != gold.cols() || mentioned.rows() != gold.rows() ||
      mentioned.cols() != gold.cols()) {
    throw std::invalid_argument("accuracy: prediction, gold and mask shapes differ");
  }
  std::size_t total = 0, correct = 0;
  for (Eigen::Index r = 0; r < gold.rows(); ++r) {
    for (Eigen::Index c = 0; c < gold.cols(); ++c) {
      if (!mentioned(r, c)) continue;
      ++total;
      if (predictions(r, c) == gold(r, c)) ++correct;
    }
  }
  if (total == 0) throw std::invalid_argument("accuracy: empty gold set");
  return static_cast<double>(correct) / static_cast<double>(total);
}

AcdMetrics acd_metrics(const Matrix& diagonal, const Eigen::MatrixXi& gold_acd, double threshold) {
  if (diagonal.rows() != gold_acd.rows() || diagonal.cols() != gold_acd.cols()) {
    throw std::invalid_argument("acd_metrics: shape mismatch");
  }
  AcdMetrics m;
  for (Eigen::Index r = 0; r < diagonal.rows(); ++r) {
    for (Eigen::Index c = 0; c < diagonal.cols(); ++c) {
      const bool predicted = diagonal(r, c) >= threshold;
      const bool gold = gold_acd(r, c) != 0;
      if (predicted && gold) ++m.true_positives;
      if (predicted && !gold) ++m.false_positives;
      if (!predicted && gold) ++m.false_negatives;
    }
  }
  const double tp = static_cast<double>(m.true_positives);
  const std::size_t predicted = m.true_positives + m.false_positives;
  const std::size_t actual = m.true_positives + m.false_negatives;
  m.precision_defined = predicted > 0;
  m.recall_defined = actual > 0;
  m.precision = m.precision_defined ? tp / static_cast<double>(predicted) : 0.0;
  m.recall = m.recall_defined ? tp / static_cast<double>(actual) : 0.0;
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

EvalResult evaluate(const ModelParams& params, std::span<const SentenceInput> inputs, Variant variant,
                    const EvalOptions& options) {
  const auto n_cat = static_cast<Eigen::Index>(params.config.num_categories);
  const auto rows = static_cast<Eigen::Index>(inputs.size());
  EvalResult result;
  result.predictions = Eigen::MatrixXi::Constant(rows, n_cat, -1);
  Eigen::MatrixXi gold(rows, n_cat), gold_acd(rows, n_cat);
  Matrix diagonal(rows, n_cat);
  const std::size_t step = std::max<std::size_t>(1, options.batch_size);
  for (std::size_t start = 0; start < inputs.size(); start += step) {
    const std::size_t end = std::min(inputs.size(), start + step);
    const Batch batch = Batch::assemble(inputs.subspan(start, end - start));
    const ModelOutput out = forward(batch, params, variant);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto r = static_cast<Eigen::Index>(start + b);
      const SentenceInput& s = inputs[start + b];
      for (Eigen::Index j = 0; j < n_cat; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        gold(r, j) = s.gold_acsa.at(ju);
        gold_acd(r, j) = s.gold_acd.at(ju);
        diagonal(r, j) = out.y_hat_acd[b](j, j);
        const bool scored = !options.joint || diagonal(r, j) >= 0.5;
        if (scored) result.predictions(r, j) = argmax_polarity(out.y_hat_acsa[b].row(j));
      }
    }
  }
  const Mask mentioned = (gold.array() >= 0);
  result.pairs = static_cast<std::size_t>(mentioned.count());
  result.acsa_accuracy = accuracy(result.predictions, gold, mentioned);
  result.correct = static_cast<std::size_t>((mentioned && (result.predictions.array() == gold.array())).count());
  result.acd = acd_metrics(diagonal, gold_acd);
  return result;
}

AttentionDump make_attention_dump(const ModelParams& params, const Example& example, const Vocab& vocab,
                                  const std::vector<std::string>& categories,
                                  const std::vector<std::string>& polarities, Variant variant,
                                  const GraphOptions& options) {
  const SentenceInput input = to_sentence_input(example, vocab, categories, polarities, options);
  const Batch batch = Batch::assemble(std::span(&input, 1), {example.id});
  const ModelOutput out = forward(batch, params, variant);
  const ParseTree tree = parse_bracketed(example.parse);

  AttentionDump d;
  d.id = example.id;
  d.tokens = leaves(tree);
  d.leaf_count = input.graph.n;
  d.node_tags = input.graph.labels;
  d.node_spans = input.graph.spans;
  d.neighbors = input.graph.neighbors;
  d.categories = categories;
  d.polarities = polarities;
  d.variant = to_string(variant);
  const auto n_cat = static_cast<Eigen::Index>(categories.size());
  if (variant == Variant::no_tree) {
    d.beta = out.beta[0].leftCols(static_cast<Eigen::Index>(input.graph.n));
  } else {
    const auto slots = batch.node_slots(0);
    d.beta.resize(n_cat, static_cast<Eigen::Index>(slots.size()));
    for (std::size_t k = 0; k < slots.size(); ++k) d.beta.col(static_cast<Eigen::Index>(k)) = out.beta[0].col(slots[k]);
  }
  d.alpha_acd = out.alpha_acd[0];
  d.alpha_acsa = out.alpha_acsa[0];
  d.acd_probabilities = out.y_hat_acd[0];
  d.polarity_distribution = out.y_hat_acsa[0];
  for (Eigen::Index j = 0; j < n_cat; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    if (d.acd_probabilities(j, j) >= 0.5) {
      d.predicted.emplace_back(polarities.at(static_cast<std::size_t>(argmax_polarity(d.polarity_distribution.row(j)))));
    } else {
      d.predicted.emplace_back(std::nullopt);
    }
    const int g = input.gold_acsa[ju];
    d.gold.push_back(g >= 0 ? std::optional<std::string>(polarities.at(static_cast<std::size_t>(g))) : std::nullopt);
  }
  return d;
}

namespace {

ojson matrix_json(const Matrix& m) {
  ojson rows = ojson::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ojson row = ojson::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

ojson alphas_json(const GatAlphas& alphas) {
  ojson nodes = ojson::array();
  for (const auto& heads : alphas) {
    ojson per_head = ojson::array();
    for (const RowVector& w : heads) {
      ojson weights = ojson::array();
      for (Eigen::Index k = 0; k < w.size(); ++k) weights.push_back(w(k));
      per_head.push_back(std::move(weights));
    }
    nodes.push_back(std::move(per_head));
  }
  return nodes;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  const std::filesystem::path parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::string node_caption(const AttentionDump& d, std::size_t k) {
  const auto [first, last] = d.node_spans[k];
  std::string words;
  for (std::size_t t = first; t < last && t < d.tokens.size(); ++t) words += (words.empty() ? "" : " ") + d.tokens[t];
  return d.node_tags[k].empty() ? words : d.node_tags[k] + ": " + words;
}

}  // namespace

std::string attention_json(const AttentionDump& d) {
  ojson j;
  j["schema_version"] = AttentionDump::kSchemaVersion;
  j["id"] = d.id;
  j["variant"] = d.variant;
  j["tokens"] = d.tokens;
  ojson nodes = ojson::array();
  for (std::size_t k = 0; k < d.node_spans.size(); ++k) {
    ojson node;
    node["index"] = k;
    node["tag"] = d.node_tags[k];
    node["span"] = {d.node_spans[k].first, d.node_spans[k].second};
    node["is_leaf"] = k < d.leaf_count;
    node["neighbors"] = d.neighbors[k];
    nodes.push_back(std::move(node));
  }
  j["nodes"] = std::move(nodes);
  j["categories"] = d.categories;
  j["polarities"] = d.polarities;
  j["beta"] = matrix_json(d.beta);
  j["alpha_acd"] = alphas_json(d.alpha_acd);
  j["alpha_acsa"] = alphas_json(d.alpha_acsa);
  j["acd_probabilities"] = matrix_json(d.acd_probabilities);
  j["polarity_distribution"] = matrix_json(d.polarity_distribution);
  ojson predicted = ojson::object(), gold = ojson::object();
  for (std::size_t c = 0; c < d.categories.size(); ++c) {
    if (d.predicted[c]) predicted[d.categories[c]] = *d.predicted[c];
    if (d.gold[c]) gold[d.categories[c]] = *d.gold[c];
  }
  j["predicted"] = std::move(predicted);
  j["gold"] = std::move(gold);
  return j.dump(2) + "\n";
}

void write_attention_json(const AttentionDump& dump, const std::string& path) {
  write_text(path, attention_json(dump));
}

std::string attention_svg(const AttentionDump& d) {
  const int cell = 28, label_w = 140, header_h = 160;
  const auto cols = static_cast<int>(d.beta.cols());
  const auto rows = static_cast<int>(d.beta.rows());
  const int width = label_w + cols * cell + 10;
  const int height = header_h + rows * cell + 10;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int c = 0; c < cols; ++c) {
    const int x = label_w + c * cell + cell / 2;
    svg << "  <text transform=\"translate(" << x << "," << header_h - 6 << ") rotate(-60)\">"
        << escape_xml(node_caption(d, static_cast<std::size_t>(c))) << "</text>\n";
  }
  for (int r = 0; r < rows; ++r) {
    const int y = header_h + r * cell;
    svg << "  <text x=\"4\" y=\"" << y + cell / 2 + 4 << "\">" << escape_xml(d.categories[static_cast<std::size_t>(r)])
        << "</text>\n";
    const double peak = std::max(d.beta.row(r).maxCoeff(), 1e-12);
    for (int c = 0; c < cols; ++c) {
      const double w = d.beta(r, c);
      const int shade = 255 - static_cast<int>(std::lround(215.0 * w / peak));
      char title[64];
      std::snprintf(title, sizeof title, "%.4f", w);
      svg << "  <rect x=\"" << label_w + c * cell << "\" y=\"" << y << "\" width=\"" << cell - 1 << "\" height=\""
          << cell - 1 << "\" fill=\"rgb(" << shade << "," << shade << ",255)\"><title>" << title
          << "</title></rect>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_attention_svg(const AttentionDump& dump, const std::string& path) {
  write_text(path, attention_svg(dump));
}

}  // namespace scan
