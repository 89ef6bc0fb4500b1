#include "scan/treebank.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <set>

namespace scan {

MalformedTree::MalformedTree(const std::string& what, std::size_t offset)
    : std::runtime_error("malformed tree at offset " + std::to_string(offset) + ": " + what),
      offset_(offset) {}

bool is_pos_tag(std::string_view label) {
  static const std::set<std::string_view> tags = {
      "CC",  "CD",  "DT",   "EX",  "FW",  "IN",  "JJ",   "JJR", "JJS", "LS",    "MD",    "NN",  "NNS",
      "NNP", "NNPS", "PDT", "POS", "PRP", "PRP$", "RB",  "RBR", "RBS", "RP",    "SYM",   "TO",  "UH",
      "VB",  "VBD", "VBG",  "VBN", "VBP", "VBZ", "WDT",  "WP",  "WP$", "WRB",   "ADD",   "AFX", "GW",
      "HYPH", "NFP", "XX",  ".",   ",",   ":",   "``",   "''",  "#",   "$",     "-LRB-", "-RRB-"};
  return tags.count(label) > 0;
}

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  ParseTree read_root() {
    skip_space();
    if (pos_ >= text_.size()) throw MalformedTree("empty input", pos_);
    if (text_[pos_] != '(') throw MalformedTree("expected '('", pos_);
    ParseTree root = read_node();
    skip_space();
    if (pos_ < text_.size()) throw MalformedTree("trailing characters after tree", pos_);
    // PTB-style "( (S ...) )" wrapper.
    if (root.label.empty() && root.children.size() == 1 && !root.children.front().is_leaf()) {
      ParseTree inner = std::move(root.children.front());
      return inner;
    }
    return root;
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
  }

  std::string read_atom() {
    std::size_t start = pos_;
    while (pos_ < text_.size() && !is_space(text_[pos_]) && text_[pos_] != '(' && text_[pos_] != ')') {
      ++pos_;
    }
    return std::string(text_.substr(start, pos_ - start));
  }

  ParseTree read_node() {
    const std::size_t open = pos_;
    ++pos_;  // '('
    ParseTree node;
    skip_space();
    if (pos_ < text_.size() && text_[pos_] != '(' && text_[pos_] != ')') node.label = read_atom();
    for (;;) {
      skip_space();
      if (pos_ >= text_.size()) throw MalformedTree("unbalanced parentheses: '(' never closed", open);
      char c = text_[pos_];
      if (c == ')') {
        ++pos_;
        break;
      }
      if (c == '(') {
        node.children.push_back(read_node());
      } else {
        ParseTree leaf;
        leaf.token = read_atom();
        node.children.push_back(std::move(leaf));
      }
    }
    if (node.children.empty()) throw MalformedTree("node has neither children nor token", open);
    return node;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

void serialize_into(const ParseTree& tree, std::string& out) {
  if (tree.is_leaf()) {
    out += *tree.token;
    return;
  }
  out += '(';
  out += tree.label;
  for (const auto& child : tree.children) {
    if (!out.empty() && out.back() != '(') out += ' ';
    serialize_into(child, out);
  }
  out += ')';
}

void collect_leaves(const ParseTree& tree, std::vector<std::string>& out) {
  if (tree.is_leaf()) {
    out.push_back(*tree.token);
    return;
  }
  for (const auto& child : tree.children) collect_leaves(child, out);
}

}  // namespace

ParseTree parse_bracketed(std::string_view text) { return Reader(text).read_root(); }

std::string serialize(const ParseTree& tree) {
  std::string out;
  serialize_into(tree, out);
  return out;
}

std::vector<std::string> leaves(const ParseTree& tree) {
  std::vector<std::string> out;
  collect_leaves(tree, out);
  return out;
}

std::size_t ConstituencyGraph::edge_count() const {
  std::size_t total = 0;
  for (const auto& nb : neighbors) total += nb.size();
  return total;
}

namespace {

struct PendingInternal {
  std::string label;
  std::size_t first, last;
};

// Visits the tree the way tree_to_graph indexes it. Returns the graph-leaf
// ids below `tree`. Internal nodes are appended to `internals` in pre-order.
std::vector<std::size_t> index_tree(const ParseTree& tree, bool is_root, const GraphOptions& options,
                                    std::size_t& next_leaf, std::vector<std::string>& leaf_labels,
                                    std::vector<PendingInternal>& internals,
                                    std::vector<std::vector<std::size_t>>& internal_leaves) {
  const bool graph_leaf = tree.is_leaf() || (!options.keep_preterminals && !is_root && tree.is_preterminal() &&
                                              is_pos_tag(tree.label));
  if (graph_leaf) {
    leaf_labels.push_back(tree.label);
    return {next_leaf++};
  }
  const std::size_t slot = internals.size();
  internals.push_back({tree.label, 0, 0});
  internal_leaves.emplace_back();
  std::vector<std::size_t> below;
  for (const auto& child : tree.children) {
    auto sub = index_tree(child, false, options, next_leaf, leaf_labels, internals, internal_leaves);
    below.insert(below.end(), sub.begin(), sub.end());
  }
  internals[slot].first = below.front();
  internals[slot].last = below.back() + 1;
  internal_leaves[slot] = below;
  return below;
}

}  // namespace

ConstituencyGraph tree_to_graph(const ParseTree& tree, const GraphOptions& options) {
  std::size_t next_leaf = 0;
  std::vector<std::string> leaf_labels;
  std::vector<PendingInternal> internals;
  std::vector<std::vector<std::size_t>> internal_leaves;
  index_tree(tree, true, options, next_leaf, leaf_labels, internals, internal_leaves);

  ConstituencyGraph g;
  g.n = next_leaf;
  g.m = internals.size();
  g.neighbors.reserve(g.size());
  g.spans.reserve(g.size());
  g.labels.reserve(g.size());
  for (std::size_t i = 0; i < g.n; ++i) {
    g.neighbors.push_back({i});
    g.spans.emplace_back(i, i + 1);
    g.labels.push_back(leaf_labels[i]);
  }
  for (std::size_t k = 0; k < g.m; ++k) {
    g.neighbors.push_back(std::move(internal_leaves[k]));
    g.spans.emplace_back(internals[k].first, internals[k].last);
    g.labels.push_back(internals[k].label);
  }
  return g;
}

std::vector<std::string> graph_validate(const ConstituencyGraph& graph, const ParseTree& tree,
                                        const GraphOptions& options) {
  std::vector<std::string> issues;
  const ConstituencyGraph expected = tree_to_graph(tree, options);
  if (graph.n != expected.n) {
    issues.push_back("leaf count " + std::to_string(graph.n) + " != tree leaf count " +
                     std::to_string(expected.n));
  }
  if (graph.m != expected.m) {
    issues.push_back("internal count " + std::to_string(graph.m) + " != tree internal count " +
                     std::to_string(expected.m));
  }
  if (graph.neighbors.size() != graph.size()) {
    issues.push_back("neighbor table has " + std::to_string(graph.neighbors.size()) + " rows, expected " +
                     std::to_string(graph.size()));
    return issues;
  }
  if (!issues.empty()) return issues;

  bool structural_ok = true;
  for (std::size_t v = 0; v < graph.size(); ++v) {
    const auto& nb = graph.neighbors[v];
    const std::string name = "node " + std::to_string(v);
    if (graph.is_leaf(v)) {
      if (nb.size() != 1 || nb.front() != v) {
        issues.push_back(name + ": leaf neighbor set must be exactly its self-loop");
        structural_ok = false;
      }
      continue;
    }
    if (nb.empty()) {
      issues.push_back(name + ": internal node has no leaf sources");
      structural_ok = false;
      continue;
    }
    auto internal = std::find_if(nb.begin(), nb.end(), [&](std::size_t u) { return !graph.is_leaf(u); });
    if (internal != nb.end()) {
      issues.push_back(name + ": neighbor set contains internal node " + std::to_string(*internal));
      structural_ok = false;
      continue;
    }
    std::set<std::size_t> got(nb.begin(), nb.end());
    std::set<std::size_t> want(expected.neighbors[v].begin(), expected.neighbors[v].end());
    if (got != want || got.size() != nb.size()) {
      issues.push_back(name + ": neighbor set differs from its leaf descendants");
      structural_ok = false;
    }
  }
  if (structural_ok && graph.m > 0 && graph.neighbors[graph.root()].size() != graph.n) {
    issues.push_back("root does not cover all leaves");
  }
  if (structural_ok && graph.edge_count() != expected.edge_count()) {
    issues.push_back("edge count " + std::to_string(graph.edge_count()) + " != " +
                     std::to_string(expected.edge_count()));
  }
  if (graph.spans.size() == graph.size()) {
    for (std::size_t v = 0; v < graph.size(); ++v) {
      auto [first, last] = graph.spans[v];
      if (first >= last || last > graph.n) issues.push_back("node " + std::to_string(v) + ": span out of range");
    }
  } else {
    issues.push_back("span table size mismatch");
  }
  return issues;
}

}  // namespace scan
