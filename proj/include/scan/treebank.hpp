#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace scan {

/// Raised by parse_bracketed; `offset` is the character position where reading failed.
class MalformedTree : public std::runtime_error {
 public:
  MalformedTree(const std::string& what, std::size_t offset);
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Rooted, ordered, labeled tree as produced by a constituency parser.
/// Bare words are leaves: they carry a token and an empty label. A node
/// written "(TAG word)" is a preterminal with one leaf child.
struct ParseTree {
  std::string label;
  std::vector<ParseTree> children;
  std::optional<std::string> token;

  bool is_leaf() const { return children.empty(); }
  bool is_preterminal() const { return children.size() == 1 && children.front().is_leaf(); }

  bool operator==(const ParseTree&) const = default;
};

ParseTree parse_bracketed(std::string_view text);

/// Single-space, canonical bracketed form. parse_bracketed(serialize(t)) == t.
std::string serialize(const ParseTree& tree);

/// Tokens of the sentence, left to right.
std::vector<std::string> leaves(const ParseTree& tree);

/// True for Penn Treebank part-of-speech tags, punctuation tags included.
bool is_pos_tag(std::string_view label);

struct GraphOptions {
  /// When false, a non-root preterminal "(TAG word)" whose TAG is a
  /// part-of-speech tag becomes a single graph leaf tagged TAG instead of an
  /// internal node over one word. Phrase labels over one word, such as
  /// "(VP c)", stay internal nodes either way.
  bool keep_preterminals = false;
};

/// Directed graph over the n leaves and m internal nodes of a parse tree.
/// Leaves take indices 0..n-1 in token order; internal nodes n..n+m-1 in
/// pre-order. neighbors[i] lists the source nodes that node i aggregates:
/// the leaf itself for a leaf, every leaf descendant for an internal node.
struct ConstituencyGraph {
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<std::vector<std::size_t>> neighbors;
  /// Half-open token span [first, second) covered by each node.
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  /// Constituent tag per node (empty for untagged words).
  std::vector<std::string> labels;

  std::size_t size() const { return n + m; }
  bool is_leaf(std::size_t node) const { return node < n; }
  std::size_t root() const { return m == 0 ? 0 : n; }
  std::size_t edge_count() const;
};

ConstituencyGraph tree_to_graph(const ParseTree& tree, const GraphOptions& options = {});

/// Lists every violated graph invariant; empty when `graph` is consistent with `tree`.
std::vector<std::string> graph_validate(const ConstituencyGraph& graph, const ParseTree& tree,
                                        const GraphOptions& options = {});

}  // namespace scan
