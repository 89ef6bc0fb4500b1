#pragma once

#include "scan/model.hpp"
#include "scan/treebank.hpp"

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace scan {

/// Raised for unreadable or inconsistent input data. `line()` is 0 when unknown.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& message, std::size_t line = 0);
  std::size_t line() const { return line_; }
  /// The description without the line suffix.
  const std::string& message() const { return message_; }

 private:
  std::string message_;
  std::size_t line_;
};

struct Label {
  std::string category;
  std::string polarity;
  bool operator==(const Label&) const = default;
};

struct Example {
  std::string id;
  std::string text;
  std::vector<std::string> tokens;
  std::string parse;
  std::vector<Label> labels;  // in source order, one per category

  bool operator==(const Example&) const = default;
};

struct DatasetBundle {
  std::vector<Example> train;
  std::vector<Example> dev;
  std::vector<Example> test;
  std::vector<std::string> categories;
  std::vector<std::string> polarities = {"positive", "negative", "neutral"};

  /// Throws DataError when a label falls outside categories or polarities.
  void validate() const;
};

enum class Schema {
  /// <sentence id><text/><aspectCategories><aspectCategory category polarity/>
  semeval2014,
  /// Same element names; sentence ids are optional and generated from position.
  mams,
  /// <Review><sentences><sentence id><text/><Opinions><Opinion category polarity/>,
  /// categories renamed through a CategoryMap.
  semeval2016,
};

Schema parse_schema(std::string_view name);

/// Source category → target category. Source categories absent from the map are dropped.
using CategoryMap = std::map<std::string, std::string>;

/// Reads "SOURCE=target" lines. Blank lines and lines starting with "//" or ";" are skipped.
CategoryMap load_category_map(const std::string& path);
CategoryMap parse_category_map(std::istream& in);

struct LoadStats {
  std::size_t sentences_read = 0;
  std::size_t conflict_pairs_dropped = 0;
  std::size_t unmapped_pairs_dropped = 0;
  std::size_t empty_sentences_dropped = 0;
  std::size_t sentences_kept = 0;
};

/// Parses SemEval-style markup. Per (sentence, category), a "conflict"
/// polarity, or positive and negative together after category merging,
/// removes the pair; sentences left without labels are removed.
std::vector<Example> parse_semeval(std::string_view xml, Schema schema, const CategoryMap* mapping = nullptr,
                                   LoadStats* stats = nullptr);
std::vector<Example> load_semeval(const std::string& path, Schema schema, const CategoryMap* mapping = nullptr,
                                  LoadStats* stats = nullptr);

/// Sentences with at least two categories whose polarities are not all equal.
std::vector<Example> build_hard_test(const std::vector<Example>& test);

/// Attaches one bracketed tree per example, in order, and sets tokens from its leaves.
std::vector<Example> attach_parses(std::vector<Example> examples, const std::vector<std::string>& trees);
std::vector<Example> attach_parses(std::vector<Example> examples, const std::string& tree_file);

/// Number of (sentence, category) instances per polarity.
std::map<std::string, std::size_t> polarity_counts(const std::vector<Example>& examples);

/// Categories in order of first appearance across the given splits, sorted when `sorted` is set.
std::vector<std::string> collect_categories(const std::vector<const std::vector<Example>*>& splits, bool sorted);

/// Moves sentences from `train` into a dev split until its per-polarity counts
/// equal `targets` exactly. Sentences are visited in a seeded shuffle and a
/// sentence is taken when none of its polarities would overshoot. Throws
/// DataError when the targets cannot be met.
struct DevSplit {
  std::vector<Example> train;
  std::vector<Example> dev;
};
DevSplit split_dev(const std::vector<Example>& train, const std::map<std::string, std::size_t>& targets,
                   std::uint64_t seed);

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  /// PAD and UNK first, then tokens by descending frequency, ties lexicographic.
  static Vocab build(const std::vector<Example>& examples, std::size_t min_count = 1);
  static Vocab from_tokens(std::vector<std::string> tokens);

  int id(const std::string& token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
};

struct PretrainedEmbeddings {
  Matrix matrix;  // |V|×dim
  std::size_t covered = 0;
  double coverage = 0.0;  // covered / |V|
};

/// GloVe text format. Rows for tokens found in the file are copied; the
/// remaining rows are drawn from U(−0.25, 0.25) with `seed`; the PAD row is zero.
PretrainedEmbeddings load_pretrained_embeddings(const Vocab& vocab, std::istream& in, int dim = 300,
                                                std::uint64_t seed = 1);
PretrainedEmbeddings load_pretrained_embeddings(const Vocab& vocab, const std::string& path, int dim = 300,
                                                std::uint64_t seed = 1);

/// Network input for one example. Categories absent from the labels get
/// gold_acd 0 and gold_acsa −1.
SentenceInput to_sentence_input(const Example& example, const Vocab& vocab,
                                const std::vector<std::string>& categories,
                                const std::vector<std::string>& polarities, const GraphOptions& options = {});

/// Splits into batches of `batch_size`. With a seed the order is shuffled
/// first; without one the original order is kept.
std::vector<Batch> batchify(const std::vector<Example>& examples, const Vocab& vocab,
                            const std::vector<std::string>& categories, const std::vector<std::string>& polarities,
                            std::size_t batch_size, std::optional<std::uint64_t> seed,
                            const GraphOptions& options = {});

std::string to_jsonl_line(const Example& example);
Example from_jsonl_line(std::string_view line, std::size_t line_number = 0);
void write_jsonl(const std::string& path, const std::vector<Example>& examples);
std::vector<Example> read_jsonl(const std::string& path);

}  // namespace scan
