#include "scan/data.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace scan {

namespace pt = boost::property_tree;
using ojson = nlohmann::ordered_json;

DataError::DataError(const std::string& message, std::size_t line)
    : std::runtime_error(line ? message + " (line " + std::to_string(line) + ")" : message),
      message_(message),
      line_(line) {}

void DatasetBundle::validate() const {
  const std::set<std::string> cats(categories.begin(), categories.end());
  const std::set<std::string> pols(polarities.begin(), polarities.end());
  for (const auto* split : {&train, &dev, &test}) {
    for (const Example& ex : *split) {
      for (const Label& l : ex.labels) {
        if (!cats.count(l.category)) throw DataError("example " + ex.id + ": unknown category " + l.category);
        if (!pols.count(l.polarity)) throw DataError("example " + ex.id + ": unknown polarity " + l.polarity);
      }
    }
  }
}

Schema parse_schema(std::string_view name) {
  if (name == "semeval2014") return Schema::semeval2014;
  if (name == "mams") return Schema::mams;
  if (name == "semeval2016" || name == "semeval2015") return Schema::semeval2016;
  throw std::invalid_argument("unknown schema '" + std::string(name) + "' (expected semeval2014, mams or semeval2016)");
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

struct RawPair {
  std::string category;
  std::string polarity;
};

struct RawSentence {
  std::string id;
  std::string text;
  std::vector<RawPair> pairs;
};

const pt::ptree* child(const pt::ptree& node, const std::string& name) {
  auto it = node.find(name);
  return it == node.not_found() ? nullptr : &it->second;
}

std::string attribute(const pt::ptree& node, const std::string& name) {
  return node.get<std::string>("<xmlattr>." + name, "");
}

RawSentence read_sentence(const pt::ptree& node, const char* pair_list, const char* pair_name, std::size_t position) {
  RawSentence s;
  s.id = attribute(node, "id");
  if (s.id.empty()) s.id = std::to_string(position);
  const pt::ptree* text = child(node, "text");
  if (!text) throw DataError("sentence " + s.id + " has no <text> element");
  s.text = text->data();
  if (const pt::ptree* list = child(node, pair_list)) {
    for (const auto& [name, item] : *list) {
      if (name != pair_name) continue;
      RawPair p{attribute(item, "category"), attribute(item, "polarity")};
      if (p.category.empty()) throw DataError("sentence " + s.id + ": <" + pair_name + "> without category");
      s.pairs.push_back(std::move(p));
    }
  }
  return s;
}

std::vector<RawSentence> read_raw(const pt::ptree& doc, Schema schema) {
  std::vector<RawSentence> out;
  if (schema == Schema::semeval2016) {
    const pt::ptree* reviews = child(doc, "Reviews");
    if (!reviews) throw DataError("missing <Reviews> root element");
    for (const auto& [rname, review] : *reviews) {
      if (rname != "Review") continue;
      const pt::ptree* sentences = child(review, "sentences");
      if (!sentences) continue;
      for (const auto& [sname, sentence] : *sentences) {
        if (sname == "sentence") out.push_back(read_sentence(sentence, "Opinions", "Opinion", out.size()));
      }
    }
    return out;
  }
  const pt::ptree* sentences = child(doc, "sentences");
  if (!sentences) throw DataError("missing <sentences> root element");
  for (const auto& [name, sentence] : *sentences) {
    if (name == "sentence") out.push_back(read_sentence(sentence, "aspectCategories", "aspectCategory", out.size()));
  }
  return out;
}

}  // namespace

CategoryMap parse_category_map(std::istream& in) {
  CategoryMap map;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t.rfind("//", 0) == 0 || t.front() == ';') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw DataError("category map: expected SOURCE=target", number);
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key.empty() || value.empty()) throw DataError("category map: empty key or value", number);
    if (!map.emplace(key, value).second) throw DataError("category map: duplicate key " + key, number);
  }
  return map;
}

CategoryMap load_category_map(const std::string& path) {
  std::ifstream in = open_input(path);
  return parse_category_map(in);
}

std::vector<Example> parse_semeval(std::string_view xml, Schema schema, const CategoryMap* mapping,
                                   LoadStats* stats) {
  pt::ptree doc;
  try {
    std::istringstream in{std::string(xml)};
    pt::read_xml(in, doc);
  } catch (const pt::xml_parser_error& e) {
    throw DataError("malformed markup: " + e.message(), e.line());
  }
  LoadStats local;
  std::vector<Example> out;
  for (RawSentence& raw : read_raw(doc, schema)) {
    ++local.sentences_read;
    std::vector<std::string> order;
    std::map<std::string, std::set<std::string>> seen;
    for (const RawPair& p : raw.pairs) {
      if (p.polarity != "positive" && p.polarity != "negative" && p.polarity != "neutral" &&
          p.polarity != "conflict") {
        throw DataError("sentence " + raw.id + ": unknown polarity '" + p.polarity + "'");
      }
      std::string category = p.category;
      if (mapping) {
        auto it = mapping->find(category);
        if (it == mapping->end()) {
          ++local.unmapped_pairs_dropped;
          continue;
        }
        category = it->second;
      }
      if (!seen.count(category)) order.push_back(category);
      seen[category].insert(p.polarity);
    }
    Example ex;
    ex.id = raw.id;
    ex.text = raw.text;
    for (const std::string& category : order) {
      const auto& pols = seen[category];
      const bool conflict = pols.count("conflict") || (pols.count("positive") && pols.count("negative"));
      if (conflict) {
        ++local.conflict_pairs_dropped;
        continue;
      }
      std::string polarity = *pols.begin();
      if (pols.size() > 1) polarity = pols.count("positive") ? "positive" : "negative";
      ex.labels.push_back({category, polarity});
    }
    if (ex.labels.empty()) {
      ++local.empty_sentences_dropped;
      continue;
    }
    out.push_back(std::move(ex));
  }
  local.sentences_kept = out.size();
  if (stats) *stats = local;
  return out;
}

std::vector<Example> load_semeval(const std::string& path, Schema schema, const CategoryMap* mapping,
                                  LoadStats* stats) {
  std::ifstream in = open_input(path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_semeval(buffer.str(), schema, mapping, stats);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.message(), e.line());
  }
}

std::vector<Example> build_hard_test(const std::vector<Example>& test) {
  std::vector<Example> out;
  for (const Example& ex : test) {
    if (ex.labels.size() < 2) continue;
    const bool mixed = std::any_of(ex.labels.begin(), ex.labels.end(),
                                   [&](const Label& l) { return l.polarity != ex.labels.front().polarity; });
    if (mixed) out.push_back(ex);
  }
  return out;
}

std::vector<Example> attach_parses(std::vector<Example> examples, const std::vector<std::string>& trees) {
  if (trees.size() != examples.size()) {
    throw DataError("tree file has " + std::to_string(trees.size()) + " trees for " +
                    std::to_string(examples.size()) + " examples; expected one bracketed tree per line, in order");
  }
  for (std::size_t i = 0; i < examples.size(); ++i) {
    try {
      const ParseTree tree = parse_bracketed(trees[i]);
      examples[i].parse = serialize(tree);
      examples[i].tokens = leaves(tree);
    } catch (const MalformedTree& e) {
      throw DataError(std::string("unparsable tree for example ") + examples[i].id + ": " + e.what(), i + 1);
    }
  }
  return examples;
}

std::vector<Example> attach_parses(std::vector<Example> examples, const std::string& tree_file) {
  std::ifstream in(tree_file);
  if (!in) {
    throw DataError("cannot open tree file " + tree_file +
                    " (expected one bracketed constituency tree per line, e.g. \"(S (NP a b) (VP c))\")");
  }
  std::vector<std::string> trees;
  std::string line;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) trees.push_back(line);
  }
  try {
    return attach_parses(std::move(examples), trees);
  } catch (const DataError& e) {
    throw DataError(tree_file + ": " + e.message(), e.line());
  }
}

std::map<std::string, std::size_t> polarity_counts(const std::vector<Example>& examples) {
  std::map<std::string, std::size_t> counts;
  for (const Example& ex : examples) {
    for (const Label& l : ex.labels) ++counts[l.polarity];
  }
  return counts;
}

std::vector<std::string> collect_categories(const std::vector<const std::vector<Example>*>& splits, bool sorted) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto* split : splits) {
    for (const Example& ex : *split) {
      for (const Label& l : ex.labels) {
        if (seen.insert(l.category).second) out.push_back(l.category);
      }
    }
  }
  if (sorted) std::sort(out.begin(), out.end());
  return out;
}

DevSplit split_dev(const std::vector<Example>& train, const std::map<std::string, std::size_t>& targets,
                   std::uint64_t seed) {
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::map<std::string, std::size_t> taken;
  std::vector<bool> in_dev(train.size(), false);
  for (std::size_t idx : order) {
    std::map<std::string, std::size_t> need;
    for (const Label& l : train[idx].labels) ++need[l.polarity];
    bool fits = true;
    for (const auto& [pol, count] : need) {
      auto t = targets.find(pol);
      if (t == targets.end() || taken[pol] + count > t->second) fits = false;
    }
    if (!fits) continue;
    for (const auto& [pol, count] : need) taken[pol] += count;
    in_dev[idx] = true;
  }
  for (const auto& [pol, count] : targets) {
    if (taken[pol] != count) {
      throw DataError("dev split: reached " + std::to_string(taken[pol]) + " of " + std::to_string(count) + " " +
                      pol + " instances with seed " + std::to_string(seed));
    }
  }
  DevSplit split;
  for (std::size_t i = 0; i < train.size(); ++i) (in_dev[i] ? split.dev : split.train).push_back(train[i]);
  return split;
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  Vocab v;
  v.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], static_cast<int>(i)).second) {
      throw DataError("vocabulary has duplicate token '" + v.tokens_[i] + "'");
    }
  }
  if (v.tokens_.size() < 2) throw DataError("vocabulary must start with PAD and UNK");
  return v;
}

Vocab Vocab::build(const std::vector<Example>& examples, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const Example& ex : examples) {
    for (const std::string& t : ex.tokens) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> entries;
  for (const auto& [token, count] : counts) {
    if (count >= min_count && token != "<pad>" && token != "<unk>") entries.emplace_back(token, count);
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = {"<pad>", "<unk>"};
  for (auto& e : entries) tokens.push_back(std::move(e.first));
  return from_tokens(std::move(tokens));
}

int Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

PretrainedEmbeddings load_pretrained_embeddings(const Vocab& vocab, std::istream& in, int dim, std::uint64_t seed) {
  PretrainedEmbeddings out;
  const auto rows = static_cast<Eigen::Index>(vocab.size());
  out.matrix.resize(rows, dim);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-0.25, 0.25);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (int c = 0; c < dim; ++c) out.matrix(r, c) = uniform(rng);
  }
  out.matrix.row(Vocab::kPad).setZero();
  std::vector<bool> filled(vocab.size(), false);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (!rest.empty()) {
      const auto space = rest.find(' ');
      if (space != 0) fields.push_back(rest.substr(0, space));
      if (space == std::string_view::npos) break;
      rest.remove_prefix(space + 1);
    }
    if (fields.size() != static_cast<std::size_t>(dim) + 1) {
      throw DataError("embedding file: expected a token and " + std::to_string(dim) + " values, found " +
                      std::to_string(fields.size() - 1) + " values",
                      number);
    }
    const int id = vocab.id(std::string(fields[0]));
    if (id == Vocab::kUnk && fields[0] != vocab.token(Vocab::kUnk)) continue;
    if (id == Vocab::kPad) continue;
    for (int c = 0; c < dim; ++c) {
      const std::string_view f = fields[static_cast<std::size_t>(c) + 1];
      double value = 0.0;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), value);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw DataError("embedding file: bad number '" + std::string(f) + "'", number);
      }
      out.matrix(id, c) = value;
    }
    if (!filled[static_cast<std::size_t>(id)]) {
      filled[static_cast<std::size_t>(id)] = true;
      ++out.covered;
    }
  }
  out.coverage = vocab.size() ? static_cast<double>(out.covered) / static_cast<double>(vocab.size()) : 0.0;
  return out;
}

PretrainedEmbeddings load_pretrained_embeddings(const Vocab& vocab, const std::string& path, int dim,
                                                std::uint64_t seed) {
  std::ifstream in = open_input(path);
  try {
    return load_pretrained_embeddings(vocab, in, dim, seed);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.message(), e.line());
  }
}

SentenceInput to_sentence_input(const Example& example, const Vocab& vocab,
                                const std::vector<std::string>& categories,
                                const std::vector<std::string>& polarities, const GraphOptions& options) {
  if (example.parse.empty()) throw DataError("example " + example.id + " has no parse");
  SentenceInput s;
  const ParseTree tree = parse_bracketed(example.parse);
  s.graph = tree_to_graph(tree, options);
  // Collapsed preterminals keep their word, so graph leaves and tokens align one to one.
  for (const std::string& token : leaves(tree)) s.token_ids.push_back(vocab.id(token));
  s.gold_acd.assign(categories.size(), 0);
  s.gold_acsa.assign(categories.size(), -1);
  for (const Label& l : example.labels) {
    const auto c = std::find(categories.begin(), categories.end(), l.category);
    const auto p = std::find(polarities.begin(), polarities.end(), l.polarity);
    if (c == categories.end()) throw DataError("example " + example.id + ": unknown category " + l.category);
    if (p == polarities.end()) throw DataError("example " + example.id + ": unknown polarity " + l.polarity);
    const auto j = static_cast<std::size_t>(c - categories.begin());
    s.gold_acd[j] = 1;
    s.gold_acsa[j] = static_cast<int>(p - polarities.begin());
  }
  return s;
}

std::vector<Batch> batchify(const std::vector<Example>& examples, const Vocab& vocab,
                            const std::vector<std::string>& categories, const std::vector<std::string>& polarities,
                            std::size_t batch_size, std::optional<std::uint64_t> seed, const GraphOptions& options) {
  if (batch_size == 0) throw std::invalid_argument("batchify: batch size must be positive");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  if (seed) {
    std::mt19937_64 rng(*seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::vector<SentenceInput> inputs;
    std::vector<std::string> ids;
    for (std::size_t k = start; k < end; ++k) {
      const Example& ex = examples[order[k]];
      inputs.push_back(to_sentence_input(ex, vocab, categories, polarities, options));
      ids.push_back(ex.id);
    }
    batches.push_back(Batch::assemble(inputs, std::move(ids)));
  }
  return batches;
}

std::string to_jsonl_line(const Example& example) {
  ojson j;
  j["id"] = example.id;
  j["text"] = example.text;
  j["tokens"] = example.tokens;
  j["parse"] = example.parse;
  j["labels"] = ojson::array();
  for (const Label& l : example.labels) {
    ojson label;
    label["category"] = l.category;
    label["polarity"] = l.polarity;
    j["labels"].push_back(std::move(label));
  }
  return j.dump();
}

Example from_jsonl_line(std::string_view line, std::size_t line_number) {
  ojson j;
  try {
    j = ojson::parse(line);
  } catch (const ojson::parse_error& e) {
    throw DataError(std::string("invalid JSON: ") + e.what(), line_number);
  }
  static const std::vector<std::string> keys = {"id", "text", "tokens", "parse", "labels"};
  if (!j.is_object() || j.size() != keys.size()) {
    throw DataError("record must be an object with exactly id, text, tokens, parse, labels", line_number);
  }
  Example ex;
  try {
    ex.id = j.at("id").get<std::string>();
    ex.text = j.at("text").get<std::string>();
    ex.tokens = j.at("tokens").get<std::vector<std::string>>();
    ex.parse = j.at("parse").get<std::string>();
    for (const auto& l : j.at("labels")) {
      if (!l.is_object() || l.size() != 2) throw DataError("label must have exactly category and polarity", line_number);
      ex.labels.push_back({l.at("category").get<std::string>(), l.at("polarity").get<std::string>()});
    }
  } catch (const ojson::exception& e) {
    throw DataError(std::string("bad record field: ") + e.what(), line_number);
  }
  if (ex.labels.empty()) throw DataError("record " + ex.id + " has no labels", line_number);
  std::set<std::string> cats;
  for (const Label& l : ex.labels) {
    if (!cats.insert(l.category).second) throw DataError("record " + ex.id + " repeats " + l.category, line_number);
  }
  if (!ex.parse.empty()) {
    try {
      if (leaves(parse_bracketed(ex.parse)) != ex.tokens) {
        throw DataError("record " + ex.id + ": tokens differ from the parse leaves", line_number);
      }
    } catch (const MalformedTree& e) {
      throw DataError("record " + ex.id + ": " + e.what(), line_number);
    }
  }
  return ex;
}

void write_jsonl(const std::string& path, const std::vector<Example>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  for (const Example& ex : examples) out << to_jsonl_line(ex) << '\n';
  if (!out) throw DataError("write failed for " + path);
}

std::vector<Example> read_jsonl(const std::string& path) {
  std::ifstream in = open_input(path);
  std::vector<Example> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      out.push_back(from_jsonl_line(line, number));
    } catch (const DataError& e) {
      throw DataError(path + ": " + e.message(), e.line());
    }
  }
  return out;
}

}  // namespace scan
