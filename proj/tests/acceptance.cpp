#include "scan/ablation.hpp"
#include "scan/dataset.hpp"
#include "scan/eval.hpp"
#include "scan/train.hpp"
#include "test_util.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <thread>

using namespace scan;
namespace fs = std::filesystem;

namespace {

constexpr int kSkipCode = 77;
constexpr double kOracleTol = 1e-9;

enum class Status { pass, fail, skip };

struct Outcome {
  Status status = Status::pass;
  std::string detail;
};

Outcome pass(std::string d) { return {Status::pass, std::move(d)}; }
Outcome fail(std::string d) { return {Status::fail, std::move(d)}; }
Outcome skip(std::string d) { return {Status::skip, std::move(d)}; }

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

// Collects failed checks inside one criterion.
struct Checker {
  std::vector<std::string> failures;
  std::size_t checks = 0;
  void expect(bool ok, const std::string& what) {
    ++checks;
    if (!ok && failures.size() < 5) failures.push_back(what);
    if (!ok && failures.size() == 5) failures.push_back("...");
  }
  void near(double a, double b, double tol, const std::string& what) {
    expect(std::abs(a - b) <= tol, what + ": " + fmt(a, 17) + " vs " + fmt(b, 17));
  }
  Outcome outcome(const std::string& summary) const {
    if (failures.empty()) return pass(summary + " (" + std::to_string(checks) + " checks)");
    std::string d = summary + "; failed:";
    for (const auto& f : failures) d += " [" + f + "]";
    return fail(d);
  }
};

// 1. Loss oracles.

Outcome loss_oracles() {
  Checker c;
  Matrix acd(2, 2);
  acd << 0.5, 0.3, 0.8, 0.5;
  const int gold_acd[] = {1, 0};
  c.near(loss_acd(acd, gold_acd), 2.0 * std::log(2.0), kOracleTol, "L_ACD = 2 ln 2");
  c.near(loss_iloss(Matrix::Constant(3, 3, 0.5)), 3.0 * std::log(2.0), kOracleTol, "L_iLoss = 3 ln 2");
  const int gold_first[] = {0};
  c.near(loss_acsa(Matrix::Constant(1, 3, 1.0 / 3.0), gold_first), std::log(3.0), kOracleTol, "L_ACSA = ln 3");
  Matrix two(2, 2);
  two << 0.7, 0.2, 0.9, 0.1;
  c.near(loss_iloss(two), -(std::log(0.8) + std::log(0.1)), kOracleTol, "L_iLoss = -(ln0.8 + ln0.1)");

  std::mt19937_64 rng(1401);
  std::uniform_real_distribution<double> prob(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 6;
    Matrix y(n, n);
    for (int r = 0; r < n; ++r) {
      for (int k = 0; k < n; ++k) y(r, k) = prob(rng);
    }
    Matrix dist = testing::random_matrix(n, 3, rng).cwiseAbs();
    std::vector<int> g_acd(static_cast<std::size_t>(n)), g_acsa(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r) {
      dist.row(r) /= dist.row(r).sum();
      g_acd[static_cast<std::size_t>(r)] = static_cast<int>(rng() % 2);
      g_acsa[static_cast<std::size_t>(r)] = g_acd[static_cast<std::size_t>(r)] ? static_cast<int>(rng() % 3) : -1;
    }
    if (g_acsa[0] < 0) g_acsa[0] = static_cast<int>(rng() % 3);
    const std::string tag = " trial " + std::to_string(trial);
    const double la = loss_acd(y, g_acd), li = loss_iloss(y), ls = loss_acsa(dist, g_acsa);
    c.near(la, testing::oracle_loss_acd(y, g_acd), kOracleTol, "L_ACD" + tag);
    c.near(li, testing::oracle_loss_iloss(y), kOracleTol, "L_iLoss" + tag);
    c.near(ls, testing::oracle_loss_acsa(dist, g_acsa), kOracleTol, "L_ACSA" + tag);

    ModelConfig mc = testing::toy_config();
    mc.num_categories = n;
    const ModelParams p = ModelParams::init(mc, static_cast<std::uint64_t>(trial));
    LossWeights w{prob(rng), prob(rng), prob(rng), prob(rng) * 1e-3};
    double sq = 0.0;
    for (const Parameter* param : p.all()) {
      for (Eigen::Index k = 0; k < param->value.size(); ++k) sq += param->value.data()[k] * param->value.data()[k];
    }
    const double expected = w.acd * la + w.iloss * li + w.acsa * ls + w.l2 * sq;
    c.near(total_loss(la, li, ls, p, w), expected, kOracleTol, "total" + tag);
  }
  return c.outcome("fixed cases and 100 random instances within 1e-9");
}

// 2. Gradient check.

Outcome gradient_check() {
  ModelParams p = ModelParams::init(testing::toy_config(), 101);
  const SentenceInput s = testing::toy_sentence();
  const Batch batch = Batch::assemble(std::span(&s, 1));
  const LossWeights w;
  p.zero_grad();
  {
    Tape tape;
    tape.backward(batch_objective(tape, p, batch, Variant::full, w));
  }
  auto objective = [&] {
    Tape tape;
    return tape.scalar(batch_objective(tape, p, batch, Variant::full, w));
  };
  const auto r = testing::finite_difference_check(p, objective, 1e-5);
  const std::string d = "d=8 L=2 N=3 M=3, step 1e-5: max per-group relative error " + fmt(r.max_rel_error) +
                        ", max entry error " + fmt(r.max_abs_error) + " (worst " + r.worst + ")";
  return r.max_rel_error < 1e-4 ? pass(d) : fail(d);
}

// 3. Graph construction.

Outcome graph_construction() {
  Checker c;
  std::mt19937_64 rng(3003);
  for (int trial = 0; trial < 200; ++trial) {
    const ParseTree t = testing::random_tree(rng, 12, 4);
    const ConstituencyGraph g = tree_to_graph(t);
    const auto oracle = testing::brute_force_graph(t, false);
    c.expect(g.n == oracle.n && g.m == oracle.m && g.neighbors == oracle.neighbors, serialize(t));
  }
  const ConstituencyGraph fixture = tree_to_graph(parse_bracketed("(S (NP a b) (VP c))"));
  c.expect(fixture.edge_count() == 9, "fixture has " + std::to_string(fixture.edge_count()) + " edges");
  return c.outcome("200 random trees match the leaf-descendant oracle; fixture has 9 edges");
}

// 4. Dataset fidelity.

using Counts = std::map<std::string, std::size_t>;

Outcome dataset_fidelity() {
  const auto dir = env("SCAN_DATA_DIR");
  if (!dir) return skip("SCAN_DATA_DIR is not set; needs rest14/ and mams_acsa/ raw files");
  for (const char* d : {"rest14", "mams_acsa"}) {
    if (!fs::is_directory(fs::path(*dir) / d)) return skip(std::string("no ") + d + " directory under " + *dir);
  }
  DatasetOptions o;
  o.data_dir = *dir;
  o.require_parses = false;
  Checker c;
  auto compare = [&](const std::string& what, const std::vector<Example>& split, const Counts& expected) {
    const Counts got = polarity_counts(split);
    for (const auto& [pol, n] : expected) {
      const std::size_t have = got.count(pol) ? got.at(pol) : 0;
      c.expect(have == n, what + " " + pol + " " + std::to_string(have) + " != " + std::to_string(n));
    }
  };
  const DatasetBundle rest = load_dataset("rest14", o);
  compare("rest14 train", rest.train, {{"positive", 855}, {"negative", 733}, {"neutral", 430}});
  compare("rest14 dev", rest.dev, {{"positive", 324}, {"negative", 106}, {"neutral", 70}});
  compare("rest14 test", rest.test, {{"positive", 657}, {"negative", 222}, {"neutral", 94}});
  compare("rest14 hard test", build_hard_test(rest.test), {{"positive", 21}, {"negative", 20}, {"neutral", 12}});
  const DatasetBundle mams = load_dataset("mams_acsa", o);
  compare("mams train", mams.train, {{"positive", 1929}, {"negative", 2084}, {"neutral", 3077}});
  compare("mams dev", mams.dev, {{"positive", 241}, {"negative", 259}, {"neutral", 388}});
  compare("mams test", mams.test, {{"positive", 245}, {"negative", 263}, {"neutral", 393}});
  return c.outcome("Rest14, Rest14-hard and MAMS-ACSA polarity counts");
}

// 5. Overfit probe.

PreparedData toy_corpus() {
  DatasetBundle b;
  b.train = read_jsonl(std::string(SCAN_TEST_DATA_DIR) + "/toy_corpus.jsonl");
  b.categories = collect_categories({&b.train}, true);
  return PreparedData::from_bundle(b, {});
}

Outcome overfit() {
  const TrainConfig config;
  const auto start = std::chrono::steady_clock::now();
  const ProbeResult r = overfit_probe(config, toy_corpus(), 300);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const std::string d = "full variant at d=300 L=4 lr=1e-3: train accuracy " + fmt(r.final_accuracy) + " after " +
                        std::to_string(r.epochs) + " epochs in " + fmt(seconds, 3) + " s";
  return r.passed && seconds < 60.0 ? pass(d) : fail(d);
}

// 6 and 7. Desk-scale training.

int worker_threads() {
  if (auto t = env("SCAN_THREADS")) return std::max(1, std::atoi(t->c_str()));
  return static_cast<int>(std::clamp(std::thread::hardware_concurrency(), 1u, 5u));
}

std::optional<std::string> training_inputs(const std::string& dataset, std::string& glove) {
  const auto dir = env("SCAN_DATA_DIR");
  const auto g = env("SCAN_GLOVE");
  if (!dir) return "SCAN_DATA_DIR is not set";
  if (!g || !fs::is_regular_file(*g)) return "SCAN_GLOVE does not name a 300-d GloVe text file";
  const DatasetInfo info = dataset_info(dataset);
  if (!fs::is_directory(fs::path(*dir) / info.directory)) return "no " + info.directory + " directory under " + *dir;
  if (!fs::is_regular_file(fs::path(*dir) / info.directory / "train.trees")) {
    return "no parse files in " + (fs::path(*dir) / info.directory).string();
  }
  glove = *g;
  return std::nullopt;
}

TrainConfig desk_config(const std::string& dataset, const std::string& glove) {
  TrainConfig c;
  c.dataset = dataset;
  c.data_dir = *env("SCAN_DATA_DIR");
  c.glove_path = glove;
  c.threads = worker_threads();
  if (auto out = env("SCAN_ACCEPTANCE_OUT")) c.out_dir = *out;
  return c;
}

Outcome mams_reproduction() {
  std::string glove;
  if (auto missing = training_inputs("mams_acsa", glove)) return skip(*missing);
  const TrainConfig c = desk_config("mams_acsa", glove);
  DatasetOptions o;
  o.data_dir = c.data_dir;
  const PreparedData data = prepare_data(load_dataset("mams_acsa", o), c);
  MultiRunOptions mo;
  if (env("SCAN_ACCEPTANCE_OUT")) mo.out_dir = (fs::path(c.out_dir) / "mams_acsa" / "full").string();
  const MultiRunResult r = multi_run(c, data, mo);
  const std::string d = "5-run mean test accuracy " + fmt(100.0 * r.mean, 5) + " (std " + fmt(100.0 * r.stddev, 3) +
                        ", reference 75.405, threshold 73.4)" + (r.partial ? ", partial" : "");
  return !r.partial && 100.0 * r.mean >= 73.4 ? pass(d) : fail(d);
}

Outcome ablation_ordering() {
  std::string glove;
  if (auto missing = training_inputs("rest14_hard", glove)) return skip(*missing);
  const TrainConfig c = desk_config("rest14_hard", glove);
  DatasetOptions o;
  o.data_dir = c.data_dir;
  const PreparedData data = prepare_data(load_dataset("rest14_hard", o), c);
  const std::string out = env("SCAN_ACCEPTANCE_OUT") ? (fs::path(c.out_dir) / "rest14_hard").string() : "";
  const AblationTable t = run_ablation_suite("rest14_hard", c, data, out);
  const double full = 100.0 * t.row(Variant::full).mean;
  const double no_iloss = 100.0 * t.row(Variant::no_iloss).mean;
  const double no_tree = 100.0 * t.row(Variant::no_tree).mean;
  const std::string d = "Rest14-hard 5-run means: full " + fmt(full, 5) + ", no_iloss " + fmt(no_iloss, 5) +
                        ", no_tree " + fmt(no_tree, 5) + "; full - no_tree = " + fmt(full - no_tree, 4) +
                        " (needs >= 2.0)";
  return full - no_tree >= 2.0 ? pass(d) : fail(d);
}

// 8. Invariant suite.

struct RandomSentence {
  ParseTree tree;
  SentenceInput input;
};

RandomSentence random_sentence(std::mt19937_64& rng, int vocab, int categories, bool keep_preterminals = false) {
  RandomSentence s;
  s.tree = testing::random_tree(rng, 8, 4);
  s.input.graph = tree_to_graph(s.tree, {.keep_preterminals = keep_preterminals});
  for (std::size_t i = 0; i < s.input.graph.n; ++i) s.input.token_ids.push_back(1 + static_cast<int>(rng() % (vocab - 1)));
  bool any = false;
  for (int j = 0; j < categories; ++j) {
    const int mentioned = static_cast<int>(rng() % 2);
    any = any || mentioned;
    s.input.gold_acd.push_back(mentioned);
    s.input.gold_acsa.push_back(mentioned ? static_cast<int>(rng() % 3) : -1);
  }
  if (!any) {
    s.input.gold_acd[0] = 1;
    s.input.gold_acsa[0] = 0;
  }
  return s;
}

Example random_example(std::mt19937_64& rng, int index) {
  static const char* cats[] = {"food", "service", "price", "ambience", "anecdotes/miscellaneous"};
  static const char* pols[] = {"positive", "negative", "neutral"};
  static const char* words[] = {"great", "food", "\"quoted\"", "caf\xc3\xa9", "back\\slash", "but", "slow"};
  ParseTree t = testing::random_tree(rng, 8, 4);
  std::function<void(ParseTree&)> relabel = [&](ParseTree& node) {
    if (node.is_leaf()) node.token = words[rng() % 7];
    for (ParseTree& child : node.children) relabel(child);
  };
  relabel(t);
  Example ex;
  ex.id = "ex-" + std::to_string(index);
  ex.parse = serialize(t);
  ex.tokens = leaves(t);
  for (const std::string& w : ex.tokens) ex.text += (ex.text.empty() ? "" : " ") + w;
  std::vector<int> order = {0, 1, 2, 3, 4};
  std::shuffle(order.begin(), order.end(), rng);
  const int k = 1 + static_cast<int>(rng() % 3);
  for (int i = 0; i < k; ++i) ex.labels.push_back({cats[order[static_cast<std::size_t>(i)]], pols[rng() % 3]});
  return ex;
}

Outcome invariant_suite() {
  constexpr int kCases = 100;
  std::map<std::string, Checker> props;
  std::mt19937_64 rng(8080);

  for (int i = 0; i < kCases; ++i) {
    const ParseTree t = testing::random_tree(rng, 12, 4);
    props["serialize round trip"].expect(parse_bracketed(serialize(t)) == t, serialize(t));
    const ConstituencyGraph g = tree_to_graph(t);
    bool aligned = g.n == leaves(t).size();
    for (std::size_t leaf = 0; aligned && leaf < g.n; ++leaf) aligned = g.spans[leaf] == std::make_pair(leaf, leaf + 1);
    props["leaf index equals token position"].expect(aligned, serialize(t));
    props["graph invariants"].expect(graph_validate(g, t).empty(), serialize(t));
  }

  ModelConfig mc = testing::toy_config();
  mc.vocab_size = 12;
  for (int i = 0; i < kCases; ++i) {
    const ModelParams p = ModelParams::init(mc, 500 + static_cast<std::uint64_t>(i));
    const Variant variant = std::array{Variant::full, Variant::no_iloss, Variant::no_tree}[i % 3];
    std::vector<SentenceInput> inputs;
    const int batch = 1 + i % 4;
    for (int b = 0; b < batch; ++b) inputs.push_back(random_sentence(rng, mc.vocab_size, mc.num_categories, i % 2).input);
    const Batch bt = Batch::assemble(inputs);
    const ModelOutput out = forward(bt, p, variant);
    const ModelOutput again = forward(bt, p, variant);
    bool normalized = true, masked = true, deterministic = true, padding_free = true, mask_counts = true;
    for (std::size_t b = 0; b < bt.size(); ++b) {
      const std::size_t nodes = variant == Variant::no_tree ? bt.graphs[b].n : bt.graphs[b].size();
      mask_counts = mask_counts && static_cast<std::size_t>(bt.node_mask.row(static_cast<Eigen::Index>(b)).count()) ==
                                       bt.graphs[b].size();
      for (Eigen::Index j = 0; j < out.beta[b].rows(); ++j) {
        normalized = normalized && std::abs(out.beta[b].row(j).sum() - 1.0) <= 1e-6;
        normalized = normalized && std::abs(out.y_hat_acsa[b].row(j).sum() - 1.0) <= 1e-6;
      }
      for (const GatAlphas* alphas : {&out.alpha_acd[b], &out.alpha_acsa[b]}) {
        for (const auto& node : *alphas) {
          for (const RowVector& head : node) normalized = normalized && std::abs(head.sum() - 1.0) <= 1e-6;
        }
      }
      std::vector<bool> real(static_cast<std::size_t>(out.beta[b].cols()), false);
      if (variant == Variant::no_tree) {
        for (std::size_t k = 0; k < nodes; ++k) real[k] = true;
      } else {
        for (Eigen::Index slot : bt.node_slots(b)) real[static_cast<std::size_t>(slot)] = true;
      }
      for (Eigen::Index col = 0; col < out.beta[b].cols(); ++col) {
        if (!real[static_cast<std::size_t>(col)]) masked = masked && (out.beta[b].col(col).array() == 0.0).all();
      }
      deterministic = deterministic && out.beta[b] == again.beta[b] && out.y_hat_acd[b] == again.y_hat_acd[b] &&
                      out.y_hat_acsa[b] == again.y_hat_acsa[b];
      const SentenceInput alone = inputs[b];
      const ModelOutput single = forward(Batch::assemble(std::span(&alone, 1)), p, variant);
      padding_free = padding_free && (single.y_hat_acd[0] - out.y_hat_acd[b]).cwiseAbs().maxCoeff() <= 1e-12 &&
                     (single.y_hat_acsa[0] - out.y_hat_acsa[b]).cwiseAbs().maxCoeff() <= 1e-12;
    }
    const std::string tag = "case " + std::to_string(i);
    props["beta, ACSA and alpha rows sum to 1"].expect(normalized, tag);
    props["padded slots get zero attention"].expect(masked, tag);
    props["padding does not change predictions"].expect(padding_free, tag);
    props["node mask marks n+m slots"].expect(mask_counts, tag);
    props["forward is deterministic"].expect(deterministic, tag);

    const RandomSentence s = random_sentence(rng, mc.vocab_size, mc.num_categories);
    if (s.input.graph.n >= 2) {
      Matrix h = testing::random_matrix(static_cast<Eigen::Index>(s.input.graph.n), mc.dim, rng);
      const GatResult base = gat_layer(h, s.input.graph, p.gat_acd, mc.leaky_slope);
      const Eigen::Index leaf = static_cast<Eigen::Index>(rng() % s.input.graph.n);
      h.row((leaf + 1) % h.rows()) *= 3.0;
      const GatResult moved = gat_layer(h, s.input.graph, p.gat_acd, mc.leaky_slope);
      props["leaf output depends only on its own state"].expect(base.states.row(leaf) == moved.states.row(leaf), tag);
    } else {
      props["leaf output depends only on its own state"].expect(true, tag);
    }

    const int n = 2 + i % 4;
    Matrix y = (testing::random_matrix(n, n, rng).array() * 0.4 + 0.5).matrix();
    const double before = loss_iloss(y);
    const int row = static_cast<int>(rng() % n);
    const int col = (row + 1 + static_cast<int>(rng() % (n - 1))) % n;
    y(row, col) += 0.01;
    props["iLoss grows with any off-diagonal entry"].expect(loss_iloss(y) > before, tag);

    ModelParams grown = p;
    const double l2_before = l2_norm_sq(grown);
    std::vector<Parameter*> all = grown.all();
    Parameter* target = all[rng() % all.size()];
    double& entry = target->value.data()[rng() % static_cast<std::size_t>(target->value.size())];
    entry = entry == 0.0 ? 0.1 : entry * 1.5;
    props["L2 grows with parameter magnitude"].expect(l2_norm_sq(grown) > l2_before, tag);
  }

  for (int i = 0; i < kCases; ++i) {
    std::vector<Example> examples;
    const int count = 1 + static_cast<int>(rng() % 12);
    for (int k = 0; k < count; ++k) examples.push_back(random_example(rng, k));
    bool round_trip = true;
    for (const Example& ex : examples) round_trip = round_trip && from_jsonl_line(to_jsonl_line(ex)) == ex;
    props["JSONL round trip is exact"].expect(round_trip, "case " + std::to_string(i));
    const std::vector<Example> hard = build_hard_test(examples);
    bool subset = true;
    for (const Example& h : hard) subset = subset && std::find(examples.begin(), examples.end(), h) != examples.end();
    props["hard test is an idempotent filter"].expect(subset && build_hard_test(hard) == hard, "case " + std::to_string(i));

    DatasetBundle b;
    b.train = examples;
    b.categories = collect_categories({&b.train}, true);
    const PreparedData data = PreparedData::from_bundle(b, {});
    TrainConfig tiny;
    tiny.dim = 4;
    tiny.heads = 2;
    const ModelParams params = initial_params(tiny, data, static_cast<std::uint64_t>(i));
    const std::string first = attention_json(
        make_attention_dump(params, examples[0], data.vocab, data.categories, data.polarities, Variant::full));
    const std::string second = attention_json(
        make_attention_dump(params, examples[0], data.vocab, data.categories, data.polarities, Variant::full));
    props["attention dump is deterministic"].expect(first == second, "case " + std::to_string(i));

    tiny.max_epochs = 2;
    tiny.batch_size = 4;
    tiny.seed = static_cast<std::uint64_t>(i);
    RunOptions ro;
    ro.selection = &data.train;
    const RunResult a = train_one_run(tiny, data, params, ro);
    const RunResult c = train_one_run(tiny, data, params, ro);
    bool same = a.history.size() == c.history.size();
    for (std::size_t e = 0; same && e < a.history.size(); ++e) same = a.history[e].train_loss == c.history[e].train_loss;
    props["loss curves are bitwise reproducible"].expect(same, "case " + std::to_string(i));
  }

  for (int i = 0; i < kCases; ++i) {
    const int patience = 1 + static_cast<int>(rng() % 6);
    const int max_epochs = 1 + static_cast<int>(rng() % 40);
    EarlyStopper s(patience);
    int since = 0, epochs = 0;
    bool ok = true;
    for (int epoch = 1; epoch <= max_epochs; ++epoch) {
      epochs = epoch;
      const bool improved = s.update(epoch, static_cast<double>(rng() % 5));
      since = improved ? 0 : since + 1;
      ok = ok && s.should_stop() == (since >= patience);
      if (s.should_stop()) break;
    }
    props["early stopping respects patience and the epoch cap"].expect(ok && epochs <= max_epochs,
                                                                        "case " + std::to_string(i));

    const int rows = 1 + static_cast<int>(rng() % 10), cols = 1 + static_cast<int>(rng() % 5);
    Eigen::MatrixXi gold(rows, cols), pred(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int k = 0; k < cols; ++k) {
        gold(r, k) = static_cast<int>(rng() % 4) - 1;
        pred(r, k) = static_cast<int>(rng() % 3);
      }
    }
    gold(0, 0) = 0;
    const double acc = accuracy(pred, gold, gold.array() >= 0);
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(rows);
    perm.setIdentity();
    std::shuffle(perm.indices().data(), perm.indices().data() + rows, rng);
    const Eigen::MatrixXi gp = perm * gold, pp = perm * pred;
    props["accuracy is bounded and permutation invariant"].expect(
        acc >= 0.0 && acc <= 1.0 && accuracy(pp, gp, gp.array() >= 0) == acc, "case " + std::to_string(i));
  }

  Checker all;
  std::string failed;
  for (const auto& [name, checker] : props) {
    all.checks += checker.checks;
    if (checker.checks < kCases) failed += " [" + name + ": only " + std::to_string(checker.checks) + " cases]";
    if (!checker.failures.empty()) failed += " [" + name + ": " + checker.failures.front() + "]";
  }
  const std::string d = std::to_string(props.size()) + " properties, " + std::to_string(all.checks) +
                        " cases, at least 100 each";
  return failed.empty() ? pass(d) : fail(d + "; failed:" + failed);
}

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int only = 0;
  app.add_option("--criterion", only, "run one criterion (1-8)")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {1, "loss oracle equivalence", loss_oracles},
      {2, "gradient check", gradient_check},
      {3, "graph construction", graph_construction},
      {4, "dataset fidelity", dataset_fidelity},
      {5, "overfit probe", overfit},
      {6, "MAMS-ACSA desk-scale reproduction", mams_reproduction},
      {7, "Rest14-hard ablation ordering", ablation_ordering},
      {8, "invariant suite", invariant_suite},
  };

  bool any_fail = false, any_skip = false;
  for (const Criterion& c : criteria) {
    if (only != 0 && c.id != only) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = fail(std::string("error: ") + e.what());
    }
    const char* word = o.status == Status::pass ? "PASS" : o.status == Status::fail ? "FAIL" : "SKIP";
    std::cout << "criterion " << c.id << " (" << c.name << "): " << word << " - " << o.detail << std::endl;
    any_fail = any_fail || o.status == Status::fail;
    any_skip = any_skip || o.status == Status::skip;
  }
  if (any_fail) return 1;
  if (only != 0 && any_skip) return kSkipCode;
  return 0;
}
