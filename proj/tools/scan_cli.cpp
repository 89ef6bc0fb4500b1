#include "scan/ablation.hpp"
#include "scan/checkpoint.hpp"
#include "scan/dataset.hpp"
#include "scan/eval.hpp"
#include "scan/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

namespace fs = std::filesystem;
using namespace scan;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kDataError = 2, kTrainingFailure = 3 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

/// Config file, per-key flags and --set overrides, applied in that order.
struct ConfigOptions {
  std::string config_path;
  std::map<std::string, std::string> flags;
  std::vector<std::string> sets;
  bool keep_preterminals = false;
  std::string category_map;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    for (const std::string& key : TrainConfig::keys()) {
      if (key == "keep_preterminals") continue;
      app.add_option("--" + dashed(key), flags[key], "override " + key);
    }
    app.add_flag("--keep-preterminals", keep_preterminals, "keep part-of-speech preterminals as internal nodes");
    app.add_option("--set", sets, "override any config key as key=value");
    app.add_option("--category-map", category_map, "category map for 2015/2016 files (restlarge)");
  }

  TrainConfig resolve() const {
    TrainConfig c = config_path.empty() ? TrainConfig{} : load_train_config(config_path);
    for (const auto& [key, value] : flags) {
      if (!value.empty()) c.set(key, value);
    }
    if (keep_preterminals) c.keep_preterminals = true;
    for (const std::string& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    c.validate();
    return c;
  }
};

DatasetBundle load_bundle(const TrainConfig& c, const std::string& category_map) {
  if (c.data_dir.empty()) throw UsageError("no data directory: pass --data-dir or set data_dir in the config");
  if (fs::is_regular_file(fs::path(c.data_dir) / "train.jsonl")) return load_prepared_bundle(c.data_dir);
  if (c.dataset.empty()) throw UsageError("no dataset: pass --dataset or set dataset in the config");
  DatasetOptions o;
  o.data_dir = c.data_dir;
  o.category_map = category_map;
  return load_dataset(c.dataset, o);
}

std::string dataset_tag(const TrainConfig& c) { return c.dataset.empty() ? "prepared" : c.dataset; }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

// preprocess

struct PreprocessArgs {
  std::string dataset, data_dir, out_dir, category_map;
  std::uint64_t dev_seed = 1;
};

int run_preprocess(const PreprocessArgs& a) {
  DatasetOptions o;
  o.data_dir = a.data_dir;
  o.dev_seed = a.dev_seed;
  o.category_map = a.category_map;
  const DatasetInfo info = dataset_info(a.dataset);
  const fs::path out = a.out_dir;
  fs::create_directories(out);

  std::vector<std::string> missing;
  for (const RawSplit& r : load_raw_splits(info.directory, o)) {
    std::string sentences;
    for (const Example& ex : r.examples) sentences += ex.text + "\n";
    write_text(out / (r.split + ".sentences.txt"), sentences);
    if (!fs::is_regular_file(r.trees_path)) {
      missing.push_back(r.trees_path + " (" + std::to_string(r.examples.size()) + " trees for " +
                        (out / (r.split + ".sentences.txt")).string() + ")");
    }
  }
  if (!missing.empty()) {
    std::string message = "missing parse files; each must hold one bracketed constituency tree per line, such as "
                          "\"(S (NP (DT the) (NN food)) (VP (VBD was) (ADJP (JJ great))))\", aligned with the "
                          "sentence list written next to the outputs:";
    for (const std::string& m : missing) message += "\n  " + m;
    throw DataError(message);
  }

  DatasetReport report;
  const DatasetBundle bundle = load_dataset(info.directory, o, &report);
  const std::vector<Example> hard = build_hard_test(bundle.test);
  report.splits["test_hard"].sentences = hard.size();
  report.splits["test_hard"].polarities = polarity_counts(hard);
  report.splits["test_hard"].parsed = true;
  write_jsonl((out / "train.jsonl").string(), bundle.train);
  write_jsonl((out / "dev.jsonl").string(), bundle.dev);
  write_jsonl((out / "test.jsonl").string(), bundle.test);
  write_jsonl((out / "test_hard.jsonl").string(), hard);

  std::string table = report.table();
  const auto& hc = report.splits["test_hard"].polarities;
  auto count = [&](const char* p) { return hc.count(p) ? hc.at(p) : 0; };
  table += "test_hard positive=" + std::to_string(count("positive")) + " negative=" +
           std::to_string(count("negative")) + " neutral=" + std::to_string(count("neutral")) + "\n";
  write_text(out / "stats.txt", table);
  write_text(out / "stats.json", report.json());
  write_text(out / "preprocess.resolved.txt", "dataset = " + a.dataset + "\ndata_dir = " + a.data_dir +
                                                  "\ndev_seed = " + std::to_string(a.dev_seed) +
                                                  "\ncategory_map = " + a.category_map + "\n");
  std::cout << table;
  return kOk;
}

// train

int run_train(const ConfigOptions& opts) {
  const TrainConfig c = opts.resolve();
  const DatasetBundle bundle = load_bundle(c, opts.category_map);
  double coverage = 0.0;
  const PreparedData data = prepare_data(bundle, c, &coverage);
  const fs::path out = fs::path(c.out_dir) / dataset_tag(c) / to_string(c.variant);
  fs::create_directories(out);
  write_text(out / "config.resolved.txt", c.to_text());
  if (!c.glove_path.empty()) std::cerr << "embedding coverage " << coverage << "\n";

  MultiRunOptions mo;
  mo.out_dir = out.string();
  mo.dataset_tag = dataset_tag(c);
  const MultiRunResult result = multi_run(c, data, mo);
  nlohmann::ordered_json j;
  j["dataset"] = dataset_tag(c);
  j["variant"] = to_string(c.variant);
  j["mean"] = result.mean;
  j["stddev"] = result.stddev;
  j["partial"] = result.partial;
  for (const RunSummary& r : result.runs) {
    nlohmann::ordered_json run{{"index", r.index}, {"seed", r.seed}, {"ok", r.ok}};
    if (r.ok) {
      run["test_accuracy"] = r.test_accuracy;
      run["dev_accuracy"] = r.dev_accuracy;
      run["best_epoch"] = r.best_epoch;
    } else {
      run["error"] = r.error;
    }
    j["runs"].push_back(run);
  }
  write_text(out / "summary.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return result.partial ? kTrainingFailure : kOk;
}

// eval

struct EvalArgs {
  std::string checkpoint, data, split = "test", out;
  bool joint = false;
};

std::vector<Example> load_split(const std::string& data, const std::string& split) {
  fs::path p = data;
  if (fs::is_directory(p)) p /= split + ".jsonl";
  return read_jsonl(p.string());
}

int run_eval(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const std::vector<Example> examples = load_split(a.data, a.split);
  std::vector<SentenceInput> inputs;
  for (const Example& ex : examples) {
    inputs.push_back(to_sentence_input(ex, ck.vocab, ck.categories, ck.polarities, {ck.keep_preterminals}));
  }
  EvalOptions eo;
  eo.joint = a.joint;
  const EvalResult r = evaluate(ck.params, inputs, ck.variant, eo);
  nlohmann::ordered_json j;
  j["checkpoint"] = a.checkpoint;
  j["split"] = a.split;
  j["variant"] = to_string(ck.variant);
  j["joint"] = a.joint;
  j["acsa_accuracy"] = r.acsa_accuracy;
  j["pairs"] = r.pairs;
  j["correct"] = r.correct;
  j["acd"] = {{"precision", r.acd.precision}, {"recall", r.acd.recall},
              {"f1", r.acd.f1}, {"precision_defined", r.acd.precision_defined},
              {"recall_defined", r.acd.recall_defined}};
  if (!a.out.empty()) write_text(a.out, j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return kOk;
}

// predict and visualize

struct PredictArgs {
  std::string checkpoint, sentence, parse, out_dir;
};

Example example_from_parse(const std::string& id, const std::string& sentence, const std::string& parse) {
  Example ex;
  ex.id = id;
  ex.parse = parse;
  ex.tokens = leaves(parse_bracketed(parse));
  ex.text = sentence;
  if (ex.text.empty()) {
    for (const std::string& t : ex.tokens) ex.text += (ex.text.empty() ? "" : " ") + t;
  }
  return ex;
}

int run_predict(const PredictArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  if (a.parse.empty()) throw UsageError("--parse is required: pass the sentence's bracketed constituency tree");
  const Example ex = example_from_parse("input", a.sentence, a.parse);
  const AttentionDump d = make_attention_dump(ck.params, ex, ck.vocab, ck.categories, ck.polarities, ck.variant,
                                              {ck.keep_preterminals});
  nlohmann::ordered_json j;
  j["text"] = ex.text;
  j["categories"] = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < d.categories.size(); ++c) {
    if (!d.predicted[c]) continue;
    nlohmann::ordered_json entry;
    entry["category"] = d.categories[c];
    entry["polarity"] = *d.predicted[c];
    entry["probability"] = d.acd_probabilities(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c));
    std::vector<double> beta(d.beta.row(static_cast<Eigen::Index>(c)).begin(),
                             d.beta.row(static_cast<Eigen::Index>(c)).end());
    entry["beta"] = beta;
    j["categories"].push_back(entry);
  }
  if (!a.out_dir.empty()) {
    write_attention_json(d, (fs::path(a.out_dir) / "attention.json").string());
    write_attention_svg(d, (fs::path(a.out_dir) / "attention.svg").string());
  }
  std::cout << j.dump(2) << "\n";
  return kOk;
}

struct VisualizeArgs {
  std::string checkpoint, data, split = "test", id, out_dir = "attention";
  std::optional<std::size_t> index;
};

int run_visualize(const VisualizeArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const std::vector<Example> examples = load_split(a.data, a.split);
  std::vector<const Example*> chosen;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if ((a.id.empty() && !a.index) || examples[i].id == a.id || a.index == i) chosen.push_back(&examples[i]);
  }
  if (chosen.empty()) throw UsageError("no example matches the requested --id/--index in " + a.data);
  for (const Example* ex : chosen) {
    const AttentionDump d = make_attention_dump(ck.params, *ex, ck.vocab, ck.categories, ck.polarities, ck.variant,
                                                {ck.keep_preterminals});
    std::string stem = ex->id;
    std::replace_if(stem.begin(), stem.end(), [](char ch) { return !std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_'; }, '_');
    write_attention_json(d, (fs::path(a.out_dir) / (stem + ".json")).string());
    write_attention_svg(d, (fs::path(a.out_dir) / (stem + ".svg")).string());
  }
  std::cout << "wrote " << chosen.size() << " attention dumps to " << a.out_dir << "\n";
  return kOk;
}

// ablate

int run_ablate(const ConfigOptions& opts) {
  const TrainConfig c = opts.resolve();
  const DatasetBundle bundle = load_bundle(c, opts.category_map);
  const PreparedData data = prepare_data(bundle, c);
  const fs::path out = fs::path(c.out_dir) / dataset_tag(c) / "ablation";
  fs::create_directories(out);
  write_text(out / "config.resolved.txt", c.to_text());
  const AblationTable table = run_ablation_suite(dataset_tag(c), c, data, out.string());
  std::cout << table.csv();
  for (const AblationRow& r : table.rows) {
    if (r.partial) return kTrainingFailure;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aspect-category sentiment analysis over constituency graphs"};
  app.require_subcommand(1);

  PreprocessArgs pre;
  auto* preprocess = app.add_subcommand("preprocess", "clean, parse-align and split a raw dataset into JSONL");
  preprocess->add_option("--dataset", pre.dataset, "dataset name")->required();
  preprocess->add_option("--data-dir", pre.data_dir, "raw data root")->required();
  preprocess->add_option("--out-dir", pre.out_dir, "output directory")->required();
  preprocess->add_option("--dev-seed", pre.dev_seed, "seed for carving dev out of train");
  preprocess->add_option("--category-map", pre.category_map, "category map for 2015/2016 files");

  ConfigOptions train_opts, ablate_opts;
  auto* train = app.add_subcommand("train", "train several seeded runs and report mean test accuracy");
  train_opts.attach(*train);
  auto* ablate = app.add_subcommand("ablate", "train every variant and write a comparison table");
  ablate_opts.attach(*ablate);

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a prepared split");
  eval->add_option("--checkpoint", ev.checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", ev.data, "prepared directory or JSONL file")->required()->check(CLI::ExistingPath);
  eval->add_option("--split", ev.split, "split name inside a prepared directory");
  eval->add_flag("--joint", ev.joint, "score only detected categories");
  eval->add_option("--out", ev.out, "write the metrics JSON here");

  PredictArgs pr;
  auto* predict = app.add_subcommand("predict", "detect categories and their polarities for one parsed sentence");
  predict->add_option("--checkpoint", pr.checkpoint)->required()->check(CLI::ExistingFile);
  predict->add_option("--parse", pr.parse, "bracketed constituency tree of the sentence")->required();
  predict->add_option("--sentence", pr.sentence, "raw sentence text, defaults to the tree leaves");
  predict->add_option("--out-dir", pr.out_dir, "also write attention.json and attention.svg here");

  VisualizeArgs vi;
  auto* visualize = app.add_subcommand("visualize", "write attention dumps and heatmaps for prepared examples");
  visualize->add_option("--checkpoint", vi.checkpoint)->required()->check(CLI::ExistingFile);
  visualize->add_option("--data", vi.data, "prepared directory or JSONL file")->required()->check(CLI::ExistingPath);
  visualize->add_option("--split", vi.split, "split name inside a prepared directory");
  visualize->add_option("--id", vi.id, "example id");
  visualize->add_option("--index", vi.index, "example position");
  visualize->add_option("--out-dir", vi.out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*preprocess) return run_preprocess(pre);
    if (*train) return run_train(train_opts);
    if (*ablate) return run_ablate(ablate_opts);
    if (*eval) return run_eval(ev);
    if (*predict) return run_predict(pr);
    if (*visualize) return run_visualize(vi);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kDataError;
  } catch (const TrainingError& e) {
    std::cerr << "training failure: " << e.what() << "\n";
    return kTrainingFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}
