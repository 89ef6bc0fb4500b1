#include "scan/train.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace scan {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw std::invalid_argument("config key '" + key + "': cannot parse '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw std::invalid_argument("config key '" + key + "': expected true or false, got '" + value + "'");
}

std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::vector<std::string> TrainConfig::keys() {
  return {"learning_rate", "batch_size",  "heads",   "dim",     "weight_acd",        "weight_iloss", "weight_acsa",
          "l2",            "patience",    "runs",    "max_epochs", "seed",           "variant",      "keep_preterminals",
          "threads",       "dataset",     "data_dir", "glove_path", "out_dir"};
}

void TrainConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "learning_rate") learning_rate = parse_number<double>(key, value);
  else if (key == "batch_size") batch_size = parse_number<std::size_t>(key, value);
  else if (key == "heads") heads = parse_number<int>(key, value);
  else if (key == "dim") dim = parse_number<int>(key, value);
  else if (key == "weight_acd") weight_acd = parse_number<double>(key, value);
  else if (key == "weight_iloss") weight_iloss = parse_number<double>(key, value);
  else if (key == "weight_acsa") weight_acsa = parse_number<double>(key, value);
  else if (key == "l2") l2 = parse_number<double>(key, value);
  else if (key == "patience") patience = parse_number<int>(key, value);
  else if (key == "runs") runs = parse_number<int>(key, value);
  else if (key == "max_epochs") max_epochs = parse_number<int>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "variant") variant = parse_variant(value);
  else if (key == "keep_preterminals") keep_preterminals = parse_bool(key, value);
  else if (key == "threads") threads = parse_number<int>(key, value);
  else if (key == "dataset") dataset = value;
  else if (key == "data_dir") data_dir = value;
  else if (key == "glove_path") glove_path = value;
  else if (key == "out_dir") out_dir = value;
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("invalid config: " + what); };
  if (!(learning_rate >= 0.0)) fail("learning_rate must be ≥ 0");
  if (batch_size == 0) fail("batch_size must be ≥ 1");
  if (weight_acd < 0 || weight_iloss < 0 || weight_acsa < 0 || l2 < 0) fail("loss weights must be ≥ 0");
  if (patience < 1) fail("patience must be ≥ 1");
  if (runs < 1) fail("runs must be ≥ 1");
  if (max_epochs < 1) fail("max_epochs must be ≥ 1");
  if (threads < 1) fail("threads must be ≥ 1");
  if (heads < 1 || dim < 1 || dim % heads != 0) fail("dim must be a positive multiple of heads");
}

LossWeights TrainConfig::loss_weights() const {
  LossWeights w{weight_acd, weight_iloss, weight_acsa, l2};
  if (variant == Variant::no_iloss) w.iloss = 0.0;
  return w;
}

std::string TrainConfig::to_text() const {
  std::ostringstream s;
  s << "learning_rate = " << format_double(learning_rate) << "\n"
    << "batch_size = " << batch_size << "\n"
    << "heads = " << heads << "\n"
    << "dim = " << dim << "\n"
    << "weight_acd = " << format_double(weight_acd) << "\n"
    << "weight_iloss = " << format_double(weight_iloss) << "\n"
    << "weight_acsa = " << format_double(weight_acsa) << "\n"
    << "l2 = " << format_double(l2) << "\n"
    << "patience = " << patience << "\n"
    << "runs = " << runs << "\n"
    << "max_epochs = " << max_epochs << "\n"
    << "seed = " << seed << "\n"
    << "variant = " << to_string(variant) << "\n"
    << "keep_preterminals = " << (keep_preterminals ? "true" : "false") << "\n"
    << "threads = " << threads << "\n"
    << "dataset = " << dataset << "\n"
    << "data_dir = " << data_dir << "\n"
    << "glove_path = " << glove_path << "\n"
    << "out_dir = " << out_dir << "\n";
  return s.str();
}

TrainConfig parse_train_config(std::istream& in, TrainConfig base) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(number) + ": expected key = value");
    }
    try {
      base.set(trim(std::string_view(t).substr(0, eq)), std::string(t.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(number) + ": " + e.what());
    }
  }
  return base;
}

TrainConfig load_train_config(const std::string& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path);
  return parse_train_config(in, std::move(base));
}

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void Adam::step(const std::vector<Parameter*>& params) {
  if (m_.empty()) {
    for (const Parameter* p : params) {
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (m_.size() != params.size()) throw std::invalid_argument("Adam: parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

EarlyStopper::EarlyStopper(int patience) : patience_(patience) {
  if (patience < 1) throw std::invalid_argument("EarlyStopper: patience must be ≥ 1");
}

bool EarlyStopper::update(int epoch, double metric) {
  if (!any_ || metric > best_) {
    any_ = true;
    best_ = metric;
    best_epoch_ = epoch;
    bad_epochs_ = 0;
    return true;
  }
  ++bad_epochs_;
  return false;
}

PreparedData PreparedData::from_bundle(const DatasetBundle& bundle, const GraphOptions& options,
                                       std::size_t min_count) {
  bundle.validate();
  PreparedData d;
  d.vocab = Vocab::build(bundle.train, min_count);
  d.categories = bundle.categories;
  d.polarities = bundle.polarities;
  auto convert = [&](const std::vector<Example>& split, std::vector<SentenceInput>& out) {
    out.reserve(split.size());
    for (const Example& ex : split) out.push_back(to_sentence_input(ex, d.vocab, d.categories, d.polarities, options));
  };
  convert(bundle.train, d.train);
  convert(bundle.dev, d.dev);
  convert(bundle.test, d.test);
  return d;
}

PreparedData prepare_data(const DatasetBundle& bundle, const TrainConfig& config, double* coverage) {
  PreparedData d = PreparedData::from_bundle(bundle, GraphOptions{config.keep_preterminals});
  if (!config.glove_path.empty()) {
    PretrainedEmbeddings e = load_pretrained_embeddings(d.vocab, config.glove_path, config.dim, config.seed);
    if (coverage) *coverage = e.coverage;
    d.pretrained = std::move(e.matrix);
  }
  return d;
}

ModelConfig model_config_for(const TrainConfig& config, const PreparedData& data) {
  ModelConfig m;
  m.vocab_size = static_cast<int>(data.vocab.size());
  m.dim = config.dim;
  m.heads = config.heads;
  m.num_categories = static_cast<int>(data.categories.size());
  m.num_polarities = static_cast<int>(data.polarities.size());
  m.validate();
  return m;
}

ModelParams initial_params(const TrainConfig& config, const PreparedData& data, std::uint64_t seed) {
  ModelParams p = ModelParams::init(model_config_for(config, data), seed);
  if (data.pretrained) {
    if (data.pretrained->rows() != p.embedding.value.rows() || data.pretrained->cols() != p.embedding.value.cols()) {
      throw std::invalid_argument("pretrained embedding shape does not match vocabulary size × dim");
    }
    p.embedding.value = *data.pretrained;
  }
  return p;
}

namespace {

// One pass over `train` in a seeded order. Returns the mean batch objective.
double run_epoch(ModelParams& params, Adam& adam, const std::vector<SentenceInput>& train, const TrainConfig& config,
                 std::uint64_t order_seed, int epoch) {
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(order_seed);
  std::shuffle(order.begin(), order.end(), rng);
  const LossWeights weights = config.loss_weights();
  const auto all = params.all();
  double total = 0.0;
  std::size_t batches = 0;
  std::vector<SentenceInput> chunk;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t end = std::min(order.size(), start + config.batch_size);
    chunk.clear();
    for (std::size_t k = start; k < end; ++k) chunk.push_back(train[order[k]]);
    const Batch batch = Batch::assemble(chunk);
    params.zero_grad();
    Tape tape;
    const Var loss = batch_objective(tape, params, batch, config.variant, weights);
    const double value = tape.scalar(loss);
    if (!std::isfinite(value)) {
      throw TrainingError("training diverged: loss is " + std::to_string(value) + " at epoch " +
                          std::to_string(epoch) + ", batch " + std::to_string(batches + 1));
    }
    tape.backward(loss);
    adam.step(all);
    total += value;
    ++batches;
  }
  return batches ? total / static_cast<double>(batches) : 0.0;
}

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  return seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(epoch);
}

}  // namespace

std::string epoch_json(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["dev_accuracy"] = r.dev_accuracy;
  j["dev_acd_f1"] = r.dev_acd_f1;
  j["improved"] = r.improved;
  j["seconds"] = r.seconds;
  return j.dump();
}

RunResult train_one_run(const TrainConfig& config, const PreparedData& data, ModelParams params,
                        const RunOptions& options) {
  config.validate();
  if (data.train.empty()) throw TrainingError("training split is empty");
  const std::vector<SentenceInput>& selection =
      options.selection ? *options.selection : (data.dev.empty() ? data.train : data.dev);
  std::ofstream history;
  if (!options.history_path.empty()) {
    history.open(options.history_path, std::ios::binary);
    if (!history) throw TrainingError("cannot write " + options.history_path);
  }
  Adam adam(config.learning_rate);
  EarlyStopper stopper(config.patience);
  RunResult result;
  result.best = params;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = run_epoch(params, adam, data.train, config, epoch_seed(config.seed, epoch), epoch);
    const EvalResult dev = evaluate(params, selection, config.variant, {.joint = false, .batch_size = 64});
    record.dev_accuracy = dev.acsa_accuracy;
    record.dev_acd_f1 = dev.acd.f1;
    record.improved = stopper.update(epoch, dev.acsa_accuracy);
    if (record.improved) result.best = params;
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.history.push_back(record);
    if (history) history << epoch_json(record) << '\n' << std::flush;
    if (options.on_epoch) options.on_epoch(record);
    if (stopper.should_stop()) {
      result.stopped_early = true;
      break;
    }
  }
  result.best_epoch = stopper.best_epoch();
  result.best_dev_accuracy = stopper.best_metric();
  result.best.zero_grad();
  result.last = std::move(params);
  result.last.zero_grad();
  return result;
}

double mean_of(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("mean of an empty set");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double stddev_of(const std::vector<double>& values) {
  const double mu = mean_of(values);
  double sq = 0.0;
  for (double v : values) sq += (v - mu) * (v - mu);
  return std::sqrt(sq / static_cast<double>(values.size()));
}

MultiRunResult multi_run(const TrainConfig& config, const PreparedData& data, const MultiRunOptions& options) {
  config.validate();
  if (data.test.empty()) throw TrainingError("test split is empty");
  MultiRunResult result;
  result.runs.resize(static_cast<std::size_t>(config.runs));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < config.runs; i = next++) {
      RunSummary& summary = result.runs[static_cast<std::size_t>(i)];
      summary.index = i;
      summary.seed = config.seed + static_cast<std::uint64_t>(i);
      try {
        TrainConfig run_config = config;
        run_config.seed = summary.seed;
        RunOptions run_options;
        std::filesystem::path dir;
        if (!options.out_dir.empty()) {
          dir = std::filesystem::path(options.out_dir) / ("run_" + std::to_string(i));
          std::filesystem::create_directories(dir);
          run_options.history_path = (dir / "history.jsonl").string();
          std::ofstream(dir / "config.resolved.txt") << run_config.to_text();
        }
        RunResult run = train_one_run(run_config, data, initial_params(run_config, data, summary.seed), run_options);
        summary.test_accuracy = evaluate(run.best, data.test, config.variant).acsa_accuracy;
        summary.dev_accuracy = run.best_dev_accuracy;
        summary.best_epoch = run.best_epoch;
        if (!dir.empty()) {
          Checkpoint ck{run.best, data.vocab, data.categories, data.polarities, config.variant, config.keep_preterminals};
          save_checkpoint(ck, (dir / "best.ckpt").string());
          ck.params = std::move(run.last);
          save_checkpoint(ck, (dir / "last.ckpt").string());
        }
        summary.ok = true;
      } catch (const std::exception& e) {
        summary.error = e.what();
      }
    }
  };
  const int threads = std::min(config.threads, config.runs);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  std::vector<double> accuracies;
  for (const RunSummary& r : result.runs) {
    if (r.ok) accuracies.push_back(r.test_accuracy);
  }
  if (accuracies.empty()) throw TrainingError("all runs failed; first error: " + result.runs.front().error);
  result.partial = accuracies.size() != result.runs.size();
  result.mean = mean_of(accuracies);
  result.stddev = stddev_of(accuracies);
  return result;
}

ProbeResult overfit_probe(const TrainConfig& config, const PreparedData& corpus, int max_epochs) {
  if (corpus.train.empty()) throw std::invalid_argument("overfit_probe: empty corpus");
  ModelParams params = initial_params(config, corpus, config.seed);
  Adam adam(config.learning_rate);
  ProbeResult result;
  for (int epoch = 1; epoch <= max_epochs; ++epoch) {
    run_epoch(params, adam, corpus.train, config, epoch_seed(config.seed, epoch), epoch);
    result.epochs = epoch;
    result.final_accuracy = evaluate(params, corpus.train, config.variant).acsa_accuracy;
    if (result.final_accuracy == 1.0) {
      result.passed = true;
      break;
    }
  }
  return result;
}

}  // namespace scan
