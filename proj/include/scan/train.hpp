#pragma once

#include "scan/checkpoint.hpp"
#include "scan/data.hpp"
#include "scan/eval.hpp"
#include "scan/model.hpp"

#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace scan {

/// Raised when training cannot continue, e.g. a non-finite loss.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  int heads = 4;
  int dim = 300;
  double weight_acd = 1.0;  // ε
  double weight_iloss = 1.0;  // η
  double weight_acsa = 1.0;  // μ
  double l2 = 1e-5;  // λ
  int patience = 10;
  int runs = 5;
  int max_epochs = 100;
  std::uint64_t seed = 1;
  Variant variant = Variant::full;
  bool keep_preterminals = false;
  int threads = 1;
  std::string dataset;
  std::string data_dir;
  std::string glove_path;
  std::string out_dir = "runs";

  /// Sets one key from its text form. Throws std::invalid_argument for an
  /// unknown key or an unparsable value.
  void set(const std::string& key, const std::string& value);
  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
  /// Loss weights after applying the variant: no_iloss zeroes η.
  LossWeights loss_weights() const;
  /// Resolved "key = value" lines for every key, in a fixed order.
  std::string to_text() const;

  static std::vector<std::string> keys();
};

/// Reads "key = value" lines. Blank lines and lines starting with '#' are skipped.
TrainConfig parse_train_config(std::istream& in, TrainConfig base = {});
TrainConfig load_train_config(const std::string& path, TrainConfig base = {});

class Adam {
 public:
  Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);
  /// One update from the gradients currently stored in `params`.
  void step(const std::vector<Parameter*>& params);
  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

/// Stops after `patience` consecutive epochs without a strictly better dev metric.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience);
  /// Records the metric of `epoch` and returns true when it is a new best.
  bool update(int epoch, double metric);
  bool should_stop() const { return bad_epochs_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_metric() const { return best_; }

 private:
  int patience_;
  int bad_epochs_ = 0;
  int best_epoch_ = 0;
  double best_ = 0.0;
  bool any_ = false;
};

/// Network-ready splits sharing one vocabulary and label set.
struct PreparedData {
  Vocab vocab = Vocab::from_tokens({"<pad>", "<unk>"});
  std::vector<std::string> categories;
  std::vector<std::string> polarities;
  std::vector<SentenceInput> train, dev, test;
  std::optional<Matrix> pretrained;  // |V|×d embedding rows, when available

  static PreparedData from_bundle(const DatasetBundle& bundle, const GraphOptions& options,
                                  std::size_t min_count = 1);
};

/// Converts `bundle` for training. Loads config.glove_path into
/// PreparedData::pretrained when set and reports its coverage.
PreparedData prepare_data(const DatasetBundle& bundle, const TrainConfig& config, double* coverage = nullptr);

ModelConfig model_config_for(const TrainConfig& config, const PreparedData& data);
/// Fresh parameters for one run; the embedding takes the pretrained rows when present.
ModelParams initial_params(const TrainConfig& config, const PreparedData& data, std::uint64_t seed);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_accuracy = 0.0;
  double dev_acd_f1 = 0.0;
  bool improved = false;
  double seconds = 0.0;
};

struct RunResult {
  ModelParams best;
  ModelParams last;  // parameters after the final epoch
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_dev_accuracy = 0.0;
  bool stopped_early = false;
};

struct RunOptions {
  /// History as JSON Lines, one record per epoch, when non-empty.
  std::string history_path;
  /// Called after every epoch.
  std::function<void(const EpochRecord&)> on_epoch;
  /// Selection set; defaults to PreparedData::dev and falls back to train when dev is empty.
  const std::vector<SentenceInput>* selection = nullptr;
};

/// Adam over shuffled minibatches, early stopping on dev ACSA accuracy.
/// Throws TrainingError when the loss becomes non-finite.
RunResult train_one_run(const TrainConfig& config, const PreparedData& data, ModelParams params,
                        const RunOptions& options = {});

std::string epoch_json(const EpochRecord& record);

struct RunSummary {
  int index = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  double test_accuracy = 0.0;
  double dev_accuracy = 0.0;
  int best_epoch = 0;
  std::string error;
};

struct MultiRunResult {
  std::vector<RunSummary> runs;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation over successful runs
  bool partial = false;  // some runs failed; mean/stddev cover the rest
};

double mean_of(const std::vector<double>& values);
double stddev_of(const std::vector<double>& values);

struct MultiRunOptions {
  /// Per-run output directory root; run i writes history, best.ckpt and last.ckpt under <dir>/run_<i>.
  std::string out_dir;
  std::string dataset_tag;
};

/// config.runs runs with seeds config.seed + i, up to config.threads at a time.
MultiRunResult multi_run(const TrainConfig& config, const PreparedData& data, const MultiRunOptions& options = {});

struct ProbeResult {
  bool passed = false;
  int epochs = 0;
  double final_accuracy = 0.0;
};

/// Trains on `corpus` alone and passes when train ACSA accuracy reaches 1.0
/// within `max_epochs`. Early stopping is disabled.
ProbeResult overfit_probe(const TrainConfig& config, const PreparedData& corpus, int max_epochs = 300);

}  // namespace scan
