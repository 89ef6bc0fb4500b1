#pragma once

#include "scan/train.hpp"

#include <optional>
#include <string>
#include <vector>

namespace scan {

struct AblationRow {
  std::string dataset;
  Variant variant = Variant::full;
  std::vector<double> accuracies;  // successful runs, in run order
  double mean = 0.0;
  double stddev = 0.0;
  bool partial = false;
  std::optional<double> reference;  // published mean accuracy as a fraction, when known
};

struct AblationTable {
  std::vector<AblationRow> rows;

  std::string csv() const;
  std::string json() const;
  const AblationRow& row(Variant variant) const;
};

/// Published mean accuracy (fraction) for the dataset and variant, when available.
std::optional<double> reference_accuracy(const std::string& dataset, Variant variant);

/// Trains every variant with `base` (its variant field is ignored) and
/// returns one row per variant in the order full, no_iloss, no_tree. Each
/// variant writes its runs under <out_dir>/<variant> when out_dir is set.
/// Training failures propagate.
AblationTable run_ablation_suite(const std::string& dataset, const TrainConfig& base, const PreparedData& data,
                                 const std::string& out_dir = {});

}  // namespace scan
