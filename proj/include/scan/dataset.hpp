#pragma once

#include "scan/data.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace scan {

/// On-disk layout of one named dataset below the data directory.
///
///   rest14/         train.xml test.xml [dev.xml]          (semeval2014 schema)
///   restlarge/      train.xml test.xml [dev.xml]          (semeval2014 schema)
///                   [train_2015.xml train_2016.xml test_2015.xml test_2016.xml]  (semeval2016 schema)
///   mams_acsa/      train.xml val.xml test.xml            (mams schema)
///
/// Each split <s> has a parse file <s>.trees holding one bracketed tree per
/// sentence that survives cleanup, in load order. The *_hard names share the
/// directory of their base dataset and filter the test split.
struct DatasetInfo {
  std::string name;
  std::string directory;
  Schema schema = Schema::semeval2014;
  bool hard_test = false;
  bool merges_years = false;
  std::string dev_file;  // split file name without extension; empty when dev is carved out of train
  std::map<std::string, std::size_t> dev_targets;
};

const std::vector<std::string>& dataset_names();
/// Throws std::invalid_argument for an unknown name.
DatasetInfo dataset_info(const std::string& name);

struct DatasetOptions {
  std::string data_dir;
  std::uint64_t dev_seed = 1;
  /// Category map for the 2015/2016 files; defaults to <dir>/categories.txt.
  std::string category_map;
  /// When false, missing .trees files leave parses empty instead of failing.
  bool require_parses = true;
};

struct SplitReport {
  LoadStats load;
  std::size_t sentences = 0;
  std::map<std::string, std::size_t> polarities;
  bool parsed = false;
};

struct DatasetReport {
  std::string name;
  std::map<std::string, SplitReport> splits;  // train, dev, test and, for hard sets, the unfiltered test as "test_full"
  /// Polarity × split table in the layout of the usual dataset statistics table.
  std::string table() const;
  std::string json() const;
};

/// Loads, cleans, parses and splits one dataset. Throws DataError with an
/// actionable message when a file is missing.
DatasetBundle load_dataset(const std::string& name, const DatasetOptions& options, DatasetReport* report = nullptr);

/// Raw split files with their cleaned sentence lists, used by preprocess to
/// tell the caller what to parse.
struct RawSplit {
  std::string split;
  std::vector<Example> examples;
  LoadStats stats;
  std::string trees_path;
};
std::vector<RawSplit> load_raw_splits(const std::string& name, const DatasetOptions& options);

/// Reads train.jsonl, dev.jsonl and test.jsonl written by preprocess.
/// Categories are collected from all three splits in sorted order.
DatasetBundle load_prepared_bundle(const std::string& dir);

}  // namespace scan
