#include "scan/dataset.hpp"

#include <filesystem>
#include <iomanip>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

namespace scan {

namespace fs = std::filesystem;

namespace {

void accumulate(LoadStats& into, const LoadStats& from) {
  into.sentences_read += from.sentences_read;
  into.conflict_pairs_dropped += from.conflict_pairs_dropped;
  into.unmapped_pairs_dropped += from.unmapped_pairs_dropped;
  into.empty_sentences_dropped += from.empty_sentences_dropped;
  into.sentences_kept += from.sentences_kept;
}

fs::path require_file(const fs::path& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw DataError("missing " + what + " file " + path.string());
  return path;
}

std::string base_name(const std::string& name) {
  const std::string suffix = "_hard";
  if (name.size() > suffix.size() && name.ends_with(suffix)) return name.substr(0, name.size() - suffix.size());
  return name;
}

}  // namespace

const std::vector<std::string>& dataset_names() {
  static const std::vector<std::string> names = {"rest14", "rest14_hard", "restlarge", "restlarge_hard", "mams_acsa"};
  return names;
}

DatasetInfo dataset_info(const std::string& name) {
  DatasetInfo info;
  info.name = name;
  info.directory = base_name(name);
  info.hard_test = info.directory != name;
  if (info.directory == "rest14") {
    info.dev_targets = {{"positive", 324}, {"negative", 106}, {"neutral", 70}};
  } else if (info.directory == "restlarge") {
    info.merges_years = true;
    info.dev_targets = {{"positive", 646}, {"negative", 242}, {"neutral", 110}};
  } else if (name == "mams_acsa") {
    info.schema = Schema::mams;
    info.dev_file = "val";
  } else {
    std::string known;
    for (const std::string& n : dataset_names()) known += (known.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown dataset '" + name + "' (expected one of: " + known + ")");
  }
  return info;
}

std::vector<RawSplit> load_raw_splits(const std::string& name, const DatasetOptions& options) {
  const DatasetInfo info = dataset_info(name);
  const fs::path dir = fs::path(options.data_dir) / info.directory;
  if (!fs::is_directory(dir)) throw DataError("dataset directory " + dir.string() + " does not exist");

  std::optional<CategoryMap> mapping;
  auto load_split = [&](const std::string& split, LoadStats& stats) {
    std::vector<Example> out = load_semeval(require_file(dir / (split + ".xml"), split).string(), info.schema,
                                            nullptr, &stats);
    if (!info.merges_years) return out;
    for (const char* year : {"2015", "2016"}) {
      const fs::path extra = dir / (split + "_" + year + ".xml");
      if (!fs::is_regular_file(extra)) continue;
      if (!mapping) {
        const fs::path map_path = options.category_map.empty() ? dir / "categories.txt" : fs::path(options.category_map);
        mapping = load_category_map(require_file(map_path, "category map").string());
      }
      LoadStats year_stats;
      std::vector<Example> year_examples = load_semeval(extra.string(), Schema::semeval2016, &*mapping, &year_stats);
      accumulate(stats, year_stats);
      for (Example& ex : year_examples) {
        ex.id = std::string(year) + ":" + ex.id;
        out.push_back(std::move(ex));
      }
    }
    return out;
  };

  std::vector<std::string> splits = {"train"};
  if (!info.dev_file.empty()) {
    splits.push_back(info.dev_file);
  } else if (fs::is_regular_file(dir / "dev.xml")) {
    splits.push_back("dev");
  }
  splits.push_back("test");

  std::vector<RawSplit> raw;
  for (const std::string& split : splits) {
    RawSplit r;
    r.split = split;
    r.examples = load_split(split, r.stats);
    r.trees_path = (dir / (split + ".trees")).string();
    raw.push_back(std::move(r));
  }
  return raw;
}

DatasetBundle load_dataset(const std::string& name, const DatasetOptions& options, DatasetReport* report) {
  const DatasetInfo info = dataset_info(name);
  const fs::path dir = fs::path(options.data_dir) / info.directory;
  if (!fs::is_directory(dir)) throw DataError("dataset directory " + dir.string() + " does not exist");

  DatasetReport local;
  local.name = name;
  DatasetBundle bundle;
  bool has_dev = false;
  for (RawSplit& r : load_raw_splits(name, options)) {
    SplitReport& sr = local.splits[r.split == "val" ? "dev" : r.split];
    sr.load = r.stats;
    if (fs::is_regular_file(r.trees_path)) {
      r.examples = attach_parses(std::move(r.examples), r.trees_path);
      sr.parsed = true;
    } else if (options.require_parses) {
      throw DataError("missing parse file " + r.trees_path + ": expected one bracketed constituency tree per line, " +
                      std::to_string(r.examples.size()) + " lines in total, one for each cleaned sentence of the " +
                      r.split + " split in load order (run the preprocess command to write them to " + r.split +
                      ".sentences.txt)");
    }
    if (r.split == "train") {
      bundle.train = std::move(r.examples);
    } else if (r.split == "test") {
      bundle.test = std::move(r.examples);
    } else {
      bundle.dev = std::move(r.examples);
      has_dev = true;
    }
  }
  if (!has_dev) {
    DevSplit split = split_dev(bundle.train, info.dev_targets, options.dev_seed);
    bundle.train = std::move(split.train);
    bundle.dev = std::move(split.dev);
    local.splits["dev"].parsed = local.splits["train"].parsed;
  }
  if (info.hard_test) {
    local.splits["test_full"].sentences = bundle.test.size();
    local.splits["test_full"].polarities = polarity_counts(bundle.test);
    local.splits["test_full"].parsed = local.splits["test"].parsed;
    bundle.test = build_hard_test(bundle.test);
  }
  bundle.categories = collect_categories({&bundle.train, &bundle.dev, &bundle.test}, true);
  bundle.validate();
  for (const auto& [split, examples] :
       std::map<std::string, const std::vector<Example>*>{{"train", &bundle.train}, {"dev", &bundle.dev},
                                                           {"test", &bundle.test}}) {
    local.splits[split].sentences = examples->size();
    local.splits[split].polarities = polarity_counts(*examples);
  }
  if (report) *report = std::move(local);
  return bundle;
}

DatasetBundle load_prepared_bundle(const std::string& dir) {
  DatasetBundle bundle;
  bundle.train = read_jsonl(require_file(fs::path(dir) / "train.jsonl", "prepared train").string());
  bundle.dev = read_jsonl(require_file(fs::path(dir) / "dev.jsonl", "prepared dev").string());
  bundle.test = read_jsonl(require_file(fs::path(dir) / "test.jsonl", "prepared test").string());
  bundle.categories = collect_categories({&bundle.train, &bundle.dev, &bundle.test}, true);
  bundle.validate();
  return bundle;
}

std::string DatasetReport::table() const {
  std::vector<std::string> columns;
  for (const char* s : {"train", "dev", "test_full", "test"}) {
    if (splits.count(s)) columns.push_back(s);
  }
  std::ostringstream out;
  out << name << "\n" << std::left << std::setw(10) << "polarity";
  for (const std::string& c : columns) out << std::right << std::setw(10) << c;
  out << "\n";
  for (const char* pol : {"positive", "negative", "neutral"}) {
    out << std::left << std::setw(10) << pol;
    for (const std::string& c : columns) {
      const auto& counts = splits.at(c).polarities;
      auto it = counts.find(pol);
      out << std::right << std::setw(10) << (it == counts.end() ? 0 : it->second);
    }
    out << "\n";
  }
  out << std::left << std::setw(10) << "sentences";
  for (const std::string& c : columns) out << std::right << std::setw(10) << splits.at(c).sentences;
  out << "\n";
  return out.str();
}

std::string DatasetReport::json() const {
  nlohmann::ordered_json j;
  j["dataset"] = name;
  for (const auto& [split, r] : splits) {
    nlohmann::ordered_json s;
    s["sentences"] = r.sentences;
    s["parsed"] = r.parsed;
    for (const auto& [pol, count] : r.polarities) s["polarities"][pol] = count;
    s["load"] = {{"sentences_read", r.load.sentences_read},
                 {"conflict_pairs_dropped", r.load.conflict_pairs_dropped},
                 {"unmapped_pairs_dropped", r.load.unmapped_pairs_dropped},
                 {"empty_sentences_dropped", r.load.empty_sentences_dropped},
                 {"sentences_kept", r.load.sentences_kept}};
    j["splits"][split] = s;
  }
  return j.dump(2) + "\n";
}

}  // namespace scan
