#include "scan/ablation.hpp"

#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

namespace scan {

std::optional<double> reference_accuracy(const std::string& dataset, Variant variant) {
  static const std::map<std::string, std::map<Variant, double>> table = {
      {"rest14_hard", {{Variant::full, 0.68302}, {Variant::no_iloss, 0.65660}, {Variant::no_tree, 0.62264}}},
      {"mams_acsa", {{Variant::full, 0.75405}, {Variant::no_iloss, 0.74828}, {Variant::no_tree, 0.76582}}},
  };
  auto d = table.find(dataset);
  if (d == table.end()) return std::nullopt;
  auto v = d->second.find(variant);
  if (v == d->second.end()) return std::nullopt;
  return v->second;
}

const AblationRow& AblationTable::row(Variant variant) const {
  for (const AblationRow& r : rows) {
    if (r.variant == variant) return r;
  }
  throw std::out_of_range("ablation table has no row for " + to_string(variant));
}

namespace {

std::string shortest(double v) {
  std::array<char, 32> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), r.ptr);
}

}  // namespace

std::string AblationTable::csv() const {
  std::ostringstream out;
  out << "dataset,variant,runs,mean,stddev,partial,reference\n";
  for (const AblationRow& r : rows) {
    out << r.dataset << ',' << to_string(r.variant) << ',' << r.accuracies.size() << ',' << shortest(r.mean) << ','
        << shortest(r.stddev) << ',' << (r.partial ? "true" : "false") << ',';
    if (r.reference) out << shortest(*r.reference);
    out << '\n';
  }
  return out.str();
}

std::string AblationTable::json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const AblationRow& r : rows) {
    nlohmann::ordered_json row;
    row["dataset"] = r.dataset;
    row["variant"] = to_string(r.variant);
    row["accuracies"] = r.accuracies;
    row["mean"] = r.mean;
    row["stddev"] = r.stddev;
    row["partial"] = r.partial;
    row["reference"] = r.reference ? nlohmann::ordered_json(*r.reference) : nlohmann::ordered_json();
    j.push_back(row);
  }
  return j.dump(2) + "\n";
}

AblationTable run_ablation_suite(const std::string& dataset, const TrainConfig& base, const PreparedData& data,
                                 const std::string& out_dir) {
  AblationTable table;
  for (Variant variant : {Variant::full, Variant::no_iloss, Variant::no_tree}) {
    TrainConfig config = base;
    config.variant = variant;
    MultiRunOptions options;
    options.dataset_tag = dataset;
    if (!out_dir.empty()) options.out_dir = (std::filesystem::path(out_dir) / to_string(variant)).string();
    const MultiRunResult result = multi_run(config, data, options);
    AblationRow row;
    row.dataset = dataset;
    row.variant = variant;
    for (const RunSummary& run : result.runs) {
      if (run.ok) row.accuracies.push_back(run.test_accuracy);
    }
    row.mean = result.mean;
    row.stddev = result.stddev;
    row.partial = result.partial;
    row.reference = reference_accuracy(dataset, variant);
    table.rows.push_back(std::move(row));
  }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream(std::filesystem::path(out_dir) / "ablation.csv") << table.csv();
    std::ofstream(std::filesystem::path(out_dir) / "ablation.json") << table.json();
  }
  return table;
}

}  // namespace scan
