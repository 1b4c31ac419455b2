#include <fmt/format.h>

#include <fstream>

#include "drps/errors.hpp"
#include "drps/harness.hpp"

namespace drps {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw Error(fmt::format("cannot create directory {}: {}", path.parent_path().string(), ec.message()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot open {} for writing", path.string()));
  out << text;
  out.flush();
  if (!out) throw Error(fmt::format("write to {} failed", path.string()));
}

std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void write_learning_curve_csv(const std::vector<LearningCurveRecord>& records, const std::filesystem::path& path) {
  std::string text = "seed,epoch,episodes,mean_return,kl,entropy\n";
  for (const auto& r : records)
    text += fmt::format("{},{},{},{},{},{}\n", r.seed, r.epoch, r.episodes, r.mean_return, r.kl, r.entropy);
  write_text(path, text);
}

void write_aggregate_csv(const std::vector<AggregateRecord>& rows, const std::filesystem::path& path) {
  std::string text = "epoch,episodes,mean,ci95_low,ci95_high,n_seeds,failures\n";
  for (const auto& r : rows) {
    const std::string low = r.ci95 ? fmt::format("{}", r.ci95->first) : "";
    const std::string high = r.ci95 ? fmt::format("{}", r.ci95->second) : "";
    text += fmt::format("{},{},{},{},{},{},{}\n", r.epoch, r.episodes, r.mean, low, high, r.n_seeds, r.failures);
  }
  write_text(path, text);
}

void write_plot_data(const std::vector<AggregateRecord>& rows, const std::filesystem::path& path) {
  std::string text = "# epoch episodes mean ci95_low ci95_high\n";
  for (const auto& r : rows) {
    const double low = r.ci95 ? r.ci95->first : r.mean;
    const double high = r.ci95 ? r.ci95->second : r.mean;
    text += fmt::format("{} {} {} {} {}\n", r.epoch, r.episodes, r.mean, low, high);
  }
  write_text(path, text);
}

void write_failures_csv(const std::vector<FailureRecord>& failures, const std::filesystem::path& path) {
  std::string text = "seed,epoch,message\n";
  for (const auto& f : failures) text += fmt::format("{},{},{}\n", f.seed, f.epoch, quote(f.message));
  write_text(path, text);
}

void write_precision_recall_csv(const std::vector<PrecisionRecallRecord>& records, const std::filesystem::path& path) {
  std::string text = "seed,epoch,m,metric,precision,recall\n";
  for (const auto& r : records)
    text += fmt::format("{},{},{},{},{},{}\n", r.seed, r.epoch, r.m, to_string(r.metric), r.precision, r.recall);
  write_text(path, text);
}

void write_mi_bench_csv(const std::vector<MiBenchRecord>& records, const std::filesystem::path& path) {
  std::string text = "estimator,sample_count,seed,estimate,analytic_value,abs_error,error\n";
  for (const auto& r : records)
    text += fmt::format("{},{},{},{},{},{},{}\n", r.estimator, r.sample_count, r.seed, r.estimate, r.analytic_value,
                        r.abs_error, quote(r.error));
  write_text(path, text);
}

void emit_outputs(const ExperimentResult& result, const std::filesystem::path& dir) {
  const auto rows = aggregate(result);
  write_learning_curve_csv(result.records, dir / "learning_curve.csv");
  write_aggregate_csv(rows, dir / "aggregate.csv");
  write_failures_csv(result.failures, dir / "failures.csv");
  write_plot_data(rows, dir / "plot.dat");
}

}  // namespace drps
