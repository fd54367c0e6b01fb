#pragma once

#include <string>
#include <vector>

#include "branchnet/impact.hpp"
#include "branchnet/train.hpp"

namespace branchnet {

// Fixed "%.4f" so runs are byte-comparable.
std::string csv_double(double v);

std::string metrics_csv_header();
std::string to_csv(const MetricsRecord& r);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& rows);
MetricsRecord parse_metrics_row(const std::string& line);

// Per-(config, epoch, split) mean rows with seed = "mean", appended after the
// per-seed rows. Wall-time fields average only when present in every seed.
std::vector<MetricsRecord> append_seed_means(std::vector<MetricsRecord> rows);

std::string impact_csv_header();
std::string to_csv(const ImpactRow& r);
void write_impact_csv(const std::string& path, const std::vector<ImpactRow>& rows);

std::string timing_csv_header();
std::string to_csv(const TimingRow& r);
void write_timing_csv(const std::string& path, const std::vector<TimingRow>& rows);

}  // namespace branchnet
