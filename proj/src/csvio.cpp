#include "branchnet/csvio.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

namespace branchnet {

std::string csv_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::string metrics_csv_header() {
    return "config_name,seed,epoch,split,top1_err,top5_err,ms_per_batch,slowdown_vs_vanilla";
}

std::string to_csv(const MetricsRecord& r) {
    std::ostringstream os;
    os << r.config_name << ',' << r.seed << ',' << r.epoch << ',' << r.split << ','
       << csv_double(r.top1_err) << ',' << csv_double(r.top5_err) << ','
       << (r.ms_per_batch ? csv_double(*r.ms_per_batch) : "") << ','
       << (r.slowdown_vs_vanilla ? csv_double(*r.slowdown_vs_vanilla) : "");
    return os.str();
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    parts.push_back(cur);
    return parts;
}

template <typename Row>
void write_csv_file(const std::string& path, const std::string& header,
                    const std::vector<Row>& rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << header << '\n';
    for (const auto& r : rows) f << to_csv(r) << '\n';
    if (!f) throw IoError("write failed: " + path);
}

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& rows) {
    write_csv_file(path, metrics_csv_header(), rows);
}

MetricsRecord parse_metrics_row(const std::string& line) {
    auto parts = split_csv(line);
    if (parts.size() != 8) throw IoError("metrics row must have 8 fields: " + line);
    MetricsRecord r;
    r.config_name = parts[0];
    r.seed = parts[1];
    r.epoch = std::stoi(parts[2]);
    r.split = parts[3];
    r.top1_err = std::stod(parts[4]);
    r.top5_err = std::stod(parts[5]);
    if (!parts[6].empty()) r.ms_per_batch = std::stod(parts[6]);
    if (!parts[7].empty()) r.slowdown_vs_vanilla = std::stod(parts[7]);
    return r;
}

std::vector<MetricsRecord> append_seed_means(std::vector<MetricsRecord> rows) {
    std::map<std::tuple<std::string, int, std::string>, std::vector<const MetricsRecord*>> cells;
    std::vector<std::tuple<std::string, int, std::string>> order;
    for (const auto& r : rows) {
        if (r.seed == "mean") continue;
        auto key = std::make_tuple(r.config_name, r.epoch, r.split);
        if (cells.find(key) == cells.end()) order.push_back(key);
        cells[key].push_back(&r);
    }
    std::vector<MetricsRecord> means;
    for (const auto& key : order) {
        const auto& group = cells[key];
        if (group.size() < 2) continue;  // a single seed needs no aggregate row
        MetricsRecord m = *group.front();
        m.seed = "mean";
        double t1 = 0, t5 = 0, ms = 0;
        bool all_ms = true;
        for (const MetricsRecord* r : group) {
            t1 += r->top1_err;
            t5 += r->top5_err;
            if (r->ms_per_batch)
                ms += *r->ms_per_batch;
            else
                all_ms = false;
        }
        m.top1_err = t1 / static_cast<double>(group.size());
        m.top5_err = t5 / static_cast<double>(group.size());
        if (all_ms)
            m.ms_per_batch = ms / static_cast<double>(group.size());
        else
            m.ms_per_batch.reset();
        m.slowdown_vs_vanilla.reset();
        means.push_back(std::move(m));
    }
    rows.insert(rows.end(), means.begin(), means.end());
    return rows;
}

std::string impact_csv_header() {
    return "spot,spot_label,transform,mode,top1_err,top5_err,runs,stderr";
}

std::string to_csv(const ImpactRow& r) {
    std::ostringstream os;
    os << r.spot << ',' << r.spot_label << ',' << r.transform << ',' << r.mode << ','
       << csv_double(r.top1_err) << ',' << csv_double(r.top5_err) << ',' << r.runs << ','
       << csv_double(r.stderr_top1);
    return os.str();
}

void write_impact_csv(const std::string& path, const std::vector<ImpactRow>& rows) {
    write_csv_file(path, impact_csv_header(), rows);
}

std::string timing_csv_header() {
    return "config_name,ms_per_batch_median,slowdown_vs_vanilla,batch_size,warmup,measured";
}

std::string to_csv(const TimingRow& r) {
    std::ostringstream os;
    os << r.config_name << ',' << csv_double(r.ms_per_batch_median) << ','
       << csv_double(r.slowdown_vs_vanilla) << ',' << r.batch_size << ',' << r.warmup << ','
       << r.measured;
    return os.str();
}

void write_timing_csv(const std::string& path, const std::vector<TimingRow>& rows) {
    write_csv_file(path, timing_csv_header(), rows);
}

}  // namespace branchnet
