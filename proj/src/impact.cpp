#include "branchnet/impact.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <tuple>

namespace branchnet {

std::string transform_desc(const TransformSpec& t) {
    std::ostringstream os;
    switch (t.kind) {
        case TransformKind::identity: return "identity";
        case TransformKind::flip_h: return "flip_h";
        case TransformKind::rotate: os << "rotate:" << t.angle_deg; break;
        case TransformKind::scale: os << "scale:" << t.factor; break;
    }
    if (t.random_range)
        os << "~[" << t.random_range->first << "," << t.random_range->second << "]";
    return os.str();
}

std::vector<int> spots_with_sentinel(const Network& net) {
    std::vector<int> s = net.all_spots();
    s.push_back(net.sentinel_spot());
    return s;
}

std::vector<ImpactRow> inference_impact(BranchedModel& model, const Dataset& test_ds,
                                        const TransformSpec& transform,
                                        const std::vector<int>& spots, int batch_size,
                                        uint64_t seed) {
    std::vector<ImpactRow> rows;
    const int sentinel = model.net->sentinel_spot();
    std::mt19937 dummy = make_rng(seed, 0);  // eval-mode resolve draws nothing
    ResolvedTransform fixed = resolve(transform, false, dummy);
    for (int spot : spots) {
        if (spot < -1 || spot > sentinel)
            throw ConfigError("impact: spot " + std::to_string(spot) + " out of range");
        std::optional<InjectedTransform> inject;
        if (spot != sentinel) inject = InjectedTransform{spot, fixed};
        EvalResult ev = evaluate(model, test_ds, batch_size, Reduction::sum, false, seed, inject);
        ImpactRow row;
        row.spot = spot;
        row.spot_label = model.net->spot_label(spot);
        row.transform = transform_desc(transform);
        row.mode = "inference";
        row.top1_err = ev.top1_err;
        row.top5_err = ev.top5_err;
        rows.push_back(std::move(row));
    }
    return rows;
}

ImpactRow training_impact(std::unique_ptr<Network> net, const Dataset& train_ds,
                          const Dataset& test_ds, const OptimConfig& cfg, Reduction train_red,
                          Reduction eval_red, AugmentPolicy aug, int spot,
                          const TransformSpec& transform, uint64_t seed) {
    transform.validate();
    BranchedModel model;
    model.net = std::move(net);
    model.branchings[spot] = {TransformSpec::identity(), transform};
    const std::string name = "impact-" + transform_desc(transform) + "@" + std::to_string(spot);
    train(model, train_ds, test_ds, cfg, train_red, eval_red, false, aug, seed, name);

    // Inference pair: branch 0 identity, branch 1 the deterministic transform.
    // Scale keeps drawing from the training range, once per evaluation batch.
    EvalResult ev;
    if (transform.kind == TransformKind::scale && transform.random_range) {
        auto& spec = model.branchings[spot][1];
        auto range = *transform.random_range;
        ev = evaluate(model, test_ds, cfg.batch_size, eval_red, false, seed, {},
                      [&spec, range, seed](int batch) {
                          std::mt19937 rng =
                              make_rng(seed, 0x5CA1E000 + static_cast<uint64_t>(batch));
                          std::uniform_real_distribution<double> d(range.first, range.second);
                          spec.factor = d(rng);
                      });
    } else {
        ev = evaluate(model, test_ds, cfg.batch_size, eval_red, false, seed);
    }

    ImpactRow row;
    row.spot = spot;
    row.spot_label = model.net->spot_label(spot);
    row.transform = transform_desc(transform);
    row.mode = "training";
    row.top1_err = ev.top1_err;
    row.top5_err = ev.top5_err;
    return row;
}

std::vector<ImpactRow> aggregate_impact(const std::vector<std::vector<ImpactRow>>& per_seed) {
    if (per_seed.empty()) return {};
    std::map<std::tuple<int, std::string, std::string>, std::vector<const ImpactRow*>> cells;
    std::vector<std::tuple<int, std::string, std::string>> order;
    for (const auto& run : per_seed)
        for (const auto& row : run) {
            auto key = std::make_tuple(row.spot, row.transform, row.mode);
            if (cells.find(key) == cells.end()) order.push_back(key);
            cells[key].push_back(&row);
        }
    std::vector<ImpactRow> out;
    for (const auto& key : order) {
        const auto& group = cells[key];
        ImpactRow agg = *group.front();
        agg.runs = static_cast<int>(group.size());
        double m1 = 0, m5 = 0;
        for (const ImpactRow* r : group) {
            m1 += r->top1_err;
            m5 += r->top5_err;
        }
        m1 /= agg.runs;
        m5 /= agg.runs;
        double ss = 0;
        for (const ImpactRow* r : group) ss += (r->top1_err - m1) * (r->top1_err - m1);
        agg.top1_err = m1;
        agg.top5_err = m5;
        agg.stderr_top1 =
            agg.runs > 1 ? std::sqrt(ss / (agg.runs - 1)) / std::sqrt(agg.runs) : 0.0;
        out.push_back(std::move(agg));
    }
    return out;
}

std::vector<TimingRow> benchmark(const std::vector<BenchConfig>& configs,
                                 const Tensor4& images, int warmup, int measured) {
    if (configs.size() < 2) throw ConfigError("bench: need at least two configs (incl. vanilla)");
    if (warmup < 0 || measured < 1) throw ConfigError("bench: bad warmup/measured counts");
    const BenchConfig* vanilla = nullptr;
    for (const auto& c : configs)
        if (c.name == "vanilla") vanilla = &c;
    if (!vanilla) throw ConfigError("bench: a config named 'vanilla' is required");

    // one warm pass over every config first: page in all weights and code
    // paths so the baseline is not measured against a cold process
    {
        std::mt19937 rng = make_rng(0xbe9c4, 1);
        for (const auto& c : configs) {
            if (c.tta)
                tta_infer(*c.model, images, c.red, rng);
            else
                infer(*c.model, images, c.red, rng);
        }
    }

    // The baseline is its own series (the vanilla row stays a real
    // self-measurement, not a tautological 1.0), and all series are
    // interleaved round-robin so machine-load drift over the run hits every
    // config at the same batch index instead of biasing the ratios.
    std::vector<const BenchConfig*> series{vanilla};
    for (const auto& c : configs) series.push_back(&c);
    std::vector<std::vector<double>> times(series.size());
    std::vector<std::mt19937> rngs;
    for (size_t s = 0; s < series.size(); ++s) rngs.push_back(make_rng(0xbe9c4, s));
    for (int i = 0; i < warmup + measured; ++i)
        for (size_t s = 0; s < series.size(); ++s) {
            const BenchConfig& c = *series[s];
            double t0 = now_ms();
            if (c.tta)
                tta_infer(*c.model, images, c.red, rngs[s]);
            else
                infer(*c.model, images, c.red, rngs[s]);
            double dt = now_ms() - t0;
            if (i >= warmup) times[s].push_back(dt);
        }
    auto median = [](std::vector<double>& v) {
        std::sort(v.begin(), v.end());
        size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };

    double vanilla_ms = median(times[0]);
    if (vanilla_ms < 0.25)
        throw ConfigError("bench: median batch time " + std::to_string(vanilla_ms) +
                          " ms is below timer noise floor; increase the batch size");
    std::vector<TimingRow> rows;
    for (size_t s = 1; s < series.size(); ++s) {
        TimingRow row;
        row.config_name = series[s]->name;
        row.ms_per_batch_median = median(times[s]);
        row.slowdown_vs_vanilla = row.ms_per_batch_median / vanilla_ms;
        row.batch_size = images.rows;
        row.warmup = warmup;
        row.measured = measured;
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace branchnet
