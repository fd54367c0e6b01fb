#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "branchnet/checkpoint.hpp"
#include "branchnet/config.hpp"
#include "branchnet/csvio.hpp"
#include "branchnet/runio.hpp"
#include "branchnet/util.hpp"

namespace bn = branchnet;

namespace {

struct CliArgs {
    std::string config_path;
    std::string out_dir;
    long long seed = -1;  // -1: use the config's seed list
    std::string device = "cpu";
    int threads = 1;
};

bn::ExperimentConfig load_config(const CliArgs& args) {
    bn::ExperimentConfig cfg = bn::parse_config(args.config_path);
    if (args.seed >= 0) cfg.seeds = {static_cast<uint64_t>(args.seed)};
    return cfg;
}

bn::ojson run_echo(const bn::ExperimentConfig& cfg, const std::pair<bn::Dataset, bn::Dataset>* data) {
    bn::ojson echo = bn::config_echo(cfg);
    if (data) {
        bn::ojson norm;
        norm["mean"] = data->first.mean;
        norm["stddev"] = data->first.stddev;
        echo["normalization"] = norm;
    }
    return echo;
}

void finish(const bn::RunDir& run, const bn::ojson& echo, const bn::ExperimentConfig& cfg,
            double wall_ms, std::vector<std::string> artifacts) {
    bn::write_text_file(run.file("config.echo.json"), echo.dump(2) + "\n");
    artifacts.insert(artifacts.begin(), "config.echo.json");
    bn::write_manifest(run, echo, cfg.seeds, wall_ms, artifacts);
}

std::string checkpoint_name(uint64_t seed) { return "model_seed" + std::to_string(seed) + ".brt"; }

bn::TrainHooks progress_hooks() {
    bn::TrainHooks hooks;
    hooks.log_progress = true;
    return hooks;
}

int cmd_train(const CliArgs& args) {
    bn::ExperimentConfig cfg = load_config(args);
    bn::RunDir run(args.out_dir);
    const double t0 = bn::now_ms();
    auto data = cfg.dataset.load();
    std::vector<bn::MetricsRecord> rows;
    std::vector<std::string> artifacts{"metrics.csv"};
    for (uint64_t seed : cfg.seeds) {
        bn::BranchedModel model = cfg.build_model(seed);
        bn::TrainHooks hooks = progress_hooks();
        hooks.divergence_dump_path = run.file("diverged_seed" + std::to_string(seed) + ".brt");
        bn::TrainResult res = bn::train(model, data.first, data.second, cfg.optim,
                                        cfg.train_reduction, cfg.infer_reduction, cfg.tta,
                                        cfg.augment, seed, cfg.name, hooks);
        rows.insert(rows.end(), res.metrics.begin(), res.metrics.end());
        const std::string ckpt = checkpoint_name(seed);
        bn::save_checkpoint(*model.net, run.file(ckpt));
        artifacts.push_back(ckpt);
    }
    rows = bn::append_seed_means(std::move(rows));
    bn::write_metrics_csv(run.file("metrics.csv"), rows);
    finish(run, run_echo(cfg, &data), cfg, bn::now_ms() - t0, artifacts);
    return 0;
}

int cmd_eval(const CliArgs& args) {
    bn::ExperimentConfig cfg = load_config(args);
    if (cfg.checkpoint.empty())
        throw bn::ConfigError("eval needs a checkpoint path in the config");
    bn::RunDir run(args.out_dir);
    const double t0 = bn::now_ms();
    auto data = cfg.dataset.load();
    std::vector<bn::MetricsRecord> rows;
    for (uint64_t seed : cfg.seeds) {
        bn::BranchedModel model = cfg.build_model(seed);
        bn::load_checkpoint(*model.net, cfg.checkpoint);
        bn::EvalResult r = bn::evaluate(model, data.second, cfg.optim.batch_size,
                                        bn::inference_reduction(cfg.infer_reduction), cfg.tta, seed);
        bn::MetricsRecord rec;
        rec.config_name = cfg.name;
        rec.seed = std::to_string(seed);
        rec.epoch = 0;
        rec.split = "test";
        rec.top1_err = r.top1_err;
        rec.top5_err = r.top5_err;
        rows.push_back(rec);
        std::fprintf(stderr, "[%s seed %llu] test top1 %.2f%% top5 %.2f%%\n", cfg.name.c_str(),
                     static_cast<unsigned long long>(seed), r.top1_err, r.top5_err);
    }
    rows = bn::append_seed_means(std::move(rows));
    bn::write_metrics_csv(run.file("metrics.csv"), rows);
    finish(run, run_echo(cfg, &data), cfg, bn::now_ms() - t0, {"metrics.csv"});
    return 0;
}

int cmd_impact(const CliArgs& args) {
    bn::ExperimentConfig cfg = load_config(args);
    if (!cfg.impact) throw bn::ConfigError("impact needs an impact section in the config");
    const bn::ImpactConfig& ic = *cfg.impact;
    bn::RunDir run(args.out_dir);
    const double t0 = bn::now_ms();
    auto data = cfg.dataset.load();
    std::vector<std::vector<bn::ImpactRow>> per_seed;
    for (uint64_t seed : cfg.seeds) {
        if (ic.mode == "inference") {
            bn::BranchedModel model = cfg.build_model(seed);
            if (!ic.checkpoint.empty()) {
                bn::load_checkpoint(*model.net, ic.checkpoint);
            } else {
                bn::TrainHooks hooks = progress_hooks();
                bn::train(model, data.first, data.second, cfg.optim, cfg.train_reduction,
                          cfg.infer_reduction, cfg.tta, cfg.augment, seed, cfg.name, hooks);
            }
            std::vector<int> spots =
                ic.spots.empty() ? bn::spots_with_sentinel(*model.net) : ic.spots;
            per_seed.push_back(bn::inference_impact(model, data.second, ic.transform, spots,
                                                    cfg.optim.batch_size, seed));
        } else {
            bn::ImpactRow row = bn::training_impact(
                cfg.arch.build(data.first.num_classes, seed), data.first, data.second, cfg.optim,
                cfg.train_reduction, cfg.infer_reduction, cfg.augment, ic.spot, ic.transform, seed);
            per_seed.push_back({row});
        }
    }
    auto rows = bn::aggregate_impact(per_seed);
    bn::write_impact_csv(run.file("impact.csv"), rows);
    finish(run, run_echo(cfg, &data), cfg, bn::now_ms() - t0, {"impact.csv"});
    return 0;
}

int cmd_bench(const CliArgs& args) {
    bn::ExperimentConfig cfg = load_config(args);
    if (!cfg.bench) throw bn::ConfigError("bench needs a bench section in the config");
    const bn::BenchSection& b = *cfg.bench;
    bn::RunDir run(args.out_dir);
    const double t0 = bn::now_ms();
    const int num_classes = cfg.dataset.num_classes();
    const uint64_t seed = cfg.seeds.front();

    std::vector<bn::BranchedModel> models;
    std::vector<bn::BenchConfig> entries;
    models.reserve(b.configs.size());
    for (const std::string& name : b.configs) {
        bn::NameScheme ns = bn::parse_name_scheme(name);
        if (!ns.recognized)
            throw bn::ConfigError("bench config '" + name +
                                  "' does not follow the flip-n / vanilla naming scheme");
        models.push_back(bn::BranchedModel{});
        bn::BranchedModel& m = models.back();
        m.net = cfg.arch.build(num_classes, seed);
        if (ns.n > 0) {
            const int L = m.net->max_spot();
            if (ns.flip_only) {
                m.branchings[L - ns.n] = {bn::TransformSpec::identity(), bn::TransformSpec::flip()};
            } else {
                for (int i = ns.n; i >= 1; --i)
                    m.branchings[L - i] = {bn::TransformSpec::identity(), bn::TransformSpec::flip()};
            }
        }
        bn::BenchConfig bc;
        bc.name = name;
        bc.red = bn::inference_reduction(ns.infer_red);
        bc.tta = ns.tta;
        entries.push_back(bc);
    }
    for (size_t i = 0; i < models.size(); ++i) entries[i].model = &models[i];

    std::mt19937 rng = bn::make_rng(seed, 0xbe9cUL);
    bn::Tensor4 images = bn::uniform(b.batch_size, b.input_size, b.input_size, 3, rng, -1.f, 1.f);
    auto rows = bn::benchmark(entries, images, b.warmup, b.measured);
    for (const auto& r : rows)
        std::fprintf(stderr, "[bench] %-20s %8.3f ms/batch  x%.3f\n", r.config_name.c_str(),
                     r.ms_per_batch_median, r.slowdown_vs_vanilla);
    bn::write_timing_csv(run.file("timing.csv"), rows);
    finish(run, run_echo(cfg, nullptr), cfg, bn::now_ms() - t0, {"timing.csv"});
    return 0;
}

int cmd_gen_data(const CliArgs& args) {
    bn::ExperimentConfig cfg = load_config(args);
    if (cfg.dataset.kind != "synth")
        throw bn::ConfigError("gen-data writes synthetic datasets; set dataset.kind to synth");
    bn::RunDir run(args.out_dir);
    const double t0 = bn::now_ms();
    auto data = cfg.dataset.load();
    bn::save_dataset(data.first, run.file("train.brt"));
    bn::save_dataset(data.second, run.file("test.brt"));
    std::fprintf(stderr, "[gen-data] wrote %d train / %d test images (%d classes)\n",
                 data.first.size(), data.second.size(), data.first.num_classes);
    finish(run, run_echo(cfg, &data), cfg, bn::now_ms() - t0, {"train.brt", "test.brt"});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"branchnet: in-network feature-map augmentation experiments"};
    app.require_subcommand(1);

    CliArgs args;
    std::string subname;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", args.config_path, "experiment config (JSON)")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--out", args.out_dir, "output directory (one run per directory)")
            ->required();
        sub->add_option("--seed", args.seed, "override the config's seed list with one seed");
        sub->add_option("--device", args.device, "compute device (cpu only)")
            ->default_str("cpu");
        sub->add_option("--threads", args.threads, "BLAS thread count")->default_val(1);
    };
    CLI::App* train = app.add_subcommand("train", "train a model and write metrics.csv");
    CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    CLI::App* impact = app.add_subcommand("impact", "transform-impact sweep (impact.csv)");
    CLI::App* bench = app.add_subcommand("bench", "speed measurement (timing.csv)");
    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    for (CLI::App* sub : {train, ev, impact, bench, gen}) add_common(sub);

    CLI11_PARSE(app, argc, argv);

    CLI::App* sub = app.get_subcommands().front();
    subname = sub->get_name();
    try {
        if (args.device != "cpu")
            throw bn::ConfigError("unsupported device '" + args.device + "' (cpu only)");
        if (args.threads < 1) throw bn::ConfigError("--threads must be >= 1");
        bn::set_num_threads(args.threads);
        if (subname == "train") return cmd_train(args);
        if (subname == "eval") return cmd_eval(args);
        if (subname == "impact") return cmd_impact(args);
        if (subname == "bench") return cmd_bench(args);
        if (subname == "gen-data") return cmd_gen_data(args);
        throw bn::ConfigError("unknown subcommand " + subname);
    } catch (const std::exception& e) {
        const char* kind = "runtime";
        if (dynamic_cast<const bn::ConfigError*>(&e)) kind = "config";
        else if (dynamic_cast<const bn::IoError*>(&e)) kind = "io";
        else if (dynamic_cast<const bn::ShapeError*>(&e)) kind = "shape";
        else if (dynamic_cast<const bn::NumericError*>(&e)) kind = "numeric";
        else if (dynamic_cast<const std::logic_error*>(&e)) kind = "logic";
        std::fprintf(stderr, "error (%s): %s\n", kind, e.what());
        bn::write_error_record(args.out_dir, subname, kind, e.what());
        return 1;
    }
}
