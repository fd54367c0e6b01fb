#include "branchnet/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "branchnet/util.hpp"

namespace branchnet {
namespace {

[[noreturn]] void bad(const std::string& path, const std::string& what) {
    throw ConfigError(path + ": " + what);
}

void check_keys(const ojson& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    for (const auto& item : obj.items()) {
        bool ok = false;
        for (const char* k : allowed)
            if (item.key() == k) ok = true;
        if (!ok) bad(path + "." + item.key(), "unknown key");
    }
}

const ojson* find(const ojson& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

std::string get_string(const ojson& j, const std::string& path) {
    if (!j.is_string()) bad(path, "expected a string");
    return j.get<std::string>();
}

double get_number(const ojson& j, const std::string& path) {
    if (!j.is_number()) bad(path, "expected a number");
    return j.get<double>();
}

int get_int(const ojson& j, const std::string& path) {
    if (!j.is_number_integer()) bad(path, "expected an integer");
    return j.get<int>();
}

bool get_bool(const ojson& j, const std::string& path) {
    if (!j.is_boolean()) bad(path, "expected true or false");
    return j.get<bool>();
}

TransformSpec parse_transform(const ojson& j, const std::string& path) {
    if (!j.is_object()) bad(path, "expected a transform object");
    check_keys(j, path, {"kind", "angle_deg", "factor", "random_range"});
    TransformSpec spec;
    const ojson* kind = find(j, "kind");
    if (!kind) bad(path + ".kind", "missing");
    try {
        spec.kind = transform_kind_from_string(get_string(*kind, path + ".kind"));
    } catch (const ConfigError& e) {
        bad(path + ".kind", e.what());
    }
    if (const ojson* v = find(j, "angle_deg")) spec.angle_deg = get_number(*v, path + ".angle_deg");
    if (const ojson* v = find(j, "factor")) spec.factor = get_number(*v, path + ".factor");
    if (const ojson* v = find(j, "random_range")) {
        if (!v->is_array() || v->size() != 2) bad(path + ".random_range", "expected [lo, hi]");
        spec.random_range = {get_number((*v)[0], path + ".random_range[0]"),
                             get_number((*v)[1], path + ".random_range[1]")};
    }
    try {
        spec.validate();
    } catch (const ConfigError& e) {
        bad(path, e.what());
    }
    return spec;
}

ojson transform_to_json(const TransformSpec& spec) {
    ojson j;
    j["kind"] = to_string(spec.kind);
    if (spec.kind == TransformKind::rotate) j["angle_deg"] = spec.angle_deg;
    if (spec.kind == TransformKind::scale) j["factor"] = spec.factor;
    if (spec.random_range) j["random_range"] = {spec.random_range->first, spec.random_range->second};
    return j;
}

int resolve_spot(const ojson& j, int max_spot, const std::string& path,
                 bool allow_sentinel = false) {
    int spot;
    if (j.is_number_integer()) {
        spot = j.get<int>();
    } else if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "input") {
            spot = -1;
        } else if (s == "stem") {
            spot = 0;
        } else if (s == "before_gap") {
            spot = max_spot;
        } else if (s.rfind("last-", 0) == 0) {
            try {
                spot = max_spot - std::stoi(s.substr(5));
            } catch (const std::exception&) {
                bad(path, "bad spot selector '" + s + "'");
            }
        } else {
            bad(path, "bad spot selector '" + s + "' (use an integer, input, stem, before_gap, or last-k)");
        }
    } else {
        bad(path, "expected an integer or selector string");
    }
    const int hi = allow_sentinel ? max_spot + 1 : max_spot;
    if (spot < -1 || spot > hi)
        bad(path, "spot " + std::to_string(spot) + " outside [-1, " + std::to_string(hi) + "]");
    return spot;
}

ArchConfig parse_arch(const ojson& j, const std::string& path) {
    check_keys(j, path, {"kind", "depth_n", "base_width", "blocks_per_stage"});
    ArchConfig a;
    if (const ojson* v = find(j, "kind")) a.kind = get_string(*v, path + ".kind");
    if (a.kind != "preact_resnet" && a.kind != "resnet18" && a.kind != "custom")
        bad(path + ".kind", "unknown architecture '" + a.kind + "'");
    if (const ojson* v = find(j, "depth_n")) a.depth_n = get_int(*v, path + ".depth_n");
    if (const ojson* v = find(j, "base_width")) a.base_width = get_int(*v, path + ".base_width");
    if (const ojson* v = find(j, "blocks_per_stage"))
        a.blocks_per_stage = get_int(*v, path + ".blocks_per_stage");
    if (a.depth_n < 1) bad(path + ".depth_n", "must be >= 1");
    if (a.base_width < 1) bad(path + ".base_width", "must be >= 1");
    if (a.blocks_per_stage < 1) bad(path + ".blocks_per_stage", "must be >= 1");
    return a;
}

DatasetConfig parse_dataset(const ojson& j, const std::string& path) {
    check_keys(j, path, {"kind", "path", "per_class", "synth"});
    DatasetConfig d;
    if (const ojson* v = find(j, "kind")) d.kind = get_string(*v, path + ".kind");
    if (d.kind != "synth" && d.kind != "cifar10" && d.kind != "cifar100" && d.kind != "tensor_file")
        bad(path + ".kind", "unknown dataset kind '" + d.kind + "'");
    if (const ojson* v = find(j, "path")) d.path = get_string(*v, path + ".path");
    if (const ojson* v = find(j, "per_class")) d.per_class = get_int(*v, path + ".per_class");
    if (d.per_class < 0) bad(path + ".per_class", "must be >= 0");
    if (const ojson* v = find(j, "synth")) {
        const std::string sp = path + ".synth";
        check_keys(*v, sp, {"n_train", "n_test", "size", "num_classes", "gen_seed"});
        if (const ojson* w = find(*v, "n_train")) d.synth.n_train = get_int(*w, sp + ".n_train");
        if (const ojson* w = find(*v, "n_test")) d.synth.n_test = get_int(*w, sp + ".n_test");
        if (const ojson* w = find(*v, "size")) d.synth.size = get_int(*w, sp + ".size");
        if (const ojson* w = find(*v, "num_classes"))
            d.synth.num_classes = get_int(*w, sp + ".num_classes");
        if (const ojson* w = find(*v, "gen_seed"))
            d.synth.gen_seed = static_cast<uint64_t>(get_int(*w, sp + ".gen_seed"));
    }
    if ((d.kind == "cifar10" || d.kind == "cifar100" || d.kind == "tensor_file") && d.path.empty())
        bad(path + ".path", "required for dataset kind '" + d.kind + "'");
    return d;
}

OptimConfig parse_optim(const ojson& j, const std::string& path) {
    check_keys(j, path,
               {"lr0", "momentum", "nesterov", "weight_decay", "schedule", "epochs", "batch_size"});
    OptimConfig o;
    if (const ojson* v = find(j, "lr0")) o.lr0 = get_number(*v, path + ".lr0");
    if (const ojson* v = find(j, "momentum")) o.momentum = get_number(*v, path + ".momentum");
    if (const ojson* v = find(j, "nesterov")) o.nesterov = get_bool(*v, path + ".nesterov");
    if (const ojson* v = find(j, "weight_decay")) o.weight_decay = get_number(*v, path + ".weight_decay");
    if (const ojson* v = find(j, "epochs")) o.epochs = get_int(*v, path + ".epochs");
    if (const ojson* v = find(j, "batch_size")) o.batch_size = get_int(*v, path + ".batch_size");
    if (const ojson* v = find(j, "schedule")) {
        if (!v->is_array()) bad(path + ".schedule", "expected an array of [epoch, divisor] pairs");
        for (size_t i = 0; i < v->size(); ++i) {
            const ojson& e = (*v)[i];
            const std::string ep = path + ".schedule[" + std::to_string(i) + "]";
            if (!e.is_array() || e.size() != 2) bad(ep, "expected [epoch, divisor]");
            LrStep step;
            step.epoch = get_int(e[0], ep + "[0]");
            step.divisor = get_number(e[1], ep + "[1]");
            o.schedule.push_back(step);
        }
    }
    try {
        o.validate();
    } catch (const ConfigError& e) {
        bad(path, e.what());
    }
    return o;
}

Reduction parse_reduction(const ojson& j, const std::string& path) {
    try {
        return reduction_from_string(get_string(j, path));
    } catch (const ConfigError& e) {
        bad(path, e.what());
    }
}

ImpactConfig parse_impact(const ojson& j, const std::string& path, int max_spot) {
    check_keys(j, path, {"mode", "transform", "spots", "spot", "checkpoint"});
    ImpactConfig ic;
    if (const ojson* v = find(j, "mode")) ic.mode = get_string(*v, path + ".mode");
    if (ic.mode != "inference" && ic.mode != "training")
        bad(path + ".mode", "expected inference or training");
    const ojson* tr = find(j, "transform");
    if (!tr) bad(path + ".transform", "missing");
    ic.transform = parse_transform(*tr, path + ".transform");
    if (const ojson* v = find(j, "spots")) {
        if (!v->is_array()) bad(path + ".spots", "expected an array");
        for (size_t i = 0; i < v->size(); ++i)
            ic.spots.push_back(resolve_spot((*v)[i], max_spot,
                                            path + ".spots[" + std::to_string(i) + "]", true));
    }
    if (const ojson* v = find(j, "spot")) ic.spot = resolve_spot(*v, max_spot, path + ".spot");
    if (const ojson* v = find(j, "checkpoint")) ic.checkpoint = get_string(*v, path + ".checkpoint");
    if (ic.mode == "training" && !find(j, "spot")) bad(path + ".spot", "required in training mode");
    return ic;
}

BenchSection parse_bench(const ojson& j, const std::string& path) {
    check_keys(j, path, {"configs", "batch_size", "warmup", "measured", "input_size"});
    BenchSection b;
    if (const ojson* v = find(j, "configs")) {
        b.configs.clear();
        if (!v->is_array()) bad(path + ".configs", "expected an array of config names");
        for (size_t i = 0; i < v->size(); ++i)
            b.configs.push_back(get_string((*v)[i], path + ".configs[" + std::to_string(i) + "]"));
    }
    if (const ojson* v = find(j, "batch_size")) b.batch_size = get_int(*v, path + ".batch_size");
    if (const ojson* v = find(j, "warmup")) b.warmup = get_int(*v, path + ".warmup");
    if (const ojson* v = find(j, "measured")) b.measured = get_int(*v, path + ".measured");
    if (const ojson* v = find(j, "input_size")) b.input_size = get_int(*v, path + ".input_size");
    if (b.batch_size < 1) bad(path + ".batch_size", "must be >= 1");
    if (b.warmup < 0) bad(path + ".warmup", "must be >= 0");
    if (b.measured < 1) bad(path + ".measured", "must be >= 1");
    if (b.input_size < 8) bad(path + ".input_size", "must be >= 8");
    if (std::find(b.configs.begin(), b.configs.end(), std::string("vanilla")) == b.configs.end())
        bad(path + ".configs", "must include vanilla (the slowdown baseline)");
    return b;
}

bool parse_reduction_token(const std::string& tok, Reduction* out) {
    try {
        *out = reduction_from_string(tok);
        return true;
    } catch (const ConfigError&) {
        return false;
    }
}

// "max" or "max,sum" (train,infer); empty NameScheme.recognized on failure.
bool parse_reduction_suffix(const std::string& s, NameScheme* ns) {
    auto comma = s.find(',');
    if (comma == std::string::npos) {
        if (!parse_reduction_token(s, &ns->train_red)) return false;
        ns->infer_red = ns->train_red;
        return true;
    }
    return parse_reduction_token(s.substr(0, comma), &ns->train_red) &&
           parse_reduction_token(s.substr(comma + 1), &ns->infer_red);
}

std::vector<BranchingConfig> scheme_branchings(const NameScheme& ns, int max_spot,
                                               const std::string& name) {
    std::vector<BranchingConfig> out;
    if (ns.n == 0) return out;
    std::vector<int> spots;
    if (ns.flip_only) {
        spots.push_back(max_spot - ns.n);
    } else {
        for (int i = ns.n; i >= 1; --i) spots.push_back(max_spot - i);
    }
    for (int s : spots) {
        if (s < -1)
            throw ConfigError("name '" + name + "' needs spot " + std::to_string(s) +
                              " but the network only has spots >= -1");
        out.push_back({s, {TransformSpec::identity(), TransformSpec::flip()}});
    }
    return out;
}

}  // namespace

NameScheme parse_name_scheme(const std::string& name) {
    NameScheme ns;
    if (name == "vanilla") {
        ns.recognized = true;
        return ns;
    }
    if (name.rfind("vanilla-tta-", 0) == 0) {
        Reduction r;
        if (!parse_reduction_token(name.substr(12), &r)) return ns;
        ns.recognized = true;
        ns.tta = true;
        ns.infer_red = r;
        return ns;
    }
    if (name.rfind("flip-", 0) != 0) return ns;
    std::string rest = name.substr(5);
    if (rest.size() > 4 && rest.compare(rest.size() - 4, 4, "-tta") == 0) {
        ns.tta = true;
        rest = rest.substr(0, rest.size() - 4);
    }
    if (rest.rfind("only", 0) == 0) {
        ns.flip_only = true;
        rest = rest.substr(4);
    }
    size_t digits = 0;
    while (digits < rest.size() && std::isdigit(static_cast<unsigned char>(rest[digits]))) ++digits;
    if (digits == 0 || digits >= rest.size() || rest[digits] != '-') return NameScheme{};
    ns.n = std::stoi(rest.substr(0, digits));
    if (ns.n < 1) return NameScheme{};
    if (!parse_reduction_suffix(rest.substr(digits + 1), &ns)) return NameScheme{};
    ns.recognized = true;
    return ns;
}

int ArchConfig::max_spot() const {
    if (kind == "preact_resnet") return 3 * depth_n;
    if (kind == "resnet18") return 9;
    return 4 * blocks_per_stage;
}

std::unique_ptr<Network> ArchConfig::build(int num_classes, uint64_t seed) const {
    if (kind == "preact_resnet") return build_preact_resnet(depth_n, num_classes, seed);
    if (kind == "resnet18") return build_resnet18(num_classes, seed);
    if (kind == "custom") return build_custom(num_classes, base_width, blocks_per_stage, seed);
    throw ConfigError("unknown architecture '" + kind + "'");
}

int DatasetConfig::num_classes() const {
    if (kind == "cifar10") return 10;
    if (kind == "cifar100") return 100;
    if (kind == "synth") return synth.num_classes;
    return load_dataset(path + "/train.brt").num_classes;
}

std::pair<Dataset, Dataset> DatasetConfig::load() const {
    std::pair<Dataset, Dataset> pair;
    if (kind == "synth") {
        pair = synth_shapes_pair(synth.n_train, synth.n_test, synth.size, synth.num_classes,
                                 synth.gen_seed);
    } else if (kind == "cifar10" || kind == "cifar100") {
        pair = load_cifar_pair(path, kind);
    } else if (kind == "tensor_file") {
        pair = {load_dataset(path + "/train.brt"), load_dataset(path + "/test.brt")};
    } else {
        throw ConfigError("unknown dataset kind '" + kind + "'");
    }
    if (per_class > 0) pair.first = subset(pair.first, per_class, 17);
    compute_normalization(pair.first);
    pair.second.mean = pair.first.mean;
    pair.second.stddev = pair.first.stddev;
    return pair;
}

BranchedModel ExperimentConfig::build_model(uint64_t seed) const {
    BranchedModel model;
    model.net = arch.build(dataset.num_classes(), seed);
    for (const auto& b : branchings) model.branchings[b.spot] = b.transforms;
    return model;
}

ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    ojson j;
    try {
        j = ojson::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_config_json(j, path);
}

ExperimentConfig parse_config_json(const ojson& j, const std::string& origin) {
    const std::string root = origin.empty() ? "$" : origin;
    if (!j.is_object()) bad(root, "config must be a JSON object");
    check_keys(j, root,
               {"name", "arch", "dataset", "branchings", "train_reduction", "infer_reduction",
                "tta", "augment", "optim", "seeds", "checkpoint", "impact", "bench"});
    ExperimentConfig cfg;
    if (const ojson* v = find(j, "name")) cfg.name = get_string(*v, root + ".name");
    if (cfg.name.empty()) bad(root + ".name", "must not be empty");
    if (const ojson* v = find(j, "arch")) {
        if (!v->is_object()) bad(root + ".arch", "expected an object");
        cfg.arch = parse_arch(*v, root + ".arch");
    }
    if (const ojson* v = find(j, "dataset")) {
        if (!v->is_object()) bad(root + ".dataset", "expected an object");
        cfg.dataset = parse_dataset(*v, root + ".dataset");
    }
    const int max_spot = cfg.arch.max_spot();
    bool have_branchings = false;
    if (const ojson* v = find(j, "branchings")) {
        have_branchings = true;
        if (!v->is_array()) bad(root + ".branchings", "expected an array");
        std::set<int> seen;
        for (size_t i = 0; i < v->size(); ++i) {
            const std::string bp = root + ".branchings[" + std::to_string(i) + "]";
            const ojson& e = (*v)[i];
            if (!e.is_object()) bad(bp, "expected an object");
            check_keys(e, bp, {"spot", "transforms"});
            const ojson* sp = find(e, "spot");
            if (!sp) bad(bp + ".spot", "missing");
            BranchingConfig bc;
            bc.spot = resolve_spot(*sp, max_spot, bp + ".spot");
            if (!seen.insert(bc.spot).second)
                bad(bp + ".spot", "spot " + std::to_string(bc.spot) + " branched twice");
            const ojson* tr = find(e, "transforms");
            if (!tr || !tr->is_array()) bad(bp + ".transforms", "expected an array of transforms");
            for (size_t t = 0; t < tr->size(); ++t)
                bc.transforms.push_back(
                    parse_transform((*tr)[t], bp + ".transforms[" + std::to_string(t) + "]"));
            if (bc.transforms.empty() || bc.transforms.size() > 4)
                bad(bp + ".transforms", "a branching carries 1 to 4 transforms");
            cfg.branchings.push_back(bc);
        }
        std::sort(cfg.branchings.begin(), cfg.branchings.end(),
                  [](const BranchingConfig& a, const BranchingConfig& b) { return a.spot < b.spot; });
    }
    bool have_train_red = false, have_infer_red = false, have_tta = false;
    if (const ojson* v = find(j, "train_reduction")) {
        have_train_red = true;
        cfg.train_reduction = parse_reduction(*v, root + ".train_reduction");
    }
    if (const ojson* v = find(j, "infer_reduction")) {
        have_infer_red = true;
        cfg.infer_reduction = parse_reduction(*v, root + ".infer_reduction");
    }
    if (const ojson* v = find(j, "tta")) {
        have_tta = true;
        cfg.tta = get_bool(*v, root + ".tta");
    }
    if (const ojson* v = find(j, "augment")) {
        try {
            cfg.augment = augment_policy_from_string(get_string(*v, root + ".augment"));
        } catch (const ConfigError& e) {
            bad(root + ".augment", e.what());
        }
    }
    if (const ojson* v = find(j, "optim")) {
        if (!v->is_object()) bad(root + ".optim", "expected an object");
        cfg.optim = parse_optim(*v, root + ".optim");
    }
    if (const ojson* v = find(j, "seeds")) {
        if (!v->is_array() || v->empty()) bad(root + ".seeds", "expected a non-empty array");
        cfg.seeds.clear();
        for (size_t i = 0; i < v->size(); ++i) {
            int s = get_int((*v)[i], root + ".seeds[" + std::to_string(i) + "]");
            if (s < 0) bad(root + ".seeds[" + std::to_string(i) + "]", "must be >= 0");
            cfg.seeds.push_back(static_cast<uint64_t>(s));
        }
    }
    if (const ojson* v = find(j, "checkpoint")) cfg.checkpoint = get_string(*v, root + ".checkpoint");
    if (const ojson* v = find(j, "impact")) {
        if (!v->is_object()) bad(root + ".impact", "expected an object");
        cfg.impact = parse_impact(*v, root + ".impact", max_spot);
    }
    if (const ojson* v = find(j, "bench")) {
        if (!v->is_object()) bad(root + ".bench", "expected an object");
        cfg.bench = parse_bench(*v, root + ".bench");
    }

    const NameScheme ns = parse_name_scheme(cfg.name);
    if (ns.recognized) {
        const auto derived = scheme_branchings(ns, max_spot, cfg.name);
        if (!have_branchings) {
            cfg.branchings = derived;
        } else if (cfg.branchings.size() != derived.size() ||
                   !std::equal(cfg.branchings.begin(), cfg.branchings.end(), derived.begin(),
                               [](const BranchingConfig& a, const BranchingConfig& b) {
                                   if (a.spot != b.spot || a.transforms.size() != b.transforms.size())
                                       return false;
                                   for (size_t i = 0; i < a.transforms.size(); ++i)
                                       if (a.transforms[i].kind != b.transforms[i].kind) return false;
                                   return true;
                               })) {
            bad(root + ".branchings", "disagrees with what the name '" + cfg.name + "' means");
        }
        if (!have_train_red)
            cfg.train_reduction = ns.train_red;
        else if (cfg.train_reduction != ns.train_red)
            bad(root + ".train_reduction", "disagrees with the name '" + cfg.name + "'");
        if (!have_infer_red)
            cfg.infer_reduction = ns.infer_red;
        else if (cfg.infer_reduction != ns.infer_red)
            bad(root + ".infer_reduction", "disagrees with the name '" + cfg.name + "'");
        if (!have_tta)
            cfg.tta = ns.tta;
        else if (cfg.tta != ns.tta)
            bad(root + ".tta", "disagrees with the name '" + cfg.name + "'");
    }

    int total = 1;
    for (const auto& b : cfg.branchings) total *= static_cast<int>(b.transforms.size());
    if (total > 64) bad(root + ".branchings", "total branch count " + std::to_string(total) + " > 64");
    return cfg;
}

ojson config_echo(const ExperimentConfig& cfg) {
    ojson j;
    j["name"] = cfg.name;
    ojson arch;
    arch["kind"] = cfg.arch.kind;
    if (cfg.arch.kind == "preact_resnet") {
        arch["depth_n"] = cfg.arch.depth_n;
        arch["layers"] = 6 * cfg.arch.depth_n + 2;
    } else if (cfg.arch.kind == "custom") {
        arch["base_width"] = cfg.arch.base_width;
        arch["blocks_per_stage"] = cfg.arch.blocks_per_stage;
    }
    arch["max_spot"] = cfg.arch.max_spot();
    j["arch"] = arch;
    ojson ds;
    ds["kind"] = cfg.dataset.kind;
    ds["path"] = cfg.dataset.path;
    ds["per_class"] = cfg.dataset.per_class;
    if (cfg.dataset.kind == "synth") {
        ojson sy;
        sy["n_train"] = cfg.dataset.synth.n_train;
        sy["n_test"] = cfg.dataset.synth.n_test;
        sy["size"] = cfg.dataset.synth.size;
        sy["num_classes"] = cfg.dataset.synth.num_classes;
        sy["gen_seed"] = cfg.dataset.synth.gen_seed;
        ds["synth"] = sy;
    }
    j["dataset"] = ds;
    ojson branchings = ojson::array();
    for (const auto& b : cfg.branchings) {
        ojson e;
        e["spot"] = b.spot;
        ojson tr = ojson::array();
        for (const auto& t : b.transforms) tr.push_back(transform_to_json(t));
        e["transforms"] = tr;
        branchings.push_back(e);
    }
    j["branchings"] = branchings;
    int total = 1;
    for (const auto& b : cfg.branchings) total *= static_cast<int>(b.transforms.size());
    j["total_branches"] = total;
    j["train_reduction"] = to_string(cfg.train_reduction);
    j["infer_reduction"] = to_string(cfg.infer_reduction);
    j["infer_reduction_effective"] = to_string(inference_reduction(cfg.infer_reduction));
    j["tta"] = cfg.tta;
    j["augment"] = to_string(cfg.augment);
    ojson optim;
    optim["lr0"] = cfg.optim.lr0;
    optim["momentum"] = cfg.optim.momentum;
    optim["nesterov"] = cfg.optim.nesterov;
    optim["weight_decay"] = cfg.optim.weight_decay;
    ojson sched = ojson::array();
    for (const auto& s : cfg.optim.schedule) sched.push_back({s.epoch, s.divisor});
    optim["schedule"] = sched;
    optim["epochs"] = cfg.optim.epochs;
    optim["batch_size"] = cfg.optim.batch_size;
    j["optim"] = optim;
    j["seeds"] = cfg.seeds;
    j["checkpoint"] = cfg.checkpoint;
    if (cfg.impact) {
        ojson ic;
        ic["mode"] = cfg.impact->mode;
        ic["transform"] = transform_to_json(cfg.impact->transform);
        if (cfg.impact->mode == "inference") {
            ojson spots = ojson::array();
            if (cfg.impact->spots.empty()) {
                spots = "all";
            } else {
                for (int s : cfg.impact->spots) spots.push_back(s);
            }
            ic["spots"] = spots;
            ic["checkpoint"] = cfg.impact->checkpoint;
        } else {
            ic["spot"] = cfg.impact->spot;
        }
        j["impact"] = ic;
    }
    if (cfg.bench) {
        ojson b;
        b["configs"] = cfg.bench->configs;
        b["batch_size"] = cfg.bench->batch_size;
        b["warmup"] = cfg.bench->warmup;
        b["measured"] = cfg.bench->measured;
        b["input_size"] = cfg.bench->input_size;
        j["bench"] = b;
    }
    return j;
}

}  // namespace branchnet
