#include "mrr/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <ctime>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mrr/kernels.hpp"
#include "mrr/rng.hpp"

namespace mrr::cli {

namespace {

std::string fmt_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

std::string fmt_fixed(double v, int digits = 4) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

double to_double(const std::string& v, const std::string& key) {
    double out = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw config_error("config key '" + key + "' expects a number, got '" + v + "'");
    return out;
}

std::uint64_t to_u64(const std::string& v, const std::string& key) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw config_error("config key '" + key + "' expects a non-negative integer, got '" + v +
                           "'");
    return out;
}

std::size_t to_size(const std::string& v, const std::string& key) {
    return static_cast<std::size_t>(to_u64(v, key));
}

bool to_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw config_error("config key '" + key + "' expects true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::string_view method_name(Method m) {
    switch (m) {
        case Method::moment18x4: return "moment18x4";
        case Method::moment12x4: return "moment12x4";
        case Method::rawspace12x50: return "rawspace12x50";
        case Method::pca30: return "pca30";
        case Method::ae_reconstruction: return "ae_reconstruction";
        case Method::ae_clustering: return "ae_clustering";
        case Method::ae_both: return "ae_both";
    }
    return "?";
}

Method parse_method(std::string_view name) {
    for (Method m : all_methods())
        if (method_name(m) == name) return m;
    throw config_error("unknown method '" + std::string(name) + "'");
}

const std::vector<Method>& all_methods() {
    static const std::vector<Method> methods = {
        Method::moment18x4,    Method::moment12x4,       Method::rawspace12x50, Method::pca30,
        Method::ae_reconstruction, Method::ae_clustering, Method::ae_both};
    return methods;
}

void RunConfig::validate() const {
    if (attempts == 0) throw config_error("attempts must be >= 1");
    if (methods.empty()) throw config_error("at least one method is required");
    if (net_layers.size() < 2) throw config_error("net_layers needs at least two widths");
    for (std::size_t s : net_layers)
        if (s == 0) throw config_error("net_layers entries must be positive");
    if (!(train_eta > 0.0)) throw config_error("train_eta must be > 0");
    if (!(train_rho >= 0.0 && train_rho < 1.0)) throw config_error("train_rho must lie in [0,1)");
    if (train_weight_batch == 0) throw config_error("train_weight_batch must be >= 1");
    if (train_kmeans_batch == 0) throw config_error("train_kmeans_batch must be >= 1");
    if (train_refresh_period == 0) throw config_error("train_refresh_period must be >= 1");
    if (train_cluster_steps == 0) throw config_error("train_cluster_steps must be >= 1");
    if (cluster_count == 0) throw config_error("cluster_count must be >= 1");
    if (cluster_prune_threshold < 0.0 || cluster_prune_threshold >= 1.0)
        throw config_error("cluster_prune_threshold must lie in [0,1)");
    if (!(cluster_sigma > 0.0)) throw config_error("cluster_sigma must be > 0");
    if (ridge_lambda < 0.0) throw config_error("ridge_lambda must be >= 0");
    if (data_dir.empty()) synth.validate();
}

void apply_config_override(RunConfig& cfg, const std::string& key, const std::string& value) {
    auto& synth = cfg.synth;
    if (key == "seed") cfg.seed = to_u64(value, key);
    else if (key == "attempts") cfg.attempts = to_size(value, key);
    else if (key == "methods") {
        cfg.methods.clear();
        for (const auto& name : split_list(value)) cfg.methods.push_back(parse_method(name));
        if (cfg.methods.empty()) throw config_error("config key 'methods' must not be empty");
    } else if (key == "data_dir") cfg.data_dir = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "attempt_regenerate") cfg.attempt_regenerate = to_bool(value, key);
    else if (key == "synth_train_low") synth.n_runs[0][0] = to_size(value, key);
    else if (key == "synth_train_high") synth.n_runs[0][1] = to_size(value, key);
    else if (key == "synth_valid_low") synth.n_runs[1][0] = to_size(value, key);
    else if (key == "synth_valid_high") synth.n_runs[1][1] = to_size(value, key);
    else if (key == "synth_test_low") synth.n_runs[2][0] = to_size(value, key);
    else if (key == "synth_test_high") synth.n_runs[2][1] = to_size(value, key);
    else if (key == "synth_series_length") synth.series_length = to_size(value, key);
    else if (key == "synth_noise") synth.noise_scale = to_double(value, key);
    else if (key == "synth_modes") synth.modes = to_size(value, key);
    else if (key == "synth_mode_separation") synth.mode_separation = to_double(value, key);
    else if (key == "synth_within_spread") synth.within_spread = to_double(value, key);
    else if (key == "synth_mrr_within_weight") synth.mrr_within_weight = to_double(value, key);
    else if (key == "synth_mrr_noise") synth.mrr_noise = to_double(value, key);
    else if (key == "synth_redundant_channels") synth.redundant_channels = to_bool(value, key);
    else if (key == "net_layers") {
        cfg.net_layers.clear();
        for (const auto& s : split_list(value)) cfg.net_layers.push_back(to_size(s, key));
    } else if (key == "train_eta") cfg.train_eta = to_double(value, key);
    else if (key == "train_rho") cfg.train_rho = to_double(value, key);
    else if (key == "train_weight_batch") cfg.train_weight_batch = to_size(value, key);
    else if (key == "train_kmeans_batch") cfg.train_kmeans_batch = to_size(value, key);
    else if (key == "train_iters_reconstruction")
        cfg.train_iters_reconstruction = to_size(value, key);
    else if (key == "train_iters_clustering") cfg.train_iters_clustering = to_size(value, key);
    else if (key == "train_refresh_period") cfg.train_refresh_period = to_size(value, key);
    else if (key == "train_cluster_steps") cfg.train_cluster_steps = to_size(value, key);
    else if (key == "train_combined_simultaneous")
        cfg.train_combined_simultaneous = to_bool(value, key);
    else if (key == "cluster_kind") {
        if (value == "kmeans") cfg.cluster_kind = cluster::Kind::kmeans;
        else if (value == "igmm") cfg.cluster_kind = cluster::Kind::igmm;
        else throw config_error("config key 'cluster_kind' expects kmeans or igmm");
    } else if (key == "cluster_count") cfg.cluster_count = to_size(value, key);
    else if (key == "cluster_prune_threshold")
        cfg.cluster_prune_threshold = to_double(value, key);
    else if (key == "cluster_sigma") cfg.cluster_sigma = to_double(value, key);
    else if (key == "loss_weight_reconstruction")
        cfg.loss_weight_reconstruction = to_double(value, key);
    else if (key == "loss_weight_clustering") cfg.loss_weight_clustering = to_double(value, key);
    else if (key == "ridge_lambda") cfg.ridge_lambda = to_double(value, key);
    else throw config_error("unknown config key '" + key + "'");
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error(origin + ":" + std::to_string(ln) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw config_error(origin + ":" + std::to_string(ln) + ": empty config key");
        apply_config_override(cfg, key, value);
    }
    return cfg;
}

RunConfig parse_config_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw config_error("cannot open config file " + file.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), file.string());
}

namespace {

std::map<std::string, std::string> snapshot_config(const RunConfig& cfg) {
    std::map<std::string, std::string> snap;
    snap["seed"] = std::to_string(cfg.seed);
    snap["attempts"] = std::to_string(cfg.attempts);
    std::string methods;
    for (Method m : cfg.methods) {
        if (!methods.empty()) methods += ',';
        methods += method_name(m);
    }
    snap["methods"] = methods;
    snap["data_dir"] = cfg.data_dir;
    snap["out_dir"] = cfg.out_dir;
    snap["attempt_regenerate"] = cfg.attempt_regenerate ? "true" : "false";
    snap["synth_train_low"] = std::to_string(cfg.synth.n_runs[0][0]);
    snap["synth_train_high"] = std::to_string(cfg.synth.n_runs[0][1]);
    snap["synth_valid_low"] = std::to_string(cfg.synth.n_runs[1][0]);
    snap["synth_valid_high"] = std::to_string(cfg.synth.n_runs[1][1]);
    snap["synth_test_low"] = std::to_string(cfg.synth.n_runs[2][0]);
    snap["synth_test_high"] = std::to_string(cfg.synth.n_runs[2][1]);
    snap["synth_series_length"] = std::to_string(cfg.synth.series_length);
    snap["synth_noise"] = fmt_double(cfg.synth.noise_scale);
    snap["synth_modes"] = std::to_string(cfg.synth.modes);
    snap["synth_mode_separation"] = fmt_double(cfg.synth.mode_separation);
    snap["synth_within_spread"] = fmt_double(cfg.synth.within_spread);
    snap["synth_mrr_within_weight"] = fmt_double(cfg.synth.mrr_within_weight);
    snap["synth_mrr_noise"] = fmt_double(cfg.synth.mrr_noise);
    snap["synth_redundant_channels"] = cfg.synth.redundant_channels ? "true" : "false";
    std::string layers;
    for (std::size_t s : cfg.net_layers) {
        if (!layers.empty()) layers += ',';
        layers += std::to_string(s);
    }
    snap["net_layers"] = layers;
    snap["train_eta"] = fmt_double(cfg.train_eta);
    snap["train_rho"] = fmt_double(cfg.train_rho);
    snap["train_weight_batch"] = std::to_string(cfg.train_weight_batch);
    snap["train_kmeans_batch"] = std::to_string(cfg.train_kmeans_batch);
    snap["train_iters_reconstruction"] = std::to_string(cfg.train_iters_reconstruction);
    snap["train_iters_clustering"] = std::to_string(cfg.train_iters_clustering);
    snap["train_refresh_period"] = std::to_string(cfg.train_refresh_period);
    snap["train_cluster_steps"] = std::to_string(cfg.train_cluster_steps);
    snap["train_combined_simultaneous"] = cfg.train_combined_simultaneous ? "true" : "false";
    snap["cluster_kind"] = std::string(cluster::kind_name(cfg.cluster_kind));
    snap["cluster_count"] = std::to_string(cfg.cluster_count);
    snap["cluster_prune_threshold"] = fmt_double(cfg.cluster_prune_threshold);
    snap["cluster_sigma"] = fmt_double(cfg.cluster_sigma);
    snap["loss_weight_reconstruction"] = fmt_double(cfg.loss_weight_reconstruction);
    snap["loss_weight_clustering"] = fmt_double(cfg.loss_weight_clustering);
    snap["ridge_lambda"] = fmt_double(cfg.ridge_lambda);
    return snap;
}

std::vector<feat::FeatureVector> subset(const std::vector<feat::FeatureVector>& fvs,
                                        data::Split split, data::Wear wear) {
    std::vector<feat::FeatureVector> out;
    for (const auto& fv : fvs)
        if (fv.split == split && fv.wear == wear) out.push_back(fv);
    return out;
}

AttemptResult evaluate_features(const std::vector<feat::FeatureVector>& fvs, double lambda) {
    AttemptResult res;
    const auto models = reg::fit_per_wear(fvs, lambda);
    const auto test_low = subset(fvs, data::Split::test, data::Wear::low);
    const auto test_high = subset(fvs, data::Split::test, data::Wear::high);
    if (models.low && !test_low.empty()) {
        const auto ev = reg::evaluate(*models.low, test_low);
        res.low = CellResult{ev.rmse, ev.n};
    }
    if (models.high && !test_high.empty()) {
        const auto ev = reg::evaluate(*models.high, test_high);
        res.high = CellResult{ev.rmse, ev.n};
    }
    return res;
}

std::vector<feat::FeatureVector> moment_features(const data::DatasetSplit& ds,
                                                 feat::MomentPreset preset) {
    std::vector<feat::FeatureVector> out;
    out.reserve(ds.runs.size());
    for (const auto& run : ds.runs) out.push_back(feat::extract_moments(run, preset));
    return out;
}

// Normalized 600-dim downsampled features for every run; the min-max
// normalizer is fit on the low-wear training split only.
std::vector<feat::FeatureVector> rawspace_features(const data::DatasetSplit& ds) {
    std::vector<Vec> train_raw;
    for (const auto& run : ds.runs)
        if (run.split == data::Split::train && run.wear == data::Wear::low)
            train_raw.push_back(feat::rawspace_raw(run));
    if (train_raw.empty())
        throw data_error("rawspace features need at least one low-wear training run");
    const auto norm = feat::Normalizer::fit(train_raw);
    std::vector<feat::FeatureVector> out;
    out.reserve(ds.runs.size());
    for (const auto& run : ds.runs) out.push_back(feat::extract_rawspace(run, norm));
    return out;
}

std::vector<feat::FeatureVector> pca_features(const std::vector<feat::FeatureVector>& raw,
                                              std::size_t components) {
    std::vector<Vec> train;
    for (const auto& fv : raw)
        if (fv.split == data::Split::train && fv.wear == data::Wear::low)
            train.push_back(fv.values);
    const auto model = feat::PcaModel::fit(train, components);
    std::vector<feat::FeatureVector> out;
    out.reserve(raw.size());
    for (const auto& fv : raw) out.push_back(feat::project_pca(model, fv));
    return out;
}

bool is_ae_method(Method m) {
    return m == Method::ae_reconstruction || m == Method::ae_clustering || m == Method::ae_both;
}

train::TrainConfig make_train_config(const RunConfig& cfg, Method m, std::uint64_t seed) {
    train::TrainConfig tc;
    switch (m) {
        case Method::ae_reconstruction:
            tc.schedule = {{train::PhaseKind::reconstruction, cfg.train_iters_reconstruction}};
            break;
        case Method::ae_clustering:
            tc.schedule = {{train::PhaseKind::clustering, cfg.train_iters_clustering}};
            break;
        case Method::ae_both:
            if (cfg.train_combined_simultaneous) {
                tc.schedule = {{train::PhaseKind::combined,
                                cfg.train_iters_reconstruction + cfg.train_iters_clustering}};
            } else {
                tc.schedule = {{train::PhaseKind::reconstruction, cfg.train_iters_reconstruction},
                               {train::PhaseKind::clustering, cfg.train_iters_clustering}};
            }
            break;
        default: throw config_error("not an autoencoder method");
    }
    tc.eta = cfg.train_eta;
    tc.rho = cfg.train_rho;
    tc.weight_batch = cfg.train_weight_batch;
    tc.kmeans_batch = cfg.train_kmeans_batch;
    tc.cluster_kind = cfg.cluster_kind;
    tc.cluster_count = cfg.cluster_count;
    tc.prune_threshold = cfg.cluster_prune_threshold;
    tc.sigma = cfg.cluster_sigma;
    tc.loss_weight_reconstruction = cfg.loss_weight_reconstruction;
    tc.loss_weight_clustering = cfg.loss_weight_clustering;
    tc.cluster_refresh_period = cfg.train_refresh_period;
    tc.cluster_steps_per_refresh = cfg.train_cluster_steps;
    tc.seed = seed;
    return tc;
}

// Training pool for the autoencoder: low-wear train + validation runs,
// mirroring the protocol that reuses the trained weights for high wear.
std::vector<feat::FeatureVector> ae_training_pool(const std::vector<feat::FeatureVector>& raw) {
    std::vector<feat::FeatureVector> out;
    for (const auto& fv : raw)
        if (fv.wear == data::Wear::low && fv.split != data::Split::test) out.push_back(fv);
    if (out.empty()) throw data_error("autoencoder training needs low-wear train/validation runs");
    return out;
}

std::vector<HistogramBin> mrr_histogram(const data::DatasetSplit& ds) {
    // Fig. 3 style bins: width 5 over the low bin [50,100] and the high bin
    // [140,200], one histogram per split.
    std::vector<HistogramBin> bins;
    for (data::Split s : {data::Split::train, data::Split::validation, data::Split::test}) {
        auto add_range = [&](double lo, double hi) {
            for (double b = lo; b < hi - 1e-9; b += 5.0) {
                HistogramBin bin;
                bin.split = std::string(data::split_name(s));
                bin.lo = b;
                bin.hi = b + 5.0;
                for (const auto& run : ds.runs) {
                    if (run.split != s) continue;
                    const bool last = b + 5.0 >= hi - 1e-9;
                    if (run.mrr >= bin.lo && (run.mrr < bin.hi || (last && run.mrr == bin.hi)))
                        ++bin.count;
                }
                bins.push_back(std::move(bin));
            }
        };
        add_range(50.0, 100.0);
        add_range(140.0, 200.0);
    }
    return bins;
}

std::map<std::string, std::size_t> count_cells(const data::DatasetSplit& ds) {
    std::map<std::string, std::size_t> counts;
    for (data::Split s : {data::Split::train, data::Split::validation, data::Split::test})
        for (data::Wear w : {data::Wear::low, data::Wear::high, data::Wear::unknown})
            counts[std::string(data::split_name(s)) + "/" + std::string(data::wear_name(w))] =
                ds.count(s, w);
    return counts;
}

}  // namespace

std::optional<double> MethodResult::mean_rmse(data::Wear wear) const {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& a : attempts) {
        const auto& cell = wear == data::Wear::low ? a.low : a.high;
        if (cell) {
            total += cell->rmse;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return total / static_cast<double>(n);
}

data::DatasetSplit dataset_for_attempt(const RunConfig& cfg, std::size_t attempt) {
    if (!cfg.data_dir.empty()) return data::load_dataset(cfg.data_dir);
    data::SyntheticSpec spec = cfg.synth;
    spec.seed = Rng(cfg.seed).stream("data", cfg.attempt_regenerate ? attempt : 0).seed();
    return data::generate_synthetic(spec);
}

ExperimentReport run_experiment(const RunConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();

    ExperimentReport report;
    report.config_snapshot = snapshot_config(cfg);
    report.seed = cfg.seed;
    report.attempts = cfg.attempts;
    report.kernel_backend = std::string(kern::backend_name(kern::active_backend()));
    for (Method m : cfg.methods) report.methods[m] = MethodResult{};

    const bool fixed_data = !cfg.data_dir.empty() || !cfg.attempt_regenerate;
    std::optional<data::DatasetSplit> fixed;
    Rng root(cfg.seed);

    for (std::size_t attempt = 0; attempt < cfg.attempts; ++attempt) {
        const data::DatasetSplit* ds = nullptr;
        data::DatasetSplit fresh;
        if (fixed_data) {
            if (!fixed) fixed = dataset_for_attempt(cfg, 0);
            ds = &*fixed;
        } else {
            fresh = dataset_for_attempt(cfg, attempt);
            ds = &fresh;
        }
        if (attempt == 0) {
            report.histogram = mrr_histogram(*ds);
            report.split_wear_counts = count_cells(*ds);
        }

        // Shared inputs for this attempt; built lazily so moment-only method
        // lists work on datasets where the rawspace pipeline cannot.
        std::optional<std::vector<feat::FeatureVector>> raw;
        auto raw_features_of = [&]() -> const std::vector<feat::FeatureVector>& {
            if (!raw) raw = rawspace_features(*ds);
            return *raw;
        };
        std::optional<nn::Network> init_net;  // identical initial weights for all AE methods
        auto initial_network = [&]() -> const nn::Network& {
            if (!init_net)
                init_net = nn::init_network(cfg.net_layers,
                                            root.stream("init", attempt).seed());
            return *init_net;
        };
        const std::uint64_t train_seed = root.stream("train", attempt).seed();

        for (Method m : cfg.methods) {
            MethodResult& mr = report.methods[m];
            AttemptResult ar;
            try {
                switch (m) {
                    case Method::moment18x4:
                        ar = evaluate_features(moment_features(*ds, feat::MomentPreset::all18),
                                               cfg.ridge_lambda);
                        break;
                    case Method::moment12x4:
                        ar = evaluate_features(
                            moment_features(*ds, feat::MomentPreset::retained12),
                            cfg.ridge_lambda);
                        break;
                    case Method::rawspace12x50:
                        ar = evaluate_features(raw_features_of(), cfg.ridge_lambda);
                        break;
                    case Method::pca30:
                        ar = evaluate_features(pca_features(raw_features_of(), 30),
                                               cfg.ridge_lambda);
                        break;
                    default: {
                        const auto& raw_all = raw_features_of();
                        const auto pool = ae_training_pool(raw_all);
                        auto result = train::train(initial_network(), pool,
                                                   make_train_config(cfg, m, train_seed));
                        mr.train_reports.push_back(result.report);
                        if (result.report.aborted)
                            throw numeric_error("training aborted: " +
                                                result.report.abort_reason);
                        const nn::Network high_net = nn::reuse_weights(result.net);
                        std::vector<feat::FeatureVector> latent;
                        latent.reserve(raw_all.size());
                        for (const auto& fv : raw_all) {
                            const nn::Network& use =
                                fv.wear == data::Wear::high ? high_net : result.net;
                            feat::FeatureVector lv = fv;
                            lv.tag = feat::Extractor::latent;
                            lv.values = nn::encode(use, fv.values);
                            latent.push_back(std::move(lv));
                        }
                        ar = evaluate_features(latent, cfg.ridge_lambda);
                        break;
                    }
                }
            } catch (const std::exception& e) {
                ar.error = e.what();
                report.incomplete = true;
            }
            mr.attempts.push_back(std::move(ar));
        }
    }

    report.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char ts[32];
    std::strftime(ts, sizeof ts, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    report.timestamp = ts;
    return report;
}

namespace {

nlohmann::json train_report_to_json_obj(const train::TrainReport& r) {
    nlohmann::json j;
    j["seed"] = r.seed;
    j["config_hash"] = r.config_hash;
    j["wall_time_s"] = r.wall_time_s;
    j["cluster_refreshes"] = r.cluster_refreshes;
    j["reconstruction_grad_calls"] = r.reconstruction_grad_calls;
    j["clustering_grad_calls"] = r.clustering_grad_calls;
    j["aborted"] = r.aborted;
    j["abort_reason"] = r.abort_reason;
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& p : r.trace)
        trace.push_back({p.iter, std::string(train::phase_name(p.phase)), p.loss});
    j["trace"] = std::move(trace);
    return j;
}

train::TrainReport train_report_from_json_obj(const nlohmann::json& j) {
    train::TrainReport r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_hash = j.at("config_hash").get<std::uint64_t>();
    r.wall_time_s = j.at("wall_time_s").get<double>();
    r.cluster_refreshes = j.at("cluster_refreshes").get<std::size_t>();
    r.reconstruction_grad_calls = j.at("reconstruction_grad_calls").get<std::size_t>();
    r.clustering_grad_calls = j.at("clustering_grad_calls").get<std::size_t>();
    r.aborted = j.at("aborted").get<bool>();
    r.abort_reason = j.at("abort_reason").get<std::string>();
    for (const auto& p : j.at("trace")) {
        train::TracePoint tp;
        tp.iter = p.at(0).get<std::size_t>();
        const std::string phase = p.at(1).get<std::string>();
        tp.phase = phase == "reconstruction" ? train::PhaseKind::reconstruction
                   : phase == "clustering"   ? train::PhaseKind::clustering
                                             : train::PhaseKind::combined;
        tp.loss = p.at(2).get<double>();
        r.trace.push_back(tp);
    }
    return r;
}

}  // namespace

std::string report_to_json(const ExperimentReport& report) {
    nlohmann::json j;
    j["config"] = report.config_snapshot;
    j["seed"] = report.seed;
    j["attempts"] = report.attempts;
    j["kernel_backend"] = report.kernel_backend;
    j["incomplete"] = report.incomplete;
    j["wall_time_s"] = report.wall_time_s;
    j["timestamp"] = report.timestamp;
    j["split_wear_counts"] = report.split_wear_counts;

    nlohmann::json hist = nlohmann::json::array();
    for (const auto& b : report.histogram)
        hist.push_back({{"split", b.split}, {"lo", b.lo}, {"hi", b.hi}, {"count", b.count}});
    j["histogram"] = std::move(hist);

    nlohmann::json methods;
    for (const auto& [m, mr] : report.methods) {
        nlohmann::json jm;
        nlohmann::json attempts = nlohmann::json::array();
        for (const auto& a : mr.attempts) {
            nlohmann::json ja;
            if (a.low) ja["low"] = {{"rmse", a.low->rmse}, {"n", a.low->n}};
            else ja["low"] = nullptr;
            if (a.high) ja["high"] = {{"rmse", a.high->rmse}, {"n", a.high->n}};
            else ja["high"] = nullptr;
            ja["error"] = a.error;
            attempts.push_back(std::move(ja));
        }
        jm["attempts"] = std::move(attempts);
        if (auto mean = mr.mean_rmse(data::Wear::low)) jm["mean_low"] = *mean;
        else jm["mean_low"] = nullptr;
        if (auto mean = mr.mean_rmse(data::Wear::high)) jm["mean_high"] = *mean;
        else jm["mean_high"] = nullptr;
        nlohmann::json reports = nlohmann::json::array();
        for (const auto& tr : mr.train_reports) reports.push_back(train_report_to_json_obj(tr));
        jm["train_reports"] = std::move(reports);
        methods[std::string(method_name(m))] = std::move(jm);
    }
    j["methods"] = std::move(methods);
    return j.dump(2);
}

ExperimentReport report_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw data_error("malformed report: parse error at byte " + std::to_string(e.byte) +
                         ": " + e.what());
    }
    try {
        ExperimentReport report;
        report.config_snapshot =
            j.at("config").get<std::map<std::string, std::string>>();
        report.seed = j.at("seed").get<std::uint64_t>();
        report.attempts = j.at("attempts").get<std::size_t>();
        report.kernel_backend = j.at("kernel_backend").get<std::string>();
        report.incomplete = j.at("incomplete").get<bool>();
        report.wall_time_s = j.at("wall_time_s").get<double>();
        report.timestamp = j.at("timestamp").get<std::string>();
        report.split_wear_counts =
            j.at("split_wear_counts").get<std::map<std::string, std::size_t>>();
        for (const auto& b : j.at("histogram")) {
            HistogramBin bin;
            bin.split = b.at("split").get<std::string>();
            bin.lo = b.at("lo").get<double>();
            bin.hi = b.at("hi").get<double>();
            bin.count = b.at("count").get<std::size_t>();
            report.histogram.push_back(std::move(bin));
        }
        for (const auto& [name, jm] : j.at("methods").items()) {
            MethodResult mr;
            for (const auto& ja : jm.at("attempts")) {
                AttemptResult a;
                if (!ja.at("low").is_null())
                    a.low = CellResult{ja.at("low").at("rmse").get<double>(),
                                       ja.at("low").at("n").get<std::size_t>()};
                if (!ja.at("high").is_null())
                    a.high = CellResult{ja.at("high").at("rmse").get<double>(),
                                        ja.at("high").at("n").get<std::size_t>()};
                a.error = ja.at("error").get<std::string>();
                mr.attempts.push_back(std::move(a));
            }
            for (const auto& jr : jm.at("train_reports"))
                mr.train_reports.push_back(train_report_from_json_obj(jr));
            report.methods[parse_method(name)] = std::move(mr);
        }
        return report;
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("malformed report: ") + e.what());
    }
}

std::string render_tables(const ExperimentReport& report) {
    std::ostringstream os;

    auto rule = [&](std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) os << '=';
        os << '\n';
    };

    {
        const std::string title = "Dataset counts (splits x wear)";
        os << title << '\n';
        rule(title.size());
        os << "split          low wear  high wear  unknown\n";
        for (const char* s : {"train", "validation", "test"}) {
            os << s;
            for (std::size_t pad = std::string(s).size(); pad < 12; ++pad) os << ' ';
            for (const char* w : {"low", "high", "unknown"}) {
                auto it = report.split_wear_counts.find(std::string(s) + "/" + w);
                const std::string v =
                    it == report.split_wear_counts.end() ? "-" : std::to_string(it->second);
                for (std::size_t pad = v.size(); pad < 10; ++pad) os << ' ';
                os << v;
            }
            os << '\n';
        }
        os << '\n';
    }

    auto cell_str = [&](const std::optional<double>& v) {
        return v ? fmt_fixed(*v) : std::string("-");
    };

    auto method_table = [&](const std::string& title, bool ae) {
        std::vector<std::pair<Method, const MethodResult*>> rows;
        for (const auto& [m, mr] : report.methods)
            if (is_ae_method(m) == ae) rows.emplace_back(m, &mr);
        if (rows.empty()) return;
        os << title << '\n';
        rule(title.size());
        os << "method                 low wear   high wear\n";
        for (const auto& [m, mr] : rows) {
            std::string name(method_name(m));
            os << name;
            for (std::size_t pad = name.size(); pad < 20; ++pad) os << ' ';
            const std::string lo = cell_str(mr->mean_rmse(data::Wear::low));
            const std::string hi = cell_str(mr->mean_rmse(data::Wear::high));
            for (std::size_t pad = lo.size(); pad < 11; ++pad) os << ' ';
            os << lo;
            for (std::size_t pad = hi.size(); pad < 12; ++pad) os << ' ';
            os << hi;
            os << '\n';
        }
        os << '\n';
    };

    method_table("Baseline methods, mean test RMSE over " + std::to_string(report.attempts) +
                     " attempts",
                 false);
    method_table("Autoencoder latent regression, mean test RMSE over " +
                     std::to_string(report.attempts) + " attempts",
                 true);

    {
        bool any_ae = false;
        for (const auto& [m, mr] : report.methods)
            if (is_ae_method(m) && !mr.attempts.empty()) any_ae = true;
        if (any_ae) {
            const std::string title = "Low-wear test RMSE per attempt";
            os << title << '\n';
            rule(title.size());
            os << "method              ";
            std::size_t n_attempts = report.attempts;
            for (std::size_t a = 0; a < n_attempts; ++a) {
                const std::string h = "#" + std::to_string(a + 1);
                for (std::size_t pad = h.size(); pad < 9; ++pad) os << ' ';
                os << h;
            }
            os << '\n';
            for (const auto& [m, mr] : report.methods) {
                if (!is_ae_method(m)) continue;
                std::string name(method_name(m));
                os << name;
                for (std::size_t pad = name.size(); pad < 20; ++pad) os << ' ';
                for (const auto& a : mr.attempts) {
                    const std::string v = a.low ? fmt_fixed(a.low->rmse) : std::string("-");
                    for (std::size_t pad = v.size(); pad < 9; ++pad) os << ' ';
                    os << v;
                }
                os << '\n';
            }
            os << '\n';
        }
    }

    if (report.incomplete) os << "NOTE: report is incomplete; some cells failed.\n";
    return os.str();
}

void write_report_files(const std::filesystem::path& dir, const ExperimentReport& report) {
    std::filesystem::create_directories(dir);

    {
        std::ofstream out(dir / "report.json", std::ios::binary);
        if (!out) throw data_error("cannot write report.json");
        out << report_to_json(report) << '\n';
    }
    {
        std::ofstream out(dir / "tables.txt", std::ios::binary);
        out << render_tables(report);
    }
    {
        std::ofstream out(dir / "rmse.csv", std::ios::binary);
        out << "method,attempt,wear,rmse,n\n";
        for (const auto& [m, mr] : report.methods) {
            for (std::size_t a = 0; a < mr.attempts.size(); ++a) {
                const auto& at = mr.attempts[a];
                if (at.low)
                    out << method_name(m) << ',' << a << ",low," << fmt_double(at.low->rmse)
                        << ',' << at.low->n << '\n';
                if (at.high)
                    out << method_name(m) << ',' << a << ",high," << fmt_double(at.high->rmse)
                        << ',' << at.high->n << '\n';
            }
        }
    }
    {
        std::ofstream out(dir / "loss_trace.csv", std::ios::binary);
        out << "method,attempt,iter,phase,loss\n";
        for (const auto& [m, mr] : report.methods) {
            for (std::size_t a = 0; a < mr.train_reports.size(); ++a) {
                for (const auto& p : mr.train_reports[a].trace) {
                    out << method_name(m) << ',' << a << ',' << p.iter << ','
                        << train::phase_name(p.phase) << ',' << fmt_double(p.loss) << '\n';
                }
            }
        }
    }
    {
        std::ofstream out(dir / "histogram.csv", std::ios::binary);
        out << "split,bin_lo,bin_hi,count\n";
        for (const auto& b : report.histogram)
            out << b.split << ',' << fmt_double(b.lo) << ',' << fmt_double(b.hi) << ','
                << b.count << '\n';
    }
}

int cmd_generate(const RunConfig& cfg, const std::filesystem::path& out, bool force) {
    cfg.validate();
    if (!cfg.data_dir.empty())
        throw config_error("generate requires a synthetic config (data_dir must be empty)");
    const auto ds = dataset_for_attempt(cfg, 0);
    data::save_dataset(out, ds, force);
    std::cout << "wrote " << ds.runs.size() << " runs to " << out.string() << "\n";
    return 0;
}

int cmd_extract(const RunConfig& cfg, const std::string& method,
                const std::filesystem::path& out_file) {
    cfg.validate();
    const auto ds = dataset_for_attempt(cfg, 0);
    std::vector<feat::FeatureVector> fvs;
    if (method == "moment18x4") fvs = moment_features(ds, feat::MomentPreset::all18);
    else if (method == "moment12x4") fvs = moment_features(ds, feat::MomentPreset::retained12);
    else if (method == "rawspace12x50") fvs = rawspace_features(ds);
    else if (method == "pca30") fvs = pca_features(rawspace_features(ds), 30);
    else throw config_error("extract supports moment18x4, moment12x4, rawspace12x50, pca30");
    if (out_file.has_parent_path()) std::filesystem::create_directories(out_file.parent_path());
    feat::write_features_csv(out_file, fvs);
    std::cout << "wrote " << fvs.size() << " feature rows to " << out_file.string() << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& method,
              const std::filesystem::path& out_dir) {
    cfg.validate();
    const Method m = parse_method(method);
    if (!is_ae_method(m))
        throw config_error("train supports ae_reconstruction, ae_clustering, ae_both");
    const auto ds = dataset_for_attempt(cfg, 0);
    const auto raw = rawspace_features(ds);
    const auto pool = ae_training_pool(raw);
    Rng root(cfg.seed);
    auto net = nn::init_network(cfg.net_layers, root.stream("init", 0).seed());
    auto result =
        train::train(std::move(net), pool, make_train_config(cfg, m, root.stream("train", 0).seed()));

    std::filesystem::create_directories(out_dir);
    nn::save_checkpoint(out_dir / "network.ckpt", result.net);
    if (result.model) {
        std::ofstream out(out_dir / "cluster.json", std::ios::binary);
        out << cluster::to_json(*result.model) << '\n';
    }
    train::write_trace_csv(out_dir / "loss_trace.csv", result.report);
    {
        std::ofstream out(out_dir / "train_report.json", std::ios::binary);
        out << train::report_to_json(result.report) << '\n';
    }
    if (result.report.aborted) {
        std::cerr << "training aborted: " << result.report.abort_reason << "\n";
        return 4;
    }
    std::cout << "trained " << method << "; checkpoint at "
              << (out_dir / "network.ckpt").string() << "\n";
    return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                 const std::filesystem::path& out_dir) {
    cfg.validate();
    const auto ds = dataset_for_attempt(cfg, 0);
    const auto raw = rawspace_features(ds);
    const auto net = nn::load_checkpoint(checkpoint);
    const auto high_net = nn::reuse_weights(net);
    std::vector<feat::FeatureVector> latent;
    latent.reserve(raw.size());
    for (const auto& fv : raw) {
        feat::FeatureVector lv = fv;
        lv.tag = feat::Extractor::latent;
        lv.values = nn::encode(fv.wear == data::Wear::high ? high_net : net, fv.values);
        latent.push_back(std::move(lv));
    }
    const AttemptResult res = evaluate_features(latent, cfg.ridge_lambda);

    nlohmann::json j;
    if (res.low) j["low"] = {{"rmse", res.low->rmse}, {"n", res.low->n}};
    else j["low"] = nullptr;
    if (res.high) j["high"] = {{"rmse", res.high->rmse}, {"n", res.high->n}};
    else j["high"] = nullptr;
    std::filesystem::create_directories(out_dir);
    std::ofstream out(out_dir / "eval.json", std::ios::binary);
    out << j.dump(2) << '\n';
    if (res.low) std::cout << "low wear RMSE:  " << fmt_fixed(res.low->rmse) << "\n";
    if (res.high) std::cout << "high wear RMSE: " << fmt_fixed(res.high->rmse) << "\n";
    return 0;
}

int cmd_run(const RunConfig& cfg) {
    const ExperimentReport report = run_experiment(cfg);
    write_report_files(cfg.out_dir, report);
    std::cout << render_tables(report);
    std::cout << "report written to " << cfg.out_dir << "\n";
    return report.incomplete ? 4 : 0;
}

int cmd_report(const std::filesystem::path& report_file, const std::filesystem::path& out_dir) {
    std::ifstream in(report_file, std::ios::binary);
    if (!in) throw data_error("cannot open report " + report_file.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    const ExperimentReport report = report_from_json(buf.str());
    std::cout << render_tables(report);
    write_report_files(out_dir, report);
    return 0;
}

}  // namespace mrr::cli
