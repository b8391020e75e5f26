#include "mrr/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mrr/rng.hpp"

namespace mrr::data {

namespace {

const std::array<std::string, 18> kVariables = {
    "usage_backing_film",
    "usage_dresser",
    "usage_dresser_table",
    "usage_membrane",
    "usage_pressurized_sheet",
    "usage_polishing_table",
    "pressure_pressurized_chamber",
    "pressure_main_outer_air_bag",
    "pressure_center_air_bag",
    "pressure_retainer_ring",
    "pressure_ripple_air_bag",
    "pressure_edge_air_bag",
    "slurry_flow_line_a",
    "slurry_flow_line_b",
    "slurry_flow_line_c",
    "rotation_wafer",
    "rotation_stage",
    "rotation_head",
};

const std::array<std::string, 12> kRetained = {
    "usage_backing_film",
    "usage_dresser",
    "usage_dresser_table",
    "usage_membrane",
    "usage_pressurized_sheet",
    "usage_polishing_table",
    "pressure_pressurized_chamber",
    "pressure_main_outer_air_bag",
    "pressure_center_air_bag",
    "pressure_retainer_ring",
    "pressure_ripple_air_bag",
    "pressure_edge_air_bag",
};

constexpr double kTau = 6.283185307179586476925286766559;

std::string format_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

double parse_double(std::string_view s, const std::string& context) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw data_error("bad numeric value '" + std::string(s) + "' in " + context);
    return v;
}

long parse_long(std::string_view s, const std::string& context) {
    long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw data_error("bad integer value '" + std::string(s) + "' in " + context);
    return v;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

// Reads all lines, stripping one optional trailing CR per line.
std::vector<std::string> read_lines(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw data_error("cannot open " + file.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

}  // namespace

std::string_view split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "?";
}

std::string_view wear_name(Wear w) {
    switch (w) {
        case Wear::low: return "low";
        case Wear::high: return "high";
        case Wear::unknown: return "unknown";
    }
    return "?";
}

Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "validation") return Split::validation;
    if (s == "test") return Split::test;
    throw data_error("unknown split '" + std::string(s) + "'");
}

Wear wear_for_mrr(double mrr) {
    if (mrr >= 50.0 && mrr <= 100.0) return Wear::low;
    if (mrr >= 140.0 && mrr <= 200.0) return Wear::high;
    return Wear::unknown;
}

const std::array<std::string, 18>& variable_names() { return kVariables; }
const std::array<std::string, 12>& retained_variable_names() { return kRetained; }

bool is_known_variable(std::string_view name) {
    return std::find(kVariables.begin(), kVariables.end(), name) != kVariables.end();
}

std::size_t DatasetSplit::count(Split s, Wear w) const {
    std::size_t n = 0;
    for (const auto& r : runs) n += (r.split == s && r.wear == w) ? 1 : 0;
    return n;
}

std::vector<const WaferRun*> DatasetSplit::select(Split s, Wear w) const {
    std::vector<const WaferRun*> out;
    for (const auto& r : runs)
        if (r.split == s && r.wear == w) out.push_back(&r);
    return out;
}

std::vector<const WaferRun*> DatasetSplit::select_wear(Wear w) const {
    std::vector<const WaferRun*> out;
    for (const auto& r : runs)
        if (r.wear == w) out.push_back(&r);
    return out;
}

void SyntheticSpec::validate() const {
    if (series_length < 8) throw config_error("synthetic series_length must be >= 8");
    if (!(noise_scale > 0.0)) throw config_error("synthetic noise_scale must be > 0");
    if (modes == 0) throw config_error("synthetic modes must be >= 1");
    if (!(mode_separation >= 0.0) || !(within_spread > 0.0))
        throw config_error("synthetic spread parameters must be positive");
}

namespace {

struct CellDef {
    Split split;
    Wear wear;
};

constexpr std::array<CellDef, 6> kCells = {{
    {Split::train, Wear::low},
    {Split::train, Wear::high},
    {Split::validation, Wear::low},
    {Split::validation, Wear::high},
    {Split::test, Wear::low},
    {Split::test, Wear::high},
}};

std::size_t cell_count(const SyntheticSpec& spec, const CellDef& cell) {
    std::size_t si = cell.split == Split::train ? 0 : cell.split == Split::validation ? 1 : 2;
    std::size_t wi = cell.wear == Wear::low ? 0 : 1;
    return spec.n_runs[si][wi];
}

WaferRun synth_run(const SyntheticSpec& spec, const CellDef& cell, std::size_t global_index,
                   Rng rng) {
    const std::size_t L = spec.series_length;
    const double lo = cell.wear == Wear::low ? 50.0 : 140.0;
    const double hi = cell.wear == Wear::low ? 100.0 : 200.0;

    // Latent operating mode plus small within-mode deviations of the usage
    // and pressure factors.
    const std::size_t mode = rng.index(spec.modes);
    const double m = spec.modes == 1
                         ? 0.0
                         : 2.0 * static_cast<double>(mode) / static_cast<double>(spec.modes - 1) -
                               1.0;
    const double du = rng.normal();
    const double dp = rng.normal();
    const double u = spec.mode_separation * m + spec.within_spread * du;
    const double p = 0.8 * spec.mode_separation * m + spec.within_spread * dp;

    // Monotone MRR link: increasing in both u and p, mode dominant.
    double t = 0.5 + 0.22 * m + spec.mrr_within_weight * 0.5 * (du + dp) +
               spec.mrr_noise * rng.normal();
    t = std::clamp(t, 0.02, 0.98);

    WaferRun run;
    run.run_id = "synth-" + std::to_string(1000000 + global_index).substr(1);
    run.split = cell.split;
    run.wear = cell.wear;
    run.mrr = lo + (hi - lo) * t;

    const double level_noise = 0.6 * spec.noise_scale;
    const double sample_noise = 0.5 * spec.noise_scale;

    const auto& names = variable_names();
    std::vector<Vec> usage_series(6);

    for (std::size_t j = 0; j < 18; ++j) {
        Vec s(L);
        if (j < 6) {
            // Usage counters: level set by the usage factor, slow drift up.
            const double base = 10.0 + 2.0 * static_cast<double>(j);
            const double gain = 1.0 + 0.15 * static_cast<double>(j);
            const double level = base + gain * u + level_noise * rng.normal();
            const double ramp = 2.0;
            for (std::size_t i = 0; i < L; ++i) {
                const double tt = static_cast<double>(i) / static_cast<double>(L - 1);
                s[i] = level + ramp * tt + sample_noise * rng.normal();
            }
            usage_series[j] = s;
        } else if (j < 12) {
            // Pressures: level set by the pressure factor, per-run phase
            // oscillation on top.
            const double base = 3.0 + 1.0 * static_cast<double>(j - 6);
            const double gain = 0.9 + 0.1 * static_cast<double>(j - 6);
            const double level = base + gain * p + level_noise * rng.normal();
            const double freq = 2.0 + static_cast<double>(j - 6);
            const double phase = rng.uniform();
            for (std::size_t i = 0; i < L; ++i) {
                const double tt = static_cast<double>(i) / static_cast<double>(L - 1);
                s[i] = level + 0.4 * std::sin(kTau * (freq * tt + phase)) +
                       sample_noise * rng.normal();
            }
        } else if (spec.redundant_channels) {
            // Near-duplicates of usage channels: redundant regressors whose
            // moments track the originals up to a small perturbation.
            const Vec& src = usage_series[j % 6];
            const double delta = 0.2 * spec.noise_scale;
            const double offset = 0.1 * rng.normal();
            for (std::size_t i = 0; i < L; ++i) s[i] = src[i] + offset + delta * rng.normal();
        } else {
            // Independent nuisance traces (slurry flows, rotation speeds),
            // unrelated to MRR.
            const double base = j < 15 ? 120.0 + 10.0 * static_cast<double>(j - 12)
                                       : 60.0 + 15.0 * static_cast<double>(j - 15);
            const double level = base + 1.0 * rng.normal() + level_noise * rng.normal();
            for (std::size_t i = 0; i < L; ++i) s[i] = level + sample_noise * rng.normal();
        }
        run.series[names[j]] = std::move(s);
    }
    return run;
}

}  // namespace

DatasetSplit generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng root(spec.seed);
    DatasetSplit ds;
    std::size_t global_index = 0;
    for (const auto& cell : kCells) {
        const std::size_t n = cell_count(spec, cell);
        for (std::size_t i = 0; i < n; ++i, ++global_index) {
            ds.runs.push_back(synth_run(spec, cell, global_index, root.stream("run", global_index)));
        }
    }
    return ds;
}

DatasetSplit load_dataset(const std::filesystem::path& dir) {
    const auto series_file = dir / "series.csv";
    const auto labels_file = dir / "labels.csv";

    auto lines = read_lines(series_file);
    if (lines.empty() || lines[0] != "run_id,split,variable,t,value")
        throw data_error(series_file.string() +
                         ": expected header 'run_id,split,variable,t,value'");

    struct PendingRun {
        Split split;
        std::map<std::string, std::vector<std::pair<long, double>>> samples;
    };
    std::vector<std::string> order;
    std::map<std::string, PendingRun> pending;

    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (lines[ln].empty()) continue;
        auto f = split_csv_line(lines[ln]);
        if (f.size() != 5)
            throw data_error(series_file.string() + ":" + std::to_string(ln + 1) +
                             ": expected 5 fields");
        const std::string run_id(f[0]);
        const Split split = parse_split(f[1]);
        const std::string variable(f[2]);
        if (!is_known_variable(variable))
            throw data_error("unknown variable '" + variable + "' for run " + run_id);
        const std::string ctx = "run " + run_id + " variable " + variable;
        const long t = parse_long(f[3], ctx);
        if (t < 0) throw data_error("negative sample index in " + ctx);
        const double v = parse_double(f[4], ctx);
        if (!std::isfinite(v)) throw data_error("non-finite sample in " + ctx);

        auto it = pending.find(run_id);
        if (it == pending.end()) {
            order.push_back(run_id);
            it = pending.emplace(run_id, PendingRun{split, {}}).first;
        } else if (it->second.split != split) {
            throw data_error("run " + run_id + " appears under two splits");
        }
        it->second.samples[variable].emplace_back(t, v);
    }

    auto label_lines = read_lines(labels_file);
    if (label_lines.empty() || label_lines[0] != "run_id,mrr")
        throw data_error(labels_file.string() + ": expected header 'run_id,mrr'");
    std::map<std::string, double> labels;
    for (std::size_t ln = 1; ln < label_lines.size(); ++ln) {
        if (label_lines[ln].empty()) continue;
        auto f = split_csv_line(label_lines[ln]);
        if (f.size() != 2)
            throw data_error(labels_file.string() + ":" + std::to_string(ln + 1) +
                             ": expected 2 fields");
        const std::string run_id(f[0]);
        const double mrr = parse_double(f[1], "label of run " + run_id);
        if (!std::isfinite(mrr) || mrr < 0.0)
            throw data_error("label of run " + run_id + " must be finite and >= 0");
        if (!labels.emplace(run_id, mrr).second)
            throw data_error("duplicate label for run " + run_id);
        if (pending.find(run_id) == pending.end())
            throw data_error("label for unknown run " + run_id);
    }

    DatasetSplit ds;
    for (const auto& run_id : order) {
        auto& pr = pending.at(run_id);
        auto lbl = labels.find(run_id);
        if (lbl == labels.end()) throw data_error("missing label for run " + run_id);

        WaferRun run;
        run.run_id = run_id;
        run.split = pr.split;
        run.mrr = lbl->second;
        run.wear = wear_for_mrr(run.mrr);

        for (const auto& name : variable_names()) {
            auto sit = pr.samples.find(name);
            if (sit == pr.samples.end())
                throw data_error("run " + run_id + " is missing variable " + name);
            auto& raw = sit->second;
            std::sort(raw.begin(), raw.end());
            Vec s(raw.size());
            for (std::size_t i = 0; i < raw.size(); ++i) {
                if (raw[i].first != static_cast<long>(i))
                    throw data_error("run " + run_id + " variable " + name +
                                     ": sample indices are not contiguous from 0");
                s[i] = raw[i].second;
            }
            if (s.size() < 2)
                throw data_error("run " + run_id + " variable " + name +
                                 ": series must have at least 2 samples");
            run.series[name] = std::move(s);
        }
        ds.runs.push_back(std::move(run));
    }
    return ds;
}

void save_dataset(const std::filesystem::path& dir, const DatasetSplit& ds, bool force) {
    std::filesystem::create_directories(dir);
    const auto series_file = dir / "series.csv";
    const auto labels_file = dir / "labels.csv";
    if (!force && (std::filesystem::exists(series_file) || std::filesystem::exists(labels_file)))
        throw data_error("refusing to overwrite existing dataset in " + dir.string() +
                         " (use --force)");

    std::ofstream series(series_file, std::ios::binary);
    std::ofstream labels(labels_file, std::ios::binary);
    if (!series || !labels) throw data_error("cannot write dataset files in " + dir.string());

    series << "run_id,split,variable,t,value\n";
    labels << "run_id,mrr\n";
    for (const auto& run : ds.runs) {
        for (const auto& name : variable_names()) {
            auto it = run.series.find(name);
            if (it == run.series.end()) continue;
            const Vec& s = it->second;
            for (std::size_t i = 0; i < s.size(); ++i) {
                series << run.run_id << ',' << split_name(run.split) << ',' << name << ',' << i
                       << ',' << format_double(s[i]) << '\n';
            }
        }
        labels << run.run_id << ',' << format_double(run.mrr) << '\n';
    }
}

WaferRun select_variables(const WaferRun& run, const std::vector<std::string>& keep) {
    WaferRun out;
    out.run_id = run.run_id;
    out.mrr = run.mrr;
    out.split = run.split;
    out.wear = run.wear;
    for (const auto& name : keep) {
        auto it = run.series.find(name);
        if (it == run.series.end())
            throw data_error("run " + run.run_id + " has no variable '" + name + "'");
        out.series.emplace(name, it->second);
    }
    return out;
}

WaferRun select_retained(const WaferRun& run) {
    const auto& names = retained_variable_names();
    return select_variables(run, std::vector<std::string>(names.begin(), names.end()));
}

}  // namespace mrr::data
