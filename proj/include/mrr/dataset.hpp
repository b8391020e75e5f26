#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mrr/common.hpp"

namespace mrr::data {

enum class Split { train, validation, test };
enum class Wear { low, high, unknown };

std::string_view split_name(Split s);
std::string_view wear_name(Wear w);
Split parse_split(std::string_view s);

// Fig. 3 wear bins: low is [50, 100], high is [140, 200]. Anything else
// (including the gap in between) is tagged unknown and kept.
Wear wear_for_mrr(double mrr);

// The 18 sensor variables, grouped by family. Canonical order: the 6 usages,
// the 6 pressures, then slurry and rotation. The first 12 form the retained
// preset used by the downsampled feature pipeline.
const std::array<std::string, 18>& variable_names();
const std::array<std::string, 12>& retained_variable_names();
bool is_known_variable(std::string_view name);

struct WaferRun {
    std::string run_id;
    std::map<std::string, Vec> series;  // variable name -> samples
    double mrr = 0.0;
    Split split = Split::train;
    Wear wear = Wear::unknown;

    friend bool operator==(const WaferRun&, const WaferRun&) = default;
};

struct DatasetSplit {
    std::vector<WaferRun> runs;

    std::size_t count(Split s, Wear w) const;
    std::vector<const WaferRun*> select(Split s, Wear w) const;
    std::vector<const WaferRun*> select_wear(Wear w) const;

    friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

struct SyntheticSpec {
    std::uint64_t seed = 0;
    // Runs per (split, wear) cell, indexed [split][wear] over {train,
    // validation, test} x {low, high}.
    std::array<std::array<std::size_t, 2>, 3> n_runs = {{{500, 120}, {110, 30}, {110, 30}}};
    std::size_t series_length = 400;
    double noise_scale = 1.0;
    // Number of latent operating modes per wear cell; the MRR link maps the
    // (usage, pressure) factors monotonically into the cell's wear bin, with
    // the mode deciding the coarse position and the within-mode deviations a
    // small refinement.
    std::size_t modes = 2;
    double mode_separation = 3.0;
    double within_spread = 1.0;
    double mrr_within_weight = 0.06;
    double mrr_noise = 0.01;
    // When set, the 6 slurry/rotation channels become noisy near-duplicates
    // of usage channels instead of independent nuisance traces.
    bool redundant_channels = false;

    void validate() const;
};

DatasetSplit generate_synthetic(const SyntheticSpec& spec);

// Long-format CSV pair under `dir`: series.csv with header
// run_id,split,variable,t,value and labels.csv with header run_id,mrr.
DatasetSplit load_dataset(const std::filesystem::path& dir);
void save_dataset(const std::filesystem::path& dir, const DatasetSplit& ds, bool force);

WaferRun select_variables(const WaferRun& run, const std::vector<std::string>& keep);
WaferRun select_retained(const WaferRun& run);  // the 12-variable preset

}  // namespace mrr::data
