#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "treebio/errors.hpp"

namespace treebio {

/// The seven biome classes records may carry, plus Unknown for anything else.
/// Biome is reporting metadata only; no model in this library consumes it.
enum class Biome {
    tropical_subtropical,
    temperate_mixed,
    temperate_coniferous,
    boreal,
    grassland_shrubland,
    tundra_savanna_mediterranean,
    desert_xeric,
    unknown,
};

inline const char* biome_label(Biome b) {
    switch (b) {
        case Biome::tropical_subtropical: return "tropical_subtropical";
        case Biome::temperate_mixed: return "temperate_mixed";
        case Biome::temperate_coniferous: return "temperate_coniferous";
        case Biome::boreal: return "boreal";
        case Biome::grassland_shrubland: return "grassland_shrubland";
        case Biome::tundra_savanna_mediterranean: return "tundra_savanna_mediterranean";
        case Biome::desert_xeric: return "desert_xeric";
        case Biome::unknown: return "unknown";
    }
    return "unknown";
}

/// Maps free-form biome text to a Biome. Matching is case-insensitive and
/// ignores punctuation, so "Boreal Forests" and "boreal" both map to boreal.
/// Unrecognized text maps to Biome::unknown rather than failing the record.
inline Biome biome_from_label(std::string_view text) {
    std::string t;
    t.reserve(text.size());
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)))
            t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        else if (!t.empty() && t.back() != ' ')
            t.push_back(' ');
    }
    while (!t.empty() && t.back() == ' ') t.pop_back();

    auto has = [&](std::string_view word) { return t.find(word) != std::string::npos; };

    if (has("tropical") || has("subtropical")) return Biome::tropical_subtropical;
    if (has("temperate") && has("conifer")) return Biome::temperate_coniferous;
    if (has("temperate")) return Biome::temperate_mixed;
    if (has("boreal")) return Biome::boreal;
    if (has("grass") || has("shrubland")) {
        if (has("desert") || has("xeric")) return Biome::desert_xeric;
        return Biome::grassland_shrubland;
    }
    if (has("tundra") || has("savanna") || has("mediterranean") || has("woodland"))
        return Biome::tundra_savanna_mediterranean;
    if (has("desert") || has("xeric")) return Biome::desert_xeric;
    return Biome::unknown;
}

/// One measured tree. Height and biomass are mandatory; diameter (DBH) and
/// crown diameter are optional. Units are fixed: meters for height and crown
/// diameter, centimeters for DBH, kilograms dry AGB for biomass. Ingestion
/// performs no unit inference.
struct TreeRecord {
    double height_m = 0.0;
    std::optional<double> diameter_cm;
    std::optional<double> crown_diameter_m;
    double biomass_kg = 0.0;
    Biome biome = Biome::unknown;
    std::optional<std::string> plot_id;
    std::optional<double> lat;
    std::optional<double> lon;
    std::string source;
};

/// An ordered list of records. Order is stable under filtering; every
/// consumer that must be permutation-insensitive asserts so in its own tests.
struct Dataset {
    std::vector<TreeRecord> records;
    std::string provenance;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
};

/// Inclusion rules mirroring the dataset curation thresholds. Threshold
/// comparisons are inclusive (>= 5 cm, >= 2 kg) so that published boundary
/// records survive; the require_* switches control whether records lacking
/// the corresponding field are dropped. Height and biomass are mandatory on
/// TreeRecord itself, so their switches only re-check positivity.
struct FilterRules {
    double min_diameter_cm = 5.0;
    double min_biomass_kg = 2.0;
    bool require_height = true;
    bool require_diameter = true;
    bool require_biomass = true;
};

/// Returns the records passing the rules, original order preserved.
/// Filtering to an empty dataset is legal. Idempotent by construction.
inline Dataset filter_records(const Dataset& d, const FilterRules& rules) {
    if (rules.min_diameter_cm < 0.0 || rules.min_biomass_kg < 0.0)
        throw InputError("filter thresholds must be nonnegative");

    Dataset out;
    out.provenance = d.provenance;
    out.records.reserve(d.records.size());
    for (const TreeRecord& r : d.records) {
        if (rules.require_height && !(r.height_m > 0.0)) continue;
        if (rules.require_biomass && !(r.biomass_kg > 0.0)) continue;
        if (!(r.biomass_kg >= rules.min_biomass_kg)) continue;
        if (r.diameter_cm) {
            if (!(*r.diameter_cm >= rules.min_diameter_cm)) continue;
        } else if (rules.require_diameter) {
            continue;
        }
        out.records.push_back(r);
    }
    return out;
}

/// Explicit inputs for model prediction when no full record is at hand
/// (e.g. query CSVs without a biomass column).
struct PredictorInputs {
    std::optional<double> height_m;
    std::optional<double> diameter_cm;
    std::optional<double> crown_diameter_m;

    static PredictorInputs from_record(const TreeRecord& r) {
        return PredictorInputs{r.height_m, r.diameter_cm, r.crown_diameter_m};
    }
};

}  // namespace treebio
