#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "treebio/errors.hpp"
#include "treebio/numeric.hpp"
#include "treebio/tree_record.hpp"

namespace treebio {

/// A parsed CSV: header names plus rows of string cells. Quoted cells with
/// doubled quotes are handled; embedded newlines are not.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> column_index(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        return std::nullopt;
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cell.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell.push_back(c);
            }
        } else if (c == '"' && cell.empty()) {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cell));
            cell.clear();
        } else {
            cell.push_back(c);
        }
    }
    cells.push_back(std::move(cell));
    return cells;
}

inline std::string escape_csv_cell(std::string_view cell) {
    if (cell.find_first_of(",\"\n") == std::string_view::npos) return std::string(cell);
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out.push_back('"');
    return out;
}

}  // namespace detail

inline CsvTable parse_csv(std::string_view text) {
    CsvTable table;
    std::size_t pos = 0;
    bool first = true;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view line =
            (eol == std::string_view::npos) ? text.substr(pos) : text.substr(pos, eol - pos);
        pos = (eol == std::string_view::npos) ? text.size() + 1 : eol + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (first) {
            table.header = std::move(cells);
            first = false;
        } else {
            table.rows.push_back(std::move(cells));
        }
    }
    if (first) throw EmptyInput();
    return table;
}

/// Canonical column names understood by parse_dataset. A schema maps each
/// canonical name to the header actually present in the file, and lists
/// which columns must parse on every row. Height and biomass are always
/// required; adding e.g. "d_cm" to `required` turns an unparseable diameter
/// cell from "absent" into a row error.
struct CsvSchema {
    std::map<std::string, std::string> rename;       // canonical -> actual header
    std::set<std::string> required = {"h_m", "agb_kg"};

    std::string column(const std::string& canonical) const {
        auto it = rename.find(canonical);
        return it == rename.end() ? canonical : it->second;
    }
};

namespace detail {

struct ColumnRef {
    std::optional<std::size_t> index;
    std::string actual_name;
    bool required = false;

    std::string_view cell(const std::vector<std::string>& row) const {
        if (!index || *index >= row.size()) return {};
        return row[*index];
    }
};

inline ColumnRef resolve_column(const CsvTable& table, const CsvSchema& schema,
                                const std::string& canonical) {
    ColumnRef ref;
    ref.actual_name = schema.column(canonical);
    ref.index = table.column_index(ref.actual_name);
    ref.required = schema.required.count(canonical) > 0;
    if (ref.required && !ref.index) throw MissingColumn(ref.actual_name);
    return ref;
}

/// Parses one numeric cell. Required cells must parse and satisfy the
/// predicate; optional cells that fail either check become absent.
template <typename Pred>
std::optional<double> numeric_cell(const ColumnRef& col, const std::vector<std::string>& row,
                                   std::size_t row_number, Pred valid) {
    std::string_view cell = col.cell(row);
    auto value = parse_double(cell);
    if (value && valid(*value)) return value;
    if (col.required)
        throw BadNumeric(row_number, col.actual_name, std::string(cell));
    return std::nullopt;
}

}  // namespace detail

/// Parses a dataset CSV into TreeRecords. One record per data row, row order
/// preserved. Record invariants (positive height/biomass/diameters, lat/lon
/// ranges) are enforced here: violations in required columns are errors, in
/// optional columns the cell is treated as absent.
inline Dataset parse_dataset(std::string_view csv_text, const CsvSchema& schema = {},
                             std::string provenance = {}) {
    CsvTable table = parse_csv(csv_text);

    CsvSchema effective = schema;
    effective.required.insert("h_m");
    effective.required.insert("agb_kg");

    auto col_h = detail::resolve_column(table, effective, "h_m");
    auto col_d = detail::resolve_column(table, effective, "d_cm");
    auto col_cd = detail::resolve_column(table, effective, "cd_m");
    auto col_b = detail::resolve_column(table, effective, "agb_kg");
    auto col_biome = detail::resolve_column(table, effective, "biome");
    auto col_plot = detail::resolve_column(table, effective, "plot_id");
    auto col_lat = detail::resolve_column(table, effective, "lat");
    auto col_lon = detail::resolve_column(table, effective, "lon");
    auto col_src = detail::resolve_column(table, effective, "source");

    auto positive = [](double v) { return v > 0.0; };

    Dataset out;
    out.provenance = std::move(provenance);
    out.records.reserve(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        const std::size_t row_number = i + 2;  // 1-based, after the header

        TreeRecord r;
        r.height_m = *detail::numeric_cell(col_h, row, row_number, positive);
        r.biomass_kg = *detail::numeric_cell(col_b, row, row_number, positive);
        r.diameter_cm = detail::numeric_cell(col_d, row, row_number, positive);
        r.crown_diameter_m = detail::numeric_cell(col_cd, row, row_number, positive);
        r.lat = detail::numeric_cell(col_lat, row, row_number,
                                     [](double v) { return v >= -90.0 && v <= 90.0; });
        r.lon = detail::numeric_cell(col_lon, row, row_number,
                                     [](double v) { return v >= -180.0 && v <= 180.0; });
        r.biome = biome_from_label(col_biome.cell(row));
        std::string_view plot = col_plot.cell(row);
        if (!plot.empty()) r.plot_id = std::string(plot);
        r.source = std::string(col_src.cell(row));
        out.records.push_back(std::move(r));
    }
    return out;
}

/// Serializes a dataset with the canonical header. Numbers are written in
/// shortest round-trip form, so parse(serialize(d)) reproduces d exactly.
inline std::string serialize_dataset(const Dataset& d) {
    std::string out = "h_m,d_cm,cd_m,agb_kg,biome,plot_id,lat,lon,source\n";
    auto opt = [](const std::optional<double>& v) {
        return v ? format_double(*v) : std::string();
    };
    for (const TreeRecord& r : d.records) {
        out += format_double(r.height_m);
        out += ',';
        out += opt(r.diameter_cm);
        out += ',';
        out += opt(r.crown_diameter_m);
        out += ',';
        out += format_double(r.biomass_kg);
        out += ',';
        out += (r.biome == Biome::unknown) ? "" : biome_label(r.biome);
        out += ',';
        out += r.plot_id ? detail::escape_csv_cell(*r.plot_id) : std::string();
        out += ',';
        out += opt(r.lat);
        out += ',';
        out += opt(r.lon);
        out += ',';
        out += detail::escape_csv_cell(r.source);
        out += '\n';
    }
    return out;
}

}  // namespace treebio
