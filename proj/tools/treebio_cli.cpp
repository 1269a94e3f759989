// treebio — command-line front end for tree-level biomass estimation.
//
// Subcommands: ingest, fit, predict, evaluate, uncertainty, stand-eval.
// Every run resolves its configuration (flags > --config JSON > defaults),
// writes its outputs into --out-dir, and finishes with a manifest.json
// echoing the resolved config plus content digests of all inputs, so any
// report can be traced back to exact bytes.
//
// Exit codes: 0 all outputs written, 2 input/configuration errors,
// 3 numerical failures, 1 anything else.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "treebio/treebio.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace treebio;

namespace {

// ---------------------------------------------------------------- utilities

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open for writing: " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw InputError("write failed: " + path.string());
}

std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Collects resolved config, inputs, and outputs for the run manifest.
class RunManifest {
public:
    RunManifest(std::string command, fs::path out_dir)
        : command_(std::move(command)), out_dir_(std::move(out_dir)) {
        fs::create_directories(out_dir_);
    }

    void config(const std::string& key, json value) { config_[key] = std::move(value); }

    std::string input(const fs::path& path) {
        const std::string text = read_file(path);
        inputs_.push_back({{"path", path.string()}, {"digest", "fnv1a64:" + fnv1a64_hex(text)}});
        return text;
    }

    /// Registers the model file as an input without re-reading it here.
    void input_digest(const fs::path& path, const std::string& text) {
        inputs_.push_back({{"path", path.string()}, {"digest", "fnv1a64:" + fnv1a64_hex(text)}});
    }

    fs::path out(const std::string& name) {
        outputs_.push_back(name);
        return out_dir_ / name;
    }

    void write() const {
        json m;
        m["tool"] = "treebio";
        m["format"] = "treebio.manifest.v1";
        m["command"] = command_;
        m["config"] = config_;
        m["inputs"] = inputs_;
        m["outputs"] = outputs_;
        m["timestamp_utc"] = iso_timestamp();
        write_file(out_dir_ / "manifest.json", m.dump(2) + "\n");
    }

    const fs::path& out_dir() const { return out_dir_; }

private:
    std::string command_;
    fs::path out_dir_;
    json config_ = json::object();
    json inputs_ = json::array();
    std::vector<std::string> outputs_;
};

/// Values from --config JSON fill in flags the user did not pass.
class ConfigOverlay {
public:
    void load(const std::string& path) {
        if (path.empty()) return;
        json parsed;
        try {
            parsed = json::parse(read_file(path));
        } catch (const json::parse_error& e) {
            throw InputError("config file " + path + ": " + e.what());
        }
        if (!parsed.is_object()) throw InputError("config file must hold a JSON object");
        config_ = std::move(parsed);
    }

    template <typename T>
    void apply(const CLI::Option* opt, const std::string& key, T& value) const {
        if (opt != nullptr && opt->count() > 0) return;  // explicit flag wins
        if (!config_.contains(key)) return;
        try {
            value = config_.at(key).get<T>();
        } catch (const json::exception&) {
            throw InputError("config key '" + key + "' has the wrong type");
        }
    }

private:
    json config_ = json::object();
};

ResidualScale parse_outlier_scale(const std::string& s) {
    if (s == "log") return ResidualScale::log_space;
    if (s == "raw") return ResidualScale::raw;
    throw InputError("--outlier-scale must be 'log' or 'raw'");
}

SortKey parse_sort_key(const std::string& s) {
    if (s == "h") return SortKey::height;
    if (s == "d") return SortKey::diameter;
    if (s == "cd") return SortKey::crown_diameter;
    if (s == "hcd") return SortKey::height_times_crown;
    throw InputError("sort key must be one of h, d, cd, hcd");
}

std::vector<Feature> parse_features(const std::string& csv) {
    std::vector<Feature> out;
    std::stringstream ss(csv);
    std::string token;
    while (std::getline(ss, token, ',')) {
        if (token == "h") out.push_back(Feature::log_height);
        else if (token == "d") out.push_back(Feature::log_diameter);
        else if (token == "cd") out.push_back(Feature::log_crown);
        else throw InputError("--features takes a comma list of h, d, cd");
    }
    if (out.empty()) throw InputError("--features is empty");
    return out;
}

CsvSchema schema_from_flags(const std::vector<std::string>& maps,
                            const std::vector<std::string>& required) {
    CsvSchema schema;
    for (const std::string& m : maps) {
        const auto eq = m.find('=');
        if (eq == std::string::npos)
            throw InputError("--map expects canonical=actual, got '" + m + "'");
        schema.rename[m.substr(0, eq)] = m.substr(eq + 1);
    }
    for (const std::string& r : required) schema.required.insert(r);
    return schema;
}

json eval_to_json(const EvalReport& e) {
    return json{{"r2", e.r2},
                {"rmse_kg", e.rmse_kg},
                {"bias", e.bias},
                {"n_used", e.n_used},
                {"n_outliers_excluded", e.n_outliers_excluded}};
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> predictions_for(const AnyModel& model, const Dataset& data) {
    // batch the GPR path: one factorized solve for all queries
    if (const auto* gpr = std::get_if<GprModel>(&model)) {
        std::vector<double> heights(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) heights[i] = data.records[i].height_m;
        return predict_gpr(*gpr, heights).mean;
    }
    std::vector<double> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out[i] = predict_any(model, data.records[i]);
    return out;
}

std::string model_stem(const fs::path& path) {
    return path.stem().string();
}

// ---------------------------------------------------------------- ingest

struct IngestArgs {
    std::string input, out_dir = "out", config;
    std::vector<std::string> maps, required;
    double min_diameter_cm = 5.0, min_biomass_kg = 2.0;
    bool allow_missing_diameter = false;
    bool no_filter = false;
};

int cmd_ingest(const IngestArgs& args) {
    RunManifest run("ingest", args.out_dir);
    run.config("input", args.input);
    run.config("min_diameter_cm", args.min_diameter_cm);
    run.config("min_biomass_kg", args.min_biomass_kg);
    run.config("allow_missing_diameter", args.allow_missing_diameter);
    run.config("no_filter", args.no_filter);

    const std::string text = run.input(args.input);
    const CsvSchema schema = schema_from_flags(args.maps, args.required);
    const Dataset parsed = parse_dataset(text, schema, args.input);

    FilterRules rules;
    rules.min_diameter_cm = args.min_diameter_cm;
    rules.min_biomass_kg = args.min_biomass_kg;
    rules.require_diameter = !args.allow_missing_diameter;
    if (args.no_filter) {
        rules.min_diameter_cm = 0.0;
        rules.min_biomass_kg = 0.0;
        rules.require_diameter = false;
    }

    const Dataset kept = filter_records(parsed, rules);

    // per-record drop reasons, mirroring filter_records
    std::map<std::string, std::size_t> drop_reasons;
    for (const TreeRecord& r : parsed.records) {
        if (!(r.biomass_kg >= rules.min_biomass_kg)) {
            ++drop_reasons["below_min_biomass"];
        } else if (r.diameter_cm && !(*r.diameter_cm >= rules.min_diameter_cm)) {
            ++drop_reasons["below_min_diameter"];
        } else if (!r.diameter_cm && rules.require_diameter) {
            ++drop_reasons["missing_diameter"];
        }
    }

    json per_biome = json::array();
    std::map<Biome, std::vector<const TreeRecord*>> by_biome;
    for (const TreeRecord& r : kept.records) by_biome[r.biome].push_back(&r);
    for (const auto& [biome, records] : by_biome) {
        std::vector<double> h, d, b;
        for (const TreeRecord* r : records) {
            h.push_back(r->height_m);
            b.push_back(r->biomass_kg);
            if (r->diameter_cm) d.push_back(*r->diameter_cm);
        }
        json entry;
        entry["biome"] = biome_label(biome);
        entry["count"] = records.size();
        entry["median_h_m"] = median(h);
        entry["median_agb_kg"] = median(b);
        if (!d.empty()) entry["median_d_cm"] = median(d);
        per_biome.push_back(entry);
    }

    json summary;
    summary["input_rows"] = parsed.size();
    summary["kept"] = kept.size();
    summary["dropped"] = parsed.size() - kept.size();
    summary["drop_reasons"] = drop_reasons;
    summary["per_biome"] = per_biome;

    write_file(run.out("dataset.csv"), serialize_dataset(kept));
    write_file(run.out("ingest_summary.json"), summary.dump(2) + "\n");
    run.write();
    std::cout << "ingest: kept " << kept.size() << " of " << parsed.size() << " records\n";
    return 0;
}

// ---------------------------------------------------------------- fit

struct FitArgs {
    std::string dataset, model_kind, out_dir = "out", config;
    std::uint64_t seed = 42;
    double test_fraction = 0.1;
    double sigma = 0.5;
    std::string log_transform = "on";
    std::string outlier_scale = "log";
    int trees = 100, depth = 12, min_leaf = 5;
    std::string features = "h";
};

AnyModel fit_model(const FitArgs& args, const Dataset& train) {
    if (args.model_kind == "lr") return fit_loglinear(AllometryKind::lr_hcd, train);
    if (args.model_kind == "lr2") return fit_loglinear(AllometryKind::lr2_h, train);
    if (args.model_kind == "lr3") return fit_loglinear(AllometryKind::lr3_hd, train);
    if (args.model_kind == "lr-d") return fit_loglinear(AllometryKind::lr_d, train);
    if (args.model_kind == "rf") {
        ForestConfig config;
        config.n_trees = args.trees;
        config.max_depth = args.depth;
        config.min_leaf = args.min_leaf;
        config.seed = args.seed;
        config.features = parse_features(args.features);
        return fit_forest(train, config);
    }
    if (args.model_kind == "gpr") {
        std::vector<double> h(train.size()), b(train.size());
        for (std::size_t i = 0; i < train.size(); ++i) {
            h[i] = train.records[i].height_m;
            b[i] = train.records[i].biomass_kg;
        }
        TransformSpec transform;
        transform.mode =
            args.log_transform == "off" ? Transform::raw : Transform::natural_log;
        return fit_gpr(h, b, args.sigma, SearchConfig{}, transform);
    }
    throw InputError("unknown model kind '" + args.model_kind +
                     "' (expected lr, lr2, lr3, lr-d, rf, gpr)");
}

json hyper_to_json(const AnyModel& model) {
    if (const auto* lin = std::get_if<LogLinearModel>(&model)) {
        return json{{"kind", allometry_label(lin->kind)},
                    {"coef_a", lin->coef_a},
                    {"coef_b", lin->coef_b},
                    {"coef_c", lin->coef_c},
                    {"residual_sigma", lin->residual_sigma}};
    }
    if (const auto* gpr = std::get_if<GprModel>(&model)) {
        return json{{"length_scale", gpr->hyper.length_scale_l},
                    {"mean_offset", gpr->hyper.mean_offset_b0},
                    {"noise_sigma", gpr->hyper.noise_sigma},
                    {"jitter", gpr->jitter_used},
                    {"transform", transform_label(gpr->transform.mode)}};
    }
    const auto& forest = std::get<ForestModel>(model);
    json features = json::array();
    for (Feature f : forest.config.features) features.push_back(feature_label(f));
    return json{{"n_trees", forest.config.n_trees},
                {"max_depth", forest.config.max_depth},
                {"min_leaf", forest.config.min_leaf},
                {"seed", forest.config.seed},
                {"features", features}};
}

int cmd_fit(const FitArgs& args) {
    RunManifest run("fit", args.out_dir);
    run.config("dataset", args.dataset);
    run.config("model", args.model_kind);
    run.config("seed", args.seed);
    run.config("test_fraction", args.test_fraction);
    run.config("sigma", args.sigma);
    run.config("log_transform", args.log_transform);
    run.config("outlier_scale", args.outlier_scale);
    if (args.model_kind == "rf") {
        run.config("trees", args.trees);
        run.config("depth", args.depth);
        run.config("min_leaf", args.min_leaf);
        run.config("features", args.features);
    }

    const Dataset data = parse_dataset(run.input(args.dataset), {}, args.dataset);
    auto [train, test] = split_train_test(data, args.test_fraction, args.seed);

    const AnyModel model = fit_model(args, train);
    const std::vector<double> yhat = predictions_for(model, test);
    std::vector<double> y(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) y[i] = test.records[i].biomass_kg;
    const EvalReport eval =
        evaluate_predictions(y, yhat, true, parse_outlier_scale(args.outlier_scale));

    const std::string model_file = args.model_kind + ".model";
    save_model(run.out(model_file), model);

    json report;
    report["model"] = args.model_kind;
    report["model_file"] = model_file;
    report["n_train"] = train.size();
    report["n_test"] = test.size();
    report["hyperparameters"] = hyper_to_json(model);
    report["holdout"] = eval_to_json(eval);
    write_file(run.out("fit_report.json"), report.dump(2) + "\n");
    run.write();
    std::cout << "fit " << args.model_kind << ": holdout R2 " << eval.r2 << ", RMSE "
              << eval.rmse_kg << " kg, bias " << eval.bias << "\n";
    return 0;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
    std::string model_file, input, out_dir = "out", config;
    std::vector<std::string> maps;
};

int cmd_predict(const PredictArgs& args) {
    RunManifest run("predict", args.out_dir);
    run.config("model_file", args.model_file);
    run.config("input", args.input);

    const std::string model_text = read_file(args.model_file);
    run.input_digest(args.model_file, model_text);
    const AnyModel model = parse_model(model_text);

    const CsvTable table = parse_csv(run.input(args.input));
    CsvSchema schema = schema_from_flags(args.maps, {});
    auto col = [&](const char* canonical) { return table.column_index(schema.column(canonical)); };
    const auto ih = col("h_m");
    const auto id = col("d_cm");
    const auto icd = col("cd_m");

    auto cell_value = [&](const std::vector<std::string>& row,
                          std::optional<std::size_t> idx) -> std::optional<double> {
        if (!idx || *idx >= row.size()) return std::nullopt;
        auto v = parse_double(row[*idx]);
        if (v && *v > 0.0) return v;
        return std::nullopt;
    };

    std::vector<PredictorInputs> inputs;
    inputs.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        PredictorInputs in;
        in.height_m = cell_value(row, ih);
        in.diameter_cm = cell_value(row, id);
        in.crown_diameter_m = cell_value(row, icd);
        inputs.push_back(in);
    }

    const bool is_gpr = std::holds_alternative<GprModel>(model);
    std::string csv = "row,h_m,d_cm,cd_m,agb_kg_pred";
    const char* latent_prefix = "log";
    if (is_gpr) {
        const auto& gpr = std::get<GprModel>(model);
        if (gpr.transform.mode == Transform::raw) latent_prefix = "latent";
        csv += std::string(",") + latent_prefix + "_mean," + latent_prefix + "_sd";
    }
    csv += "\n";

    GprPrediction gpr_pred;
    if (is_gpr) {
        std::vector<double> heights(inputs.size());
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            if (!inputs[i].height_m)
                throw BadNumeric(i + 2, schema.column("h_m"), "(missing or nonpositive)");
            heights[i] = *inputs[i].height_m;
        }
        gpr_pred = predict_gpr(std::get<GprModel>(model), heights);
    }

    auto opt_str = [](const std::optional<double>& v) {
        return v ? format_double(*v) : std::string();
    };
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        double value;
        try {
            value = is_gpr ? gpr_pred.mean[i] : predict_any(model, inputs[i]);
        } catch (const InputError& e) {
            throw InputError("row " + std::to_string(i + 2) + ": " + e.what());
        }
        csv += std::to_string(i + 1) + "," + opt_str(inputs[i].height_m) + "," +
               opt_str(inputs[i].diameter_cm) + "," + opt_str(inputs[i].crown_diameter_m) + "," +
               format_double(value);
        if (is_gpr) {
            const double sd = std::sqrt(std::max(0.0, gpr_pred.latent_variance[i]));
            csv += "," + format_double(gpr_pred.latent_mean[i]) + "," + format_double(sd);
        }
        csv += "\n";
    }

    write_file(run.out("predictions.csv"), csv);
    run.write();
    std::cout << "predict: wrote " << inputs.size() << " predictions\n";
    return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
    std::vector<std::string> model_files;
    std::string test, out_dir = "out", config;
    int bins = 10;
    std::string outlier_scale = "log";
    std::string axis = "h";
};

int cmd_evaluate(const EvaluateArgs& args) {
    RunManifest run("evaluate", args.out_dir);
    run.config("models", args.model_files);
    run.config("test", args.test);
    run.config("bins", args.bins);
    run.config("outlier_scale", args.outlier_scale);
    run.config("axis", args.axis);

    const Dataset test = parse_dataset(run.input(args.test), {}, args.test);
    const SortKey axis = parse_sort_key(args.axis);
    std::vector<double> y(test.size()), axis_values(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
        y[i] = test.records[i].biomass_kg;
        axis_values[i] = sort_key_value(test.records[i], axis);
    }

    json results = json::array();
    for (const std::string& file : args.model_files) {
        const std::string model_text = read_file(file);
        run.input_digest(file, model_text);
        const AnyModel model = parse_model(model_text);
        const std::string stem = model_stem(file);

        const std::vector<double> yhat = predictions_for(model, test);
        const EvalReport eval =
            evaluate_predictions(y, yhat, true, parse_outlier_scale(args.outlier_scale));

        std::vector<double> residuals(test.size());
        for (std::size_t i = 0; i < test.size(); ++i) residuals[i] = y[i] - yhat[i];
        const BinnedResiduals bins =
            binned_residuals(axis_values, residuals, args.bins, args.axis);

        std::string table = "bin_low,bin_high,count,mean_residual,half_std\n";
        std::vector<std::array<double, 3>> band;
        std::vector<std::pair<double, double>> centers;
        for (const ResidualBin& b : bins.bins) {
            table += format_double(b.bin_low) + "," + format_double(b.bin_high) + "," +
                     std::to_string(b.count) + "," + format_double(b.mean_residual) + "," +
                     format_double(b.half_std) + "\n";
            const double center = std::sqrt(b.bin_low * b.bin_high);  // midpoint on log axis
            band.push_back({center, b.mean_residual - b.half_std, b.mean_residual + b.half_std});
            centers.emplace_back(center, b.mean_residual);
        }
        write_file(run.out("binned_residuals_" + stem + ".csv"), table);

        SvgChart chart("Residuals vs " + args.axis + " (" + stem + ")", args.axis,
                       "residual (kg)");
        chart.set_log_x(true);
        chart.set_data_table(table);
        chart.add_hline(0.0, "#888888");
        chart.add_band(band, "#1f77b4");
        chart.add_series(stem, centers, "#1f77b4", Marker::circle);
        write_file(run.out("residuals_" + stem + ".svg"), chart.render());

        json entry = eval_to_json(eval);
        entry["model_file"] = file;
        entry["model"] = model_kind(model);
        results.push_back(entry);
    }

    write_file(run.out("evaluation.json"), results.dump(2) + "\n");
    run.write();
    std::cout << "evaluate: " << args.model_files.size() << " model(s) on " << test.size()
              << " records\n";
    return 0;
}

// ---------------------------------------------------------------- uncertainty

struct UncertaintyArgs {
    std::string dataset, out_dir = "out", config;
    std::vector<std::string> model_files;
    std::string sort_key = "h";
    int bins = 10;
};

int cmd_uncertainty(const UncertaintyArgs& args) {
    RunManifest run("uncertainty", args.out_dir);
    run.config("dataset", args.dataset);
    run.config("models", args.model_files);
    run.config("sort_key", args.sort_key);
    run.config("bins", args.bins);

    const Dataset data = parse_dataset(run.input(args.dataset), {}, args.dataset);
    const SortKey key = parse_sort_key(args.sort_key);

    auto bin_table = [&](const UncertaintyReport& report) {
        std::string table = "key_low,key_high,count,ratio\n";
        for (const UncertaintyBin& b : report.per_bin)
            table += format_double(b.key_low) + "," + format_double(b.key_high) + "," +
                     std::to_string(b.count) + "," + format_double(b.ratio) + "\n";
        return table;
    };

    json summary;
    summary["sort_key"] = args.sort_key;
    summary["n_bins"] = args.bins;

    const UncertaintyReport model_unc = model_uncertainty(data, key, args.bins);
    write_file(run.out("model_uncertainty_" + args.sort_key + ".csv"), bin_table(model_unc));
    summary["model_uncertainty"] = model_unc.overall;

    SvgChart chart("Uncertainty by " + args.sort_key + " bin", "bin index", "ratio (%)");
    const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
    const Marker markers[] = {Marker::circle, Marker::square, Marker::diamond, Marker::triangle,
                              Marker::star, Marker::circle};
    std::vector<std::pair<double, double>> points;
    for (std::size_t i = 0; i < model_unc.per_bin.size(); ++i)
        points.emplace_back(static_cast<double>(i + 1), 100.0 * model_unc.per_bin[i].ratio);
    chart.add_series("model", points, colors[0], markers[0]);

    json fitting = json::object();
    std::string combined_tables = bin_table(model_unc);
    for (std::size_t m = 0; m < args.model_files.size(); ++m) {
        const std::string& file = args.model_files[m];
        const std::string model_text = read_file(file);
        run.input_digest(file, model_text);
        const AnyModel model = parse_model(model_text);
        const std::string stem = model_stem(file);

        const std::vector<double> yhat = predictions_for(model, data);
        const UncertaintyReport rep = fitting_uncertainty(data, yhat, key, args.bins);
        write_file(run.out("fitting_uncertainty_" + stem + ".csv"), bin_table(rep));
        fitting[stem] = rep.overall;
        combined_tables += bin_table(rep);

        points.clear();
        for (std::size_t i = 0; i < rep.per_bin.size(); ++i)
            points.emplace_back(static_cast<double>(i + 1), 100.0 * rep.per_bin[i].ratio);
        const std::size_t style = 1 + m % 5;
        chart.add_series(stem, points, colors[style], markers[style]);
    }
    summary["fitting_uncertainty"] = fitting;

    chart.set_data_table(combined_tables);
    write_file(run.out("uncertainty.svg"), chart.render());
    write_file(run.out("uncertainty.json"), summary.dump(2) + "\n");
    run.write();
    std::cout << "uncertainty (" << args.sort_key << "): model "
              << 100.0 * model_unc.overall << "%\n";
    return 0;
}

// ---------------------------------------------------------------- stand-eval

struct StandEvalArgs {
    std::string plots, candidate, lr3, out_dir = "out", config;
    std::string pct_rmse_denominator = "mean";
};

/// Field inventories for the stand study carry heights and diameters but no
/// observed biomass (the LR3 reference stands in for ground truth). When the
/// column is absent a unit placeholder is inserted; stand metrics never read
/// the observed value.
std::string ensure_biomass_column(const std::string& csv_text) {
    const CsvTable table = parse_csv(csv_text);
    if (table.column_index("agb_kg")) return csv_text;
    std::string out;
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (i > 0) out += ',';
        out += table.header[i];
    }
    out += ",agb_kg\n";
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < table.header.size(); ++i) {
            if (i > 0) out += ',';
            if (i < row.size()) out += detail::escape_csv_cell(row[i]);
        }
        out += ",1\n";
    }
    return out;
}

int cmd_stand_eval(const StandEvalArgs& args) {
    RunManifest run("stand-eval", args.out_dir);
    run.config("plots", args.plots);
    run.config("candidate", args.candidate);
    run.config("lr3", args.lr3);
    run.config("pct_rmse_denominator", args.pct_rmse_denominator);

    const Dataset data =
        parse_dataset(ensure_biomass_column(run.input(args.plots)), {}, args.plots);

    const std::string cand_text = read_file(args.candidate);
    run.input_digest(args.candidate, cand_text);
    const AnyModel candidate = parse_model(cand_text);

    const std::string ref_text = read_file(args.lr3);
    run.input_digest(args.lr3, ref_text);
    const AnyModel reference_model = parse_model(ref_text);
    const auto* lr3 = std::get_if<LogLinearModel>(&reference_model);
    if (lr3 == nullptr || lr3->kind != AllometryKind::lr3_hd)
        throw InputError("--lr3 must point to a fitted lr3 (height-diameter) model");

    std::vector<PlotGroup> plots;
    std::map<std::string, std::size_t> plot_index;
    for (const TreeRecord& r : data.records) {
        if (!r.plot_id) throw InputError("stand-eval: every record needs a plot_id");
        auto [it, inserted] = plot_index.try_emplace(*r.plot_id, plots.size());
        if (inserted) plots.push_back({*r.plot_id, {}});
        plots[it->second].trees.push_back(r);
    }

    PctRmseDenominator denom = PctRmseDenominator::mean_total;
    if (args.pct_rmse_denominator == "sum") denom = PctRmseDenominator::sum_total;
    else if (args.pct_rmse_denominator != "mean")
        throw InputError("--pct-rmse-denominator must be 'mean' or 'sum'");

    const StandReport report = evaluate_stands(
        plots, [&](const TreeRecord& r) { return predict_any(candidate, r); },
        [&](const TreeRecord& r) { return predict_loglinear(*lr3, r); }, denom);

    std::string table = "plot_id,re\n";
    std::vector<std::pair<double, double>> points;
    for (std::size_t i = 0; i < report.per_plot_re.size(); ++i) {
        table += report.per_plot_re[i].first + "," +
                 format_double(report.per_plot_re[i].second) + "\n";
        points.emplace_back(static_cast<double>(i + 1), report.per_plot_re[i].second);
    }
    write_file(run.out("per_plot_re.csv"), table);

    SvgChart chart("Per-plot relative error vs LR3 reference", "plot index", "RE");
    chart.set_data_table(table);
    chart.add_hline(0.0, "#888888");
    chart.add_series(model_kind(candidate), points, "#d62728", Marker::circle);
    write_file(run.out("stand_re.svg"), chart.render());

    json out;
    out["candidate"] = args.candidate;
    out["reference"] = args.lr3;
    out["n_plots"] = plots.size();
    out["overall_re"] = report.overall_re;
    out["pct_rmse"] = report.pct_rmse;
    json per_plot = json::array();
    for (const auto& [plot_id, re] : report.per_plot_re)
        per_plot.push_back({{"plot_id", plot_id}, {"re", re}});
    out["per_plot_re"] = per_plot;
    write_file(run.out("stand_report.json"), out.dump(2) + "\n");
    run.write();
    std::cout << "stand-eval: overall RE " << report.overall_re << ", %RMSE "
              << report.pct_rmse << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tree-level biomass estimation: GP regression, allometric baselines, "
                 "and uncertainty decomposition"};
    app.require_subcommand(1);

    IngestArgs ingest;
    auto* ingest_cmd = app.add_subcommand("ingest", "parse, filter, and canonicalize a CSV");
    ingest_cmd->add_option("--input", ingest.input, "input CSV")->required();
    ingest_cmd->add_option("--out-dir", ingest.out_dir, "output directory");
    auto* ingest_cfg = ingest_cmd->add_option("--config", ingest.config, "JSON config file");
    ingest_cmd->add_option("--map", ingest.maps, "column rename canonical=actual (repeatable)");
    ingest_cmd->add_option("--require", ingest.required,
                           "treat a column as required (repeatable)");
    auto* ingest_mind =
        ingest_cmd->add_option("--min-diameter-cm", ingest.min_diameter_cm, "DBH threshold");
    auto* ingest_minb =
        ingest_cmd->add_option("--min-biomass-kg", ingest.min_biomass_kg, "biomass threshold");
    ingest_cmd->add_flag("--allow-missing-diameter", ingest.allow_missing_diameter,
                         "keep records without DBH");
    ingest_cmd->add_flag("--no-filter", ingest.no_filter, "skip all inclusion rules");

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "fit a model on a 9:1 style split");
    fit_cmd->add_option("--dataset", fit.dataset, "canonical dataset CSV")->required();
    fit_cmd->add_option("--model", fit.model_kind, "lr | lr2 | lr3 | lr-d | rf | gpr")
        ->required();
    fit_cmd->add_option("--out-dir", fit.out_dir, "output directory");
    auto* fit_cfg = fit_cmd->add_option("--config", fit.config, "JSON config file");
    auto* fit_seed = fit_cmd->add_option("--seed", fit.seed, "split / bootstrap seed");
    auto* fit_frac =
        fit_cmd->add_option("--test-fraction", fit.test_fraction, "held-out fraction");
    auto* fit_sigma = fit_cmd->add_option("--sigma", fit.sigma, "GPR noise sigma");
    auto* fit_log = fit_cmd->add_option("--log-transform", fit.log_transform,
                                        "on | off (GPR axes transform)");
    auto* fit_scale =
        fit_cmd->add_option("--outlier-scale", fit.outlier_scale, "log | raw (R2 rule)");
    fit_cmd->add_option("--trees", fit.trees, "RF: number of trees");
    fit_cmd->add_option("--depth", fit.depth, "RF: max depth");
    fit_cmd->add_option("--min-leaf", fit.min_leaf, "RF: min samples per leaf");
    fit_cmd->add_option("--features", fit.features, "RF: comma list of h, d, cd");

    PredictArgs predict;
    auto* predict_cmd = app.add_subcommand("predict", "predict biomass for query rows");
    predict_cmd->add_option("--model-file", predict.model_file, "persisted model")->required();
    predict_cmd->add_option("--input", predict.input, "query CSV")->required();
    predict_cmd->add_option("--out-dir", predict.out_dir, "output directory");
    predict_cmd->add_option("--config", predict.config, "JSON config file");
    predict_cmd->add_option("--map", predict.maps, "column rename canonical=actual");

    EvaluateArgs evaluate;
    auto* eval_cmd = app.add_subcommand("evaluate", "tree-level metrics and residual bins");
    eval_cmd->add_option("--model", evaluate.model_files, "model file(s)")->required();
    eval_cmd->add_option("--test", evaluate.test, "test CSV with observed biomass")->required();
    eval_cmd->add_option("--out-dir", evaluate.out_dir, "output directory");
    auto* eval_cfg = eval_cmd->add_option("--config", evaluate.config, "JSON config file");
    auto* eval_bins = eval_cmd->add_option("--bins", evaluate.bins, "residual bins");
    auto* eval_scale =
        eval_cmd->add_option("--outlier-scale", evaluate.outlier_scale, "log | raw");
    eval_cmd->add_option("--axis", evaluate.axis, "binning axis: h | d | cd | hcd");

    UncertaintyArgs uncertainty;
    auto* unc_cmd = app.add_subcommand("uncertainty", "model / fitting uncertainty indices");
    unc_cmd->add_option("--dataset", uncertainty.dataset, "canonical dataset CSV")->required();
    unc_cmd->add_option("--model", uncertainty.model_files,
                        "model file(s) for fitting uncertainty");
    unc_cmd->add_option("--out-dir", uncertainty.out_dir, "output directory");
    auto* unc_cfg = unc_cmd->add_option("--config", uncertainty.config, "JSON config file");
    unc_cmd->add_option("--sort-key", uncertainty.sort_key, "h | d | cd | hcd");
    auto* unc_bins = unc_cmd->add_option("--bins", uncertainty.bins, "bucket / pocket count");

    StandEvalArgs stand;
    auto* stand_cmd = app.add_subcommand("stand-eval", "plot-level RE and %RMSE vs LR3");
    stand_cmd->add_option("--plots", stand.plots, "CSV with plot_id per record")->required();
    stand_cmd->add_option("--candidate", stand.candidate, "candidate model file")->required();
    stand_cmd->add_option("--lr3", stand.lr3, "LR3 reference model file")->required();
    stand_cmd->add_option("--out-dir", stand.out_dir, "output directory");
    auto* stand_cfg = stand_cmd->add_option("--config", stand.config, "JSON config file");
    auto* stand_denom = stand_cmd->add_option("--pct-rmse-denominator",
                                              stand.pct_rmse_denominator, "mean | sum");

    CLI11_PARSE(app, argc, argv);

    try {
        if (ingest_cmd->parsed()) {
            ConfigOverlay cfg;
            cfg.load(ingest.config);
            cfg.apply(ingest_mind, "min_diameter_cm", ingest.min_diameter_cm);
            cfg.apply(ingest_minb, "min_biomass_kg", ingest.min_biomass_kg);
            (void)ingest_cfg;
            return cmd_ingest(ingest);
        }
        if (fit_cmd->parsed()) {
            ConfigOverlay cfg;
            cfg.load(fit.config);
            cfg.apply(fit_seed, "seed", fit.seed);
            cfg.apply(fit_frac, "test_fraction", fit.test_fraction);
            cfg.apply(fit_sigma, "sigma", fit.sigma);
            cfg.apply(fit_log, "log_transform", fit.log_transform);
            cfg.apply(fit_scale, "outlier_scale", fit.outlier_scale);
            (void)fit_cfg;
            return cmd_fit(fit);
        }
        if (predict_cmd->parsed()) return cmd_predict(predict);
        if (eval_cmd->parsed()) {
            ConfigOverlay cfg;
            cfg.load(evaluate.config);
            cfg.apply(eval_bins, "bins", evaluate.bins);
            cfg.apply(eval_scale, "outlier_scale", evaluate.outlier_scale);
            (void)eval_cfg;
            return cmd_evaluate(evaluate);
        }
        if (unc_cmd->parsed()) {
            ConfigOverlay cfg;
            cfg.load(uncertainty.config);
            cfg.apply(unc_bins, "bins", uncertainty.bins);
            (void)unc_cfg;
            return cmd_uncertainty(uncertainty);
        }
        if (stand_cmd->parsed()) {
            ConfigOverlay cfg;
            cfg.load(stand.config);
            cfg.apply(stand_denom, "pct_rmse_denominator", stand.pct_rmse_denominator);
            (void)stand_cfg;
            return cmd_stand_eval(stand);
        }
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
