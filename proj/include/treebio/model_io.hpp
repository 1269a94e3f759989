#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "treebio/allometry.hpp"
#include "treebio/errors.hpp"
#include "treebio/forest.hpp"
#include "treebio/gpr.hpp"
#include "treebio/numeric.hpp"

namespace treebio {

// ---------------------------------------------------------------------------
// All three model kinds persist in one versioned, self-describing text
// container. Numbers are written in shortest round-trip form, the payload
// carries no timestamps, and the final line is an FNV-1a digest of
// everything above it, so identical models produce byte-identical files and
// reports stay traceable to their exact inputs.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kModelFormatTag = "treebio.model.v1";

using AnyModel = std::variant<LogLinearModel, ForestModel, GprModel>;

inline const char* model_kind(const AnyModel& model) {
    struct Visitor {
        const char* operator()(const LogLinearModel&) const { return "loglinear"; }
        const char* operator()(const ForestModel&) const { return "forest"; }
        const char* operator()(const GprModel&) const { return "gpr"; }
    };
    return std::visit(Visitor{}, model);
}

namespace detail {

inline void append_kv(std::string& out, std::string_view key, std::string_view value) {
    out.append(key);
    out.append(": ");
    out.append(value);
    out.push_back('\n');
}

inline std::string with_digest(std::string payload) {
    const std::string digest = fnv1a64_hex(payload);
    payload += "digest: fnv1a64:";
    payload += digest;
    payload.push_back('\n');
    return payload;
}

}  // namespace detail

inline std::string serialize_model(const LogLinearModel& m) {
    std::string out(kModelFormatTag);
    out.push_back('\n');
    detail::append_kv(out, "kind", "loglinear");
    detail::append_kv(out, "model", allometry_label(m.kind));
    detail::append_kv(out, "coef_a", format_double(m.coef_a));
    detail::append_kv(out, "coef_b", format_double(m.coef_b));
    detail::append_kv(out, "coef_c", format_double(m.coef_c));
    detail::append_kv(out, "residual_sigma", format_double(m.residual_sigma));
    detail::append_kv(out, "n_train", std::to_string(m.n_train));
    return detail::with_digest(std::move(out));
}

inline std::string serialize_model(const GprModel& m) {
    std::string out(kModelFormatTag);
    out.push_back('\n');
    detail::append_kv(out, "kind", "gpr");
    detail::append_kv(out, "transform", transform_label(m.transform.mode));
    detail::append_kv(out, "length_scale", format_double(m.hyper.length_scale_l));
    detail::append_kv(out, "mean_offset", format_double(m.hyper.mean_offset_b0));
    detail::append_kv(out, "noise_sigma", format_double(m.hyper.noise_sigma));
    detail::append_kv(out, "jitter", format_double(m.jitter_used));
    detail::append_kv(out, "n_train", std::to_string(m.train_x.size()));
    for (std::size_t i = 0; i < m.train_x.size(); ++i)
        detail::append_kv(out, "sample",
                          format_double(m.train_x[i]) + " " + format_double(m.train_y[i]));
    return detail::with_digest(std::move(out));
}

inline std::string serialize_model(const ForestModel& m) {
    std::string out(kModelFormatTag);
    out.push_back('\n');
    detail::append_kv(out, "kind", "forest");
    std::string features;
    for (Feature f : m.config.features) {
        if (!features.empty()) features.push_back(' ');
        features += feature_label(f);
    }
    detail::append_kv(out, "features", features);
    detail::append_kv(out, "n_trees", std::to_string(m.config.n_trees));
    detail::append_kv(out, "max_depth", std::to_string(m.config.max_depth));
    detail::append_kv(out, "min_leaf", std::to_string(m.config.min_leaf));
    detail::append_kv(out, "seed", std::to_string(m.config.seed));
    for (const RegressionTree& tree : m.trees) {
        detail::append_kv(out, "tree", std::to_string(tree.nodes.size()));
        for (const TreeNode& n : tree.nodes) {
            detail::append_kv(out, "node",
                              std::to_string(n.feature) + " " + format_double(n.threshold) +
                                  " " + std::to_string(n.left) + " " + std::to_string(n.right) +
                                  " " + format_double(n.value));
        }
    }
    return detail::with_digest(std::move(out));
}

inline std::string serialize_model(const AnyModel& model) {
    return std::visit([](const auto& m) { return serialize_model(m); }, model);
}

namespace detail {

struct ModelLines {
    std::vector<std::pair<std::string, std::string>> entries;  // key/value, in order
    std::size_t cursor = 0;

    bool done() const { return cursor >= entries.size(); }
    const std::string& peek_key() const { return entries[cursor].first; }

    std::string expect(const std::string& key) {
        if (done() || entries[cursor].first != key)
            throw ModelFormatError("model container: expected key '" + key + "'");
        return entries[cursor++].second;
    }

    double expect_double(const std::string& key) {
        auto v = parse_double(expect(key));
        if (!v) throw ModelFormatError("model container: bad number for key '" + key + "'");
        return *v;
    }

    long long expect_int(const std::string& key) {
        const std::string v = expect(key);
        long long out = 0;
        auto res = std::from_chars(v.data(), v.data() + v.size(), out);
        if (res.ec != std::errc() || res.ptr != v.data() + v.size())
            throw ModelFormatError("model container: bad integer for key '" + key + "'");
        return out;
    }

    std::uint64_t expect_uint64(const std::string& key) {
        const std::string v = expect(key);
        std::uint64_t out = 0;
        auto res = std::from_chars(v.data(), v.data() + v.size(), out);
        if (res.ec != std::errc() || res.ptr != v.data() + v.size())
            throw ModelFormatError("model container: bad integer for key '" + key + "'");
        return out;
    }
};

inline ModelLines tokenize_model(std::string_view text) {
    // Verify the trailing digest first, over the exact payload bytes.
    const std::size_t digest_pos = text.rfind("digest: fnv1a64:");
    if (digest_pos == std::string_view::npos)
        throw ModelFormatError("model container: missing digest line");
    const std::string_view payload = text.substr(0, digest_pos);
    std::string_view digest_line = text.substr(digest_pos);
    if (!digest_line.empty() && digest_line.back() == '\n') digest_line.remove_suffix(1);
    const std::string_view stored = digest_line.substr(std::string_view("digest: fnv1a64:").size());
    if (stored != fnv1a64_hex(payload))
        throw ModelFormatError("model container: digest mismatch (file corrupted or edited)");

    ModelLines lines;
    std::size_t pos = 0;
    bool first = true;
    while (pos < payload.size()) {
        std::size_t eol = payload.find('\n', pos);
        if (eol == std::string_view::npos) eol = payload.size();
        std::string_view line = payload.substr(pos, eol - pos);
        pos = eol + 1;
        if (line.empty()) continue;
        if (first) {
            if (line != kModelFormatTag)
                throw ModelFormatError("model container: unrecognized format tag '" +
                                       std::string(line) + "'");
            first = false;
            continue;
        }
        const std::size_t sep = line.find(": ");
        if (sep == std::string_view::npos)
            throw ModelFormatError("model container: malformed line '" + std::string(line) + "'");
        lines.entries.emplace_back(std::string(line.substr(0, sep)),
                                   std::string(line.substr(sep + 2)));
    }
    if (first) throw ModelFormatError("model container: empty file");
    return lines;
}

inline AllometryKind allometry_kind_from_label(const std::string& label) {
    if (label == "lr_hcd") return AllometryKind::lr_hcd;
    if (label == "lr2_h") return AllometryKind::lr2_h;
    if (label == "lr3_hd") return AllometryKind::lr3_hd;
    if (label == "lr_d") return AllometryKind::lr_d;
    throw ModelFormatError("model container: unknown allometry kind '" + label + "'");
}

inline Feature feature_from_label(const std::string& label) {
    if (label == "log_height") return Feature::log_height;
    if (label == "log_diameter") return Feature::log_diameter;
    if (label == "log_crown") return Feature::log_crown;
    throw ModelFormatError("model container: unknown feature '" + label + "'");
}

}  // namespace detail

inline AnyModel parse_model(std::string_view text) {
    detail::ModelLines lines = detail::tokenize_model(text);
    const std::string kind = lines.expect("kind");

    if (kind == "loglinear") {
        LogLinearModel m;
        m.kind = detail::allometry_kind_from_label(lines.expect("model"));
        m.coef_a = lines.expect_double("coef_a");
        m.coef_b = lines.expect_double("coef_b");
        m.coef_c = lines.expect_double("coef_c");
        m.residual_sigma = lines.expect_double("residual_sigma");
        m.n_train = static_cast<std::size_t>(lines.expect_int("n_train"));
        return m;
    }

    if (kind == "gpr") {
        const std::string transform = lines.expect("transform");
        GprHyperparams hyper;
        hyper.length_scale_l = lines.expect_double("length_scale");
        hyper.mean_offset_b0 = lines.expect_double("mean_offset");
        hyper.noise_sigma = lines.expect_double("noise_sigma");
        const double jitter = lines.expect_double("jitter");
        const auto n = static_cast<std::size_t>(lines.expect_int("n_train"));
        std::vector<double> x, y;
        x.reserve(n);
        y.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::istringstream pair(lines.expect("sample"));
            double xi = 0.0, yi = 0.0;
            if (!(pair >> xi >> yi))
                throw ModelFormatError("model container: malformed sample line");
            x.push_back(xi);
            y.push_back(yi);
        }
        TransformSpec spec;
        spec.mode = transform == "log" ? Transform::natural_log : Transform::raw;
        // reuse the recorded jitter so the factorization reproduces exactly
        return make_gpr_model_from_transformed(std::move(x), std::move(y), hyper, spec, jitter);
    }

    if (kind == "forest") {
        ForestModel m;
        std::istringstream feats(lines.expect("features"));
        std::string label;
        m.config.features.clear();
        while (feats >> label) m.config.features.push_back(detail::feature_from_label(label));
        m.config.n_trees = static_cast<int>(lines.expect_int("n_trees"));
        m.config.max_depth = static_cast<int>(lines.expect_int("max_depth"));
        m.config.min_leaf = static_cast<int>(lines.expect_int("min_leaf"));
        m.config.seed = lines.expect_uint64("seed");
        while (!lines.done() && lines.peek_key() == "tree") {
            const auto n_nodes = static_cast<std::size_t>(lines.expect_int("tree"));
            RegressionTree tree;
            tree.nodes.reserve(n_nodes);
            for (std::size_t i = 0; i < n_nodes; ++i) {
                std::istringstream node_line(lines.expect("node"));
                TreeNode node;
                if (!(node_line >> node.feature >> node.threshold >> node.left >> node.right >>
                      node.value))
                    throw ModelFormatError("model container: malformed node line");
                tree.nodes.push_back(node);
            }
            m.trees.push_back(std::move(tree));
        }
        if (m.trees.empty()) throw ModelFormatError("model container: forest has no trees");
        return m;
    }

    throw ModelFormatError("model container: unknown kind '" + kind + "'");
}

inline void save_model(const std::filesystem::path& path, const AnyModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open for writing: " + path.string());
    const std::string text = serialize_model(model);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw InputError("write failed: " + path.string());
}

inline AnyModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open model file: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_model(buffer.str());
}

/// Point prediction (biomass, kg) for any persisted model kind.
inline double predict_any(const AnyModel& model, const PredictorInputs& inputs) {
    struct Visitor {
        const PredictorInputs& in;
        double operator()(const LogLinearModel& m) const { return predict_loglinear(m, in); }
        double operator()(const ForestModel& m) const { return predict_forest(m, in); }
        double operator()(const GprModel& m) const {
            if (!in.height_m) throw MissingField("gpr", "h_m");
            const double h = *in.height_m;
            return predict_gpr(m, std::span<const double>(&h, 1)).mean[0];
        }
    };
    return std::visit(Visitor{inputs}, model);
}

inline double predict_any(const AnyModel& model, const TreeRecord& record) {
    return predict_any(model, PredictorInputs::from_record(record));
}

}  // namespace treebio
