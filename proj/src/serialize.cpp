#include "cascade/serialize.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>

namespace cascade {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void fail(const std::string& msg) { throw ValidationError(msg); }
}  // namespace

ordered_json accuracy_model_to_json(const AccuracyModel& model) {
    ordered_json j;
    switch (model.kind) {
        case AccuracyModel::Kind::RawFeature:
            j["kind"] = "raw_feature";
            j["feature"] = model.feature;
            break;
        case AccuracyModel::Kind::Logistic:
            j["kind"] = "logistic";
            j["features"] = model.feature_names;
            j["weights"] = model.weights;
            j["bias"] = model.bias;
            break;
        case AccuracyModel::Kind::Isotonic:
            j["kind"] = "isotonic";
            j["feature"] = model.feature;
            j["breakpoints"] = model.breakpoints;
            j["values"] = model.values;
            break;
    }
    return j;
}

AccuracyModel accuracy_model_from_json(const ordered_json& j) {
    if (!j.is_object() || !j.contains("kind")) fail("accuracy_model: missing 'kind'");
    std::string kind = j["kind"].get<std::string>();
    AccuracyModel model;
    if (kind == "raw_feature") {
        model.kind = AccuracyModel::Kind::RawFeature;
        model.feature = j.at("feature").get<std::string>();
    } else if (kind == "logistic") {
        model.kind = AccuracyModel::Kind::Logistic;
        model.feature_names = j.at("features").get<std::vector<std::string>>();
        model.weights = j.at("weights").get<std::vector<double>>();
        model.bias = j.at("bias").get<double>();
        if (model.weights.size() != model.feature_names.size()) {
            fail("accuracy_model: weights/features length mismatch");
        }
    } else if (kind == "isotonic") {
        model.kind = AccuracyModel::Kind::Isotonic;
        model.feature = j.at("feature").get<std::string>();
        model.breakpoints = j.at("breakpoints").get<std::vector<double>>();
        model.values = j.at("values").get<std::vector<double>>();
        if (model.breakpoints.size() != model.values.size() || model.breakpoints.empty()) {
            fail("accuracy_model: bad isotonic shape");
        }
    } else {
        fail("accuracy_model: unknown kind '" + kind + "'");
    }
    return model;
}

ordered_json threshold_to_json(double threshold) {
    if (threshold == kInf) return "+inf";
    if (threshold == -kInf) return "-inf";
    return threshold;
}

double threshold_from_json(const ordered_json& j) {
    if (j.is_string()) {
        std::string s = j.get<std::string>();
        if (s == "+inf" || s == "inf") return kInf;
        if (s == "-inf") return -kInf;
        fail("threshold: unknown string '" + s + "'");
    }
    if (!j.is_number()) fail("threshold: expected number or '-inf'/'+inf'");
    return j.get<double>();
}

ordered_json constraint_to_json(const AccuracyConstraint& ac) {
    ordered_json j;
    if (ac.kind == AccuracyConstraint::Kind::AlwaysTrue) {
        j["kind"] = "always_true";
    } else {
        j["kind"] = "min_relative";
        j["alpha"] = ac.alpha;
        j["metric"] = to_string(ac.metric);
        j["reference"] = ac.reference_model_id;
    }
    return j;
}

AccuracyConstraint constraint_from_json(const ordered_json& j) {
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "always_true") return AccuracyConstraint::always_true();
    if (kind == "min_relative") {
        return AccuracyConstraint::min_relative(j.at("alpha").get<double>(),
                                                parse_metric_kind(j.at("metric").get<std::string>()),
                                                j.at("reference").get<std::string>());
    }
    fail("constraint: unknown kind '" + kind + "'");
}

namespace {

ordered_json abstaining_to_json(const AbstainingModel& m) {
    ordered_json j;
    j["model_id"] = m.model_id;
    j["accuracy_model"] = accuracy_model_to_json(m.accuracy_model);
    j["threshold"] = threshold_to_json(m.threshold);
    return j;
}

AbstainingModel abstaining_from_json(const ordered_json& j) {
    AbstainingModel m;
    m.model_id = j.at("model_id").get<std::string>();
    m.accuracy_model = accuracy_model_from_json(j.at("accuracy_model"));
    m.threshold = threshold_from_json(j.at("threshold"));
    return m;
}

ordered_json stage_to_json(const GeneratedModel& stage) {
    ordered_json j;
    j["model_id"] = stage.id();
    if (stage.provenance == GeneratedModel::Provenance::Composite) {
        const auto& comp = std::get<CompositeAbstainingModel>(stage.model);
        ordered_json chain_ids = ordered_json::array();
        ordered_json chain_stages = ordered_json::array();
        for (const AbstainingModel& member : comp.chain) {
            chain_ids.push_back(member.model_id);
            chain_stages.push_back(abstaining_to_json(member));
        }
        j["composite_chain"] = std::move(chain_ids);
        j["chain_stages"] = std::move(chain_stages);
        j["accuracy_model"] = accuracy_model_to_json(comp.chain.back().accuracy_model);
        j["threshold"] = threshold_to_json(comp.chain.back().threshold);
    } else if (stage.provenance == GeneratedModel::Provenance::Ensemble) {
        const auto& ens = std::get<EnsembleAbstainingModel>(stage.model);
        ordered_json e;
        e["components"] = ens.component_model_ids;
        e["beta"] = ens.beta;
        j["ensemble"] = std::move(e);
        j["accuracy_model"] = accuracy_model_to_json(ens.accuracy_model);
        j["threshold"] = threshold_to_json(ens.threshold);
    } else {
        const auto& m = std::get<AbstainingModel>(stage.model);
        j["accuracy_model"] = accuracy_model_to_json(m.accuracy_model);
        j["threshold"] = threshold_to_json(m.threshold);
    }
    return j;
}

GeneratedModel stage_from_json(const ordered_json& j) {
    if (j.contains("composite_chain")) {
        CompositeAbstainingModel comp;
        comp.id = j.at("model_id").get<std::string>();
        if (!j.contains("chain_stages")) fail("cascade stage: composite without chain_stages");
        for (const auto& member : j.at("chain_stages")) {
            comp.chain.push_back(abstaining_from_json(member));
        }
        if (comp.chain.empty()) fail("cascade stage: empty composite chain");
        return GeneratedModel::composite(std::move(comp));
    }
    if (j.contains("ensemble")) {
        EnsembleAbstainingModel ens;
        ens.id = j.at("model_id").get<std::string>();
        ens.component_model_ids =
            j.at("ensemble").at("components").get<std::vector<std::string>>();
        ens.beta = j.at("ensemble").at("beta").get<std::vector<double>>();
        if (ens.beta.size() != ens.component_model_ids.size()) {
            fail("cascade stage: ensemble beta/components length mismatch");
        }
        ens.accuracy_model = accuracy_model_from_json(j.at("accuracy_model"));
        ens.threshold = threshold_from_json(j.at("threshold"));
        return GeneratedModel::ensemble(std::move(ens));
    }
    return GeneratedModel::pool(abstaining_from_json(j));
}

}  // namespace

ordered_json cascade_to_json(const Cascade& cascade) {
    ordered_json j;
    ordered_json stages = ordered_json::array();
    for (const GeneratedModel& s : cascade.stages) stages.push_back(stage_to_json(s));
    j["stages"] = std::move(stages);
    j["constraint"] = constraint_to_json(cascade.constraint);
    j["cost"] = {{"kind", cascade.cost_kind == CostFunction::Kind::Linear ? "linear" : "graph"}};

    ordered_json stats;
    stats["T"] = cascade.build_total_cost;
    stats["C_sigma"] = cascade.build_total_stage_cost;
    ordered_json table = ordered_json::array();
    for (std::size_t i = 0; i < cascade.stage_table.size(); ++i) {
        const StageStats& s = cascade.stage_table[i];
        ordered_json row;
        row["stage"] = i + 1;
        row["model_id"] = s.model_id;
        row["n"] = s.n;
        row["stage_cost"] = s.stage_cost;
        row["answered"] = s.answered;
        row["ratio"] = std::isfinite(s.ratio) ? ordered_json(s.ratio) : ordered_json("inf");
        row["threshold"] = threshold_to_json(s.threshold);
        table.push_back(std::move(row));
    }
    stats["stage_table"] = std::move(table);
    if (!cascade.train_log_path.empty()) stats["train_log_path"] = cascade.train_log_path;
    if (!cascade.train_log_hash.empty()) stats["train_log_hash"] = cascade.train_log_hash;
    j["build_stats"] = std::move(stats);
    return j;
}

Cascade cascade_from_json(const ordered_json& j) {
    Cascade cascade;
    for (const auto& s : j.at("stages")) cascade.stages.push_back(stage_from_json(s));
    cascade.constraint = constraint_from_json(j.at("constraint"));
    std::string cost_kind = j.at("cost").at("kind").get<std::string>();
    if (cost_kind == "linear") {
        cascade.cost_kind = CostFunction::Kind::Linear;
    } else if (cost_kind == "graph") {
        cascade.cost_kind = CostFunction::Kind::Graph;
    } else {
        fail("cascade: unknown cost kind '" + cost_kind + "'");
    }
    if (j.contains("build_stats")) {
        const auto& stats = j.at("build_stats");
        cascade.build_total_cost = stats.value("T", 0.0);
        cascade.build_total_stage_cost = stats.value("C_sigma", 0.0);
        cascade.train_log_path = stats.value("train_log_path", std::string());
        cascade.train_log_hash = stats.value("train_log_hash", std::string());
        if (stats.contains("stage_table")) {
            for (const auto& row : stats.at("stage_table")) {
                StageStats s;
                s.model_id = row.at("model_id").get<std::string>();
                s.n = row.at("n").get<std::size_t>();
                s.stage_cost = row.at("stage_cost").get<double>();
                s.answered = row.at("answered").get<std::size_t>();
                s.ratio = row.at("ratio").is_string()
                              ? std::numeric_limits<double>::infinity()
                              : row.at("ratio").get<double>();
                s.threshold = threshold_from_json(row.at("threshold"));
                cascade.stage_table.push_back(std::move(s));
            }
        }
    }
    return cascade;
}

void save_cascade(const Cascade& cascade, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail("cannot open '" + path + "' for writing");
    out << cascade_to_json(cascade).dump(2) << "\n";
}

Cascade load_cascade(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open cascade '" + path + "'");
    try {
        return cascade_from_json(ordered_json::parse(in));
    } catch (const ordered_json::exception& e) {
        fail("cascade '" + path + "': " + e.what());
    }
}

std::string file_content_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open '" + path + "' for hashing");
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    char buffer[4096];
    while (in.read(buffer, sizeof(buffer)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            hash ^= static_cast<unsigned char>(buffer[i]);
            hash *= 0x100000001b3ULL;
        }
    }
    char hex[32];
    std::snprintf(hex, sizeof(hex), "fnv1a64:%016llx", static_cast<unsigned long long>(hash));
    return hex;
}

}  // namespace cascade
