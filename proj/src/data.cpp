#include "cascade/data.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace cascade {

namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& msg) { throw ValidationError(msg); }

// argmax with ties broken by lowest index
int argmax_lowest(const std::vector<double>& scores) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    return static_cast<int>(best);
}

}  // namespace

PredictionLog::PredictionLog(std::vector<LabeledExample> examples,
                             std::vector<std::string> model_ids,
                             std::vector<std::vector<ModelOutput>> outputs)
    : examples_(std::move(examples)),
      model_ids_(std::move(model_ids)),
      outputs_(std::move(outputs)) {
    if (outputs_.size() != examples_.size()) {
        fail("prediction log: outputs rows (" + std::to_string(outputs_.size()) +
             ") != examples (" + std::to_string(examples_.size()) + ")");
    }
    for (std::size_t i = 0; i < outputs_.size(); ++i) {
        if (outputs_[i].size() != model_ids_.size()) {
            fail("prediction log: example '" + examples_[i].example_id +
                 "' has " + std::to_string(outputs_[i].size()) + " outputs, expected " +
                 std::to_string(model_ids_.size()));
        }
    }
    build_indexes();
}

void PredictionLog::build_indexes() {
    example_index_.clear();
    model_index_.clear();
    for (std::size_t i = 0; i < examples_.size(); ++i) {
        if (examples_[i].label < 0) {
            fail("prediction log: example '" + examples_[i].example_id +
                 "' has negative label");
        }
        if (!example_index_.emplace(examples_[i].example_id, i).second) {
            fail("prediction log: duplicate example_id '" + examples_[i].example_id + "'");
        }
    }
    for (std::size_t j = 0; j < model_ids_.size(); ++j) {
        if (!model_index_.emplace(model_ids_[j], j).second) {
            fail("prediction log: duplicate model_id '" + model_ids_[j] + "'");
        }
    }
}

bool PredictionLog::has_example(std::string_view example_id) const {
    return example_index_.find(std::string(example_id)) != example_index_.end();
}

bool PredictionLog::has_model(std::string_view model_id) const {
    return model_index_.find(std::string(model_id)) != model_index_.end();
}

std::size_t PredictionLog::example_index(std::string_view example_id) const {
    auto it = example_index_.find(std::string(example_id));
    if (it == example_index_.end()) {
        fail("prediction log: unknown example_id '" + std::string(example_id) + "'");
    }
    return it->second;
}

std::size_t PredictionLog::model_index(std::string_view model_id) const {
    auto it = model_index_.find(std::string(model_id));
    if (it == model_index_.end()) {
        fail("prediction log: unknown model_id '" + std::string(model_id) + "'");
    }
    return it->second;
}

int PredictionLog::label(std::string_view example_id) const {
    return examples_[example_index(example_id)].label;
}

const ModelOutput& PredictionLog::output(std::string_view example_id,
                                         std::string_view model_id) const {
    return outputs_[example_index(example_id)][model_index(model_id)];
}

void PredictionLogBuilder::add_example(LabeledExample example,
                                       std::map<std::string, ModelOutput> outputs) {
    if (examples_.empty() && model_ids_.empty()) {
        for (const auto& [id, _] : outputs) model_ids_.push_back(id);
    }
    std::vector<ModelOutput> row;
    row.reserve(model_ids_.size());
    for (const auto& id : model_ids_) {
        auto it = outputs.find(id);
        if (it == outputs.end()) {
            fail("prediction log: missing output for example '" + example.example_id +
                 "', model '" + id + "'");
        }
        row.push_back(std::move(it->second));
        outputs.erase(it);
    }
    if (!outputs.empty()) {
        fail("prediction log: example '" + example.example_id + "' has output for model '" +
             outputs.begin()->first + "' which is absent from other records");
    }
    examples_.push_back(std::move(example));
    outputs_.push_back(std::move(row));
}

PredictionLog PredictionLogBuilder::build() {
    return PredictionLog(std::move(examples_), std::move(model_ids_), std::move(outputs_));
}

bool ModelManifest::has_model(std::string_view id) const {
    return std::any_of(entries.begin(), entries.end(),
                       [&](const ManifestEntry& e) { return e.id == id; });
}

double ModelManifest::base_cost(std::string_view id) const {
    for (const auto& e : entries) {
        if (e.id == id) return e.cost;
    }
    fail("manifest: unknown model '" + std::string(id) + "'");
}

std::string to_string(AccuracyMetricKind kind) {
    switch (kind) {
        case AccuracyMetricKind::Top1: return "top1";
    }
    return "unknown";
}

AccuracyMetricKind parse_metric_kind(std::string_view name) {
    if (name == "top1") return AccuracyMetricKind::Top1;
    fail("unknown accuracy metric '" + std::string(name) + "'");
}

double metric_value(AccuracyMetricKind kind, int prediction, int label) {
    switch (kind) {
        case AccuracyMetricKind::Top1: return prediction == label ? 1.0 : 0.0;
    }
    return 0.0;
}

namespace {

ModelOutput parse_model_output(const json& j, const std::string& model_id, long line_no) {
    auto where = [&] { return "line " + std::to_string(line_no) + ", model '" + model_id + "'"; };
    if (!j.is_object() || !j.contains("prediction") || !j["prediction"].is_number_integer()) {
        fail("prediction log: " + where() + ": missing integer 'prediction'");
    }
    ModelOutput out;
    out.prediction = j["prediction"].get<int>();
    if (j.contains("scores")) {
        const json& s = j["scores"];
        if (!s.is_array()) fail("prediction log: " + where() + ": 'scores' must be an array");
        std::vector<double> scores;
        scores.reserve(s.size());
        for (const auto& v : s) {
            if (!v.is_number()) fail("prediction log: " + where() + ": non-numeric score");
            scores.push_back(v.get<double>());
        }
        if (out.prediction != argmax_lowest(scores)) {
            fail("prediction log: " + where() +
                 ": prediction does not equal the argmax of 'scores'");
        }
        out.scores = std::move(scores);
    }
    if (j.contains("features")) {
        const json& f = j["features"];
        if (!f.is_object()) fail("prediction log: " + where() + ": 'features' must be an object");
        for (const auto& [name, v] : f.items()) {
            if (!v.is_number()) {
                fail("prediction log: " + where() + ": non-numeric feature '" + name + "'");
            }
            out.features[name] = v.get<double>();
        }
    }
    return out;
}

}  // namespace

PredictionLog load_prediction_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open prediction log '" + path + "'");

    PredictionLogBuilder builder;
    // expected score-vector length per model, fixed by first occurrence
    std::map<std::string, std::size_t> score_len;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            fail("prediction log: line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!rec.is_object() || !rec.contains("example_id") || !rec["example_id"].is_string() ||
            !rec.contains("label") || !rec["label"].is_number_integer() ||
            !rec.contains("models") || !rec["models"].is_object()) {
            fail("prediction log: line " + std::to_string(line_no) +
                 ": record must have string 'example_id', integer 'label', object 'models'");
        }
        LabeledExample ex{rec["example_id"].get<std::string>(), rec["label"].get<int>()};
        if (ex.label < 0) {
            fail("prediction log: line " + std::to_string(line_no) + ": negative label");
        }
        std::map<std::string, ModelOutput> outputs;
        for (const auto& [model_id, out_json] : rec["models"].items()) {
            ModelOutput out = parse_model_output(out_json, model_id, line_no);
            if (out.scores) {
                auto [it, inserted] = score_len.emplace(model_id, out.scores->size());
                if (!inserted && it->second != out.scores->size()) {
                    fail("prediction log: line " + std::to_string(line_no) + ": model '" +
                         model_id + "' score vector length " +
                         std::to_string(out.scores->size()) + " != expected " +
                         std::to_string(it->second));
                }
            }
            outputs.emplace(model_id, std::move(out));
        }
        builder.add_example(std::move(ex), std::move(outputs));
    }
    return builder.build();
}

void write_prediction_log(const PredictionLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail("cannot open '" + path + "' for writing");
    for (std::size_t i = 0; i < log.num_examples(); ++i) {
        json rec;
        rec["example_id"] = log.examples()[i].example_id;
        rec["label"] = log.examples()[i].label;
        json models = json::object();
        for (std::size_t j = 0; j < log.num_models(); ++j) {
            const ModelOutput& mo = log.output(i, j);
            json m;
            m["prediction"] = mo.prediction;
            if (mo.scores) m["scores"] = *mo.scores;
            if (!mo.features.empty()) m["features"] = mo.features;
            models[log.model_ids()[j]] = std::move(m);
        }
        rec["models"] = std::move(models);
        out << rec.dump() << "\n";
    }
}

ModelManifest load_model_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open manifest '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        fail("manifest '" + path + "': " + e.what());
    }
    if (!j.is_object() || !j.contains("models") || !j["models"].is_array()) {
        fail("manifest '" + path + "': expected object with 'models' array");
    }
    ModelManifest manifest;
    for (const auto& m : j["models"]) {
        if (!m.is_object() || !m.contains("id") || !m["id"].is_string() ||
            !m.contains("cost") || !m["cost"].is_number()) {
            fail("manifest: each model needs string 'id' and numeric 'cost'");
        }
        ManifestEntry entry{m["id"].get<std::string>(), m["cost"].get<double>()};
        if (entry.cost < 0) fail("manifest: model '" + entry.id + "' has negative cost");
        if (manifest.has_model(entry.id)) fail("manifest: duplicate model '" + entry.id + "'");
        manifest.entries.push_back(std::move(entry));
    }
    if (j.contains("reuse_edges")) {
        if (!j["reuse_edges"].is_array()) fail("manifest: 'reuse_edges' must be an array");
        for (const auto& e : j["reuse_edges"]) {
            if (!e.is_object() || !e.contains("from") || !e["from"].is_string() ||
                !e.contains("to") || !e["to"].is_string() ||
                !e.contains("weight") || !e["weight"].is_number()) {
                fail("manifest: each reuse edge needs 'from', 'to', numeric 'weight'");
            }
            ReuseEdge edge;
            std::string from = e["from"].get<std::string>();
            if (from != "∅") edge.from = from;
            edge.to = e["to"].get<std::string>();
            edge.weight = e["weight"].get<double>();
            if (edge.weight < 0) fail("manifest: negative edge weight to '" + edge.to + "'");
            if (edge.from && !manifest.has_model(*edge.from)) {
                fail("manifest: reuse edge from unknown model '" + *edge.from + "'");
            }
            if (!manifest.has_model(edge.to)) {
                fail("manifest: reuse edge to unknown model '" + edge.to + "'");
            }
            // an explicit source edge must agree with the declared base cost
            if (!edge.from && edge.weight != manifest.base_cost(edge.to)) {
                fail("manifest: source edge weight for '" + edge.to +
                     "' does not match its base cost");
            }
            manifest.reuse_edges.push_back(std::move(edge));
        }
    }
    return manifest;
}

}  // namespace cascade
