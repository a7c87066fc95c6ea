#include "cascade/abstain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace cascade {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kParamCap = 25.0;  // box cap on logistic weights and bias

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + e^z) without overflow
double softplus(double z) {
    if (z > 30.0) return z;
    return std::log1p(std::exp(z));
}

// Solve A x = b in place, partial pivoting. Dimensions here are tiny.
std::vector<double> solve_linear(std::vector<std::vector<double>> a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
        }
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        if (a[col][col] == 0.0) continue;  // singular direction; ridge keeps this rare
        for (std::size_t r = col + 1; r < n; ++r) {
            double f = a[r][col] / a[col][col];
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t c = i + 1; c < n; ++c) s -= a[i][c] * x[c];
        x[i] = a[i][i] != 0.0 ? s / a[i][i] : 0.0;
    }
    return x;
}

double clip_cap(double v) { return std::clamp(v, -kParamCap, kParamCap); }

}  // namespace

ConfidenceFeatures compute_features(const ModelOutput& output) {
    if (!output.scores) throw FeatureError("confidence features: scores absent");
    const std::vector<double>& s = *output.scores;
    if (s.size() < 2) throw FeatureError("confidence features: need at least 2 scores");
    for (double v : s) {
        if (!std::isfinite(v)) throw FeatureError("confidence features: non-finite score");
    }

    double top = -kInf, second = -kInf;
    for (double v : s) {
        if (v > top) {
            second = top;
            top = v;
        } else if (v > second) {
            second = v;
        }
    }

    // stabilized softmax: H = log Z - sum p_i (s_i - max)
    double z = 0.0;
    for (double v : s) z += std::exp(v - top);
    double weighted = 0.0;
    for (double v : s) weighted += std::exp(v - top) * (v - top);

    ConfidenceFeatures f;
    f.max_prob = 1.0 / z;
    f.entropy = std::max(0.0, std::log(z) - weighted / z);
    f.logit_gap = top - second;
    return f;
}

FeatureMap to_feature_map(const ConfidenceFeatures& f) {
    return {{"entropy", f.entropy},
            {"max_prob", f.max_prob},
            {"logit_gap", f.logit_gap},
            {"neg_entropy", -f.entropy}};
}

FeatureMap example_features(const PredictionLog& log, std::string_view example_id,
                            std::string_view model_id) {
    const ModelOutput& out = log.output(example_id, model_id);
    FeatureMap map;
    bool computed = false;
    try {
        map = to_feature_map(compute_features(out));
        computed = true;
    } catch (const FeatureError&) {
        // fall back to log-supplied features below
    }
    for (const auto& [name, v] : out.features) map[name] = v;
    if (!computed && out.features.empty()) {
        throw FeatureError("no confidence features for example '" + std::string(example_id) +
                           "', model '" + std::string(model_id) + "'");
    }
    return map;
}

AccuracyModel make_raw_feature_model(std::string feature) {
    AccuracyModel m;
    m.kind = AccuracyModel::Kind::RawFeature;
    m.feature = std::move(feature);
    return m;
}

namespace {

double logistic_loss_params(const std::vector<double>& theta,
                            const std::vector<std::vector<double>>& xs,
                            const std::vector<double>& ys) {
    const std::size_t n = xs.size();
    const std::size_t d = theta.size() - 1;
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double z = theta[d];
        for (std::size_t k = 0; k < d; ++k) z += theta[k] * xs[i][k];
        loss += softplus(z) - ys[i] * z;
    }
    return loss / static_cast<double>(n);
}

}  // namespace

AccuracyModel fit_logistic(const std::vector<std::vector<double>>& features,
                           const std::vector<double>& accuracies,
                           std::vector<std::string> feature_names) {
    if (features.empty()) throw ValidationError("fit_logistic: empty input");
    if (features.size() != accuracies.size()) {
        throw ValidationError("fit_logistic: features/accuracies size mismatch");
    }
    const std::size_t d = features[0].size();
    for (const auto& row : features) {
        if (row.size() != d) throw ValidationError("fit_logistic: feature dimension mismatch");
    }
    if (feature_names.size() != d) {
        throw ValidationError("fit_logistic: feature_names dimension mismatch");
    }
    const std::size_t n = features.size();

    // Projected damped Newton on the capped box; deterministic.
    std::vector<double> theta(d + 1, 0.0);
    double loss = logistic_loss_params(theta, features, accuracies);
    const int max_iter = 500;
    for (int iter = 0; iter < max_iter; ++iter) {
        std::vector<double> grad(d + 1, 0.0);
        std::vector<std::vector<double>> hess(d + 1, std::vector<double>(d + 1, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            double z = theta[d];
            for (std::size_t k = 0; k < d; ++k) z += theta[k] * features[i][k];
            double p = sigmoid(z);
            double r = p - accuracies[i];
            double w = std::max(p * (1.0 - p), 1e-12);
            for (std::size_t a = 0; a <= d; ++a) {
                double xa = a < d ? features[i][a] : 1.0;
                grad[a] += r * xa;
                for (std::size_t b = 0; b <= d; ++b) {
                    double xb = b < d ? features[i][b] : 1.0;
                    hess[a][b] += w * xa * xb;
                }
            }
        }
        double inv_n = 1.0 / static_cast<double>(n);
        for (auto& g : grad) g *= inv_n;
        for (auto& row : hess) {
            for (auto& h : row) h *= inv_n;
        }
        for (std::size_t a = 0; a <= d; ++a) hess[a][a] += 1e-9;

        std::vector<double> step = solve_linear(hess, grad);
        bool improved = false;
        for (double scale = 1.0; scale >= 1e-12; scale *= 0.5) {
            std::vector<double> cand(d + 1);
            for (std::size_t a = 0; a <= d; ++a) cand[a] = clip_cap(theta[a] - scale * step[a]);
            double cand_loss = logistic_loss_params(cand, features, accuracies);
            if (cand_loss < loss) {
                theta = std::move(cand);
                improved = cand_loss < loss - 1e-14;
                loss = cand_loss;
                break;
            }
        }
        if (!improved) break;
    }

    AccuracyModel model;
    model.kind = AccuracyModel::Kind::Logistic;
    model.feature_names = std::move(feature_names);
    model.weights.assign(theta.begin(), theta.begin() + static_cast<long>(d));
    model.bias = theta[d];
    return model;
}

double logistic_loss(const AccuracyModel& model, const std::vector<std::vector<double>>& features,
                     const std::vector<double>& accuracies) {
    std::vector<double> theta = model.weights;
    theta.push_back(model.bias);
    return logistic_loss_params(theta, features, accuracies);
}

AccuracyModel fit_isotonic(const std::vector<double>& feature_values,
                           const std::vector<double>& accuracies, std::string feature_name) {
    if (feature_values.empty()) throw ValidationError("fit_isotonic: empty input");
    if (feature_values.size() != accuracies.size()) {
        throw ValidationError("fit_isotonic: sizes mismatch");
    }

    std::vector<std::size_t> order(feature_values.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return feature_values[a] < feature_values[b];
    });

    // merge equal feature values by (weighted) averaging before PAV
    std::vector<double> xs, ys, ws;
    for (std::size_t idx : order) {
        if (!xs.empty() && feature_values[idx] == xs.back()) {
            double w = ws.back();
            ys.back() = (ys.back() * w + accuracies[idx]) / (w + 1.0);
            ws.back() = w + 1.0;
        } else {
            xs.push_back(feature_values[idx]);
            ys.push_back(accuracies[idx]);
            ws.push_back(1.0);
        }
    }

    // pool adjacent violators over the merged points
    struct Block {
        double value, weight;
        std::size_t count;  // merged points covered
    };
    std::vector<Block> blocks;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        blocks.push_back({ys[i], ws[i], 1});
        while (blocks.size() >= 2 && blocks[blocks.size() - 2].value > blocks.back().value) {
            Block last = blocks.back();
            blocks.pop_back();
            Block& prev = blocks.back();
            double w = prev.weight + last.weight;
            prev.value = (prev.value * prev.weight + last.value * last.weight) / w;
            prev.weight = w;
            prev.count += last.count;
        }
    }

    AccuracyModel model;
    model.kind = AccuracyModel::Kind::Isotonic;
    model.feature = std::move(feature_name);
    model.breakpoints = std::move(xs);
    model.values.reserve(model.breakpoints.size());
    for (const Block& b : blocks) {
        for (std::size_t i = 0; i < b.count; ++i) model.values.push_back(b.value);
    }
    return model;
}

double predict_accuracy(const AccuracyModel& model, const FeatureMap& features) {
    auto get = [&](const std::string& name) {
        auto it = features.find(name);
        if (it == features.end()) {
            throw ValidationError("predict_accuracy: missing feature '" + name + "'");
        }
        return it->second;
    };
    switch (model.kind) {
        case AccuracyModel::Kind::RawFeature:
            return get(model.feature);
        case AccuracyModel::Kind::Logistic: {
            double z = model.bias;
            for (std::size_t k = 0; k < model.weights.size(); ++k) {
                z += model.weights[k] * get(model.feature_names[k]);
            }
            return sigmoid(z);
        }
        case AccuracyModel::Kind::Isotonic: {
            double q = get(model.feature);
            // value of the largest breakpoint <= q, clamped at both ends
            auto it = std::upper_bound(model.breakpoints.begin(), model.breakpoints.end(), q);
            if (it == model.breakpoints.begin()) return model.values.front();
            std::size_t idx = static_cast<std::size_t>(it - model.breakpoints.begin()) - 1;
            return model.values[idx];
        }
    }
    return 0.0;
}

double predicted_accuracy(const AbstainingModel& model, const PredictionLog& log,
                          std::string_view example_id) {
    return predict_accuracy(model.accuracy_model,
                            example_features(log, example_id, model.model_id));
}

std::optional<int> evaluate_abstaining(const AbstainingModel& model, const PredictionLog& log,
                                       std::string_view example_id) {
    const ModelOutput& out = log.output(example_id, model.model_id);
    if (model.threshold == kInf) return std::nullopt;  // always abstain
    if (model.threshold == -kInf) return out.prediction;
    double qhat = predicted_accuracy(model, log, example_id);
    if (qhat >= model.threshold) return out.prediction;
    return std::nullopt;
}

std::optional<int> evaluate_composite(const CompositeAbstainingModel& model,
                                      const PredictionLog& log, std::string_view example_id) {
    for (auto it = model.chain.rbegin(); it != model.chain.rend(); ++it) {
        if (auto pred = evaluate_abstaining(*it, log, example_id)) return pred;
    }
    return std::nullopt;
}

std::vector<TradeoffPoint> abstention_tradeoff_curve_from_values(
    const std::vector<double>& qhat, const std::vector<double>& metric_values) {
    const std::size_t n = qhat.size();
    std::vector<double> thresholds = qhat;
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    thresholds.insert(thresholds.begin(), -kInf);

    std::vector<TradeoffPoint> curve;
    for (double t : thresholds) {
        std::size_t answered = 0;
        double metric_sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (qhat[i] >= t) {
                ++answered;
                metric_sum += metric_values[i];
            }
        }
        if (answered == 0) continue;
        TradeoffPoint p;
        p.abstention_rate = 1.0 - static_cast<double>(answered) / static_cast<double>(n);
        p.accuracy = metric_sum / static_cast<double>(answered);
        p.threshold = t;
        curve.push_back(p);
    }
    std::sort(curve.begin(), curve.end(), [](const TradeoffPoint& a, const TradeoffPoint& b) {
        if (a.abstention_rate != b.abstention_rate) return a.abstention_rate < b.abstention_rate;
        return a.threshold < b.threshold;
    });
    return curve;
}

std::vector<TradeoffPoint> abstention_tradeoff_curve(std::string_view model_id,
                                                     const AccuracyModel& accuracy_model,
                                                     const PredictionLog& log,
                                                     AccuracyMetricKind metric) {
    std::vector<double> qhat, metric_values;
    qhat.reserve(log.num_examples());
    metric_values.reserve(log.num_examples());
    for (const LabeledExample& ex : log.examples()) {
        qhat.push_back(predict_accuracy(accuracy_model,
                                        example_features(log, ex.example_id, model_id)));
        const ModelOutput& out = log.output(ex.example_id, model_id);
        metric_values.push_back(metric_value(metric, out.prediction, ex.label));
    }
    return abstention_tradeoff_curve_from_values(qhat, metric_values);
}

}  // namespace cascade
