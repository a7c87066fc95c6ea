#include "cascade/cost.hpp"

#include <algorithm>
#include <limits>
#include <queue>

namespace cascade {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

CostGraph CostGraph::from_manifest(const ModelManifest& manifest) {
    CostGraph g;
    for (const ManifestEntry& e : manifest.entries) g.add_vertex(e.id);
    // implied source edges; explicit ones are validated equal at load time
    std::vector<bool> has_source_edge(manifest.entries.size(), false);
    for (const ReuseEdge& e : manifest.reuse_edges) {
        std::size_t to = g.vertex(e.to);
        if (!e.from) has_source_edge[to - 1] = true;
    }
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        if (!has_source_edge[i]) g.add_edge(kSource, i + 1, manifest.entries[i].cost);
    }
    for (const ReuseEdge& e : manifest.reuse_edges) {
        std::size_t from = e.from ? g.vertex(*e.from) : kSource;
        g.add_edge(from, g.vertex(e.to), e.weight);
    }
    g.check_reachable();
    return g;
}

void CostGraph::add_vertex(const std::string& model_id) {
    if (vertex_index_.count(model_id)) {
        throw ValidationError("cost graph: duplicate vertex '" + model_id + "'");
    }
    vertex_index_[model_id] = adjacency_.size();
    adjacency_.emplace_back();
}

void CostGraph::add_edge(std::size_t from, std::size_t to, double weight) {
    if (weight < 0) throw ValidationError("cost graph: negative edge weight");
    adjacency_[from].push_back({to, weight});
}

bool CostGraph::has_vertex(std::string_view model_id) const {
    return vertex_index_.find(model_id) != vertex_index_.end();
}

bool CostGraph::has_edge(std::string_view from_id, std::string_view to_id) const {
    std::size_t from = vertex(from_id), to = vertex(to_id);
    return std::any_of(adjacency_[from].begin(), adjacency_[from].end(),
                       [&](const Edge& e) { return e.to == to; });
}

std::size_t CostGraph::vertex(std::string_view model_id) const {
    auto it = vertex_index_.find(model_id);
    if (it == vertex_index_.end()) {
        throw ValidationError("cost graph: unknown model '" + std::string(model_id) + "'");
    }
    return it->second;
}

std::vector<double> CostGraph::multi_source_shortest(
    const std::vector<std::size_t>& sources) const {
    std::vector<double> dist(adjacency_.size(), kInf);
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    for (std::size_t s : sources) {
        dist[s] = 0.0;
        heap.push({0.0, s});
    }
    while (!heap.empty()) {
        auto [d, u] = heap.top();
        heap.pop();
        if (d > dist[u]) continue;
        for (const Edge& e : adjacency_[u]) {
            double nd = d + e.weight;
            if (nd < dist[e.to]) {
                dist[e.to] = nd;
                heap.push({nd, e.to});
            }
        }
    }
    return dist;
}

void CostGraph::check_reachable() const {
    std::vector<double> dist = multi_source_shortest({kSource});
    for (const auto& [id, v] : vertex_index_) {
        if (dist[v] == kInf) {
            throw ValidationError("cost graph: model '" + id + "' unreachable from source");
        }
    }
}

CostFunction CostFunction::linear(std::map<std::string, double> base_costs) {
    CostFunction cf;
    cf.kind_ = Kind::Linear;
    for (const auto& [id, c] : base_costs) {
        if (c < 0) throw ValidationError("linear cost: negative cost for '" + id + "'");
        cf.base_costs_.emplace(id, c);
    }
    return cf;
}

CostFunction CostFunction::linear_from_manifest(const ModelManifest& manifest) {
    std::map<std::string, double> base;
    for (const ManifestEntry& e : manifest.entries) base[e.id] = e.cost;
    return linear(std::move(base));
}

CostFunction CostFunction::graph(CostGraph g) {
    g.check_reachable();
    CostFunction cf;
    cf.kind_ = Kind::Graph;
    cf.graph_ = std::move(g);
    return cf;
}

CostFunction CostFunction::graph_from_manifest(const ModelManifest& manifest) {
    return graph(CostGraph::from_manifest(manifest));
}

bool CostFunction::has_model(std::string_view model_id) const {
    if (kind_ == Kind::Linear) return base_costs_.find(model_id) != base_costs_.end();
    return graph_.has_vertex(model_id);
}

std::vector<double> CostFunction::distances_for(const std::vector<std::string>& sources) const {
    {
        std::lock_guard<std::mutex> lock(memo_->mutex);
        auto it = memo_->table.find(sources);
        if (it != memo_->table.end()) return it->second;
    }
    std::vector<std::size_t> source_vertices{CostGraph::kSource};
    for (const std::string& id : sources) source_vertices.push_back(graph_.vertex(id));
    std::vector<double> dist = graph_.multi_source_shortest(source_vertices);
    std::lock_guard<std::mutex> lock(memo_->mutex);
    return memo_->table.emplace(sources, std::move(dist)).first->second;
}

double CostFunction::cost(std::string_view target, const std::vector<std::string>& already) const {
    if (kind_ == Kind::Linear) {
        auto it = base_costs_.find(target);
        if (it == base_costs_.end()) {
            throw ValidationError("linear cost: unknown model '" + std::string(target) + "'");
        }
        for (const std::string& id : already) {
            if (base_costs_.find(id) == base_costs_.end()) {
                throw ValidationError("linear cost: unknown model '" + id + "'");
            }
        }
        return it->second;
    }
    std::size_t target_vertex = graph_.vertex(target);
    std::vector<std::string> sources = already;
    std::sort(sources.begin(), sources.end());
    sources.erase(std::unique(sources.begin(), sources.end()), sources.end());
    std::vector<double> dist = distances_for(sources);
    double d = dist[target_vertex];
    if (d == kInf) {
        throw ValidationError("graph cost: model '" + std::string(target) + "' unreachable");
    }
    return d;
}

void CostFunction::register_model(const std::string& model_id, double base_cost) {
    if (kind_ == Kind::Linear) {
        if (base_costs_.count(model_id)) {
            throw ValidationError("cost: model '" + model_id + "' already registered");
        }
        base_costs_[model_id] = base_cost;
        return;
    }
    memo_ = std::make_shared<Memo>();  // this copy's distances change
    graph_.add_vertex(model_id);
    graph_.add_edge(CostGraph::kSource, graph_.vertex(model_id), base_cost);
}

void CostFunction::add_reuse_edge(std::string_view from_id, std::string_view to_id,
                                  double weight) {
    if (kind_ != Kind::Graph) throw ValidationError("add_reuse_edge: cost function has no graph");
    memo_ = std::make_shared<Memo>();
    graph_.add_edge(graph_.vertex(from_id), graph_.vertex(to_id), weight);
}

const CostGraph& CostFunction::graph() const {
    if (kind_ != Kind::Graph) throw ValidationError("cost function has no graph");
    return graph_;
}

std::vector<CompositeAbstainingModel> make_prefix_composites(
    const std::vector<std::string>& chain, CostFunction& cf, const PredictionLog& log,
    const std::map<std::string, AbstainingModel>& abstaining) {
    if (chain.empty()) throw ValidationError("make_prefix_composites: empty chain");
    if (cf.kind() != CostFunction::Kind::Graph) {
        throw ValidationError("make_prefix_composites: cost function has no graph");
    }
    for (std::size_t i = 0; i < chain.size(); ++i) {
        if (!log.has_model(chain[i])) {
            throw ValidationError("make_prefix_composites: model '" + chain[i] +
                                  "' not in prediction log");
        }
        if (!abstaining.count(chain[i])) {
            throw ValidationError("make_prefix_composites: no abstaining wrapper for '" +
                                  chain[i] + "'");
        }
        if (i > 0 && !cf.graph().has_edge(chain[i - 1], chain[i])) {
            throw ValidationError("make_prefix_composites: chain is not a path in the graph ('" +
                                  chain[i - 1] + "' -> '" + chain[i] + "')");
        }
    }

    std::vector<CompositeAbstainingModel> composites;
    composites.reserve(chain.size());
    for (std::size_t k = 1; k <= chain.size(); ++k) {
        CompositeAbstainingModel comp;
        comp.id = chain[k - 1] + "*";
        for (std::size_t i = 0; i < k; ++i) comp.chain.push_back(abstaining.at(chain[i]));
        double scratch = cf.cost(chain[k - 1], {});
        cf.register_model(comp.id, scratch);
        // running the composite materializes every chain member
        for (std::size_t i = 0; i < k; ++i) cf.add_reuse_edge(comp.id, chain[i], 0.0);
        composites.push_back(std::move(comp));
    }
    return composites;
}

}  // namespace cascade
