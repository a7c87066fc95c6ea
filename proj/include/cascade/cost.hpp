#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "cascade/abstain.hpp"
#include "cascade/data.hpp"

namespace cascade {

// Weighted digraph with a source vertex (index 0) plus one vertex per model.
// Every model vertex must be reachable from the source, so from-scratch
// costs are finite.
class CostGraph {
public:
    static constexpr std::size_t kSource = 0;

    static CostGraph from_manifest(const ModelManifest& manifest);

    void add_vertex(const std::string& model_id);
    void add_edge(std::size_t from, std::size_t to, double weight);

    bool has_vertex(std::string_view model_id) const;
    bool has_edge(std::string_view from_id, std::string_view to_id) const;
    std::size_t vertex(std::string_view model_id) const;
    std::size_t num_vertices() const { return adjacency_.size(); }

    // Shortest distance from the cheapest of `sources` to every vertex.
    std::vector<double> multi_source_shortest(const std::vector<std::size_t>& sources) const;

    void check_reachable() const;

private:
    struct Edge {
        std::size_t to;
        double weight;
    };
    std::vector<std::vector<Edge>> adjacency_{1};  // index 0 = source
    std::map<std::string, std::size_t, std::less<>> vertex_index_;
};

// c(m, S): LINEAR ignores S; GRAPH takes the cheapest shortest path from
// the source or any vertex of S. Immutable after setup; the shortest-path
// memo is guarded for concurrent readers.
class CostFunction {
public:
    enum class Kind { Linear, Graph };

    static CostFunction linear(std::map<std::string, double> base_costs);
    static CostFunction linear_from_manifest(const ModelManifest& manifest);
    static CostFunction graph(CostGraph g);
    static CostFunction graph_from_manifest(const ModelManifest& manifest);

    Kind kind() const { return kind_; }
    bool has_model(std::string_view model_id) const;

    double cost(std::string_view target, const std::vector<std::string>& already) const;
    double from_scratch_cost(std::string_view target) const { return cost(target, {}); }

    // Registers a synthetic model (used for prefix composites): LINEAR gains
    // a base-cost entry, GRAPH gains a vertex with a source edge.
    void register_model(const std::string& model_id, double base_cost);

    // GRAPH only: extra reuse edge between existing vertices.
    void add_reuse_edge(std::string_view from_id, std::string_view to_id, double weight);

    const CostGraph& graph() const;

private:
    Kind kind_ = Kind::Linear;
    std::map<std::string, double, std::less<>> base_costs_;
    CostGraph graph_;

    // shared across copies until one of them mutates the graph, at which
    // point the mutating copy gets a fresh table
    struct Memo {
        std::mutex mutex;
        std::map<std::vector<std::string>, std::vector<double>> table;
    };
    std::shared_ptr<Memo> memo_ = std::make_shared<Memo>();

    std::vector<double> distances_for(const std::vector<std::string>& sources) const;
};

// Builds the admissibility composites m*_k for a chain m_1..m_K: m*_k runs
// the first k chain members and answers with the highest-index one that
// answers. Each composite is registered in the cost function with
// from-scratch cost c(m_k, {}), plus zero-weight edges to the chain members
// it materializes. The chain must be a path in the cost graph.
std::vector<CompositeAbstainingModel> make_prefix_composites(
    const std::vector<std::string>& chain, CostFunction& cf, const PredictionLog& log,
    const std::map<std::string, AbstainingModel>& abstaining);

}  // namespace cascade
