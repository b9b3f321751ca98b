#include "cangraph/graphs.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <unordered_map>

namespace cangraph {

TimingCorrelationGraph build_tcg(const Window& window) {
    if (window.records.empty()) throw DataError("build_tcg: empty window");

    TimingCorrelationGraph graph;
    std::unordered_map<std::uint16_t, int> index_of;
    index_of.reserve(window.records.size());

    auto node_for = [&](std::uint16_t id) {
        auto [it, inserted] = index_of.try_emplace(id, graph.node_count());
        if (inserted) graph.node_ids.push_back(id);
        return it->second;
    };

    int previous = node_for(window.records.front().can_id);
    for (std::size_t n = 1; n < window.records.size(); ++n) {
        int current = node_for(window.records[n].can_id);
        ++graph.edge_weights[{current, previous}];  // edge points current -> previous
        previous = current;
    }
    return graph;
}

GraphStats tcg_stats(const TimingCorrelationGraph& graph) {
    GraphStats stats;
    stats.node_count = graph.node_count();
    stats.edge_count = static_cast<int>(graph.edge_weights.size());

    std::vector<int> degree(graph.node_ids.size(), 0);
    for (const auto& [edge, weight] : graph.edge_weights) {
        ++degree[edge.first];   // out
        ++degree[edge.second];  // in; a self-loop lands here too, totalling 2
    }
    stats.max_degree = degree.empty() ? 0 : *std::max_element(degree.begin(), degree.end());
    return stats;
}

FeatureMatrix build_feature_matrix(const Window& window, const GraphStats& stats) {
    const auto n = static_cast<Eigen::Index>(window.records.size());
    FeatureMatrix out;
    out.values.resize(n, kFeatureDim);
    out.labels.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const MessageRecord& rec = window.records[static_cast<std::size_t>(i)];
        out.values(i, 0) = rec.can_id;
        for (int b = 0; b < kPayloadSlots; ++b) out.values(i, 1 + b) = rec.data[b];
        out.values(i, 9) = stats.node_count;
        out.values(i, 10) = stats.edge_count;
        out.values(i, 11) = stats.max_degree;
        out.labels(i) = rec.label;
    }
    return out;
}

CouplingAdjacency build_crg(const Window& window) {
    if (window.records.empty()) throw DataError("build_crg: empty window");

    const auto n = static_cast<std::int32_t>(window.records.size());
    CouplingAdjacency adj;
    adj.size = n;

    for (std::int32_t i = 0; i + 1 < n; ++i) adj.edges.emplace_back(i, i + 1);

    std::unordered_map<std::uint16_t, std::vector<std::int32_t>> same_id;
    for (std::int32_t i = 0; i < n; ++i)
        same_id[window.records[static_cast<std::size_t>(i)].can_id].push_back(i);
    for (const auto& [id, members] : same_id) {
        for (std::size_t a = 0; a < members.size(); ++a)
            for (std::size_t b = a + 1; b < members.size(); ++b)
                adj.edges.emplace_back(members[a], members[b]);
    }

    std::sort(adj.edges.begin(), adj.edges.end());
    adj.edges.erase(std::unique(adj.edges.begin(), adj.edges.end()), adj.edges.end());
    return adj;
}

NormalizedAdjacency normalize_adjacency(const CouplingAdjacency& adjacency) {
    const int n = adjacency.size;
    NormalizedAdjacency out;
    out.degrees = Vector::Ones(n);  // self-loop from A + I
    for (const auto& [i, j] : adjacency.edges) {
        out.degrees(i) += 1.0;
        out.degrees(j) += 1.0;
    }

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(adjacency.edges.size() * 2 + static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) triplets.emplace_back(i, i, 1.0 / out.degrees(i));
    for (const auto& [i, j] : adjacency.edges) {
        const double value = 1.0 / std::sqrt(out.degrees(i) * out.degrees(j));
        triplets.emplace_back(i, j, value);
        triplets.emplace_back(j, i, value);
    }
    out.matrix.resize(n, n);
    out.matrix.setFromTriplets(triplets.begin(), triplets.end());
    out.matrix.makeCompressed();
    return out;
}

WindowGraph build_window_graph(const Window& window) {
    WindowGraph wg;
    const TimingCorrelationGraph tcg = build_tcg(window);
    wg.features = build_feature_matrix(window, tcg_stats(tcg));
    wg.adjacency = normalize_adjacency(build_crg(window));
    return wg;
}

namespace {

template <typename GetItem>
GraphBatch batch_impl(std::size_t count, GetItem&& at) {
    if (count == 0) throw DataError("batch_block_diagonal: empty batch");

    const Eigen::Index n = at(0).features.values.rows();
    Eigen::Index nnz = 0;
    for (std::size_t b = 0; b < count; ++b) {
        const WindowGraph& wg = at(b);
        if (wg.features.values.rows() != n || wg.adjacency.matrix.rows() != n)
            throw DataError("batch_block_diagonal: windows differ in size");
        nnz += wg.adjacency.matrix.nonZeros();
    }

    GraphBatch batch;
    const Eigen::Index total = n * static_cast<Eigen::Index>(count);
    batch.features.resize(total, at(0).features.values.cols());
    batch.labels.resize(total);
    batch.adjacency.resize(total, total);

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(nnz));
    for (std::size_t b = 0; b < count; ++b) {
        const WindowGraph& wg = at(b);
        const Eigen::Index offset = n * static_cast<Eigen::Index>(b);
        batch.features.middleRows(offset, n) = wg.features.values;
        batch.labels.segment(offset, n) = wg.features.labels;
        for (int k = 0; k < wg.adjacency.matrix.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(wg.adjacency.matrix, k); it; ++it)
                triplets.emplace_back(offset + it.row(), offset + it.col(), it.value());
    }
    batch.adjacency.setFromTriplets(triplets.begin(), triplets.end());
    batch.adjacency.makeCompressed();
    return batch;
}

}  // namespace

GraphBatch batch_block_diagonal(std::span<const WindowGraph> items) {
    return batch_impl(items.size(), [&](std::size_t i) -> const WindowGraph& { return items[i]; });
}

GraphBatch batch_block_diagonal(std::span<const WindowGraph* const> items) {
    return batch_impl(items.size(), [&](std::size_t i) -> const WindowGraph& { return *items[i]; });
}

void write_graph_dump(std::ostream& out, const Window& window,
                      const TimingCorrelationGraph& tcg, const GraphStats& stats,
                      const CouplingAdjacency& crg) {
    out << "window " << window.index << " label " << window.window_label << '\n';
    out << "nodes " << tcg.node_count() << '\n';
    for (int i = 0; i < tcg.node_count(); ++i)
        out << "  " << tcg.node_ids[static_cast<std::size_t>(i)] << " -> " << i << '\n';
    out << "tcg_edges " << tcg.edge_weights.size() << '\n';
    for (const auto& [edge, weight] : tcg.edge_weights)
        out << "  " << edge.first << " -> " << edge.second << " w " << weight << '\n';
    out << "stats nodes " << stats.node_count << " edges " << stats.edge_count
        << " max_degree " << stats.max_degree << '\n';
    out << "crg_edges " << crg.edges.size() << '\n';
    for (const auto& [i, j] : crg.edges) out << "  " << i << " - " << j << '\n';
}

}  // namespace cangraph
