#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "cangraph/types.hpp"

namespace cangraph {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Width of a node feature row: CAN ID, 8 payload bytes, and the three
/// window-level graph statistics.
constexpr int kFeatureDim = 12;

/// Directed weighted graph of ID transitions within one window. Nodes are
/// distinct CAN IDs in first-seen order; an edge src->dst with weight w means
/// the ID of src immediately followed the ID of dst in w consecutive pairs.
struct TimingCorrelationGraph {
    std::vector<std::uint16_t> node_ids;                  // node index -> CAN ID
    std::map<std::pair<int, int>, int> edge_weights;      // (src, dst) -> weight

    int node_count() const { return static_cast<int>(node_ids.size()); }
};

struct GraphStats {
    int node_count = 0;
    int edge_count = 0;   // distinct directed edges, self-loops counted once
    int max_degree = 0;   // in + out over distinct edges; a self-loop adds 2
};

/// Per-message node features (N x 12) plus the per-message class labels.
struct FeatureMatrix {
    Matrix values;
    IntVector labels;
};

/// Symmetric 0/1 adjacency of one window's coupling graph, kept as an edge
/// list with i < j and no self-edges.
struct CouplingAdjacency {
    int size = 0;
    std::vector<std::pair<std::int32_t, std::int32_t>> edges;
};

/// A_hat = D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.
struct NormalizedAdjacency {
    SparseMatrix matrix;
    Vector degrees;  // row sums of A + I
};

/// One window ready for the classifier.
struct WindowGraph {
    FeatureMatrix features;
    NormalizedAdjacency adjacency;
};

/// Stacked features, block-diagonal adjacency, and concatenated labels for a
/// batch of equally sized windows.
struct GraphBatch {
    Matrix features;
    SparseMatrix adjacency;
    IntVector labels;
};

TimingCorrelationGraph build_tcg(const Window& window);
GraphStats tcg_stats(const TimingCorrelationGraph& graph);
FeatureMatrix build_feature_matrix(const Window& window, const GraphStats& stats);
CouplingAdjacency build_crg(const Window& window);
NormalizedAdjacency normalize_adjacency(const CouplingAdjacency& adjacency);

/// Runs the full per-window construction: TCG -> stats -> features, and
/// CRG -> normalized adjacency.
WindowGraph build_window_graph(const Window& window);

GraphBatch batch_block_diagonal(std::span<const WindowGraph> items);
GraphBatch batch_block_diagonal(std::span<const WindowGraph* const> items);

/// Debug dump: node map, weighted edge list, stats triple, CRG edge list.
void write_graph_dump(std::ostream& out, const Window& window,
                      const TimingCorrelationGraph& tcg, const GraphStats& stats,
                      const CouplingAdjacency& crg);

}  // namespace cangraph
