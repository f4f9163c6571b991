#pragma once

#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "tasklens/model_ir.hpp"

namespace tasklens {

struct LayoutEdge {
    int from = 0;  // node index
    int to = 0;
    std::string tensor;
};

// A generic layered-drawing input: nodes are 0..n-1, edges must form a DAG
// after cycle breaking.
struct LayoutGraph {
    int node_count = 0;
    std::vector<LayoutEdge> edges;
};

struct NodePosition {
    int node = 0;
    int layer = 0;
    int order = 0;
    double x = 0;
    double y = 0;
};

// layer(v) = longest path from any source to v.
std::vector<int> assign_layers(const LayoutGraph& lg);

// Crossings between edge pairs that span the same layer pair.
std::size_t count_crossings(const LayoutGraph& lg, const std::vector<int>& layers,
                            const std::vector<int>& order);

struct OrderingTrace {
    std::vector<std::vector<int>> orders;  // initial, then after each sweep
    std::vector<std::size_t> crossings;
};

inline constexpr int kMedianSweeps = 4;

// Median-heuristic ordering: down, up, down, up. A sweep that would raise
// the crossing count is discarded.
std::vector<NodePosition> order_layers(const LayoutGraph& lg, const std::vector<int>& layers,
                                       OrderingTrace* trace = nullptr);

LayoutGraph task_layout_graph(const ModelGraph& g);

struct SuperNode {
    std::string group;
    std::vector<TaskId> members;
};

struct GraphLayout {
    std::vector<NodePosition> nodes;      // indexed by node
    std::vector<LayoutEdge> edges;
    std::vector<TaskId> node_task;        // -1 for supernodes
    std::vector<std::string> node_group;  // empty for plain tasks
    std::vector<std::vector<TaskId>> node_members;
};

// Lays out the task graph; tasks under any collapsed group path are merged
// into one supernode per path before layering.
GraphLayout layout_graph(const ModelGraph& g, const std::set<std::string>& collapsed = {});

nlohmann::json layout_to_json(const GraphLayout& layout);

}  // namespace tasklens
