#include "tasklens/layout.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

namespace tasklens {

using nlohmann::json;

namespace {

std::vector<std::vector<int>> successor_lists(const LayoutGraph& lg) {
    std::vector<std::vector<int>> succ(static_cast<std::size_t>(lg.node_count));
    for (const auto& e : lg.edges) succ[static_cast<std::size_t>(e.from)].push_back(e.to);
    for (auto& s : succ) {
        std::sort(s.begin(), s.end());
        s.erase(std::unique(s.begin(), s.end()), s.end());
    }
    return succ;
}

// Drops edges that close a cycle (DFS back edges, visiting nodes by id).
void break_cycles(LayoutGraph& lg) {
    const auto n = static_cast<std::size_t>(lg.node_count);
    auto succ = successor_lists(lg);
    enum : char { white, grey, black };
    std::vector<char> color(n, white);
    std::set<std::pair<int, int>> back;
    std::vector<std::pair<int, std::size_t>> stack;
    for (std::size_t root = 0; root < n; ++root) {
        if (color[root] != white) continue;
        stack.emplace_back(static_cast<int>(root), 0);
        color[root] = grey;
        while (!stack.empty()) {
            auto& [v, i] = stack.back();
            const auto& s = succ[static_cast<std::size_t>(v)];
            if (i < s.size()) {
                int w = s[i++];
                if (color[static_cast<std::size_t>(w)] == grey) {
                    back.emplace(v, w);
                } else if (color[static_cast<std::size_t>(w)] == white) {
                    color[static_cast<std::size_t>(w)] = grey;
                    stack.emplace_back(w, 0);
                }
            } else {
                color[static_cast<std::size_t>(v)] = black;
                stack.pop_back();
            }
        }
    }
    if (back.empty()) return;
    std::erase_if(lg.edges, [&](const LayoutEdge& e) { return e.from == e.to || back.contains({e.from, e.to}); });
}

std::vector<std::vector<int>> layer_members(const std::vector<int>& layers) {
    int max_layer = -1;
    for (int l : layers) max_layer = std::max(max_layer, l);
    std::vector<std::vector<int>> out(static_cast<std::size_t>(max_layer + 1));
    for (std::size_t v = 0; v < layers.size(); ++v) out[static_cast<std::size_t>(layers[v])].push_back(static_cast<int>(v));
    return out;
}

double median_of(std::vector<int>& positions) {
    std::sort(positions.begin(), positions.end());
    const std::size_t k = positions.size();
    if (k % 2 == 1) return positions[k / 2];
    return (positions[k / 2 - 1] + positions[k / 2]) / 2.0;
}

}  // namespace

std::vector<int> assign_layers(const LayoutGraph& lg) {
    const auto n = static_cast<std::size_t>(lg.node_count);
    auto succ = successor_lists(lg);
    std::vector<int> indeg(n, 0);
    for (const auto& s : succ) {
        for (int w : s) ++indeg[static_cast<std::size_t>(w)];
    }
    std::set<int> ready;
    for (std::size_t v = 0; v < n; ++v) {
        if (indeg[v] == 0) ready.insert(static_cast<int>(v));
    }
    std::vector<int> layer(n, 0);
    while (!ready.empty()) {
        int v = *ready.begin();
        ready.erase(ready.begin());
        for (int w : succ[static_cast<std::size_t>(v)]) {
            auto wi = static_cast<std::size_t>(w);
            layer[wi] = std::max(layer[wi], layer[static_cast<std::size_t>(v)] + 1);
            if (--indeg[wi] == 0) ready.insert(w);
        }
    }
    return layer;
}

std::size_t count_crossings(const LayoutGraph& lg, const std::vector<int>& layers, const std::vector<int>& order) {
    std::map<std::pair<int, int>, std::vector<std::pair<int, int>>> groups;
    for (const auto& e : lg.edges) {
        auto u = static_cast<std::size_t>(e.from), v = static_cast<std::size_t>(e.to);
        groups[{layers[u], layers[v]}].emplace_back(order[u], order[v]);
    }
    std::size_t total = 0;
    std::vector<std::size_t> fenwick;
    for (auto& [key, edges] : groups) {
        std::sort(edges.begin(), edges.end());
        int max_v = 0;
        for (const auto& e : edges) max_v = std::max(max_v, e.second);
        fenwick.assign(static_cast<std::size_t>(max_v) + 2, 0);
        std::size_t inserted = 0;
        auto prefix = [&](int i) {  // count of inserted with ov <= i
            std::size_t s = 0;
            for (auto k = static_cast<std::size_t>(i) + 1; k > 0; k -= k & (~k + 1)) s += fenwick[k];
            return s;
        };
        std::size_t i = 0;
        while (i < edges.size()) {
            std::size_t j = i;
            while (j < edges.size() && edges[j].first == edges[i].first) ++j;
            for (std::size_t k = i; k < j; ++k) total += inserted - prefix(edges[k].second);
            for (std::size_t k = i; k < j; ++k) {
                for (auto idx = static_cast<std::size_t>(edges[k].second) + 1; idx < fenwick.size(); idx += idx & (~idx + 1)) {
                    ++fenwick[idx];
                }
                ++inserted;
            }
            i = j;
        }
    }
    return total;
}

std::vector<NodePosition> order_layers(const LayoutGraph& lg, const std::vector<int>& layers, OrderingTrace* trace) {
    const auto n = static_cast<std::size_t>(lg.node_count);
    auto members = layer_members(layers);
    std::vector<std::vector<int>> preds(n), succs(n);
    for (const auto& e : lg.edges) {
        succs[static_cast<std::size_t>(e.from)].push_back(e.to);
        preds[static_cast<std::size_t>(e.to)].push_back(e.from);
    }

    std::vector<int> order(n, 0);
    for (const auto& layer : members) {
        for (std::size_t i = 0; i < layer.size(); ++i) order[static_cast<std::size_t>(layer[i])] = static_cast<int>(i);
    }
    std::size_t best = count_crossings(lg, layers, order);
    if (trace) {
        trace->orders = {order};
        trace->crossings = {best};
    }

    for (int sweep = 0; sweep < kMedianSweeps; ++sweep) {
        const bool down = sweep % 2 == 0;
        auto candidate = order;
        auto candidate_members = members;
        const int count = static_cast<int>(members.size());
        for (int step = 1; step < count; ++step) {
            const int l = down ? step : count - 1 - step;
            auto& layer = candidate_members[static_cast<std::size_t>(l)];
            std::vector<std::pair<double, int>> keyed;
            keyed.reserve(layer.size());
            for (int v : layer) {
                const auto& adj = down ? preds[static_cast<std::size_t>(v)] : succs[static_cast<std::size_t>(v)];
                std::vector<int> pos;
                pos.reserve(adj.size());
                for (int w : adj) pos.push_back(candidate[static_cast<std::size_t>(w)]);
                double key = pos.empty() ? candidate[static_cast<std::size_t>(v)] : median_of(pos);
                keyed.emplace_back(key, v);
            }
            // `layer` is already in current order, so a stable sort keeps ties in place.
            std::stable_sort(keyed.begin(), keyed.end(),
                             [](const auto& a, const auto& b) { return a.first < b.first; });
            for (std::size_t i = 0; i < keyed.size(); ++i) {
                layer[i] = keyed[i].second;
                candidate[static_cast<std::size_t>(keyed[i].second)] = static_cast<int>(i);
            }
        }
        const std::size_t crossings = count_crossings(lg, layers, candidate);
        if (crossings <= best) {
            best = crossings;
            order = std::move(candidate);
            members = std::move(candidate_members);
        }
        if (trace) {
            trace->orders.push_back(order);
            trace->crossings.push_back(best);
        }
    }

    std::vector<NodePosition> out(n);
    for (std::size_t v = 0; v < n; ++v) {
        out[v] = NodePosition{static_cast<int>(v), layers[v], order[v], static_cast<double>(order[v]),
                              static_cast<double>(layers[v])};
    }
    return out;
}

LayoutGraph task_layout_graph(const ModelGraph& g) {
    LayoutGraph lg;
    lg.node_count = static_cast<int>(g.tasks.size());
    for (std::size_t tp = 0; tp < g.tensors.size(); ++tp) {
        auto p = g.index.producer[tp];
        if (p == kNoProducer) continue;
        for (auto c : g.index.consumers[tp]) {
            lg.edges.push_back(LayoutEdge{static_cast<int>(p), static_cast<int>(c), g.tensors[tp].id});
        }
    }
    std::sort(lg.edges.begin(), lg.edges.end(), [](const LayoutEdge& a, const LayoutEdge& b) {
        return std::tie(a.from, a.to, a.tensor) < std::tie(b.from, b.to, b.tensor);
    });
    return lg;
}

GraphLayout layout_graph(const ModelGraph& g, const std::set<std::string>& collapsed) {
    GraphLayout out;
    std::vector<int> node_of(g.tasks.size(), -1);
    std::map<std::string, int> super_index;
    for (std::size_t t = 0; t < g.tasks.size(); ++t) {
        const auto& group = g.tasks[t].group;
        const std::string* hit = nullptr;
        for (const auto& path : collapsed) {
            if (group == path || group.starts_with(path + "/")) {
                if (!hit || path.size() < hit->size()) hit = &path;
            }
        }
        if (hit) {
            auto [it, fresh] = super_index.emplace(*hit, static_cast<int>(out.node_task.size()));
            if (fresh) {
                out.node_task.push_back(-1);
                out.node_group.push_back(*hit);
                out.node_members.emplace_back();
            }
            node_of[t] = it->second;
            out.node_members[static_cast<std::size_t>(it->second)].push_back(g.tasks[t].id);
        } else {
            node_of[t] = static_cast<int>(out.node_task.size());
            out.node_task.push_back(g.tasks[t].id);
            out.node_group.emplace_back();
            out.node_members.push_back({g.tasks[t].id});
        }
    }

    LayoutGraph lg;
    lg.node_count = static_cast<int>(out.node_task.size());
    std::set<std::tuple<int, int, std::string>> seen;
    for (const auto& e : task_layout_graph(g).edges) {
        int a = node_of[static_cast<std::size_t>(e.from)], b = node_of[static_cast<std::size_t>(e.to)];
        if (a == b) continue;
        if (seen.emplace(a, b, e.tensor).second) lg.edges.push_back(LayoutEdge{a, b, e.tensor});
    }
    break_cycles(lg);
    const auto layers = assign_layers(lg);
    out.nodes = order_layers(lg, layers);
    out.edges = lg.edges;
    return out;
}

json layout_to_json(const GraphLayout& layout) {
    // Supernodes are keyed -1, -2, ... so every node has an integer "task".
    std::vector<int> key(layout.nodes.size());
    int next_super = -1;
    for (std::size_t v = 0; v < layout.nodes.size(); ++v) {
        key[v] = layout.node_task[v] >= 0 ? layout.node_task[v] : next_super--;
    }
    json nodes = json::array();
    for (std::size_t v = 0; v < layout.nodes.size(); ++v) {
        const auto& n = layout.nodes[v];
        json e{{"task", key[v]}, {"layer", n.layer}, {"order", n.order}, {"x", n.x}, {"y", n.y}};
        if (layout.node_task[v] < 0) {
            e["group"] = layout.node_group[v];
            e["members"] = layout.node_members[v];
        }
        nodes.push_back(std::move(e));
    }
    json edges = json::array();
    for (const auto& e : layout.edges) {
        edges.push_back(json{{"from", key[static_cast<std::size_t>(e.from)]},
                             {"to", key[static_cast<std::size_t>(e.to)]},
                             {"tensor", e.tensor}});
    }
    return json{{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

}  // namespace tasklens
