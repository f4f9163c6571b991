#include "tasklens/model_ir.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <set>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "tasklens/error.hpp"

namespace tasklens {

using nlohmann::json;

void ModelGraph::reindex() {
    index = GraphIndex{};
    index.tensor_pos.reserve(tensors.size());
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        index.tensor_pos.emplace(tensors[i].id, i);
    }
    index.producer.assign(tensors.size(), kNoProducer);
    index.consumers.assign(tensors.size(), {});
    index.task_inputs.assign(tasks.size(), {});
    index.task_outputs.assign(tasks.size(), {});
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        for (const auto& id : tasks[t].inputs) {
            auto it = index.tensor_pos.find(id);
            if (it == index.tensor_pos.end()) continue;
            index.task_inputs[t].push_back(it->second);
            auto& cons = index.consumers[it->second];
            if (cons.empty() || cons.back() != t) cons.push_back(t);
        }
        for (const auto& id : tasks[t].outputs) {
            auto it = index.tensor_pos.find(id);
            if (it == index.tensor_pos.end()) continue;
            index.task_outputs[t].push_back(it->second);
            if (index.producer[it->second] == kNoProducer) index.producer[it->second] = t;
        }
    }
}

const Tensor* ModelGraph::find_tensor(const std::string& id) const {
    auto it = index.tensor_pos.find(id);
    return it == index.tensor_pos.end() ? nullptr : &tensors[it->second];
}

std::vector<std::size_t> ModelGraph::predecessors(std::size_t task) const {
    std::vector<std::size_t> out;
    for (auto tp : index.task_inputs[task]) {
        if (index.producer[tp] != kNoProducer) out.push_back(index.producer[tp]);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<std::size_t> ModelGraph::successors(std::size_t task) const {
    std::vector<std::size_t> out;
    for (auto tp : index.task_outputs[task]) {
        out.insert(out.end(), index.consumers[tp].begin(), index.consumers[tp].end());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::int64_t ModelGraph::input_elems(std::size_t task) const {
    std::int64_t n = 0;
    for (auto tp : index.task_inputs[task]) n += tensors[tp].elem_count;
    return n;
}

std::int64_t ModelGraph::output_elems(std::size_t task) const {
    std::int64_t n = 0;
    for (auto tp : index.task_outputs[task]) n += tensors[tp].elem_count;
    return n;
}

std::string_view to_string(ViolationKind k) {
    switch (k) {
        case ViolationKind::UnsupportedSchemaVersion: return "UnsupportedSchemaVersion";
        case ViolationKind::DuplicateTensor: return "DuplicateTensor";
        case ViolationKind::NonPositiveElemCount: return "NonPositiveElemCount";
        case ViolationKind::ShapeMismatch: return "ShapeMismatch";
        case ViolationKind::DuplicateTaskId: return "DuplicateTaskId";
        case ViolationKind::NonDenseTaskIds: return "NonDenseTaskIds";
        case ViolationKind::DanglingReference: return "DanglingReference";
        case ViolationKind::DuplicateProducer: return "DuplicateProducer";
        case ViolationKind::MissingOutputs: return "MissingOutputs";
        case ViolationKind::NegativeWork: return "NegativeWork";
        case ViolationKind::ConcatHasWork: return "ConcatHasWork";
        case ViolationKind::InvalidSparsity: return "InvalidSparsity";
        case ViolationKind::InvalidPaletteBits: return "InvalidPaletteBits";
        case ViolationKind::NonPositiveFpsTarget: return "NonPositiveFpsTarget";
        case ViolationKind::CycleDetected: return "CycleDetected";
    }
    return "?";
}

namespace {

// Tarjan over task positions; returns strongly connected components that
// contain a cycle.
std::vector<std::vector<std::size_t>> cyclic_components(const ModelGraph& g) {
    const std::size_t n = g.tasks.size();
    std::vector<std::vector<std::size_t>> succ(n);
    std::vector<bool> self_loop(n, false);
    for (std::size_t t = 0; t < n; ++t) {
        succ[t] = g.successors(t);
        self_loop[t] = std::binary_search(succ[t].begin(), succ[t].end(), t);
    }

    constexpr std::size_t kUnvisited = static_cast<std::size_t>(-1);
    std::vector<std::size_t> idx(n, kUnvisited), low(n, 0);
    std::vector<bool> on_stack(n, false);
    std::vector<std::size_t> stack;
    std::vector<std::vector<std::size_t>> out;
    std::size_t counter = 0;

    // Iterative DFS: frames of (node, next successor position).
    std::vector<std::pair<std::size_t, std::size_t>> frames;
    for (std::size_t root = 0; root < n; ++root) {
        if (idx[root] != kUnvisited) continue;
        frames.emplace_back(root, 0);
        idx[root] = low[root] = counter++;
        stack.push_back(root);
        on_stack[root] = true;
        while (!frames.empty()) {
            auto& [v, pos] = frames.back();
            if (pos < succ[v].size()) {
                std::size_t w = succ[v][pos++];
                if (idx[w] == kUnvisited) {
                    idx[w] = low[w] = counter++;
                    stack.push_back(w);
                    on_stack[w] = true;
                    frames.emplace_back(w, 0);
                } else if (on_stack[w]) {
                    low[v] = std::min(low[v], idx[w]);
                }
                continue;
            }
            std::size_t done = v;
            frames.pop_back();
            if (!frames.empty()) {
                auto parent = frames.back().first;
                low[parent] = std::min(low[parent], low[done]);
            }
            if (low[done] == idx[done]) {
                std::vector<std::size_t> comp;
                std::size_t w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = false;
                    comp.push_back(w);
                } while (w != done);
                if (comp.size() > 1 || self_loop[done]) {
                    std::sort(comp.begin(), comp.end());
                    out.push_back(std::move(comp));
                }
            }
        }
    }
    return out;
}

}  // namespace

std::vector<Violation> validate_graph(const ModelGraph& g) {
    std::vector<Violation> out;
    auto add = [&](ViolationKind kind, std::optional<TaskId> task, std::string tensor, std::string msg) {
        out.push_back(Violation{kind, task, std::move(tensor), {}, std::move(msg)});
    };

    if (g.schema_version != 1) {
        add(ViolationKind::UnsupportedSchemaVersion, std::nullopt, "",
            fmt::format("schema_version {} is not supported (expected 1)", g.schema_version));
    }
    if (g.fps_target && !(*g.fps_target > 0)) {
        add(ViolationKind::NonPositiveFpsTarget, std::nullopt, "", "fps_target must be positive");
    }

    std::set<std::string> seen_tensors;
    for (const auto& t : g.tensors) {
        if (!seen_tensors.insert(t.id).second) {
            add(ViolationKind::DuplicateTensor, std::nullopt, t.id, fmt::format("tensor \"{}\" declared twice", t.id));
        }
        if (t.elem_count <= 0) {
            add(ViolationKind::NonPositiveElemCount, std::nullopt, t.id,
                fmt::format("tensor \"{}\" has elem_count {}", t.id, t.elem_count));
        }
        if (t.shape) {
            std::int64_t prod = 1;
            bool positive = true;
            for (auto d : *t.shape) {
                positive = positive && d > 0;
                prod *= d;
            }
            if (!positive || prod != t.elem_count) {
                add(ViolationKind::ShapeMismatch, std::nullopt, t.id,
                    fmt::format("tensor \"{}\" shape product {} != elem_count {}", t.id, prod, t.elem_count));
            }
        }
    }

    std::map<TaskId, int> id_counts;
    for (const auto& task : g.tasks) ++id_counts[task.id];
    bool dense = true;
    for (const auto& [id, count] : id_counts) {
        if (count > 1) {
            add(ViolationKind::DuplicateTaskId, id, "", fmt::format("task id {} used {} times", id, count));
        }
    }
    for (std::size_t i = 0; i < g.tasks.size(); ++i) {
        if (!id_counts.contains(static_cast<TaskId>(i))) dense = false;
    }
    if (!dense) {
        add(ViolationKind::NonDenseTaskIds, std::nullopt, "",
            fmt::format("task ids must be exactly 0..{}", static_cast<long>(g.tasks.size()) - 1));
    }

    std::map<std::string, std::vector<TaskId>> producers;
    for (const auto& task : g.tasks) {
        if (task.outputs.empty()) {
            add(ViolationKind::MissingOutputs, task.id, "", fmt::format("task {} has no outputs", task.id));
        }
        for (const auto* list : {&task.inputs, &task.outputs}) {
            for (const auto& tid : *list) {
                if (!seen_tensors.contains(tid)) {
                    add(ViolationKind::DanglingReference, task.id, tid,
                        fmt::format("task {} references unknown tensor \"{}\"", task.id, tid));
                }
            }
        }
        for (const auto& tid : task.outputs) producers[tid].push_back(task.id);
        if (task.weight_count < 0 || task.work() < 0) {
            add(ViolationKind::NegativeWork, task.id, "", fmt::format("task {} has negative weight_count or macs", task.id));
        }
        if (task.kind == TaskKind::concat && (task.weight_count != 0 || task.work() != 0)) {
            add(ViolationKind::ConcatHasWork, task.id, "", fmt::format("concat task {} must have no weights or macs", task.id));
        }
        if (!(task.sparsity >= 0.0 && task.sparsity < 1.0)) {
            add(ViolationKind::InvalidSparsity, task.id, "", fmt::format("task {} sparsity {} outside [0,1)", task.id, task.sparsity));
        }
        if (task.palette_bits < 0 || task.palette_bits > 8) {
            add(ViolationKind::InvalidPaletteBits, task.id, "",
                fmt::format("task {} palette_bits {} outside 0..8", task.id, task.palette_bits));
        }
    }
    for (const auto& [tid, tasks] : producers) {
        if (tasks.size() > 1) {
            add(ViolationKind::DuplicateProducer, tasks[1], tid,
                fmt::format("tensor \"{}\" produced by tasks {}", tid, fmt::join(tasks, ", ")));
        }
    }

    ModelGraph indexed = g;
    indexed.reindex();
    for (const auto& comp : cyclic_components(indexed)) {
        Violation v{ViolationKind::CycleDetected, std::nullopt, "", {}, ""};
        for (auto pos : comp) v.cycle.push_back(indexed.tasks[pos].id);
        std::sort(v.cycle.begin(), v.cycle.end());
        v.task = v.cycle.front();
        v.message = fmt::format("cycle through tasks {}", fmt::join(v.cycle, ", "));
        out.push_back(std::move(v));
    }

    std::stable_sort(out.begin(), out.end(), [](const Violation& a, const Violation& b) {
        auto ka = a.task.value_or(-1);
        auto kb = b.task.value_or(-1);
        if (ka != kb) return ka < kb;
        return a.tensor < b.tensor;
    });
    return out;
}

ModelGraph derive_task_work(ModelGraph g, const WorkDerivation& rules) {
    g.reindex();
    for (std::size_t t = 0; t < g.tasks.size(); ++t) {
        auto& task = g.tasks[t];
        if (task.macs) continue;
        if (task.kind == TaskKind::concat) {
            task.macs = 0;
            continue;
        }
        auto need_shape = [&](std::size_t tensor_pos) -> const std::vector<std::int64_t>& {
            const auto& tensor = g.tensors[tensor_pos];
            if (!tensor.shape || tensor.shape->empty()) {
                throw Error(ErrorCode::Underivable,
                            fmt::format("task {} omits macs but tensor \"{}\" has no shape", task.id, tensor.id),
                            json{{"task", task.id}, {"tensor", tensor.id}});
            }
            return *tensor.shape;
        };
        for (auto tp : g.index.task_inputs[t]) need_shape(tp);
        for (auto tp : g.index.task_outputs[t]) need_shape(tp);
        if (g.index.task_outputs[t].empty()) {
            throw Error(ErrorCode::Underivable, fmt::format("task {} omits macs and has no outputs", task.id),
                        json{{"task", task.id}});
        }
        const std::int64_t out_elems = g.output_elems(t);
        switch (task.kind) {
            case TaskKind::conv2d: {
                const auto& shape = need_shape(g.index.task_outputs[t].front());
                const std::int64_t out_channels = shape.size() >= 2 ? shape[1] : shape[0];
                task.macs = out_elems * (task.weight_count / out_channels);
                break;
            }
            case TaskKind::matmul: {
                if (g.index.task_inputs[t].empty()) {
                    throw Error(ErrorCode::Underivable, fmt::format("matmul task {} has no inputs", task.id),
                                json{{"task", task.id}});
                }
                const auto& shape = need_shape(g.index.task_inputs[t].front());
                task.macs = out_elems * shape.back();
                break;
            }
            case TaskKind::pool:
                task.macs = out_elems * rules.pool_window;
                break;
            case TaskKind::elementwise:
            case TaskKind::softmax:
            case TaskKind::layernorm:
            case TaskKind::convert:
            case TaskKind::resize:
                task.macs = out_elems;
                break;
            case TaskKind::concat:
                task.macs = 0;
                break;
        }
    }
    return g;
}

std::optional<std::vector<std::size_t>> topological_order(const ModelGraph& g) {
    const std::size_t n = g.tasks.size();
    std::vector<std::vector<std::size_t>> succ(n);
    std::vector<std::size_t> indeg(n, 0);
    for (std::size_t t = 0; t < n; ++t) {
        succ[t] = g.successors(t);
        for (auto s : succ[t]) ++indeg[s];
    }
    std::set<std::pair<TaskId, std::size_t>> ready;
    for (std::size_t t = 0; t < n; ++t) {
        if (indeg[t] == 0) ready.emplace(g.tasks[t].id, t);
    }
    std::vector<std::size_t> order;
    order.reserve(n);
    while (!ready.empty()) {
        auto [id, t] = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(t);
        for (auto s : succ[t]) {
            if (--indeg[s] == 0) ready.emplace(g.tasks[s].id, s);
        }
    }
    if (order.size() != n) return std::nullopt;
    return order;
}

GroupNode group_tree(const ModelGraph& g) {
    GroupNode root;
    for (const auto& task : g.tasks) {
        GroupNode* node = &root;
        std::string_view rest = task.group;
        std::string path;
        while (!rest.empty()) {
            auto slash = rest.find('/');
            auto part = std::string(rest.substr(0, slash));
            rest = slash == std::string_view::npos ? std::string_view{} : rest.substr(slash + 1);
            if (part.empty()) continue;
            path = path.empty() ? part : path + "/" + part;
            auto it = std::find_if(node->children.begin(), node->children.end(),
                                   [&](const GroupNode& c) { return c.name == part; });
            if (it == node->children.end()) {
                node->children.push_back(GroupNode{part, path, {}, {}});
                it = std::prev(node->children.end());
            }
            node = &*it;
        }
        node->members.push_back(task.id);
    }
    std::function<void(GroupNode&)> tidy = [&](GroupNode& n) {
        std::sort(n.children.begin(), n.children.end(),
                  [](const GroupNode& a, const GroupNode& b) { return a.name < b.name; });
        std::sort(n.members.begin(), n.members.end());
        for (auto& c : n.children) tidy(c);
    };
    tidy(root);
    return root;
}

json graph_to_json(const ModelGraph& g, bool canonical) {
    std::vector<const Tensor*> tensors;
    for (const auto& t : g.tensors) tensors.push_back(&t);
    std::vector<const HardwareTask*> tasks;
    for (const auto& t : g.tasks) tasks.push_back(&t);
    if (canonical) {
        std::stable_sort(tensors.begin(), tensors.end(), [](auto* a, auto* b) { return a->id < b->id; });
        std::stable_sort(tasks.begin(), tasks.end(), [](auto* a, auto* b) { return a->id < b->id; });
    }

    json doc;
    doc["schema_version"] = g.schema_version;
    doc["name"] = g.name;
    if (g.fps_target) doc["fps_target"] = *g.fps_target;
    json jt = json::array();
    for (const auto* t : tensors) {
        json e{{"id", t->id}, {"elem_count", t->elem_count}, {"format", to_string(t->format)}};
        if (t->shape) e["shape"] = *t->shape;
        jt.push_back(std::move(e));
    }
    doc["tensors"] = std::move(jt);
    json jk = json::array();
    for (const auto* t : tasks) {
        json e{{"id", t->id},
               {"name", t->name},
               {"kind", to_string(t->kind)},
               {"inputs", t->inputs},
               {"outputs", t->outputs},
               {"weight_count", t->weight_count},
               {"kernel_format", to_string(t->kernel_format)},
               {"sparsity", t->sparsity},
               {"palette_bits", t->palette_bits},
               {"group", t->group}};
        if (t->macs) e["macs"] = *t->macs;
        if (t->code_ref) e["code_ref"] = *t->code_ref;
        jk.push_back(std::move(e));
    }
    doc["tasks"] = std::move(jk);
    return doc;
}

std::string canonical_graph_text(const ModelGraph& g) { return graph_to_json(g, true).dump(); }

std::string graph_hash(const ModelGraph& g) { return sha256_hex(canonical_graph_text(g)); }

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", digest[i]);
    return out;
}

namespace {

class SchemaReader {
public:
    [[noreturn]] static void fail(const std::string& pointer, const std::string& what) {
        throw Error(ErrorCode::SchemaError, fmt::format("{} at {}", what, pointer.empty() ? "/" : pointer),
                    json{{"pointer", pointer.empty() ? "/" : pointer}});
    }

    static const json& field(const json& obj, const std::string& ptr, const char* key) {
        auto it = obj.find(key);
        if (it == obj.end()) fail(ptr + "/" + key, "missing required field");
        return *it;
    }

    static std::string str(const json& obj, const std::string& ptr, const char* key) {
        const auto& v = field(obj, ptr, key);
        if (!v.is_string()) fail(ptr + "/" + key, "expected string");
        return v.get<std::string>();
    }

    static std::int64_t integer(const json& v, const std::string& ptr) {
        if (!v.is_number_integer()) fail(ptr, "expected integer");
        return v.get<std::int64_t>();
    }

    static double number(const json& v, const std::string& ptr) {
        if (!v.is_number()) fail(ptr, "expected number");
        return v.get<double>();
    }

    static NumericFormat format(const json& v, const std::string& ptr) {
        if (!v.is_string()) fail(ptr, "expected format string");
        auto f = parse_format(v.get<std::string>());
        if (!f) fail(ptr, fmt::format("unknown numeric format \"{}\"", v.get<std::string>()));
        return *f;
    }

    static std::vector<std::string> strings(const json& v, const std::string& ptr) {
        if (!v.is_array()) fail(ptr, "expected array");
        std::vector<std::string> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_string()) fail(fmt::format("{}/{}", ptr, i), "expected string");
            out.push_back(v[i].get<std::string>());
        }
        return out;
    }
};

}  // namespace

ModelGraph graph_from_json(const json& doc) {
    using R = SchemaReader;
    if (!doc.is_object()) R::fail("", "graph document must be an object");
    ModelGraph g;
    g.schema_version = static_cast<int>(R::integer(R::field(doc, "", "schema_version"), "/schema_version"));
    g.name = R::str(doc, "", "name");
    if (auto it = doc.find("fps_target"); it != doc.end() && !it->is_null()) {
        g.fps_target = R::number(*it, "/fps_target");
    }

    const auto& tensors = R::field(doc, "", "tensors");
    if (!tensors.is_array()) R::fail("/tensors", "expected array");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const std::string ptr = fmt::format("/tensors/{}", i);
        const auto& e = tensors[i];
        if (!e.is_object()) R::fail(ptr, "expected object");
        Tensor t;
        t.id = R::str(e, ptr, "id");
        t.elem_count = R::integer(R::field(e, ptr, "elem_count"), ptr + "/elem_count");
        t.format = R::format(R::field(e, ptr, "format"), ptr + "/format");
        if (auto it = e.find("shape"); it != e.end() && !it->is_null()) {
            if (!it->is_array()) R::fail(ptr + "/shape", "expected array");
            std::vector<std::int64_t> shape;
            for (std::size_t d = 0; d < it->size(); ++d) {
                shape.push_back(R::integer((*it)[d], fmt::format("{}/shape/{}", ptr, d)));
            }
            t.shape = std::move(shape);
        }
        g.tensors.push_back(std::move(t));
    }

    const auto& tasks = R::field(doc, "", "tasks");
    if (!tasks.is_array()) R::fail("/tasks", "expected array");
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const std::string ptr = fmt::format("/tasks/{}", i);
        const auto& e = tasks[i];
        if (!e.is_object()) R::fail(ptr, "expected object");
        HardwareTask t;
        t.id = static_cast<TaskId>(R::integer(R::field(e, ptr, "id"), ptr + "/id"));
        t.name = R::str(e, ptr, "name");
        auto kind = R::str(e, ptr, "kind");
        auto parsed = parse_kind(kind);
        if (!parsed) R::fail(ptr + "/kind", fmt::format("unknown task kind \"{}\"", kind));
        t.kind = *parsed;
        t.inputs = R::strings(R::field(e, ptr, "inputs"), ptr + "/inputs");
        t.outputs = R::strings(R::field(e, ptr, "outputs"), ptr + "/outputs");
        // Kernel fields are inert on weightless tasks, so only weighted kinds must carry them.
        const bool weighted_kind = t.kind == TaskKind::conv2d || t.kind == TaskKind::matmul;
        const auto optional = [&](const char* key) -> const json* {
            auto it = e.find(key);
            if (it != e.end() && !it->is_null()) return &*it;
            if (weighted_kind && std::string_view(key) == "weight_count") (void)R::field(e, ptr, key);
            return nullptr;
        };
        if (const auto* v = optional("weight_count")) t.weight_count = R::integer(*v, ptr + "/weight_count");
        if (const auto* v = optional("kernel_format")) t.kernel_format = R::format(*v, ptr + "/kernel_format");
        if (const auto* v = optional("sparsity")) t.sparsity = R::number(*v, ptr + "/sparsity");
        if (const auto* v = optional("palette_bits")) {
            t.palette_bits = static_cast<int>(R::integer(*v, ptr + "/palette_bits"));
        }
        if (e.contains("group")) t.group = R::str(e, ptr, "group");
        if (auto it = e.find("macs"); it != e.end() && !it->is_null()) {
            t.macs = R::integer(*it, ptr + "/macs");
        }
        if (auto it = e.find("code_ref"); it != e.end() && !it->is_null()) {
            t.code_ref = static_cast<int>(R::integer(*it, ptr + "/code_ref"));
        }
        g.tasks.push_back(std::move(t));
    }
    g.reindex();
    return g;
}

}  // namespace tasklens
