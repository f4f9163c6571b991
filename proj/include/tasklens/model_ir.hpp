#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tasklens/format.hpp"

namespace tasklens {

using TaskId = int;
inline constexpr std::size_t kNoProducer = static_cast<std::size_t>(-1);

struct Tensor {
    std::string id;
    std::int64_t elem_count = 0;
    std::optional<std::vector<std::int64_t>> shape;
    NumericFormat format = NumericFormat::fp16;
};

struct HardwareTask {
    TaskId id = 0;
    std::string name;
    TaskKind kind = TaskKind::elementwise;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::int64_t weight_count = 0;
    NumericFormat kernel_format = NumericFormat::fp16;
    double sparsity = 0.0;
    int palette_bits = 0;
    std::optional<std::int64_t> macs;  // filled by derive_task_work when omitted
    std::string group;
    std::optional<int> code_ref;

    [[nodiscard]] bool has_weights() const noexcept { return weight_count > 0; }
    [[nodiscard]] std::int64_t work() const noexcept { return macs.value_or(0); }
};

// Resolved adjacency over tensor indices. Built by ModelGraph::reindex();
// dangling references are skipped so that an invalid graph can still be
// inspected by validate_graph.
struct GraphIndex {
    std::unordered_map<std::string, std::size_t> tensor_pos;
    std::vector<std::size_t> producer;                 // per tensor, task position or kNoProducer
    std::vector<std::vector<std::size_t>> consumers;   // per tensor, task positions
    std::vector<std::vector<std::size_t>> task_inputs; // per task, tensor positions
    std::vector<std::vector<std::size_t>> task_outputs;
};

struct ModelGraph {
    std::string name;
    int schema_version = 1;
    std::optional<double> fps_target;
    std::vector<Tensor> tensors;
    std::vector<HardwareTask> tasks;
    GraphIndex index;

    void reindex();

    [[nodiscard]] const Tensor* find_tensor(const std::string& id) const;
    [[nodiscard]] std::size_t tensor_count() const noexcept { return tensors.size(); }
    [[nodiscard]] std::size_t task_count() const noexcept { return tasks.size(); }

    // Task positions of direct predecessors/successors (deduplicated, ascending).
    [[nodiscard]] std::vector<std::size_t> predecessors(std::size_t task) const;
    [[nodiscard]] std::vector<std::size_t> successors(std::size_t task) const;

    // Tensor element totals over a task's inputs / outputs.
    [[nodiscard]] std::int64_t input_elems(std::size_t task) const;
    [[nodiscard]] std::int64_t output_elems(std::size_t task) const;
};

enum class ViolationKind {
    UnsupportedSchemaVersion,
    DuplicateTensor,
    NonPositiveElemCount,
    ShapeMismatch,
    DuplicateTaskId,
    NonDenseTaskIds,
    DanglingReference,
    DuplicateProducer,
    MissingOutputs,
    NegativeWork,
    ConcatHasWork,
    InvalidSparsity,
    InvalidPaletteBits,
    NonPositiveFpsTarget,
    CycleDetected,
};

std::string_view to_string(ViolationKind k);

struct Violation {
    ViolationKind kind;
    std::optional<TaskId> task;
    std::string tensor;
    std::vector<TaskId> cycle;
    std::string message;

    friend bool operator==(const Violation&, const Violation&) = default;
};

// All violations, ordered by task id (graph-level first), then tensor id.
std::vector<Violation> validate_graph(const ModelGraph& g);

struct WorkDerivation {
    std::int64_t pool_window = 4;
};

// Fills omitted macs from tensor shapes. Explicit macs are left alone.
ModelGraph derive_task_work(ModelGraph g, const WorkDerivation& rules = {});

// Task positions in topological order (Kahn, lowest id first). Empty optional on a cycle.
std::optional<std::vector<std::size_t>> topological_order(const ModelGraph& g);

struct GroupNode {
    std::string name;
    std::string path;
    std::vector<GroupNode> children;  // sorted by name
    std::vector<TaskId> members;      // ascending
};

GroupNode group_tree(const ModelGraph& g);

// graph.json document. `canonical` sorts tensors and tasks by id.
nlohmann::json graph_to_json(const ModelGraph& g, bool canonical = true);
std::string canonical_graph_text(const ModelGraph& g);
std::string graph_hash(const ModelGraph& g);

// Structural parse of a graph.json document; throws SchemaError with a
// JSON pointer on type errors. Semantic checks live in validate_graph.
ModelGraph graph_from_json(const nlohmann::json& doc);

std::string sha256_hex(std::string_view bytes);

}  // namespace tasklens
