#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tasklens/optimizer.hpp"

namespace tasklens::report {

struct Column {
    std::string id;
    std::string label;
    std::string unit;
    std::string description;
    bool numeric = true;
};

const std::vector<Column>& columns();
const Column* find_column(std::string_view id);
std::string column_ids();

struct MetricsQuery {
    std::size_t offset = 0;
    std::size_t limit = 10000;
};

// The Table View payload: {columns, rows, summary}. With a selection, each
// row carries base / optimized / delta objects; otherwise only base.
nlohmann::json metrics_payload(const ModelGraph& g, const SimulationResult& sim,
                               bool with_selection, const MetricsQuery& query = {});

nlohmann::json summary_payload(const ModelGraph& g, const SimulationResult& sim);

struct TableOptions {
    std::optional<std::string> sort;  // column id, descending for numbers
    std::optional<std::size_t> top;
    std::size_t max_width = 160;
};

// Throws Usage with the valid column list when the sort column is unknown.
std::string render_table(const nlohmann::json& payload, const TableOptions& opts);
std::string render_csv(const nlohmann::json& payload, const TableOptions& opts);
nlohmann::json select_rows(const nlohmann::json& payload, const TableOptions& opts);

}  // namespace tasklens::report
