#pragma once

// Validator for the subset of JSON Schema used by api/schema.json.

#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

namespace schema_check {

class Validator {
public:
    explicit Validator(nlohmann::json root) : root_(std::move(root)) {}

    // Empty result means valid; otherwise one "pointer: problem" per failure.
    std::vector<std::string> check(const std::string& response, const nlohmann::json& doc) const {
        std::vector<std::string> errs;
        const auto& responses = root_.at("responses");
        if (!responses.contains(response)) {
            errs.push_back("no schema named " + response);
            return errs;
        }
        walk(responses.at(response), doc, "", errs);
        return errs;
    }

private:
    const nlohmann::json& resolve(const nlohmann::json& s) const {
        if (!s.contains("$ref")) return s;
        const auto ref = s["$ref"].get<std::string>();
        const std::string prefix = "#/definitions/";
        return resolve(root_.at("definitions").at(ref.substr(prefix.size())));
    }

    static bool type_ok(const std::string& t, const nlohmann::json& v) {
        if (t == "object") return v.is_object();
        if (t == "array") return v.is_array();
        if (t == "string") return v.is_string();
        if (t == "integer") return v.is_number_integer();
        if (t == "number") return v.is_number();
        if (t == "boolean") return v.is_boolean();
        if (t == "null") return v.is_null();
        return false;
    }

    void walk(const nlohmann::json& raw, const nlohmann::json& v, const std::string& at,
              std::vector<std::string>& errs) const {
        const auto& s = resolve(raw);
        const std::string where = at.empty() ? "/" : at;
        if (auto t = s.find("type"); t != s.end()) {
            bool ok = false;
            if (t->is_string()) ok = type_ok(t->get<std::string>(), v);
            else for (const auto& alt : *t) ok = ok || type_ok(alt.get<std::string>(), v);
            if (!ok) {
                errs.push_back(where + ": expected type " + t->dump() + ", got " + v.type_name());
                return;
            }
        }
        if (auto e = s.find("enum"); e != s.end()) {
            if (std::find(e->begin(), e->end(), v) == e->end()) errs.push_back(where + ": " + v.dump() + " not in enum");
        }
        if (auto m = s.find("minimum"); m != s.end() && v.is_number()) {
            if (v.get<double>() < m->get<double>()) errs.push_back(where + ": below minimum");
        }
        if (auto p = s.find("pattern"); p != s.end() && v.is_string()) {
            if (!std::regex_search(v.get<std::string>(), std::regex(p->get<std::string>()))) {
                errs.push_back(where + ": " + v.dump() + " does not match " + p->get<std::string>());
            }
        }
        if (v.is_object()) {
            if (auto r = s.find("required"); r != s.end()) {
                for (const auto& key : *r) {
                    if (!v.contains(key.get<std::string>())) errs.push_back(where + ": missing " + key.get<std::string>());
                }
            }
            const auto props = s.find("properties");
            const bool closed = s.value("additionalProperties", true) == false;
            for (const auto& [key, child] : v.items()) {
                if (props != s.end() && props->contains(key)) walk((*props)[key], child, at + "/" + key, errs);
                else if (closed) errs.push_back(where + ": unexpected property " + key);
            }
        }
        if (v.is_array()) {
            if (auto items = s.find("items"); items != s.end()) {
                for (std::size_t i = 0; i < v.size(); ++i) walk(*items, v[i], at + "/" + std::to_string(i), errs);
            }
        }
    }

    nlohmann::json root_;
};

}  // namespace schema_check
