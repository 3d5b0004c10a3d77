#pragma once

#include <json.hpp>

#include <string>
#include <vector>

#include "pqdyn/error.hpp"
#include "pqdyn/state.hpp"

namespace pqdyn::json_util {

using Json = nlohmann::json;

[[noreturn]] inline void fail(const std::string& path, const std::string& msg) {
    throw Error(ErrorKind::Config, "config key '" + path + "': " + msg);
}

inline const Json& at(const Json& j, const std::string& key, const std::string& path) {
    if (!j.is_object()) fail(path, "expected an object");
    auto it = j.find(key);
    if (it == j.end()) fail(path + "." + key, "missing required key");
    return *it;
}

inline double number(const Json& j, const std::string& path) {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
}

inline int integer(const Json& j, const std::string& path) {
    if (!j.is_number_integer()) fail(path, "expected an integer");
    return j.get<int>();
}

inline long long integer64(const Json& j, const std::string& path) {
    if (!j.is_number_integer()) fail(path, "expected an integer");
    return j.get<long long>();
}

inline std::string string(const Json& j, const std::string& path) {
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
}

inline Vector vector(const Json& j, const std::string& path) {
    if (!j.is_array()) fail(path, "expected an array of numbers");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
        v[static_cast<Eigen::Index>(i)] = number(j[i], path + "[" + std::to_string(i) + "]");
    return v;
}

inline std::vector<int> int_list(const Json& j, const std::string& path) {
    if (!j.is_array()) fail(path, "expected an array of integers");
    std::vector<int> out;
    for (std::size_t i = 0; i < j.size(); ++i)
        out.push_back(integer(j[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

inline Matrix matrix(const Json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) fail(path, "expected a non-empty array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    Eigen::Index cols = -1;
    Matrix m;
    for (std::size_t r = 0; r < j.size(); ++r) {
        const Vector row = vector(j[r], path + "[" + std::to_string(r) + "]");
        if (cols < 0) {
            cols = row.size();
            m.resize(rows, cols);
        } else if (row.size() != cols) {
            fail(path, "ragged matrix rows");
        }
        m.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return m;
}

inline Json to_json(const Vector& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline Json to_json(const Matrix& m) {
    Json a = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(to_json(Vector(m.row(r).transpose())));
    return a;
}

}  // namespace pqdyn::json_util
