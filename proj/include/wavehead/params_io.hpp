#pragma once

#include <cmath>
#include <fstream>
#include <string>

#include "json.hpp"

#include "wavehead/errors.hpp"
#include "wavehead/heads.hpp"

namespace wavehead {

// Head parameter files: versioned JSON, one key per tensor, doubles written
// in shortest round-trip decimal form so save/load is value-exact.

namespace detail {

inline nlohmann::ordered_json matrix_to_json(const RealMatrix& m) {
    return {{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

inline RealMatrix matrix_from_json(const nlohmann::json& j) {
    RealMatrix m;
    m.rows = j.at("rows").get<std::size_t>();
    m.cols = j.at("cols").get<std::size_t>();
    m.data = j.at("data").get<std::vector<double>>();
    if (m.data.size() != m.rows * m.cols)
        throw io_error(io_error::kind::schema, "params: tensor data length mismatch");
    for (double v : m.data)
        if (!std::isfinite(v))
            throw io_error(io_error::kind::payload, "params: non-finite tensor entry");
    return m;
}

} // namespace detail

inline nlohmann::ordered_json head_to_json(const HeadParameters& p) {
    nlohmann::ordered_json j;
    j["format"] = "wavehead-params";
    j["version"] = 1;
    j["variant"] = to_string(p.variant);
    j["dims"] = {{"feature_dim", p.dims.feature_dim},
                 {"hilbert_dim", p.dims.hilbert_dim},
                 {"classes", p.dims.classes},
                 {"hidden", p.dims.hidden}};
    j["seed"] = p.seed;
    j["dropout_rate"] = p.dropout_rate;

    nlohmann::ordered_json tensors;
    if (!p.proj_re.data.empty()) tensors["proj_re"] = detail::matrix_to_json(p.proj_re);
    if (!p.proj_im.data.empty()) tensors["proj_im"] = detail::matrix_to_json(p.proj_im);
    if (!p.unitary_gen.data.empty())
        tensors["unitary_gen"] = detail::matrix_to_json(p.unitary_gen);
    if (!p.measurements.vectors.empty()) {
        nlohmann::ordered_json meas = nlohmann::ordered_json::array();
        for (const auto& m : p.measurements.vectors)
            meas.push_back({{"re", m.re}, {"im", m.im}});
        tensors["measurements"] = std::move(meas);
    }
    if (!p.hid_w.data.empty()) tensors["hid_w"] = detail::matrix_to_json(p.hid_w);
    if (!p.hid_b.empty()) tensors["hid_b"] = p.hid_b;
    if (!p.cls_w.data.empty()) tensors["cls_w"] = detail::matrix_to_json(p.cls_w);
    if (!p.cls_b.empty()) tensors["cls_b"] = p.cls_b;
    j["tensors"] = std::move(tensors);
    return j;
}

inline HeadParameters head_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "wavehead-params")
            throw io_error(io_error::kind::bad_magic, "params: not a wavehead parameter file");
        if (j.at("version").get<int>() != 1)
            throw io_error(io_error::kind::bad_version, "params: unsupported version");

        HeadParameters p;
        p.variant = head_variant_from_string(j.at("variant").get<std::string>());
        const auto& dims = j.at("dims");
        p.dims.feature_dim = dims.at("feature_dim").get<std::size_t>();
        p.dims.hilbert_dim = dims.at("hilbert_dim").get<std::size_t>();
        p.dims.classes = dims.at("classes").get<std::size_t>();
        p.dims.hidden = dims.at("hidden").get<std::size_t>();
        p.seed = j.at("seed").get<std::uint64_t>();
        p.dropout_rate = j.at("dropout_rate").get<double>();

        const auto& tensors = j.at("tensors");
        if (tensors.contains("proj_re")) p.proj_re = detail::matrix_from_json(tensors["proj_re"]);
        if (tensors.contains("proj_im")) p.proj_im = detail::matrix_from_json(tensors["proj_im"]);
        if (tensors.contains("unitary_gen"))
            p.unitary_gen = detail::matrix_from_json(tensors["unitary_gen"]);
        if (tensors.contains("measurements")) {
            for (const auto& mj : tensors["measurements"]) {
                ComplexVector m(mj.at("re").get<std::vector<double>>(),
                                mj.at("im").get<std::vector<double>>());
                p.measurements.vectors.push_back(std::move(m));
            }
        }
        if (tensors.contains("hid_w")) p.hid_w = detail::matrix_from_json(tensors["hid_w"]);
        if (tensors.contains("hid_b")) p.hid_b = tensors["hid_b"].get<std::vector<double>>();
        if (tensors.contains("cls_w")) p.cls_w = detail::matrix_from_json(tensors["cls_w"]);
        if (tensors.contains("cls_b")) p.cls_b = tensors["cls_b"].get<std::vector<double>>();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw io_error(io_error::kind::schema, std::string("params: malformed JSON: ") + e.what());
    }
}

inline void save_head(const HeadParameters& p, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error(io_error::kind::unreadable, "cannot open for write: " + path);
    out << head_to_json(p).dump(2) << '\n';
    if (!out) throw io_error(io_error::kind::unreadable, "write failed: " + path);
}

inline HeadParameters load_head(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error(io_error::kind::unreadable, "cannot open: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw io_error(io_error::kind::schema, std::string("params: invalid JSON: ") + e.what());
    }
    return head_from_json(j);
}

} // namespace wavehead
