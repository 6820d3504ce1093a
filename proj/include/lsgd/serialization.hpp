#ifndef LSGD_SERIALIZATION_HPP
#define LSGD_SERIALIZATION_HPP

// JSON for instances and vectors, plus CSV number formatting.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsgd/problems.hpp"

namespace lsgd {

using json = nlohmann::json;

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Decimal with 17 significant digits: enough to round-trip any double.
inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline json to_json(const Vec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline Vec vec_from_json(const json& j) {
    if (!j.is_array()) throw FormatError("expected an array of numbers");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw FormatError("expected an array of numbers");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

inline json to_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(Vec(m.row(i).transpose())));
    return rows;
}

inline Mat mat_from_json(const json& j) {
    if (!j.is_array()) throw FormatError("expected an array of rows");
    const auto n = static_cast<Eigen::Index>(j.size());
    Mat m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec row = vec_from_json(j[static_cast<std::size_t>(i)]);
        if (row.size() != n) throw FormatError("matrix must be square");
        m.row(i) = row.transpose();
    }
    return m;
}

inline json instance_to_json(const Instance& inst) {
    json j;
    j["kind"] = to_string(inst.kind());
    j["d"] = inst.dim();
    j["M"] = inst.size();
    json ms = json::array();
    for (std::size_t m = 0; m < inst.size(); ++m) {
        json e;
        if (inst.kind() == MachineKind::Regression) {
            const auto& r = inst.regression(m);
            e["mean"] = to_json(r.mean);
            e["optimum"] = to_json(r.truth);
            e["noise"] = {{"label", r.label_noise}};
        } else {
            const auto& q = inst.quadratic(m);
            e["hessian"] = to_json(q.hessian.mat());
            e["affine"] = to_json(q.affine);
            e["optimum"] = q.optimum ? to_json(*q.optimum) : json(nullptr);
            e["offset"] = q.offset;
            e["noise"] = {{"second", q.noise_second}, {"fourth", q.noise_fourth}};
        }
        ms.push_back(std::move(e));
    }
    j["machines"] = std::move(ms);
    return j;
}

inline Instance instance_from_json(const json& j) {
    try {
        const std::string kind = j.at("kind").get<std::string>();
        const auto d = j.at("d").get<std::size_t>();
        const auto M = j.at("M").get<std::size_t>();
        const json& ms = j.at("machines");
        if (!ms.is_array() || ms.size() != M) throw FormatError("machines array does not match M");
        Instance inst;
        if (kind == "regression") {
            std::vector<RegressionMachine> rs;
            for (const auto& e : ms) {
                rs.push_back({vec_from_json(e.at("mean")), vec_from_json(e.at("optimum")),
                              e.at("noise").at("label").get<double>()});
            }
            inst = Instance::build(std::move(rs));
        } else if (kind == "quadratic") {
            std::vector<QuadraticMachine> qs;
            for (const auto& e : ms) {
                QuadraticMachine q;
                q.hessian = SymMatrix(mat_from_json(e.at("hessian")));
                q.affine = vec_from_json(e.at("affine"));
                if (!e.at("optimum").is_null()) q.optimum = vec_from_json(e.at("optimum"));
                q.offset = e.value("offset", 0.0);
                q.noise_second = e.at("noise").at("second").get<double>();
                q.noise_fourth = e.at("noise").at("fourth").get<double>();
                if (static_cast<std::size_t>(q.affine.size()) != q.dim() ||
                    (q.optimum && static_cast<std::size_t>(q.optimum->size()) != q.dim())) {
                    throw FormatError("machine vector dimension mismatch");
                }
                q.validate();
                qs.push_back(std::move(q));
            }
            inst = Instance::build(std::move(qs));
        } else {
            throw FormatError("unknown instance kind '" + kind + "'");
        }
        if (inst.dim() != d) throw FormatError("declared dimension does not match machines");
        return inst;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed instance document: ") + e.what());
    }
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write '" + path + "'");
    out << text;
}

/// FNV-1a over the bytes of a string.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t x) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
    return buf;
}

}  // namespace lsgd

#endif
