#include "lexinf/checkpoint.hpp"

#include "lexinf/errors.hpp"
#include "lexinf/panel.hpp"

#include <cmath>
#include <fstream>
#include <limits>

namespace lexinf {

using nlohmann::json;

namespace {

// NaN and infinities are not representable in JSON; store them as null.
json number(double v)
{
    return std::isfinite(v) ? json(v) : json(nullptr);
}

double number_from(const json& j)
{
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

} // namespace

json matrix_to_json(const Eigen::MatrixXd& m)
{
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            row.push_back(number(m(r, c)));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j)
{
    if (!j.is_array())
        throw DataError("expected a matrix (array of rows)");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(j[r].size()) != cols)
            throw DataError("ragged matrix in JSON");
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = number_from(j[r][c]);
    }
    return m;
}

json vector_to_json(const Eigen::VectorXd& v)
{
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out.push_back(number(v[i]));
    return out;
}

Eigen::VectorXd vector_from_json(const json& j)
{
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v[i] = number_from(j[i]);
    return v;
}

json to_json(const Checkpoint& ckpt)
{
    const auto& st = ckpt.state;
    json zeta = json::array();
    for (const auto& z : st.zeta)
        zeta.push_back(matrix_to_json(z));
    json trace = json::array();
    for (const auto& e : st.trace)
        trace.push_back({{"iteration", e.iteration},
                         {"sweep", e.sweep},
                         {"bound", number(e.bound)},
                         {"zeta_change", number(e.zeta_change)}});
    return {{"format", kCheckpointFormat},
            {"format_version", kFormatVersion},
            {"covariance_mode", ckpt.mode == kalman::CovarianceMode::full ? "full" : "diagonal"},
            {"background", {{"nu", vector_to_json(ckpt.background.nu)}, {"tau", matrix_to_json(ckpt.background.tau)}}},
            {"dynamics", {{"a_diag", vector_to_json(st.dynamics.a_diag)}, {"gamma", matrix_to_json(st.dynamics.gamma)}}},
            {"em",
             {{"iteration", st.iteration},
              {"sweep", st.sweep},
              {"sweep_iteration", st.sweep_iteration},
              {"previous_bound", number(st.previous_bound)},
              {"converged", st.converged},
              {"trace", trace}}},
            {"zeta", zeta}};
}

Checkpoint checkpoint_from_json(const json& j)
{
    try {
        if (j.at("format").get<std::string>() != kCheckpointFormat)
            throw DataError("not a checkpoint file");
        if (j.at("format_version").get<int>() != kFormatVersion)
            throw DataError("unsupported checkpoint format_version");
        Checkpoint ckpt;
        ckpt.mode = j.value("covariance_mode", "diagonal") == "full" ? kalman::CovarianceMode::full
                                                                     : kalman::CovarianceMode::diagonal;
        ckpt.background.nu = vector_from_json(j.at("background").at("nu"));
        ckpt.background.tau = matrix_from_json(j.at("background").at("tau"));
        auto& st = ckpt.state;
        st.dynamics.a_diag = vector_from_json(j.at("dynamics").at("a_diag"));
        st.dynamics.gamma = matrix_from_json(j.at("dynamics").at("gamma"));
        const auto& em = j.at("em");
        st.iteration = em.at("iteration").get<int>();
        st.sweep = em.at("sweep").get<int>();
        st.sweep_iteration = em.at("sweep_iteration").get<int>();
        st.previous_bound = number_from(em.at("previous_bound"));
        st.converged = em.at("converged").get<bool>();
        for (const auto& e : em.at("trace"))
            st.trace.push_back({e.at("iteration").get<int>(), e.at("sweep").get<int>(), number_from(e.at("bound")),
                                number_from(e.at("zeta_change"))});
        for (const auto& z : j.at("zeta"))
            st.zeta.push_back(matrix_from_json(z));
        // An empty R x T matrix loses its column count in JSON; restore from tau.
        for (auto& z : st.zeta)
            if (z.size() == 0)
                z.resize(ckpt.background.tau.rows(), ckpt.background.tau.cols());
        return ckpt;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed checkpoint: ") + e.what());
    }
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot write checkpoint " + path.string());
    out << to_json(ckpt).dump() << '\n';
}

Checkpoint read_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot read checkpoint " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed checkpoint: ") + e.what());
    }
    return checkpoint_from_json(j);
}

} // namespace lexinf
