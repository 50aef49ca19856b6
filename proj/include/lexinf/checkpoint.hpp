#ifndef LEXINF_CHECKPOINT_HPP
#define LEXINF_CHECKPOINT_HPP

#include "lexinf/emission.hpp"
#include "lexinf/kalman.hpp"

#include <filesystem>
#include <json.hpp>

namespace lexinf {

inline constexpr const char* kCheckpointFormat = "lexinf-checkpoint";

struct Checkpoint {
    emission::BackgroundParams background;
    kalman::EmState state;
    kalman::CovarianceMode mode = kalman::CovarianceMode::diagonal;
};

nlohmann::json to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

} // namespace lexinf

#endif // LEXINF_CHECKPOINT_HPP
