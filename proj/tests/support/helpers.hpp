#pragma once

/**
 * @file helpers.hpp
 * @brief Shared fixtures for the unit tests: shipped meshes, temp dirs, random data.
 */

#include <filesystem>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "cfdgcn/mesh.hpp"

namespace testing {

inline std::string mesh_file(const std::string& name) {
    return std::string(CFDGCN_DATA_DIR) + "/meshes/" + name + ".su2";
}

inline cfdgcn::Mesh shipped(const std::string& name) { return cfdgcn::read_su2_file(mesh_file(name)); }

/// Fresh, empty directory under the build tree.
inline std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::path(CFDGCN_TEST_TMP) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                                     double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
    }
    return m;
}

inline const char* kTriangleSu2 =
    "NDIME= 2\n"
    "NELEM= 1\n"
    "5 0 1 2 0\n"
    "NPOIN= 3\n"
    "0 0 0\n"
    "1 0 1\n"
    "0 1 2\n"
    "NMARK= 0\n";

}  // namespace testing
