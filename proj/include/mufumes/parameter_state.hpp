#pragma once

#include <vector>

#include <Eigen/Dense>

namespace mufumes {

/// Full parameter vector of the ECM iteration: gamma, stacked L, b_i, theta, theta*, sigma^2.
struct ParameterState {
    Eigen::VectorXd gamma;
    Eigen::VectorXd ltilde;
    std::vector<Eigen::VectorXd> b;
    double theta = 0.5;
    double theta_star = 0.5;
    double sigma2 = 1.0;

    friend bool operator==(const ParameterState&, const ParameterState&) = default;
};

}  // namespace mufumes
