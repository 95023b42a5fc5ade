#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evetac/nn.hpp"

namespace evetac {

/*
 * One force datapoint: per-dot displacement vectors (dx0, dy0, dx1, dy1, ...)
 * and the shear force that produced them.
 */
struct ForceSample {
    std::vector<double> disp;
    double fx = 0.0;
    double fy = 0.0;
};

struct ForceTrajectory {
    std::vector<ForceSample> samples;
};

// F = coef * (sum dx, sum dy) + bias
struct LinearForceModel {
    double coef[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
    double bias[2] = {0.0, 0.0};

    void predict(std::span<const double> disp, double& fx, double& fy) const;
};

LinearForceModel fit_linear(std::span<const ForceTrajectory> train);

struct ForceEval {
    double mae_x = 0.0;
    double mae_y = 0.0;
    std::vector<std::array<double, 2>> predictions;
};

ForceEval evaluate(const LinearForceModel& model, const ForceTrajectory& eval);

// 2N -> 128 -> 128 -> 2 with ReLU and 25% dropout after each hidden layer
nn::Network build_force_network(int dots);

struct ForceNetResult {
    nn::Network net;
    double best_test_loss = 0.0;
    int best_epoch = -1;
};

/*
 * Paper protocol: the training trajectories are split 3/1 into train and
 * test, the network trains for `epochs` epochs and the checkpoint with the
 * lowest test loss wins.
 */
ForceNetResult fit_network(std::span<const ForceTrajectory> train, int epochs = 50,
                           std::uint64_t seed = 1, double lr = 1e-3);

ForceEval evaluate(const nn::Network& net, const ForceTrajectory& eval);

// interchange format used by the CLI: fx, fy, dx0, dy0, ... per row
void write_force_csv(const std::string& path, std::span<const ForceTrajectory> trajectories);
std::vector<ForceTrajectory> read_force_csv(const std::string& path);

void save_linear_model(const std::string& path, const LinearForceModel& model);
LinearForceModel load_linear_model(const std::string& path);

} // namespace evetac
