#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fkdiff/kinematics.hpp"
#include "fkdiff/urdf.hpp"

namespace fkdiff {

enum class Optimizer { GradientDescent, Adam };
/// Starting point of the trainable joint: zeros, or the origin recorded in
/// the URDF.
enum class InitMode { Zero, Model };

struct IdentifyConfig {
    std::string target_link;
    std::string base;
    std::string end;
    std::size_t batch_size = 1;
    double learning_rate = 1e-2;
    std::size_t max_steps = 5000;
    /// Converged once the post-step loss drops below this.
    double epsilon = 1e-8;
    /// ... or once the gradient norm drops below this.
    double grad_epsilon = 1e-10;
    std::uint64_t seed = 0;
    /// Distinct configurations in the sample stream; 0 draws fresh ones forever.
    std::size_t num_configurations = 1;
    Optimizer optimizer = Optimizer::GradientDescent;
    double rotation_weight = 1.0;
    InitMode init = InitMode::Zero;
};

/// Reads the identification config JSON. Unknown keys are rejected.
IdentifyConfig parse_identify_config(std::string_view json_text);

/// Uniform joint values within URDF limits, or [-pi, pi) for joints without
/// limits. Trainable joints consume no values. Portable across standard
/// libraries: only the raw mt19937_64 output is used.
class JointSampler {
public:
    JointSampler(const KinematicChain& chain, std::uint64_t seed);

    std::vector<double> draw();
    /// `count` configurations, configuration-major.
    std::vector<double> draw(std::size_t count);
    const std::vector<std::pair<double, double>>& ranges() const { return ranges_; }

private:
    std::vector<std::pair<double, double>> ranges_;
    std::mt19937_64 rng_;
};

/**
 * Stream of (configuration batch, ground-truth end transform) pairs.
 *
 * Joint values are uniform within URDF limits, or in [-pi, pi) for joints
 * without limits. With `num_configurations` > 0 a pool of that many
 * configurations is drawn once and cycled through; the stream is fully
 * determined by the seed.
 */
class SampleGenerator {
public:
    struct Batch {
        std::vector<double> thetas;
        std::vector<Transform4<double>> targets;
    };

    SampleGenerator(const RobotModel& model, std::string_view base, std::string_view end, std::size_t batch_size,
                    std::uint64_t seed, std::size_t num_configurations = 0);

    Batch next();
    const FkEngine& engine() const { return engine_; }
    /// The configuration pool (num_configurations x dof), empty for fresh streams.
    const std::vector<double>& pool() const { return pool_; }

private:
    FkEngine engine_;
    JointSampler sampler_;
    std::vector<double> pool_;
    std::size_t pool_size_ = 0;
    std::size_t cursor_ = 0;
};

SampleGenerator make_generator(const RobotModel& model, std::string_view base, std::string_view end,
                               std::size_t batch_size, std::uint64_t seed, std::size_t num_configurations = 0);

struct EstimatorOptions {
    double learning_rate = 1e-2;
    Optimizer optimizer = Optimizer::GradientDescent;
    double rotation_weight = 1.0;
};

/**
 * Gradient-based estimate of the six parameters of one trainable joint.
 *
 * loss = mean over the batch of |p - p_target|^2 + w * phi5(R, R_target)^2.
 * phi5 is squared so the loss stays smooth at the optimum.
 */
class ParamEstimator {
public:
    struct StepResult {
        double loss = 0.0;       ///< loss after the update
        double grad_norm = 0.0;  ///< gradient norm before the update
    };

    ParamEstimator(FkEngine engine, std::array<double, 6> initial, EstimatorOptions options = {});

    StepResult step(std::span<const double> thetas, std::span<const Transform4<double>> targets);

    double loss(std::span<const double> thetas, std::span<const Transform4<double>> targets) const;
    /// Loss and its gradient with respect to the six parameters.
    std::pair<double, std::array<double, 6>> loss_and_gradient(std::span<const double> thetas,
                                                               std::span<const Transform4<double>> targets) const;

    const std::array<double, 6>& params() const { return params_; }
    std::size_t iterations() const { return iterations_; }
    const FkEngine& engine() const { return engine_; }

private:
    FkEngine engine_;
    std::array<double, 6> params_;
    EstimatorOptions options_;
    std::size_t iterations_ = 0;
    std::array<double, 6> adam_m_{};
    std::array<double, 6> adam_v_{};
};

enum class IdentifyStatus { Converged, BudgetExhausted };

struct IdentifyResult {
    IdentifyStatus status = IdentifyStatus::BudgetExhausted;
    SixDofParams<double> estimated;
    SixDofParams<double> ground_truth;
    /// Worst per-axis end pose error (x, y, z, alpha, beta, gamma) over the
    /// configuration pool.
    std::array<double, 6> pose_error{};
    /// Per-axis error of the estimated joint transform against ground truth,
    /// compared through the same Euler extraction.
    std::array<double, 6> param_error{};
    double final_loss = 0.0;
    std::size_t steps = 0;
    double wall_seconds = 0.0;
    std::vector<double> loss_history;
};

/// Replaces `target_link` with a trainable 6-DoF joint and fits it to the
/// ground-truth model's end poses by gradient descent.
IdentifyResult run_identification(const RobotModel& model, const IdentifyConfig& config);

std::string_view to_string(IdentifyStatus status);

}  // namespace fkdiff
