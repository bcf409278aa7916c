#include "fkdiff/identify.hpp"

#include <chrono>
#include <cmath>
#include <charconv>
#include <numbers>
#include <set>

#include <nlohmann/json.hpp>

#include "fkdiff/metrics.hpp"

namespace fkdiff {

namespace {

double wrap_angle(double a) {
    a = std::remainder(a, 2.0 * std::numbers::pi);
    return a;
}

std::array<double, 6> pose_difference(const Transform4<double>& a, const Transform4<double>& b) {
    const auto pa = pose_from_transform(a).as_array();
    const auto pb = pose_from_transform(b).as_array();
    std::array<double, 6> d{};
    for (std::size_t i = 0; i < 6; ++i) {
        d[i] = pa[i] - pb[i];
        if (i >= 3) d[i] = wrap_angle(d[i]);
        d[i] = std::fabs(d[i]);
    }
    return d;
}

std::string params_to_string(const std::array<double, 6>& p) {
    std::string out = "[";
    char buf[32];
    for (std::size_t i = 0; i < 6; ++i) {
        const auto r = std::to_chars(buf, buf + sizeof buf, p[i]);
        out += (i ? ", " : "") + std::string(buf, r.ptr);
    }
    return out + "]";
}

}  // namespace

IdentifyConfig parse_identify_config(std::string_view json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("identification config: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("identification config: expected a JSON object");

    static const std::set<std::string> known = {
        "target_link", "base", "end", "batch_size", "learning_rate", "max_steps", "epsilon", "grad_epsilon",
        "seed", "num_configurations", "optimizer", "rotation_weight", "init"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw std::invalid_argument("identification config: unknown key '" + key + "'");

    IdentifyConfig c;
    try {
        c.target_link = j.at("target_link").get<std::string>();
        c.base = j.at("base").get<std::string>();
        c.end = j.at("end").get<std::string>();
        c.batch_size = j.value("batch_size", c.batch_size);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.max_steps = j.value("max_steps", c.max_steps);
        c.epsilon = j.value("epsilon", c.epsilon);
        c.grad_epsilon = j.value("grad_epsilon", c.grad_epsilon);
        c.seed = j.value("seed", c.seed);
        c.num_configurations = j.value("num_configurations", c.num_configurations);
        c.rotation_weight = j.value("rotation_weight", c.rotation_weight);
        const std::string opt = j.value("optimizer", std::string("gd"));
        if (opt == "gd") c.optimizer = Optimizer::GradientDescent;
        else if (opt == "adam") c.optimizer = Optimizer::Adam;
        else throw std::invalid_argument("identification config: optimizer must be 'gd' or 'adam'");
        const std::string init = j.value("init", std::string("zero"));
        if (init == "zero") c.init = InitMode::Zero;
        else if (init == "model") c.init = InitMode::Model;
        else throw std::invalid_argument("identification config: init must be 'zero' or 'model'");
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("identification config: ") + e.what());
    }
    if (c.batch_size == 0) throw std::invalid_argument("identification config: batch_size must be positive");
    if (c.learning_rate < 0.0) throw std::invalid_argument("identification config: learning_rate must be >= 0");
    return c;
}

JointSampler::JointSampler(const KinematicChain& chain, std::uint64_t seed) : rng_(seed) {
    for (const auto& seg : chain.segments) {
        if (seg.joint.trainable_init) continue;
        std::pair<double, double> range{-std::numbers::pi, std::numbers::pi};
        if (seg.joint.limits) range = {seg.joint.limits->lower, seg.joint.limits->upper};
        for (std::size_t d = 0; d < dof(seg.joint.type); ++d) ranges_.push_back(range);
    }
}

std::vector<double> JointSampler::draw() {
    std::vector<double> c;
    c.reserve(ranges_.size());
    for (const auto& [lo, hi] : ranges_) {
        const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;  // [0, 1)
        c.push_back(lo + (hi - lo) * u);
    }
    return c;
}

std::vector<double> JointSampler::draw(std::size_t count) {
    std::vector<double> out;
    out.reserve(count * ranges_.size());
    for (std::size_t i = 0; i < count; ++i) {
        const auto c = draw();
        out.insert(out.end(), c.begin(), c.end());
    }
    return out;
}

SampleGenerator::SampleGenerator(const RobotModel& model, std::string_view base, std::string_view end,
                                 std::size_t batch_size, std::uint64_t seed, std::size_t num_configurations)
    : engine_(extract_chain(model, base, end), batch_size),
      sampler_(engine_.chain(), seed),
      pool_(sampler_.draw(num_configurations)),
      pool_size_(num_configurations) {}

SampleGenerator::Batch SampleGenerator::next() {
    Batch batch;
    const std::size_t m = engine_.dof();
    batch.thetas.reserve(engine_.batch_size() * m);
    for (std::size_t k = 0; k < engine_.batch_size(); ++k) {
        if (pool_size_ > 0) {
            const std::size_t row = cursor_++ % pool_size_;
            batch.thetas.insert(batch.thetas.end(), pool_.begin() + row * m, pool_.begin() + (row + 1) * m);
        } else {
            const auto c = sampler_.draw();
            batch.thetas.insert(batch.thetas.end(), c.begin(), c.end());
        }
    }
    batch.targets = engine_.forward(batch.thetas).data;
    return batch;
}

SampleGenerator make_generator(const RobotModel& model, std::string_view base, std::string_view end,
                               std::size_t batch_size, std::uint64_t seed, std::size_t num_configurations) {
    return SampleGenerator(model, base, end, batch_size, seed, num_configurations);
}

ParamEstimator::ParamEstimator(FkEngine engine, std::array<double, 6> initial, EstimatorOptions options)
    : engine_(std::move(engine)), params_(initial), options_(options) {
    if (engine_.param_count() != 6)
        throw ChainError("parameter estimation needs exactly one trainable joint on the chain, found " +
                         std::to_string(engine_.param_count() / 6));
}

double ParamEstimator::loss(std::span<const double> thetas, std::span<const Transform4<double>> targets) const {
    if (targets.size() != engine_.batch_size()) throw ShapeError("target count does not match batch size");
    const auto t = engine_.forward<double>(thetas, false, params_);
    double total = 0.0;
    for (std::size_t k = 0; k < targets.size(); ++k) {
        const auto& a = t.at(k, 0);
        const auto& b = targets[k];
        for (std::size_t i = 0; i < 3; ++i) total += (a(i, 3) - b(i, 3)) * (a(i, 3) - b(i, 3));
        total += options_.rotation_weight * phi5_squared(a, b);
    }
    return total / static_cast<double>(targets.size());
}

std::pair<double, std::array<double, 6>> ParamEstimator::loss_and_gradient(
    std::span<const double> thetas, std::span<const Transform4<double>> targets) const {
    using D = Dual<6>;
    if (targets.size() != engine_.batch_size()) throw ShapeError("target count does not match batch size");
    const std::vector<D> th(thetas.begin(), thetas.end());
    std::array<D, 6> p;
    for (std::size_t i = 0; i < 6; ++i) p[i] = lift<6>(params_[i], i);
    const auto t = engine_.forward<D>(th, false, p);

    D total(0.0);
    for (std::size_t k = 0; k < targets.size(); ++k) {
        const auto& a = t.at(k, 0);
        const auto& b = targets[k];
        for (std::size_t i = 0; i < 3; ++i) {
            const D d = a(i, 3) - b(i, 3);
            total += d * d;
        }
        total += phi5_squared(a, b.cast<D>()) * options_.rotation_weight;
    }
    total = total / static_cast<double>(targets.size());

    bool finite = std::isfinite(total.value);
    for (double g : total.grad) finite = finite && std::isfinite(g);
    if (!finite) throw NumericError("non-finite loss at parameters " + params_to_string(params_));
    return {total.value, total.grad};
}

ParamEstimator::StepResult ParamEstimator::step(std::span<const double> thetas,
                                                std::span<const Transform4<double>> targets) {
    const auto [value, grad] = loss_and_gradient(thetas, targets);
    double norm2 = 0.0;
    for (double g : grad) norm2 += g * g;
    ++iterations_;

    const double lr = options_.learning_rate;
    if (options_.optimizer == Optimizer::GradientDescent) {
        for (std::size_t i = 0; i < 6; ++i) params_[i] -= lr * grad[i];
    } else {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double t = static_cast<double>(iterations_);
        for (std::size_t i = 0; i < 6; ++i) {
            adam_m_[i] = b1 * adam_m_[i] + (1.0 - b1) * grad[i];
            adam_v_[i] = b2 * adam_v_[i] + (1.0 - b2) * grad[i] * grad[i];
            const double m_hat = adam_m_[i] / (1.0 - std::pow(b1, t));
            const double v_hat = adam_v_[i] / (1.0 - std::pow(b2, t));
            params_[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
    const double after = loss(thetas, targets);
    if (!std::isfinite(after)) throw NumericError("non-finite loss at parameters " + params_to_string(params_));
    (void)value;
    return {after, std::sqrt(norm2)};
}

IdentifyResult run_identification(const RobotModel& model, const IdentifyConfig& config) {
    const auto start = std::chrono::steady_clock::now();

    SampleGenerator generator(model, config.base, config.end, config.batch_size, config.seed,
                              config.num_configurations);
    const RobotModel substituted = substitute_link_with_joint(model, config.target_link);
    KinematicChain chain = extract_chain(substituted, config.base, config.end);
    if (chain.trainable_count() != 1)
        throw ChainError("link '" + config.target_link + "' is not on the chain from '" + config.base + "' to '" +
                         config.end + "'");

    FkEngine engine(chain, config.batch_size);
    const std::vector<double> hint = engine.initial_params();
    std::array<double, 6> init{};
    if (config.init == InitMode::Model) std::copy(hint.begin(), hint.end(), init.begin());

    ParamEstimator estimator(std::move(engine), init,
                             EstimatorOptions{config.learning_rate, config.optimizer, config.rotation_weight});

    IdentifyResult result;
    std::copy(hint.begin(), hint.end(), result.ground_truth.values.begin());
    std::vector<double> last_thetas;
    for (std::size_t s = 0; s < config.max_steps; ++s) {
        SampleGenerator::Batch batch = generator.next();
        const auto r = estimator.step(batch.thetas, batch.targets);
        result.loss_history.push_back(r.loss);
        result.final_loss = r.loss;
        result.steps = s + 1;
        last_thetas = std::move(batch.thetas);
        if (r.loss < config.epsilon || r.grad_norm < config.grad_epsilon) {
            result.status = IdentifyStatus::Converged;
            break;
        }
    }
    std::copy(estimator.params().begin(), estimator.params().end(), result.estimated.values.begin());

    // Errors are measured over the configuration pool, or the last batch when
    // the stream draws fresh configurations.
    const std::vector<double>& eval = generator.pool().empty() ? last_thetas : generator.pool();
    const std::size_t m = generator.engine().dof();
    const std::size_t count = m == 0 ? config.batch_size : eval.size() / m;
    if (count > 0 && (!eval.empty() || m == 0)) {
        const FkEngine truth_engine(generator.engine().chain(), count);
        const FkEngine fitted_engine(chain, count);
        const auto truth = truth_engine.forward(eval);
        const auto fitted = fitted_engine.forward<double>(eval, false, estimator.params());
        for (std::size_t k = 0; k < count; ++k) {
            const auto d = pose_difference(fitted.at(k, 0), truth.at(k, 0));
            for (std::size_t i = 0; i < 6; ++i) result.pose_error[i] = std::max(result.pose_error[i], d[i]);
        }
    }
    result.param_error =
        pose_difference(sixdof_to_transform(result.estimated), sixdof_to_transform(result.ground_truth));
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

std::string_view to_string(IdentifyStatus status) {
    return status == IdentifyStatus::Converged ? "converged" : "budget_exhausted";
}

}  // namespace fkdiff
