#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fkdiff/kinematics.hpp"

namespace fkdiff {

struct BenchEntry {
    std::size_t batch_size = 0;
    std::size_t iterations = 0;
    double seconds = 0.0;  ///< summed time inside the timed calls
    double ops_per_sec = 0.0;
};

struct BenchReport {
    std::vector<BenchEntry> entries;
    /// Per-sample sequential FK, one configuration per call.
    BenchEntry baseline;
    std::string machine;
    std::size_t threads = 1;
    /// What one op covers.
    std::string op_definition = "one configuration's final base-to-end transform; no pose extraction";
};

using EngineFactory = std::function<FkEngine(std::size_t batch_size)>;

struct BenchOptions {
    /// Minimum timed seconds per round.
    double min_seconds = 0.5;
    /// Rounds per measurement, interleaved across batch sizes and the
    /// baseline; each entry reports its fastest round.
    std::size_t rounds = 3;
    std::uint64_t seed = 0;
};

/**
 * Throughput of FkEngine::forward per batch size, plus the sequential
 * baseline on the same chain.
 *
 * Every round of every measurement discards three warm-up calls, then repeats
 * until both `min_seconds` of timed work and at least 10 calls have
 * accumulated. Inputs are drawn before each call, outside the timed region.
 * Interleaving the rounds spreads slow drift in machine load over all batch
 * sizes instead of penalising whichever ran last.
 */
BenchReport run_bench(const EngineFactory& factory, std::span<const std::size_t> batch_sizes,
                      const BenchOptions& options = {});

/// Straightforward per-sample FK: walks the chain joint by joint, rebuilding
/// each origin from its rpy and each joint motion from axis-angle, with
/// general 4x4 products. The reference point for the batched engine.
Transform4<double> sequential_fk(const KinematicChain& chain, std::span<const double> theta);

/// "<os> <arch>, <n> hardware threads, <compiler>"
std::string machine_descriptor();

}  // namespace fkdiff
