#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "bdlm/adam.hpp"
#include "bdlm/drs.hpp"
#include "bdlm/lm.hpp"
#include "bdlm/mat.hpp"

namespace bdlm::bridge {

// Information sharing module: embedding stores written by value from
// whichever side ran last, read as constants inside the mutual losses.
struct SharingModule {
    Mat users, items;
};

SharingModule init_sharing(const drs::Pretrained& snapshot);

enum class Side { llm, drs };

using EntityBatch = std::vector<std::pair<int64_t, int64_t>>;  // (user, item)

// mean over batch of [ MSE(u_e, M_u) + MSE(i_e, M_i) ]; MSE averages over
// the d dimensions; M rows are constants.
double mutual_loss(Side side, const EntityBatch& batch, const lm::Params* lmp,
                   const drs::Params* drsp, const SharingModule& M);

// Overwrites the M rows of batch entities with the side's current embedding
// rows; rows outside the batch keep their values.
void write_back(SharingModule& M, Side side, const EntityBatch& batch, const lm::Params* lmp,
                const drs::Params* drsp);

// Eq-style composite for logging; optimization applies the per-side
// augmented losses separately.
double total_loss(double l_llm, double l_drs, double l_m1, double l_m2, double gamma);

struct JointConfig {
    double gamma = 0.1;
    double eta1 = 1e-4;  // LM learning rate
    double eta2 = 1e-4;  // DRS learning rate
    int64_t batch_size = 16;
    int64_t max_epochs = 50;
    int64_t patience = 3;
    // Algorithm-literal order writes M before the gradient step; the
    // post-update variant is available behind this switch.
    bool writeback_post_update = false;
    uint64_t seed = 1;
    // resume support: first epoch index to run and the best validation
    // metric reached before the resume point
    int64_t start_epoch = 0;
    double initial_best = -1.0;
};

struct StepLosses {
    double l_llm = 0.0, l_drs = 0.0, l_m1 = 0.0, l_m2 = 0.0;
    bool finite() const;
};

// One LM half-step: SFT loss (+ gamma * mutual when M given), optional M
// write-back in the configured order, Adam update. Returns (L_llm, L_m1).
std::pair<double, double> lm_half_step(const std::vector<lm::SftExample>& batch, lm::Params& lmp,
                                       lm::Grads& grads, Adam& opt, double gamma, SharingModule* M,
                                       bool writeback_post_update);

// One DRS half-step: fused prediction against the frozen LM's top features,
// BCE (+ gamma * mutual), optional write-back, Adam update.
std::pair<double, double> drs_half_step(const std::vector<lm::SftExample>& batch,
                                        drs::Params& drsp, drs::Grads& grads, Adam& opt,
                                        const lm::Params& lmp, const drs::LgcnGraph* graph,
                                        double gamma, SharingModule* M,
                                        bool writeback_post_update);

struct JointState {
    lm::Params* lmp = nullptr;
    drs::Params* drsp = nullptr;
    SharingModule* M = nullptr;
    Adam* opt_lm = nullptr;
    Adam* opt_drs = nullptr;
    const drs::LgcnGraph* graph = nullptr;  // only for lightgcn
    int64_t step = 0;
};

// Full alternating step in pseudocode order: LM loss against current M,
// write-back, LM update; then DRS loss with the just-updated frozen LM,
// write-back, DRS update.
StepLosses joint_step(const std::vector<lm::SftExample>& batch, JointState& state,
                      const JointConfig& cfg, lm::Grads& lm_grads, drs::Grads& drs_grads);

struct StepRecord {
    int64_t step = 0;
    StepLosses losses;
    double gamma = 0.0;
};

struct ValidScore {
    double hr1_llm = 0.0;
    double hr1_drs = 0.0;
};

struct EpochRecord {
    int64_t epoch = 0;
    ValidScore valid;
    double best_metric = 0.0;
    const lm::Params* lmp = nullptr;
    const drs::Params* drsp = nullptr;
    const SharingModule* sharing = nullptr;
};

struct JointResult {
    lm::Params best_lm;
    drs::Params best_drs;
    SharingModule sharing;  // final state
    std::vector<ValidScore> valid_curve;
    int64_t best_epoch = -1;
    int64_t steps = 0;
    bool diverged = false;
};

// Step 3 of the training procedure: epochs over the shuffled unified sample
// set, early stop on validation HR@1 (sum of both sides), best-validation
// snapshots of both sides returned. On a non-finite loss the last good
// snapshots are returned with `diverged` set.
JointResult train_joint(
    const std::vector<lm::SftExample>& examples, lm::Params lm0, drs::Params drs0,
    SharingModule M0, const corpus::InteractionMatrix& train, const JointConfig& cfg,
    const std::function<ValidScore(const lm::Params&, const drs::Params&)>& validate,
    const std::function<void(const StepRecord&)>& on_step = {},
    const std::function<void(const EpochRecord&)>& on_epoch = {});

// Sequential trainers reusing the half-steps with no sharing module; these
// drive the no-joint-learning ablation and the decoupling checks.
struct SideConfig {
    double lr = 1e-4;
    int64_t batch_size = 16;
    int64_t max_epochs = 50;
    int64_t patience = 3;
    uint64_t seed = 1;
};

lm::Params train_lm_only(const std::vector<lm::SftExample>& examples, lm::Params lm0,
                         const SideConfig& cfg,
                         const std::function<double(const lm::Params&)>& validate);

drs::Params train_drs_fused(const std::vector<lm::SftExample>& examples, drs::Params drs0,
                            const lm::Params& frozen_lm, const corpus::InteractionMatrix& train,
                            const SideConfig& cfg,
                            const std::function<double(const drs::Params&)>& validate);

}  // namespace bdlm::bridge
