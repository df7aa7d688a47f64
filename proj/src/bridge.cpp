#include "bdlm/bridge.hpp"

#include <algorithm>
#include <cmath>

#include "bdlm/error.hpp"
#include "bdlm/rng.hpp"

namespace bdlm::bridge {

SharingModule init_sharing(const drs::Pretrained& snapshot) {
    require(snapshot.users.rows > 0 && snapshot.items.rows > 0,
            "init_sharing: empty pretrained snapshot");
    return {snapshot.users, snapshot.items};
}

namespace {

const double* user_row(Side side, const lm::Params* lmp, const drs::Params* drsp, int64_t u) {
    return side == Side::llm ? lmp->embed.row(lmp->entity_row_user(u)) : drsp->user_emb.row(u);
}
const double* item_row(Side side, const lm::Params* lmp, const drs::Params* drsp, int64_t i) {
    return side == Side::llm ? lmp->embed.row(lmp->entity_row_item(i)) : drsp->item_emb.row(i);
}

int64_t side_dim(Side side, const lm::Params* lmp, const drs::Params* drsp) {
    return side == Side::llm ? lmp->cfg.d_model : drsp->d;
}

double mse(const double* a, const double* b, int64_t d) {
    double acc = 0.0;
    for (int64_t c = 0; c < d; ++c) {
        double v = a[c] - b[c];
        acc += v * v;
    }
    return acc / static_cast<double>(d);
}

}  // namespace

double mutual_loss(Side side, const EntityBatch& batch, const lm::Params* lmp,
                   const drs::Params* drsp, const SharingModule& M) {
    require(!batch.empty(), "mutual_loss: empty batch");
    int64_t d = side_dim(side, lmp, drsp);
    require(M.users.cols == d && M.items.cols == d, "mutual_loss: dimension mismatch with M");
    double total = 0.0;
    for (const auto& [u, i] : batch) {
        total += mse(user_row(side, lmp, drsp, u), M.users.row(u), d);
        total += mse(item_row(side, lmp, drsp, i), M.items.row(i), d);
    }
    return total / static_cast<double>(batch.size());
}

void write_back(SharingModule& M, Side side, const EntityBatch& batch, const lm::Params* lmp,
                const drs::Params* drsp) {
    int64_t d = side_dim(side, lmp, drsp);
    require(M.users.cols == d && M.items.cols == d, "write_back: dimension mismatch with M");
    for (const auto& [u, i] : batch) {
        const double* ur = user_row(side, lmp, drsp, u);
        std::copy(ur, ur + d, M.users.row(u));
        const double* ir = item_row(side, lmp, drsp, i);
        std::copy(ir, ir + d, M.items.row(i));
    }
}

double total_loss(double l_llm, double l_drs, double l_m1, double l_m2, double gamma) {
    return l_llm + l_drs + gamma * (l_m1 + l_m2);
}

bool StepLosses::finite() const {
    return std::isfinite(l_llm) && std::isfinite(l_drs) && std::isfinite(l_m1) &&
           std::isfinite(l_m2);
}

namespace {

EntityBatch entity_pairs(const std::vector<lm::SftExample>& batch) {
    EntityBatch pairs;
    pairs.reserve(batch.size());
    for (const auto& ex : batch) pairs.emplace_back(ex.user, ex.item);
    return pairs;
}

// gamma * d/d(emb) of the mean-MSE mutual loss, accumulated per batch
// occurrence
void add_mutual_grad_lm(const EntityBatch& batch, const lm::Params& lmp, const SharingModule& M,
                        double gamma, lm::Grads& grads) {
    int64_t d = lmp.cfg.d_model;
    double coef = gamma * 2.0 / (static_cast<double>(batch.size()) * static_cast<double>(d));
    for (const auto& [u, i] : batch) {
        const double* ur = lmp.embed.row(lmp.entity_row_user(u));
        const double* mu = M.users.row(u);
        double* gu = grads.embed.row(lmp.entity_row_user(u));
        for (int64_t c = 0; c < d; ++c) gu[c] += coef * (ur[c] - mu[c]);
        const double* ir = lmp.embed.row(lmp.entity_row_item(i));
        const double* mi = M.items.row(i);
        double* gi = grads.embed.row(lmp.entity_row_item(i));
        for (int64_t c = 0; c < d; ++c) gi[c] += coef * (ir[c] - mi[c]);
    }
}

void add_mutual_grad_drs(const EntityBatch& batch, const drs::Params& drsp, const SharingModule& M,
                         double gamma, drs::Grads& grads) {
    int64_t d = drsp.d;
    double coef = gamma * 2.0 / (static_cast<double>(batch.size()) * static_cast<double>(d));
    for (const auto& [u, i] : batch) {
        const double* ur = drsp.user_emb.row(u);
        const double* mu = M.users.row(u);
        double* gu = grads.user_emb.row(u);
        for (int64_t c = 0; c < d; ++c) gu[c] += coef * (ur[c] - mu[c]);
        const double* ir = drsp.item_emb.row(i);
        const double* mi = M.items.row(i);
        double* gi = grads.item_emb.row(i);
        for (int64_t c = 0; c < d; ++c) gi[c] += coef * (ir[c] - mi[c]);
    }
}

}  // namespace

std::pair<double, double> lm_half_step(const std::vector<lm::SftExample>& batch, lm::Params& lmp,
                                       lm::Grads& grads, Adam& opt, double gamma, SharingModule* M,
                                       bool writeback_post_update) {
    grads.zero();
    double l_llm = lm::sft_loss_and_grads(batch, lmp, grads);
    double l_m1 = 0.0;
    EntityBatch pairs;
    if (M) {
        pairs = entity_pairs(batch);
        l_m1 = mutual_loss(Side::llm, pairs, &lmp, nullptr, *M);
        if (gamma != 0.0) add_mutual_grad_lm(pairs, lmp, *M, gamma, grads);
        if (!writeback_post_update) write_back(*M, Side::llm, pairs, &lmp, nullptr);
    }
    opt.step(lmp.param_views(), grads.views());
    if (M && writeback_post_update) write_back(*M, Side::llm, pairs, &lmp, nullptr);
    return {l_llm, l_m1};
}

std::pair<double, double> drs_half_step(const std::vector<lm::SftExample>& batch,
                                        drs::Params& drsp, drs::Grads& grads, Adam& opt,
                                        const lm::Params& lmp, const drs::LgcnGraph* graph,
                                        double gamma, SharingModule* M,
                                        bool writeback_post_update) {
    require(lmp.cfg.d_model == drsp.d, "drs width must equal the LM width");
    int64_t n = static_cast<int64_t>(batch.size());
    grads.zero();

    // frozen LM features, fanned out across the batch
    std::vector<Vec> features(batch.size());
#pragma omp parallel for schedule(static) if (n > 1)
    for (int64_t k = 0; k < n; ++k) features[k] = lm::top_feature(batch[k].prompt, lmp);

    Mat uprop, iprop, duprop, diprop;
    const Mat *up = nullptr, *ip = nullptr;
    if (drsp.kind == drs::Kind::lightgcn) {
        require(graph != nullptr, "lightgcn needs the train graph");
        drs::lgcn_propagate(drsp.user_emb, drsp.item_emb, *graph, drsp.lgcn_layers, uprop, iprop);
        up = &uprop;
        ip = &iprop;
        duprop.resize(drsp.n_users, drsp.d);
        diprop.resize(drsp.n_items, drsp.d);
    }

    double l_drs = 0.0;
    drs::FusedCache cache;
    Vec dfeat(static_cast<size_t>(2 * drsp.d));
    for (int64_t k = 0; k < n; ++k) {
        const auto& ex = batch[k];
        Vec feat = drs::drs_feature(drsp, ex.user, ex.item, up, ip);
        double yhat = drs::fused_forward(drsp, features[k], feat, cache);
        l_drs += drs::drs_loss(yhat, ex.label);
        double dz = (yhat - static_cast<double>(ex.label)) / static_cast<double>(n);
        std::fill(dfeat.begin(), dfeat.end(), 0.0);
        drs::fused_backward(drsp, cache, dz, grads, dfeat);
        if (drsp.kind == drs::Kind::lightgcn) {
            for (int64_t c = 0; c < drsp.d; ++c) {
                duprop(ex.user, c) += dfeat[c];
                diprop(ex.item, c) += dfeat[drsp.d + c];
            }
        } else {
            for (int64_t c = 0; c < drsp.d; ++c) {
                grads.user_emb(ex.user, c) += dfeat[c];
                grads.item_emb(ex.item, c) += dfeat[drsp.d + c];
            }
        }
    }
    l_drs /= static_cast<double>(n);
    if (drsp.kind == drs::Kind::lightgcn) {
        Mat du, di;
        drs::lgcn_propagate(duprop, diprop, *graph, drsp.lgcn_layers, du, di);
        for (int64_t k = 0; k < du.size(); ++k) grads.user_emb.a[k] += du.a[k];
        for (int64_t k = 0; k < di.size(); ++k) grads.item_emb.a[k] += di.a[k];
    }

    double l_m2 = 0.0;
    EntityBatch pairs;
    if (M) {
        pairs = entity_pairs(batch);
        l_m2 = mutual_loss(Side::drs, pairs, nullptr, &drsp, *M);
        if (gamma != 0.0) add_mutual_grad_drs(pairs, drsp, *M, gamma, grads);
        if (!writeback_post_update) write_back(*M, Side::drs, pairs, nullptr, &drsp);
    }
    opt.step(drsp.param_views(), grads.views());
    if (M && writeback_post_update) write_back(*M, Side::drs, pairs, nullptr, &drsp);
    return {l_drs, l_m2};
}

StepLosses joint_step(const std::vector<lm::SftExample>& batch, JointState& state,
                      const JointConfig& cfg, lm::Grads& lm_grads, drs::Grads& drs_grads) {
    require(!batch.empty(), "joint_step: empty batch");
    StepLosses losses;
    auto [l_llm, l_m1] = lm_half_step(batch, *state.lmp, lm_grads, *state.opt_lm, cfg.gamma,
                                      state.M, cfg.writeback_post_update);
    losses.l_llm = l_llm;
    losses.l_m1 = l_m1;
    auto [l_drs, l_m2] = drs_half_step(batch, *state.drsp, drs_grads, *state.opt_drs, *state.lmp,
                                       state.graph, cfg.gamma, state.M, cfg.writeback_post_update);
    losses.l_drs = l_drs;
    losses.l_m2 = l_m2;
    ++state.step;
    return losses;
}

namespace {

std::vector<std::vector<lm::SftExample>> make_batches(const std::vector<lm::SftExample>& examples,
                                                      int64_t batch_size, uint64_t seed,
                                                      int64_t epoch) {
    std::vector<size_t> order(examples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(seed, "shuffle", static_cast<uint64_t>(epoch)));
    rng.shuffle(order);
    std::vector<std::vector<lm::SftExample>> batches;
    for (size_t start = 0; start < order.size(); start += batch_size) {
        size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
        std::vector<lm::SftExample> b;
        b.reserve(end - start);
        for (size_t k = start; k < end; ++k) b.push_back(examples[order[k]]);
        batches.push_back(std::move(b));
    }
    return batches;
}

}  // namespace

JointResult train_joint(
    const std::vector<lm::SftExample>& examples, lm::Params lm0, drs::Params drs0,
    SharingModule M0, const corpus::InteractionMatrix& train, const JointConfig& cfg,
    const std::function<ValidScore(const lm::Params&, const drs::Params&)>& validate,
    const std::function<void(const StepRecord&)>& on_step,
    const std::function<void(const EpochRecord&)>& on_epoch) {
    require(!examples.empty(), "train_joint: no training examples");
    JointResult res;
    lm::Params lmp = std::move(lm0);
    drs::Params drsp = std::move(drs0);
    SharingModule M = std::move(M0);
    Adam opt_lm(cfg.eta1), opt_drs(cfg.eta2);
    lm::Grads lm_grads(lmp);
    drs::Grads drs_grads(drsp);
    drs::LgcnGraph graph;
    if (drsp.kind == drs::Kind::lightgcn) graph = drs::build_graph(train);

    JointState state{&lmp, &drsp, &M, &opt_lm, &opt_drs,
                     drsp.kind == drs::Kind::lightgcn ? &graph : nullptr, 0};

    double best_metric = cfg.initial_best;
    int64_t bad_epochs = 0;
    for (int64_t epoch = cfg.start_epoch; epoch < cfg.max_epochs; ++epoch) {
        for (auto& batch : make_batches(examples, cfg.batch_size, cfg.seed, epoch)) {
            StepLosses losses = joint_step(batch, state, cfg, lm_grads, drs_grads);
            if (on_step) on_step({state.step, losses, cfg.gamma});
            if (!losses.finite()) {
                res.diverged = true;
                if (res.best_epoch < 0) {
                    res.best_lm = lmp;
                    res.best_drs = drsp;
                }
                res.sharing = std::move(M);
                res.steps = state.step;
                return res;
            }
        }
        ValidScore v = validate ? validate(lmp, drsp) : ValidScore{};
        res.valid_curve.push_back(v);
        double metric = v.hr1_llm + v.hr1_drs;
        if (metric > best_metric) {
            best_metric = metric;
            res.best_epoch = epoch;
            res.best_lm = lmp;
            res.best_drs = drsp;
            bad_epochs = 0;
        } else if (++bad_epochs > cfg.patience) {
            if (on_epoch) on_epoch({epoch, v, best_metric, &lmp, &drsp, &M});
            break;
        }
        if (on_epoch) on_epoch({epoch, v, best_metric, &lmp, &drsp, &M});
    }
    if (res.best_epoch < 0) {
        res.best_lm = std::move(lmp);
        res.best_drs = std::move(drsp);
    }
    res.sharing = std::move(M);
    res.steps = state.step;
    return res;
}

lm::Params train_lm_only(const std::vector<lm::SftExample>& examples, lm::Params lm0,
                         const SideConfig& cfg,
                         const std::function<double(const lm::Params&)>& validate) {
    require(!examples.empty(), "train_lm_only: no training examples");
    lm::Params lmp = std::move(lm0);
    lm::Grads grads(lmp);
    Adam opt(cfg.lr);
    lm::Params best = lmp;
    double best_metric = -1.0;
    int64_t bad = 0;
    for (int64_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        for (auto& batch : make_batches(examples, cfg.batch_size, cfg.seed, epoch)) {
            auto [l, _] = lm_half_step(batch, lmp, grads, opt, 0.0, nullptr, false);
            require(std::isfinite(l), "train_lm_only diverged: non-finite loss");
        }
        double metric = validate ? validate(lmp) : 0.0;
        if (metric > best_metric) {
            best_metric = metric;
            best = lmp;
            bad = 0;
        } else if (++bad > cfg.patience) {
            break;
        }
    }
    return best;
}

drs::Params train_drs_fused(const std::vector<lm::SftExample>& examples, drs::Params drs0,
                            const lm::Params& frozen_lm, const corpus::InteractionMatrix& train,
                            const SideConfig& cfg,
                            const std::function<double(const drs::Params&)>& validate) {
    require(!examples.empty(), "train_drs_fused: no training examples");
    drs::Params drsp = std::move(drs0);
    drs::Grads grads(drsp);
    Adam opt(cfg.lr);
    drs::LgcnGraph graph;
    if (drsp.kind == drs::Kind::lightgcn) graph = drs::build_graph(train);
    const drs::LgcnGraph* gptr = drsp.kind == drs::Kind::lightgcn ? &graph : nullptr;
    drs::Params best = drsp;
    double best_metric = -1.0;
    int64_t bad = 0;
    for (int64_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        for (auto& batch : make_batches(examples, cfg.batch_size, cfg.seed, epoch)) {
            auto [l, _] =
                drs_half_step(batch, drsp, grads, opt, frozen_lm, gptr, 0.0, nullptr, false);
            require(std::isfinite(l), "train_drs_fused diverged: non-finite loss");
        }
        double metric = validate ? validate(drsp) : 0.0;
        if (metric > best_metric) {
            best_metric = metric;
            best = drsp;
            bad = 0;
        } else if (++bad > cfg.patience) {
            break;
        }
    }
    return best;
}

}  // namespace bdlm::bridge
