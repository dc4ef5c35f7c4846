#pragma once

#include <memory>
#include <ostream>

#include "iar/model.hpp"

namespace iar {

struct TrainHyper {
    int steps = 500;
    int batch_size = 8;
    double lr = 0.05;
    double momentum = 0.9;
    std::uint64_t seed = 0;

    void validate() const {
        if (steps < 1 || batch_size < 1) throw std::runtime_error("train: steps/batch >= 1");
        if (lr <= 0) throw std::runtime_error("train: lr must be > 0");
        if (momentum < 0 || momentum >= 1) throw std::runtime_error("train: momentum in [0,1)");
    }
};

struct TraceRow {
    int step = 0;
    double loss_type = 0.0;
    double loss_diff = 0.0;
};

struct TrainResult {
    std::vector<TraceRow> trace;
};

namespace detail {

// deterministic pairwise tree reduction, independent of any worker count
inline void tree_reduce(std::vector<std::unique_ptr<Grads>>& grads) {
    std::size_t active = grads.size();
    while (active > 1) {
        std::size_t out = 0;
        for (std::size_t i = 0; i + 1 < active; i += 2) {
            grads[i]->add(*grads[i + 1]);
            grads[out++] = std::move(grads[i]);
        }
        if (active % 2 == 1) grads[out++] = std::move(grads[active - 1]);
        active = out;
    }
}

}  // namespace detail

// SGD with momentum over the joint objective
//   mean(type CE) + lambda_diff * mean(diffusion loss).
// Class labels are dropped to NULL_CLASS with probability label_dropout when
// the model is conditional. Deterministic per (params, dataset, seed).
inline TrainResult train(const std::vector<CanonicalSequence>& dataset, ModelParams& params,
                         const DiffusionSchedule& schedule, const GuidanceConfig& guidance,
                         const TrainHyper& hyper, std::ostream* log = nullptr) {
    hyper.validate();
    schedule.validate();
    guidance.validate();
    if (dataset.empty()) throw std::runtime_error("train: empty dataset");
    const bool conditional = params.cfg.n_classes > 0;

    Rng order_rng(hyper.seed, 0xa11ce5ull);
    Rng drop_rng(hyper.seed, 0xd209ull);
    Rng noise_rng(hyper.seed, 0x9015eull);

    std::vector<int> perm(dataset.size());
    std::iota(perm.begin(), perm.end(), 0);
    order_rng.shuffle(perm);

    Grads velocity(params);
    TrainResult result;
    std::size_t cursor = 0;

    for (int step = 0; step < hyper.steps; ++step) {
        std::vector<SequenceExample> batch;
        std::vector<std::vector<NoiseDraw>> batch_draws;
        int n_type = 0, n_diff = 0;
        for (int b = 0; b < hyper.batch_size; ++b) {
            const CanonicalSequence& seq = dataset[perm[cursor]];
            cursor = (cursor + 1) % perm.size();
            SequenceExample ex;
            std::optional<int> label = seq.class_id;
            if (conditional && label && guidance.label_dropout > 0.0 &&
                drop_rng.uniform() < guidance.label_dropout) {
                label.reset();
            }
            ex.tokens = build_sequence(seq, conditional, label, params.vocab);
            ex.prefix_len = conditional ? 2 : 1;
            const int atoms = static_cast<int>(seq.tokens.size());
            std::vector<NoiseDraw> draws(atoms);
            for (auto& d : draws) {
                d.sigma = schedule.sample_sigma(noise_rng);
                d.eps = noise_rng.normal3();
            }
            n_type += atoms + 1;
            n_diff += atoms;
            batch.push_back(std::move(ex));
            batch_draws.push_back(std::move(draws));
        }

        const double w_type = 1.0 / n_type;
        const double w_diff = params.cfg.lambda_diff / n_diff;
        std::vector<std::unique_ptr<Grads>> grads;
        double sum_type = 0.0, sum_diff = 0.0;
        for (std::size_t b = 0; b < batch.size(); ++b) {
            auto g = std::make_unique<Grads>(params);
            const SequenceLoss loss =
                sequence_loss(batch[b], params, batch_draws[b], g.get(), w_type, w_diff);
            sum_type += loss.loss_type;
            sum_diff += loss.loss_diff;
            grads.push_back(std::move(g));
        }
        detail::tree_reduce(grads);

        const double mean_type = sum_type / n_type;
        const double mean_diff = sum_diff / n_diff;
        if (!std::isfinite(mean_type) || !std::isfinite(mean_diff)) {
            throw std::runtime_error("train: loss diverged (non-finite) at step " +
                                     std::to_string(step));
        }
        result.trace.push_back({step, mean_type, mean_diff});
        if (log && (step % 50 == 0 || step + 1 == hyper.steps)) {
            (*log) << "step " << step << " loss_type " << mean_type << " loss_diff " << mean_diff
                   << "\n";
        }

        auto prefs = params.param_refs();
        auto vrefs = velocity.buf.param_refs();
        auto grefs = grads[0]->buf.param_refs();
        for (std::size_t i = 0; i < prefs.size(); ++i) {
            for (std::ptrdiff_t k = 0; k < prefs[i].size; ++k) {
                vrefs[i].data[k] =
                    hyper.momentum * vrefs[i].data[k] - hyper.lr * grefs[i].data[k];
                prefs[i].data[k] += vrefs[i].data[k];
            }
        }
    }
    return result;
}

inline void write_trace_csv(std::ostream& out, const TrainResult& r) {
    out << "step,loss_type,loss_diff\n";
    char buf[96];
    for (const auto& row : r.trace) {
        std::snprintf(buf, sizeof(buf), "%d,%.12g,%.12g\n", row.step, row.loss_type,
                      row.loss_diff);
        out << buf;
    }
}

}  // namespace iar
