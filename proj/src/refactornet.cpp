#include "refactornet.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace refactornet {

using numkit::Mlp;
using numkit::Tape;
using numkit::Tensor;
using numkit::Var;

void RefactorModel::init(int feature_dim, int hidden, int out, uint64_t seed) {
    rng::Rng rng(seed);
    input_dim = feature_dim;
    out_dim = out;
    encoder_a.init(feature_dim, hidden, out, rng);
    encoder_c.init(feature_dim, hidden, out, rng);
}

Tensor RefactorModel::refactor(const Tensor& f) const {
    if (f.cols() != input_dim)
        throw std::invalid_argument("refactor input width does not match the encoders");
    return numkit::concat_cols(encoder_a.forward(f), encoder_c.forward(f));
}

std::vector<Tensor*> RefactorModel::params() {
    std::vector<Tensor*> out;
    for (Mlp* m : {&encoder_a, &encoder_c})
        for (Tensor* t : m->params()) out.push_back(t);
    return out;
}

dataio::ParamBlocks RefactorModel::to_blocks() const {
    dataio::ParamBlocks blocks;
    encoder_a.store("refactor.encoder_a", blocks);
    encoder_c.store("refactor.encoder_c", blocks);
    blocks["refactor.meta"] =
        Tensor::vector({static_cast<double>(input_dim), static_cast<double>(out_dim)});
    return blocks;
}

void RefactorModel::from_blocks(const dataio::ParamBlocks& blocks) {
    encoder_a.restore("refactor.encoder_a", blocks);
    encoder_c.restore("refactor.encoder_c", blocks);
    const auto& meta = blocks.at("refactor.meta");
    input_dim = static_cast<int>(meta.at(0));
    out_dim = static_cast<int>(meta.at(1));
}

double loss_action(const Tensor& a_enc, const Tensor& c_enc) {
    return std::max(0.0, numkit::cosine(a_enc, c_enc));
}

double loss_cooccurrence(const Tensor& a_enc, const Tensor& c_enc) {
    return 1.0 - numkit::cosine(a_enc, c_enc);
}

double loss_kl(const Tensor& c_enc) { return numkit::kl_unit_gaussian(c_enc); }

Var loss_action(Tape& tape, Var a_enc, Var c_enc) {
    return tape.relu(tape.cosine(a_enc, c_enc));
}

Var loss_cooccurrence(Tape& tape, Var a_enc, Var c_enc) {
    return tape.add_const(tape.scale(tape.cosine(a_enc, c_enc), -1.0), 1.0);
}

Var loss_kl(Tape& tape, Var c_enc) { return tape.kl_unit_gaussian(c_enc); }

double loss_refactor(const Tensor& action_feature, const Tensor& coupling_feature, double alpha,
                     const RefactorModel& model, double beta) {
    Tensor a_a = model.encoder_a.forward(action_feature);
    Tensor a_c = model.encoder_a.forward(coupling_feature);
    Tensor c_a = model.encoder_c.forward(action_feature);
    Tensor c_c = model.encoder_c.forward(coupling_feature);
    double decouple = loss_action(a_a, a_c) + loss_cooccurrence(c_a, c_c);
    double kl = 0.5 * (loss_kl(c_a) + loss_kl(c_c));
    return alpha * decouple + beta * kl;
}

namespace {

Tensor stack_rows(const std::vector<const Tensor*>& rows) {
    int c = rows.front()->size();
    Tensor out = Tensor::zeros({static_cast<int>(rows.size()), c});
    for (size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < c; ++j) out.at(static_cast<int>(i), j) = rows[i]->at(j);
    return out;
}

struct EncoderLeaves {
    Mlp::TapeVars a, c;
};

EncoderLeaves encoder_leaves(Tape& tape, const RefactorModel& model) {
    return {model.encoder_a.leaves(tape), model.encoder_c.leaves(tape)};
}

void collect_mlp_grads(Tape& tape, const Mlp::TapeVars& vars, std::vector<Tensor>& grads) {
    grads.push_back(tape.grad(vars.w1));
    grads.push_back(tape.grad(vars.b1));
    grads.push_back(tape.grad(vars.w2));
    grads.push_back(tape.grad(vars.b2));
}

// batch mean of alpha * (L_A + L_C) over a pair subset, on an existing tape
Var pair_decoupling_loss(Tape& tape, const EncoderLeaves& enc,
                         const std::vector<sampler::ActionSample>& actions,
                         const std::vector<sampler::SamplePair>& pairs,
                         const std::vector<int>& subset) {
    std::vector<const Tensor*> a_rows, c_rows;
    std::vector<double> alpha;
    for (int idx : subset) {
        const auto& p = pairs[static_cast<size_t>(idx)];
        a_rows.push_back(&actions[static_cast<size_t>(p.action_index)].feature);
        c_rows.push_back(&p.coupling_feature);
        alpha.push_back(p.similarity / subset.size());
    }
    Var xa = tape.leaf(stack_rows(a_rows));
    Var xc = tape.leaf(stack_rows(c_rows));
    Var enc_a_a = Mlp::forward(tape, enc.a, xa);
    Var enc_a_c = Mlp::forward(tape, enc.a, xc);
    Var enc_c_a = Mlp::forward(tape, enc.c, xa);
    Var enc_c_c = Mlp::forward(tape, enc.c, xc);
    Var l_a = tape.relu(tape.rows_cosine(enc_a_a, enc_a_c));
    Var l_c = tape.add_const(tape.scale(tape.rows_cosine(enc_c_a, enc_c_c), -1.0), 1.0);
    return tape.add(tape.weighted_sum(l_a, alpha), tape.weighted_sum(l_c, alpha));
}

}  // namespace

TrainHistory train_stage1(const std::vector<sampler::ActionSample>& actions,
                          const std::vector<sampler::SamplePair>& pairs, RefactorModel& model,
                          const RefactorConfig& cfg) {
    if (pairs.empty()) throw std::invalid_argument("stage-1 training needs a nonempty pair set");
    TrainHistory history;
    numkit::Adam adam;
    adam.lr = cfg.lr;
    rng::Rng rng(cfg.seed);

    std::vector<int> order(pairs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < cfg.stage1_epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        int n_batches = 0;
        for (size_t off = 0; off < order.size(); off += static_cast<size_t>(cfg.batch_size)) {
            std::vector<int> batch(order.begin() + static_cast<long>(off),
                                   order.begin() +
                                       static_cast<long>(std::min(off + cfg.batch_size, order.size())));
            Tape tape;
            EncoderLeaves enc = encoder_leaves(tape, model);
            Var loss = pair_decoupling_loss(tape, enc, actions, pairs, batch);
            tape.backward(loss);
            std::vector<Tensor> grads;
            collect_mlp_grads(tape, enc.a, grads);
            collect_mlp_grads(tape, enc.c, grads);
            adam.step(model.params(), grads);
            epoch_loss += tape.value(loss).at(0);
            ++n_batches;
        }
        history.epoch_loss.push_back(epoch_loss / n_batches);
    }
    return history;
}

void calibrate_encoders(RefactorModel& model, const std::vector<sampler::ActionSample>& actions) {
    if (actions.empty()) throw std::invalid_argument("calibration needs a nonempty sample set");
    double target = std::sqrt(static_cast<double>(model.out_dim));
    for (numkit::Mlp* enc : {&model.encoder_a, &model.encoder_c}) {
        double mean_norm = 0.0;
        for (const auto& s : actions) {
            Tensor out = enc->forward(s.feature);
            double sq = 0.0;
            for (double v : out.data) sq += v * v;
            mean_norm += std::sqrt(sq);
        }
        mean_norm /= static_cast<double>(actions.size());
        if (mean_norm <= 0.0) continue;
        double k = target / mean_norm;
        for (double& v : enc->w2.data) v *= k;
        for (double& v : enc->b2.data) v *= k;
    }
}

TrainHistory train_stage2(const dataio::Corpus& corpus,
                          const std::vector<sampler::ActionSample>& actions,
                          const std::vector<sampler::SamplePair>& pairs, RefactorModel* model,
                          detector::DetectorModel& det, const detector::DetectorConfig& det_cfg,
                          const Stage2Options& opts) {
    if (model && det.feature_dim != model->refactored_dim())
        throw std::invalid_argument("detector width does not match the refactored features");
    if (!model && !corpus.videos.empty() && det.feature_dim != corpus.videos[0].feature_dim)
        throw std::invalid_argument("detector width does not match the raw features");

    bool encoders_trainable = model != nullptr && !opts.freeze_encoders;
    TrainHistory history;
    numkit::Adam adam;
    adam.lr = opts.lr;
    rng::Rng rng(opts.seed);

    // pairs grouped by video for the per-video refactor loss term
    std::vector<std::vector<int>> video_pairs(corpus.videos.size());
    if (encoders_trainable)
        for (size_t i = 0; i < pairs.size(); ++i) {
            int v = actions[static_cast<size_t>(pairs[i].action_index)].video_index;
            video_pairs[static_cast<size_t>(v)].push_back(static_cast<int>(i));
        }

    std::vector<int> order(corpus.videos.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        // during warmup only the detector heads move, so the encoders are not
        // dragged around by the still-random boundary and detection errors
        bool train_encoders = encoders_trainable && epoch >= opts.warmup_epochs;
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (int v : order) {
            const auto& video = corpus.videos[static_cast<size_t>(v)];
            const auto& ann = corpus.annotations[static_cast<size_t>(v)];
            int l = video.num_snippets;

            Tape tape;
            EncoderLeaves enc;
            Var features;  // what the detector sees
            Var cooccurrence;
            if (train_encoders) {
                enc = encoder_leaves(tape, *model);
                Var x = tape.leaf(video.features);
                Var action_part = Mlp::forward(tape, enc.a, x);
                cooccurrence = Mlp::forward(tape, enc.c, x);
                features = tape.concat_cols(action_part, cooccurrence);
            } else if (model) {
                features = tape.leaf(model->refactor(video.features));
            } else {
                features = tape.leaf(video.features);
            }

            Mlp::TapeVars bp = det.boundary.leaves(tape);
            Mlp::TapeVars loc = det.loc.leaves(tape);
            Mlp::TapeVars cls = det.cls.leaves(tape);
            Mlp::TapeVars com = det.com.leaves(tape);

            Var logits = Mlp::forward(tape, bp, features);
            auto labels = detector::make_boundary_labels(ann, l, corpus.snippet_duration_s,
                                                         det_cfg.boundary_expand_ratio);
            if (!labels.start_has_positives || !labels.end_has_positives)
                std::cerr << "note: " << video.video_id
                          << " has no boundary positives; loss uses negatives only\n";
            Var l_p = detector::boundary_loss(tape, tape.col(logits, 0), tape.col(logits, 1),
                                              labels, det_cfg.gamma);
            std::vector<Var> terms{l_p};

            // proposals from the current boundary responses, plus the ground
            // truth spans so regression always sees positives
            const Tensor& z = tape.value(logits);
            std::vector<double> p_start(static_cast<size_t>(l)), p_end(static_cast<size_t>(l));
            for (int i = 0; i < l; ++i) {
                p_start[static_cast<size_t>(i)] = 1.0 / (1.0 + std::exp(-z.at(i, 0)));
                p_end[static_cast<size_t>(i)] = 1.0 / (1.0 + std::exp(-z.at(i, 1)));
            }
            double thr_s = det_cfg.peak_threshold_rel *
                           *std::max_element(p_start.begin(), p_start.end());
            double thr_e =
                det_cfg.peak_threshold_rel * *std::max_element(p_end.begin(), p_end.end());
            int max_dur = det_cfg.max_duration_snippets > 0 ? det_cfg.max_duration_snippets : l;
            auto proposals = detector::generate_proposals(video.video_id, p_start, p_end,
                                                          std::min(thr_s, thr_e),
                                                          det_cfg.min_duration_snippets, max_dur);
            std::stable_sort(proposals.begin(), proposals.end(),
                             [](const auto& a, const auto& b) {
                                 return a.boundary_score > b.boundary_score;
                             });
            if (static_cast<int>(proposals.size()) > opts.max_train_proposals)
                proposals.resize(static_cast<size_t>(opts.max_train_proposals));
            if (opts.append_gt_proposals) for (const auto& inst : ann.instances) {
                detector::Proposal p;
                p.video_id = video.video_id;
                p.start_idx = std::clamp(
                    static_cast<int>(std::floor(inst.t_start / corpus.snippet_duration_s)), 0,
                    l - 2);
                p.end_idx = std::clamp(
                    static_cast<int>(std::ceil(inst.t_end / corpus.snippet_duration_s)) - 1,
                    p.start_idx + 1, l - 1);
                p.boundary_score = 1.0;
                proposals.push_back(std::move(p));
            }

            if (!proposals.empty()) {
                auto targets = detector::assign_targets(proposals, ann, corpus.snippet_duration_s,
                                                        det.n_classes, det_cfg.fg_tiou);
                std::vector<Var> pooled;
                pooled.reserve(proposals.size());
                for (const auto& p : proposals)
                    pooled.push_back(
                        tape.roi_max_pool(features, p.start_idx, p.end_idx, det.roi_bins));
                Var pooled_mat = tape.vstack(pooled);
                Var class_logits = Mlp::forward(tape, cls, pooled_mat);
                Var com_scores = tape.col(Mlp::forward(tape, com, pooled_mat), 0);
                Var offsets = Mlp::forward(tape, loc, pooled_mat);
                terms.push_back(
                    detector::detection_loss(tape, class_logits, com_scores, offsets, targets,
                                             det_cfg));
            }

            if (train_encoders) {
                if (opts.use_kl)
                    terms.push_back(tape.scale(tape.mean(tape.rows_kl_unit_gaussian(cooccurrence)),
                                               opts.beta));
                const auto& vp = video_pairs[static_cast<size_t>(v)];
                if (!vp.empty())
                    terms.push_back(pair_decoupling_loss(tape, enc, actions, pairs, vp));
            }

            Var total = tape.add_n(terms);
            tape.backward(total);

            std::vector<Tensor*> params;
            std::vector<Tensor> grads;
            if (encoders_trainable) {
                // encoder slots stay in place across the warmup boundary so the
                // optimizer state keeps its alignment
                for (Tensor* t : model->params()) params.push_back(t);
                if (train_encoders) {
                    collect_mlp_grads(tape, enc.a, grads);
                    collect_mlp_grads(tape, enc.c, grads);
                } else {
                    for (Tensor* t : model->params()) grads.push_back(Tensor::zeros(t->shape));
                }
            }
            for (Tensor* t : det.params()) params.push_back(t);
            collect_mlp_grads(tape, bp, grads);
            collect_mlp_grads(tape, loc, grads);
            collect_mlp_grads(tape, cls, grads);
            collect_mlp_grads(tape, com, grads);
            adam.step(params, grads);
            epoch_loss += tape.value(total).at(0);
        }
        history.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    }
    return history;
}

}  // namespace refactornet
