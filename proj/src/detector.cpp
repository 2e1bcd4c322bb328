#include "detector.hpp"

#include <algorithm>
#include <cmath>

namespace detector {

void DetectorModel::init(int feat_dim, int hidden, int classes, int bins, uint64_t seed) {
    rng::Rng rng(seed);
    feature_dim = feat_dim;
    n_classes = classes;
    roi_bins = bins;
    boundary.init(feat_dim, hidden, 2, rng);
    int pooled = bins * feat_dim;
    loc.init(pooled, hidden, 2, rng);
    cls.init(pooled, hidden, classes + 1, rng);
    com.init(pooled, hidden, 1, rng);
}

std::vector<numkit::Tensor*> DetectorModel::params() {
    std::vector<numkit::Tensor*> out;
    for (numkit::Mlp* m : {&boundary, &loc, &cls, &com})
        for (numkit::Tensor* t : m->params()) out.push_back(t);
    return out;
}

dataio::ParamBlocks DetectorModel::to_blocks() const {
    dataio::ParamBlocks blocks;
    boundary.store("detector.boundary", blocks);
    loc.store("detector.loc", blocks);
    cls.store("detector.cls", blocks);
    com.store("detector.com", blocks);
    blocks["detector.meta"] = numkit::Tensor::vector(
        {static_cast<double>(feature_dim), static_cast<double>(n_classes),
         static_cast<double>(roi_bins)});
    return blocks;
}

void DetectorModel::from_blocks(const dataio::ParamBlocks& blocks) {
    boundary.restore("detector.boundary", blocks);
    loc.restore("detector.loc", blocks);
    cls.restore("detector.cls", blocks);
    com.restore("detector.com", blocks);
    const auto& meta = blocks.at("detector.meta");
    feature_dim = static_cast<int>(meta.at(0));
    n_classes = static_cast<int>(meta.at(1));
    roi_bins = static_cast<int>(meta.at(2));
}

std::pair<std::vector<double>, std::vector<double>> predict_boundaries(
    const numkit::Tensor& features, const numkit::Mlp& boundary) {
    if (features.cols() != boundary.input_dim())
        throw std::invalid_argument("boundary predictor width does not match features");
    numkit::Tensor probs = numkit::sigmoid(boundary.forward(features));
    int l = features.rows();
    std::vector<double> p_start(static_cast<size_t>(l)), p_end(static_cast<size_t>(l));
    for (int i = 0; i < l; ++i) {
        p_start[static_cast<size_t>(i)] = probs.at(i, 0);
        p_end[static_cast<size_t>(i)] = probs.at(i, 1);
    }
    return {p_start, p_end};
}

BoundaryLabels make_boundary_labels(const dataio::AnnotationSet& annotations, int num_snippets,
                                    double snippet_duration_s, double expand_ratio) {
    BoundaryLabels out;
    out.start_labels.assign(static_cast<size_t>(num_snippets), 0.0);
    out.end_labels.assign(static_cast<size_t>(num_snippets), 0.0);
    for (int i = 0; i < num_snippets; ++i) {
        double center = (i + 0.5) * snippet_duration_s;
        for (const auto& inst : annotations.instances) {
            double d = inst.t_end - inst.t_start;
            double w = d * expand_ratio;
            if (center >= inst.t_start - w && center <= inst.t_start + w)
                out.start_labels[static_cast<size_t>(i)] = 1.0;
            if (center >= inst.t_end - w && center <= inst.t_end + w)
                out.end_labels[static_cast<size_t>(i)] = 1.0;
        }
    }
    auto balance = [num_snippets](const std::vector<double>& labels, bool& has_pos) {
        int pos = 0;
        for (double v : labels) pos += v > 0.5 ? 1 : 0;
        has_pos = pos > 0;
        double w_pos = pos > 0 ? static_cast<double>(num_snippets - pos) / pos : 0.0;
        std::vector<double> w(labels.size());
        for (size_t i = 0; i < labels.size(); ++i) w[i] = labels[i] > 0.5 ? w_pos : 1.0;
        return w;
    };
    out.start_weights = balance(out.start_labels, out.start_has_positives);
    out.end_weights = balance(out.end_labels, out.end_has_positives);
    return out;
}

numkit::Var boundary_loss(numkit::Tape& tape, numkit::Var start_logits, numkit::Var end_logits,
                          const BoundaryLabels& labels, double gamma) {
    numkit::Var ls = tape.logistic_loss(start_logits, labels.start_labels, labels.start_weights);
    numkit::Var le = tape.logistic_loss(end_logits, labels.end_labels, labels.end_weights);
    return tape.add(ls, tape.scale(le, gamma));
}

namespace {

std::vector<int> peak_candidates(const std::vector<double>& p, double peak_threshold) {
    int l = static_cast<int>(p.size());
    double pmax = *std::max_element(p.begin(), p.end());
    std::vector<int> out;
    for (int i = 0; i < l; ++i) {
        bool left_ok = i == 0 || p[static_cast<size_t>(i)] >= p[static_cast<size_t>(i - 1)];
        bool right_ok = i == l - 1 || p[static_cast<size_t>(i)] >= p[static_cast<size_t>(i + 1)];
        bool local_max = left_ok && right_ok && p[static_cast<size_t>(i)] > peak_threshold;
        bool near_max = p[static_cast<size_t>(i)] > 0.9 * pmax;
        if (local_max || near_max) out.push_back(i);
    }
    return out;
}

}  // namespace

std::vector<Proposal> generate_proposals(const std::string& video_id,
                                         const std::vector<double>& p_start,
                                         const std::vector<double>& p_end, double peak_threshold,
                                         int min_duration, int max_duration) {
    if (p_start.empty() || p_start.size() != p_end.size()) return {};
    auto starts = peak_candidates(p_start, peak_threshold);
    auto ends = peak_candidates(p_end, peak_threshold);
    std::vector<Proposal> out;
    for (int s : starts)
        for (int e : ends) {
            if (s >= e) continue;
            int dur = e - s + 1;
            if (dur < min_duration || dur > max_duration) continue;
            Proposal p;
            p.video_id = video_id;
            p.start_idx = s;
            p.end_idx = e;
            p.boundary_score = p_start[static_cast<size_t>(s)] * p_end[static_cast<size_t>(e)];
            out.push_back(std::move(p));
        }
    return out;
}

numkit::Tensor roi_pool(const numkit::Tensor& features, int start_idx, int end_idx, int bins) {
    // one-shot tape keeps this bit-identical to the recorded op
    numkit::Tape tape;
    numkit::Var f = tape.leaf(features);
    return tape.value(tape.roi_max_pool(f, start_idx, end_idx, bins));
}

RefinedProposal refine(const Proposal& proposal, const numkit::Tensor& pooled,
                       const DetectorModel& model, double video_duration,
                       double snippet_duration_s) {
    RefinedProposal out;
    out.proposal = proposal;

    numkit::Tensor offsets = model.loc.forward(pooled);
    out.d_center = offsets.at(0);
    out.d_length = offsets.at(1);

    numkit::Tensor logits = model.cls.forward(pooled);
    double zmax = *std::max_element(logits.data.begin(), logits.data.end());
    double denom = 0.0;
    for (double z : logits.data) denom += std::exp(z - zmax);
    out.class_scores.resize(logits.data.size());
    for (size_t i = 0; i < logits.data.size(); ++i)
        out.class_scores[i] = std::exp(logits.data[i] - zmax) / denom;

    out.completeness = model.com.forward(pooled).at(0);

    double t_start = proposal.start_idx * snippet_duration_s;
    double t_end = (proposal.end_idx + 1) * snippet_duration_s;
    double center = 0.5 * (t_start + t_end);
    double length = t_end - t_start;
    double new_center = center + out.d_center * length;
    double new_length = length * std::exp(out.d_length);
    out.t_start = std::clamp(new_center - 0.5 * new_length, 0.0, video_duration);
    out.t_end = std::clamp(new_center + 0.5 * new_length, 0.0, video_duration);
    if (out.t_end <= out.t_start) {  // collapsed after clamping
        out.t_start = std::clamp(t_start, 0.0, video_duration);
        out.t_end = std::clamp(t_end, out.t_start + 1e-6, video_duration + 1e-6);
    }
    return out;
}

double segment_tiou(double a_start, double a_end, double b_start, double b_end) {
    if (!(a_start < a_end) || !(b_start < b_end))
        throw std::invalid_argument("tiou of a degenerate segment");
    double inter = std::min(a_end, b_end) - std::max(a_start, b_start);
    if (inter <= 0.0) return 0.0;
    double uni = std::max(a_end, b_end) - std::min(a_start, b_start);
    return inter / uni;
}

std::vector<ProposalTarget> assign_targets(const std::vector<Proposal>& proposals,
                                           const dataio::AnnotationSet& annotations,
                                           double snippet_duration_s, int n_classes,
                                           double fg_tiou) {
    std::vector<ProposalTarget> out;
    out.reserve(proposals.size());
    for (const auto& p : proposals) {
        double t_start = p.start_idx * snippet_duration_s;
        double t_end = (p.end_idx + 1) * snippet_duration_s;
        ProposalTarget tgt;
        tgt.class_id = n_classes;  // background
        int best_gt = -1;
        for (size_t g = 0; g < annotations.instances.size(); ++g) {
            const auto& inst = annotations.instances[g];
            double tiou = segment_tiou(t_start, t_end, inst.t_start, inst.t_end);
            if (tiou > tgt.tiou) {  // strict > keeps the earlier index on ties
                tgt.tiou = tiou;
                best_gt = static_cast<int>(g);
            }
        }
        if (best_gt >= 0 && tgt.tiou >= fg_tiou) {
            const auto& inst = annotations.instances[static_cast<size_t>(best_gt)];
            tgt.foreground = true;
            tgt.class_id = inst.class_id;
            double center = 0.5 * (t_start + t_end);
            double length = t_end - t_start;
            double gt_center = 0.5 * (inst.t_start + inst.t_end);
            double gt_length = inst.t_end - inst.t_start;
            tgt.reg_center = (gt_center - center) / length;
            tgt.reg_length = std::log(gt_length / length);
        }
        out.push_back(tgt);
    }
    return out;
}

numkit::Var detection_loss(numkit::Tape& tape, numkit::Var class_logits, numkit::Var com_scores,
                           numkit::Var offsets, const std::vector<ProposalTarget>& targets,
                           const DetectorConfig& cfg) {
    int n = static_cast<int>(targets.size());
    std::vector<int> class_targets(targets.size());
    std::vector<int> hi, lo;
    std::vector<bool> fg_mask(targets.size());
    numkit::Tensor reg_targets = numkit::Tensor::zeros({n, 2});
    for (int i = 0; i < n; ++i) {
        const auto& t = targets[static_cast<size_t>(i)];
        class_targets[static_cast<size_t>(i)] = t.class_id;
        fg_mask[static_cast<size_t>(i)] = t.foreground;
        if (t.foreground) {
            reg_targets.at(i, 0) = t.reg_center;
            reg_targets.at(i, 1) = t.reg_length;
        }
        if (t.tiou >= cfg.com_hi_tiou) hi.push_back(i);
        if (t.tiou < cfg.com_lo_tiou) lo.push_back(i);
    }
    numkit::Var l_cls = tape.softmax_cross_entropy_rows(class_logits, class_targets);
    numkit::Var l_com = tape.pairwise_hinge(com_scores, hi, lo, cfg.com_margin);
    numkit::Var l_reg = tape.smooth_l1_rows(offsets, reg_targets, fg_mask);
    return tape.add_n({l_cls, tape.scale(l_com, cfg.lambda1), tape.scale(l_reg, cfg.lambda2)});
}

}  // namespace detector
