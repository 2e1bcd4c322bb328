#include "evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "detector.hpp"

namespace evalkit {

void EvalConfig::validate() const {
    if (tiou_grid.empty()) throw std::invalid_argument("empty tIoU grid");
    double prev = 0.0;
    for (double t : tiou_grid) {
        if (!(t > prev && t <= 1.0))
            throw std::invalid_argument("tIoU grid must be strictly increasing in (0, 1]");
        prev = t;
    }
    if (n_classes < 1) throw std::invalid_argument("eval config needs at least one class");
}

double tiou(double a_start, double a_end, double b_start, double b_end) {
    return detector::segment_tiou(a_start, a_end, b_start, b_end);
}

namespace {

bool detection_order(const dataio::DetectionRecord& a, const dataio::DetectionRecord& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.t_start != b.t_start) return a.t_start < b.t_start;
    return a.video_id < b.video_id;
}

}  // namespace

std::optional<double> average_precision(const std::vector<dataio::DetectionRecord>& detections,
                                        const std::vector<dataio::AnnotationSet>& ground_truth,
                                        int class_id, double threshold) {
    // ground truth of this class, per video, with matched flags
    std::map<std::string, std::vector<std::pair<dataio::AnnotationInstance, bool>>> gt;
    int n_gt = 0;
    for (const auto& ann : ground_truth)
        for (const auto& inst : ann.instances)
            if (inst.class_id == class_id) {
                gt[ann.video_id].emplace_back(inst, false);
                ++n_gt;
            }
    if (n_gt == 0) return std::nullopt;

    std::vector<dataio::DetectionRecord> dets;
    for (const auto& d : detections)
        if (d.class_id == class_id) dets.push_back(d);
    if (dets.empty()) return 0.0;
    std::stable_sort(dets.begin(), dets.end(), detection_order);

    std::vector<int> tp(dets.size(), 0);
    for (size_t i = 0; i < dets.size(); ++i) {
        auto it = gt.find(dets[i].video_id);
        if (it == gt.end()) continue;
        double best_tiou = 0.0;
        int best = -1;
        for (size_t g = 0; g < it->second.size(); ++g) {
            if (it->second[g].second) continue;  // already matched
            const auto& inst = it->second[g].first;
            double t = tiou(dets[i].t_start, dets[i].t_end, inst.t_start, inst.t_end);
            if (t > best_tiou) {
                best_tiou = t;
                best = static_cast<int>(g);
            }
        }
        if (best >= 0 && best_tiou >= threshold) {
            tp[i] = 1;
            it->second[static_cast<size_t>(best)].second = true;
        }
    }

    // all-point interpolation: precision envelope over the PR curve
    std::vector<double> precision(dets.size());
    int cum_tp = 0;
    for (size_t i = 0; i < dets.size(); ++i) {
        cum_tp += tp[i];
        precision[i] = static_cast<double>(cum_tp) / static_cast<double>(i + 1);
    }
    for (size_t i = dets.size() - 1; i-- > 0;)
        precision[i] = std::max(precision[i], precision[i + 1]);
    double ap = 0.0;
    for (size_t i = 0; i < dets.size(); ++i)
        if (tp[i]) ap += precision[i] / n_gt;
    return ap;
}

MapResult mean_ap(const std::vector<dataio::DetectionRecord>& detections,
                  const std::vector<dataio::AnnotationSet>& ground_truth, const EvalConfig& cfg) {
    cfg.validate();
    MapResult out;
    for (double threshold : cfg.tiou_grid) {
        double sum = 0.0;
        int counted = 0;
        for (int c = 0; c < cfg.n_classes; ++c) {
            auto ap = average_precision(detections, ground_truth, c, threshold);
            if (!ap) {
                std::cerr << "note: class " << c << " has no ground truth, excluded from mAP\n";
                continue;
            }
            sum += *ap;
            ++counted;
        }
        out.per_threshold.push_back(counted > 0 ? sum / counted : 0.0);
    }
    for (double m : out.per_threshold) out.average += m;
    out.average /= static_cast<double>(out.per_threshold.size());
    return out;
}

std::optional<Diagnostics> diagnostics(const std::vector<dataio::DetectionRecord>& detections,
                                       const std::vector<dataio::AnnotationSet>& ground_truth) {
    std::map<std::string, const dataio::AnnotationSet*> by_video;
    for (const auto& ann : ground_truth) by_video[ann.video_id] = &ann;

    int count = 0, correct = 0;
    double tiou_sum = 0.0;
    for (const auto& d : detections) {
        auto it = by_video.find(d.video_id);
        if (it == by_video.end()) continue;
        double best_tiou = 0.0;
        int best_class = -1;
        for (const auto& inst : it->second->instances) {
            double t = tiou(d.t_start, d.t_end, inst.t_start, inst.t_end);
            if (t > best_tiou) {
                best_tiou = t;
                best_class = inst.class_id;
            }
        }
        if (best_tiou > 0.7) {
            ++count;
            tiou_sum += best_tiou;
            if (best_class == d.class_id) ++correct;
        }
    }
    if (count == 0) return std::nullopt;
    Diagnostics diag;
    diag.count = count;
    diag.classification_accuracy = static_cast<double>(correct) / count;
    diag.mean_tiou = tiou_sum / count;
    return diag;
}

}  // namespace evalkit
