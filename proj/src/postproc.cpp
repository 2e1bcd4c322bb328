#include "postproc.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace postproc {

std::vector<dataio::DetectionRecord> fuse_confidence(const detector::RefinedProposal& refined,
                                                     double class_floor) {
    std::vector<dataio::DetectionRecord> out;
    int n_fg = static_cast<int>(refined.class_scores.size()) - 1;  // last is background
    double squash = 1.0 / (1.0 + std::exp(-refined.completeness));
    for (int c = 0; c < n_fg; ++c) {
        double p = refined.class_scores[static_cast<size_t>(c)];
        if (p <= class_floor) continue;
        dataio::DetectionRecord r;
        r.video_id = refined.proposal.video_id;
        r.t_start = refined.t_start;
        r.t_end = refined.t_end;
        r.class_id = c;
        r.confidence = std::clamp(p * squash, 0.0, 1.0);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<dataio::DetectionRecord> soft_nms(std::vector<dataio::DetectionRecord> detections,
                                              double sigma, double score_floor) {
    std::vector<dataio::DetectionRecord> kept;
    while (!detections.empty()) {
        size_t best = 0;
        for (size_t i = 1; i < detections.size(); ++i) {
            if (detections[i].confidence > detections[best].confidence ||
                (detections[i].confidence == detections[best].confidence &&
                 detections[i].t_start < detections[best].t_start))
                best = i;
        }
        dataio::DetectionRecord selected = detections[best];
        detections.erase(detections.begin() + static_cast<long>(best));
        kept.push_back(selected);
        std::vector<dataio::DetectionRecord> remaining;
        for (auto& d : detections) {
            double tiou = detector::segment_tiou(selected.t_start, selected.t_end, d.t_start, d.t_end);
            d.confidence *= std::exp(-tiou * tiou / sigma);
            if (d.confidence >= score_floor) remaining.push_back(std::move(d));
        }
        detections = std::move(remaining);
    }
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        return a.t_start < b.t_start;
    });
    return kept;
}

std::vector<dataio::DetectionRecord> soft_nms_all(
    const std::vector<dataio::DetectionRecord>& detections, double sigma, double score_floor) {
    std::map<std::pair<std::string, int>, std::vector<dataio::DetectionRecord>> groups;
    for (const auto& d : detections) groups[{d.video_id, d.class_id}].push_back(d);
    std::vector<dataio::DetectionRecord> out;
    for (auto& [key, group] : groups) {
        auto suppressed = soft_nms(std::move(group), sigma, score_floor);
        out.insert(out.end(), suppressed.begin(), suppressed.end());
    }
    return out;
}

}  // namespace postproc
