#ifndef FRN_EVALKIT_HPP
#define FRN_EVALKIT_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dataio.hpp"

// tIoU matching, per-class average precision (all-point interpolation) and
// mAP over a threshold grid, plus diagnostics for high-quality proposals.

namespace evalkit {

struct EvalConfig {
    std::vector<double> tiou_grid = {0.3, 0.4, 0.5, 0.6, 0.7};
    int n_classes = 0;

    void validate() const;
};

double tiou(double a_start, double a_end, double b_start, double b_end);

// greedy confidence-order matching, one-to-one per ground truth; returns
// nullopt when the class has no ground truth (excluded from the mean)
std::optional<double> average_precision(const std::vector<dataio::DetectionRecord>& detections,
                                        const std::vector<dataio::AnnotationSet>& ground_truth,
                                        int class_id, double threshold);

struct MapResult {
    std::vector<double> per_threshold;  // mAP at each grid threshold
    double average = 0.0;
};

MapResult mean_ap(const std::vector<dataio::DetectionRecord>& detections,
                  const std::vector<dataio::AnnotationSet>& ground_truth, const EvalConfig& cfg);

struct Diagnostics {
    double classification_accuracy = 0.0;  // over detections with best tIoU > 0.7
    double mean_tiou = 0.0;
    int count = 0;
};

// absent (nullopt) when no detection reaches tIoU > 0.7
std::optional<Diagnostics> diagnostics(const std::vector<dataio::DetectionRecord>& detections,
                                       const std::vector<dataio::AnnotationSet>& ground_truth);

}  // namespace evalkit

#endif
