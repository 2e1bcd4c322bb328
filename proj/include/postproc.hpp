#ifndef FRN_POSTPROC_HPP
#define FRN_POSTPROC_HPP

#include <string>
#include <vector>

#include "dataio.hpp"
#include "detector.hpp"

// Confidence fusion (class score x squashed completeness) and Gaussian-decay
// soft-NMS, applied per (video, class) group.

namespace postproc {

// one detection per non-background class whose class score clears the floor;
// confidence = class_prob * logistic(completeness), clamped to [0,1]
std::vector<dataio::DetectionRecord> fuse_confidence(const detector::RefinedProposal& refined,
                                                     double class_floor);

// detections must come from one (video, class) group; confidences decay by
// exp(-tIoU^2 / sigma) against each selected detection and drop below
// score_floor; output sorted by final confidence, ties by earlier t_start
std::vector<dataio::DetectionRecord> soft_nms(std::vector<dataio::DetectionRecord> detections,
                                              double sigma, double score_floor);

// groups by (video, class), suppresses each group, concatenates the results
std::vector<dataio::DetectionRecord> soft_nms_all(
    const std::vector<dataio::DetectionRecord>& detections, double sigma, double score_floor);

}  // namespace postproc

#endif
