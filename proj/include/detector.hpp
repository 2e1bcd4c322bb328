#ifndef FRN_DETECTOR_HPP
#define FRN_DETECTOR_HPP

#include <string>
#include <vector>

#include "dataio.hpp"
#include "mlp.hpp"

// Boundary-based proposal generation and proposal refinement on a snippet
// feature sequence. A per-snippet MLP predicts start/end probabilities,
// probability peaks are paired into proposals, RoI max-pooled features feed
// three heads (localization offsets, class scores, completeness).

namespace detector {

struct DetectorConfig {
    int hidden = 128;
    int roi_bins = 16;
    double gamma = 1.0;        // end-loss weight in the boundary loss
    double lambda1 = 0.5;      // completeness weight
    double lambda2 = 0.5;      // regression weight
    double peak_threshold_rel = 0.5;   // threshold = rel * max(p)
    int min_duration_snippets = 2;
    int max_duration_snippets = 0;     // 0 means video length
    double fg_tiou = 0.5;              // foreground assignment threshold
    double com_hi_tiou = 0.7;          // completeness hinge: high-quality side
    double com_lo_tiou = 0.3;          //                     low-quality side
    double com_margin = 0.2;
    double boundary_expand_ratio = 0.1;  // start/end label window = ratio * duration
};

struct DetectorModel {
    numkit::Mlp boundary;  // feature -> (start, end) logits
    numkit::Mlp loc;       // pooled -> (d_center, d_length)
    numkit::Mlp cls;       // pooled -> class logits incl. background
    numkit::Mlp com;       // pooled -> completeness score
    int feature_dim = 0;
    int n_classes = 0;
    int roi_bins = 16;

    void init(int feat_dim, int hidden, int n_classes, int bins, uint64_t seed);
    std::vector<numkit::Tensor*> params();
    dataio::ParamBlocks to_blocks() const;
    void from_blocks(const dataio::ParamBlocks& blocks);
};

struct Proposal {
    std::string video_id;
    int start_idx = 0;
    int end_idx = 0;  // inclusive
    double boundary_score = 0.0;
};

struct RefinedProposal {
    Proposal proposal;
    std::vector<double> class_scores;  // simplex over n_classes + 1 (last = background)
    double completeness = 0.0;         // raw head output
    double d_center = 0.0;
    double d_length = 0.0;
    double t_start = 0.0;  // refined extent, clamped to the video, seconds
    double t_end = 0.0;
};

struct BoundaryLabels {
    std::vector<double> start_labels, end_labels;    // 0/1 per snippet
    std::vector<double> start_weights, end_weights;  // class-balanced
    bool start_has_positives = true;
    bool end_has_positives = true;
};

struct ProposalTarget {
    int class_id = 0;       // n_classes = background
    double tiou = 0.0;      // against the best-matching ground truth
    double reg_center = 0.0;
    double reg_length = 0.0;
    bool foreground = false;
};

// probabilities via logistic squashing of the boundary MLP logits
std::pair<std::vector<double>, std::vector<double>> predict_boundaries(
    const numkit::Tensor& features, const numkit::Mlp& boundary);

// snippet is start-positive iff its center lies in [t_s - d*ratio, t_s + d*ratio]
// of any instance (d = instance duration); positives weighted by neg/pos ratio
BoundaryLabels make_boundary_labels(const dataio::AnnotationSet& annotations, int num_snippets,
                                    double snippet_duration_s, double expand_ratio);

// class-balanced binary logistic loss on start logits plus gamma * (end logits)
numkit::Var boundary_loss(numkit::Tape& tape, numkit::Var start_logits, numkit::Var end_logits,
                          const BoundaryLabels& labels, double gamma);

// candidate peaks: local maxima above peak_threshold plus positions above
// 0.9 * max(p); proposals are all (s, e) pairs within the duration bounds
std::vector<Proposal> generate_proposals(const std::string& video_id,
                                         const std::vector<double>& p_start,
                                         const std::vector<double>& p_end, double peak_threshold,
                                         int min_duration, int max_duration);

// non-recorded RoI max pool, same binning rule as the tape op
numkit::Tensor roi_pool(const numkit::Tensor& features, int start_idx, int end_idx, int bins);

RefinedProposal refine(const Proposal& proposal, const numkit::Tensor& pooled,
                       const DetectorModel& model, double video_duration,
                       double snippet_duration_s);

// max-tIoU assignment; ties broken by earlier ground-truth index
std::vector<ProposalTarget> assign_targets(const std::vector<Proposal>& proposals,
                                           const dataio::AnnotationSet& annotations,
                                           double snippet_duration_s, int n_classes,
                                           double fg_tiou);

// cross-entropy + lambda1 * pairwise completeness hinge + lambda2 * smooth-L1;
// class logits are P x (n_classes+1), offsets P x 2, completeness scores P
numkit::Var detection_loss(numkit::Tape& tape, numkit::Var class_logits, numkit::Var com_scores,
                           numkit::Var offsets, const std::vector<ProposalTarget>& targets,
                           const DetectorConfig& cfg);

double segment_tiou(double a_start, double a_end, double b_start, double b_end);

}  // namespace detector

#endif
