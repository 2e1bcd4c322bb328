#ifndef FRN_SAMPLER_HPP
#define FRN_SAMPLER_HPP

#include <string>
#include <vector>

#include "dataio.hpp"

// Action-sample collection and coupling-sample mining. An action sample is
// the mean feature of one annotated instance's snippets; its coupling
// samples are the top-k non-action snippets of the same video whose cosine
// similarity to the action sample clears a threshold.

namespace sampler {

struct ActionSample {
    std::string video_id;
    int video_index = 0;     // index into the corpus video list
    int instance_index = 0;  // index into the video's annotation list
    int class_id = 0;
    numkit::Tensor feature;  // mean over the instance's action snippets
};

struct SamplePair {
    int action_index = 0;    // index into the action sample list
    int snippet_index = 0;   // coupling snippet within the action's video
    numkit::Tensor coupling_feature;
    double similarity = 0.0;  // used as alpha in the refactor loss
};

struct SnippetSplit {
    std::vector<int> action;      // center time inside some [t_s, t_e)
    std::vector<int> non_action;
};

SnippetSplit split_snippets(const dataio::VideoFeatureSequence& video,
                            const dataio::AnnotationSet& annotations);

// one sample per annotated instance; instances spanning zero snippets are
// skipped (degenerate annotation)
std::vector<ActionSample> collect_action_samples(const dataio::Corpus& corpus);

// top-k same-video non-action snippets with similarity >= threshold per
// action sample; ties broken by lower snippet index; ordered by
// (video, instance, rank) for determinism
std::vector<SamplePair> mine_coupling_samples(const dataio::Corpus& corpus,
                                              const std::vector<ActionSample>& actions,
                                              double threshold, int k_per_action);

void dump_pairs(const std::string& path, const std::vector<ActionSample>& actions,
                const std::vector<SamplePair>& pairs);

}  // namespace sampler

#endif
