#include "sampler.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>

namespace sampler {

SnippetSplit split_snippets(const dataio::VideoFeatureSequence& video,
                            const dataio::AnnotationSet& annotations) {
    SnippetSplit split;
    for (int i = 0; i < video.num_snippets; ++i) {
        double center = video.snippet_center(i);
        bool inside = false;
        for (const auto& inst : annotations.instances)
            if (center >= inst.t_start && center < inst.t_end) {
                inside = true;
                break;
            }
        (inside ? split.action : split.non_action).push_back(i);
    }
    return split;
}

std::vector<ActionSample> collect_action_samples(const dataio::Corpus& corpus) {
    std::vector<ActionSample> samples;
    for (size_t v = 0; v < corpus.videos.size(); ++v) {
        const auto& video = corpus.videos[v];
        const auto& ann = corpus.annotations[v];
        for (size_t n = 0; n < ann.instances.size(); ++n) {
            const auto& inst = ann.instances[n];
            numkit::Tensor pooled = numkit::Tensor::zeros({video.feature_dim});
            int count = 0;
            for (int i = 0; i < video.num_snippets; ++i) {
                double center = video.snippet_center(i);
                if (center >= inst.t_start && center < inst.t_end) {
                    for (int j = 0; j < video.feature_dim; ++j)
                        pooled.at(j) += video.features.at(i, j);
                    ++count;
                }
            }
            if (count == 0) {
                std::cerr << "warning: instance " << n << " of " << video.video_id
                          << " spans no snippets, skipped\n";
                continue;
            }
            for (int j = 0; j < video.feature_dim; ++j) pooled.at(j) /= count;
            ActionSample s;
            s.video_id = video.video_id;
            s.video_index = static_cast<int>(v);
            s.instance_index = static_cast<int>(n);
            s.class_id = inst.class_id;
            s.feature = std::move(pooled);
            samples.push_back(std::move(s));
        }
    }
    return samples;
}

std::vector<SamplePair> mine_coupling_samples(const dataio::Corpus& corpus,
                                              const std::vector<ActionSample>& actions,
                                              double threshold, int k_per_action) {
    std::vector<SamplePair> pairs;
    for (size_t a = 0; a < actions.size(); ++a) {
        const auto& action = actions[a];
        const auto& video = corpus.videos[static_cast<size_t>(action.video_index)];
        const auto& ann = corpus.annotations[static_cast<size_t>(action.video_index)];
        auto split = split_snippets(video, ann);

        std::vector<std::pair<double, int>> scored;  // (similarity, snippet index)
        for (int i : split.non_action) {
            double sim = numkit::cosine(action.feature, video.snippet(i));
            if (sim >= threshold) scored.emplace_back(sim, i);
        }
        // descending similarity, ties by lower snippet index
        std::sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
            if (x.first != y.first) return x.first > y.first;
            return x.second < y.second;
        });
        int k = std::min<int>(k_per_action, static_cast<int>(scored.size()));
        for (int r = 0; r < k; ++r) {
            SamplePair p;
            p.action_index = static_cast<int>(a);
            p.snippet_index = scored[static_cast<size_t>(r)].second;
            p.coupling_feature = video.snippet(p.snippet_index);
            p.similarity = scored[static_cast<size_t>(r)].first;
            pairs.push_back(std::move(p));
        }
    }
    return pairs;
}

void dump_pairs(const std::string& path, const std::vector<ActionSample>& actions,
                const std::vector<SamplePair>& pairs) {
    std::ofstream f(path);
    f << "video_id,instance_index,snippet_index,similarity\n";
    for (const auto& p : pairs) {
        const auto& a = actions[static_cast<size_t>(p.action_index)];
        char sim[32];
        std::snprintf(sim, sizeof sim, "%.9g", p.similarity);
        f << a.video_id << ',' << a.instance_index << ',' << p.snippet_index << ',' << sim << '\n';
    }
}

}  // namespace sampler
