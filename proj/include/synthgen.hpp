#ifndef FRN_SYNTHGEN_HPP
#define FRN_SYNTHGEN_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "dataio.hpp"
#include "rng.hpp"

// Synthetic corpus whose snippet features are explicit mixtures of a known
// per-class action direction and a per-video scene vector:
//   f(t) = action_gain * a_class * m(t) + s + eps,   eps ~ N(0, noise_sigma^2 I)
// m(t) is 1 inside annotated instances and 0 outside. The latent components
// are returned (and written to a side file) so tests can check decoupling
// against ground truth.

namespace synthgen {

using Rng = ::rng::Rng;

struct SynthSpec {
    int n_videos = 100;
    int snippets_per_video = 128;  // L
    int feature_dim = 64;          // C
    int n_classes = 10;
    int n_scenes = 10;
    double action_gain = 0.5;
    double noise_sigma = 0.1;
    double snippet_duration_s = 1.0;
    uint64_t seed = 0;
};

struct VideoLatent {
    int class_id = 0;
    int scene_id = 0;
    std::vector<int> action_mask;  // per snippet, 0/1
};

struct Latents {
    numkit::Tensor class_directions;  // n_classes x C, unit rows
    numkit::Tensor scene_prototypes;  // n_scenes x C, unit rows
    std::vector<VideoLatent> videos;
};

struct GeneratedCorpus {
    dataio::Corpus corpus;
    Latents latents;
};

struct GenerationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

GeneratedCorpus generate(const SynthSpec& spec);

// writes manifest + per-video files + latent side file under out_dir
void write_corpus(const GeneratedCorpus& gen, const std::string& out_dir);
Latents load_latents(const std::string& path);

}  // namespace synthgen

#endif
