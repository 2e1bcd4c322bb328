#include "synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

namespace fs = std::filesystem;

namespace synthgen {

namespace {

constexpr int kMinInstanceSnippets = 4;
constexpr int kMaxInstanceSnippets = 24;

void validate(const SynthSpec& spec) {
    if (spec.n_videos < 1 || spec.snippets_per_video < 1 || spec.feature_dim < 1)
        throw GenerationError("synth spec extents must be positive");
    if (spec.n_classes < 2 || spec.n_scenes < 2)
        throw GenerationError("synth spec needs at least two classes and two scenes");
    if (!(spec.action_gain > 0.0))
        throw GenerationError("action_gain must be positive");
    if (spec.noise_sigma < 0.0)
        throw GenerationError("noise_sigma must be non-negative");
    if (spec.snippets_per_video < 2 * kMinInstanceSnippets)
        throw GenerationError("videos too short to place an action instance");
}

uint64_t video_seed(uint64_t base, int video) {
    uint64_t x = base * 0x9E3779B97F4A7C15ull + static_cast<uint64_t>(video) + 1;
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    return x;
}

}  // namespace

GeneratedCorpus generate(const SynthSpec& spec) {
    validate(spec);
    GeneratedCorpus out;
    out.corpus.snippet_duration_s = spec.snippet_duration_s;
    for (int c = 0; c < spec.n_classes; ++c) {
        char name[32];
        std::snprintf(name, sizeof name, "class_%02d", c);
        out.corpus.class_names.push_back(name);
    }

    Rng master(spec.seed);
    out.latents.class_directions = numkit::Tensor::zeros({spec.n_classes, spec.feature_dim});
    for (int c = 0; c < spec.n_classes; ++c) {
        auto dir = master.unit_vector(spec.feature_dim);
        for (int j = 0; j < spec.feature_dim; ++j) out.latents.class_directions.at(c, j) = dir[j];
    }
    out.latents.scene_prototypes = numkit::Tensor::zeros({spec.n_scenes, spec.feature_dim});
    for (int s = 0; s < spec.n_scenes; ++s) {
        auto proto = master.unit_vector(spec.feature_dim);
        for (int j = 0; j < spec.feature_dim; ++j) out.latents.scene_prototypes.at(s, j) = proto[j];
    }

    const int L = spec.snippets_per_video;
    const int max_dur = std::min(kMaxInstanceSnippets, L / 2);
    for (int v = 0; v < spec.n_videos; ++v) {
        Rng rng(video_seed(spec.seed, v));
        char id[32];
        std::snprintf(id, sizeof id, "vid_%04d", v);

        VideoLatent lat;
        lat.class_id = rng.uniform_int(spec.n_classes);
        // each class prefers one scene; drawn with probability 0.8, else uniform
        int preferred = lat.class_id % spec.n_scenes;
        lat.scene_id = rng.uniform() < 0.8 ? preferred : rng.uniform_int(spec.n_scenes);
        lat.action_mask.assign(static_cast<size_t>(L), 0);

        dataio::AnnotationSet ann;
        ann.video_id = id;
        int n_instances = 1 + rng.uniform_int(4);
        std::vector<std::pair<int, int>> spans;  // [start, end) snippet spans
        for (int k = 0; k < n_instances; ++k) {
            bool placed = false;
            for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
                int dur = kMinInstanceSnippets + rng.uniform_int(max_dur - kMinInstanceSnippets + 1);
                int start = rng.uniform_int(L - dur + 1);
                bool overlaps = false;
                for (auto [s, e] : spans)
                    if (start < e && s < start + dur) overlaps = true;
                if (overlaps) continue;
                spans.emplace_back(start, start + dur);
                placed = true;
            }
            // a crowded short video may not fit all requested instances
        }
        if (spans.empty())
            throw GenerationError(std::string("could not place any instance in ") + id);
        std::sort(spans.begin(), spans.end());
        for (auto [s, e] : spans) {
            dataio::AnnotationInstance inst;
            inst.t_start = s * spec.snippet_duration_s;
            inst.t_end = e * spec.snippet_duration_s;
            inst.class_id = lat.class_id;
            ann.instances.push_back(inst);
            for (int i = s; i < e; ++i) lat.action_mask[static_cast<size_t>(i)] = 1;
        }

        dataio::VideoFeatureSequence seq;
        seq.video_id = id;
        seq.feature_dim = spec.feature_dim;
        seq.num_snippets = L;
        seq.snippet_duration_s = spec.snippet_duration_s;
        seq.features = numkit::Tensor::zeros({L, spec.feature_dim});
        for (int i = 0; i < L; ++i) {
            double m = lat.action_mask[static_cast<size_t>(i)] ? 1.0 : 0.0;
            for (int j = 0; j < spec.feature_dim; ++j) {
                double val = spec.action_gain * m * out.latents.class_directions.at(lat.class_id, j) +
                             out.latents.scene_prototypes.at(lat.scene_id, j);
                if (spec.noise_sigma > 0.0) val += spec.noise_sigma * rng.normal();
                seq.features.at(i, j) = val;
            }
        }

        out.corpus.videos.push_back(std::move(seq));
        out.corpus.annotations.push_back(std::move(ann));
        out.latents.videos.push_back(std::move(lat));
    }
    return out;
}

void write_corpus(const GeneratedCorpus& gen, const std::string& out_dir) {
    fs::create_directories(fs::path(out_dir) / "features");
    fs::create_directories(fs::path(out_dir) / "annotations");
    std::vector<dataio::ManifestEntry> entries;
    for (size_t i = 0; i < gen.corpus.videos.size(); ++i) {
        const auto& video = gen.corpus.videos[i];
        dataio::ManifestEntry e;
        e.video_id = video.video_id;
        e.feature_path = "features/" + video.video_id + ".feat";
        e.annotation_path = "annotations/" + video.video_id + ".csv";
        dataio::save_features((fs::path(out_dir) / e.feature_path).string(), video);
        dataio::save_annotations((fs::path(out_dir) / e.annotation_path).string(),
                                 gen.corpus.annotations[i]);
        entries.push_back(std::move(e));
    }
    dataio::save_manifest((fs::path(out_dir) / "manifest.json").string(), gen.corpus.class_names,
                          gen.corpus.snippet_duration_s, entries);

    dataio::ParamBlocks blocks;
    blocks["class_directions"] = gen.latents.class_directions;
    blocks["scene_prototypes"] = gen.latents.scene_prototypes;
    numkit::Tensor meta = numkit::Tensor::zeros({static_cast<int>(gen.latents.videos.size()), 2});
    for (size_t v = 0; v < gen.latents.videos.size(); ++v) {
        meta.at(static_cast<int>(v), 0) = gen.latents.videos[v].class_id;
        meta.at(static_cast<int>(v), 1) = gen.latents.videos[v].scene_id;
    }
    blocks["video_meta"] = meta;
    for (size_t v = 0; v < gen.latents.videos.size(); ++v) {
        const auto& lat = gen.latents.videos[v];
        std::vector<double> mask(lat.action_mask.begin(), lat.action_mask.end());
        blocks["mask/" + gen.corpus.videos[v].video_id] = numkit::Tensor::vector(std::move(mask));
    }
    dataio::save_params((fs::path(out_dir) / "latents.bin").string(), blocks);
}

Latents load_latents(const std::string& path) {
    auto blocks = dataio::load_params(path);
    Latents lat;
    lat.class_directions = blocks.at("class_directions");
    lat.scene_prototypes = blocks.at("scene_prototypes");
    const auto& meta = blocks.at("video_meta");
    for (int v = 0; v < meta.rows(); ++v) {
        VideoLatent vl;
        vl.class_id = static_cast<int>(meta.at(v, 0));
        vl.scene_id = static_cast<int>(meta.at(v, 1));
        lat.videos.push_back(vl);
    }
    // masks are keyed by video id; callers that need them read the blocks directly
    return lat;
}

}  // namespace synthgen
