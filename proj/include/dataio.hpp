#ifndef FRN_DATAIO_HPP
#define FRN_DATAIO_HPP

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "numkit.hpp"

// On-disk formats:
//   corpus manifest    JSON (classes, snippet_duration_s, per-video file paths)
//   snippet features   binary, magic "FRNFEAT1", uint32 C, uint32 L, L*C doubles LE
//   annotations        CSV: video_id,t_start,t_end,class_id
//   detections         CSV: video_id,t_start,t_end,class_id,confidence
//   model parameters   binary, magic "FRNPARM1", named shape-tagged blocks

namespace dataio {

struct CorpusError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingFileError : CorpusError {
    using CorpusError::CorpusError;
};
struct FormatError : CorpusError {
    using CorpusError::CorpusError;
};
struct ValidationError : CorpusError {
    using CorpusError::CorpusError;
};

struct AnnotationInstance {
    double t_start = 0.0;
    double t_end = 0.0;
    int class_id = 0;
};

struct VideoFeatureSequence {
    std::string video_id;
    int feature_dim = 0;   // C
    int num_snippets = 0;  // L
    numkit::Tensor features;  // L x C
    double snippet_duration_s = 1.0;

    double duration() const { return num_snippets * snippet_duration_s; }
    double snippet_center(int i) const { return (i + 0.5) * snippet_duration_s; }
    numkit::Tensor snippet(int i) const;
};

struct AnnotationSet {
    std::string video_id;
    std::vector<AnnotationInstance> instances;
};

struct DetectionRecord {
    std::string video_id;
    double t_start = 0.0;
    double t_end = 0.0;
    int class_id = 0;
    double confidence = 0.0;
};

struct Corpus {
    std::vector<std::string> class_names;
    double snippet_duration_s = 1.0;
    std::vector<VideoFeatureSequence> videos;
    std::vector<AnnotationSet> annotations;  // parallel to videos

    int num_classes() const { return static_cast<int>(class_names.size()); }
    const VideoFeatureSequence* find_video(const std::string& id) const;
};

// features
void save_features(const std::string& path, const VideoFeatureSequence& seq);
VideoFeatureSequence load_features(const std::string& path, const std::string& video_id,
                                   double snippet_duration_s);

// annotations
void save_annotations(const std::string& path, const AnnotationSet& ann);
AnnotationSet load_annotations(const std::string& path, const std::string& video_id);

// detections
void save_detections(const std::string& path, const std::vector<DetectionRecord>& records);
std::vector<DetectionRecord> load_detections(const std::string& path);

// named parameter blocks (model checkpoints, synthetic latents)
using ParamBlocks = std::map<std::string, numkit::Tensor>;
void save_params(const std::string& path, const ParamBlocks& blocks);
ParamBlocks load_params(const std::string& path);

// corpus manifest
struct ManifestEntry {
    std::string video_id;
    std::string feature_path;     // relative to manifest directory
    std::string annotation_path;
};
void save_manifest(const std::string& path, const std::vector<std::string>& class_names,
                   double snippet_duration_s, const std::vector<ManifestEntry>& entries);
Corpus load_corpus(const std::string& manifest_path);

}  // namespace dataio

#endif
