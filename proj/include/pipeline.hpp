#ifndef FRN_PIPELINE_HPP
#define FRN_PIPELINE_HPP

#include <optional>
#include <string>
#include <vector>

#include "detector.hpp"
#include "evalkit.hpp"
#include "postproc.hpp"
#include "refactornet.hpp"
#include "sampler.hpp"
#include "synthgen.hpp"

// Orchestration for the five commands (synth, train, infer, eval, report).
// Every run is a pure function of (config, seed, input files); commands
// write data to files and diagnostics to stderr.

namespace pipeline {

struct PipelineConfig {
    std::string corpus_dir = "corpus";
    std::string run_dir = "run";

    synthgen::SynthSpec synth;

    double mine_threshold = 0.7;
    int mine_k_per_action = 3;

    refactornet::RefactorConfig model;

    detector::DetectorConfig det;

    double train_fraction = 0.8;  // leading videos train, the rest held out
    bool baseline = false;        // bypass refactoring, detector on raw features
    bool use_kl = true;
    int max_train_proposals = 24;
    int max_infer_proposals = 200;

    double nms_sigma = 0.5;
    double nms_score_floor = 1e-4;
    double class_floor = 0.01;

    std::vector<double> tiou_grid = {0.3, 0.4, 0.5, 0.6, 0.7};
};

struct CorpusSplit {
    dataio::Corpus train;
    dataio::Corpus test;
};

CorpusSplit split_corpus(const dataio::Corpus& corpus, double train_fraction);

struct TrainedSystem {
    std::optional<refactornet::RefactorModel> model;  // absent for the baseline
    detector::DetectorModel det;
    refactornet::TrainHistory stage1;
    refactornet::TrainHistory stage2;
};

// sampling + stage 1 + stage 2 (or detector-only when cfg.baseline)
TrainedSystem train_system(const dataio::Corpus& train_corpus, const PipelineConfig& cfg);

struct InferenceResult {
    std::vector<dataio::DetectionRecord> detections;
    // per video: (p_start, p_end) boundary curves
    std::vector<std::pair<std::vector<double>, std::vector<double>>> boundaries;
};

InferenceResult run_inference(const dataio::Corpus& corpus,
                              const refactornet::RefactorModel* model,
                              const detector::DetectorModel& det, const PipelineConfig& cfg);

// commands; each returns 0 on success and writes artifacts under the run dir
int cmd_synth(const PipelineConfig& cfg);
int cmd_train(const PipelineConfig& cfg);
int cmd_infer(const PipelineConfig& cfg, const std::string& checkpoint_path);
int cmd_eval(const PipelineConfig& cfg, const std::string& detections_path);
int cmd_report(const std::string& run_dir);

// checkpoint helpers (model may be null for baseline checkpoints)
void save_checkpoint(const std::string& path, const refactornet::RefactorModel* model,
                     const detector::DetectorModel& det);
bool load_checkpoint(const std::string& path, refactornet::RefactorModel& model,
                     detector::DetectorModel& det);  // returns false if baseline-only

}  // namespace pipeline

#endif
