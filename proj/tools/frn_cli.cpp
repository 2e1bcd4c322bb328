#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "pipeline.hpp"

// Operator surface: synth | train | infer | eval | report. All knobs have
// the pipeline defaults, can be set from a config file (--config) and
// overridden by flags.

namespace {

void add_common_options(CLI::App& cmd, pipeline::PipelineConfig& cfg) {
    cmd.add_option("--corpus-dir", cfg.corpus_dir, "corpus directory (manifest.json inside)");
    cmd.add_option("--run-dir", cfg.run_dir, "output directory for run artifacts");
    cmd.add_option("--train-fraction", cfg.train_fraction, "leading fraction of videos used for training");
    cmd.add_option("--seed", cfg.model.seed, "training seed");

    cmd.add_option("--mine-threshold", cfg.mine_threshold, "coupling-sample cosine threshold");
    cmd.add_option("--mine-k", cfg.mine_k_per_action, "coupling samples per action sample");

    cmd.add_option("--hidden", cfg.model.hidden, "encoder hidden width (0 = feature dim)");
    cmd.add_option("--encoder-dim", cfg.model.out_dim, "encoder output width (0 = feature dim / 2)");
    cmd.add_option("--beta", cfg.model.beta, "KL regularization weight");
    cmd.add_option("--lr", cfg.model.lr, "learning rate for both stages");
    cmd.add_option("--stage1-epochs", cfg.model.stage1_epochs, "encoder-only training epochs");
    cmd.add_option("--stage2-epochs", cfg.model.stage2_epochs, "joint training epochs");
    cmd.add_option("--stage2-warmup", cfg.model.stage2_warmup, "detector-only epochs before the encoders join");
    cmd.add_option("--batch-size", cfg.model.batch_size, "stage-1 pair batch size");

    cmd.add_option("--det-hidden", cfg.det.hidden, "detector MLP hidden width");
    cmd.add_option("--roi-bins", cfg.det.roi_bins, "RoI pooling bins");
    cmd.add_option("--gamma", cfg.det.gamma, "end-boundary loss weight");
    cmd.add_option("--lambda1", cfg.det.lambda1, "completeness loss weight");
    cmd.add_option("--lambda2", cfg.det.lambda2, "regression loss weight");
    cmd.add_option("--peak-threshold", cfg.det.peak_threshold_rel, "peak threshold as fraction of max probability");
    cmd.add_option("--min-duration", cfg.det.min_duration_snippets, "min proposal duration (snippets)");
    cmd.add_option("--max-duration", cfg.det.max_duration_snippets, "max proposal duration (snippets, 0 = video length)");
    cmd.add_option("--max-train-proposals", cfg.max_train_proposals, "proposals kept per video during training");
    cmd.add_option("--max-infer-proposals", cfg.max_infer_proposals, "proposals kept per video at inference");

    cmd.add_option("--nms-sigma", cfg.nms_sigma, "soft-NMS Gaussian decay sigma");
    cmd.add_option("--nms-floor", cfg.nms_score_floor, "soft-NMS drop threshold");
    cmd.add_option("--class-floor", cfg.class_floor, "minimum class score to emit a detection");
    cmd.add_option("--tiou-grid", cfg.tiou_grid, "tIoU thresholds for evaluation");
    cmd.add_flag("--baseline", cfg.baseline, "bypass refactoring, detector on raw features");
    cmd.add_flag("!--no-kl", cfg.use_kl, "disable the stage-2 KL term");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"feature refactoring pipeline for temporal action localization"};
    app.require_subcommand(1);
    app.set_config("--config", "", "config file (TOML/INI, flags override)");

    pipeline::PipelineConfig cfg;
    std::string checkpoint, detections, report_dir;

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    add_common_options(*synth, cfg);
    synth->add_option("--videos", cfg.synth.n_videos, "number of videos");
    synth->add_option("--snippets", cfg.synth.snippets_per_video, "snippets per video");
    synth->add_option("--feature-dim", cfg.synth.feature_dim, "feature dimension");
    synth->add_option("--classes", cfg.synth.n_classes, "number of action classes");
    synth->add_option("--scenes", cfg.synth.n_scenes, "number of scene prototypes");
    synth->add_option("--action-gain", cfg.synth.action_gain, "action component amplitude");
    synth->add_option("--noise-sigma", cfg.synth.noise_sigma, "additive noise sigma");
    synth->add_option("--snippet-duration", cfg.synth.snippet_duration_s, "seconds per snippet");
    synth->add_option("--synth-seed", cfg.synth.seed, "corpus seed");

    CLI::App* train = app.add_subcommand("train", "mine samples and train both stages");
    add_common_options(*train, cfg);

    CLI::App* infer = app.add_subcommand("infer", "run detection on the held-out split");
    add_common_options(*infer, cfg);
    infer->add_option("--checkpoint", checkpoint, "model checkpoint")->required();

    CLI::App* eval = app.add_subcommand("eval", "score a detection file against the held-out split");
    add_common_options(*eval, cfg);
    eval->add_option("--detections", detections, "detection CSV")->required();

    CLI::App* report = app.add_subcommand("report", "emit static plots for a run directory");
    report->add_option("--run-dir", report_dir, "run directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return pipeline::cmd_synth(cfg);
        if (train->parsed()) return pipeline::cmd_train(cfg);
        if (infer->parsed()) return pipeline::cmd_infer(cfg, checkpoint);
        if (eval->parsed()) return pipeline::cmd_eval(cfg, detections);
        if (report->parsed()) return pipeline::cmd_report(report_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
