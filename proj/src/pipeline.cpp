#include "pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

namespace fs = std::filesystem;

namespace pipeline {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_loss_csv(const std::string& path, const refactornet::TrainHistory& history) {
    std::ofstream f(path);
    f << "epoch,loss\n";
    for (size_t i = 0; i < history.epoch_loss.size(); ++i)
        f << i << ',' << fmt(history.epoch_loss[i]) << '\n';
}

int resolved_hidden(const PipelineConfig& cfg, int feature_dim) {
    return cfg.model.hidden > 0 ? cfg.model.hidden : feature_dim;
}

int resolved_out_dim(const PipelineConfig& cfg, int feature_dim) {
    return cfg.model.out_dim > 0 ? cfg.model.out_dim : feature_dim / 2;
}

}  // namespace

CorpusSplit split_corpus(const dataio::Corpus& corpus, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("train_fraction must lie in (0, 1)");
    size_t n_train = static_cast<size_t>(std::lround(train_fraction * corpus.videos.size()));
    n_train = std::clamp<size_t>(n_train, 1, corpus.videos.size() - 1);
    CorpusSplit split;
    split.train.class_names = split.test.class_names = corpus.class_names;
    split.train.snippet_duration_s = split.test.snippet_duration_s = corpus.snippet_duration_s;
    for (size_t v = 0; v < corpus.videos.size(); ++v) {
        auto& dst = v < n_train ? split.train : split.test;
        dst.videos.push_back(corpus.videos[v]);
        dst.annotations.push_back(corpus.annotations[v]);
    }
    return split;
}

TrainedSystem train_system(const dataio::Corpus& train_corpus, const PipelineConfig& cfg) {
    int feature_dim = train_corpus.videos.at(0).feature_dim;
    TrainedSystem sys;

    auto actions = sampler::collect_action_samples(train_corpus);
    auto pairs = sampler::mine_coupling_samples(train_corpus, actions, cfg.mine_threshold,
                                                cfg.mine_k_per_action);

    int det_input = feature_dim;
    if (!cfg.baseline) {
        refactornet::RefactorModel model;
        model.init(feature_dim, resolved_hidden(cfg, feature_dim), resolved_out_dim(cfg, feature_dim),
                   cfg.model.seed);
        refactornet::RefactorConfig rcfg = cfg.model;
        sys.stage1 = refactornet::train_stage1(actions, pairs, model, rcfg);
        refactornet::calibrate_encoders(model, actions);
        det_input = model.refactored_dim();
        sys.model = std::move(model);
    }

    sys.det.init(det_input, cfg.det.hidden, train_corpus.num_classes(), cfg.det.roi_bins,
                 cfg.model.seed + 1);

    refactornet::Stage2Options opts;
    opts.epochs = cfg.model.stage2_epochs;
    opts.lr = cfg.model.lr;
    opts.beta = cfg.model.beta;
    opts.use_kl = cfg.use_kl;
    opts.warmup_epochs = cfg.model.stage2_warmup;
    opts.max_train_proposals = cfg.max_train_proposals;
    opts.seed = cfg.model.seed + 2;
    sys.stage2 = refactornet::train_stage2(train_corpus, actions, pairs,
                                           sys.model ? &*sys.model : nullptr, sys.det, cfg.det,
                                           opts);
    return sys;
}

InferenceResult run_inference(const dataio::Corpus& corpus,
                              const refactornet::RefactorModel* model,
                              const detector::DetectorModel& det, const PipelineConfig& cfg) {
    InferenceResult out;
    for (size_t v = 0; v < corpus.videos.size(); ++v) {
        const auto& video = corpus.videos[v];
        numkit::Tensor features = model ? model->refactor(video.features) : video.features;
        if (features.cols() != det.feature_dim)
            throw std::invalid_argument("checkpoint width does not match the corpus features");

        auto [p_start, p_end] = detector::predict_boundaries(features, det.boundary);
        out.boundaries.emplace_back(p_start, p_end);

        double thr = cfg.det.peak_threshold_rel *
                     std::min(*std::max_element(p_start.begin(), p_start.end()),
                              *std::max_element(p_end.begin(), p_end.end()));
        int max_dur =
            cfg.det.max_duration_snippets > 0 ? cfg.det.max_duration_snippets : video.num_snippets;
        auto proposals =
            detector::generate_proposals(video.video_id, p_start, p_end, thr,
                                         cfg.det.min_duration_snippets, max_dur);
        std::stable_sort(proposals.begin(), proposals.end(), [](const auto& a, const auto& b) {
            return a.boundary_score > b.boundary_score;
        });
        if (static_cast<int>(proposals.size()) > cfg.max_infer_proposals)
            proposals.resize(static_cast<size_t>(cfg.max_infer_proposals));

        std::vector<dataio::DetectionRecord> video_dets;
        for (const auto& p : proposals) {
            numkit::Tensor pooled = detector::roi_pool(features, p.start_idx, p.end_idx, det.roi_bins);
            auto refined = detector::refine(p, pooled, det, video.duration(),
                                            corpus.snippet_duration_s);
            auto fused = postproc::fuse_confidence(refined, cfg.class_floor);
            video_dets.insert(video_dets.end(), fused.begin(), fused.end());
        }
        auto suppressed = postproc::soft_nms_all(video_dets, cfg.nms_sigma, cfg.nms_score_floor);
        out.detections.insert(out.detections.end(), suppressed.begin(), suppressed.end());
    }
    return out;
}

void save_checkpoint(const std::string& path, const refactornet::RefactorModel* model,
                     const detector::DetectorModel& det) {
    dataio::ParamBlocks blocks = det.to_blocks();
    if (model) {
        auto mb = model->to_blocks();
        blocks.insert(mb.begin(), mb.end());
    }
    dataio::save_params(path, blocks);
}

bool load_checkpoint(const std::string& path, refactornet::RefactorModel& model,
                     detector::DetectorModel& det) {
    auto blocks = dataio::load_params(path);
    det.from_blocks(blocks);
    if (blocks.count("refactor.meta") == 0) return false;
    model.from_blocks(blocks);
    return true;
}

int cmd_synth(const PipelineConfig& cfg) {
    auto gen = synthgen::generate(cfg.synth);
    synthgen::write_corpus(gen, cfg.corpus_dir);

    std::map<int, int> per_class;
    int instances = 0;
    for (const auto& ann : gen.corpus.annotations)
        for (const auto& inst : ann.instances) {
            ++per_class[inst.class_id];
            ++instances;
        }
    std::cerr << "wrote " << gen.corpus.videos.size() << " videos, " << instances
              << " instances to " << cfg.corpus_dir << '\n';
    for (auto [c, n] : per_class)
        std::cerr << "  " << gen.corpus.class_names[static_cast<size_t>(c)] << ": " << n << '\n';
    return 0;
}

int cmd_train(const PipelineConfig& cfg) {
    auto corpus = dataio::load_corpus((fs::path(cfg.corpus_dir) / "manifest.json").string());
    auto split = split_corpus(corpus, cfg.train_fraction);
    fs::create_directories(cfg.run_dir);

    int feature_dim = split.train.videos.at(0).feature_dim;
    auto actions = sampler::collect_action_samples(split.train);
    auto pairs = sampler::mine_coupling_samples(split.train, actions, cfg.mine_threshold,
                                                cfg.mine_k_per_action);
    sampler::dump_pairs((fs::path(cfg.run_dir) / "pairs.csv").string(), actions, pairs);

    TrainedSystem sys;
    std::string stage1_path = (fs::path(cfg.run_dir) / "encoders_stage1.bin").string();
    int det_input = feature_dim;
    if (!cfg.baseline) {
        refactornet::RefactorModel model;
        if (fs::exists(stage1_path)) {
            std::cerr << "resuming from " << stage1_path << ", stage 1 skipped\n";
            model.from_blocks(dataio::load_params(stage1_path));
        } else {
            model.init(feature_dim, resolved_hidden(cfg, feature_dim),
                       resolved_out_dim(cfg, feature_dim), cfg.model.seed);
            sys.stage1 = refactornet::train_stage1(actions, pairs, model, cfg.model);
            refactornet::calibrate_encoders(model, actions);
            if (sys.stage1.epoch_loss.size() > 1 &&
                sys.stage1.epoch_loss.back() >= sys.stage1.epoch_loss.front())
                std::cerr << "warning: stage-1 loss did not decrease\n";
            dataio::save_params(stage1_path, model.to_blocks());
            write_loss_csv((fs::path(cfg.run_dir) / "loss_stage1.csv").string(), sys.stage1);
        }
        det_input = model.refactored_dim();
        sys.model = std::move(model);
    }

    sys.det.init(det_input, cfg.det.hidden, split.train.num_classes(), cfg.det.roi_bins,
                 cfg.model.seed + 1);
    refactornet::Stage2Options opts;
    opts.epochs = cfg.model.stage2_epochs;
    opts.lr = cfg.model.lr;
    opts.beta = cfg.model.beta;
    opts.use_kl = cfg.use_kl;
    opts.warmup_epochs = cfg.model.stage2_warmup;
    opts.max_train_proposals = cfg.max_train_proposals;
    opts.seed = cfg.model.seed + 2;
    sys.stage2 = refactornet::train_stage2(split.train, actions, pairs,
                                           sys.model ? &*sys.model : nullptr, sys.det, cfg.det,
                                           opts);
    write_loss_csv((fs::path(cfg.run_dir) / "loss_stage2.csv").string(), sys.stage2);

    std::string ckpt = (fs::path(cfg.run_dir) /
                        (cfg.baseline ? "model_baseline.bin" : "model.bin")).string();
    save_checkpoint(ckpt, sys.model ? &*sys.model : nullptr, sys.det);
    std::cerr << "checkpoint written to " << ckpt << '\n';
    return 0;
}

int cmd_infer(const PipelineConfig& cfg, const std::string& checkpoint_path) {
    auto corpus = dataio::load_corpus((fs::path(cfg.corpus_dir) / "manifest.json").string());
    auto split = split_corpus(corpus, cfg.train_fraction);

    refactornet::RefactorModel model;
    detector::DetectorModel det;
    bool has_refactor = load_checkpoint(checkpoint_path, model, det);
    const refactornet::RefactorModel* mp =
        (has_refactor && !cfg.baseline) ? &model : nullptr;

    auto result = run_inference(split.test, mp, det, cfg);

    fs::create_directories(fs::path(cfg.run_dir) / "boundaries");
    for (size_t v = 0; v < split.test.videos.size(); ++v) {
        const auto& video = split.test.videos[v];
        std::ofstream f((fs::path(cfg.run_dir) / "boundaries" / (video.video_id + ".csv")).string());
        f << "snippet,p_start,p_end\n";
        const auto& [ps, pe] = result.boundaries[v];
        for (size_t i = 0; i < ps.size(); ++i)
            f << i << ',' << fmt(ps[i]) << ',' << fmt(pe[i]) << '\n';
    }
    std::string det_path = (fs::path(cfg.run_dir) /
                            (cfg.baseline ? "detections_baseline.csv" : "detections.csv")).string();
    dataio::save_detections(det_path, result.detections);
    std::cerr << "wrote " << result.detections.size() << " detections to " << det_path << '\n';
    return 0;
}

int cmd_eval(const PipelineConfig& cfg, const std::string& detections_path) {
    auto corpus = dataio::load_corpus((fs::path(cfg.corpus_dir) / "manifest.json").string());
    auto split = split_corpus(corpus, cfg.train_fraction);
    auto detections = dataio::load_detections(detections_path);
    for (const auto& d : detections)
        if (d.class_id < 0 || d.class_id >= corpus.num_classes())
            throw dataio::ValidationError("detection class_id outside the corpus class list");

    evalkit::EvalConfig ecfg;
    ecfg.tiou_grid = cfg.tiou_grid;
    ecfg.n_classes = corpus.num_classes();
    auto result = evalkit::mean_ap(detections, split.test.annotations, ecfg);

    fs::create_directories(cfg.run_dir);
    std::ofstream f((fs::path(cfg.run_dir) / "results.csv").string());
    f << "tiou,map\n";
    for (size_t i = 0; i < ecfg.tiou_grid.size(); ++i) {
        f << fmt(ecfg.tiou_grid[i]) << ',' << fmt(result.per_threshold[i]) << '\n';
        std::printf("mAP@%.2f = %.4f\n", ecfg.tiou_grid[i], result.per_threshold[i]);
    }
    f << "average," << fmt(result.average) << '\n';
    std::printf("average mAP = %.4f\n", result.average);

    auto diag = evalkit::diagnostics(detections, split.test.annotations);
    std::ofstream df((fs::path(cfg.run_dir) / "diagnostics.csv").string());
    df << "high_quality_count,classification_accuracy,mean_tiou\n";
    if (diag) {
        df << diag->count << ',' << fmt(diag->classification_accuracy) << ','
           << fmt(diag->mean_tiou) << '\n';
        std::printf("high-quality proposals: %d, class accuracy %.4f, mean tIoU %.4f\n",
                    diag->count, diag->classification_accuracy, diag->mean_tiou);
    } else {
        df << "0,,\n";
        std::printf("no proposals above tIoU 0.7\n");
    }
    return 0;
}

namespace {

// minimal static line plot: one polyline per series on a fixed viewport
void write_svg(const std::string& path, const std::vector<std::vector<double>>& series,
               const std::vector<std::string>& colors, const std::string& title) {
    const double w = 640, h = 360, margin = 40;
    double ymin = 0.0, ymax = 1e-12;
    size_t n = 1;
    for (const auto& s : series)
        for (double v : s) {
            ymin = std::min(ymin, v);
            ymax = std::max(ymax, v);
        }
    for (const auto& s : series) n = std::max(n, s.size());
    std::ofstream f(path);
    f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
    f << "<rect width='100%' height='100%' fill='white'/>\n";
    f << "<text x='" << margin << "' y='20' font-size='14'>" << title << "</text>\n";
    for (size_t s = 0; s < series.size(); ++s) {
        if (series[s].size() < 2) continue;
        f << "<polyline fill='none' stroke='" << colors[s % colors.size()] << "' points='";
        for (size_t i = 0; i < series[s].size(); ++i) {
            double x = margin + (w - 2 * margin) * static_cast<double>(i) /
                                    static_cast<double>(n - 1);
            double y = h - margin -
                       (h - 2 * margin) * (series[s][i] - ymin) / (ymax - ymin + 1e-300);
            f << x << ',' << y << ' ';
        }
        f << "'/>\n";
    }
    f << "</svg>\n";
}

std::vector<double> read_csv_column(const std::string& path, size_t column) {
    std::ifstream f(path);
    std::vector<double> out;
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        std::stringstream ss(line);
        std::string field;
        size_t i = 0;
        while (std::getline(ss, field, ',')) {
            if (i == column && !field.empty()) out.push_back(std::stod(field));
            ++i;
        }
    }
    return out;
}

}  // namespace

int cmd_report(const std::string& run_dir) {
    fs::path run(run_dir);
    fs::path report = run / "report";
    fs::create_directories(report);
    std::vector<std::string> missing;

    for (const char* stage : {"loss_stage1", "loss_stage2"}) {
        fs::path csv = run / (std::string(stage) + ".csv");
        if (!fs::exists(csv)) {
            missing.push_back(csv.string());
            continue;
        }
        auto loss = read_csv_column(csv.string(), 1);
        write_svg((report / (std::string(stage) + ".svg")).string(), {loss}, {"#1f77b4"},
                  std::string(stage) + " per epoch");
        fs::copy_file(csv, report / csv.filename(), fs::copy_options::overwrite_existing);
    }

    fs::path boundaries = run / "boundaries";
    if (fs::exists(boundaries)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(boundaries))
            if (entry.path().extension() == ".csv") files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& csv : files) {
            auto ps = read_csv_column(csv.string(), 1);
            auto pe = read_csv_column(csv.string(), 2);
            write_svg((report / (csv.stem().string() + "_boundaries.svg")).string(), {ps, pe},
                      {"#1f77b4", "#d62728"},
                      csv.stem().string() + " boundary probabilities (start, end)");
            fs::copy_file(csv, report / csv.filename(), fs::copy_options::overwrite_existing);
        }
    } else {
        missing.push_back(boundaries.string());
    }

    fs::path results = run / "results.csv";
    if (fs::exists(results))
        fs::copy_file(results, report / "results.csv", fs::copy_options::overwrite_existing);
    else
        missing.push_back(results.string());

    for (const auto& m : missing) std::cerr << "missing artifact: " << m << '\n';
    std::cerr << "report written to " << report.string() << '\n';
    return 0;
}

}  // namespace pipeline
