#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "refactornet.hpp"
#include "synthgen.hpp"

using numkit::Tape;
using numkit::Tensor;
using numkit::Var;
using refactornet::RefactorConfig;
using refactornet::RefactorModel;

namespace {

struct MinedCorpus {
    dataio::Corpus corpus;
    std::vector<sampler::ActionSample> actions;
    std::vector<sampler::SamplePair> pairs;
};

MinedCorpus make_mined(int n_videos = 10, uint64_t seed = 3) {
    synthgen::SynthSpec spec;
    spec.n_videos = n_videos;
    spec.snippets_per_video = 48;
    spec.feature_dim = 16;
    spec.n_classes = 4;
    spec.n_scenes = 3;
    spec.seed = seed;
    MinedCorpus m;
    m.corpus = synthgen::generate(spec).corpus;
    m.actions = sampler::collect_action_samples(m.corpus);
    m.pairs = sampler::mine_coupling_samples(m.corpus, m.actions, 0.5, 3);
    return m;
}

std::vector<double> snapshot(const std::vector<Tensor*>& params) {
    std::vector<double> flat;
    for (const Tensor* t : params) flat.insert(flat.end(), t->data.begin(), t->data.end());
    return flat;
}

}  // namespace

TEST_CASE("action loss is the rectified cosine") {
    CHECK(refactornet::loss_action(Tensor::vector({1, 0}), Tensor::vector({0, 1})) == 0.0);
    CHECK(refactornet::loss_action(Tensor::vector({1, 0}), Tensor::vector({1, 0})) == 1.0);
    CHECK(refactornet::loss_action(Tensor::vector({1, 0}), Tensor::vector({-1, 0})) == 0.0);
    CHECK(refactornet::loss_action(Tensor::vector({1, 1}), Tensor::vector({1, 0})) ==
          doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("co-occurrence loss vanishes on identical encodings") {
    Tensor v = Tensor::vector({0.3, -1.2, 2.5});
    CHECK(std::abs(refactornet::loss_cooccurrence(v, v)) <= 1e-12);
    CHECK(refactornet::loss_cooccurrence(Tensor::vector({1, 0}), Tensor::vector({0, 1})) == 1.0);
    CHECK(refactornet::loss_cooccurrence(Tensor::vector({1, 0}), Tensor::vector({-2, 0})) ==
          doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("kl loss is zero only at unit-Gaussian statistics") {
    CHECK(refactornet::loss_kl(Tensor::vector({1, -1})) == 0.0);
    CHECK(refactornet::loss_kl(Tensor::vector({0, 2})) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(refactornet::loss_kl(Tensor::vector({5, 5, 5})) > 0.0);
}

TEST_CASE("recorded losses agree with the plain ones") {
    rng::Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor a = Tensor::zeros({6}), c = Tensor::zeros({6});
        for (double& v : a.data) v = rng.normal();
        for (double& v : c.data) v = rng.normal();
        Tape tape;
        Var va = tape.leaf(a), vc = tape.leaf(c);
        CHECK(tape.value(refactornet::loss_action(tape, va, vc)).at(0) ==
              doctest::Approx(refactornet::loss_action(a, c)).epsilon(1e-14));
        CHECK(tape.value(refactornet::loss_cooccurrence(tape, va, vc)).at(0) ==
              doctest::Approx(refactornet::loss_cooccurrence(a, c)).epsilon(1e-14));
        CHECK(tape.value(refactornet::loss_kl(tape, vc)).at(0) ==
              doctest::Approx(refactornet::loss_kl(c)).epsilon(1e-14));
    }
}

TEST_CASE("combined loss matches its components") {
    RefactorModel model;
    model.init(8, 8, 4, 11);
    rng::Rng rng(5);
    Tensor a = Tensor::zeros({8}), c = Tensor::zeros({8});
    for (double& v : a.data) v = rng.normal();
    for (double& v : c.data) v = rng.normal();
    double alpha = 0.83, beta = 0.001;
    Tensor aa = model.encoder_a.forward(a), ac = model.encoder_a.forward(c);
    Tensor ca = model.encoder_c.forward(a), cc = model.encoder_c.forward(c);
    double expected = alpha * (refactornet::loss_action(aa, ac) +
                               refactornet::loss_cooccurrence(ca, cc)) +
                      beta * 0.5 * (refactornet::loss_kl(ca) + refactornet::loss_kl(cc));
    CHECK(refactornet::loss_refactor(a, c, alpha, model, beta) ==
          doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("the two encoders share structure but not parameters") {
    RefactorModel model;
    model.init(16, 16, 8, 0);
    CHECK(model.encoder_a.input_dim() == model.encoder_c.input_dim());
    CHECK(model.encoder_a.output_dim() == model.encoder_c.output_dim());
    CHECK(model.encoder_a.w1.data != model.encoder_c.w1.data);
    auto params = model.params();
    REQUIRE(params.size() == 8);
    for (size_t i = 0; i < params.size(); ++i)
        for (size_t j = i + 1; j < params.size(); ++j) CHECK(params[i] != params[j]);
    CHECK(model.refactored_dim() == 16);
}

TEST_CASE("refactor concatenates the encoder outputs row by row") {
    RefactorModel model;
    model.init(6, 6, 3, 9);
    rng::Rng rng(2);
    Tensor x = Tensor::zeros({4, 6});
    for (double& v : x.data) v = rng.normal();
    Tensor r = model.refactor(x);
    CHECK(r.rows() == 4);
    CHECK(r.cols() == 6);
    for (int i = 0; i < 4; ++i) {
        std::vector<double> row(x.data.begin() + static_cast<size_t>(i) * 6,
                                x.data.begin() + static_cast<size_t>(i + 1) * 6);
        Tensor single = model.refactor(Tensor({1, 6}, row));
        for (int j = 0; j < 6; ++j) CHECK(r.at(i, j) == single.at(0, j));
    }
    CHECK_THROWS_AS(model.refactor(Tensor::zeros({2, 5})), std::invalid_argument);
}

TEST_CASE("checkpoint blocks round trip the model") {
    RefactorModel model;
    model.init(10, 12, 5, 21);
    auto blocks = model.to_blocks();
    RefactorModel back;
    back.from_blocks(blocks);
    CHECK(back.input_dim == 10);
    CHECK(back.out_dim == 5);
    CHECK(back.encoder_a.w1.data == model.encoder_a.w1.data);
    CHECK(back.encoder_c.b2.data == model.encoder_c.b2.data);
}

TEST_CASE("stage 1 training behavior") {
    MinedCorpus m = make_mined();
    REQUIRE(!m.pairs.empty());
    RefactorConfig cfg;
    cfg.stage1_epochs = 8;
    cfg.seed = 1;

    SUBCASE("empty pair set is rejected") {
        RefactorModel model;
        model.init(16, 16, 8, 1);
        CHECK_THROWS_AS(refactornet::train_stage1(m.actions, {}, model, cfg),
                        std::invalid_argument);
    }
    SUBCASE("zero epochs leaves the parameters untouched") {
        RefactorModel model;
        model.init(16, 16, 8, 1);
        auto before = snapshot(model.params());
        RefactorConfig c0 = cfg;
        c0.stage1_epochs = 0;
        auto hist = refactornet::train_stage1(m.actions, m.pairs, model, c0);
        CHECK(hist.epoch_loss.empty());
        CHECK(snapshot(model.params()) == before);
    }
    SUBCASE("zero learning rate keeps the loss constant") {
        RefactorModel model;
        model.init(16, 16, 8, 1);
        RefactorConfig c0 = cfg;
        c0.lr = 0.0;
        // one batch per epoch; multiple shuffled batches would re-partition
        // the 1/B weighting and shift the reported epoch mean
        c0.batch_size = static_cast<int>(m.pairs.size());
        auto before = snapshot(model.params());
        auto hist = refactornet::train_stage1(m.actions, m.pairs, model, c0);
        CHECK(snapshot(model.params()) == before);
        for (double l : hist.epoch_loss)
            CHECK(l == doctest::Approx(hist.epoch_loss[0]).epsilon(1e-12));
    }
    SUBCASE("training reduces the decoupling loss") {
        RefactorModel model;
        model.init(16, 16, 8, 1);
        cfg.stage1_epochs = 40;
        auto hist = refactornet::train_stage1(m.actions, m.pairs, model, cfg);
        REQUIRE(hist.epoch_loss.size() == 40);
        CHECK(hist.epoch_loss.back() < hist.epoch_loss.front() * 0.5);
    }
    SUBCASE("identical seeds give identical runs, different seeds diverge") {
        RefactorModel m1, m2, m3;
        m1.init(16, 16, 8, 1);
        m2.init(16, 16, 8, 1);
        m3.init(16, 16, 8, 1);
        auto h1 = refactornet::train_stage1(m.actions, m.pairs, m1, cfg);
        auto h2 = refactornet::train_stage1(m.actions, m.pairs, m2, cfg);
        CHECK(h1.epoch_loss == h2.epoch_loss);
        CHECK(snapshot(m1.params()) == snapshot(m2.params()));
        RefactorConfig other = cfg;
        other.seed = 2;
        auto h3 = refactornet::train_stage1(m.actions, m.pairs, m3, other);
        CHECK(h1.epoch_loss != h3.epoch_loss);
    }
}

TEST_CASE("stage 2 training behavior") {
    MinedCorpus m = make_mined(6);
    RefactorModel model;
    model.init(16, 16, 8, 1);
    RefactorConfig cfg;
    cfg.stage1_epochs = 5;
    cfg.seed = 1;
    refactornet::train_stage1(m.actions, m.pairs, model, cfg);

    detector::DetectorConfig det_cfg;
    det_cfg.hidden = 32;
    refactornet::Stage2Options opts;
    opts.epochs = 3;
    opts.seed = 2;

    SUBCASE("detector width mismatches are rejected") {
        detector::DetectorModel det;
        det.init(7, det_cfg.hidden, 4, det_cfg.roi_bins, 1);
        CHECK_THROWS_AS(
            refactornet::train_stage2(m.corpus, m.actions, m.pairs, &model, det, det_cfg, opts),
            std::invalid_argument);
        CHECK_THROWS_AS(
            refactornet::train_stage2(m.corpus, m.actions, m.pairs, nullptr, det, det_cfg, opts),
            std::invalid_argument);
    }
    SUBCASE("frozen encoders stay fixed while the detector moves") {
        detector::DetectorModel det;
        det.init(model.refactored_dim(), det_cfg.hidden, 4, det_cfg.roi_bins, 1);
        auto det_before = snapshot(det.params());
        auto enc_before = snapshot(model.params());
        refactornet::Stage2Options frozen = opts;
        frozen.freeze_encoders = true;
        auto hist =
            refactornet::train_stage2(m.corpus, m.actions, m.pairs, &model, det, det_cfg, frozen);
        CHECK(hist.epoch_loss.size() == 3);
        CHECK(snapshot(model.params()) == enc_before);
        CHECK(snapshot(det.params()) != det_before);
    }
    SUBCASE("joint training moves both models and is seed-deterministic") {
        detector::DetectorModel d1, d2;
        d1.init(model.refactored_dim(), det_cfg.hidden, 4, det_cfg.roi_bins, 1);
        d2.init(model.refactored_dim(), det_cfg.hidden, 4, det_cfg.roi_bins, 1);
        RefactorModel m1 = model, m2 = model;
        auto enc_before = snapshot(m1.params());
        auto h1 = refactornet::train_stage2(m.corpus, m.actions, m.pairs, &m1, d1, det_cfg, opts);
        auto h2 = refactornet::train_stage2(m.corpus, m.actions, m.pairs, &m2, d2, det_cfg, opts);
        CHECK(h1.epoch_loss == h2.epoch_loss);
        CHECK(snapshot(m1.params()) == snapshot(m2.params()));
        CHECK(snapshot(d1.params()) == snapshot(d2.params()));
        CHECK(snapshot(m1.params()) != enc_before);
    }
    SUBCASE("baseline mode trains the detector on raw features") {
        detector::DetectorModel det;
        det.init(16, det_cfg.hidden, 4, det_cfg.roi_bins, 1);
        auto before = snapshot(det.params());
        auto hist =
            refactornet::train_stage2(m.corpus, m.actions, m.pairs, nullptr, det, det_cfg, opts);
        CHECK(hist.epoch_loss.size() == 3);
        CHECK(snapshot(det.params()) != before);
    }
    SUBCASE("disabling the KL term changes the trajectory") {
        detector::DetectorModel d1, d2;
        d1.init(model.refactored_dim(), det_cfg.hidden, 4, det_cfg.roi_bins, 1);
        d2.init(model.refactored_dim(), det_cfg.hidden, 4, det_cfg.roi_bins, 1);
        RefactorModel m1 = model, m2 = model;
        refactornet::Stage2Options no_kl = opts;
        no_kl.use_kl = false;
        auto h1 = refactornet::train_stage2(m.corpus, m.actions, m.pairs, &m1, d1, det_cfg, opts);
        auto h2 = refactornet::train_stage2(m.corpus, m.actions, m.pairs, &m2, d2, det_cfg, no_kl);
        CHECK(h1.epoch_loss != h2.epoch_loss);
    }
}

TEST_CASE("stage 1 drives mined pairs toward the decoupling optimum") {
    MinedCorpus m = make_mined(12, 8);
    RefactorModel model;
    model.init(16, 16, 8, 3);
    RefactorConfig cfg;
    cfg.stage1_epochs = 60;
    cfg.seed = 4;
    refactornet::train_stage1(m.actions, m.pairs, model, cfg);

    double mean_la = 0.0, mean_lc = 0.0;
    for (const auto& p : m.pairs) {
        const Tensor& a = m.actions[static_cast<size_t>(p.action_index)].feature;
        const Tensor& c = p.coupling_feature;
        mean_la += refactornet::loss_action(model.encoder_a.forward(a), model.encoder_a.forward(c));
        mean_lc += refactornet::loss_cooccurrence(model.encoder_c.forward(a),
                                                  model.encoder_c.forward(c));
    }
    mean_la /= static_cast<double>(m.pairs.size());
    mean_lc /= static_cast<double>(m.pairs.size());
    CHECK(mean_la < 0.1);  // action encodings of a pair pushed toward orthogonal-or-opposed
    CHECK(mean_lc < 0.1);  // co-occurrence encodings pulled together
}
