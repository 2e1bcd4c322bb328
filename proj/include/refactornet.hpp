#ifndef FRN_REFACTORNET_HPP
#define FRN_REFACTORNET_HPP

#include <optional>
#include <vector>

#include "dataio.hpp"
#include "detector.hpp"
#include "mlp.hpp"
#include "sampler.hpp"

// Feature refactoring: two structurally identical encoders with disjoint
// parameters decouple a snippet feature into an action component and a
// co-occurrence component, which are concatenated back into the refactored
// feature. Stage 1 trains the encoders on action/coupling pairs with the
// decoupling losses; stage 2 trains encoders and detector jointly.

namespace refactornet {

struct RefactorConfig {
    int hidden = 0;        // 0 means input width C
    int out_dim = 0;       // 0 means C / 2, so the refactored width equals C
    double beta = 0.001;   // KL weight
    double lr = 0.001;
    int stage1_epochs = 30;
    int stage2_epochs = 20;
    int stage2_warmup = 0;  // detector-only epochs before the encoders join
    int batch_size = 32;
    uint64_t seed = 0;
};

struct RefactorModel {
    numkit::Mlp encoder_a;
    numkit::Mlp encoder_c;
    int input_dim = 0;
    int out_dim = 0;

    void init(int feature_dim, int hidden, int out, uint64_t seed);
    int refactored_dim() const { return 2 * out_dim; }

    // phi_A(f) ++ phi_C(f); rows refactored independently when given a matrix
    numkit::Tensor refactor(const numkit::Tensor& f) const;

    std::vector<numkit::Tensor*> params();
    dataio::ParamBlocks to_blocks() const;
    void from_blocks(const dataio::ParamBlocks& blocks);
};

// decoupling losses on already-encoded vectors
double loss_action(const numkit::Tensor& a_enc, const numkit::Tensor& c_enc);       // max(0, cos)
double loss_cooccurrence(const numkit::Tensor& a_enc, const numkit::Tensor& c_enc); // 1 - cos
double loss_kl(const numkit::Tensor& c_enc);  // unit-Gaussian KL with variance floor

// alpha * (L_A + L_C) + beta * (L_KL(phi_C(a)) + L_KL(phi_C(c))) / 2,
// alpha = the pair's mined similarity
double loss_refactor(const numkit::Tensor& action_feature, const numkit::Tensor& coupling_feature,
                     double alpha, const RefactorModel& model, double beta);

// recorded variants (scalar outputs on the caller's tape)
numkit::Var loss_action(numkit::Tape& tape, numkit::Var a_enc, numkit::Var c_enc);
numkit::Var loss_cooccurrence(numkit::Tape& tape, numkit::Var a_enc, numkit::Var c_enc);
numkit::Var loss_kl(numkit::Tape& tape, numkit::Var c_enc);

struct TrainHistory {
    std::vector<double> epoch_loss;  // mean batch loss per epoch
};

// Adam on the batch mean of alpha * (L_A + L_C); KL is deferred to stage 2
TrainHistory train_stage1(const std::vector<sampler::ActionSample>& actions,
                          const std::vector<sampler::SamplePair>& pairs, RefactorModel& model,
                          const RefactorConfig& cfg);

// Rescales each encoder's output layer so the mean encoded norm over the
// samples is sqrt(out_dim). The stage-1 losses are cosine-based and therefore
// scale-invariant, so this leaves their value untouched while giving the two
// halves of the refactored feature equal magnitude for the detector.
void calibrate_encoders(RefactorModel& model, const std::vector<sampler::ActionSample>& actions);

struct Stage2Options {
    int epochs = 20;
    double lr = 0.001;
    double beta = 0.001;
    bool use_kl = true;
    bool freeze_encoders = false;
    int warmup_epochs = 0;  // detector-only epochs before the encoders join
    int max_train_proposals = 24;  // top-scoring proposals kept per video, plus ground truth
    bool append_gt_proposals = true;
    uint64_t seed = 0;
};

// Joint training of refactor + detector on per-video batches. Pass a null
// model to train the detector directly on the raw features (the baseline).
TrainHistory train_stage2(const dataio::Corpus& corpus,
                          const std::vector<sampler::ActionSample>& actions,
                          const std::vector<sampler::SamplePair>& pairs, RefactorModel* model,
                          detector::DetectorModel& det, const detector::DetectorConfig& det_cfg,
                          const Stage2Options& opts);

}  // namespace refactornet

#endif
