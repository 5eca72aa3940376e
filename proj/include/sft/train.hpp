#pragma once

#include <string>
#include <vector>

#include "sft/metrics.hpp"
#include "sft/model.hpp"
#include "sft/synth.hpp"
#include "sft/tracker.hpp"

namespace sft {

struct TrainConfig {
    std::uint64_t seed = 7;
    int sequences = 200;
    int seq_len = 8;
    int pairs_per_seq = 3;
    int epochs = 1;
    double lr = 0.05;             // plain gradient descent, fixed step
    double center_jitter = 0.12;  // search-crop center jitter, fraction of side
    double scale_jitter = 0.0;    // log-uniform crop-side jitter, e.g. 0.3
    Difficulty difficulty = Difficulty::Plain;
    int frame_h = 64;
    int frame_w = 64;
    LossWeights loss;
    std::string nan_dump_path = "train_nan_dump.txt";
};

struct TrainResult {
    std::vector<double> loss_curve;  // one entry per gradient step
};

// Plain gradient descent on sampled (template, search) pairs drawn from
// synthetic sequences. Deterministic for a fixed seed. A non-finite loss
// writes a diagnostic dump and aborts with an exception.
TrainResult train_toy(Model& model, const TrainConfig& cfg);

// Template/search crop construction shared by training and any offline use.
struct TrainingPair {
    Tensor template_crop;  // 3 x ts x ts
    Tensor search_crop;    // 3 x ss x ss
    BBox gt_in_crop;       // normalized search-crop coordinates
};
TrainingPair make_training_pair(const SynthSequence& seq, int tmpl_frame, int search_frame,
                                const ModelConfig& mcfg, double center_jitter,
                                std::mt19937_64& rng, double scale_jitter = 0.0);

// Runs the tracker over one sequence (init on frame 0) and returns per-frame
// boxes for frames 1..end.
std::vector<BBox> run_tracker(Model& model, const SynthSequence& seq,
                              const TrackerConfig& tcfg = {});

// Pooled evaluation over all frames of all sequences (excluding init frames).
EvalResult evaluate_tracking(Model& model, const std::vector<SynthSequence>& seqs,
                             const TrackerConfig& tcfg = {});

void write_loss_csv(const std::vector<double>& curve, const std::string& path);

}  // namespace sft
