#include "sft/train.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <stdexcept>

namespace sft {

TrainingPair make_training_pair(const SynthSequence& seq, int tmpl_frame, int search_frame,
                                const ModelConfig& mcfg, double center_jitter,
                                std::mt19937_64& rng, double scale_jitter) {
    const BBox& tb = seq.gt_boxes[static_cast<std::size_t>(tmpl_frame)];
    const BBox& sb = seq.gt_boxes[static_cast<std::size_t>(search_frame)];

    TrainingPair pair;
    double tside = 2.0 * std::sqrt(tb.w * tb.h);
    pair.template_crop =
        crop_region(seq.frames[static_cast<std::size_t>(tmpl_frame)], tb.cx - 0.5 * tside,
                    tb.cy - 0.5 * tside, tside, tside, mcfg.template_size, mcfg.template_size);

    // Same region rule as local tracking, with the center jittered so the
    // regression head has to localize rather than memorize the crop center.
    double side = 2.0 * std::sqrt(4.0 * sb.w * sb.h);
    if (scale_jitter > 0.0) {
        std::uniform_real_distribution<double> su(-scale_jitter, scale_jitter);
        side *= std::exp(su(rng));
    }
    std::uniform_real_distribution<double> ju(-center_jitter, center_jitter);
    double cx = sb.cx + ju(rng) * side;
    double cy = sb.cy + ju(rng) * side;
    CropTransform tf{cx - 0.5 * side, cy - 0.5 * side, side, side};
    pair.search_crop = crop_region(seq.frames[static_cast<std::size_t>(search_frame)], tf.x0,
                                   tf.y0, tf.region_w, tf.region_h, mcfg.search_size,
                                   mcfg.search_size);
    pair.gt_in_crop = tf.to_crop(sb);
    return pair;
}

namespace {

void dump_diagnostics(const Model& model, const std::vector<double>& curve, int step,
                      const NamedParams& params, const std::string& path) {
    std::ofstream os(path);
    os << "non-finite loss at step " << step << "\n";
    os << "recent losses:";
    std::size_t from = curve.size() > 10 ? curve.size() - 10 : 0;
    for (std::size_t i = from; i < curve.size(); ++i) os << ' ' << curve[i];
    os << "\nconfig: D=" << model.cfg.width << " layers=" << model.cfg.gpha_layers
       << " heads=" << model.cfg.gpha_heads << "\n";
    for (const auto& [name, p] : params) {
        double mx = 0.0;
        for (std::int64_t i = 0; i < p->value.size(); ++i) {
            mx = std::max(mx, std::fabs(p->value[i]));
        }
        os << name << " max|value|=" << mx << "\n";
    }
}

}  // namespace

TrainResult train_toy(Model& model, const TrainConfig& cfg) {
    if (cfg.sequences < 1 || cfg.seq_len < 2 || cfg.pairs_per_seq < 1 || cfg.epochs < 1) {
        throw std::invalid_argument("config error: bad training sizes");
    }
    std::mt19937_64 rng(cfg.seed);
    NamedParams params = model.named_params();
    TrainResult result;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int s = 0; s < cfg.sequences; ++s) {
            SynthSequence seq = gen_sequence(cfg.seed * 1000003ull + static_cast<std::uint64_t>(s),
                                             cfg.seq_len, cfg.difficulty, cfg.frame_h, cfg.frame_w);
            std::uniform_int_distribution<int> frame_u(0, cfg.seq_len - 1);
            for (int k = 0; k < cfg.pairs_per_seq; ++k) {
                int fi = frame_u(rng);
                int fj = frame_u(rng);
                TrainingPair pair = make_training_pair(seq, fi, fj, model.cfg,
                                                       cfg.center_jitter, rng, cfg.scale_jitter);

                Tape t;
                RunMode mode{true, model.cfg.dropout, &rng};
                SeqVar tmpl = model.encode(t, pair.template_crop);
                SeqVar search = model.encode(t, pair.search_crop);
                Model::Output out = model.forward(t, tmpl, search, mode);
                Tensor labels = ellipse_labels(pair.gt_in_crop, search.grid_h, search.grid_w);
                Var loss = total_loss(t, out.scores, out.boxes, labels, pair.gt_in_crop, cfg.loss);

                double lv = t.value(loss)[0];
                if (!std::isfinite(lv)) {
                    dump_diagnostics(model, result.loss_curve,
                                     static_cast<int>(result.loss_curve.size()), params,
                                     cfg.nan_dump_path);
                    throw std::runtime_error("training aborted: non-finite loss, dump written to " +
                                             cfg.nan_dump_path);
                }
                result.loss_curve.push_back(lv);

                t.backward(loss);
                for (auto& [name, p] : params) {
                    if (model.cfg.freeze_beta && name.size() >= 5 &&
                        name.compare(name.size() - 5, 5, ".beta") == 0) {
                        p->zero_grad();
                        continue;
                    }
                    for (std::int64_t i = 0; i < p->value.size(); ++i) {
                        p->value[i] -= cfg.lr * p->grad[i];
                    }
                    p->zero_grad();
                }
            }
        }
    }
    return result;
}

std::vector<BBox> run_tracker(Model& model, const SynthSequence& seq, const TrackerConfig& tcfg) {
    TrackState state = tracker_init(model, seq.frames[0], seq.gt_boxes[0], tcfg);
    std::vector<BBox> boxes;
    for (std::size_t f = 1; f < seq.frames.size(); ++f) {
        StepResult r = tracker_step(model, state, seq.frames[f]);
        boxes.push_back(r.box);
    }
    return boxes;
}

EvalResult evaluate_tracking(Model& model, const std::vector<SynthSequence>& seqs,
                             const TrackerConfig& tcfg) {
    std::vector<BBox> all_pred, all_gt;
    for (const SynthSequence& seq : seqs) {
        std::vector<BBox> pred = run_tracker(model, seq, tcfg);
        for (std::size_t f = 0; f < pred.size(); ++f) {
            all_pred.push_back(pred[f]);
            all_gt.push_back(seq.gt_boxes[f + 1]);
        }
    }
    return evaluate(all_pred, all_gt);
}

void write_loss_csv(const std::vector<double>& curve, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << "step,loss\n";
    os.precision(17);
    for (std::size_t i = 0; i < curve.size(); ++i) os << i << ',' << curve[i] << '\n';
    if (!os) throw std::runtime_error("short write to " + path);
}

}  // namespace sft
