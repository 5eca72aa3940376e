// Command-line harness: toy training, synthetic tracking, metric evaluation,
// the spectral over-smoothing experiment, gradient checking, and attention
// map export. All randomness flows from --seed; outputs land in --out.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "sft/checkpoint.hpp"
#include "sft/config.hpp"
#include "sft/gradcheck.hpp"
#include "sft/metrics.hpp"
#include "sft/model.hpp"
#include "sft/spectrum.hpp"
#include "sft/synth.hpp"
#include "sft/tracker.hpp"
#include "sft/train.hpp"

namespace fs = std::filesystem;
using namespace sft;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct GlobalArgs {
    std::string config_path = "default";
    std::uint64_t seed = 7;
    std::string out_dir = "out";
};

Config load_config(const std::string& path) {
    if (path == "default") return Config();
    return Config::from_file(path);  // throws on missing file
}

TrainConfig train_config_from(const Config& c, std::uint64_t seed) {
    TrainConfig t;
    t.seed = seed;
    t.sequences = c.get_int("train.sequences", t.sequences);
    t.seq_len = c.get_int("train.seq_len", t.seq_len);
    t.pairs_per_seq = c.get_int("train.pairs_per_seq", t.pairs_per_seq);
    t.epochs = c.get_int("train.epochs", t.epochs);
    t.lr = c.get_double("train.lr", t.lr);
    t.center_jitter = c.get_double("train.center_jitter", t.center_jitter);
    t.difficulty = difficulty_from_string(c.get_string("train.difficulty", "plain"));
    t.frame_h = c.get_int("synth.frame_h", t.frame_h);
    t.frame_w = c.get_int("synth.frame_w", t.frame_w);
    t.loss.lambda_iou = c.get_double("loss.lambda1", t.loss.lambda_iou);
    t.loss.lambda_l1 = c.get_double("loss.lambda2", t.loss.lambda_l1);
    t.loss.lambda_bce = c.get_double("loss.lambda3", t.loss.lambda_bce);
    t.loss.use_giou = c.get_bool("loss.use_giou", t.loss.use_giou);
    return t;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << text;
}

int cmd_train(const GlobalArgs& g, const Config& cfg) {
    Model model(ModelConfig::from(cfg), g.seed);
    TrainConfig tc = train_config_from(cfg, g.seed);
    tc.nan_dump_path = (fs::path(g.out_dir) / "train_nan_dump.txt").string();
    TrainResult result = train_toy(model, tc);
    NamedParams params = model.named_params();
    save_checkpoint(params, (fs::path(g.out_dir) / "model.sfck").string());
    write_loss_csv(result.loss_curve, (fs::path(g.out_dir) / "loss.csv").string());
    std::cout << "steps " << result.loss_curve.size() << " final loss "
              << (result.loss_curve.empty() ? 0.0 : result.loss_curve.back()) << "\n";
    return kExitOk;
}

int cmd_track(const GlobalArgs& g, const Config& cfg) {
    Model model(ModelConfig::from(cfg), g.seed);
    std::string ckpt = cfg.get_string("track.checkpoint", "");
    if (!ckpt.empty()) {
        NamedParams params = model.named_params();
        load_checkpoint(params, ckpt);
    } else {
        std::cerr << "warning: tracking with untrained weights (set track.checkpoint)\n";
    }
    int frames = cfg.get_int("track.frames", 30);
    Difficulty diff = difficulty_from_string(cfg.get_string("track.difficulty", "plain"));
    SynthSequence seq = gen_sequence(g.seed, frames, diff, cfg.get_int("synth.frame_h", 64),
                                     cfg.get_int("synth.frame_w", 64));

    TrackerConfig tcfg;
    tcfg.tau_c = cfg.get_double("tracker.tau_c", tcfg.tau_c);
    tcfg.tau_f = cfg.get_int("tracker.tau_f", tcfg.tau_f);

    TrackState state = tracker_init(model, seq.frames[0], seq.gt_boxes[0], tcfg);
    std::ostringstream results;
    results << "frame_idx,x,y,w,h,confidence,mode\n";
    std::ostringstream gts;
    gts << "frame_idx,x,y,w,h\n";
    gts.precision(17);
    for (std::size_t f = 1; f < seq.frames.size(); ++f) {
        StepResult r = tracker_step(model, state, seq.frames[f]);
        results << format_result_line(static_cast<int>(f), r.box, r.confidence, r.mode) << "\n";
        const BBox& gt = seq.gt_boxes[f];
        gts << f << ',' << gt.x1() << ',' << gt.y1() << ',' << gt.w << ',' << gt.h << "\n";
    }
    write_text((fs::path(g.out_dir) / "results.csv").string(), results.str());
    write_text((fs::path(g.out_dir) / "gt.csv").string(), gts.str());
    std::cout << "tracked " << frames - 1 << " frames\n";
    return kExitOk;
}

std::vector<BBox> read_box_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::vector<BBox> boxes;
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (first && line.find("frame_idx") != std::string::npos) {
            first = false;
            continue;
        }
        first = false;
        std::istringstream ls(line);
        std::string item;
        std::vector<double> nums;
        int col = 0;
        while (std::getline(ls, item, ',')) {
            if (col > 0 && col <= 4) nums.push_back(std::stod(item));
            ++col;
        }
        if (nums.size() < 4) throw std::runtime_error("bad box line in " + path);
        boxes.push_back(BBox{nums[0] + 0.5 * nums[2], nums[1] + 0.5 * nums[3], nums[2], nums[3]});
    }
    return boxes;
}

int cmd_eval(const GlobalArgs& g, const Config& cfg) {
    std::string results_path =
        cfg.get_string("eval.results", (fs::path(g.out_dir) / "results.csv").string());
    std::string gt_path = cfg.get_string("eval.gt", (fs::path(g.out_dir) / "gt.csv").string());
    EvalResult r = evaluate(read_box_csv(results_path), read_box_csv(gt_path));
    std::ostringstream os;
    os.precision(17);
    os << "metric,value\n"
       << "SR," << r.sr << "\nSR_0.5," << r.sr50 << "\nSR_0.75," << r.sr75 << "\nPR," << r.pr
       << "\nAO," << r.ao << "\n";
    write_text((fs::path(g.out_dir) / "metrics.csv").string(), os.str());
    std::cout << os.str();
    return kExitOk;
}

int cmd_spectrum(const GlobalArgs& g, const Config& cfg) {
    SpectrumConfig sc;
    sc.layers = cfg.get_int("spectrum.layers", sc.layers);
    sc.tokens = cfg.get_int("spectrum.tokens", sc.tokens);
    sc.width = cfg.get_int("spectrum.width", sc.width);
    sc.heads = cfg.get_int("spectrum.heads", sc.heads);
    sc.seeds = cfg.get_int("spectrum.seeds", sc.seeds);
    sc.alpha = cfg.get_double("spectrum.alpha", sc.alpha);
    sc.weight_scale = cfg.get_double("spectrum.weight_scale", sc.weight_scale);
    sc.token_scale = cfg.get_double("spectrum.token_scale", sc.token_scale);
    sc.betas = cfg.get_double_list("spectrum.betas", sc.betas);
    sc.residual = cfg.get_bool("spectrum.residual", sc.residual);
    sc.seed0 = g.seed;
    SpectrumReport report = spectrum_experiment(sc);
    write_spectrum_csv(report, (fs::path(g.out_dir) / "spectrum.csv").string());
    std::cout << "vanilla hf share at layer " << sc.layers << ": "
              << report.hf_share_at("vanilla", sc.layers) << "\n";
    return kExitOk;
}

int cmd_gradcheck(const GlobalArgs& g, const Config& cfg) {
    // Small two-layer stack plus heads and the full loss; every parameter of
    // both is checked against central differences.
    int d = cfg.get_int("gradcheck.width", 8);
    int heads_n = cfg.get_int("gradcheck.heads", 2);
    int layers = cfg.get_int("gradcheck.layers", 2);
    int grid = cfg.get_int("gradcheck.grid", 4);
    std::mt19937_64 rng(g.seed);
    SfFormer sf(layers, heads_n, d, rng);
    TrackingHeads th(d, rng);
    Tensor input({grid * grid, d});
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::int64_t i = 0; i < input.size(); ++i) input[i] = gauss(rng);
    BBox gt{0.5, 0.45, 0.4, 0.35};
    Tensor labels = ellipse_labels(gt, grid, grid);
    GphaOptions opts;

    auto f = [&](bool with_grad) {
        Tape t;
        SeqVar x{t.constant(input), grid, grid};
        RunMode mode;
        SeqVar out = sfformer_forward(t, x, sf, opts, mode);
        auto [scores, boxes] = tracking_heads(t, out, th);
        Var loss = total_loss(t, scores, boxes, labels, gt);
        if (with_grad) t.backward(loss);
        return t.value(loss)[0];
    };
    NamedParams np;
    sf.collect("sfformer", np);
    th.collect("heads", np);
    std::vector<Parameter*> params;
    for (auto& [name, p] : np) params.push_back(p);

    double err = gradient_check(f, params, 1e-5);
    std::ostringstream os;
    os.precision(17);
    os << "max_relative_error," << err << "\n";
    write_text((fs::path(g.out_dir) / "gradcheck.txt").string(), os.str());
    std::cout << "max relative error " << err << "\n";
    return err < 1e-4 ? kExitOk : kExitRuntime;
}

int cmd_export_attn(const GlobalArgs& g, const Config& cfg) {
    Model model(ModelConfig::from(cfg), g.seed);
    std::string ckpt = cfg.get_string("track.checkpoint", "");
    if (!ckpt.empty()) {
        NamedParams params = model.named_params();
        load_checkpoint(params, ckpt);
    }
    SynthSequence seq = gen_sequence(g.seed, 2, Difficulty::Plain,
                                     cfg.get_int("synth.frame_h", 64),
                                     cfg.get_int("synth.frame_w", 64));
    std::mt19937_64 rng(g.seed);
    TrainingPair pair = make_training_pair(seq, 0, 1, model.cfg, 0.0, rng);

    Tape t;
    RunMode mode;
    SeqVar tmpl = model.encode(t, pair.template_crop);
    SeqVar search = model.encode(t, pair.search_crop);
    GphaCapture capture;
    model.forward(t, tmpl, search, mode, &capture);

    fs::path dir = fs::path(g.out_dir) / "attn";
    fs::create_directories(dir);
    for (std::size_t l = 0; l < capture.layers.size(); ++l) {
        for (std::size_t n = 0; n < capture.layers[l].heads.size(); ++n) {
            const GphaHeadCapture& hc = capture.layers[l].heads[n];
            std::string stem = "layer" + std::to_string(l) + "_head" + std::to_string(n);
            std::ostringstream os;
            os.precision(17);
            const Tensor& w = hc.weights;
            for (int i = 0; i < w.rows(); ++i) {
                for (int j = 0; j < w.cols(); ++j) {
                    os << (j ? "," : "") << w.at(i, j);
                }
                os << "\n";
            }
            write_text((dir / (stem + ".csv")).string(), os.str());
            if (!hc.gauss_map.empty()) {
                write_pgm(hc.gauss_map, (dir / (stem + "_gauss.pgm")).string());
            }
        }
    }
    std::cout << "exported " << capture.layers.size() << " layers to " << dir.string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spatial-frequency attention tracking harness"};
    app.require_subcommand(1);

    GlobalArgs g;
    app.add_option("--config", g.config_path, "config file path, or 'default'");
    app.add_option("--seed", g.seed, "master random seed");
    app.add_option("--out", g.out_dir, "output directory");

    CLI::App* c_train = app.add_subcommand("train", "toy training run");
    CLI::App* c_track = app.add_subcommand("track", "track one synthetic sequence");
    CLI::App* c_eval = app.add_subcommand("eval", "compute SR/PR/AO from result files");
    CLI::App* c_spectrum = app.add_subcommand("spectrum", "per-layer DC/HF energy measurement");
    CLI::App* c_gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    CLI::App* c_export = app.add_subcommand("export-attn", "dump attention weights and maps");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        Config cfg = load_config(g.config_path);
        fs::create_directories(g.out_dir);
        if (c_train->parsed()) return cmd_train(g, cfg);
        if (c_track->parsed()) return cmd_track(g, cfg);
        if (c_eval->parsed()) return cmd_eval(g, cfg);
        if (c_spectrum->parsed()) return cmd_spectrum(g, cfg);
        if (c_gradcheck->parsed()) return cmd_gradcheck(g, cfg);
        if (c_export->parsed()) return cmd_export_attn(g, cfg);
        return kExitConfig;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        // Configuration problems exit 2, everything else 1.
        return std::string(e.what()).find("config error") != std::string::npos ? kExitConfig
                                                                               : kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
