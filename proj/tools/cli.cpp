#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "evetac/codec.hpp"
#include "evetac/dot_tracker.hpp"
#include "evetac/errors.hpp"
#include "evetac/features.hpp"
#include "evetac/force.hpp"
#include "evetac/gel_sim.hpp"
#include "evetac/grasp.hpp"
#include "evetac/scenes.hpp"
#include "evetac/slip.hpp"
#include "evetac/spectral.hpp"

namespace evetac::cli {

namespace {

namespace fs = std::filesystem;

// All outputs go through a temp file and a rename so a crash never leaves
// a partially written artifact behind.
class AtomicFile {
public:
    explicit AtomicFile(const std::string& path) : final_(path), tmp_(path + ".tmp") {}
    const std::string& path() const { return tmp_; }
    void commit()
    {
        fs::rename(tmp_, final_);
        committed_ = true;
    }
    ~AtomicFile()
    {
        if (!committed_) {
            std::error_code ec;
            fs::remove(tmp_, ec);
        }
    }

private:
    std::string final_;
    std::string tmp_;
    bool committed_ = false;
};

GelScene resolve_scene(const std::string& arg)
{
    const auto lib = scene_library();
    if (const auto it = lib.find(arg); it != lib.end())
        return it->second;
    if (!fs::exists(arg))
        throw InvalidInput("unknown scene name and no such file: " + arg);
    return load_scene_file(arg);
}

void write_truth_csv(const std::string& path, const SimResult& sim)
{
    AtomicFile file(path);
    std::ofstream out(file.path(), std::ios::trunc);
    if (!out)
        throw InvalidInput("cannot open for writing: " + path);
    out.precision(8);
    out << "tick,t_us,fx,fy,slip,tex_x,tex_y";
    for (int d = 0; d < sim.lattice.count(); ++d)
        out << ",dot" << d << "_x,dot" << d << "_y";
    out << '\n';
    for (std::size_t t = 0; t < sim.truth.ticks.size(); ++t) {
        const GroundTruthTick& g = sim.truth.ticks[t];
        out << t << ',' << g.t_end_us << ',' << g.fx << ',' << g.fy << ',' << (g.slip ? 1 : 0)
            << ',' << g.texture_pos.x << ',' << g.texture_pos.y;
        for (const Vec2& c : g.dot_centers)
            out << ',' << c.x << ',' << c.y;
        out << '\n';
    }
    out.close();
    file.commit();
}

struct TruthCsv {
    std::vector<double> fx, fy;
    std::vector<int> slip;
    std::vector<std::vector<Vec2>> dots;
};

TruthCsv read_truth_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw InvalidInput("cannot open: " + path);
    TruthCsv out;
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::istringstream row(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(row, cell, ','))
            vals.push_back(std::stod(cell));
        if (vals.size() < 7)
            throw InvalidInput("truth csv: malformed row");
        out.fx.push_back(vals[2]);
        out.fy.push_back(vals[3]);
        out.slip.push_back(static_cast<int>(vals[4]));
        std::vector<Vec2> dots;
        for (std::size_t i = 7; i + 1 < vals.size(); i += 2)
            dots.push_back({vals[i], vals[i + 1]});
        out.dots.push_back(std::move(dots));
    }
    return out;
}

std::vector<double> read_count_series(const std::string& path)
{
    if (path.size() > 5 && path.substr(path.size() - 5) == ".evtc") {
        const Recording rec = read_evtc(path);
        std::vector<double> series;
        series.reserve(rec.frames.size());
        for (const EventFrame& f : rec.frames)
            series.push_back(static_cast<double>(f.events.size()));
        return series;
    }
    std::ifstream in(path);
    if (!in)
        throw InvalidInput("cannot open: " + path);
    std::vector<double> series;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        // last comma-separated field of each row; headers are skipped
        const auto pos = line.find_last_of(',');
        const std::string cell = pos == std::string::npos ? line : line.substr(pos + 1);
        try {
            series.push_back(std::stod(cell));
        } catch (const std::exception&) {
            continue;
        }
    }
    if (series.empty())
        throw InvalidInput("no numeric samples in " + path);
    return series;
}

struct SlipMeta {
    std::string config = "fast-slow-hist-50";
    int shift_ms = 0;
    double threshold = 0.5;
    int epoch = 0;
};

void write_slip_meta(const std::string& path, const SlipMeta& m)
{
    AtomicFile file(path);
    std::ofstream out(file.path(), std::ios::trunc);
    out << "config = " << m.config << "\nshift_ms = " << m.shift_ms
        << "\nthreshold = " << m.threshold << "\nepoch = " << m.epoch << '\n';
    out.close();
    file.commit();
}

SlipMeta read_slip_meta(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw InvalidInput("cannot open: " + path);
    SlipMeta m;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            continue;
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        auto trim = [](std::string& x) {
            const auto b = x.find_first_not_of(" \t\r");
            const auto e = x.find_last_not_of(" \t\r");
            x = b == std::string::npos ? std::string{} : x.substr(b, e - b + 1);
        };
        trim(key);
        trim(value);
        if (key == "config")
            m.config = value;
        else if (key == "shift_ms")
            m.shift_ms = std::stoi(value);
        else if (key == "threshold")
            m.threshold = std::stod(value);
        else if (key == "epoch")
            m.epoch = std::stoi(value);
    }
    return m;
}

// dataset directory: NNN.evtc + NNN.labels.csv pairs
std::vector<SlipSeries> load_slip_dataset(const std::string& dir, const DotLattice& lattice,
                                          const TrackerConfig& tcfg)
{
    std::vector<fs::path> evtcs;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".evtc")
            evtcs.push_back(entry.path());
    std::sort(evtcs.begin(), evtcs.end());
    if (evtcs.empty())
        throw InvalidInput("no .evtc files in " + dir);

    std::vector<SlipSeries> out;
    int id = 0;
    for (const fs::path& p : evtcs) {
        fs::path labels_path = p;
        labels_path.replace_extension(".labels.csv");
        if (!fs::exists(labels_path))
            throw InvalidInput("missing labels for " + p.string());
        const Recording rec = read_evtc(p.string());
        const SlipLabels labels = read_labels_csv(labels_path.string());
        out.push_back(build_slip_series(rec, lattice, tcfg, labels, id++));
    }
    return out;
}

DotLattice lattice_from_scene_arg(const std::string& arg)
{
    const GelScene scene = resolve_scene(arg);
    return build_lattice(scene);
}

void add_tracker_flags(CLI::App* cmd, TrackerConfig* cfg)
{
    cmd->add_option("--alpha", cfg->step_size, "gradient step size");
    cmd->add_option("--wdist", cfg->reg_weight, "distance regularizer weight");
    cmd->add_option("--gate", cfg->min_events, "event-count update gate");
    cmd->add_option("--ring-inner", cfg->ring_inner, "ring inner radius, px");
    cmd->add_option("--ring-outer", cfg->ring_outer, "ring outer radius, px");
}

// ----------------------------------------------------------------- commands

int cmd_simulate(const std::string& scene_arg, double duration, const std::string& out_path,
                 const std::string& truth_path, std::uint64_t seed, bool seed_set,
                 const std::string& force_csv, int sample_every)
{
    GelScene scene = resolve_scene(scene_arg);
    if (seed_set)
        scene.seed = seed;
    const SimResult sim = simulate(scene, duration);
    if (!out_path.empty()) {
        AtomicFile file(out_path);
        write_evtc(file.path(), sim.recording);
        file.commit();
    }
    if (!truth_path.empty())
        write_truth_csv(truth_path, sim);
    if (!force_csv.empty()) {
        ForceTrajectory traj;
        for (std::size_t t = sample_every - 1; t < sim.truth.ticks.size();
             t += static_cast<std::size_t>(sample_every)) {
            ForceSample s;
            s.fx = sim.truth.ticks[t].fx;
            s.fy = sim.truth.ticks[t].fy;
            for (int d = 0; d < sim.lattice.count(); ++d) {
                const Vec2 disp = sim.truth.ticks[t].dot_centers[d] - sim.lattice.rest[d];
                s.disp.push_back(disp.x);
                s.disp.push_back(disp.y);
            }
            traj.samples.push_back(std::move(s));
        }
        AtomicFile file(force_csv);
        write_force_csv(file.path(), std::span<const ForceTrajectory>(&traj, 1));
        file.commit();
    }
    std::uint64_t events = 0;
    for (const EventFrame& f : sim.recording.frames)
        events += f.events.size();
    std::cout << "simulated " << sim.recording.frames.size() << " frames, " << events
              << " events\n";
    return 0;
}

int cmd_track(const std::string& input, const std::string& grid_arg, const std::string& out_path,
              const TrackerConfig& tcfg, const std::string& truth_path,
              const std::string& force_csv, int sample_every)
{
    const Recording rec = read_evtc(input);
    const DotLattice lattice = lattice_from_scene_arg(grid_arg);
    const TrackResult result = track(rec.frames, lattice, tcfg);

    if (!out_path.empty()) {
        AtomicFile file(out_path);
        std::ofstream out(file.path(), std::ios::trunc);
        if (!out)
            throw InvalidInput("cannot open for writing: " + out_path);
        out.precision(8);
        out << "tick,dot,x,y\n";
        for (std::size_t t = 0; t < result.positions.size(); ++t)
            for (std::size_t d = 0; d < result.positions[t].size(); ++d)
                out << t << ',' << d << ',' << result.positions[t][d].x << ','
                    << result.positions[t][d].y << '\n';
        out.close();
        file.commit();
    }

    if (!force_csv.empty()) {
        if (truth_path.empty())
            throw InvalidInput("--force-csv needs --truth for the force columns");
        const TruthCsv truth = read_truth_csv(truth_path);
        ForceTrajectory traj;
        for (std::size_t t = sample_every - 1; t < result.positions.size();
             t += static_cast<std::size_t>(sample_every)) {
            if (t >= truth.fx.size())
                break;
            ForceSample s;
            s.fx = truth.fx[t];
            s.fy = truth.fy[t];
            for (int d = 0; d < lattice.count(); ++d) {
                const Vec2 disp = result.positions[t][d] - lattice.rest[d];
                s.disp.push_back(disp.x);
                s.disp.push_back(disp.y);
            }
            traj.samples.push_back(std::move(s));
        }
        AtomicFile file(force_csv);
        write_force_csv(file.path(), std::span<const ForceTrajectory>(&traj, 1));
        file.commit();
    }
    std::cout << "tracked " << result.positions.size() << " ticks, " << lattice.count()
              << " dots\n";
    return 0;
}

int cmd_features(const std::string& input, const std::string& grid_arg,
                 const std::string& out_path, const TrackerConfig& tcfg)
{
    const Recording rec = read_evtc(input);
    const DotLattice lattice = lattice_from_scene_arg(grid_arg);
    DotTracker tracker(lattice, tcfg);

    AtomicFile file(out_path);
    std::ofstream out(file.path(), std::ios::trunc);
    if (!out)
        throw InvalidInput("cannot open for writing: " + out_path);
    out.precision(8);
    out << "tick,t_us,n_e";
    for (int d = 0; d < lattice.count(); ++d)
        out << ",dot" << d << "_x,dot" << d << "_y,dot" << d << "_e,dot" << d << "_d";
    out << '\n';
    for (std::size_t t = 0; t < rec.frames.size(); ++t) {
        tracker.process_frame(rec.frames[t]);
        const FeatureFrame f = extract(rec.frames[t], tracker.centers(), lattice);
        out << t << ',' << f.t_end_us << ',' << f.total_events;
        for (int d = 0; d < lattice.count(); ++d)
            out << ',' << f.dot_positions[d].x << ',' << f.dot_positions[d].y << ','
                << f.dot_events[d] << ',' << f.dot_displacement[d];
        out << '\n';
    }
    out.close();
    file.commit();
    std::cout << "features for " << rec.frames.size() << " ticks written\n";
    return 0;
}

int cmd_vibration(const std::string& input, double window_s, double target, double cutoff,
                  double tol, const std::string& out_csv, const std::string& spectrum_csv)
{
    const std::vector<double> series = read_count_series(input);
    const auto segments = detect_vibration_segments(series, window_s, cutoff, target, tol);
    if (segments.empty())
        throw InvalidInput("recording shorter than one window");

    int ok = 0;
    for (const auto& seg : segments)
        ok += seg.success;
    std::cout << "segments: " << segments.size() << ", detected within tolerance: " << ok << " ("
              << (100.0 * ok / segments.size()) << "%)\n";
    for (std::size_t i = 0; i < segments.size(); ++i)
        std::cout << "  segment " << i << ": " << segments[i].detected_hz << " Hz "
                  << (segments[i].success ? "ok" : "MISS") << "\n";

    if (!out_csv.empty()) {
        AtomicFile file(out_csv);
        std::ofstream out(file.path(), std::ios::trunc);
        out << "segment,detected_hz,success,top1_hz,top1_amp,top2_hz,top2_amp,top3_hz,top3_amp\n";
        for (std::size_t i = 0; i < segments.size(); ++i) {
            const auto& s = segments[i];
            out << i << ',' << s.detected_hz << ',' << (s.success ? 1 : 0);
            for (const auto& p : s.top)
                out << ',' << p.freq_hz << ',' << p.amplitude;
            out << '\n';
        }
        out.close();
        file.commit();
    }
    if (!spectrum_csv.empty()) {
        AtomicFile file(spectrum_csv);
        std::ofstream out(file.path(), std::ios::trunc);
        out << "freq_hz,amplitude\n";
        const Spectrum& sp = segments.front().spectrum;
        for (std::size_t k = 0; k < sp.frequencies.size(); ++k)
            out << sp.frequencies[k] << ',' << sp.amplitudes[k] << '\n';
        out.close();
        file.commit();
    }
    return 0;
}

int cmd_datarate(const std::string& input, const std::string& interval, int rgb_w, int rgb_h,
                 double rgb_hz, const std::string& csv_path)
{
    const Recording rec = read_evtc(input);
    double begin_s = 0.0, end_s = 0.0;
    {
        std::istringstream in(interval);
        char comma = 0;
        if (!(in >> begin_s >> comma >> end_s) || comma != ',')
            throw InvalidInput("--interval expects <start_s>,<end_s>");
    }
    const DataRateReport rep =
        data_rate_report(rec.frames, rgb_w, rgb_h, rgb_hz,
                         static_cast<std::int64_t>(begin_s * 1e6),
                         static_cast<std::int64_t>(end_s * 1e6));
    std::cout << "interval " << begin_s << "s.." << end_s << "s (" << rep.duration_s << " s)\n"
              << "events: " << rep.event_count << " (" << rep.event_bytes << " bytes)\n"
              << "rgb equivalent " << rgb_w << "x" << rgb_h << "@" << rgb_hz << ": "
              << rep.rgb_bytes << " bytes\n"
              << "ratio: " << rep.ratio << "\n";
    if (!csv_path.empty()) {
        AtomicFile file(csv_path);
        std::ofstream out(file.path(), std::ios::trunc);
        out << "begin_s,end_s,event_count,event_bytes,rgb_bytes,ratio\n"
            << begin_s << ',' << end_s << ',' << rep.event_count << ',' << rep.event_bytes << ','
            << rep.rgb_bytes << ',' << rep.ratio << '\n';
        out.close();
        file.commit();
    }
    return 0;
}

int cmd_force_fit(const std::string& data, const std::string& model, const std::string& out_path,
                  int epochs, std::uint64_t seed)
{
    const std::vector<ForceTrajectory> trajs = read_force_csv(data);
    if (model == "linear") {
        const LinearForceModel m = fit_linear(trajs);
        AtomicFile file(out_path);
        save_linear_model(file.path(), m);
        file.commit();
        std::cout << "linear model: coef [[" << m.coef[0][0] << ',' << m.coef[0][1] << "],["
                  << m.coef[1][0] << ',' << m.coef[1][1] << "]] bias [" << m.bias[0] << ','
                  << m.bias[1] << "]\n";
    } else if (model == "nn") {
        const ForceNetResult r = fit_network(trajs, epochs, seed);
        AtomicFile file(out_path);
        nn::save_checkpoint(file.path(), r.net);
        file.commit();
        std::cout << "network trained, best test loss " << r.best_test_loss << " at epoch "
                  << r.best_epoch << "\n";
    } else {
        throw InvalidInput("--model must be linear or nn");
    }
    return 0;
}

int cmd_force_eval(const std::string& model_path, const std::string& data,
                   const std::string& out_path)
{
    const std::vector<ForceTrajectory> trajs = read_force_csv(data);
    if (trajs.empty())
        throw InvalidInput("no trajectories in " + data);
    const ForceTrajectory& eval_traj = trajs.back();

    ForceEval ev;
    std::ifstream probe(model_path, std::ios::binary);
    char magic[4] = {};
    probe.read(magic, 4);
    probe.close();
    if (std::string(magic, 4) == "EVNN")
        ev = evaluate(nn::load_checkpoint(model_path), eval_traj);
    else
        ev = evaluate(load_linear_model(model_path), eval_traj);

    std::cout << "MAE: fx " << ev.mae_x << " N, fy " << ev.mae_y << " N over "
              << eval_traj.samples.size() << " samples\n";
    if (!out_path.empty()) {
        AtomicFile file(out_path);
        std::ofstream out(file.path(), std::ios::trunc);
        out << "sample,fx_true,fy_true,fx_pred,fy_pred\n";
        out.precision(8);
        for (std::size_t i = 0; i < eval_traj.samples.size(); ++i)
            out << i << ',' << eval_traj.samples[i].fx << ',' << eval_traj.samples[i].fy << ','
                << ev.predictions[i][0] << ',' << ev.predictions[i][1] << '\n';
        out.close();
        file.commit();
    }
    return 0;
}

int cmd_slip_label(const std::string& input, const std::string& scene_arg,
                   const std::string& out_path, double threshold)
{
    const Recording rec = read_evtc(input);
    const GelScene scene = resolve_scene(scene_arg);
    SlipLabelConfig cfg;
    cfg.flow_threshold = threshold;
    const SlipLabels labels =
        label_slip(rec, scene.window_region, default_marker_region(), cfg);
    AtomicFile file(out_path);
    write_labels_csv(file.path(), labels);
    file.commit();
    int slip_ticks = 0;
    for (auto s : labels.slip)
        slip_ticks += s;
    std::cout << "labeled " << labels.slip.size() << " ticks, slip ticks " << slip_ticks
              << ", onset " << labels.first_slip_tick << "\n";
    return 0;
}

int cmd_slip_train(const std::string& config_name, std::uint64_t seed, const std::string& train_dir,
                   const std::string& test_dir, const std::string& grid_arg,
                   const std::string& out_path, int epochs, double lr, bool verbose)
{
    const SlipConfigKind kind = slip_config_from_string(config_name);
    SlipModelConfig cfg = make_slip_config(kind);
    const DotLattice lattice = lattice_from_scene_arg(grid_arg);
    cfg.rows = lattice.rows;
    cfg.cols = lattice.cols;

    const TrackerConfig tcfg;
    const std::vector<SlipSeries> train_set = load_slip_dataset(train_dir, lattice, tcfg);
    SlipTrainConfig tc;
    tc.epochs = epochs;
    tc.lr = lr;
    tc.seed = seed;
    tc.verbose = verbose;
    const SlipTrainResult trained = train_slip_model(cfg, train_set, tc);

    SlipMeta meta;
    meta.config = config_name;
    meta.shift_ms = cfg.pred_shift_ms;
    nn::Network best = trained.net;
    if (!test_dir.empty()) {
        const std::vector<SlipSeries> test_set = load_slip_dataset(test_dir, lattice, tcfg);
        const ThresholdSelection sel = select_threshold(cfg, trained, test_set);
        meta.threshold = sel.threshold;
        meta.epoch = sel.checkpoint_epoch;
        for (const SlipCheckpoint& c : trained.checkpoints)
            if (c.epoch == sel.checkpoint_epoch)
                best.params = c.params;
        std::cout << "selected checkpoint epoch " << sel.checkpoint_epoch << ", threshold "
                  << sel.threshold << " (score " << sel.score << ")\n";
    } else {
        meta.threshold = cfg.threshold;
        meta.epoch = trained.checkpoints.empty() ? epochs : trained.checkpoints.back().epoch;
    }

    AtomicFile file(out_path);
    nn::save_checkpoint(file.path(), best);
    file.commit();
    write_slip_meta(out_path + ".meta", meta);
    std::cout << "checkpoint written to " << out_path << "\n";
    return 0;
}

int cmd_slip_eval(const std::string& model_path, const std::string& data_dir,
                  const std::string& grid_arg, const std::string& report_path,
                  const std::string& cdf_path)
{
    const SlipMeta meta = read_slip_meta(model_path + ".meta");
    SlipModelConfig cfg = make_slip_config(slip_config_from_string(meta.config), meta.shift_ms);
    const DotLattice lattice = lattice_from_scene_arg(grid_arg);
    cfg.rows = lattice.rows;
    cfg.cols = lattice.cols;
    const nn::Network net = nn::load_checkpoint(model_path);

    const std::vector<SlipSeries> data = load_slip_dataset(data_dir, lattice, TrackerConfig{});
    const SlipEvalReport rep = evaluate_slip(cfg, net, meta.threshold, data);

    std::cout << "trajectories: " << rep.trajectories.size() << "\n"
              << "timing: correct " << rep.correct << ", early " << rep.early << ", late "
              << rep.late << " (" << 100.0 * rep.timing_correct_rate << "% correct)\n"
              << "mean F1: " << rep.mean_f1 << "\n";

    if (!report_path.empty()) {
        AtomicFile file(report_path);
        std::ofstream out(file.path(), std::ios::trunc);
        out << "trajectory,object,timing,f1,precision,recall,t_model,t_classifier\n";
        for (std::size_t i = 0; i < rep.trajectories.size(); ++i) {
            const SlipTrajEval& ev = rep.trajectories[i];
            const char* timing = ev.timing == SlipTiming::Correct  ? "correct"
                                 : ev.timing == SlipTiming::TooEarly ? "early"
                                                                     : "late";
            out << i << ',' << ev.object_id << ',' << timing << ',' << ev.f1 << ','
                << ev.precision << ',' << ev.recall << ',' << ev.t_model_first << ','
                << ev.t_classifier_first << '\n';
        }
        out.close();
        file.commit();
    }
    if (!cdf_path.empty()) {
        std::vector<double> offsets;
        for (const SlipTrajEval& ev : rep.trajectories)
            if (ev.t_model_first >= 0 && ev.t_classifier_first >= 0)
                offsets.push_back(static_cast<double>(ev.t_model_first - ev.t_classifier_first));
        const TimingCdf cdf = timing_cdf(offsets);
        AtomicFile file(cdf_path);
        std::ofstream out(file.path(), std::ios::trunc);
        out << "offset_ms,cdf\n";
        for (std::size_t i = 0; i < cdf.offset_ms.size(); ++i)
            out << cdf.offset_ms[i] << ',' << cdf.cdf[i] << '\n';
        out.close();
        file.commit();
    }
    return 0;
}

grasp::GraspSimObject parse_object_arg(const std::string& arg)
{
    const auto set = grasp::grasp_object_set();
    try {
        const std::size_t idx = std::stoul(arg);
        if (idx < set.size())
            return set[idx];
        throw InvalidInput("object index out of range (have " + std::to_string(set.size()) + ")");
    } catch (const std::invalid_argument&) {
    }
    // key = value file
    std::ifstream in(arg);
    if (!in)
        throw InvalidInput("cannot open object config: " + arg);
    grasp::GraspSimObject obj;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            continue;
        std::istringstream v(line.substr(eq + 1));
        double value;
        if (!(v >> value))
            continue;
        const std::string key = line.substr(0, line.find_first_of(" =\t"));
        if (key == "mass_g")
            obj.mass_g = value;
        else if (key == "friction")
            obj.friction = value;
        else if (key == "stiffness")
            obj.stiffness_n_mm = value;
        else if (key == "width")
            obj.width_mm = value;
        else if (key == "grasp_height")
            obj.grasp_height_mm = value;
        else if (key == "slip_damping")
            obj.slip_damping = value;
    }
    return obj;
}

int cmd_grasp_sim(const std::string& object_arg, const std::string& detector,
                  const std::string& perturb, std::uint64_t seed, const std::string& log_path,
                  bool open_loop, double kp_scale)
{
    const grasp::GraspSimObject obj = parse_object_arg(object_arg);
    grasp::EpisodeConfig cfg;
    cfg.seed = seed;
    cfg.open_loop = open_loop;
    cfg.balance_kp_scale = kp_scale;
    cfg.keep_log = !log_path.empty();

    if (perturb == "20g")
        cfg.perturb = grasp::PerturbSpec{20.0, 5.0};
    else if (perturb == "100g")
        cfg.perturb = grasp::PerturbSpec{100.0, 5.0};
    else if (perturb != "none")
        throw InvalidInput("--perturb must be none, 20g or 100g");

    grasp::FullStackDetector full;
    const grasp::FullStackDetector* full_ptr = nullptr;
    if (detector == "oracle") {
        cfg.detector = grasp::DetectorKind::Oracle;
    } else if (detector.rfind("model:", 0) == 0) {
        const std::string ckpt = detector.substr(6);
        const SlipMeta meta = read_slip_meta(ckpt + ".meta");
        full.model_cfg = make_slip_config(slip_config_from_string(meta.config), meta.shift_ms);
        full.model_cfg.threshold = meta.threshold;
        full.net = nn::load_checkpoint(ckpt);
        cfg.detector = grasp::DetectorKind::Model;
        full_ptr = &full;
    } else {
        throw InvalidInput("--detector must be oracle or model:<checkpoint>");
    }

    const grasp::EpisodeResult res = grasp::run_episode(obj, cfg, full_ptr);
    std::cout << "contact " << (res.contact_made ? "yes" : "NO") << ", lift "
              << (res.lift_success ? "ok" : "FAIL") << ", balance "
              << (res.balance_success ? "ok" : "FAIL") << ", overall "
              << (res.overall_success ? "ok" : "FAIL") << "\n"
              << "width: contact " << res.x_g_contact << " mm, end " << res.x_g_end
              << " mm (delta " << res.dwidth_total << "), lift min " << res.min_x_g_lift << "\n"
              << "object travel " << res.travel_mm << " mm\n";
    if (!log_path.empty()) {
        AtomicFile file(log_path);
        grasp::write_episode_log(file.path(), res);
        file.commit();
    }
    return res.contact_made ? 0 : 1;
}

int cmd_bench(const std::string& what, const std::string& scene_arg, double duration,
              const std::string& out_csv)
{
    using clock = std::chrono::steady_clock;
    GelScene scene = resolve_scene(scene_arg);
    std::vector<double> per_tick_ms;

    if (what == "track") {
        const SimResult sim = simulate(scene, duration);
        DotTracker tracker(sim.lattice, TrackerConfig{});
        per_tick_ms.reserve(sim.recording.frames.size());
        for (const EventFrame& f : sim.recording.frames) {
            const auto t0 = clock::now();
            tracker.process_frame(f);
            const auto t1 = clock::now();
            per_tick_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
    } else if (what == "slip-infer") {
        const SimResult sim = simulate(scene, duration);
        SlipModelConfig cfg = make_slip_config(SlipConfigKind::FastSlowHist50, 10);
        cfg.rows = sim.lattice.rows;
        cfg.cols = sim.lattice.cols;
        nn::Network net = build_slip_model(cfg);
        net.init_params(1);
        SlipDetectorStream stream(cfg, net);
        DotTracker tracker(sim.lattice, TrackerConfig{});
        for (const EventFrame& f : sim.recording.frames) {
            const auto t0 = clock::now();
            tracker.process_frame(f);
            const FeatureFrame feat = extract(f, tracker.centers(), sim.lattice);
            stream.push(feat);
            const auto t1 = clock::now();
            per_tick_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
    } else {
        throw InvalidInput("bench target must be track or slip-infer");
    }

    std::vector<double> sorted = per_tick_ms;
    std::sort(sorted.begin(), sorted.end());
    auto pct = [&](double p) {
        return sorted[std::min(sorted.size() - 1,
                               static_cast<std::size_t>(p * (sorted.size() - 1)))];
    };
    std::cout << "ticks: " << sorted.size() << "\n"
              << "p50: " << pct(0.50) << " ms, p90: " << pct(0.90) << " ms, p99: " << pct(0.99)
              << " ms, max: " << sorted.back() << " ms\n";

    if (!out_csv.empty()) {
        AtomicFile file(out_csv);
        std::ofstream out(file.path(), std::ios::trunc);
        out << "tick,ms\n";
        for (std::size_t i = 0; i < per_tick_ms.size(); ++i)
            out << i << ',' << per_tick_ms[i] << '\n';
        out.close();
        file.commit();
    }
    return 0;
}

} // namespace

int run(int argc, const char* const* argv)
{
    CLI::App app{"evetac: event-based tactile processing toolbox"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "run a gel scene and emit events + ground truth");
    std::string sim_scene, sim_out, sim_truth, sim_force;
    double sim_duration = 1.0;
    std::uint64_t sim_seed = 1;
    int sim_sample_every = 100;
    sim->add_option("--scene", sim_scene, "library scene name or scene file")->required();
    sim->add_option("--duration", sim_duration, "seconds")->required();
    sim->add_option("--out", sim_out, ".evtc output path");
    sim->add_option("--truth", sim_truth, "ground-truth csv path");
    auto* sim_seed_opt = sim->add_option("--seed", sim_seed, "scene seed override");
    sim->add_option("--force-csv", sim_force, "force dataset csv from ground-truth dots");
    sim->add_option("--sample-every", sim_sample_every, "force csv sampling period, ticks");

    // track
    auto* trk = app.add_subcommand("track", "run the regularized dot tracker over a recording");
    std::string trk_in, trk_grid, trk_out, trk_truth, trk_force;
    int trk_sample_every = 100;
    TrackerConfig trk_cfg;
    trk->add_option("--input", trk_in, ".evtc recording")->required();
    trk->add_option("--grid", trk_grid, "scene name or file defining the dot grid")->required();
    trk->add_option("--out", trk_out, "positions csv (tick,dot,x,y)");
    trk->add_option("--truth", trk_truth, "ground-truth csv (for --force-csv)");
    trk->add_option("--force-csv", trk_force, "force dataset csv from tracked dots");
    trk->add_option("--sample-every", trk_sample_every, "force csv sampling period, ticks");
    add_tracker_flags(trk, &trk_cfg);

    // features
    auto* fea = app.add_subcommand("features", "extract per-tick touch features");
    std::string fea_in, fea_grid, fea_out;
    TrackerConfig fea_cfg;
    fea->add_option("--input", fea_in, ".evtc recording")->required();
    fea->add_option("--grid", fea_grid, "scene name or file defining the dot grid")->required();
    fea->add_option("--out", fea_out, "features csv")->required();
    add_tracker_flags(fea, &fea_cfg);

    // vibration
    auto* vib = app.add_subcommand("vibration", "recover vibration frequency from event counts");
    std::string vib_in, vib_out, vib_spec;
    double vib_window = 1.0, vib_target = 0.0, vib_cutoff = 25.0, vib_tol = 1.0;
    vib->add_option("--input", vib_in, ".evtc recording or counts csv")->required();
    vib->add_option("--window", vib_window, "window length T_w, seconds")->required();
    vib->add_option("--target", vib_target, "expected tone frequency, Hz")->required();
    vib->add_option("--cutoff", vib_cutoff, "low-frequency cutoff, Hz");
    vib->add_option("--tol", vib_tol, "success tolerance, Hz");
    vib->add_option("--out", vib_out, "per-segment csv report");
    vib->add_option("--spectrum", vib_spec, "first-segment spectrum csv");

    // datarate
    auto* dr = app.add_subcommand("datarate", "event vs RGB data-rate accounting");
    std::string dr_in, dr_interval, dr_csv;
    int dr_w = 540, dr_h = 480;
    double dr_hz = 25.0;
    dr->add_option("--input", dr_in, ".evtc recording")->required();
    dr->add_option("--interval", dr_interval, "start_s,end_s")->required();
    dr->add_option("--rgb-width", dr_w, "RGB sensor width");
    dr->add_option("--rgb-height", dr_h, "RGB sensor height");
    dr->add_option("--rgb-hz", dr_hz, "RGB frame rate");
    dr->add_option("--csv", dr_csv, "csv report path");

    // force-fit / force-eval
    auto* ff = app.add_subcommand("force-fit", "fit a shear-force model");
    std::string ff_data, ff_model = "linear", ff_out;
    int ff_epochs = 50;
    std::uint64_t ff_seed = 1;
    ff->add_option("--data", ff_data, "force dataset csv")->required();
    ff->add_option("--model", ff_model, "linear or nn");
    ff->add_option("--out", ff_out, "model output path")->required();
    ff->add_option("--epochs", ff_epochs, "training epochs (nn)");
    ff->add_option("--seed", ff_seed, "training seed (nn)");

    auto* fe = app.add_subcommand("force-eval", "evaluate a force model");
    std::string fe_model, fe_data, fe_out;
    fe->add_option("--model", fe_model, "model path")->required();
    fe->add_option("--data", fe_data, "force dataset csv; last trajectory is evaluated")
        ->required();
    fe->add_option("--out", fe_out, "prediction csv");

    // slip-label / slip-train / slip-eval
    auto* sl = app.add_subcommand("slip-label", "flow-based offline slip labeling");
    std::string sl_in, sl_scene = "E", sl_out;
    double sl_threshold = 1.0;
    sl->add_option("--input", sl_in, ".evtc recording")->required();
    sl->add_option("--scene", sl_scene, "scene (for the window region)");
    sl->add_option("--out", sl_out, "labels csv")->required();
    sl->add_option("--threshold", sl_threshold, "relative flow threshold, px / 4 ms");

    auto* st = app.add_subcommand("slip-train", "train a slip detection model");
    std::string st_config = "fast-slow-hist-50", st_train, st_test, st_grid = "E", st_out;
    std::uint64_t st_seed = 1;
    int st_epochs = 70;
    double st_lr = 0.001;
    bool st_verbose = false;
    st->add_option("--config", st_config, "model configuration name");
    st->add_option("--seed", st_seed, "training seed");
    st->add_option("--train", st_train, "training dataset directory")->required();
    st->add_option("--test", st_test, "test dataset directory (threshold selection)");
    st->add_option("--grid", st_grid, "scene defining the dot grid");
    st->add_option("--out", st_out, "checkpoint output path")->required();
    st->add_option("--epochs", st_epochs, "training epochs");
    st->add_option("--lr", st_lr, "learning rate");
    st->add_flag("--verbose", st_verbose, "per-epoch progress");

    auto* se = app.add_subcommand("slip-eval", "evaluate a slip model on labeled trajectories");
    std::string se_model, se_data, se_grid = "E", se_report, se_cdf;
    se->add_option("--model", se_model, "checkpoint path")->required();
    se->add_option("--data", se_data, "dataset directory")->required();
    se->add_option("--grid", se_grid, "scene defining the dot grid");
    se->add_option("--report", se_report, "per-trajectory report csv");
    se->add_option("--cdf", se_cdf, "timing cdf csv");

    // grasp-sim
    auto* gs = app.add_subcommand("grasp-sim", "closed-loop grasp episode");
    std::string gs_obj = "0", gs_detector = "oracle", gs_perturb = "none", gs_log;
    std::uint64_t gs_seed = 1;
    bool gs_open_loop = false;
    double gs_kp_scale = 1.0;
    gs->add_option("--object", gs_obj, "object index or config file");
    gs->add_option("--detector", gs_detector, "oracle or model:<checkpoint>");
    gs->add_option("--perturb", gs_perturb, "none, 20g or 100g weight drop");
    gs->add_option("--seed", gs_seed, "episode seed");
    gs->add_option("--log", gs_log, "episode log csv");
    gs->add_flag("--open-loop", gs_open_loop, "disable the feedback increments");
    gs->add_option("--kp-scale", gs_kp_scale, "balance-phase gain scale");

    // bench
    auto* be = app.add_subcommand("bench", "per-tick latency harness");
    std::string be_what = "track", be_scene = "B", be_csv;
    double be_duration = 2.0;
    be->add_option("target", be_what, "track or slip-infer");
    be->add_option("--scene", be_scene, "scene to run");
    be->add_option("--duration", be_duration, "seconds");
    be->add_option("--csv", be_csv, "latency histogram csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (sim->parsed())
            return cmd_simulate(sim_scene, sim_duration, sim_out, sim_truth, sim_seed,
                                sim_seed_opt->count() > 0, sim_force, sim_sample_every);
        if (trk->parsed())
            return cmd_track(trk_in, trk_grid, trk_out, trk_cfg, trk_truth, trk_force,
                             trk_sample_every);
        if (fea->parsed())
            return cmd_features(fea_in, fea_grid, fea_out, fea_cfg);
        if (vib->parsed())
            return cmd_vibration(vib_in, vib_window, vib_target, vib_cutoff, vib_tol, vib_out,
                                 vib_spec);
        if (dr->parsed())
            return cmd_datarate(dr_in, dr_interval, dr_w, dr_h, dr_hz, dr_csv);
        if (ff->parsed())
            return cmd_force_fit(ff_data, ff_model, ff_out, ff_epochs, ff_seed);
        if (fe->parsed())
            return cmd_force_eval(fe_model, fe_data, fe_out);
        if (sl->parsed())
            return cmd_slip_label(sl_in, sl_scene, sl_out, sl_threshold);
        if (st->parsed())
            return cmd_slip_train(st_config, st_seed, st_train, st_test, st_grid, st_out,
                                  st_epochs, st_lr, st_verbose);
        if (se->parsed())
            return cmd_slip_eval(se_model, se_data, se_grid, se_report, se_cdf);
        if (gs->parsed())
            return cmd_grasp_sim(gs_obj, gs_detector, gs_perturb, gs_seed, gs_log, gs_open_loop,
                                 gs_kp_scale);
        if (be->parsed())
            return cmd_bench(be_what, be_scene, be_duration, be_csv);
    } catch (const InvalidInput& e) {
        std::cerr << "error (usage): " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error (internal): " << e.what() << "\n";
        return 1;
    }
    return 2;
}

} // namespace evetac::cli
