// Command-line front end: synthetic data generation, group labeling,
// training, evaluation, sampling and the correlation sweep.
//
// Exit codes: 0 success, 2 validation error (bad flags, bad config, bad
// paths), 3 runtime or numeric failure.

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "grouptraj/config.hpp"
#include "grouptraj/dataset.hpp"
#include "grouptraj/model.hpp"
#include "grouptraj/sampler.hpp"
#include "grouptraj/svg.hpp"
#include "grouptraj/training.hpp"

namespace fs = std::filesystem;
using namespace grouptraj;

namespace {

struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

void require_readable(const std::string& path, const char* what) {
    if (path.empty()) throw ValidationError(std::string(what) + ": no path given");
    std::error_code ec;
    if (!fs::is_regular_file(path, ec))
        throw ValidationError(std::string(what) + ": not a readable file: " + path);
}

fs::path prepare_out_dir(const std::string& out) {
    if (out.empty()) throw ValidationError("--out: output directory required");
    fs::path dir(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw ValidationError("--out: cannot create output directory: " + out);
    return dir;
}

// Resolves option values with precedence: command-line flag > config file >
// built-in default, recording every key for the echoed config.
struct OptResolver {
    std::optional<KeyValueConfig> file;
    std::string file_path;
    ResolvedConfig resolved;
    std::set<std::string> known;

    void load(const std::string& config_path) {
        if (config_path.empty()) return;
        require_readable(config_path, "--config");
        file = KeyValueConfig::load(config_path);
        file_path = config_path;
    }

    template <typename T, typename Parse>
    T pick(CLI::Option* opt, T flag_value, const std::string& key, Parse parse) {
        known.insert(key);
        T value = flag_value;
        if ((!opt || opt->count() == 0) && file && file->has(key)) value = parse(file->get(key));
        return value;
    }

    double d(CLI::Option* opt, double flag_value, const std::string& key) {
        const double v = pick(opt, flag_value, key, [&](const std::string& s) {
            bool ok = false;
            const double x = parse_double(s, ok);
            if (!ok) throw ValidationError("config: key '" + key + "' is not a number: " + s);
            return x;
        });
        resolved.set(key, v);
        return v;
    }

    long i(CLI::Option* opt, long flag_value, const std::string& key) {
        const long v = pick(opt, flag_value, key, [&](const std::string& s) {
            try {
                return std::stol(s);
            } catch (...) {
                throw ValidationError("config: key '" + key + "' is not an integer: " + s);
            }
        });
        resolved.set(key, v);
        return v;
    }

    std::uint64_t u(CLI::Option* opt, std::uint64_t flag_value, const std::string& key) {
        const std::uint64_t v = pick(opt, flag_value, key, [&](const std::string& s) {
            try {
                return static_cast<std::uint64_t>(std::stoull(s));
            } catch (...) {
                throw ValidationError("config: key '" + key + "' is not an integer: " + s);
            }
        });
        resolved.set(key, v);
        return v;
    }

    std::string s(CLI::Option* opt, std::string flag_value, const std::string& key) {
        const std::string v =
            pick(opt, std::move(flag_value), key, [](const std::string& raw) { return raw; });
        resolved.set(key, v);
        return v;
    }

    bool b(CLI::Option* opt, bool flag_value, const std::string& key) {
        const bool v = pick(opt, flag_value, key, [&](const std::string& raw) {
            if (raw == "1" || raw == "true") return true;
            if (raw == "0" || raw == "false") return false;
            throw ValidationError("config: key '" + key + "' must be true/false: " + raw);
        });
        resolved.set(key, std::string(v ? "true" : "false"));
        return v;
    }

    void finish(const fs::path& out_dir) {
        if (file) file->reject_unknown_keys(known, file_path);
        std::cout << "resolved config:\n" << resolved.render();
        resolved.persist(out_dir);
    }
};

std::vector<double> parse_double_list(const std::string& s, const char* what) {
    std::vector<double> out;
    std::string cur;
    auto flush = [&] {
        if (cur.empty()) return;
        bool ok = false;
        const double v = parse_double(cur, ok);
        if (!ok) throw ValidationError(std::string(what) + ": bad number '" + cur + "'");
        out.push_back(v);
        cur.clear();
    };
    for (char c : s) {
        if (c == ',') {
            flush();
        } else if (c != ' ') {
            cur.push_back(c);
        }
    }
    flush();
    return out;
}

std::vector<int> parse_int_list(const std::string& s, const char* what) {
    std::vector<int> out;
    for (double v : parse_double_list(s, what)) out.push_back(static_cast<int>(v));
    return out;
}

std::vector<Scene> load_scenes_checked(const std::string& traj, const std::string& labels,
                                       int t_obs, int horizon, int stride) {
    const RawTrajectoryTable table = load_trajectory_file(traj);
    GroupLabels lab;
    if (labels.empty()) {
        lab = heuristic_group_labels_table(table);
    } else {
        lab = load_group_labels(labels, table);
    }
    auto scenes = extract_scenes(table, lab, t_obs, horizon, stride);
    if (scenes.empty())
        throw ValidationError("dataset " + traj + " yields no scenes for t_obs=" +
                              std::to_string(t_obs) + " horizon=" + std::to_string(horizon));
    return scenes;
}

std::string csv_field(double v) { return format_double(v); }

// ---------------------------------------------------------------------------
// gen-synth
// ---------------------------------------------------------------------------

struct GenSynthArgs {
    std::string config, out;
    long scenes = 1, groups = 2, group_size = 2, frames = 20;
    std::string sizes;
    double speed_min = 0.8, speed_max = 1.4, noise = 0.0, gap = 0.5;
    std::uint64_t seed = 1;
    CLI::Option *o_scenes, *o_groups, *o_group_size, *o_sizes, *o_speed_min, *o_speed_max,
        *o_noise, *o_gap, *o_frames, *o_seed;
};

void run_gen_synth(GenSynthArgs& a) {
    OptResolver r;
    r.load(a.config);
    const fs::path out_dir = prepare_out_dir(a.out);
    r.resolved.set("out", a.out);
    r.known.insert("out");

    SyntheticSpec spec;
    const long scenes = r.i(a.o_scenes, a.scenes, "scenes");
    const long groups = r.i(a.o_groups, a.groups, "groups");
    const long group_size = r.i(a.o_group_size, a.group_size, "group_size");
    const std::string sizes = r.s(a.o_sizes, a.sizes, "sizes");
    spec.speed_min = r.d(a.o_speed_min, a.speed_min, "speed_min");
    spec.speed_max = r.d(a.o_speed_max, a.speed_max, "speed_max");
    spec.noise_sigma = r.d(a.o_noise, a.noise, "noise_sigma");
    spec.lateral_gap = r.d(a.o_gap, a.gap, "lateral_gap");
    spec.n_frames = static_cast<int>(r.i(a.o_frames, a.frames, "frames"));
    spec.seed = r.u(a.o_seed, a.seed, "seed");

    if (scenes < 1) throw ValidationError("gen-synth: scenes must be >= 1");
    if (!sizes.empty()) {
        spec.group_sizes = parse_int_list(sizes, "--sizes");
    } else {
        if (groups < 1) throw ValidationError("gen-synth: need at least one group");
        if (group_size < 1) throw ValidationError("gen-synth: group size must be >= 1");
        spec.group_sizes.assign(static_cast<std::size_t>(groups), static_cast<int>(group_size));
    }
    r.finish(out_dir);

    const SyntheticCrowd crowd = generate_synthetic_dataset(spec, static_cast<int>(scenes));
    write_trajectory_file((out_dir / "trajectories.txt").string(), crowd.table);
    write_group_labels((out_dir / "groups.txt").string(), crowd.labels);

    std::string manifest = "seed " + std::to_string(spec.seed) + "\n";
    manifest += "scenes " + std::to_string(scenes) + "\n";
    manifest += "pedestrians " + std::to_string(crowd.labels.group_of_ped.size()) + "\n";
    manifest += "trajectories trajectories.txt\ngroups groups.txt\n";
    write_text_file((out_dir / "manifest.txt").string(), manifest);
    std::cout << "wrote " << (out_dir / "trajectories.txt").string() << " ("
              << crowd.table.records.size() << " records)\n";
}

// ---------------------------------------------------------------------------
// label-groups
// ---------------------------------------------------------------------------

struct LabelGroupsArgs {
    std::string config, out, traj;
    double eps_pos = 2.0, eps_vel = 0.5;
    long min_cluster = 2;
    CLI::Option *o_eps_pos, *o_eps_vel, *o_min_cluster;
};

void run_label_groups(LabelGroupsArgs& a) {
    OptResolver r;
    r.load(a.config);
    require_readable(a.traj, "--traj");
    const fs::path out_dir = prepare_out_dir(a.out);
    r.resolved.set("out", a.out);
    r.resolved.set("traj", a.traj);
    r.known.insert("out");
    r.known.insert("traj");

    HeuristicLabelConfig cfg;
    cfg.eps_pos = r.d(a.o_eps_pos, a.eps_pos, "eps_pos");
    cfg.eps_vel = r.d(a.o_eps_vel, a.eps_vel, "eps_vel");
    cfg.min_cluster = static_cast<int>(r.i(a.o_min_cluster, a.min_cluster, "min_cluster"));
    r.finish(out_dir);

    const RawTrajectoryTable table = load_trajectory_file(a.traj);
    const GroupLabels labels = heuristic_group_labels_table(table, cfg);
    write_group_labels((out_dir / "groups.txt").string(), labels);
    std::cout << "wrote " << (out_dir / "groups.txt").string() << " (" << labels.num_groups
              << " groups)\n";
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config, out, traj, labels, val_traj, val_labels, variant = "hierarchical", resume;
    long t_obs = 8, horizon = 12, stride = 1, epochs = 400, batch = 64, k = 20, eval_k = 1;
    double lr = 1e-4, alpha = 1.0, rho = 1.0, target_ade = 0.0;
    std::uint64_t seed = 1;
    CLI::Option *o_t_obs, *o_horizon, *o_stride, *o_epochs, *o_batch, *o_k, *o_eval_k, *o_lr,
        *o_alpha, *o_rho, *o_target_ade, *o_seed, *o_variant;
};

void run_train(TrainArgs& a) {
    OptResolver r;
    r.load(a.config);
    require_readable(a.traj, "--traj");
    if (!a.labels.empty()) require_readable(a.labels, "--labels");
    if (!a.val_traj.empty()) require_readable(a.val_traj, "--val-traj");
    if (!a.val_labels.empty()) require_readable(a.val_labels, "--val-labels");
    if (!a.resume.empty()) require_readable(a.resume, "--resume");
    const fs::path out_dir = prepare_out_dir(a.out);
    for (const auto& [key, value] :
         std::vector<std::pair<std::string, std::string>>{{"out", a.out},
                                                          {"traj", a.traj},
                                                          {"labels", a.labels},
                                                          {"val_traj", a.val_traj},
                                                          {"val_labels", a.val_labels},
                                                          {"resume", a.resume}}) {
        r.resolved.set(key, value);
        r.known.insert(key);
    }

    TrainConfig cfg;
    const int t_obs = static_cast<int>(r.i(a.o_t_obs, a.t_obs, "t_obs"));
    const int horizon = static_cast<int>(r.i(a.o_horizon, a.horizon, "horizon"));
    const int stride = static_cast<int>(r.i(a.o_stride, a.stride, "stride"));
    cfg.loss.epochs = static_cast<int>(r.i(a.o_epochs, a.epochs, "epochs"));
    cfg.loss.batch_size = static_cast<int>(r.i(a.o_batch, a.batch, "batch"));
    cfg.loss.k_variety = static_cast<int>(r.i(a.o_k, a.k, "k_variety"));
    cfg.eval_k = static_cast<int>(r.i(a.o_eval_k, a.eval_k, "eval_k"));
    cfg.loss.learning_rate = r.d(a.o_lr, a.lr, "learning_rate");
    cfg.loss.alpha = r.d(a.o_alpha, a.alpha, "alpha");
    cfg.rho = r.d(a.o_rho, a.rho, "rho");
    cfg.target_ade = r.d(a.o_target_ade, a.target_ade, "target_ade");
    cfg.seed = r.u(a.o_seed, a.seed, "seed");
    cfg.variant = variant_from_string(r.s(a.o_variant, a.variant, "variant"));
    validate_rho(cfg.rho);
    if (cfg.loss.alpha < 0.0) throw ValidationError("train: alpha must be >= 0");
    r.finish(out_dir);

    const auto train_scenes = load_scenes_checked(a.traj, a.labels, t_obs, horizon, stride);
    std::vector<Scene> val_scenes = train_scenes;
    if (!a.val_traj.empty())
        val_scenes = load_scenes_checked(a.val_traj, a.val_labels, t_obs, horizon, stride);
    std::cout << "training on " << train_scenes.size() << " scenes, validating on "
              << val_scenes.size() << "\n";

    std::optional<ModelParams> initial;
    if (!a.resume.empty()) initial = load_checkpoint(a.resume);
    const TrainResult result =
        train_model(train_scenes, val_scenes, cfg, initial ? &*initial : nullptr);

    std::string log_text;
    for (const EpochLog& l : result.log) {
        log_text += std::to_string(l.epoch) + " " + format_double(l.train_loss) + " " +
                    format_double(l.val_ade) + " " + format_double(l.val_fde) + " " +
                    format_double(l.wall_seconds) + "\n";
    }
    write_text_file((out_dir / "train_log.txt").string(), log_text);
    ModelParams best = result.params;
    save_checkpoint((out_dir / "checkpoint.txt").string(), best);
    std::cout << "best epoch " << result.best_epoch << ": val ADE "
              << format_double(result.best_val_ade) << " m, val FDE "
              << format_double(result.best_val_fde) << " m over " << result.epochs_run
              << " epochs\n";
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string config, out, traj, labels, checkpoint, dataset, split = "test";
    long t_obs = 8, horizon = 12, stride = 1, k = 20;
    double rho = 1.0;
    std::uint64_t seed = 1;
    bool independent_min_fde = false;
    CLI::Option *o_t_obs, *o_horizon, *o_stride, *o_k, *o_rho, *o_seed, *o_ind_fde, *o_split,
        *o_dataset;
};

void run_eval(EvalArgs& a) {
    OptResolver r;
    r.load(a.config);
    require_readable(a.traj, "--traj");
    if (!a.labels.empty()) require_readable(a.labels, "--labels");
    require_readable(a.checkpoint, "--checkpoint");
    const fs::path out_dir = prepare_out_dir(a.out);
    for (const auto& [key, value] : std::vector<std::pair<std::string, std::string>>{
             {"out", a.out}, {"traj", a.traj}, {"labels", a.labels}, {"checkpoint", a.checkpoint}}) {
        r.resolved.set(key, value);
        r.known.insert(key);
    }

    const int t_obs = static_cast<int>(r.i(a.o_t_obs, a.t_obs, "t_obs"));
    const int horizon = static_cast<int>(r.i(a.o_horizon, a.horizon, "horizon"));
    const int stride = static_cast<int>(r.i(a.o_stride, a.stride, "stride"));
    const int k = static_cast<int>(r.i(a.o_k, a.k, "k"));
    const double rho = r.d(a.o_rho, a.rho, "rho");
    const std::uint64_t seed = r.u(a.o_seed, a.seed, "seed");
    const bool ind_fde = r.b(a.o_ind_fde, a.independent_min_fde, "independent_min_fde");
    const std::string dataset =
        r.s(a.o_dataset, a.dataset.empty() ? fs::path(a.traj).stem().string() : a.dataset,
            "dataset");
    const std::string split = r.s(a.o_split, a.split, "split");
    validate_rho(rho);
    if (k < 1) throw ValidationError("eval: k must be >= 1");
    r.finish(out_dir);

    const auto scenes = load_scenes_checked(a.traj, a.labels, t_obs, horizon, stride);
    ModelParams params = load_checkpoint(a.checkpoint);
    const Metrics m = best_of_k_eval(scenes, params, k, rho, seed, ind_fde);

    std::string csv = "dataset,split,k,rho,ade_m,fde_m,n_scenes,n_peds,seed\n";
    csv += dataset + "," + split + "," + std::to_string(k) + "," + csv_field(rho) + "," +
           csv_field(m.ade) + "," + csv_field(m.fde) + "," + std::to_string(m.n_scenes) + "," +
           std::to_string(m.n_peds) + "," + std::to_string(seed) + "\n";
    write_text_file((out_dir / "metrics.csv").string(), csv);
    std::cout << "ADE " << format_double(m.ade) << " m, FDE " << format_double(m.fde) << " m ("
              << m.n_peds << " pedestrians, " << m.n_scenes << " scenes, k=" << k << ")\n";
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

struct SampleArgs {
    std::string config, out, traj, labels, checkpoint;
    long t_obs = 8, horizon = 12, stride = 1, k = 20, scene_index = 0;
    double rho = 1.0;
    std::uint64_t seed = 1;
    bool dump_latents = false;
    CLI::Option *o_t_obs, *o_horizon, *o_stride, *o_k, *o_rho, *o_seed, *o_scene_index,
        *o_dump_latents;
};

void run_sample(SampleArgs& a) {
    OptResolver r;
    r.load(a.config);
    require_readable(a.traj, "--traj");
    if (!a.labels.empty()) require_readable(a.labels, "--labels");
    require_readable(a.checkpoint, "--checkpoint");
    const fs::path out_dir = prepare_out_dir(a.out);
    for (const auto& [key, value] : std::vector<std::pair<std::string, std::string>>{
             {"out", a.out}, {"traj", a.traj}, {"labels", a.labels}, {"checkpoint", a.checkpoint}}) {
        r.resolved.set(key, value);
        r.known.insert(key);
    }

    const int t_obs = static_cast<int>(r.i(a.o_t_obs, a.t_obs, "t_obs"));
    const int horizon = static_cast<int>(r.i(a.o_horizon, a.horizon, "horizon"));
    const int stride = static_cast<int>(r.i(a.o_stride, a.stride, "stride"));
    const int k = static_cast<int>(r.i(a.o_k, a.k, "k"));
    const double rho = r.d(a.o_rho, a.rho, "rho");
    const std::uint64_t seed = r.u(a.o_seed, a.seed, "seed");
    const long scene_index = r.i(a.o_scene_index, a.scene_index, "scene_index");
    const bool dump_latents = r.b(a.o_dump_latents, a.dump_latents, "dump_latents");
    validate_rho(rho);
    if (k < 1) throw ValidationError("sample: k must be >= 1");
    r.finish(out_dir);

    const auto scenes = load_scenes_checked(a.traj, a.labels, t_obs, horizon, stride);
    if (scene_index < 0 || static_cast<std::size_t>(scene_index) >= scenes.size())
        throw ValidationError("sample: scene index " + std::to_string(scene_index) +
                              " outside [0," + std::to_string(scenes.size()) + ")");
    const Scene& scene = scenes[static_cast<std::size_t>(scene_index)];
    ModelParams params = load_checkpoint(a.checkpoint);
    const PredictionSet pred = predict(scene, params, k, rho, seed);

    const std::size_t n = scene.num_pedestrians();
    const std::size_t t_len = static_cast<std::size_t>(scene.horizon);

    // CSV: k*N*T sampled rows plus N*T mean-trajectory rows (sample_index -1).
    std::string csv = "sample_index,ped_index,step,x,y\n";
    auto emit_rows = [&](int sample_index, const std::vector<double>& pos) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t t = 0; t < t_len; ++t) {
                csv += std::to_string(sample_index) + "," + std::to_string(i) + "," +
                       std::to_string(t) + "," + csv_field(pos[(i * t_len + t) * 2]) + "," +
                       csv_field(pos[(i * t_len + t) * 2 + 1]) + "\n";
            }
    };
    std::vector<std::vector<double>> sample_pos(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
        sample_pos[static_cast<std::size_t>(j)] = positions_from_displacements(
            scene, &pred.samples[static_cast<std::size_t>(j) * n * t_len * 2]);
        emit_rows(j, sample_pos[static_cast<std::size_t>(j)]);
    }
    const std::vector<double> mean_pos =
        positions_from_displacements(scene, pred.mean_trajectory.data());
    emit_rows(-1, mean_pos);
    write_text_file((out_dir / "samples.csv").string(), csv);

    if (dump_latents) {
        std::string lat = "sample_index,ped_index,dim,value\n";
        for (int j = 0; j < k; ++j) {
            Tensor eps = sample_joint(scene.groups, ModelDims::latent, rho,
                                      pred.seeds[static_cast<std::size_t>(j)]);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t d = 0; d < ModelDims::latent; ++d)
                    lat += std::to_string(j) + "," + std::to_string(i) + "," + std::to_string(d) +
                           "," + csv_field(eps.at(i, d)) + "\n";
        }
        write_text_file((out_dir / "latents.csv").string(), lat);
    }

    // Plot: observed solid, ground truth dashed, mean dot-dashed, samples thin.
    SvgPlot plot;
    const auto& palette = plot_palette();
    for (std::size_t i = 0; i < n; ++i) {
        const std::string& color = palette[i % palette.size()];
        std::vector<std::pair<double, double>> observed;
        for (int t = 0; t < scene.t_obs; ++t) observed.emplace_back(scene.px(i, t), scene.py(i, t));
        std::vector<std::pair<double, double>> truth{observed.back()};
        for (int t = scene.t_obs; t < scene.total_steps(); ++t)
            truth.emplace_back(scene.px(i, t), scene.py(i, t));
        for (int j = 0; j < k; ++j) {
            std::vector<std::pair<double, double>> line{observed.back()};
            const auto& pos = sample_pos[static_cast<std::size_t>(j)];
            for (std::size_t t = 0; t < t_len; ++t)
                line.emplace_back(pos[(i * t_len + t) * 2], pos[(i * t_len + t) * 2 + 1]);
            plot.polyline(line, color, 0.6, "", 0.45);
        }
        std::vector<std::pair<double, double>> mean_line{observed.back()};
        for (std::size_t t = 0; t < t_len; ++t)
            mean_line.emplace_back(mean_pos[(i * t_len + t) * 2], mean_pos[(i * t_len + t) * 2 + 1]);
        plot.polyline(mean_line, color, 1.4, "8 3 2 3");
        plot.polyline(truth, color, 1.4, "6 4");
        plot.polyline(observed, color, 2.0);
        plot.circle(observed.back().first, observed.back().second, 3.0, color);
    }
    write_text_file((out_dir / "samples.svg").string(), plot.render());
    std::cout << "wrote " << (out_dir / "samples.csv").string() << " and samples.svg (scene "
              << scene_index << ", " << n << " pedestrians)\n";
}

// ---------------------------------------------------------------------------
// sweep-rho
// ---------------------------------------------------------------------------

struct SweepArgs {
    std::string config, out, traj, labels, rhos = "0,0.2,0.5,0.7,0.9,1", variant = "hierarchical";
    long t_obs = 8, horizon = 12, stride = 1, epochs = 400, batch = 64, k = 20, eval_k = 20;
    double lr = 1e-4, alpha = 1.0, target_ade = 0.0;
    std::uint64_t seed = 1;
    CLI::Option *o_t_obs, *o_horizon, *o_stride, *o_epochs, *o_batch, *o_k, *o_eval_k, *o_lr,
        *o_alpha, *o_target_ade, *o_seed, *o_rhos, *o_variant;
};

void run_sweep(SweepArgs& a) {
    OptResolver r;
    r.load(a.config);
    require_readable(a.traj, "--traj");
    if (!a.labels.empty()) require_readable(a.labels, "--labels");
    const fs::path out_dir = prepare_out_dir(a.out);
    for (const auto& [key, value] : std::vector<std::pair<std::string, std::string>>{
             {"out", a.out}, {"traj", a.traj}, {"labels", a.labels}}) {
        r.resolved.set(key, value);
        r.known.insert(key);
    }

    TrainConfig cfg;
    const int t_obs = static_cast<int>(r.i(a.o_t_obs, a.t_obs, "t_obs"));
    const int horizon = static_cast<int>(r.i(a.o_horizon, a.horizon, "horizon"));
    const int stride = static_cast<int>(r.i(a.o_stride, a.stride, "stride"));
    cfg.loss.epochs = static_cast<int>(r.i(a.o_epochs, a.epochs, "epochs"));
    cfg.loss.batch_size = static_cast<int>(r.i(a.o_batch, a.batch, "batch"));
    cfg.loss.k_variety = static_cast<int>(r.i(a.o_k, a.k, "k_variety"));
    const int eval_k = static_cast<int>(r.i(a.o_eval_k, a.eval_k, "eval_k"));
    cfg.loss.learning_rate = r.d(a.o_lr, a.lr, "learning_rate");
    cfg.loss.alpha = r.d(a.o_alpha, a.alpha, "alpha");
    cfg.target_ade = r.d(a.o_target_ade, a.target_ade, "target_ade");
    cfg.seed = r.u(a.o_seed, a.seed, "seed");
    cfg.variant = variant_from_string(r.s(a.o_variant, a.variant, "variant"));
    const std::string rhos_str = r.s(a.o_rhos, a.rhos, "rhos");
    const std::vector<double> rhos = parse_double_list(rhos_str, "--rhos");
    if (rhos.empty()) throw ValidationError("sweep-rho: need at least one rho");
    for (double rho : rhos) validate_rho(rho);  // rejected before any training starts
    r.finish(out_dir);

    const auto scenes = load_scenes_checked(a.traj, a.labels, t_obs, horizon, stride);
    const auto rows = rho_sweep(scenes, scenes, scenes, cfg, eval_k, rhos);

    std::string csv = "rho,ade_m,fde_m\n";
    for (const auto& row : rows)
        csv += csv_field(row.rho) + "," + csv_field(row.ade) + "," + csv_field(row.fde) + "\n";
    write_text_file((out_dir / "rho_sweep.csv").string(), csv);

    SvgPlot plot;
    std::vector<std::pair<double, double>> ade_pts, fde_pts;
    for (const auto& row : rows) {
        ade_pts.emplace_back(row.rho, row.ade);
        fde_pts.emplace_back(row.rho, row.fde);
    }
    plot.polyline(ade_pts, "#1f77b4", 2.0);
    plot.polyline(fde_pts, "#d62728", 2.0);
    for (const auto& p : ade_pts) plot.circle(p.first, p.second, 3.0, "#1f77b4");
    for (const auto& p : fde_pts) plot.circle(p.first, p.second, 3.0, "#d62728");
    plot.text(rows.front().rho, rows.front().ade, "ADE");
    plot.text(rows.front().rho, rows.front().fde, "FDE");
    write_text_file((out_dir / "rho_sweep.svg").string(), plot.render());

    for (const auto& row : rows)
        std::cout << "rho " << format_double(row.rho) << ": ADE " << format_double(row.ade)
                  << " m, FDE " << format_double(row.fde) << " m\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"group-aware pedestrian trajectory prediction"};
    app.require_subcommand(1);
    std::function<void()> action;

    GenSynthArgs gen;
    auto* cmd_gen = app.add_subcommand("gen-synth", "generate a synthetic group-coherent dataset");
    cmd_gen->add_option("--config", gen.config, "key=value config file");
    cmd_gen->add_option("--out", gen.out, "output directory")->required();
    gen.o_scenes = cmd_gen->add_option("--scenes", gen.scenes, "number of independent scenes");
    gen.o_groups = cmd_gen->add_option("--groups", gen.groups, "groups per scene");
    gen.o_group_size = cmd_gen->add_option("--group-size", gen.group_size, "pedestrians per group");
    gen.o_sizes = cmd_gen->add_option("--sizes", gen.sizes, "explicit sizes, e.g. 2,3,2");
    gen.o_speed_min = cmd_gen->add_option("--speed-min", gen.speed_min, "m per step");
    gen.o_speed_max = cmd_gen->add_option("--speed-max", gen.speed_max, "m per step");
    gen.o_noise = cmd_gen->add_option("--noise", gen.noise, "per-step displacement noise sigma");
    gen.o_gap = cmd_gen->add_option("--gap", gen.gap, "lateral member spacing, >= 0.4");
    gen.o_frames = cmd_gen->add_option("--frames", gen.frames, "frames per scene");
    gen.o_seed = cmd_gen->add_option("--seed", gen.seed, "generator seed");
    cmd_gen->callback([&] { action = [&] { run_gen_synth(gen); }; });

    LabelGroupsArgs lab;
    auto* cmd_lab = app.add_subcommand("label-groups", "heuristic coherent-group labeling");
    cmd_lab->add_option("--config", lab.config, "key=value config file");
    cmd_lab->add_option("--traj", lab.traj, "trajectory file")->required();
    cmd_lab->add_option("--out", lab.out, "output directory")->required();
    lab.o_eps_pos = cmd_lab->add_option("--eps-pos", lab.eps_pos, "position threshold, m");
    lab.o_eps_vel = cmd_lab->add_option("--eps-vel", lab.eps_vel, "velocity threshold, m/step");
    lab.o_min_cluster = cmd_lab->add_option("--min-cluster", lab.min_cluster, "minimum group size");
    cmd_lab->callback([&] { action = [&] { run_label_groups(lab); }; });

    TrainArgs tr;
    auto* cmd_tr = app.add_subcommand("train", "train a predictor");
    cmd_tr->add_option("--config", tr.config, "key=value config file");
    cmd_tr->add_option("--traj", tr.traj, "training trajectory file")->required();
    cmd_tr->add_option("--labels", tr.labels, "group label file (heuristic labels if absent)");
    cmd_tr->add_option("--val-traj", tr.val_traj, "validation trajectory file");
    cmd_tr->add_option("--val-labels", tr.val_labels, "validation label file");
    cmd_tr->add_option("--resume", tr.resume, "checkpoint to resume from");
    cmd_tr->add_option("--out", tr.out, "output directory")->required();
    tr.o_t_obs = cmd_tr->add_option("--t-obs", tr.t_obs, "observed steps");
    tr.o_horizon = cmd_tr->add_option("--horizon", tr.horizon, "prediction steps");
    tr.o_stride = cmd_tr->add_option("--stride", tr.stride, "window stride");
    tr.o_epochs = cmd_tr->add_option("--epochs", tr.epochs, "training epochs");
    tr.o_batch = cmd_tr->add_option("--batch", tr.batch, "scenes per optimizer step");
    tr.o_k = cmd_tr->add_option("--k", tr.k, "variety loss samples");
    tr.o_eval_k = cmd_tr->add_option("--eval-k", tr.eval_k, "validation best-of-k");
    tr.o_lr = cmd_tr->add_option("--lr", tr.lr, "learning rate");
    tr.o_alpha = cmd_tr->add_option("--alpha", tr.alpha, "KL weight");
    tr.o_rho = cmd_tr->add_option("--rho", tr.rho, "within-group correlation");
    tr.o_target_ade = cmd_tr->add_option("--target-ade", tr.target_ade,
                                         "stop when validation ADE falls below (0 = off)");
    tr.o_seed = cmd_tr->add_option("--seed", tr.seed, "training seed");
    tr.o_variant = cmd_tr->add_option("--variant", tr.variant, "hierarchical | parallel");
    cmd_tr->callback([&] { action = [&] { run_train(tr); }; });

    EvalArgs ev;
    auto* cmd_ev = app.add_subcommand("eval", "best-of-k evaluation of a checkpoint");
    cmd_ev->add_option("--config", ev.config, "key=value config file");
    cmd_ev->add_option("--traj", ev.traj, "trajectory file")->required();
    cmd_ev->add_option("--labels", ev.labels, "group label file");
    cmd_ev->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required();
    cmd_ev->add_option("--out", ev.out, "output directory")->required();
    ev.o_t_obs = cmd_ev->add_option("--t-obs", ev.t_obs, "observed steps");
    ev.o_horizon = cmd_ev->add_option("--horizon", ev.horizon, "prediction steps");
    ev.o_stride = cmd_ev->add_option("--stride", ev.stride, "window stride");
    ev.o_k = cmd_ev->add_option("--k", ev.k, "samples per pedestrian");
    ev.o_rho = cmd_ev->add_option("--rho", ev.rho, "within-group correlation");
    ev.o_seed = cmd_ev->add_option("--seed", ev.seed, "sampling seed");
    ev.o_ind_fde = cmd_ev->add_flag("--independent-min-fde", ev.independent_min_fde,
                                    "report per-pedestrian min FDE instead of FDE of min-ADE sample");
    ev.o_dataset = cmd_ev->add_option("--dataset", ev.dataset, "dataset name for the CSV");
    ev.o_split = cmd_ev->add_option("--split", ev.split, "split name for the CSV");
    cmd_ev->callback([&] { action = [&] { run_eval(ev); }; });

    SampleArgs sa;
    auto* cmd_sa = app.add_subcommand("sample", "sample trajectories and render a plot");
    cmd_sa->add_option("--config", sa.config, "key=value config file");
    cmd_sa->add_option("--traj", sa.traj, "trajectory file")->required();
    cmd_sa->add_option("--labels", sa.labels, "group label file");
    cmd_sa->add_option("--checkpoint", sa.checkpoint, "checkpoint file")->required();
    cmd_sa->add_option("--out", sa.out, "output directory")->required();
    sa.o_t_obs = cmd_sa->add_option("--t-obs", sa.t_obs, "observed steps");
    sa.o_horizon = cmd_sa->add_option("--horizon", sa.horizon, "prediction steps");
    sa.o_stride = cmd_sa->add_option("--stride", sa.stride, "window stride");
    sa.o_k = cmd_sa->add_option("--k", sa.k, "samples per pedestrian");
    sa.o_rho = cmd_sa->add_option("--rho", sa.rho, "within-group correlation");
    sa.o_seed = cmd_sa->add_option("--seed", sa.seed, "sampling seed");
    sa.o_scene_index = cmd_sa->add_option("--scene-index", sa.scene_index, "scene to sample");
    sa.o_dump_latents = cmd_sa->add_flag("--dump-latents", sa.dump_latents,
                                         "also write latents.csv for statistical audit");
    cmd_sa->callback([&] { action = [&] { run_sample(sa); }; });

    SweepArgs sw;
    auto* cmd_sw = app.add_subcommand("sweep-rho", "train and evaluate across correlations");
    cmd_sw->add_option("--config", sw.config, "key=value config file");
    cmd_sw->add_option("--traj", sw.traj, "trajectory file")->required();
    cmd_sw->add_option("--labels", sw.labels, "group label file");
    cmd_sw->add_option("--out", sw.out, "output directory")->required();
    sw.o_t_obs = cmd_sw->add_option("--t-obs", sw.t_obs, "observed steps");
    sw.o_horizon = cmd_sw->add_option("--horizon", sw.horizon, "prediction steps");
    sw.o_stride = cmd_sw->add_option("--stride", sw.stride, "window stride");
    sw.o_epochs = cmd_sw->add_option("--epochs", sw.epochs, "training epochs per rho");
    sw.o_batch = cmd_sw->add_option("--batch", sw.batch, "scenes per optimizer step");
    sw.o_k = cmd_sw->add_option("--k", sw.k, "variety loss samples");
    sw.o_eval_k = cmd_sw->add_option("--eval-k", sw.eval_k, "evaluation best-of-k");
    sw.o_lr = cmd_sw->add_option("--lr", sw.lr, "learning rate");
    sw.o_alpha = cmd_sw->add_option("--alpha", sw.alpha, "KL weight");
    sw.o_target_ade = cmd_sw->add_option("--target-ade", sw.target_ade, "early-stop ADE");
    sw.o_seed = cmd_sw->add_option("--seed", sw.seed, "seed");
    sw.o_rhos = cmd_sw->add_option("--rhos", sw.rhos, "comma-separated correlations");
    sw.o_variant = cmd_sw->add_option("--variant", sw.variant, "hierarchical | parallel");
    cmd_sw->callback([&] { action = [&] { run_sweep(sw); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        action();
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
