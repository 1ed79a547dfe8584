#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "grouptraj/groups.hpp"
#include "grouptraj/rng.hpp"
#include "grouptraj/text_io.hpp"

namespace grouptraj {

// Trajectory ingestion, scene windowing, relative representations and the
// synthetic crowd generator. File formats:
//   trajectory file: whitespace-separated "frame_id ped_id x y", one record
//     per line, '#' comments ignored
//   group label file: whitespace-separated "ped_id group_id"

struct TrajRecord {
    long frame = 0;
    long ped = 0;
    double x = 0.0;
    double y = 0.0;
};

struct RawTrajectoryTable {
    std::vector<TrajRecord> records;  // sorted by (ped, frame)

    std::vector<long> ped_ids() const {
        std::vector<long> ids;
        ids.reserve(records.size());
        for (const auto& r : records) ids.push_back(r.ped);
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        return ids;
    }
};

namespace detail {

inline long coerce_integer(const std::string& field, const std::string& path, std::size_t line_no,
                           const char* what) {
    bool ok = false;
    const double v = parse_double(field, ok);
    if (!ok || std::fabs(v - std::round(v)) > 1e-9) {
        throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": " + what +
                                    " is not an integer: '" + field + "'");
    }
    return static_cast<long>(std::llround(v));
}

}  // namespace detail

inline RawTrajectoryTable load_trajectory_table(const std::string& text, const std::string& path) {
    struct Parsed {
        TrajRecord rec;
        std::size_t line_no;
    };
    std::vector<Parsed> parsed;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto fields = split_fields(line);
        if (fields.empty()) continue;
        if (fields.size() != 4) {
            throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                        ": expected 4 fields (frame ped x y), got " +
                                        std::to_string(fields.size()));
        }
        TrajRecord rec;
        rec.frame = detail::coerce_integer(fields[0], path, line_no, "frame_id");
        rec.ped = detail::coerce_integer(fields[1], path, line_no, "ped_id");
        bool okx = false, oky = false;
        rec.x = parse_double(fields[2], okx);
        rec.y = parse_double(fields[3], oky);
        if (!okx || !oky) {
            throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                        ": malformed coordinate in '" + line + "'");
        }
        parsed.push_back({rec, line_no});
    }
    if (parsed.empty()) throw std::invalid_argument(path + ": no trajectory records");

    std::stable_sort(parsed.begin(), parsed.end(), [](const Parsed& a, const Parsed& b) {
        return std::tie(a.rec.ped, a.rec.frame) < std::tie(b.rec.ped, b.rec.frame);
    });
    for (std::size_t i = 1; i < parsed.size(); ++i) {
        if (parsed[i].rec.ped == parsed[i - 1].rec.ped &&
            parsed[i].rec.frame == parsed[i - 1].rec.frame) {
            throw std::invalid_argument(path + ": duplicate (frame " +
                                     std::to_string(parsed[i].rec.frame) + ", ped " +
                                     std::to_string(parsed[i].rec.ped) + ") at lines " +
                                     std::to_string(parsed[i - 1].line_no) + " and " +
                                     std::to_string(parsed[i].line_no));
        }
    }
    RawTrajectoryTable table;
    table.records.reserve(parsed.size());
    for (const auto& p : parsed) table.records.push_back(p.rec);
    return table;
}

inline RawTrajectoryTable load_trajectory_file(const std::string& path) {
    return load_trajectory_table(read_text_file(path), path);
}

inline std::string format_trajectory_table(const RawTrajectoryTable& table) {
    std::string out;
    for (const auto& r : table.records) {
        out += std::to_string(r.frame);
        out += ' ';
        out += std::to_string(r.ped);
        out += ' ';
        out += format_double(r.x);
        out += ' ';
        out += format_double(r.y);
        out += '\n';
    }
    return out;
}

inline void write_trajectory_file(const std::string& path, const RawTrajectoryTable& table) {
    write_text_file(path, format_trajectory_table(table));
}

// ---------------------------------------------------------------------------
// Group labels
// ---------------------------------------------------------------------------

// File-level labels: raw group ids per pedestrian id, compacted to [0, M) by
// first occurrence in ped-id order.
struct GroupLabels {
    std::map<long, int> group_of_ped;
    int num_groups = 0;
};

inline GroupLabels compact_labels(const std::map<long, long>& raw) {
    GroupLabels labels;
    std::unordered_map<long, int> remap;
    for (const auto& [ped, raw_group] : raw) {
        auto [it, inserted] = remap.try_emplace(raw_group, labels.num_groups);
        if (inserted) ++labels.num_groups;
        labels.group_of_ped[ped] = it->second;
    }
    return labels;
}

inline GroupLabels load_group_labels_text(const std::string& text, const std::string& path,
                                          const RawTrajectoryTable& table) {
    std::map<long, long> raw;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto fields = split_fields(line);
        if (fields.empty()) continue;
        if (fields.size() != 2) {
            throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                        ": expected 2 fields (ped_id group_id)");
        }
        const long ped = detail::coerce_integer(fields[0], path, line_no, "ped_id");
        const long group = detail::coerce_integer(fields[1], path, line_no, "group_id");
        raw[ped] = group;
    }
    std::string missing;
    for (long ped : table.ped_ids()) {
        if (!raw.count(ped)) missing += (missing.empty() ? "" : ", ") + std::to_string(ped);
    }
    if (!missing.empty()) {
        throw std::invalid_argument(path + ": missing group labels for pedestrians: " + missing);
    }
    return compact_labels(raw);
}

inline GroupLabels load_group_labels(const std::string& path, const RawTrajectoryTable& table) {
    return load_group_labels_text(read_text_file(path), path, table);
}

inline std::string format_group_labels(const GroupLabels& labels) {
    std::string out;
    for (const auto& [ped, group] : labels.group_of_ped) {
        out += std::to_string(ped);
        out += ' ';
        out += std::to_string(group);
        out += '\n';
    }
    return out;
}

inline void write_group_labels(const std::string& path, const GroupLabels& labels) {
    write_text_file(path, format_group_labels(labels));
}

// ---------------------------------------------------------------------------
// Scenes
// ---------------------------------------------------------------------------

// A fixed window of t_obs observed plus horizon future steps containing the
// pedestrians present at every frame of the window.
struct Scene {
    std::vector<long> ped_ids;
    std::vector<double> positions;  // N x (t_obs + horizon) x 2, row-major
    GroupAssignment groups;
    int t_obs = 8;
    int horizon = 12;
    long start_frame = 0;

    std::size_t num_pedestrians() const { return ped_ids.size(); }
    int total_steps() const { return t_obs + horizon; }

    double px(std::size_t i, int t) const {
        return positions[(i * static_cast<std::size_t>(total_steps()) + static_cast<std::size_t>(t)) * 2];
    }
    double py(std::size_t i, int t) const {
        return positions[(i * static_cast<std::size_t>(total_steps()) + static_cast<std::size_t>(t)) * 2 + 1];
    }
};

inline std::vector<Scene> extract_scenes(const RawTrajectoryTable& table, const GroupLabels& labels,
                                         int t_obs = 8, int horizon = 12, int stride = 1) {
    if (t_obs < 1 || horizon < 1 || stride < 1)
        throw std::invalid_argument("extract_scenes: t_obs, horizon and stride must be positive");
    const int window = t_obs + horizon;

    std::set<long> frame_set;
    for (const auto& r : table.records) frame_set.insert(r.frame);
    const std::vector<long> frames(frame_set.begin(), frame_set.end());
    if (static_cast<int>(frames.size()) < window) return {};

    std::unordered_map<long, std::unordered_map<long, std::pair<double, double>>> by_ped;
    for (const auto& r : table.records) by_ped[r.ped][r.frame] = {r.x, r.y};
    const std::vector<long> all_peds = table.ped_ids();

    std::vector<Scene> scenes;
    for (std::size_t w = 0; w + static_cast<std::size_t>(window) <= frames.size();
         w += static_cast<std::size_t>(stride)) {
        Scene scene;
        scene.t_obs = t_obs;
        scene.horizon = horizon;
        scene.start_frame = frames[w];
        std::vector<long> raw_groups;
        for (long ped : all_peds) {
            const auto& track = by_ped[ped];
            bool present = true;
            for (int t = 0; t < window && present; ++t)
                present = track.count(frames[w + static_cast<std::size_t>(t)]) > 0;
            if (!present) continue;
            scene.ped_ids.push_back(ped);
            for (int t = 0; t < window; ++t) {
                const auto [x, y] = track.at(frames[w + static_cast<std::size_t>(t)]);
                scene.positions.push_back(x);
                scene.positions.push_back(y);
            }
            raw_groups.push_back(labels.group_of_ped.at(ped));
        }
        if (scene.ped_ids.empty()) continue;
        scene.groups = compact_groups(raw_groups);
        scenes.push_back(std::move(scene));
    }
    return scenes;
}

// ---------------------------------------------------------------------------
// Relative representations
// ---------------------------------------------------------------------------

struct RelativeRepresentation {
    std::size_t n = 0;
    int t_obs = 0;
    int horizon = 0;
    std::vector<double> x_rel;  // N x t_obs x 2 observed per-step displacements
    std::vector<double> p_rel;  // N x N x 2 pairwise positions at t_obs-1
    std::vector<double> y_rel;  // N x horizon x 2 future displacements (loss targets)
};

inline RelativeRepresentation compute_relative(const Scene& scene) {
    RelativeRepresentation rel;
    rel.n = scene.num_pedestrians();
    rel.t_obs = scene.t_obs;
    rel.horizon = scene.horizon;
    rel.x_rel.assign(rel.n * static_cast<std::size_t>(scene.t_obs) * 2, 0.0);
    rel.p_rel.assign(rel.n * rel.n * 2, 0.0);
    rel.y_rel.assign(rel.n * static_cast<std::size_t>(scene.horizon) * 2, 0.0);

    for (std::size_t i = 0; i < rel.n; ++i) {
        for (int t = 1; t < scene.t_obs; ++t) {
            const std::size_t base = (i * static_cast<std::size_t>(scene.t_obs) +
                                      static_cast<std::size_t>(t)) * 2;
            rel.x_rel[base] = scene.px(i, t) - scene.px(i, t - 1);
            rel.x_rel[base + 1] = scene.py(i, t) - scene.py(i, t - 1);
        }
        for (int t = 0; t < scene.horizon; ++t) {
            const std::size_t base = (i * static_cast<std::size_t>(scene.horizon) +
                                      static_cast<std::size_t>(t)) * 2;
            const int abs_t = scene.t_obs + t;
            rel.y_rel[base] = scene.px(i, abs_t) - scene.px(i, abs_t - 1);
            rel.y_rel[base + 1] = scene.py(i, abs_t) - scene.py(i, abs_t - 1);
        }
        for (std::size_t j = 0; j < rel.n; ++j) {
            const std::size_t base = (i * rel.n + j) * 2;
            rel.p_rel[base] = scene.px(j, scene.t_obs - 1) - scene.px(i, scene.t_obs - 1);
            rel.p_rel[base + 1] = scene.py(j, scene.t_obs - 1) - scene.py(i, scene.t_obs - 1);
        }
    }
    return rel;
}

// ---------------------------------------------------------------------------
// Heuristic group labeling (plumbing fallback when no label file exists)
// ---------------------------------------------------------------------------

struct HeuristicLabelConfig {
    double eps_pos = 2.0;  // meters
    double eps_vel = 0.5;  // meters per step
    int min_cluster = 2;
};

namespace detail {

// Connected components of the neighbor graph; components smaller than
// min_cluster dissolve into singletons.
inline std::vector<long> cluster_components(std::size_t n,
                                            const std::vector<std::pair<int, int>>& edges,
                                            int min_cluster) {
    std::vector<int> parent(n);
    for (std::size_t i = 0; i < n; ++i) parent[i] = static_cast<int>(i);
    std::function<int(int)> find = [&](int a) {
        while (parent[static_cast<std::size_t>(a)] != a) {
            parent[static_cast<std::size_t>(a)] =
                parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
            a = parent[static_cast<std::size_t>(a)];
        }
        return a;
    };
    for (auto [a, b] : edges) {
        const int ra = find(a), rb = find(b);
        if (ra != rb) parent[static_cast<std::size_t>(std::max(ra, rb))] = std::min(ra, rb);
    }
    std::vector<int> comp_size(n, 0);
    for (std::size_t i = 0; i < n; ++i) comp_size[static_cast<std::size_t>(find(static_cast<int>(i)))]++;
    std::vector<long> labels(n);
    long next_singleton = static_cast<long>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int root = find(static_cast<int>(i));
        if (comp_size[static_cast<std::size_t>(root)] >= min_cluster) {
            labels[i] = root;
        } else {
            labels[i] = next_singleton++;
        }
    }
    return labels;
}

}  // namespace detail

// Clusters the pedestrians of one scene window by (position at the last
// observed step, mean velocity over the observed window). Always yields a
// valid partition; unclustered pedestrians become singletons.
inline GroupAssignment heuristic_group_labels(const Scene& scene,
                                              const HeuristicLabelConfig& cfg = {}) {
    const std::size_t n = scene.num_pedestrians();
    const int last = scene.t_obs - 1;
    std::vector<double> px(n), py(n), vx(n), vy(n);
    for (std::size_t i = 0; i < n; ++i) {
        px[i] = scene.px(i, last);
        py[i] = scene.py(i, last);
        const double steps = std::max(1, scene.t_obs - 1);
        vx[i] = (scene.px(i, last) - scene.px(i, 0)) / steps;
        vy[i] = (scene.py(i, last) - scene.py(i, 0)) / steps;
    }
    std::vector<std::pair<int, int>> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dpos = std::hypot(px[i] - px[j], py[i] - py[j]);
            const double dvel = std::hypot(vx[i] - vx[j], vy[i] - vy[j]);
            if (dpos <= cfg.eps_pos && dvel <= cfg.eps_vel)
                edges.emplace_back(static_cast<int>(i), static_cast<int>(j));
        }
    return compact_groups(detail::cluster_components(n, edges, cfg.min_cluster));
}

// File-level variant for whole trajectory tables: pedestrians are neighbors
// when their tracks overlap in time for at least two frames, stay within
// eps_pos on average over the overlap, and match velocity within eps_vel.
inline GroupLabels heuristic_group_labels_table(const RawTrajectoryTable& table,
                                                const HeuristicLabelConfig& cfg = {}) {
    const std::vector<long> peds = table.ped_ids();
    const std::size_t n = peds.size();
    std::unordered_map<long, std::map<long, std::pair<double, double>>> tracks;
    for (const auto& r : table.records) tracks[r.ped][r.frame] = {r.x, r.y};

    std::vector<std::pair<double, double>> vel(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& tr = tracks[peds[i]];
        const auto& first = *tr.begin();
        const auto& last = *tr.rbegin();
        const double steps = std::max<double>(1.0, static_cast<double>(tr.size() - 1));
        vel[i] = {(last.second.first - first.second.first) / steps,
                  (last.second.second - first.second.second) / steps};
    }

    std::vector<std::pair<int, int>> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto& ti = tracks[peds[i]];
            const auto& tj = tracks[peds[j]];
            double dist_sum = 0.0;
            int overlap = 0;
            for (const auto& [frame, pos] : ti) {
                auto it = tj.find(frame);
                if (it == tj.end()) continue;
                dist_sum += std::hypot(pos.first - it->second.first, pos.second - it->second.second);
                ++overlap;
            }
            if (overlap < 2) continue;
            const double dpos = dist_sum / overlap;
            const double dvel = std::hypot(vel[i].first - vel[j].first, vel[i].second - vel[j].second);
            if (dpos <= cfg.eps_pos && dvel <= cfg.eps_vel)
                edges.emplace_back(static_cast<int>(i), static_cast<int>(j));
        }

    const auto comp = detail::cluster_components(n, edges, cfg.min_cluster);
    std::map<long, long> raw;
    for (std::size_t i = 0; i < n; ++i) raw[peds[i]] = comp[i];
    return compact_labels(raw);
}

// ---------------------------------------------------------------------------
// Synthetic crowds
// ---------------------------------------------------------------------------

// One crowd: each group walks a straight line at a shared heading and speed,
// members offset laterally, optional Gaussian per-step displacement noise.
// Headings / speeds / spawn centers may be pinned explicitly; unspecified
// ones are drawn from the seeded generator.
struct SyntheticSpec {
    std::vector<int> group_sizes;
    double speed_min = 0.8;  // meters per step
    double speed_max = 1.4;
    double noise_sigma = 0.0;
    double lateral_gap = 0.5;  // spacing between adjacent members, >= 0.4
    int n_frames = 20;
    std::uint64_t seed = 1;
    std::vector<double> headings;                         // radians, per group
    std::vector<double> speeds;                           // per group
    std::vector<std::pair<double, double>> spawn_centers;  // per group

    int total_pedestrians() const {
        int n = 0;
        for (int s : group_sizes) n += s;
        return n;
    }
};

struct SyntheticCrowd {
    RawTrajectoryTable table;
    GroupLabels labels;
};

inline SyntheticCrowd generate_synthetic_crowd(const SyntheticSpec& spec) {
    if (spec.group_sizes.empty())
        throw std::invalid_argument("synthetic: need at least one group");
    for (int s : spec.group_sizes)
        if (s < 1) throw std::invalid_argument("synthetic: group sizes must be >= 1");
    if (spec.speed_min < 0.0 || spec.speed_max < spec.speed_min)
        throw std::invalid_argument("synthetic: invalid speed range");
    if (spec.noise_sigma < 0.0) throw std::invalid_argument("synthetic: noise sigma must be >= 0");
    if (spec.lateral_gap < 0.4)
        throw std::invalid_argument("synthetic: lateral gap must be >= 0.4 m");
    if (spec.n_frames < 2) throw std::invalid_argument("synthetic: need at least 2 frames");

    const std::size_t m = spec.group_sizes.size();
    auto check_override = [&](std::size_t got, const char* what) {
        if (got != 0 && got != m)
            throw std::invalid_argument(std::string("synthetic: explicit ") + what +
                                        " must cover every group");
    };
    check_override(spec.headings.size(), "headings");
    check_override(spec.speeds.size(), "speeds");
    check_override(spec.spawn_centers.size(), "spawn centers");

    Rng rng(spec.seed);
    std::vector<double> headings(m), speeds(m);
    std::vector<std::pair<double, double>> centers(m);
    for (std::size_t g = 0; g < m; ++g) {
        headings[g] = spec.headings.empty() ? rng.uniform_in(0.0, 2.0 * 3.14159265358979323846)
                                            : spec.headings[g];
        speeds[g] = spec.speeds.empty() ? rng.uniform_in(spec.speed_min, spec.speed_max)
                                        : spec.speeds[g];
        if (speeds[g] < 0.0) throw std::invalid_argument("synthetic: speeds must be >= 0");
        if (!spec.spawn_centers.empty()) {
            centers[g] = spec.spawn_centers[g];
        } else {
            // Deterministic rejection sampling keeps group spawns well apart.
            for (int attempt = 0;; ++attempt) {
                centers[g] = {rng.uniform_in(-12.0, 12.0), rng.uniform_in(-12.0, 12.0)};
                bool clear = true;
                for (std::size_t h = 0; h < g && clear; ++h)
                    clear = std::hypot(centers[g].first - centers[h].first,
                                       centers[g].second - centers[h].second) >= 6.0;
                if (clear) break;
                if (attempt > 1000)
                    throw std::runtime_error("synthetic: could not place groups apart");
            }
        }
    }

    // Spawn positions: members sit on the line perpendicular to the heading.
    std::vector<std::pair<double, double>> spawn;
    std::vector<int> ped_group;
    for (std::size_t g = 0; g < m; ++g) {
        const double nx = -std::sin(headings[g]);
        const double ny = std::cos(headings[g]);
        const int size = spec.group_sizes[g];
        for (int k = 0; k < size; ++k) {
            const double off = (k - (size - 1) / 2.0) * spec.lateral_gap;
            spawn.emplace_back(centers[g].first + off * nx, centers[g].second + off * ny);
            ped_group.push_back(static_cast<int>(g));
        }
    }
    for (std::size_t i = 0; i < spawn.size(); ++i)
        for (std::size_t j = i + 1; j < spawn.size(); ++j) {
            if (std::hypot(spawn[i].first - spawn[j].first, spawn[i].second - spawn[j].second) < 0.1)
                throw std::invalid_argument("synthetic: spawn positions of pedestrians " +
                                            std::to_string(i + 1) + " and " + std::to_string(j + 1) +
                                            " overlap (< 0.1 m)");
        }

    SyntheticCrowd crowd;
    const std::size_t n = spawn.size();
    std::vector<std::pair<double, double>> pos = spawn;
    for (int t = 0; t < spec.n_frames; ++t) {
        if (t > 0) {
            for (std::size_t i = 0; i < n; ++i) {
                const int g = ped_group[i];
                double dx = speeds[static_cast<std::size_t>(g)] * std::cos(headings[static_cast<std::size_t>(g)]);
                double dy = speeds[static_cast<std::size_t>(g)] * std::sin(headings[static_cast<std::size_t>(g)]);
                if (spec.noise_sigma > 0.0) {
                    dx += spec.noise_sigma * rng.normal();
                    dy += spec.noise_sigma * rng.normal();
                }
                pos[i].first += dx;
                pos[i].second += dy;
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            crowd.table.records.push_back(
                {static_cast<long>(t), static_cast<long>(i + 1), pos[i].first, pos[i].second});
        }
    }
    std::sort(crowd.table.records.begin(), crowd.table.records.end(),
              [](const TrajRecord& a, const TrajRecord& b) {
                  return std::tie(a.ped, a.frame) < std::tie(b.ped, b.frame);
              });
    std::map<long, long> raw;
    for (std::size_t i = 0; i < n; ++i) raw[static_cast<long>(i + 1)] = ped_group[i];
    crowd.labels = compact_labels(raw);
    return crowd;
}

// Many independent crowds merged into one table. Scene blocks are separated
// in frame numbering so windowing recovers exactly one scene per block.
inline SyntheticCrowd generate_synthetic_dataset(const SyntheticSpec& spec, int n_scenes) {
    if (n_scenes < 1) throw std::invalid_argument("synthetic: need at least one scene");
    SyntheticCrowd merged;
    std::map<long, long> raw_labels;
    long ped_offset = 0;
    for (int s = 0; s < n_scenes; ++s) {
        SyntheticSpec sub = spec;
        sub.seed = Rng::mix(spec.seed, static_cast<std::uint64_t>(s));
        const SyntheticCrowd crowd = generate_synthetic_crowd(sub);
        const long frame_offset = static_cast<long>(s) * (spec.n_frames + 100);
        for (const auto& r : crowd.table.records) {
            merged.table.records.push_back(
                {r.frame + frame_offset, r.ped + ped_offset, r.x, r.y});
        }
        for (const auto& [ped, group] : crowd.labels.group_of_ped)
            raw_labels[ped + ped_offset] = group + static_cast<long>(s) * 1000;
        ped_offset += static_cast<long>(crowd.labels.group_of_ped.size());
    }
    std::sort(merged.table.records.begin(), merged.table.records.end(),
              [](const TrajRecord& a, const TrajRecord& b) {
                  return std::tie(a.ped, a.frame) < std::tie(b.ped, b.frame);
              });
    merged.labels = compact_labels(raw_labels);
    return merged;
}

}  // namespace grouptraj
