#include "rseg/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "rseg/rng.hpp"

namespace rseg {

void SceneConfig::validate() const {
    for (const ClassProfile& c : classes) {
        if (c.min_instances < 0 || c.max_instances < c.min_instances)
            throw std::invalid_argument("SceneConfig: bad instance-count range");
        if (c.min_points < 1 || c.max_points < c.min_points)
            throw std::invalid_argument("SceneConfig: bad points-per-instance range");
        if (c.extent <= 0.0) throw std::invalid_argument("SceneConfig: extent must be positive");
        if (c.max_speed < c.min_speed) throw std::invalid_argument("SceneConfig: bad speed range");
        if (c.rcs_spread < 0.0) throw std::invalid_argument("SceneConfig: bad rcs spread");
    }
    if (fov_x_max <= fov_x_min || fov_y_max <= fov_y_min)
        throw std::invalid_argument("SceneConfig: empty field of view");
}

SceneConfig SceneConfig::defaults() {
    SceneConfig c;
    // Car and large vehicle overlap in speed and extent; pedestrian vs group
    // differ mostly in point count. Minority classes stay rare in point share
    // but every class keeps a presence floor so a 32-frame minibatch reliably
    // carries enough points of each class for balanced selection.
    c.classes[0] = {1, 3, 3, 10, 1.8, 4.0, 16.0, 12.0, 2.0};   // car
    c.classes[1] = {1, 3, 1, 4, 0.25, 0.5, 2.5, -8.0, 2.0};    // pedestrian
    c.classes[2] = {1, 1, 5, 14, 1.4, 0.5, 2.5, -2.0, 2.0};    // pedestrian group
    c.classes[3] = {0, 2, 6, 16, 3.5, 3.0, 14.0, 22.0, 3.0};   // large vehicle
    c.classes[4] = {1, 2, 2, 6, 0.7, 2.0, 10.0, 4.0, 2.0};     // two-wheeler
    return c;
}

RadarFrame generate_frame(const SceneConfig& config, int64_t frame_id, std::mt19937_64& rng) {
    config.validate();
    RadarFrame frame;
    frame.id = frame_id;
    std::uniform_real_distribution<double> ux(config.fov_x_min, config.fov_x_max);
    std::uniform_real_distribution<double> uy(config.fov_y_min, config.fov_y_max);
    std::uniform_real_distribution<double> uang(0.0, 2.0 * M_PI);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<int> counts(kNumClasses);
    int total_instances = 0;
    for (int cls = 0; cls < kNumClasses; ++cls) {
        const ClassProfile& prof = config.classes[static_cast<size_t>(cls)];
        std::uniform_int_distribution<int> ucount(prof.min_instances, prof.max_instances);
        counts[static_cast<size_t>(cls)] = ucount(rng);
        total_instances += counts[static_cast<size_t>(cls)];
    }
    if (total_instances == 0) {
        // A frame must have at least one point; draw one extra instance.
        std::uniform_int_distribution<int> ucls(0, kNumClasses - 1);
        counts[static_cast<size_t>(ucls(rng))] = 1;
    }

    int next_instance = 0;
    for (int cls = 0; cls < kNumClasses; ++cls) {
        const ClassProfile& prof = config.classes[static_cast<size_t>(cls)];
        for (int k = 0; k < counts[static_cast<size_t>(cls)]; ++k) {
            const double cx = ux(rng);
            const double cy = uy(rng);
            std::uniform_real_distribution<double> uspeed(prof.min_speed, prof.max_speed);
            const double speed = uspeed(rng);
            const double heading = uang(rng);
            // Base radial velocity: projection of the velocity onto the line
            // of sight from the sensor at the origin.
            const double range = std::max(std::hypot(cx, cy), 1e-6);
            const double base_vr =
                speed * (std::cos(heading) * cx + std::sin(heading) * cy) / range;

            std::uniform_int_distribution<int> upts(prof.min_points, prof.max_points);
            const int npts = upts(rng);
            const int instance_id = next_instance++;
            for (int p = 0; p < npts; ++p) {
                double dx, dy;
                do {
                    dx = gauss(rng) * prof.extent;
                    dy = gauss(rng) * prof.extent;
                } while (std::hypot(dx, dy) > 3.0 * prof.extent);
                RadarPoint pt;
                pt.x = cx + dx;
                pt.y = cy + dy;
                pt.v_r = base_vr + gauss(rng) * config.velocity_jitter;
                pt.rcs = prof.rcs_mean + gauss(rng) * prof.rcs_spread;
                frame.points.push_back(pt);
                frame.labels.push_back(cls);
                frame.instances.push_back(instance_id);
            }
        }
    }

    // Shuffle point order so instance points are not contiguous.
    std::vector<int> order(frame.points.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    RadarFrame shuffled;
    shuffled.id = frame.id;
    for (int i : order) {
        shuffled.points.push_back(frame.points[static_cast<size_t>(i)]);
        shuffled.labels.push_back(frame.labels[static_cast<size_t>(i)]);
        shuffled.instances.push_back(frame.instances[static_cast<size_t>(i)]);
    }
    return shuffled;
}

FrameList generate_corpus(const SceneConfig& config, int frame_count, uint64_t seed) {
    FrameList frames;
    frames.reserve(static_cast<size_t>(frame_count));
    for (int i = 0; i < frame_count; ++i) {
        std::mt19937_64 rng(mix_seed(seed, static_cast<uint64_t>(i)));
        frames.push_back(generate_frame(config, i, rng));
    }
    return frames;
}

DatasetSplit split_dataset(FrameList frames, uint64_t seed) {
    const int n = static_cast<int>(frames.size());
    if (n < 10) throw std::invalid_argument("split_dataset: need at least 10 frames");
    std::vector<int> order(frames.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(seed, 0x5eedu));
    std::shuffle(order.begin(), order.end(), rng);
    const int n_val = static_cast<int>(std::lround(0.1 * n));
    const int n_test = static_cast<int>(std::lround(0.1 * n));
    DatasetSplit split;
    for (int i = 0; i < n; ++i) {
        RadarFrame& f = frames[static_cast<size_t>(order[static_cast<size_t>(i)])];
        if (i < n - n_val - n_test)
            split.train.push_back(std::move(f));
        else if (i < n - n_test)
            split.validation.push_back(std::move(f));
        else
            split.test.push_back(std::move(f));
    }
    return split;
}

FrameList mask_labels(FrameList train, double labeled_fraction, uint64_t seed) {
    if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0))
        throw std::invalid_argument("mask_labels: fraction must be in (0,1]");
    const int n = static_cast<int>(train.size());
    const int keep = static_cast<int>(std::lround(labeled_fraction * n));
    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(seed, 0x1a5cull));
    std::shuffle(order.begin(), order.end(), rng);
    for (int i = keep; i < n; ++i) {
        RadarFrame& f = train[static_cast<size_t>(order[static_cast<size_t>(i)])];
        f.labels.clear();
        f.instances.clear();
    }
    return train;
}

}  // namespace rseg
