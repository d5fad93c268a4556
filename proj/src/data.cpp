#include "rseg/data.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace rseg {

const char* class_name(int class_id) {
    switch (class_id) {
        case 0: return "car";
        case 1: return "pedestrian";
        case 2: return "pedestrian_group";
        case 3: return "large_vehicle";
        case 4: return "two_wheeler";
        default: return "unknown";
    }
}

void save_frames_jsonl(const FrameList& frames, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    for (const RadarFrame& f : frames) {
        nlohmann::json j;
        j["id"] = f.id;
        j["labeled"] = f.labeled();
        nlohmann::json pts = nlohmann::json::array();
        for (int i = 0; i < f.size(); ++i) {
            const RadarPoint& p = f.points[static_cast<size_t>(i)];
            nlohmann::json rec = {p.x, p.y, p.v_r, p.rcs};
            if (f.labeled()) {
                rec.push_back(f.labels[static_cast<size_t>(i)]);
                rec.push_back(f.instances[static_cast<size_t>(i)]);
            } else {
                rec.push_back(nullptr);
                rec.push_back(nullptr);
            }
            pts.push_back(std::move(rec));
        }
        j["points"] = std::move(pts);
        os << j.dump() << '\n';
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

FrameList load_frames_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    FrameList frames;
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        RadarFrame f;
        f.id = j.at("id").get<int64_t>();
        const bool labeled = j.at("labeled").get<bool>();
        for (const auto& rec : j.at("points")) {
            if (rec.size() < 6)
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": point record needs 6 fields");
            RadarPoint p;
            p.x = rec[0].get<double>();
            p.y = rec[1].get<double>();
            p.v_r = rec[2].get<double>();
            p.rcs = rec[3].get<double>();
            f.points.push_back(p);
            if (labeled) {
                f.labels.push_back(rec[4].get<int>());
                f.instances.push_back(rec[5].get<int>());
            }
        }
        if (labeled && f.labels.empty() && !f.points.empty())
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": labeled frame without labels");
        frames.push_back(std::move(f));
    }
    return frames;
}

}  // namespace rseg
