#ifndef ORDINAL_IO_HPP
#define ORDINAL_IO_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ordinal/geometry.hpp"
#include "ordinal/network.hpp"
#include "ordinal/supervision.hpp"
#include "ordinal/volumetric.hpp"

namespace ordinal {

using json = nlohmann::json;

// Pose JSON: {"joints": [[x, y, z], ...], "skeleton": "<id>"}; 2D poses omit z.
struct LabeledPose3 {
    Pose3D pose;
    std::string skeleton;
};
struct LabeledPose2 {
    Pose2D pose;
    std::string skeleton;
};

json pose_to_json(const Pose3D& pose, const std::string& skeleton);
json pose_to_json(const Pose2D& pose, const std::string& skeleton);
LabeledPose3 pose3_from_json(const json& j);
LabeledPose2 pose2_from_json(const json& j);

// RelationSet JSON: {"pairs": [{"i": 0, "j": 5, "r": 1}, ...]}
json relations_to_json(const RelationSet& set);
RelationSet relations_from_json(const json& j);

// MoCap dataset: JSON lines, one pose object per line.
void write_poses_jsonl(const std::filesystem::path& path, const std::vector<Pose3D>& poses,
                       const std::string& skeleton);
std::vector<Pose3D> read_poses_jsonl(const std::filesystem::path& path,
                                     std::string* skeleton = nullptr);

json spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const json& j);

// Checkpoint file: one line of JSON header, a newline, then n_params
// little-endian 8-byte reals.
struct Checkpoint {
    NetworkSpec spec;
    std::uint64_t seed = 0;
    long step = 0;
    Vec<double> params;
    json extra = json::object();
};

Checkpoint make_checkpoint(const Network<double>& net, long step, json extra = json::object());
Network<double> network_from_checkpoint(const Checkpoint& ckpt);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws DataError on a malformed or truncated file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Volume dump: JSON header line {W, H, D, N, axis_coords}, then the scores as
// 8-byte reals, x fastest, one joint after another.
void save_volume(const std::filesystem::path& path, const VolumeScores<double>& scores);
VolumeScores<double> load_volume(const std::filesystem::path& path);

// Writes `text` to `path` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_file(const std::filesystem::path& path);

} // namespace ordinal

#endif // ORDINAL_IO_HPP
