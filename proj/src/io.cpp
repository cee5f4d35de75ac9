#include "ordinal/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ordinal {

static_assert(std::endian::native == std::endian::little,
              "binary checkpoint and volume formats assume a little-endian host");

namespace {

template <int Cols>
Eigen::Matrix<double, Eigen::Dynamic, Cols> joints_from_json(const json& j) {
    if (!j.is_object() || !j.contains("joints") || !j["joints"].is_array())
        throw DataError("pose JSON: missing \"joints\" array");
    const auto& rows = j["joints"];
    Eigen::Matrix<double, Eigen::Dynamic, Cols> out(static_cast<Eigen::Index>(rows.size()), Cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (!rows[r].is_array() || rows[r].size() != static_cast<std::size_t>(Cols))
            throw DataError("pose JSON: joint " + std::to_string(r) + " needs " +
                            std::to_string(Cols) + " coordinates");
        for (int c = 0; c < Cols; ++c) {
            if (!rows[r][static_cast<std::size_t>(c)].is_number())
                throw DataError("pose JSON: non-numeric coordinate");
            out(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)].get<double>();
        }
    }
    if (!out.allFinite())
        throw DataError("pose JSON: non-finite coordinate");
    return out;
}

template <typename Derived>
json joints_to_json(const Eigen::MatrixBase<Derived>& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string skeleton_of(const json& j) {
    return j.contains("skeleton") && j["skeleton"].is_string() ? j["skeleton"].get<std::string>()
                                                              : std::string();
}

void write_binary(std::ostream& os, const double* data, std::size_t count) {
    os.write(reinterpret_cast<const char*>(data),
             static_cast<std::streamsize>(count * sizeof(double)));
}

// Splits "<json header>\n<binary payload>".
std::pair<json, std::string> split_header(const std::filesystem::path& path) {
    const std::string raw = read_file(path);
    const auto nl = raw.find('\n');
    if (nl == std::string::npos)
        throw DataError(path.string() + ": missing header line");
    json header;
    try {
        header = json::parse(raw.substr(0, nl));
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": unreadable header: " + e.what());
    }
    return {std::move(header), raw.substr(nl + 1)};
}

void read_doubles(const std::string& payload, std::size_t count, double* out,
                  const std::filesystem::path& path) {
    if (payload.size() != count * sizeof(double))
        throw DataError(path.string() + ": payload holds " + std::to_string(payload.size()) +
                        " bytes, header promises " + std::to_string(count * sizeof(double)));
    std::memcpy(out, payload.data(), payload.size());
}

} // namespace

json pose_to_json(const Pose3D& pose, const std::string& skeleton) {
    return {{"joints", joints_to_json(pose)}, {"skeleton", skeleton}};
}

json pose_to_json(const Pose2D& pose, const std::string& skeleton) {
    return {{"joints", joints_to_json(pose)}, {"skeleton", skeleton}};
}

LabeledPose3 pose3_from_json(const json& j) {
    return {joints_from_json<3>(j), skeleton_of(j)};
}

LabeledPose2 pose2_from_json(const json& j) {
    return {joints_from_json<2>(j), skeleton_of(j)};
}

json relations_to_json(const RelationSet& set) {
    json pairs = json::array();
    for (const auto& rel : set.relations)
        pairs.push_back({{"i", rel.i}, {"j", rel.j}, {"r", rel.r}});
    return {{"pairs", std::move(pairs)}};
}

RelationSet relations_from_json(const json& j) {
    if (!j.is_object() || !j.contains("pairs") || !j["pairs"].is_array())
        throw DataError("relations JSON: missing \"pairs\" array");
    RelationSet out;
    for (const auto& p : j["pairs"]) {
        if (!p.is_object() || !p.contains("i") || !p.contains("j") || !p.contains("r") ||
            !p["i"].is_number_integer() || !p["j"].is_number_integer() ||
            !p["r"].is_number_integer())
            throw DataError("relations JSON: each pair needs integer i, j, r");
        out.relations.push_back({p["i"].get<int>(), p["j"].get<int>(), p["r"].get<int>()});
        if (!valid_relation_value(out.relations.back().r))
            throw DataError("relations JSON: r must be -1, 0 or 1");
    }
    return out;
}

void write_poses_jsonl(const std::filesystem::path& path, const std::vector<Pose3D>& poses,
                       const std::string& skeleton) {
    std::ostringstream os;
    for (const auto& p : poses)
        os << pose_to_json(p, skeleton).dump() << '\n';
    write_file_atomic(path, os.str());
}

std::vector<Pose3D> read_poses_jsonl(const std::filesystem::path& path, std::string* skeleton) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open " + path.string());
    std::vector<Pose3D> poses;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        try {
            auto lp = pose3_from_json(json::parse(line));
            if (skeleton && poses.empty())
                *skeleton = lp.skeleton;
            if (!poses.empty() && lp.pose.rows() != poses.front().rows())
                throw DataError("joint count differs from first pose");
            poses.push_back(std::move(lp.pose));
        } catch (const json::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return poses;
}

json spec_to_json(const NetworkSpec& spec) {
    json layers = json::array();
    for (const auto& l : spec)
        layers.push_back({{"kind", to_string(l.kind)},
                          {"in_dim", l.in_dim},
                          {"out_dim", l.out_dim},
                          {"dropout_rate", l.dropout_rate}});
    return layers;
}

NetworkSpec spec_from_json(const json& j) {
    if (!j.is_array())
        throw DataError("network spec must be an array of layers");
    NetworkSpec spec;
    try {
        for (const auto& l : j)
            spec.push_back({layer_kind_from_string(l.at("kind").get<std::string>()),
                            l.at("in_dim").get<int>(), l.at("out_dim").get<int>(),
                            l.value("dropout_rate", 0.0)});
        validate_spec(spec);
    } catch (const json::exception& e) {
        throw DataError(std::string("network spec: ") + e.what());
    } catch (const InvalidInput& e) {
        throw DataError(std::string("network spec: ") + e.what());
    }
    return spec;
}

Checkpoint make_checkpoint(const Network<double>& net, long step, json extra) {
    return {net.spec(), net.seed(), step, net.params(), std::move(extra)};
}

Network<double> network_from_checkpoint(const Checkpoint& ckpt) {
    Network<double> net(ckpt.spec);
    if (net.param_count() != ckpt.params.size())
        throw DataError("checkpoint parameter count does not match its spec");
    net.mutable_params() = ckpt.params;
    net.set_seed(ckpt.seed);
    return net;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const json header = {{"format", "ordinal-checkpoint"},
                         {"version", 1},
                         {"spec", spec_to_json(ckpt.spec)},
                         {"seed", ckpt.seed},
                         {"step", ckpt.step},
                         {"n_params", ckpt.params.size()},
                         {"extra", ckpt.extra}};
    std::ostringstream os;
    os << header.dump() << '\n';
    write_binary(os, ckpt.params.data(), static_cast<std::size_t>(ckpt.params.size()));
    write_file_atomic(path, os.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    auto [header, payload] = split_header(path);
    Checkpoint ckpt;
    try {
        if (header.value("format", "") != "ordinal-checkpoint")
            throw DataError(path.string() + ": not a checkpoint file");
        ckpt.spec = spec_from_json(header.at("spec"));
        ckpt.seed = header.at("seed").get<std::uint64_t>();
        ckpt.step = header.at("step").get<long>();
        ckpt.extra = header.value("extra", json::object());
        const auto n = header.at("n_params").get<std::size_t>();
        Eigen::Index expected = 0;
        for (const auto& l : ckpt.spec)
            expected += layer_param_count(l);
        if (static_cast<Eigen::Index>(n) != expected)
            throw DataError(path.string() + ": n_params does not match the spec");
        ckpt.params.resize(static_cast<Eigen::Index>(n));
        read_doubles(payload, n, ckpt.params.data(), path);
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": bad header: " + e.what());
    }
    if (!ckpt.params.allFinite())
        throw DataError(path.string() + ": non-finite parameters");
    return ckpt;
}

void save_volume(const std::filesystem::path& path, const VolumeScores<double>& scores) {
    scores.validate();
    json axis = json::array();
    for (Eigen::Index k = 0; k < scores.axis_coords.size(); ++k)
        axis.push_back(scores.axis_coords(k));
    const json header = {{"W", scores.shape.width},  {"H", scores.shape.height},
                         {"D", scores.shape.depth},  {"N", scores.joints()},
                         {"axis_coords", axis}};
    std::ostringstream os;
    os << header.dump() << '\n';
    write_binary(os, scores.grid.data(), static_cast<std::size_t>(scores.grid.size()));
    write_file_atomic(path, os.str());
}

VolumeScores<double> load_volume(const std::filesystem::path& path) {
    auto [header, payload] = split_header(path);
    VolumeScores<double> v;
    try {
        v.shape = {header.at("W").get<int>(), header.at("H").get<int>(), header.at("D").get<int>()};
        const int n = header.at("N").get<int>();
        if (v.shape.width < 1 || v.shape.height < 1 || v.shape.depth < 1 || n < 1)
            throw DataError(path.string() + ": bad dimensions");
        const auto& axis = header.at("axis_coords");
        v.axis_coords.resize(static_cast<Eigen::Index>(axis.size()));
        for (std::size_t k = 0; k < axis.size(); ++k)
            v.axis_coords(static_cast<Eigen::Index>(k)) = axis[k].get<double>();
        v.grid.resize(v.shape.voxels(), n);
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": bad header: " + e.what());
    }
    read_doubles(payload, static_cast<std::size_t>(v.grid.size()), v.grid.data(), path);
    try {
        v.validate();
    } catch (const Error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return v;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw DataError("cannot write " + tmp);
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out)
            throw DataError("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace ordinal
