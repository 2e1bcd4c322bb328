#include "dataio.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace dataio {

namespace {

constexpr char kFeatureMagic[8] = {'F', 'R', 'N', 'F', 'E', 'A', 'T', '1'};
constexpr char kParamMagic[8] = {'F', 'R', 'N', 'P', 'A', 'R', 'M', '1'};

std::ofstream open_out(const std::string& path, bool binary) {
    std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
    if (!f) throw MissingFileError("cannot open for writing: " + path);
    return f;
}

std::ifstream open_in(const std::string& path, bool binary) {
    std::ifstream f(path, binary ? std::ios::binary : std::ios::in);
    if (!f) throw MissingFileError("cannot open: " + path);
    return f;
}

void write_u32(std::ostream& s, uint32_t v) {
    s.write(reinterpret_cast<const char*>(&v), sizeof v);
}

uint32_t read_u32(std::istream& s, const std::string& path) {
    uint32_t v = 0;
    if (!s.read(reinterpret_cast<char*>(&v), sizeof v))
        throw FormatError("truncated file: " + path);
    return v;
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    return fields;
}

double parse_double(const std::string& s, const std::string& path, int line_no) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw FormatError(path + ":" + std::to_string(line_no) + ": bad number '" + s + "'");
    }
}

int parse_int(const std::string& s, const std::string& path, int line_no) {
    try {
        size_t pos = 0;
        int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw FormatError(path + ":" + std::to_string(line_no) + ": bad integer '" + s + "'");
    }
}

}  // namespace

numkit::Tensor VideoFeatureSequence::snippet(int i) const {
    const int c = feature_dim;
    std::vector<double> row(features.data.begin() + static_cast<size_t>(i) * c,
                            features.data.begin() + static_cast<size_t>(i + 1) * c);
    return numkit::Tensor::vector(std::move(row));
}

const VideoFeatureSequence* Corpus::find_video(const std::string& id) const {
    for (const auto& v : videos)
        if (v.video_id == id) return &v;
    return nullptr;
}

void save_features(const std::string& path, const VideoFeatureSequence& seq) {
    auto f = open_out(path, true);
    f.write(kFeatureMagic, sizeof kFeatureMagic);
    write_u32(f, static_cast<uint32_t>(seq.feature_dim));
    write_u32(f, static_cast<uint32_t>(seq.num_snippets));
    f.write(reinterpret_cast<const char*>(seq.features.data.data()),
            static_cast<std::streamsize>(seq.features.data.size() * sizeof(double)));
}

VideoFeatureSequence load_features(const std::string& path, const std::string& video_id,
                                   double snippet_duration_s) {
    auto f = open_in(path, true);
    char magic[8];
    if (!f.read(magic, sizeof magic) || std::memcmp(magic, kFeatureMagic, 8) != 0)
        throw FormatError("not a feature file: " + path);
    uint32_t c = read_u32(f, path);
    uint32_t l = read_u32(f, path);
    if (c == 0 || l == 0)
        throw ValidationError("video " + video_id + ": empty feature extents in " + path);
    std::vector<double> data(static_cast<size_t>(c) * l);
    if (!f.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(double))))
        throw FormatError("truncated feature data: " + path);
    for (double v : data)
        if (!std::isfinite(v))
            throw ValidationError("video " + video_id + ": non-finite feature value in " + path);
    VideoFeatureSequence seq;
    seq.video_id = video_id;
    seq.feature_dim = static_cast<int>(c);
    seq.num_snippets = static_cast<int>(l);
    seq.features = numkit::Tensor({static_cast<int>(l), static_cast<int>(c)}, std::move(data));
    seq.snippet_duration_s = snippet_duration_s;
    return seq;
}

void save_annotations(const std::string& path, const AnnotationSet& ann) {
    auto f = open_out(path, false);
    f << "video_id,t_start,t_end,class_id\n";
    for (const auto& a : ann.instances)
        f << ann.video_id << ',' << fmt_double(a.t_start) << ',' << fmt_double(a.t_end) << ','
          << a.class_id << '\n';
}

AnnotationSet load_annotations(const std::string& path, const std::string& video_id) {
    auto f = open_in(path, false);
    std::string line;
    if (!std::getline(f, line)) throw FormatError("empty annotation file: " + path);
    AnnotationSet ann;
    ann.video_id = video_id;
    int line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 4)
            throw FormatError(path + ":" + std::to_string(line_no) + ": expected 4 fields");
        if (fields[0] != video_id)
            throw ValidationError("video " + video_id + ": annotation row names '" + fields[0] +
                                  "' in " + path);
        AnnotationInstance inst;
        inst.t_start = parse_double(fields[1], path, line_no);
        inst.t_end = parse_double(fields[2], path, line_no);
        inst.class_id = parse_int(fields[3], path, line_no);
        ann.instances.push_back(inst);
    }
    return ann;
}

void save_detections(const std::string& path, const std::vector<DetectionRecord>& records) {
    auto f = open_out(path, false);
    f << "video_id,t_start,t_end,class_id,confidence\n";
    for (const auto& r : records)
        f << r.video_id << ',' << fmt_double(r.t_start) << ',' << fmt_double(r.t_end) << ','
          << r.class_id << ',' << fmt_double(r.confidence) << '\n';
}

std::vector<DetectionRecord> load_detections(const std::string& path) {
    auto f = open_in(path, false);
    std::string line;
    if (!std::getline(f, line)) throw FormatError("empty detection file: " + path);
    std::vector<DetectionRecord> records;
    int line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 5)
            throw FormatError(path + ":" + std::to_string(line_no) + ": expected 5 fields");
        DetectionRecord r;
        r.video_id = fields[0];
        r.t_start = parse_double(fields[1], path, line_no);
        r.t_end = parse_double(fields[2], path, line_no);
        r.class_id = parse_int(fields[3], path, line_no);
        r.confidence = parse_double(fields[4], path, line_no);
        if (!(r.t_start < r.t_end) || !std::isfinite(r.confidence))
            throw ValidationError(path + ":" + std::to_string(line_no) + ": invalid detection");
        records.push_back(r);
    }
    return records;
}

void save_params(const std::string& path, const ParamBlocks& blocks) {
    auto f = open_out(path, true);
    f.write(kParamMagic, sizeof kParamMagic);
    write_u32(f, static_cast<uint32_t>(blocks.size()));
    for (const auto& [name, t] : blocks) {
        write_u32(f, static_cast<uint32_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(f, static_cast<uint32_t>(t.shape.size()));
        for (int e : t.shape) write_u32(f, static_cast<uint32_t>(e));
        f.write(reinterpret_cast<const char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
}

ParamBlocks load_params(const std::string& path) {
    auto f = open_in(path, true);
    char magic[8];
    if (!f.read(magic, sizeof magic) || std::memcmp(magic, kParamMagic, 8) != 0)
        throw FormatError("not a parameter file: " + path);
    uint32_t n = read_u32(f, path);
    ParamBlocks blocks;
    for (uint32_t b = 0; b < n; ++b) {
        uint32_t name_len = read_u32(f, path);
        std::string name(name_len, '\0');
        if (!f.read(name.data(), name_len)) throw FormatError("truncated file: " + path);
        uint32_t ndim = read_u32(f, path);
        std::vector<int> shape;
        size_t count = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            uint32_t e = read_u32(f, path);
            shape.push_back(static_cast<int>(e));
            count *= e;
        }
        std::vector<double> data(count);
        if (!f.read(reinterpret_cast<char*>(data.data()),
                    static_cast<std::streamsize>(count * sizeof(double))))
            throw FormatError("truncated file: " + path);
        blocks.emplace(std::move(name), numkit::Tensor(std::move(shape), std::move(data)));
    }
    return blocks;
}

void save_manifest(const std::string& path, const std::vector<std::string>& class_names,
                   double snippet_duration_s, const std::vector<ManifestEntry>& entries) {
    nlohmann::json j;
    j["format"] = "frn-corpus-v1";
    j["classes"] = class_names;
    j["snippet_duration_s"] = snippet_duration_s;
    j["videos"] = nlohmann::json::array();
    for (const auto& e : entries)
        j["videos"].push_back({{"id", e.video_id},
                               {"features", e.feature_path},
                               {"annotations", e.annotation_path}});
    auto f = open_out(path, false);
    f << j.dump(2) << '\n';
}

Corpus load_corpus(const std::string& manifest_path) {
    auto f = open_in(manifest_path, false);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad manifest " + manifest_path + ": " + e.what());
    }
    if (j.value("format", "") != "frn-corpus-v1")
        throw FormatError("unrecognized manifest format in " + manifest_path);

    Corpus corpus;
    corpus.class_names = j.at("classes").get<std::vector<std::string>>();
    corpus.snippet_duration_s = j.at("snippet_duration_s").get<double>();
    if (corpus.class_names.empty())
        throw ValidationError("manifest declares no classes: " + manifest_path);
    if (!(corpus.snippet_duration_s > 0))
        throw ValidationError("snippet_duration_s must be positive: " + manifest_path);

    fs::path base = fs::path(manifest_path).parent_path();
    for (const auto& entry : j.at("videos")) {
        std::string id = entry.at("id").get<std::string>();
        std::string feat = (base / entry.at("features").get<std::string>()).string();
        std::string ann_path = (base / entry.at("annotations").get<std::string>()).string();
        auto seq = load_features(feat, id, corpus.snippet_duration_s);
        auto ann = load_annotations(ann_path, id);
        for (const auto& inst : ann.instances) {
            if (!(inst.t_start >= 0.0 && inst.t_start < inst.t_end))
                throw ValidationError("video " + id + ": annotation with t_start >= t_end");
            if (inst.t_end > seq.duration() + 1e-9)
                throw ValidationError("video " + id + ": annotation ends past video extent");
            if (inst.class_id < 0 || inst.class_id >= corpus.num_classes())
                throw ValidationError("video " + id + ": class_id " +
                                      std::to_string(inst.class_id) + " outside class list");
        }
        corpus.videos.push_back(std::move(seq));
        corpus.annotations.push_back(std::move(ann));
    }
    return corpus;
}

}  // namespace dataio
