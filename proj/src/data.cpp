#include "cmfuse/data.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace cmfuse {

using nlohmann::json;

namespace {

constexpr char kFeatureMagic[4] = {'F', 'E', 'A', 'T'};
constexpr uint32_t kMaxRank = 8;

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw IoError("corrupt feature file (truncated): " + path);
    }
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<uint32_t>(v)); }

float get_f32(std::istream& is, const std::string& path) {
    return std::bit_cast<float>(get_u32(is, path));
}

}  // namespace

void write_feature_file(const std::string& path, const TensorF& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write feature file: " + path);
    os.write(kFeatureMagic, 4);
    put_u32(os, static_cast<uint32_t>(t.rank()));
    for (int64_t e : t.shape()) put_u32(os, static_cast<uint32_t>(e));
    for (float v : t.data()) put_f32(os, v);
    if (!os) throw IoError("write failed: " + path);
}

TensorF read_feature_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("missing feature file: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kFeatureMagic, 4) != 0) {
        throw IoError("corrupt feature file (bad magic): " + path);
    }
    const uint32_t rank = get_u32(is, path);
    if (rank > kMaxRank) throw IoError("corrupt feature file (rank " + std::to_string(rank) +
                                       "): " + path);
    Shape shape(rank);
    for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int64_t>(get_u32(is, path));
    const int64_t n = numel_of(shape);
    std::vector<float> values(n);
    for (int64_t i = 0; i < n; ++i) values[i] = get_f32(is, path);
    return TensorF(std::move(shape), std::move(values));
}

namespace {

SampleRecord sample_from_json(const json& j, Task task, size_t classes) {
    SampleRecord rec;
    if (!j.contains("id")) throw std::invalid_argument("manifest: sample without id");
    rec.id = j["id"].get<std::string>();
    rec.actor = j.value("actor", 0);
    if (task == Task::SingleLabel) {
        if (!j.contains("label")) {
            throw std::invalid_argument("manifest: sample '" + rec.id + "' has no label");
        }
        rec.label = j["label"].get<int>();
        if (rec.label < 0 || rec.label >= static_cast<int>(classes)) {
            throw std::invalid_argument("manifest: sample '" + rec.id + "' label " +
                                        std::to_string(rec.label) + " outside " +
                                        std::to_string(classes) + " classes");
        }
    } else {
        if (!j.contains("labels")) {
            throw std::invalid_argument("manifest: sample '" + rec.id + "' has no labels vector");
        }
        for (const auto& v : j["labels"]) {
            const int b = v.get<int>();
            if (b != 0 && b != 1) {
                throw std::invalid_argument("manifest: sample '" + rec.id +
                                            "' labels must be 0/1");
            }
            rec.labels.push_back(b);
        }
        if (rec.labels.size() != classes) {
            throw std::invalid_argument("manifest: sample '" + rec.id + "' has " +
                                        std::to_string(rec.labels.size()) + " labels, expected " +
                                        std::to_string(classes));
        }
    }
    if (!j.contains("features") || j["features"].empty()) {
        throw std::invalid_argument("manifest: sample '" + rec.id + "' lists no features");
    }
    for (const auto& [name, f] : j["features"].items()) {
        SampleModality m;
        m.path = f.at("path").get<std::string>();
        for (const auto& e : f.at("shape")) m.shape.push_back(e.get<int64_t>());
        rec.features[name] = std::move(m);
    }
    return rec;
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("missing manifest: " + path);
    json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        throw std::invalid_argument("manifest parse error in " + path + ": " + e.what());
    }

    DatasetManifest m;
    m.task = task_from(j.value("task", std::string("single_label")));
    if (!j.contains("class_names") || j["class_names"].empty()) {
        throw std::invalid_argument("manifest: class_names required");
    }
    for (const auto& c : j["class_names"]) m.class_names.push_back(c.get<std::string>());

    std::set<std::string> ids;
    for (const auto& s : j.at("samples")) {
        SampleRecord rec = sample_from_json(s, m.task, m.class_names.size());
        if (!ids.insert(rec.id).second) {
            throw std::invalid_argument("manifest: duplicate sample id '" + rec.id + "'");
        }
        m.samples.push_back(std::move(rec));
    }
    std::sort(m.samples.begin(), m.samples.end(),
              [](const SampleRecord& a, const SampleRecord& b) { return a.id < b.id; });
    return m;
}

Dataset load_dataset(const std::string& manifest_path) {
    Dataset ds;
    ds.manifest = load_manifest(manifest_path);
    const std::filesystem::path dir = std::filesystem::path(manifest_path).parent_path();
    ds.tensors.reserve(ds.manifest.samples.size());
    for (const auto& rec : ds.manifest.samples) {
        std::map<std::string, TensorF> mods;
        for (const auto& [name, sm] : rec.features) {
            TensorF t = read_feature_file((dir / sm.path).string());
            if (t.shape() != sm.shape) {
                throw std::invalid_argument("sample '" + rec.id + "': " + name +
                                            " features have shape " + shape_str(t.shape()) +
                                            " but manifest declares " + shape_str(sm.shape));
            }
            mods.emplace(name, std::move(t));
        }
        ds.tensors.push_back(std::move(mods));
    }
    return ds;
}

std::vector<int> dataset_actors(const DatasetManifest& manifest) {
    std::set<int> actors;
    for (const auto& s : manifest.samples) actors.insert(s.actor);
    return std::vector<int>(actors.begin(), actors.end());
}

std::vector<FoldSpec> make_folds(const std::vector<int>& actors) {
    if (actors.size() != 24) {
        throw std::invalid_argument("fold protocol requires exactly 24 actors, got " +
                                    std::to_string(actors.size()));
    }
    std::set<int> unique(actors.begin(), actors.end());
    for (int a = 1; a <= 24; ++a) {
        if (!unique.count(a)) {
            throw std::invalid_argument("fold protocol requires actor IDs 1..24, missing " +
                                        std::to_string(a));
        }
    }
    std::vector<FoldSpec> folds;
    for (int i = 0; i < 5; ++i) {
        FoldSpec f;
        f.index = i;
        for (int a = 4 * i + 1; a <= 4 * i + 4; ++a) f.test_actors.push_back(a);
        for (int a = 1; a <= 24; ++a) {
            if (a < 4 * i + 1 || a > 4 * i + 4) f.train_actors.push_back(a);
        }
        folds.push_back(std::move(f));
    }
    return folds;
}

}  // namespace cmfuse
