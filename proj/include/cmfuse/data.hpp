#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmfuse/config.hpp"

namespace cmfuse {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using TensorF = Tensor<float>;

// Per-sample feature blob: 4 magic bytes "FEAT", u32 rank, u32 extents,
// then f32 scalars row-major; everything little-endian.
void write_feature_file(const std::string& path, const TensorF& t);
TensorF read_feature_file(const std::string& path);

struct SampleModality {
    std::string path;  // relative to the manifest directory
    Shape shape;
};

struct SampleRecord {
    std::string id;
    int actor = 0;
    int label = -1;           // single-label class index
    std::vector<int> labels;  // multi-label binary vector
    std::map<std::string, SampleModality> features;
};

struct DatasetManifest {
    Task task = Task::SingleLabel;
    std::vector<std::string> class_names;
    std::vector<SampleRecord> samples;  // sorted by id
};

struct Dataset {
    DatasetManifest manifest;
    // tensors[i] holds the loaded features of manifest.samples[i]
    std::vector<std::map<std::string, TensorF>> tensors;
};

DatasetManifest load_manifest(const std::string& path);
Dataset load_dataset(const std::string& manifest_path);

std::vector<int> dataset_actors(const DatasetManifest& manifest);

// ---------------------------------------------------------------------------
// Actor-rotation fold protocol
// ---------------------------------------------------------------------------

struct FoldSpec {
    int index = 0;
    std::vector<int> test_actors;
    std::vector<int> train_actors;
};

// Five folds over actors 1..24: fold i tests the consecutive window
// {4i+1 .. 4i+4}. Consecutive IDs alternate gender, so every test set holds
// two even and two odd IDs.
std::vector<FoldSpec> make_folds(const std::vector<int>& actors);

}  // namespace cmfuse
