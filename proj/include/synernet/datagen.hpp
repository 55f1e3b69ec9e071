#pragma once

#include <string>
#include <vector>

#include "synernet/encoders.hpp"

namespace synernet {

enum class ClassTag { Seen, Ood };

struct ClassSpec {
    std::string name;
    ClassTag tag = ClassTag::Seen;
    Vec mean;            // raw-space center
    double spread = 1.0; // isotropic stddev
    size_t n_samples = 0;

    bool operator==(const ClassSpec&) const = default;
};

struct BenchmarkConfig {
    size_t n_seen = 8;
    size_t n_ood = 8;
    size_t d_raw = 32;
    size_t d_embed = 16;
    size_t d_tok = 16;
    size_t samples_per_class = 60;
    double spread = 0.85;
    double mean_scale = 1.0;
    double min_sep_factor = 2.0;  // min pairwise mean distance / max spread

    bool operator==(const BenchmarkConfig&) const = default;
};

struct Benchmark {
    BenchmarkConfig config;
    uint64_t seed = 0;
    std::vector<ClassSpec> classes;       // SEEN block first, then OOD
    std::vector<float> samples;           // row-major, class blocks in order
    std::vector<size_t> class_offsets;    // first sample row of each class
    PretrainedVocab vocab;
    FrozenEncoders encoders;

    size_t n_classes() const { return classes.size(); }
    size_t sample_count() const { return samples.size() / config.d_raw; }
    const float* sample_row(size_t sample_id) const { return &samples[sample_id * config.d_raw]; }
    std::vector<float> sample_copy(size_t sample_id) const;
    size_t class_of_sample(size_t sample_id) const;
    std::vector<size_t> ood_class_ids() const;
    std::vector<size_t> seen_class_ids() const;
};

bool operator==(const Benchmark& a, const Benchmark& b);

struct DatasetSplit {
    int K = 0;
    uint64_t seed = 0;
    std::vector<std::pair<size_t, size_t>> train;  // (sample_id, class_id), OOD only
    std::vector<std::pair<size_t, size_t>> test;   // SEEN ∪ OOD

    bool operator==(const DatasetSplit&) const = default;
};

// Deterministic synthetic benchmark with built-in alignment for SEEN names
// and guaranteed text collapse for OOD names.
Benchmark generate_benchmark(const BenchmarkConfig& config, uint64_t seed);

// K train samples per OOD class (without replacement); everything else of
// every class becomes test. K must be one of {1,2,4,8,16}.
DatasetSplit make_split(const Benchmark& benchmark, int K, uint64_t seed);

// Dataset directory: manifest.json + samples.f32 + encoders.f32 (+ split files).
void save_dataset(const Benchmark& benchmark, const DatasetSplit& split, const std::string& path);
void save_benchmark(const Benchmark& benchmark, const std::string& path);
void save_split(const DatasetSplit& split, const std::string& path);  // path = dataset dir
Benchmark load_benchmark(const std::string& path);
DatasetSplit load_split(const std::string& path, int K, uint64_t seed);
std::pair<Benchmark, DatasetSplit> load_dataset(const std::string& path, int K, uint64_t seed);

std::string split_filename(int K, uint64_t seed);

}  // namespace synernet
