#ifndef GSEDD_REPERTOIRE_HPP
#define GSEDD_REPERTOIRE_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "gsedd/guidance.hpp"
#include "gsedd/rng.hpp"
#include "gsedd/seq.hpp"

namespace gsedd {

struct SimConfig {
    int v_families = 6;
    int v_alleles = 3;   // allelic variants per family, differing at hotspot offsets
    int v_length = 24;
    int v_hotspots = 4;
    int d_segments = 4;
    int d_length = 8;
    int j_segments = 6;
    int j_length = 12;
    int j_hotspots = 2;
    double hotspot_rate = 0.45;
    double background_rate = 0.02;
    double spectrum_concentration = 0.75;  // top-target mass of the mutation spectra
    double allele_mass = 0.0;              // hotspot mass diverted to other alleles' tokens
    double selection_strength = 0.0;       // rejection filter on hydropathy; 0 = off
    int train_size = 10000;
    int val_size = 1000;
    int test_size = 1000;
    double identity_threshold = 0.8;
    uint64_t seed = 1234;

    void validate() const;
};

struct Segment {
    TokenSequence tokens;
    std::vector<int> hotspots;  // offsets with elevated mutation rate
    int family = -1;            // V segments only
};

struct GermlineLibrary {
    std::vector<Segment> v_pool;
    std::vector<Segment> d_pool;
    std::vector<Segment> j_pool;
};

/// Deterministic pools of random amino-acid segments; V families come as
/// allelic variants that differ exactly at their hotspot offsets.
GermlineLibrary gen_germline_library(const SimConfig& config, const Alphabet& alphabet);

/// Uniform choice of one segment per pool, concatenated.
struct Recombination {
    TokenSequence germline;
    int v_index = 0, d_index = 0, j_index = 0;
};
Recombination recombine(const GermlineLibrary& library, Rng& rng);

/// Per-position substitution rates and target spectra for one germline.
struct MutationModel {
    std::vector<double> rates;               // per position
    std::vector<std::vector<double>> spectra;  // per position, over the alphabet (zero at germline)
};

MutationModel build_mutation_model(const GermlineLibrary& library, const Recombination& rec,
                                   const SimConfig& config, const Alphabet& alphabet);

/// Independent per-position substitution with the model's rates and spectra.
TokenSequence hypermutate(const TokenSequence& germline, const MutationModel& model, Rng& rng);

struct Record {
    GermlinePair pair;
    int v_class = 0;        // V segment index
    double hydropathy = 0.0;
};

struct Dataset {
    std::vector<Record> train, val, test;
    double bayes_ceiling = 0.0;  // best possible non-germline accuracy on the test split
    SimConfig config;
};

/// Builds splits whose germlines never exceed the identity threshold across
/// splits (single-linkage clusters assigned whole), then generates records.
Dataset make_dataset(const SimConfig& config, const Alphabet& alphabet,
                     const HydropathyScale& scale);

void write_dataset(const Dataset& dataset, const Alphabet& alphabet,
                   const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir, const Alphabet& alphabet);

std::vector<GermlinePair> pairs_of(const std::vector<Record>& records);

}  // namespace gsedd

#endif
