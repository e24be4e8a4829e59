#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "braingat/tensor.hpp"

namespace braingat::ingest {

/// Per-subject ROI time series, rows = time points, columns = regions.
/// Missing entries are carried as NaN until imputation.
using TimeSeriesMatrix = Tensor;

struct SubjectEntry {
    std::string id;
    int label = 0;  // 0 = control, 1 = positive class
    std::string path;
};

struct CohortManifest {
    std::size_t n_regions = 0;
    std::vector<SubjectEntry> subjects;

    std::size_t count_label(int label) const;
};

CohortManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const CohortManifest& manifest, const std::filesystem::path& path);

/// CSV time series, one row per time point, `n_regions` numeric fields.
/// The token "nan" (any case) marks a missing value.
TimeSeriesMatrix load_time_series(const std::filesystem::path& path, std::size_t n_regions);
void save_time_series(const TimeSeriesMatrix& ts, const std::filesystem::path& path);

/// Replaces every missing (NaN) entry with exactly 0.0.
TimeSeriesMatrix impute_missing(TimeSeriesMatrix ts);

/// Column-wise standardization with the population (divide-by-T) standard
/// deviation. Zero-variance columns map to all zeros.
TimeSeriesMatrix zscore_normalize(const TimeSeriesMatrix& ts);

/// impute then z-score, the fixed pipeline order.
TimeSeriesMatrix preprocess(TimeSeriesMatrix ts);

struct SyntheticCohortSpec {
    std::size_t n_subjects_per_class = 50;
    std::size_t n_regions = 20;
    std::size_t n_timepoints = 200;
    std::vector<std::size_t> planted_block;  // region indices carrying the class signal
    double coupling_strength = 0.8;          // in (0, 1)
    double noise_sigma = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticCohort {
    CohortManifest manifest;
    std::vector<TimeSeriesMatrix> series;  // aligned with manifest.subjects
};

/// Deterministic cohort with a planted class difference: class-1 subjects
/// mix a per-subject latent AR(1) signal into the planted columns, class-0
/// subjects are pure noise. Per-subject streams derive from (seed, index),
/// so generation order does not matter.
SyntheticCohort generate_synthetic_cohort(const SyntheticCohortSpec& spec);

/// Writes manifest.json plus one CSV per subject into `dir`.
void write_synthetic_cohort(const SyntheticCohort& cohort, const std::filesystem::path& dir);

}  // namespace braingat::ingest
