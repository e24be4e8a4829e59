#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "braingat/connectome.hpp"
#include "braingat/ingest.hpp"

namespace test_support {

// Synthetic cohort pushed through the real preprocessing pipeline.
inline std::vector<braingat::connectome::BrainGraph> cohort_graphs(
    const braingat::ingest::SyntheticCohortSpec& spec, double threshold = 0.2) {
    using namespace braingat;
    ingest::SyntheticCohort cohort = ingest::generate_synthetic_cohort(spec);
    std::vector<connectome::BrainGraph> graphs;
    for (std::size_t i = 0; i < cohort.series.size(); ++i) {
        ingest::TimeSeriesMatrix ts = ingest::preprocess(cohort.series[i]);
        connectome::ConnectivityMatrix conn = connectome::pearson_matrix(ts);
        Tensor features = connectome::node_features(conn, ts, {});
        connectome::BrainGraph g =
            connectome::build_graph(conn, threshold, features, cohort.manifest.subjects[i].label,
                                    connectome::default_region_names(spec.n_regions));
        g.id = cohort.manifest.subjects[i].id;
        graphs.push_back(std::move(g));
    }
    return graphs;
}

// Unique scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
    std::filesystem::path dir = std::filesystem::temp_directory_path() / ("braingat_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace test_support
