#include "braingat/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "braingat/errors.hpp"
#include "braingat/rng.hpp"

namespace braingat::ingest {

using nlohmann::json;

std::size_t CohortManifest::count_label(int label) const {
    std::size_t n = 0;
    for (const auto& s : subjects)
        if (s.label == label) ++n;
    return n;
}

CohortManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("manifest not found: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw DataError("manifest parse error in " + path.string() + ": " + e.what());
    }
    CohortManifest m;
    if (!doc.contains("n_regions") || !doc["n_regions"].is_number_unsigned())
        throw DataError("manifest: n_regions missing or not a non-negative integer");
    m.n_regions = doc["n_regions"].get<std::size_t>();
    if (m.n_regions < 2) throw DataError("manifest: n_regions must be >= 2");
    if (!doc.contains("subjects") || !doc["subjects"].is_array())
        throw DataError("manifest: subjects array missing");
    std::set<std::string> seen;
    for (const auto& s : doc["subjects"]) {
        SubjectEntry e;
        e.id = s.at("id").get<std::string>();
        if (!s.at("label").is_number_integer())
            throw DataError("manifest: label must be an integer for subject " + e.id);
        e.label = s.at("label").get<int>();
        if (e.label != 0 && e.label != 1)
            throw DataError("manifest: unknown label value for subject " + e.id);
        e.path = s.at("path").get<std::string>();
        if (!seen.insert(e.id).second) throw DataError("manifest: duplicate subject " + e.id);
        m.subjects.push_back(std::move(e));
    }
    return m;
}

void save_manifest(const CohortManifest& manifest, const std::filesystem::path& path) {
    json doc;
    doc["n_regions"] = manifest.n_regions;
    doc["subjects"] = json::array();
    for (const auto& s : manifest.subjects) {
        doc["subjects"].push_back({{"id", s.id}, {"label", s.label}, {"path", s.path}});
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest: " + path.string());
    out << doc.dump(2) << "\n";
}

TimeSeriesMatrix load_time_series(const std::filesystem::path& path, std::size_t n_regions) {
    std::ifstream in(path);
    if (!in) throw DataError("time series not found: " + path.string());
    std::vector<double> values;
    std::string line;
    std::size_t n_rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::size_t n_fields = 0;
        while (std::getline(ss, field, ',')) {
            const char* begin = field.c_str();
            char* end = nullptr;
            const double v = std::strtod(begin, &end);
            // strtod accepts "nan" in any case; anything unparsed is a data error
            while (end && *end == ' ') ++end;
            if (end == begin || (end && *end != '\0'))
                throw DataError("bad numeric field '" + field + "' in " + path.string());
            values.push_back(v);
            ++n_fields;
        }
        if (n_fields != n_regions)
            throw DataError("row with " + std::to_string(n_fields) + " fields, expected " +
                            std::to_string(n_regions) + " in " + path.string());
        ++n_rows;
    }
    if (n_rows == 0) throw DataError("empty time series: " + path.string());
    return Tensor::matrix(n_rows, n_regions, std::move(values));
}

void save_time_series(const TimeSeriesMatrix& ts, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write time series: " + path.string());
    char buf[64];
    for (std::size_t i = 0; i < ts.rows(); ++i) {
        for (std::size_t j = 0; j < ts.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", ts.at(i, j));
            if (j) out << ',';
            out << buf;
        }
        out << '\n';
    }
}

TimeSeriesMatrix impute_missing(TimeSeriesMatrix ts) {
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (std::isnan(ts.at(i))) ts.at(i) = 0.0;
    }
    return ts;
}

TimeSeriesMatrix zscore_normalize(const TimeSeriesMatrix& ts) {
    const std::size_t t = ts.rows(), r = ts.cols();
    if (t < 2) throw DataError("z-score needs at least 2 time points");
    Tensor out = Tensor::matrix(t, r);
    for (std::size_t j = 0; j < r; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < t; ++i) mean += ts.at(i, j);
        mean /= static_cast<double>(t);
        double var = 0.0;
        for (std::size_t i = 0; i < t; ++i) {
            const double d = ts.at(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(t);
        if (var == 0.0) continue;  // constant column stays all zeros
        const double inv = 1.0 / std::sqrt(var);
        for (std::size_t i = 0; i < t; ++i) out.at(i, j) = (ts.at(i, j) - mean) * inv;
    }
    return out;
}

TimeSeriesMatrix preprocess(TimeSeriesMatrix ts) {
    return zscore_normalize(impute_missing(std::move(ts)));
}

void SyntheticCohortSpec::validate() const {
    if (n_subjects_per_class == 0) throw ConfigError("synthetic spec: n_subjects_per_class must be positive");
    if (n_regions == 0) throw ConfigError("synthetic spec: n_regions must be positive");
    if (n_timepoints == 0) throw ConfigError("synthetic spec: n_timepoints must be positive");
    // 0 is the null cohort (no planted signal); 1 would make the block deterministic
    if (!(coupling_strength >= 0.0 && coupling_strength < 1.0))
        throw ConfigError("synthetic spec: coupling_strength must lie in [0, 1)");
    if (!(noise_sigma > 0.0)) throw ConfigError("synthetic spec: noise_sigma must be positive");
    for (std::size_t idx : planted_block) {
        if (idx >= n_regions) throw ConfigError("synthetic spec: planted_block index out of range");
    }
}

SyntheticCohort generate_synthetic_cohort(const SyntheticCohortSpec& spec) {
    spec.validate();
    SyntheticCohort cohort;
    cohort.manifest.n_regions = spec.n_regions;
    std::vector<bool> in_block(spec.n_regions, false);
    for (std::size_t idx : spec.planted_block) in_block[idx] = true;

    const std::size_t total = 2 * spec.n_subjects_per_class;
    const double ar = 0.6;  // latent AR(1) coefficient, unit marginal variance
    for (std::size_t s = 0; s < total; ++s) {
        const int label = s < spec.n_subjects_per_class ? 0 : 1;
        Rng rng = Rng::stream(spec.seed, s + 1);

        std::vector<double> latent(spec.n_timepoints, 0.0);
        if (label == 1) {
            latent[0] = rng.normal();
            for (std::size_t t = 1; t < spec.n_timepoints; ++t)
                latent[t] = ar * latent[t - 1] + std::sqrt(1.0 - ar * ar) * rng.normal();
        }

        Tensor ts = Tensor::matrix(spec.n_timepoints, spec.n_regions);
        for (std::size_t t = 0; t < spec.n_timepoints; ++t) {
            for (std::size_t j = 0; j < spec.n_regions; ++j) {
                double v = spec.noise_sigma * rng.normal();
                if (label == 1 && in_block[j]) v += spec.coupling_strength * latent[t];
                ts.at(t, j) = v;
            }
        }

        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "sub-%04zu", s);
        SubjectEntry entry;
        entry.id = idbuf;
        entry.label = label;
        entry.path = std::string(idbuf) + ".csv";
        cohort.manifest.subjects.push_back(std::move(entry));
        cohort.series.push_back(std::move(ts));
    }
    return cohort;
}

void write_synthetic_cohort(const SyntheticCohort& cohort, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < cohort.manifest.subjects.size(); ++i) {
        save_time_series(cohort.series[i], dir / cohort.manifest.subjects[i].path);
    }
    save_manifest(cohort.manifest, dir / "manifest.json");
}

}  // namespace braingat::ingest
