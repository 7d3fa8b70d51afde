#pragma once

#include <string>

#include "fqeval/approximators.hpp"
#include "fqeval/fqe.hpp"
#include "fqeval/mdp.hpp"

// File formats. MDP, policy, feature-map and estimate records are JSON with
// an integer `schema` field (readers reject unknown versions). Datasets are
// CSV, one row per transition, with a `#`-prefixed header comment carrying
// K, H and the generating seed; doubles round-trip bit-exactly.

namespace fqeval::io {

TabularMdp read_mdp(const std::string& path);
void write_mdp(const TabularMdp& mdp, const std::string& path);

Policy read_policy(const std::string& path);
void write_policy(const Policy& policy, const std::string& path);

FeatureMap read_features(const std::string& path);
void write_features(const FeatureMap& fmap, const std::string& path);

Dataset read_dataset(const std::string& path);
void write_dataset(const Dataset& data, const std::string& path,
                   const std::string& provenance);

FqeEstimate read_estimate(const std::string& path);
void write_estimate(const FqeEstimate& est, const std::string& path,
                    const std::string& provenance);

/// Shortest-round-trip decimal rendering of a double.
std::string format_double(double v);

}  // namespace fqeval::io
