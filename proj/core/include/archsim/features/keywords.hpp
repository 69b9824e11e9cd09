#pragma once

#include <map>
#include <string>
#include <vector>

#include "archsim/arch_record.hpp"
#include "archsim/spectral/spectral.hpp"

namespace archsim::features {

struct Keyword {
  std::string token;  // "component=value"
  double score = 0.0;
};

/// Token list of one record (components with empty values are absent).
std::vector<std::string> record_tokens(const ArchFeatureRecord& record);

/// Per-cluster keywords: each clustered model is a document, tf = 1/13 per
/// present token, idf = ln(N/df), cluster score = mean tf-idf over members.
/// Tokens scoring <= 0 are never keywords; ties sort lexicographically.
std::vector<std::vector<Keyword>> tfidf_keywords(const spectral::ClusterAssignment& clusters,
                                                 const std::map<std::string, ArchFeatureRecord>& records,
                                                 std::size_t top_k = 5);

}  // namespace archsim::features
