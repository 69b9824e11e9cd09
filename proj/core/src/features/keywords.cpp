#include "archsim/features/keywords.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "archsim/errors.hpp"

namespace archsim::features {

std::vector<std::string> record_tokens(const ArchFeatureRecord& record) {
  std::vector<std::string> out;
  for (std::size_t c = 0; c < kNumComponents; ++c) {
    if (!record.values[c].empty()) out.push_back(std::string(kComponentNames[c]) + "=" + record.values[c]);
  }
  return out;
}

std::vector<std::vector<Keyword>> tfidf_keywords(const spectral::ClusterAssignment& clusters,
                                                 const std::map<std::string, ArchFeatureRecord>& records,
                                                 std::size_t top_k) {
  const std::size_t n = clusters.size();
  if (n == 0) return {};
  std::vector<std::vector<std::string>> docs;
  std::map<std::string, std::size_t> df;
  for (const auto& name : clusters.names) {
    auto it = records.find(name);
    if (it == records.end()) throw ValidationError("no architecture record for clustered model '" + name + "'");
    auto tokens = record_tokens(it->second);
    for (const auto& t : std::set<std::string>(tokens.begin(), tokens.end())) ++df[t];
    docs.push_back(std::move(tokens));
  }
  const double tf = 1.0 / static_cast<double>(kNumComponents);
  int num_clusters = 0;
  for (int l : clusters.labels) num_clusters = std::max(num_clusters, l + 1);

  std::vector<std::vector<Keyword>> out(static_cast<std::size_t>(num_clusters));
  for (int c = 0; c < num_clusters; ++c) {
    std::map<std::string, double> total;
    std::size_t members = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (clusters.labels[i] != c) continue;
      ++members;
      for (const auto& t : docs[i]) {
        total[t] += tf * std::log(static_cast<double>(n) / static_cast<double>(df[t]));
      }
    }
    std::vector<Keyword> ranked;
    for (const auto& [token, sum] : total) {
      const double score = sum / static_cast<double>(members);
      if (score > 0.0) ranked.push_back({token, score});
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const Keyword& a, const Keyword& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.token < b.token;
    });
    if (ranked.size() > top_k) ranked.resize(top_k);
    out[static_cast<std::size_t>(c)] = std::move(ranked);
  }
  return out;
}

}  // namespace archsim::features
