#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "stgt/tensor.hpp"

namespace stgt {

struct RetrievalResult {
  std::map<std::size_t, double> r_at;  // K -> recall in [0, 1]
  double med_r = 0.0;
  double r_mean = 0.0;  // mean of R@1, R@5, R@10
  std::vector<std::size_t> ranks;  // 1-based rank of the ground truth per query
};

struct RetrievalReport {
  RetrievalResult t2v;
  RetrievalResult v2t;
};

/// Rank of candidate i for query row i: 1 + #(higher scores) + #(equal scores
/// at a lower index).
std::vector<std::size_t> ground_truth_ranks(const TokenTensor& scores);

RetrievalResult summarize_ranks(const std::vector<std::size_t>& ranks, const std::vector<std::size_t>& ks);

/// Both directions from row-aligned embedding towers. R@1, R@5 and R@10 are
/// always reported in addition to `ks`.
RetrievalReport evaluate_retrieval(const TokenTensor& video_emb, const TokenTensor& text_emb,
                                   const std::vector<std::size_t>& ks = {1, 5, 10});

}  // namespace stgt
