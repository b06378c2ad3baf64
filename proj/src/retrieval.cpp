#include "stgt/retrieval.hpp"

#include <algorithm>

#include "stgt/numerics.hpp"

namespace stgt {

std::vector<std::size_t> ground_truth_ranks(const TokenTensor& scores) {
  if (scores.rank() != 2 || scores.rows() != scores.cols()) throw DimensionError("retrieval scores must be square");
  const std::size_t b = scores.rows();
  std::vector<std::size_t> ranks(b);
  for (std::size_t i = 0; i < b; ++i) {
    const double gt = scores(i, i);
    std::size_t rank = 1;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      if (scores(i, j) > gt || (scores(i, j) == gt && j < i)) ++rank;
    }
    ranks[i] = rank;
  }
  return ranks;
}

RetrievalResult summarize_ranks(const std::vector<std::size_t>& ranks, const std::vector<std::size_t>& ks) {
  RetrievalResult r;
  r.ranks = ranks;
  std::vector<std::size_t> all = ks;
  all.insert(all.end(), {1, 5, 10});
  const double b = static_cast<double>(ranks.size());
  for (std::size_t k : all) {
    if (k == 0) throw ConfigError("recall cutoff K must be >= 1");
    const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t rank) { return rank <= k; });
    r.r_at[k] = static_cast<double>(hits) / b;
  }
  std::vector<std::size_t> sorted = ranks;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  r.med_r = n % 2 == 1 ? static_cast<double>(sorted[n / 2])
                       : 0.5 * (static_cast<double>(sorted[n / 2 - 1]) + static_cast<double>(sorted[n / 2]));
  r.r_mean = (r.r_at[1] + r.r_at[5] + r.r_at[10]) / 3.0;
  return r;
}

RetrievalReport evaluate_retrieval(const TokenTensor& video_emb, const TokenTensor& text_emb,
                                   const std::vector<std::size_t>& ks) {
  if (video_emb.rank() != 2 || text_emb.rank() != 2 || video_emb.rows() != text_emb.rows() ||
      video_emb.cols() != text_emb.cols()) {
    throw DimensionError("retrieval towers disagree: " + shape_string(video_emb.shape()) + " vs " +
                         shape_string(text_emb.shape()));
  }
  if (video_emb.rows() == 0) throw DimensionError("retrieval needs at least one pair");
  RetrievalReport rep;
  rep.v2t = summarize_ranks(ground_truth_ranks(matmul_nt(video_emb, text_emb)), ks);
  rep.t2v = summarize_ranks(ground_truth_ranks(matmul_nt(text_emb, video_emb)), ks);
  return rep;
}

}  // namespace stgt
