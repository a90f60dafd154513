#pragma once

// Cross-scan instance association: encode every instance cloud, score all
// pairs, run the assignment, and label the leftovers by temporal order
// (unmatched in the earlier scan -> removed, unmatched in the later scan ->
// added). Instances whose encoding fails are excluded from matching and
// reported in the skipped lists rather than aborting the scan pair.

#include <algorithm>
#include <limits>
#include <vector>

#include "lsc/error.hpp"
#include "lsc/matching/hungarian.hpp"
#include "lsc/matching/score.hpp"
#include "lsc/vnn/encoder.hpp"

namespace lsc::matching {

struct MatchConfig {
    // Pairs scoring below min_score are demoted to removed/added. The default
    // accepts every assignment pair.
    double min_score = -std::numeric_limits<double>::infinity();
};

struct MatchReport {
    Assignment assignment;  // indices into the original instance lists
    ScorePack scores;       // over encodable instances only

    // Row/column k of `scores` belongs to original instance encoded_t*[k],
    // whose embedding is emb_t*[k]. Skipped ids appear in neither the scores
    // nor the assignment.
    std::vector<vnn::Embedding> emb_t1, emb_t2;
    std::vector<Eigen::Index> encoded_t1, encoded_t2;
    std::vector<Eigen::Index> skipped_t1, skipped_t2;
};

inline MatchReport match_scans(const std::vector<Points>& scan_t1,
                               const std::vector<Points>& scan_t2,
                               const vnn::EncoderWeights& weights,
                               const MatchConfig& config = {}) {
    MatchReport rep;
    auto encode_all = [&](const std::vector<Points>& scan, std::vector<vnn::Embedding>& embs,
                          std::vector<Eigen::Index>& kept, std::vector<Eigen::Index>& skipped) {
        for (std::size_t k = 0; k < scan.size(); ++k) {
            try {
                embs.push_back(vnn::encode(scan[k], weights));
                kept.push_back(Eigen::Index(k));
            } catch (const Error&) {
                skipped.push_back(Eigen::Index(k));
            }
        }
    };
    encode_all(scan_t1, rep.emb_t1, rep.encoded_t1, rep.skipped_t1);
    encode_all(scan_t2, rep.emb_t2, rep.encoded_t2, rep.skipped_t2);

    rep.assignment.p = Mat::Zero(Eigen::Index(scan_t1.size()), Eigen::Index(scan_t2.size()));
    if (rep.emb_t1.empty() || rep.emb_t2.empty()) {
        rep.assignment.removed = rep.encoded_t1;
        rep.assignment.added = rep.encoded_t2;
        return rep;
    }

    rep.scores = score_matrices(rep.emb_t1, rep.emb_t2);
    Assignment local = hungarian(rep.scores.h);
    for (auto [i, j] : local.pairs) {
        if (rep.scores.h(i, j) < config.min_score) {
            local.removed.push_back(i);
            local.added.push_back(j);
            continue;
        }
        Eigen::Index oi = rep.encoded_t1[std::size_t(i)];
        Eigen::Index oj = rep.encoded_t2[std::size_t(j)];
        rep.assignment.pairs.emplace_back(oi, oj);
        rep.assignment.p(oi, oj) = 1.0;
    }
    for (Eigen::Index i : local.removed)
        rep.assignment.removed.push_back(rep.encoded_t1[std::size_t(i)]);
    for (Eigen::Index j : local.added)
        rep.assignment.added.push_back(rep.encoded_t2[std::size_t(j)]);
    std::sort(rep.assignment.removed.begin(), rep.assignment.removed.end());
    std::sort(rep.assignment.added.begin(), rep.assignment.added.end());
    return rep;
}

} // namespace lsc::matching
