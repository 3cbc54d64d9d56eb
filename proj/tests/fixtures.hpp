#pragma once

// Shared test fixtures built on the public API.

#include "acre/retrieval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace fixture {

/// Index of `n` clips on orthonormal axes, so a query's scores are exactly the
/// weights it puts on each axis.
inline acre::retrieval::RetrievalIndex axis_index(int n) {
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) {
        char id[16];
        std::snprintf(id, sizeof(id), "c%03d", i);
        ids.emplace_back(id);
    }
    return acre::retrieval::RetrievalIndex(std::move(ids), Eigen::MatrixXd::Identity(n, n));
}

struct RankedQueries {
    std::vector<acre::retrieval::Query> queries;
    std::vector<std::size_t> ranks;  // intended target rank, in query-id order
};

/// One query per random permutation of the clips: the clip at position p gets
/// score n - p, and the target sits at a uniformly drawn position.
inline RankedQueries random_rank_queries(const acre::retrieval::RetrievalIndex& index, int count,
                                         std::mt19937_64& rng) {
    const int n = static_cast<int>(index.size());
    RankedQueries out;
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int q = 0; q < count; ++q) {
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Eigen::VectorXd v(n);
        for (int p = 0; p < n; ++p) {
            v(perm[static_cast<std::size_t>(p)]) = static_cast<double>(n - p);
        }
        const auto pos = static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(n));
        char id[16];
        std::snprintf(id, sizeof(id), "q%05d", q);
        out.queries.push_back({id, v, index.ids()[static_cast<std::size_t>(perm[pos])]});
        out.ranks.push_back(pos + 1);
    }
    return out;
}

/// Queries whose targets land at exactly the given ranks.
inline std::vector<acre::retrieval::Query> queries_at_ranks(const acre::retrieval::RetrievalIndex& index,
                                                            const std::vector<std::size_t>& ranks) {
    const int n = static_cast<int>(index.size());
    std::vector<acre::retrieval::Query> out;
    for (std::size_t q = 0; q < ranks.size(); ++q) {
        Eigen::VectorXd v(n);
        for (int i = 0; i < n; ++i) {
            v(i) = static_cast<double>(n - i);  // clip i sits at rank i + 1
        }
        char id[16];
        std::snprintf(id, sizeof(id), "q%05zu", q);
        out.push_back({id, v, index.ids()[ranks[q] - 1]});
    }
    return out;
}

}  // namespace fixture
