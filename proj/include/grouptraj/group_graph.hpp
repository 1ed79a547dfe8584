#pragma once

#include <stdexcept>
#include <vector>

#include "grouptraj/groups.hpp"
#include "grouptraj/tensor.hpp"

namespace grouptraj {

// Masks, adjacencies and pooling operators derived from a group partition.
// All functions are pure; outputs are plain (non-differentiable) tensors that
// enter model graphs as constants, so gradients flow through the features
// they multiply, never through the graph structure itself.

// N x N binary mask, 1 iff same group or i == j. Symmetric, ones diagonal.
inline Tensor build_intra_mask(const GroupAssignment& groups) {
    groups.validate();
    const std::size_t n = groups.num_pedestrians();
    Tensor m = Tensor::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i == j || groups.group_of[i] == groups.group_of[j]) m.at(i, j) = 1.0;
    return m;
}

// Row-stochastic adjacency: every row divided by its sum.
inline Tensor normalize_rows(const Tensor& mask) {
    const std::size_t n = mask.rows(), c = mask.cols();
    Tensor a = Tensor::zeros({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        double rowsum = 0.0;
        for (std::size_t j = 0; j < c; ++j) rowsum += mask.at(i, j);
        if (rowsum == 0.0)
            throw std::invalid_argument("group_graph: all-zero row " + std::to_string(i) +
                                        " cannot be normalized");
        for (std::size_t j = 0; j < c; ++j) a.at(i, j) = mask.at(i, j) / rowsum;
    }
    return a;
}

// The M unique rows of the intra mask in first-occurrence order; row g marks
// the members of group g. Each column has exactly one nonzero.
inline Tensor unique_rows(const Tensor& mask) {
    const std::size_t n = mask.rows();
    std::vector<std::size_t> reps;
    for (std::size_t i = 0; i < n; ++i) {
        bool seen = false;
        for (std::size_t r : reps) {
            bool equal = true;
            for (std::size_t j = 0; j < n && equal; ++j) equal = mask.at(r, j) == mask.at(i, j);
            if (equal) {
                seen = true;
                break;
            }
        }
        if (!seen) reps.push_back(i);
    }
    Tensor r = Tensor::zeros({reps.size(), n});
    for (std::size_t g = 0; g < reps.size(); ++g)
        for (std::size_t j = 0; j < n; ++j) r.at(g, j) = mask.at(reps[g], j);
    return r;
}

// Group-wise average pooling: [N,F] features -> [M,F] group means.
inline Tensor gpool(const Tensor& features, const Tensor& selector) {
    if (selector.cols() != features.rows()) {
        throw std::invalid_argument("group_graph: gpool selector " +
                                    detail::shape_str(selector.shape()) +
                                    " does not match features " +
                                    detail::shape_str(features.shape()));
    }
    return matmul(normalize_rows(selector), features);
}

// All-ones group graph, row-normalized: every entry 1/M.
inline Tensor build_inter_adjacency(std::size_t num_groups) {
    if (num_groups == 0) throw std::invalid_argument("group_graph: need at least one group");
    return Tensor::filled({num_groups, num_groups}, 1.0 / static_cast<double>(num_groups));
}

// Copies each group's feature row back to all of its members: [M,F] -> [N,F].
// Uses the unnormalized selector transpose, i.e. pure replication.
inline Tensor gunpool(const Tensor& group_features, const Tensor& selector) {
    if (selector.rows() != group_features.rows()) {
        throw std::invalid_argument("group_graph: gunpool selector " +
                                    detail::shape_str(selector.shape()) +
                                    " does not match group features " +
                                    detail::shape_str(group_features.shape()));
    }
    const std::size_t m = selector.rows(), n = selector.cols();
    Tensor rt = Tensor::zeros({n, m});
    for (std::size_t g = 0; g < m; ++g)
        for (std::size_t j = 0; j < n; ++j) rt.at(j, g) = selector.at(g, j);
    return matmul(rt, group_features);
}

// Complement-graph adjacency used by the parallel ablation variant:
// row-normalized (1 - M_intra + I), connecting each pedestrian to everyone
// outside its group plus itself.
inline Tensor build_complement_adjacency(const GroupAssignment& groups) {
    const Tensor mask = build_intra_mask(groups);
    const std::size_t n = mask.rows();
    Tensor comp = Tensor::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            comp.at(i, j) = (i == j) ? 1.0 : 1.0 - mask.at(i, j);
    return normalize_rows(comp);
}

}  // namespace grouptraj
