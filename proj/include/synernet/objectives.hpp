#pragma once

#include <string>
#include <vector>

#include "synernet/encoders.hpp"

namespace synernet {

struct SimilarityMatrix {
    size_t n = 0;  // image rows
    size_t m = 0;  // text columns
    std::vector<double> s;  // row-major

    double at(size_t i, size_t j) const { return s[i * m + j]; }
    double& at(size_t i, size_t j) { return s[i * m + j]; }
};

// s_ij = <normalized image i, normalized text j>; inputs are normalized here
// when they are not already.
SimilarityMatrix similarity_matrix(const std::vector<Embedding>& img,
                                   const std::vector<Embedding>& txt);

// softmax(s_row / kappa); numerically shift-invariant.
Vec zero_shot_probs(const Vec& s_row, double kappa);

struct ContrastiveResult {
    double loss = 0.0;
    std::vector<double> d_sim;  // dJ/ds, row-major n x n
    double d_kappa = 0.0;
};

// Symmetric InfoNCE over a square matrix with positives on the diagonal:
// J = -(1/2N) sum_i [log softmax_row(s/k)_ii + log softmax_col(s/k)_ii].
ContrastiveResult contrastive_loss(const SimilarityMatrix& s, double kappa);

struct ClassificationResult {
    double loss = 0.0;
    Mat d_head;  // dJ/dTheta_cls
};

// Mean cross-entropy of logits Theta_cls · feature_i against labels.
ClassificationResult classification_loss(const std::vector<Vec>& visual_features,
                                         const std::vector<int>& labels, const Mat& head);

struct BalanceWeights {
    double w_con = 0.0;
    double w_cls = 0.0;
    // partials for the trainable parameters
    double d_wcon_d_p = 0.0;
    double d_wcon_d_q = 0.0;
    double d_wcls_d_p = 0.0;
    double d_wcls_d_q = 0.0;
};

// w_con = clip(p, 0.5, 2.0)/(p+q), w_cls = clip(q, 0.1, 1.0)/(p+q); the
// denominator is deliberately unclipped, so the pair need not sum to 1.
BalanceWeights balance_weights(double w_con_param, double w_cls_param);

struct LossBundle {
    double j_con = 0.0;
    double j_cls = 0.0;
    double w_con = 0.0;
    double w_cls = 0.0;
    double kappa = 1.0;
    double j_total = 0.0;
};

LossBundle total_loss(double j_con, double j_cls, double w_con, double w_cls, double kappa);

std::string loss_bundle_csv_header();
std::string loss_bundle_csv_row(int step, const LossBundle& b);

}  // namespace synernet
