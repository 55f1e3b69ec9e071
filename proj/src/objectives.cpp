#include "synernet/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace synernet {

SimilarityMatrix similarity_matrix(const std::vector<Embedding>& img,
                                   const std::vector<Embedding>& txt) {
    if (img.empty() || txt.empty()) fail(Errc::invalid_argument, "similarity_matrix: empty input");
    const size_t d = img[0].values.size();
    for (const auto& e : img)
        if (e.values.size() != d) fail(Errc::dimension_mismatch, "similarity_matrix: ragged image side");
    for (const auto& e : txt)
        if (e.values.size() != d) fail(Errc::dimension_mismatch, "similarity_matrix: dimension mismatch");

    std::vector<Vec> a(img.size()), b(txt.size());
    for (size_t i = 0; i < img.size(); ++i)
        a[i] = img[i].normalized ? img[i].values : normalized(img[i].values);
    for (size_t j = 0; j < txt.size(); ++j)
        b[j] = txt[j].normalized ? txt[j].values : normalized(txt[j].values);

    SimilarityMatrix s;
    s.n = img.size();
    s.m = txt.size();
    s.s.resize(s.n * s.m);
    for (size_t i = 0; i < s.n; ++i)
        for (size_t j = 0; j < s.m; ++j) s.s[i * s.m + j] = dot(a[i], b[j]);
    return s;
}

static Vec softmax(const Vec& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    Vec out(logits.size());
    double total = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        total += out[i];
    }
    for (double& x : out) x /= total;
    return out;
}

Vec zero_shot_probs(const Vec& s_row, double kappa) {
    if (s_row.empty()) fail(Errc::invalid_argument, "zero_shot_probs: empty vocabulary");
    if (kappa < 0.5 || kappa > 2.0)
        fail(Errc::invalid_argument, "zero_shot_probs: kappa outside [0.5, 2.0]");
    Vec logits(s_row);
    for (double& x : logits) x /= kappa;
    return softmax(logits);
}

ContrastiveResult contrastiveImpl(const SimilarityMatrix& s, double kappa) {
    const size_t n = s.n;
    std::vector<double> a(s.s);
    for (double& x : a) x /= kappa;

    ContrastiveResult res;
    res.d_sim.assign(n * n, 0.0);

    double loss = 0.0;
    std::vector<double> row_p(n * n), col_p(n * n);
    for (size_t i = 0; i < n; ++i) {
        Vec row(a.begin() + long(i * n), a.begin() + long((i + 1) * n));
        Vec p = softmax(row);
        for (size_t j = 0; j < n; ++j) row_p[i * n + j] = p[j];
        loss -= std::log(p[i]);
    }
    for (size_t j = 0; j < n; ++j) {
        Vec col(n);
        for (size_t i = 0; i < n; ++i) col[i] = a[i * n + j];
        Vec q = softmax(col);
        for (size_t i = 0; i < n; ++i) col_p[i * n + j] = q[i];
        loss -= std::log(q[j]);
    }
    res.loss = loss / (2.0 * double(n));

    // dJ/dA = (1/2N)(P + Q - 2I); dJ/ds = dJ/dA / kappa; dJ/dkappa = -<dJ/dA, A>/kappa.
    double kappa_acc = 0.0;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            const double kron = i == j ? 2.0 : 0.0;
            const double da = (row_p[i * n + j] + col_p[i * n + j] - kron) / (2.0 * double(n));
            res.d_sim[i * n + j] = da / kappa;
            kappa_acc += da * a[i * n + j];
        }
    res.d_kappa = -kappa_acc / kappa;
    return res;
}

ContrastiveResult contrastive_loss(const SimilarityMatrix& s, double kappa) {
    if (s.n != s.m) fail(Errc::dimension_mismatch, "contrastive_loss: matrix must be square");
    if (s.n == 0) fail(Errc::invalid_argument, "contrastive_loss: empty matrix");
    return contrastiveImpl(s, kappa);
}

ClassificationResult classification_loss(const std::vector<Vec>& visual_features,
                                         const std::vector<int>& labels, const Mat& head) {
    if (visual_features.size() != labels.size())
        fail(Errc::invalid_argument, "classification_loss: features/labels size mismatch");
    if (visual_features.empty()) fail(Errc::invalid_argument, "classification_loss: empty batch");
    const size_t n = visual_features.size();
    const size_t n_classes = head.rows;

    ClassificationResult res;
    res.d_head = Mat(head.rows, head.cols);
    double loss = 0.0;
    for (size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || size_t(labels[i]) >= n_classes)
            fail(Errc::invalid_argument, "classification_loss: label out of range");
        Vec logits = matvec(head, visual_features[i]);
        Vec p = softmax(logits);
        loss -= std::log(p[size_t(labels[i])]);
        for (size_t c = 0; c < n_classes; ++c) {
            const double dl = (p[c] - (c == size_t(labels[i]) ? 1.0 : 0.0)) / double(n);
            for (size_t d = 0; d < head.cols; ++d)
                res.d_head.data[c * head.cols + d] += dl * visual_features[i][d];
        }
    }
    res.loss = loss / double(n);
    return res;
}

BalanceWeights balance_weights(double w_con_param, double w_cls_param) {
    const double denom = w_con_param + w_cls_param;
    if (denom <= 0.0) fail(Errc::invalid_argument, "balance_weights: non-positive denominator");
    BalanceWeights out;
    const double cp = clip(w_con_param, 0.5, 2.0);
    const double cq = clip(w_cls_param, 0.1, 1.0);
    const double cpg = clip_grad(w_con_param, 0.5, 2.0);
    const double cqg = clip_grad(w_cls_param, 0.1, 1.0);
    out.w_con = cp / denom;
    out.w_cls = cq / denom;
    out.d_wcon_d_p = (cpg * denom - cp) / (denom * denom);
    out.d_wcon_d_q = -cp / (denom * denom);
    out.d_wcls_d_q = (cqg * denom - cq) / (denom * denom);
    out.d_wcls_d_p = -cq / (denom * denom);
    return out;
}

LossBundle total_loss(double j_con, double j_cls, double w_con, double w_cls, double kappa) {
    auto check = [](double v, const char* name) {
        if (!std::isfinite(v)) fail(Errc::numeric, std::string("non-finite loss component: ") + name);
    };
    check(j_con, "j_con");
    check(j_cls, "j_cls");
    check(w_con, "w_con");
    check(w_cls, "w_cls");
    check(kappa, "kappa");
    LossBundle b;
    b.j_con = j_con;
    b.j_cls = j_cls;
    b.w_con = w_con;
    b.w_cls = w_cls;
    b.kappa = kappa;
    b.j_total = w_con * j_con + w_cls * j_cls;
    return b;
}

std::string loss_bundle_csv_header() { return "step,j_con,j_cls,w_con,w_cls,kappa,j_total"; }

std::string loss_bundle_csv_row(int step, const LossBundle& b) {
    std::ostringstream out;
    out.precision(17);
    out << step << ',' << b.j_con << ',' << b.j_cls << ',' << b.w_con << ',' << b.w_cls << ','
        << b.kappa << ',' << b.j_total;
    return out.str();
}

}  // namespace synernet
