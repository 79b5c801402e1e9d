#include "rffkit/losses.hpp"

#include <algorithm>
#include <cmath>

#include "rffkit/common.hpp"
#include "rffkit/layers.hpp"

namespace rffkit {

std::string task_kind_name(TaskKind k) {
    switch (k) {
        case TaskKind::SEI: return "SEI";
        case TaskKind::EDA: return "EDA";
        case TaskKind::RFEC: return "RFEC";
    }
    throw ValidationError("unknown task kind");
}

TaskKind task_kind_from_name(const std::string& name) {
    if (name == "SEI") return TaskKind::SEI;
    if (name == "EDA") return TaskKind::EDA;
    if (name == "RFEC") return TaskKind::RFEC;
    throw ValidationError("unknown task kind '" + name + "'");
}

TaskSpec default_task_spec(TaskKind kind) {
    TaskSpec s;
    s.kind = kind;
    switch (kind) {
        case TaskKind::SEI: s.batch_size = 512; break;
        case TaskKind::EDA: s.batch_size = 128; break;
        case TaskKind::RFEC: s.batch_size = 128; break;
    }
    return s;
}

LossResult loss_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) throw ValidationError("cross entropy expects B x V logits");
    const std::size_t batch = logits.dim(0);
    const std::size_t classes = logits.dim(1);
    if (labels.size() != batch) throw ValidationError("label count does not match batch");

    Tensor probs = softmax(logits, -1);
    LossResult r;
    r.grad = probs;
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const int lbl = labels[b];
        if (lbl < 1 || static_cast<std::size_t>(lbl) > classes)
            throw ValidationError("label " + std::to_string(lbl) + " out of range 1.." +
                                  std::to_string(classes));
        const std::size_t c = static_cast<std::size_t>(lbl - 1);
        total += -std::log(std::max(probs.at2(b, c), 1e-300));
        r.grad.at2(b, c) -= 1.0;
    }
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (auto& g : r.grad.data) g *= inv_b;
    r.value = total * inv_b;
    return r;
}

PairLossResult loss_contrastive(const Tensor& z1, const Tensor& z2, const std::vector<int>& y,
                                double margin) {
    if (margin <= 0.0) throw ValidationError("contrastive margin must be > 0");
    if (!z1.same_shape(z2) || z1.rank() != 2)
        throw ValidationError("contrastive loss expects matching B x d embeddings");
    const std::size_t batch = z1.dim(0);
    const std::size_t dim = z1.dim(1);
    if (y.size() != batch) throw ValidationError("pair label count does not match batch");

    PairLossResult r;
    r.grad1 = Tensor::zeros(z1.shape);
    r.grad2 = Tensor::zeros(z2.shape);
    const double inv_b = 1.0 / static_cast<double>(batch);
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            const double diff = z1.at2(b, j) - z2.at2(b, j);
            d2 += diff * diff;
        }
        if (y[b] == 1) {
            total += d2;
            for (std::size_t j = 0; j < dim; ++j) {
                const double diff = z1.at2(b, j) - z2.at2(b, j);
                r.grad1.at2(b, j) += 2.0 * diff * inv_b;
                r.grad2.at2(b, j) -= 2.0 * diff * inv_b;
            }
        } else if (y[b] == 0) {
            if (d2 < margin) {  // strict: subgradient 0 at the kink
                total += margin - d2;
                for (std::size_t j = 0; j < dim; ++j) {
                    const double diff = z1.at2(b, j) - z2.at2(b, j);
                    r.grad1.at2(b, j) -= 2.0 * diff * inv_b;
                    r.grad2.at2(b, j) += 2.0 * diff * inv_b;
                }
            }
        } else {
            throw ValidationError("pair labels must be 0 or 1");
        }
    }
    r.value = total * inv_b;
    return r;
}

LossResult loss_mse(const Tensor& x_hat, const Tensor& x) {
    if (!x_hat.same_shape(x)) throw ValidationError("mse shape mismatch");
    if (x_hat.rank() < 1 || x_hat.numel() == 0) throw ValidationError("mse on empty tensor");
    const std::size_t batch = x_hat.dim(0);
    const double inv_b = 1.0 / static_cast<double>(batch);
    LossResult r;
    r.grad = Tensor::zeros(x_hat.shape);
    double total = 0.0;
    for (std::size_t i = 0; i < x_hat.numel(); ++i) {
        const double d = x_hat.data[i] - x.data[i];
        total += d * d;
        r.grad.data[i] = 2.0 * d * inv_b;
    }
    r.value = total * inv_b;
    return r;
}

double eda_distance(const std::vector<double>& z1, const std::vector<double>& z2,
                    DistanceMetric metric) {
    if (z1.size() != z2.size() || z1.empty()) throw ValidationError("embedding size mismatch");
    if (metric == DistanceMetric::euclidean) {
        double d2 = 0.0;
        for (std::size_t i = 0; i < z1.size(); ++i) {
            const double d = z1[i] - z2[i];
            d2 += d * d;
        }
        return std::sqrt(d2);
    }
    double dot = 0.0, n1 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < z1.size(); ++i) {
        dot += z1[i] * z2[i];
        n1 += z1[i] * z1[i];
        n2 += z2[i] * z2[i];
    }
    if (n1 == 0.0 || n2 == 0.0) throw NumericError("cosine distance of zero vector");
    return 1.0 - dot / (std::sqrt(n1) * std::sqrt(n2));
}

std::vector<double> pair_distances(const Tensor& z1, const Tensor& z2, DistanceMetric metric) {
    if (!z1.same_shape(z2) || z1.rank() != 2)
        throw ValidationError("pair_distances expects matching B x d embeddings");
    const std::size_t batch = z1.dim(0);
    const std::size_t dim = z1.dim(1);
    std::vector<double> out(batch);
    std::vector<double> a(dim), b(dim);
    for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
            a[j] = z1.at2(i, j);
            b[j] = z2.at2(i, j);
        }
        out[i] = eda_distance(a, b, metric);
    }
    return out;
}

int eda_predict(double distance, double threshold) {
    if (threshold <= 0.0) throw ValidationError("threshold must be > 0");
    return distance < threshold ? 1 : 0;
}

int osr_score_msp(const std::vector<double>& logits, double threshold) {
    if (threshold <= 0.0 || threshold >= 1.0) throw ValidationError("MSP threshold must be in (0,1)");
    if (logits.empty()) throw ValidationError("empty logits");
    Tensor t{{1, logits.size()}, logits};
    Tensor p = softmax(t, -1);
    const double mx = *std::max_element(p.data.begin(), p.data.end());
    return mx >= threshold ? 0 : 1;
}

}  // namespace rffkit
