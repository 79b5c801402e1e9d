#include "rffkit/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "rffkit/common.hpp"
#include "rffkit/rng.hpp"

namespace rffkit {

std::size_t pick_best_epoch(const std::vector<double>& valid_losses) {
    if (valid_losses.empty()) throw ValidationError("no epochs recorded");
    std::size_t best = 0;
    for (std::size_t i = 1; i < valid_losses.size(); ++i)
        if (valid_losses[i] < valid_losses[best]) best = i;
    return best + 1;
}

std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t b) {
    if (n == 0 || b == 0) throw ValidationError("empty dataset or batch size");
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t start = 0; start < n; start += b) out.emplace_back(start, std::min(n, start + b));
    if (out.size() >= 2 && out.back().second - out.back().first == 1) {
        // A trailing singleton would break train-mode batchnorm; fold it in.
        out[out.size() - 2].second = out.back().second;
        out.pop_back();
    }
    return out;
}

void AdamOptimizer::step(const std::vector<Parameter*>& params) {
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (Parameter* p : params) {
        for (std::size_t i = 0; i < p->value.numel(); ++i) {
            double g = p->grad.data[i];
            if (!std::isfinite(g)) throw NumericError("non-finite gradient in '" + p->name + "'");
            g += weight_decay * p->value.data[i];
            p->adam_m.data[i] = beta1 * p->adam_m.data[i] + (1.0 - beta1) * g;
            p->adam_v.data[i] = beta2 * p->adam_v.data[i] + (1.0 - beta2) * g * g;
            const double m_hat = p->adam_m.data[i] / bc1;
            const double v_hat = p->adam_v.data[i] / bc2;
            p->value.data[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
            p->grad.data[i] = 0.0;
        }
    }
}

std::vector<Parameter*> collect_parameters(Model& model) {
    std::vector<Parameter*> out;
    for (auto* stack : {&model.fingerprint, &model.head})
        for (auto& layer : *stack)
            for (auto& p : layer.params) out.push_back(&p);
    return out;
}

Tensor bursts_to_batch(const LabeledDataset& ds, const std::vector<std::size_t>& indices,
                       const ModelSpec& spec) {
    const std::size_t batch = indices.size();
    const std::size_t len = ds.burst_len;
    if (len != spec.input_len) throw ValidationError("dataset burst length does not match model");
    Tensor out = Tensor::zeros(input_shape(spec, batch));
    for (std::size_t b = 0; b < batch; ++b) {
        const auto& samples = ds.bursts[indices[b]].samples;
        if (samples.size() != len) throw DataError("inconsistent burst length");
        if (is_conv_input(spec.kind)) {
            for (std::size_t l = 0; l < len; ++l) {
                out.at3(b, 0, l) = samples[l].real();
                out.at3(b, 1, l) = samples[l].imag();
            }
        } else {
            for (std::size_t l = 0; l < len; ++l) {
                out.at2(b, 2 * l) = samples[l].real();
                out.at2(b, 2 * l + 1) = samples[l].imag();
            }
        }
    }
    return out;
}

namespace {

// A task's view of the network: the (possibly shared) fingerprint stack plus
// this task's own head.
struct TaskNet {
    const ModelSpec* spec;
    std::vector<Layer>* fingerprint;
    std::vector<Layer>* head;
};

void validate_task_data(const TaskSpec& task, const TaskData& data, const Model& model) {
    switch (task.kind) {
        case TaskKind::SEI:
            if (!data.train || !data.valid) throw ValidationError("SEI needs train/valid datasets");
            if (data.valid->bursts.empty()) throw ValidationError("validation set is empty");
            if (is_autoencoder(model.spec.kind) || model.spec.n_classes == 0)
                throw ValidationError("SEI requires a classifier model");
            break;
        case TaskKind::EDA:
            if (!data.pair_train || !data.pair_valid || !data.pair_source)
                throw ValidationError("EDA needs pair train/valid sets and the source dataset");
            if (data.pair_valid->entries.empty()) throw ValidationError("validation set is empty");
            if (is_autoencoder(model.spec.kind) || model.spec.n_classes != 0)
                throw ValidationError("EDA uses a headless embedding model");
            break;
        case TaskKind::RFEC:
            if (!data.train || !data.valid) throw ValidationError("RFEC needs train/valid datasets");
            if (data.valid->bursts.empty()) throw ValidationError("validation set is empty");
            if (!is_autoencoder(model.spec.kind))
                throw ValidationError("RFEC requires an autoencoder model");
            break;
    }
}

std::size_t task_train_size(const TaskSpec& task, const TaskData& data) {
    return task.kind == TaskKind::EDA ? data.pair_train->entries.size()
                                      : data.train->bursts.size();
}

// One gradient pass over a mini-batch; loss gradient scaled by `weight`.
// Returns the (unweighted) mean batch loss.
double batch_gradients(const TaskSpec& task, const TaskData& data, const TaskNet& net,
                       const std::vector<std::size_t>& batch_idx, double weight) {
    switch (task.kind) {
        case TaskKind::SEI: {
            Tensor x = bursts_to_batch(*data.train, batch_idx, *net.spec);
            std::vector<int> labels;
            labels.reserve(batch_idx.size());
            for (auto i : batch_idx) labels.push_back(data.train->bursts[i].label.value());
            std::vector<LayerCache> fp_caches, head_caches;
            Tensor z = stack_forward(*net.fingerprint, x, Mode::train, &fp_caches);
            Tensor logits = stack_forward(*net.head, z, Mode::train, &head_caches);
            LossResult loss = loss_cross_entropy(logits, labels);
            if (weight != 1.0)
                for (auto& g : loss.grad.data) g *= weight;
            Tensor gz = stack_backward(*net.head, head_caches, loss.grad);
            stack_backward(*net.fingerprint, fp_caches, gz);
            return loss.value;
        }
        case TaskKind::EDA: {
            std::vector<std::size_t> i1, i2;
            std::vector<int> y;
            for (auto i : batch_idx) {
                const auto& e = data.pair_train->entries[i];
                i1.push_back(e.i1);
                i2.push_back(e.i2);
                y.push_back(e.y);
            }
            Tensor x1 = bursts_to_batch(*data.pair_source, i1, *net.spec);
            Tensor x2 = bursts_to_batch(*data.pair_source, i2, *net.spec);
            std::vector<LayerCache> c1, c2;
            Tensor z1 = stack_forward(*net.fingerprint, x1, Mode::train, &c1);
            Tensor z2 = stack_forward(*net.fingerprint, x2, Mode::train, &c2);
            PairLossResult loss = loss_contrastive(z1, z2, y, task.margin);
            if (weight != 1.0) {
                for (auto& g : loss.grad1.data) g *= weight;
                for (auto& g : loss.grad2.data) g *= weight;
            }
            stack_backward(*net.fingerprint, c1, loss.grad1);
            stack_backward(*net.fingerprint, c2, loss.grad2);
            return loss.value;
        }
        case TaskKind::RFEC: {
            Tensor x = bursts_to_batch(*data.train, batch_idx, *net.spec);
            std::vector<LayerCache> enc_caches, dec_caches;
            Tensor z = stack_forward(*net.fingerprint, x, Mode::train, &enc_caches);
            Tensor rec = stack_forward(*net.head, z, Mode::train, &dec_caches);
            Tensor target = x;
            target.shape = rec.shape;  // decoder emits the flattened signal
            LossResult loss = loss_mse(rec, target);
            if (weight != 1.0)
                for (auto& g : loss.grad.data) g *= weight;
            Tensor gz = stack_backward(*net.head, dec_caches, loss.grad);
            stack_backward(*net.fingerprint, enc_caches, gz);
            return loss.value;
        }
    }
    throw ValidationError("unknown task kind");
}

double eval_loss_on(const TaskSpec& task, const TaskData& data, const TaskNet& net) {
    double total = 0.0;
    std::size_t count = 0;
    if (task.kind == TaskKind::EDA) {
        const PairDataset* pairs = data.pair_valid;
        for (const auto& [lo, hi] : batch_ranges(pairs->entries.size(), 256)) {
            std::vector<std::size_t> i1, i2;
            std::vector<int> y;
            for (std::size_t i = lo; i < hi; ++i) {
                i1.push_back(pairs->entries[i].i1);
                i2.push_back(pairs->entries[i].i2);
                y.push_back(pairs->entries[i].y);
            }
            Tensor z1 = stack_forward(*net.fingerprint,
                                      bursts_to_batch(*data.pair_source, i1, *net.spec), Mode::eval,
                                      nullptr);
            Tensor z2 = stack_forward(*net.fingerprint,
                                      bursts_to_batch(*data.pair_source, i2, *net.spec), Mode::eval,
                                      nullptr);
            total += loss_contrastive(z1, z2, y, task.margin).value * static_cast<double>(hi - lo);
            count += hi - lo;
        }
    } else {
        const LabeledDataset* ds = data.valid;
        for (const auto& [lo, hi] : batch_ranges(ds->bursts.size(), 256)) {
            std::vector<std::size_t> idx;
            for (std::size_t i = lo; i < hi; ++i) idx.push_back(i);
            Tensor x = bursts_to_batch(*ds, idx, *net.spec);
            if (task.kind == TaskKind::SEI) {
                std::vector<int> labels;
                for (auto i : idx) labels.push_back(ds->bursts[i].label.value());
                Tensor z = stack_forward(*net.fingerprint, x, Mode::eval, nullptr);
                Tensor logits = stack_forward(*net.head, z, Mode::eval, nullptr);
                total += loss_cross_entropy(logits, labels).value * static_cast<double>(hi - lo);
            } else {
                Tensor z = stack_forward(*net.fingerprint, x, Mode::eval, nullptr);
                Tensor rec = stack_forward(*net.head, z, Mode::eval, nullptr);
                Tensor target = x;
                target.shape = rec.shape;
                total += loss_mse(rec, target).value * static_cast<double>(hi - lo);
            }
            count += hi - lo;
        }
    }
    return total / static_cast<double>(count);
}

struct StackSnapshot {
    std::vector<Tensor> values;
    std::vector<Tensor> running;

    static StackSnapshot take(const std::vector<Layer>& stack) {
        StackSnapshot s;
        for (const auto& l : stack) {
            for (const auto& p : l.params) s.values.push_back(p.value);
            if (l.spec.kind == LayerKind::batchnorm1d) {
                s.running.push_back(l.running_mean);
                s.running.push_back(l.running_var);
            }
        }
        return s;
    }

    void restore(std::vector<Layer>& stack) const {
        std::size_t vi = 0, ri = 0;
        for (auto& l : stack) {
            for (auto& p : l.params) p.value = values[vi++];
            if (l.spec.kind == LayerKind::batchnorm1d) {
                l.running_mean = running[ri++];
                l.running_var = running[ri++];
            }
        }
    }
};

// Per-(slot, epoch, cycle) shuffle stream so that joint training with a
// single task replays exactly the single-task schedule.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed, std::size_t slot,
                                          std::size_t epoch, std::size_t cycle) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(derive_seed(derive_seed(seed, 0x73687566, slot), epoch * 104729 + cycle));
    rng.shuffle(idx);
    return idx;
}

}  // namespace

double evaluate_loss(const TaskSpec& task, const TaskData& data, Model& model) {
    TaskNet net{&model.spec, &model.fingerprint, &model.head};
    return eval_loss_on(task, data, net);
}

TrainResult train_single_task(const TaskSpec& task, const TaskData& data, Model model,
                              const TrainConfig& config) {
    std::vector<Model> models;
    models.push_back(std::move(model));
    JointResult joint = train_joint({task}, {data}, std::move(models), {1.0}, config);
    return TrainResult{std::move(joint.per_task[0]), std::move(joint.history)};
}

JointResult train_joint(const std::vector<TaskSpec>& tasks, const std::vector<TaskData>& data,
                        std::vector<Model> models, const std::vector<double>& alpha,
                        const TrainConfig& config) {
    if (tasks.empty() || tasks.size() != data.size() || tasks.size() != models.size() ||
        tasks.size() != alpha.size())
        throw ValidationError("task/data/model/alpha lists must have equal length");
    double alpha_sum = 0.0;
    for (double a : alpha) alpha_sum += a;
    if (std::abs(alpha_sum - 1.0) > 1e-12) throw ValidationError("task weights must sum to 1");
    if (config.epochs < 1) throw ValidationError("epochs must be >= 1");
    if (config.batch_size < 2) throw ValidationError("batch size must be >= 2");
    for (std::size_t t = 0; t < tasks.size(); ++t) validate_task_data(tasks[t], data[t], models[t]);
    for (std::size_t t = 1; t < models.size(); ++t) {
        if (models[t].spec.embed_dim != models[0].spec.embed_dim)
            throw ValidationError("embedding dims differ across task heads");
        if (models[t].spec.kind != models[0].spec.kind ||
            models[t].spec.input_len != models[0].spec.input_len)
            throw ValidationError("tasks must share one fingerprint-head spec");
    }

    // models[0].fingerprint is the shared theta; other tasks forward through
    // it and contribute only their own heads.
    Model& shared = models[0];
    auto net_for = [&](std::size_t t) {
        return TaskNet{&models[t].spec, &shared.fingerprint,
                       t == 0 ? &shared.head : &models[t].head};
    };

    std::vector<Parameter*> params = collect_parameters(shared);
    for (std::size_t t = 1; t < models.size(); ++t) {
        if (alpha[t] == 0.0) continue;
        for (auto& layer : models[t].head)
            for (auto& p : layer.params) params.push_back(&p);
    }

    AdamOptimizer adam{config.learning_rate, config.adam_beta1, config.adam_beta2,
                       config.adam_eps, config.weight_decay};

    std::vector<std::size_t> n_train(tasks.size()), n_batches(tasks.size());
    std::size_t steps_per_epoch = 0;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        n_train[t] = task_train_size(tasks[t], data[t]);
        n_batches[t] = batch_ranges(n_train[t], config.batch_size).size();
        if (alpha[t] > 0.0) steps_per_epoch = std::max(steps_per_epoch, n_batches[t]);
    }
    if (steps_per_epoch == 0) throw ValidationError("all task weights are zero");

    TrainHistory history;
    double best_loss = std::numeric_limits<double>::infinity();
    StackSnapshot best_fp;
    std::vector<StackSnapshot> best_heads(models.size());

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto t_start = std::chrono::steady_clock::now();

        struct Queue {
            std::vector<std::size_t> order;
            std::vector<std::pair<std::size_t, std::size_t>> ranges;
            std::size_t next = 0;
            std::size_t cycle = 0;
        };
        std::vector<Queue> queues(tasks.size());
        for (std::size_t t = 0; t < tasks.size(); ++t) {
            if (alpha[t] == 0.0) continue;
            queues[t].order = shuffled_indices(n_train[t], config.seed, t, epoch, 0);
            queues[t].ranges = batch_ranges(n_train[t], config.batch_size);
        }

        double loss_sum = 0.0;
        for (std::size_t step = 0; step < steps_per_epoch; ++step) {
            double step_loss = 0.0;
            for (std::size_t t = 0; t < tasks.size(); ++t) {
                if (alpha[t] == 0.0) continue;
                auto& q = queues[t];
                if (q.next >= q.ranges.size()) {
                    ++q.cycle;
                    q.order = shuffled_indices(n_train[t], config.seed, t, epoch, q.cycle);
                    q.next = 0;
                }
                const auto [lo, hi] = q.ranges[q.next++];
                std::vector<std::size_t> batch_idx(q.order.begin() + static_cast<std::ptrdiff_t>(lo),
                                                   q.order.begin() + static_cast<std::ptrdiff_t>(hi));
                double batch_loss;
                try {
                    batch_loss = batch_gradients(tasks[t], data[t], net_for(t), batch_idx, alpha[t]);
                } catch (const NumericError& e) {
                    throw NumericError("task " + task_kind_name(tasks[t].kind) + " epoch " +
                                       std::to_string(epoch) + " batch " + std::to_string(step) +
                                       ": " + e.what());
                }
                if (!std::isfinite(batch_loss))
                    throw NumericError("task " + task_kind_name(tasks[t].kind) + " epoch " +
                                       std::to_string(epoch) + " batch " + std::to_string(step) +
                                       ": non-finite loss");
                step_loss += alpha[t] * batch_loss;
            }
            adam.step(params);
            loss_sum += step_loss;
        }

        double valid_loss = 0.0;
        for (std::size_t t = 0; t < tasks.size(); ++t) {
            if (alpha[t] == 0.0) continue;
            valid_loss += alpha[t] * eval_loss_on(tasks[t], data[t], net_for(t));
        }

        const double train_loss = loss_sum / static_cast<double>(steps_per_epoch);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        history.epochs.push_back({train_loss, valid_loss, secs});
        if (valid_loss < best_loss) {
            best_loss = valid_loss;
            history.best_epoch = epoch;
            best_fp = StackSnapshot::take(shared.fingerprint);
            best_heads[0] = StackSnapshot::take(shared.head);
            for (std::size_t t = 1; t < models.size(); ++t)
                best_heads[t] = StackSnapshot::take(models[t].head);
        }
        if (config.verbose)
            std::printf("epoch %zu/%zu train %.6f valid %.6f (%.2fs)\n", epoch, config.epochs,
                        train_loss, valid_loss, secs);
    }

    best_fp.restore(shared.fingerprint);
    best_heads[0].restore(shared.head);
    for (std::size_t t = 1; t < models.size(); ++t) {
        best_heads[t].restore(models[t].head);
        models[t].fingerprint = shared.fingerprint;
    }
    return JointResult{std::move(models), std::move(history)};
}

IndependentResult train_independent(const std::vector<TaskSpec>& tasks,
                                    const std::vector<TaskData>& data,
                                    const std::vector<ModelSpec>& specs,
                                    const TrainConfig& config, bool report_and_skip) {
    if (tasks.size() != data.size() || tasks.size() != specs.size())
        throw ValidationError("task/data/spec lists must have equal length");
    IndependentResult out;
    out.results.resize(tasks.size());
    out.errors.assign(tasks.size(), "");
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        // Seed derived from the task kind, not the list position.
        TrainConfig per = config;
        per.seed = derive_seed(config.seed, 0x696e646570,
                               static_cast<std::uint64_t>(tasks[t].kind));
        per.learning_rate = tasks[t].learning_rate;
        per.epochs = tasks[t].epochs;
        per.batch_size = tasks[t].batch_size;
        per.weight_decay = tasks[t].weight_decay;
        try {
            Model model = build_model(specs[t], per.seed);
            out.results[t] = train_single_task(tasks[t], data[t], std::move(model), per);
        } catch (const std::exception& e) {
            const std::string msg = "task " + task_kind_name(tasks[t].kind) + ": " + e.what();
            if (!report_and_skip) throw NumericError(msg);
            out.errors[t] = msg;
        }
    }
    return out;
}

Model aggregate_params(const std::vector<Model>& models) {
    if (models.empty()) throw ValidationError("nothing to aggregate");
    Model out = models[0];
    auto out_params = collect_parameters(out);
    const double inv_n = 1.0 / static_cast<double>(models.size());
    for (std::size_t m = 1; m < models.size(); ++m) {
        Model copy = models[m];
        auto params = collect_parameters(copy);
        if (params.size() != out_params.size())
            throw ValidationError("parameter sets differ in structure");
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (params[i]->value.shape != out_params[i]->value.shape)
                throw ValidationError("parameter shape mismatch in '" + params[i]->name + "'");
            for (std::size_t k = 0; k < params[i]->value.numel(); ++k)
                out_params[i]->value.data[k] += params[i]->value.data[k];
        }
    }
    for (auto* p : out_params)
        for (auto& v : p->value.data) v *= inv_n;

    // Running statistics averaged the same way.
    for (std::size_t si = 0; si < 2; ++si) {
        auto& out_stack = si == 0 ? out.fingerprint : out.head;
        for (std::size_t li = 0; li < out_stack.size(); ++li) {
            if (out_stack[li].spec.kind != LayerKind::batchnorm1d) continue;
            for (std::size_t k = 0; k < out_stack[li].running_mean.numel(); ++k) {
                double mean_sum = 0.0, var_sum = 0.0;
                for (const auto& m : models) {
                    const auto& stack = si == 0 ? m.fingerprint : m.head;
                    mean_sum += stack[li].running_mean.data[k];
                    var_sum += stack[li].running_var.data[k];
                }
                out_stack[li].running_mean.data[k] = mean_sum * inv_n;
                out_stack[li].running_var.data[k] = var_sum * inv_n;
            }
        }
    }
    return out;
}

LabeledDataset subsample_train(const LabeledDataset& ds, double p, std::uint64_t seed) {
    if (!(p > 0.0 && p <= 1.0)) throw ValidationError("proportion must be in (0, 1]");
    if (p == 1.0) return ds;
    std::vector<std::vector<std::size_t>> by_label(ds.V + 1);
    for (std::size_t i = 0; i < ds.bursts.size(); ++i)
        by_label[static_cast<std::size_t>(ds.bursts[i].label.value_or(0))].push_back(i);
    LabeledDataset out;
    out.V = ds.V;
    out.burst_len = ds.burst_len;
    for (std::size_t lbl = 1; lbl <= ds.V; ++lbl) {
        auto& idx = by_label[lbl];
        const auto keep = static_cast<std::size_t>(
            std::llround(p * static_cast<double>(idx.size())));
        if (keep == 0)
            throw ValidationError("proportion " + std::to_string(p) + " empties class " +
                                  std::to_string(lbl));
        Rng rng(derive_seed(seed, 0x73756273, lbl));
        rng.shuffle(idx);
        std::vector<std::size_t> kept(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep));
        std::sort(kept.begin(), kept.end());
        for (auto i : kept) out.bursts.push_back(ds.bursts[i]);
    }
    return out;
}

void save_history_csv(const TrainHistory& history, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot open " + path + " for writing");
    f << "epoch,train_loss,valid_loss,seconds\n";
    for (std::size_t i = 0; i < history.epochs.size(); ++i) {
        const auto& e = history.epochs[i];
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%zu,%.12g,%.12g,%.3f\n", i + 1, e.train_loss,
                      e.valid_loss, e.seconds);
        f << buf;
    }
    if (!f) throw DataError("write failure on " + path);
}

}  // namespace rffkit
