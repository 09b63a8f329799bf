#pragma once

#include "mtlkit/encoder.hpp"
#include "mtlkit/scheduler.hpp"

namespace mtlkit::tasks {

using diffcore::Graph;
using diffcore::Tensor;

enum class TaskKind { Binary, MultiClass, MultiLabel, Regression, TokenClass };

std::string kind_name(TaskKind k);
TaskKind kind_from_name(const std::string& name);

struct TaskType {
    TaskKind kind = TaskKind::Binary;
    long classes = 2;  // meaningful for MultiClass / MultiLabel / TokenClass

    static TaskType binary() { return {TaskKind::Binary, 2}; }
    static TaskType multi_class(long c) { return {TaskKind::MultiClass, c}; }
    static TaskType multi_label(long c) { return {TaskKind::MultiLabel, c}; }
    static TaskType regression() { return {TaskKind::Regression, 2}; }
    static TaskType token_class(long c) { return {TaskKind::TokenClass, c}; }

    void validate() const;
    long head_width() const;

    /// Output-space size used by loss scaling: 2 for binary and regression,
    /// c for multi-class and token-level, 2^c (capped at 2^20) for
    /// multi-label.
    double output_space_size() const;
    /// ln(output_space_size); the multi-label case is computed as
    /// min(c, 20) * ln 2 so the cap keeps the divisor finite.
    double log_output_space() const;

    bool operator==(const TaskType&) const = default;
};

struct TaskSpec {
    std::string task_id;
    std::string family;
    TaskType type;
    std::string dataset_path;  // empty for in-memory datasets

    void validate() const;
};

/// Two-layer head over the CLS vector (sequence tasks) or every position
/// (token-level tasks): d_model -> d_model, tanh, -> head_width.
struct Head {
    Tensor w1, b1, w2, b2;
    std::vector<Tensor> params() const { return {w1, b1, w2, b2}; }
};

struct TaskRuntime {
    TaskSpec spec;
    Head head;
    scheduler::SchedState sched;
};

/// Labels for one batch; exactly one of the fields matching the task type
/// is populated. Token labels align with token positions 1..len (position 0
/// is CLS) and carry a weight mask excluding CLS and padding.
struct BatchLabels {
    std::vector<long> class_labels;    // Binary (0/1) or MultiClass indices
    std::vector<double> targets;       // Regression
    std::vector<double> multihot;      // MultiLabel, row-major [b x c]
    std::vector<long> token_labels;    // TokenClass, [b x s]
    std::vector<double> token_weights; // TokenClass, [b x s]
};

TaskRuntime make_head(const TaskSpec& spec, long d_model, Rng& rng);

/// Raw (unscaled) loss for one batch. encoder_out is [b, s, d_model].
Tensor task_loss(Graph& g, const TaskRuntime& rt, const Tensor& encoder_out,
                 const BatchLabels& labels);

/// Head logits: [b, head_width] for sequence tasks, [b*s, classes] for
/// token-level tasks.
Tensor head_forward(Graph& g, const Head& head, TaskKind kind, const Tensor& encoder_out);

/// raw / ln(output_space_size).
Tensor scale_loss(Graph& g, const Tensor& raw, const TaskSpec& spec);

struct Metrics {
    double accuracy = std::numeric_limits<double>::quiet_NaN();
    double f1_macro = std::numeric_limits<double>::quiet_NaN();
    double f1_binary = std::numeric_limits<double>::quiet_NaN();    // positive-class F1
    double f1_weighted = std::numeric_limits<double>::quiet_NaN();  // support-weighted
    bool has_classification() const { return !std::isnan(accuracy); }
};

/// Classification metrics from aligned prediction/label sequences. For
/// regression both inputs are ignored and all fields stay NaN (loss is the
/// only reported metric). Rejects empty input.
Metrics compute_metrics(const std::vector<long>& predictions, const std::vector<long>& labels,
                        const TaskType& type);

/// Multi-label variant: per-class decisions, accuracy over all b*c label
/// slots, macro F1 over classes.
Metrics compute_multilabel_metrics(const std::vector<double>& probs,
                                   const std::vector<double>& multihot, long classes);

}  // namespace mtlkit::tasks
