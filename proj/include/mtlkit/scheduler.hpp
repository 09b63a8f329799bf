#pragma once

#include <limits>
#include <string>

#include "mtlkit/common.hpp"

namespace mtlkit::scheduler {

/// Per-task training phase. Legal transitions: ACTIVE->STOPPED,
/// STOPPED->RESURRECTED, RESURRECTED->STOPPED, and any->FINISHED when the
/// resurrection budget is spent (or the task produced a NaN loss).
/// FINISHED is absorbing.
enum class TaskPhase { Active, Stopped, Resurrected, Finished };

std::string phase_name(TaskPhase p);

struct SchedulerConfig {
    long eval_interval = 50;        // steps between validation observations
    long patience = 3;              // non-improving evals before stopping
    double resurrection_delta = 0.01;  // relative rise over best that counts
    long resurrection_confirm = 2;  // consecutive raised evals to resurrect
    long max_resurrections = 2;

    void validate() const {
        if (eval_interval <= 0 || patience <= 0 || resurrection_confirm <= 0 ||
            max_resurrections < 0 || resurrection_delta < 0.0)
            throw ConfigError("scheduler config: intervals/counts must be positive, delta >= 0");
    }
};

struct SchedState {
    TaskPhase phase = TaskPhase::Active;
    double best_val_loss = std::numeric_limits<double>::infinity();
    long patience_count = 0;
    long above_count = 0;        // consecutive evals above best*(1+delta) while stopped
    long resurrections_used = 0; // completed RESURRECTED->STOPPED cycles
    std::string diagnostic;
};

struct Transition {
    TaskPhase from;
    TaskPhase to;
    bool changed() const { return from != to; }
};

/// Applies one validation observation to the state machine.
/// ACTIVE/RESURRECTED: an improvement over best resets patience, otherwise
/// patience grows and hits STOPPED at the configured limit. STOPPED: once
/// the loss exceeds best*(1+delta) for `resurrection_confirm` consecutive
/// observations the task is resurrected, unless its budget of
/// `max_resurrections` grants is spent, in which case it is FINISHED.
/// NaN losses force FINISHED with a diagnostic. `resurrection_enabled`
/// gates the STOPPED->RESURRECTED edge (ablation arm).
Transition observe_validation(SchedState& st, double val_loss, const SchedulerConfig& cfg,
                              bool resurrection_enabled = true);

/// Head parameters update only while ACTIVE or RESURRECTED.
bool should_update_head(const SchedState& st);

}  // namespace mtlkit::scheduler
