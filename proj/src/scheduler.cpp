#include "mtlkit/scheduler.hpp"

#include <cmath>

namespace mtlkit::scheduler {

std::string phase_name(TaskPhase p) {
    switch (p) {
        case TaskPhase::Active: return "ACTIVE";
        case TaskPhase::Stopped: return "STOPPED";
        case TaskPhase::Resurrected: return "RESURRECTED";
        case TaskPhase::Finished: return "FINISHED";
    }
    return "?";
}

Transition observe_validation(SchedState& st, double val_loss, const SchedulerConfig& cfg,
                              bool resurrection_enabled) {
    cfg.validate();
    TaskPhase from = st.phase;
    if (std::isnan(val_loss)) {
        st.phase = TaskPhase::Finished;
        st.diagnostic = "validation loss is NaN";
        return {from, st.phase};
    }
    switch (st.phase) {
        case TaskPhase::Active:
        case TaskPhase::Resurrected:
            if (val_loss < st.best_val_loss) {
                st.best_val_loss = val_loss;
                st.patience_count = 0;
            } else {
                ++st.patience_count;
                if (st.patience_count >= cfg.patience) {
                    if (st.phase == TaskPhase::Resurrected) ++st.resurrections_used;
                    st.phase = TaskPhase::Stopped;
                    st.patience_count = 0;
                    st.above_count = 0;
                }
            }
            break;
        case TaskPhase::Stopped:
            if (!resurrection_enabled) break;
            if (val_loss > st.best_val_loss * (1.0 + cfg.resurrection_delta)) {
                ++st.above_count;
                if (st.above_count >= cfg.resurrection_confirm) {
                    if (st.resurrections_used >= cfg.max_resurrections) {
                        // Budget spent; granting another cycle would exceed it.
                        st.phase = TaskPhase::Finished;
                        st.diagnostic = "resurrection budget exhausted";
                    } else {
                        st.phase = TaskPhase::Resurrected;
                        st.patience_count = 0;
                    }
                    st.above_count = 0;
                }
            } else {
                st.above_count = 0;
            }
            break;
        case TaskPhase::Finished:
            break;
    }
    return {from, st.phase};
}

bool should_update_head(const SchedState& st) {
    return st.phase == TaskPhase::Active || st.phase == TaskPhase::Resurrected;
}

}  // namespace mtlkit::scheduler
