// SPDX-License-Identifier: Apache-2.0

//! Checker for the per-enclave lifecycle trace grammar:
//!
//! ```text
//! ECREATE EINIT (EENTER (AEX ERESUME)* EEXIT)*
//! ```
//!
//! The check runs over the sub-trace of events mentioning one enclave id;
//! conformance and property tests use it against recorded machine traces.

use gp_core::TraceEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GrammarState {
    Start,
    Created,
    Outside,
    Inside,
    Interrupted,
}

/// Events that mention `id`, in order.
pub fn enclave_subtrace(trace: &[TraceEvent], id: u32) -> Vec<TraceEvent> {
    trace
        .iter()
        .filter(|ev| match ev {
            TraceEvent::Ecreate { enclave }
            | TraceEvent::Einit { enclave }
            | TraceEvent::Eenter { enclave }
            | TraceEvent::Eexit { enclave }
            | TraceEvent::Eresume { enclave }
            | TraceEvent::Aex { enclave, .. } => *enclave == id,
            _ => false,
        })
        .cloned()
        .collect()
}

/// Whether the sub-trace for `id` matches the lifecycle grammar. Partial
/// executions are accepted as long as no illegal transition occurred, except
/// that a trailing AEX (interrupted, not yet resumed) is also legal.
pub fn check_enclave_trace(trace: &[TraceEvent], id: u32) -> bool {
    let mut state = GrammarState::Start;
    for ev in enclave_subtrace(trace, id) {
        state = match (state, ev) {
            (GrammarState::Start, TraceEvent::Ecreate { .. }) => GrammarState::Created,
            (GrammarState::Created, TraceEvent::Einit { .. }) => GrammarState::Outside,
            (GrammarState::Outside, TraceEvent::Eenter { .. }) => GrammarState::Inside,
            (GrammarState::Inside, TraceEvent::Eexit { .. }) => GrammarState::Outside,
            (GrammarState::Inside, TraceEvent::Aex { .. }) => GrammarState::Interrupted,
            (GrammarState::Interrupted, TraceEvent::Eresume { .. }) => GrammarState::Inside,
            _ => return false,
        };
    }
    true
}
