//! Stand-alone model of the generate/review loop, written from the algorithm
//! rather than from the orchestrator, plus a trace extractor for comparing
//! the two.

#![allow(dead_code)]

use aegis_core::orchestrator::{Action, Event};
use aegis_core::reviewer::Decision;

/// Score returned once a script runs out.
pub const FALLBACK: f64 = 1.0;

/// For each subtask in plan order, generate and score, regenerating while the
/// score is under tau. The budget is `max_attempts`. On exhaustion, either
/// keep the best (earliest on ties) or stop and escalate.
pub fn reference_trace(subtasks: &[&str], scripts: &[Vec<f64>], tau: f64, max_attempts: u32, escalate: bool) -> Vec<String> {
    let mut trace = Vec::new();
    for (t, script) in subtasks.iter().zip(scripts) {
        let (mut best_a, mut best_s) = (0, f64::NEG_INFINITY);
        let mut a = 0;
        loop {
            a += 1;
            let s = script.get(a as usize - 1).copied().unwrap_or(FALLBACK);
            trace.push(format!("generate {t} {a}"));
            trace.push(format!("review {t} {a}"));
            if s > best_s {
                (best_a, best_s) = (a, s);
            }
            if s >= tau {
                trace.push(format!("accept {t} {a}"));
                break;
            }
            if a == max_attempts {
                if escalate {
                    trace.push(format!("escalate {t} {best_a}"));
                    return trace;
                }
                trace.push(format!("accept {t} {best_a}"));
                break;
            }
            trace.push(format!("regenerate {t}"));
        }
    }
    trace.push("integrate".into());
    trace.push("protect".into());
    trace
}

pub fn orchestrator_trace(events: &[Event]) -> Vec<String> {
    let mut trace = Vec::new();
    for e in events {
        match &e.action {
            Action::Generate { subtask, attempt } => trace.push(format!("generate {subtask} {attempt}")),
            Action::Review {
                subtask,
                attempt,
                decision,
                ..
            } => {
                trace.push(format!("review {subtask} {attempt}"));
                trace.push(match decision {
                    Decision::Accept { attempt } => format!("accept {subtask} {attempt}"),
                    Decision::Regenerate => format!("regenerate {subtask}"),
                    Decision::Escalate { best_attempt } => format!("escalate {subtask} {best_attempt}"),
                });
            }
            Action::Integrate { .. } => trace.push("integrate".into()),
            Action::Protect { .. } => trace.push("protect".into()),
            Action::Plan { .. } | Action::Intervene { .. } | Action::Fail => {}
        }
    }
    trace
}

/// Every below/above-tau pattern of length 1 to 3. Below-tau values differ
/// by position so keep-best has a unique answer to find.
pub fn score_patterns() -> Vec<Vec<f64>> {
    const BELOW: [f64; 3] = [0.4, 0.2, 0.6];
    const ABOVE: f64 = 0.9;
    let mut out = Vec::new();
    for len in 1..=3usize {
        for mask in 0..(1u32 << len) {
            out.push((0..len).map(|i| if mask >> i & 1 == 1 { ABOVE } else { BELOW[i] }).collect());
        }
    }
    out
}

pub const TWO_ELEMENTS: &str = r#"scene "pair" {
  element sun { kind: sun; }
  element tree { kind: tree; }
}"#;
pub const TWO_IDS: [&str; 2] = ["st-1-sun", "st-2-tree"];
