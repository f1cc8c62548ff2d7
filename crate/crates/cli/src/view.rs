//! JSON renderings of a session, for the API and for `report.json`.

use aegis_core::orchestrator::Session;
use serde_json::{json, Value};

pub fn session_view(s: &Session) -> Value {
    let subtasks: Vec<Value> = s
        .plan
        .subtasks
        .iter()
        .map(|t| {
            let attempts: Vec<Value> = s
                .attempts(&t.id)
                .iter()
                .map(|a| {
                    json!({
                        "attempt": a.component.attempt,
                        "seed": format!("{:016x}", a.component.seed),
                        "score": a.score.as_ref().map(|x| x.value),
                        "parts": a.score.as_ref().map(|x| &x.parts),
                    })
                })
                .collect();
            json!({
                "id": t.id,
                "kind": t.kind(),
                "constraints": t.constraints,
                "accepted_attempt": s.accepted().get(&t.id),
                "retries": s.retries(&t.id),
                "attempts": attempts,
            })
        })
        .collect();
    let artifact = s.artifact();
    json!({
        "id": s.id,
        "prompt": s.prompt,
        "state": s.state,
        "created_at": s.created_at,
        "config": s.config,
        "plan_revision": s.plan.revision,
        "subtasks": subtasks,
        "layout": s.layout(),
        "payload": artifact.map(|a| a.payload.hex()),
        "psnr": artifact.map(|a| a.psnr),
        "ledger_records": s.ledger().len(),
        "last_event_seq": s.events().len(),
    })
}

/// One line per session for listings.
pub fn session_summary(s: &Session) -> Value {
    json!({
        "id": s.id,
        "prompt": s.prompt,
        "state": s.state,
        "created_at": s.created_at,
        "last_event_seq": s.events().len(),
    })
}
