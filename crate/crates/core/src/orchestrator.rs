//! Pipeline state machine: plan, generate and review each subtask, integrate,
//! protect. Every transition appends to the session ledger and emits an
//! [`Event`].
//!
//! A [`Session`] is plain data; the [`Orchestrator`] owns the agents and
//! drives sessions through [`Orchestrator::step`] and
//! [`Orchestrator::intervene`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::generator::{Component, GenConfig, Generator, ProceduralGenerator};
use crate::integrator::{integrate, IntegratorConfig, Layout};
use crate::planner::{decompose, edit_plan, Constraints, Lexicon, Plan, PlanEdit, PlannerError, ReferencePlanner};
use crate::provenance::{micros, sha256_hex, verify, Agent, Entry, Ledger};
use crate::raster::{psnr, Image};
use crate::reviewer::{best_attempt, gate, AttributeScorer, Decision, OnExhaust, ReviewPolicy, ReviewScore, Scorer};
use crate::watermark::{build_payload, embed, WatermarkConfig, WatermarkPayload};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrchestratorError {
    #[error("prompt rejected: {0}")]
    PromptRejected(PlannerError),
    #[error("cannot step a session in state {0}")]
    IllegalState(String),
    #[error("{kind} is not allowed in state {state}")]
    IllegalIntervention { kind: String, state: String },
    #[error("invalid intervention: {0}")]
    InvalidIntervention(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Auto,
    Interactive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Identity {
    pub account_id: String,
    pub project_id: String,
}

impl Default for Identity {
    fn default() -> Self {
        Identity {
            account_id: "acct-local".into(),
            project_id: "proj-default".into(),
        }
    }
}

/// Where timestamps come from. A fixed clock makes payloads and ledgers
/// reproducible: every record gets `epoch_s` as its time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "clock", rename_all = "snake_case")]
pub enum Clock {
    Fixed { epoch_s: i64 },
    System,
}

impl Clock {
    fn now_ms(self) -> i64 {
        match self {
            Clock::Fixed { epoch_s } => epoch_s * 1000,
            Clock::System => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_millis() as i64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub mode: Mode,
    pub review: ReviewPolicy,
    pub generator: GenConfig,
    pub watermark: WatermarkConfig,
    pub integrator: IntegratorConfig,
    pub identity: Identity,
    pub clock: Clock,
}

impl SessionConfig {
    /// Defaults for `mode`; interactive sessions escalate on exhaustion.
    pub fn new(mode: Mode) -> Self {
        let on_exhaust = match mode {
            Mode::Auto => OnExhaust::TakeBest,
            Mode::Interactive => OnExhaust::Escalate,
        };
        SessionConfig {
            mode,
            review: ReviewPolicy {
                on_exhaust,
                ..ReviewPolicy::default()
            },
            generator: GenConfig::default(),
            watermark: WatermarkConfig::default(),
            integrator: IntegratorConfig::default(),
            identity: Identity::default(),
            clock: Clock::System,
        }
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let bad = |e: String| OrchestratorError::InvalidConfig(e);
        self.review.validate().map_err(|e| bad(e.to_string()))?;
        self.generator.validate().map_err(|e| bad(e.to_string()))?;
        self.watermark.validate().map_err(|e| bad(e.to_string()))?;
        self.integrator.validate().map_err(|e| bad(e.to_string()))?;
        if self.identity.account_id.is_empty() || self.identity.project_id.is_empty() {
            return Err(bad("account_id and project_id must be nonempty".into()));
        }
        Ok(())
    }
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig::new(Mode::Auto)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name")]
pub enum State {
    Planning,
    AwaitPlanApproval,
    Generating { subtask: String },
    Reviewing { subtask: String },
    AwaitReviewDecision { subtask: String },
    Integrating,
    Protecting,
    Done,
    Failed { reason: String },
}

impl State {
    pub fn name(&self) -> &'static str {
        match self {
            State::Planning => "Planning",
            State::AwaitPlanApproval => "AwaitPlanApproval",
            State::Generating { .. } => "Generating",
            State::Reviewing { .. } => "Reviewing",
            State::AwaitReviewDecision { .. } => "AwaitReviewDecision",
            State::Integrating => "Integrating",
            State::Protecting => "Protecting",
            State::Done => "Done",
            State::Failed { .. } => "Failed",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, State::Done | State::Failed { .. })
    }

    pub fn is_awaiting(&self) -> bool {
        matches!(self, State::AwaitPlanApproval | State::AwaitReviewDecision { .. })
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            State::Generating { subtask } | State::Reviewing { subtask } | State::AwaitReviewDecision { subtask } => {
                write!(f, "{}({subtask})", self.name())
            }
            State::Failed { reason } => write!(f, "Failed({reason})"),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewOverride {
    Accept,
    Retry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Intervention {
    ApprovePlan,
    EditPlan { edit: PlanEdit },
    OverrideReview { subtask: String, action: ReviewOverride },
    /// `path` is one of [`SETTABLE_PARAMS`].
    SetParam { path: String, value: Value },
    /// Continue past whichever gate is pending: approve the plan, or keep
    /// the best attempt.
    Resume,
    Abort,
}

impl Intervention {
    pub fn kind(&self) -> &'static str {
        match self {
            Intervention::ApprovePlan => "approve_plan",
            Intervention::EditPlan { .. } => "edit_plan",
            Intervention::OverrideReview { .. } => "override_review",
            Intervention::SetParam { .. } => "set_param",
            Intervention::Resume => "resume",
            Intervention::Abort => "abort",
        }
    }
}

pub const SETTABLE_PARAMS: [&str; 11] = [
    "review.tau",
    "review.max_attempts",
    "review.on_exhaust",
    "generator.eta",
    "generator.seed",
    "watermark.lambda",
    "watermark.key",
    "integrator.theta",
    "integrator.harmonize_luma",
    "identity.account_id",
    "identity.project_id",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Plan { subtasks: usize },
    Generate { subtask: String, attempt: u32 },
    Review { subtask: String, attempt: u32, score: f64, decision: Decision },
    Integrate { unresolved: usize },
    Protect { payload: String, psnr: f64 },
    Intervene { kind: String },
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub session_id: String,
    /// Starts at 1, strictly increasing per session.
    pub seq: u64,
    pub state_before: State,
    pub state_after: State,
    pub action: Action,
    pub summary: String,
    /// Ledger records this transition appended, as a half-open index range.
    pub ledger_range: (u64, u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attempt {
    pub component: Component,
    pub score: Option<ReviewScore>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub image: Image,
    pub payload: WatermarkPayload,
    /// Against the unmarked composite.
    pub psnr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    pub prompt: String,
    pub config: SessionConfig,
    pub state: State,
    pub plan: Plan,
    /// UTC seconds, bound into the watermark payload.
    pub created_at: i64,
    attempts: BTreeMap<String, Vec<Attempt>>,
    retries: BTreeMap<String, u32>,
    accepted: BTreeMap<String, u32>,
    layout: Option<Layout>,
    composite: Option<Image>,
    artifact: Option<Artifact>,
    ledger: Ledger,
    events: Vec<Event>,
}

impl Session {
    pub fn attempts(&self, subtask: &str) -> &[Attempt] {
        self.attempts.get(subtask).map_or(&[], Vec::as_slice)
    }

    /// Accepted attempt number per subtask so far.
    pub fn accepted(&self) -> &BTreeMap<String, u32> {
        &self.accepted
    }

    pub fn accepted_component(&self, subtask: &str) -> Option<&Component> {
        let n = *self.accepted.get(subtask)?;
        self.attempts(subtask).get(n as usize - 1).map(|a| &a.component)
    }

    pub fn retries(&self, subtask: &str) -> u32 {
        self.retries.get(subtask).copied().unwrap_or(0)
    }

    pub fn layout(&self) -> Option<&Layout> {
        self.layout.as_ref()
    }

    pub fn composite(&self) -> Option<&Image> {
        self.composite.as_ref()
    }

    pub fn artifact(&self) -> Option<&Artifact> {
        self.artifact.as_ref()
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Review policy in force for `subtask`, with retry grants folded into
    /// the attempt budget.
    pub fn effective_policy(&self, subtask: &str) -> ReviewPolicy {
        let base = self.config.review;
        ReviewPolicy {
            max_attempts: base.max_attempts.saturating_mul(1 + self.retries(subtask)),
            ..base
        }
    }

    fn renderable_ids(&self) -> Vec<String> {
        self.plan.renderable().map(|s| s.id.clone()).collect()
    }

    fn next_after(&self, subtask: &str) -> State {
        let ids = self.renderable_ids();
        let pos = ids.iter().position(|id| id == subtask).expect("subtask in plan");
        match ids.get(pos + 1) {
            Some(next) => State::Generating { subtask: next.clone() },
            None => State::Integrating,
        }
    }

    fn first_state(&self) -> State {
        match self.renderable_ids().into_iter().next() {
            Some(subtask) => State::Generating { subtask },
            None => State::Integrating,
        }
    }

    fn now(&self) -> i64 {
        self.config.clock.now_ms()
    }

    fn record(&mut self, entry: Entry) {
        self.ledger.push(entry).expect("ledger values are float-free");
    }

    fn transition(&mut self, to: State, action: Action, summary: String, from_index: usize) -> Event {
        let before = std::mem::replace(&mut self.state, to);
        let ev = Event {
            session_id: self.id.clone(),
            seq: self.events.len() as u64 + 1,
            state_before: before,
            state_after: self.state.clone(),
            action,
            summary,
            ledger_range: (from_index as u64, self.ledger.len() as u64),
        };
        self.events.push(ev.clone());
        ev
    }

    fn fail(&mut self, reason: String) -> Event {
        let start = self.ledger.len();
        let now = self.now();
        self.record(
            Entry::new(Agent::System, "session.failed", now)
                .param("reason", reason.as_str())
                .param("state", self.state.name()),
        );
        self.transition(State::Failed { reason: reason.clone() }, Action::Fail, reason, start)
    }
}

/// Recursively replaces floats with integer millionths so a value can be
/// hashed into the ledger.
pub fn float_free(v: Value) -> Value {
    match v {
        Value::Number(n) if n.as_i64().is_none() && n.as_u64().is_none() => {
            json!(micros(n.as_f64().unwrap_or(0.0)))
        }
        Value::Array(items) => Value::Array(items.into_iter().map(float_free).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, float_free(v))).collect()),
        other => other,
    }
}

fn ledger_json<T: Serialize>(v: &T) -> Value {
    float_free(serde_json::to_value(v).expect("plain data serializes"))
}

/// SHA-256 over dimensions, RGB bytes and, when present, the alpha plane.
pub fn image_digest(img: &Image) -> String {
    let mut h = Sha256::new();
    h.update((img.width() as u64).to_be_bytes());
    h.update((img.height() as u64).to_be_bytes());
    for p in img.pixels() {
        h.update(p);
    }
    if let Some(a) = img.alpha() {
        h.update(a);
    }
    hex::encode(h.finalize())
}

fn session_id(prompt: &str, cfg: &SessionConfig, started_ms: i64) -> String {
    let doc = serde_json::to_vec(&json!({"prompt": prompt, "config": cfg, "started_ms": started_ms}))
        .expect("config serializes");
    format!("s-{}", &sha256_hex(&doc)[..16])
}

fn decision_name(d: &Decision) -> &'static str {
    match d {
        Decision::Accept { .. } => "accept",
        Decision::Regenerate => "regenerate",
        Decision::Escalate { .. } => "escalate",
    }
}

pub struct Orchestrator {
    lexicon: Lexicon,
    generator: Arc<dyn Generator>,
    scorer: Arc<dyn Scorer>,
}

impl Default for Orchestrator {
    fn default() -> Self {
        Orchestrator::new(Arc::new(ProceduralGenerator::default()), Arc::new(AttributeScorer::default()))
    }
}

impl Orchestrator {
    pub fn new(generator: Arc<dyn Generator>, scorer: Arc<dyn Scorer>) -> Self {
        Orchestrator {
            lexicon: Lexicon::builtin().clone(),
            generator,
            scorer,
        }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    /// Plans immediately. Auto sessions come back ready to generate;
    /// interactive ones wait for plan approval.
    pub fn start(&self, prompt: &str, cfg: SessionConfig) -> Result<Session, OrchestratorError> {
        cfg.validate()?;
        let spec = ReferencePlanner { lexicon: &self.lexicon }
            .interpret(prompt)
            .map_err(OrchestratorError::PromptRejected)?;
        let plan = decompose(&spec);
        let started_ms = cfg.clock.now_ms();
        let id = session_id(prompt, &cfg, started_ms);
        let mut s = Session {
            ledger: Ledger::new(id.clone()),
            id,
            prompt: prompt.to_owned(),
            created_at: started_ms.div_euclid(1000),
            config: cfg,
            state: State::Planning,
            plan,
            attempts: BTreeMap::new(),
            retries: BTreeMap::new(),
            accepted: BTreeMap::new(),
            layout: None,
            composite: None,
            artifact: None,
            events: Vec::new(),
        };
        s.record(
            Entry::new(Agent::Planner, "plan.created", started_ms)
                .input(json!({"prompt": prompt}))
                .output(ledger_json(&s.plan))
                .param("subtasks", s.plan.subtasks.len())
                .param("mode", if s.config.mode == Mode::Auto { "auto" } else { "interactive" }),
        );
        let next = match s.config.mode {
            Mode::Auto => s.first_state(),
            Mode::Interactive => State::AwaitPlanApproval,
        };
        let n = s.plan.subtasks.len();
        s.transition(next, Action::Plan { subtasks: n }, format!("planned {n} subtasks"), 0);
        Ok(s)
    }

    /// One automatic transition.
    pub fn step(&self, s: &mut Session) -> Result<Event, OrchestratorError> {
        let start = s.ledger.len();
        match s.state.clone() {
            State::Generating { subtask } => Ok(self.generate(s, &subtask, start)),
            State::Reviewing { subtask } => Ok(self.review(s, &subtask, start)),
            State::Integrating => Ok(self.integrate(s, start)),
            State::Protecting => Ok(self.protect(s, start)),
            other => Err(OrchestratorError::IllegalState(other.to_string())),
        }
    }

    /// Steps until the session finishes or reaches a gate.
    pub fn run(&self, s: &mut Session) -> Vec<Event> {
        let mut out = Vec::new();
        while let Ok(ev) = self.step(s) {
            out.push(ev);
        }
        out
    }

    fn generate(&self, s: &mut Session, subtask: &str, start: usize) -> Event {
        let t = s.plan.subtask(subtask).expect("state names a plan subtask").clone();
        let attempt = s.attempts(subtask).len() as u32 + 1;
        let c = match self.generator.generate(&t, &s.config.generator, attempt) {
            Ok(c) => c,
            Err(e) => return s.fail(format!("generation of {subtask} failed: {e}")),
        };
        let now = s.now();
        let seed = format!("{:016x}", c.seed);
        s.record(
            Entry::new(Agent::Generator, "component.generated", now)
                .input(ledger_json(&t))
                .output(json!({
                    "subtask": subtask,
                    "attempt": attempt,
                    "seed": seed,
                    "image": image_digest(&c.image),
                    "origin": [c.origin.0, c.origin.1],
                    "size": [c.image.width(), c.image.height()],
                }))
                .param("subtask", subtask)
                .param("attempt", attempt)
                .param("seed", seed.as_str()),
        );
        s.attempts.entry(subtask.to_owned()).or_default().push(Attempt {
            component: c,
            score: None,
        });
        s.transition(
            State::Reviewing {
                subtask: subtask.to_owned(),
            },
            Action::Generate {
                subtask: subtask.to_owned(),
                attempt,
            },
            format!("generated {subtask} attempt {attempt}"),
            start,
        )
    }

    fn review(&self, s: &mut Session, subtask: &str, start: usize) -> Event {
        let t = s.plan.subtask(subtask).expect("state names a plan subtask").clone();
        let last = s.attempts(subtask).last().expect("reviewing follows generating");
        let score = match self.scorer.score(&last.component, &t) {
            Ok(v) => v,
            Err(e) => return s.fail(format!("review of {subtask} failed: {e}")),
        };
        let digest = image_digest(&last.component.image);
        let attempt = last.component.attempt;
        s.attempts.get_mut(subtask).expect("exists").last_mut().expect("exists").score = Some(score.clone());
        let history: Vec<ReviewScore> = s.attempts(subtask).iter().filter_map(|a| a.score.clone()).collect();
        let policy = s.effective_policy(subtask);
        let decision = gate(&score, &policy, &history);
        let now = s.now();
        let mut entry = Entry::new(Agent::Reviewer, "review.scored", now)
            .input(json!({"subtask": subtask, "attempt": attempt, "image": digest}))
            .output(ledger_json(&score))
            .param("subtask", subtask)
            .param("attempt", attempt)
            .param("score_micros", micros(score.value))
            .param("tau_micros", micros(policy.tau))
            .param("decision", decision_name(&decision));
        let (next, summary) = match decision {
            Decision::Accept { attempt: kept } => {
                entry = entry.param("kept_attempt", kept);
                s.accepted.insert(subtask.to_owned(), kept);
                (s.next_after(subtask), format!("accepted {subtask} attempt {kept} ({:.3})", score.value))
            }
            Decision::Regenerate => (
                State::Generating {
                    subtask: subtask.to_owned(),
                },
                format!("{subtask} scored {:.3} < {}; regenerating", score.value, policy.tau),
            ),
            Decision::Escalate { best_attempt } => {
                entry = entry.param("best_attempt", best_attempt);
                (
                    State::AwaitReviewDecision {
                        subtask: subtask.to_owned(),
                    },
                    format!("{subtask} exhausted {} attempts; awaiting decision", policy.max_attempts),
                )
            }
        };
        s.record(entry);
        s.transition(
            next,
            Action::Review {
                subtask: subtask.to_owned(),
                attempt,
                score: score.value,
                decision,
            },
            summary,
            start,
        )
    }

    fn integrate(&self, s: &mut Session, start: usize) -> Event {
        // element draw order comes from the layout subtask
        let order: Vec<String> = s
            .plan
            .subtasks
            .iter()
            .find_map(|t| match &t.constraints {
                Constraints::Layout { order } => Some(order.clone()),
                _ => None,
            })
            .unwrap_or_default();
        let mut ids: Vec<String> = s.renderable_ids();
        ids.sort_by_key(|id| order.iter().position(|o| o == id).unwrap_or(usize::MAX));
        let parts: Vec<Component> = ids
            .iter()
            .map(|id| s.accepted_component(id).expect("every renderable subtask accepted").clone())
            .collect();
        let (composite, layout) = match integrate(&parts, &s.config.integrator) {
            Ok(v) => v,
            Err(e) => return s.fail(format!("integration failed: {e}")),
        };
        let now = s.now();
        let inputs: Vec<Value> = parts
            .iter()
            .map(|c| json!({"subtask": c.subtask_id, "attempt": c.attempt, "image": image_digest(&c.image)}))
            .collect();
        s.record(
            Entry::new(Agent::Integrator, "composite.created", now)
                .input(json!({ "components": inputs }))
                .output(json!({"image": image_digest(&composite.image), "layout": ledger_json(&layout)}))
                .param("unresolved", layout.unresolved.len())
                .param("theta_micros", micros(s.config.integrator.theta)),
        );
        let unresolved = layout.unresolved.len();
        s.composite = Some(composite.image);
        s.layout = Some(layout);
        s.transition(
            State::Protecting,
            Action::Integrate { unresolved },
            format!("composited {} components, {unresolved} unresolved overlaps", parts.len()),
            start,
        )
    }

    fn protect(&self, s: &mut Session, start: usize) -> Event {
        let composite = s.composite.clone().expect("protecting follows integrating");
        let id = &s.config.identity;
        let payload = match build_payload(&id.account_id, &id.project_id, &s.id, s.created_at) {
            Ok(p) => p,
            Err(e) => return s.fail(format!("payload: {e}")),
        };
        let marked = match embed(&composite, &payload, &s.config.watermark) {
            Ok(m) => m,
            Err(e) => return s.fail(format!("watermark: {e}")),
        };
        let db = psnr(&composite, &marked).expect("same size");
        let now = s.now();
        s.record(
            Entry::new(Agent::Protector, "watermark.embedded", now)
                .input(json!({
                    "image": image_digest(&composite),
                    "account_id": id.account_id,
                    "project_id": id.project_id,
                    "session_id": s.id,
                    "created_at": s.created_at,
                }))
                .output(json!({"image": image_digest(&marked), "payload": payload.hex()}))
                .param("payload", payload.hex())
                .param("psnr_micro_db", micros(db))
                .param("lambda_micros", micros(s.config.watermark.lambda)),
        );
        if let Err(v) = verify(&s.ledger) {
            return s.fail(format!("ledger does not verify: {v}"));
        }
        s.artifact = Some(Artifact {
            image: marked,
            payload,
            psnr: db,
        });
        s.transition(
            State::Done,
            Action::Protect {
                payload: payload.hex(),
                psnr: db,
            },
            format!("embedded payload {} ({db:.2} dB)", payload.hex()),
            start,
        )
    }

    pub fn intervene(&self, s: &mut Session, iv: Intervention) -> Result<Event, OrchestratorError> {
        let illegal = |s: &Session| OrchestratorError::IllegalIntervention {
            kind: iv.kind().to_owned(),
            state: s.state.to_string(),
        };
        if s.state.is_terminal() {
            return Err(illegal(s));
        }
        let start = s.ledger.len();
        let now = s.now();
        let act = Action::Intervene {
            kind: iv.kind().to_owned(),
        };
        match (&iv, s.state.clone()) {
            (Intervention::ApprovePlan | Intervention::Resume, State::AwaitPlanApproval) => {
                s.record(
                    Entry::new(Agent::Human, "plan.approved", now)
                        .output(ledger_json(&s.plan))
                        .param("revision", s.plan.revision as i64),
                );
                let next = s.first_state();
                Ok(s.transition(next, act, "plan approved".into(), start))
            }
            (Intervention::EditPlan { edit }, State::AwaitPlanApproval) => {
                let plan = edit_plan(&s.plan, edit, &self.lexicon)
                    .map_err(|e| OrchestratorError::InvalidIntervention(e.to_string()))?;
                s.record(
                    Entry::new(Agent::Human, "plan.edited", now)
                        .input(ledger_json(edit))
                        .output(ledger_json(&plan))
                        .param("revision", plan.revision as i64),
                );
                s.plan = plan;
                let summary = format!("plan edited (revision {})", s.plan.revision);
                Ok(s.transition(State::AwaitPlanApproval, act, summary, start))
            }
            (Intervention::OverrideReview { subtask, action }, State::AwaitReviewDecision { subtask: pending })
                if *subtask == pending =>
            {
                Ok(self.override_review(s, subtask, *action, "review.overridden", act, start))
            }
            (Intervention::Resume, State::AwaitReviewDecision { subtask }) => {
                Ok(self.override_review(s, &subtask, ReviewOverride::Accept, "session.resumed", act, start))
            }
            (Intervention::SetParam { path, value }, state) => {
                let mut cfg = s.config.clone();
                set_param(&mut cfg, path, value)?;
                cfg.validate()
                    .map_err(|e| OrchestratorError::InvalidIntervention(e.to_string()))?;
                s.config = cfg;
                s.record(
                    Entry::new(Agent::Human, "param.set", now)
                        .input(float_free(json!({"path": path, "value": value})))
                        .param("path", path.as_str())
                        .param("value", value.to_string()),
                );
                Ok(s.transition(state, act, format!("{path} = {value}"), start))
            }
            (Intervention::Abort, state) => {
                s.record(Entry::new(Agent::Human, "session.aborted", now).param("state", state.name()));
                let reason = "aborted by user".to_owned();
                Ok(s.transition(State::Failed { reason: reason.clone() }, act, reason, start))
            }
            _ => Err(illegal(s)),
        }
    }

    fn override_review(
        &self,
        s: &mut Session,
        subtask: &str,
        action: ReviewOverride,
        verb: &str,
        act: Action,
        start: usize,
    ) -> Event {
        let now = s.now();
        match action {
            ReviewOverride::Accept => {
                let history: Vec<ReviewScore> = s.attempts(subtask).iter().filter_map(|a| a.score.clone()).collect();
                let kept = best_attempt(&history).expect("escalation follows a review").attempt;
                s.accepted.insert(subtask.to_owned(), kept);
                s.record(
                    Entry::new(Agent::Human, verb, now)
                        .param("subtask", subtask)
                        .param("action", "accept")
                        .param("kept_attempt", kept),
                );
                let next = s.next_after(subtask);
                s.transition(next, act, format!("kept attempt {kept} of {subtask}"), start)
            }
            ReviewOverride::Retry => {
                let grants = s.retries(subtask) + 1;
                s.retries.insert(subtask.to_owned(), grants);
                s.record(
                    Entry::new(Agent::Human, verb, now)
                        .param("subtask", subtask)
                        .param("action", "retry")
                        .param("grants", grants),
                );
                let summary = format!("{} more attempts for {subtask}", s.config.review.max_attempts);
                s.transition(
                    State::Generating {
                        subtask: subtask.to_owned(),
                    },
                    act,
                    summary,
                    start,
                )
            }
        }
    }
}

fn set_param(cfg: &mut SessionConfig, path: &str, value: &Value) -> Result<(), OrchestratorError> {
    let bad = || OrchestratorError::InvalidIntervention(format!("bad value {value} for {path}"));
    let num = || value.as_f64().ok_or_else(bad);
    let uint = || value.as_u64().ok_or_else(bad);
    let text = || value.as_str().map(str::to_owned).ok_or_else(bad);
    match path {
        "review.tau" => cfg.review.tau = num()?,
        "review.max_attempts" => cfg.review.max_attempts = u32::try_from(uint()?).map_err(|_| bad())?,
        "review.on_exhaust" => {
            cfg.review.on_exhaust = match text()?.as_str() {
                "take_best" => OnExhaust::TakeBest,
                "escalate" => OnExhaust::Escalate,
                _ => return Err(bad()),
            }
        }
        "generator.eta" => cfg.generator.eta = num()?,
        "generator.seed" => cfg.generator.seed = uint()?,
        "watermark.lambda" => cfg.watermark.lambda = num()?,
        "watermark.key" => cfg.watermark.key = uint()?,
        "integrator.theta" => cfg.integrator.theta = num()?,
        "integrator.harmonize_luma" => {
            cfg.integrator.harmonize_luma = if value.is_null() { None } else { Some(num()?) }
        }
        "identity.account_id" => cfg.identity.account_id = text()?,
        "identity.project_id" => cfg.identity.project_id = text()?,
        _ => {
            return Err(OrchestratorError::InvalidIntervention(format!(
                "unknown parameter '{path}'; settable: {}",
                SETTABLE_PARAMS.join(", ")
            )))
        }
    }
    Ok(())
}
