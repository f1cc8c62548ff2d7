//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

#[path = "../../core/tests/support/review_loop.rs"]
mod review_loop;

use std::collections::BTreeMap;
use std::fs;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use aegis_cli::commands;
use aegis_core::generator::{GenConfig, ProceduralGenerator};
use aegis_core::orchestrator::{Clock, Mode as RunMode, Orchestrator, Session, SessionConfig, State};
use aegis_core::provenance::{export, import, Agent, Entry, Ledger, Scalar};
use aegis_core::raster::{dct8, idct8};
use aegis_core::reviewer::{OnExhaust, ScriptedScorer};
use aegis_core::rng::SplitMix64;
use aegis_core::robustness::{corpus, evaluate, Attack, Fixture, Mode, Row, FIXTURE_SIDE};
use aegis_core::watermark::{build_payload, WatermarkConfig};
use review_loop::*;
use serde_json::json;

const DRAGON: &str = "Red dragon flying above a medieval castle during a dramatic sunset";

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { name, pass, detail }
}

fn rows(fixtures: &[Fixture], mode: Mode, attack: Attack, cfg: &WatermarkConfig) -> Vec<Row> {
    fixtures
        .iter()
        .map(|f| {
            let payload = build_payload("acct-local", "proj-default", &f.name, 0).expect("non-empty ids");
            evaluate(f, mode, attack, &payload, cfg)
        })
        .collect()
}

fn mean_recovery(rows: &[Row]) -> f64 {
    rows.iter().map(|r| r.recovery_rate).sum::<f64>() / rows.len() as f64
}

fn crc_count(rows: &[Row]) -> usize {
    rows.iter().filter(|r| r.crc_ok).count()
}

fn watermark_criteria(out: &mut Vec<Outcome>) {
    let cfg = WatermarkConfig::default();
    let started = Instant::now();
    let fixtures = corpus(FIXTURE_SIDE);
    let integrated = rows(&fixtures, Mode::Integrated, Attack::Jpeg { quality: 75 }, &cfg);
    let secs = started.elapsed().as_secs_f64();
    let (mean, crc) = (mean_recovery(&integrated), crc_count(&integrated));
    out.push(outcome(
        "watermark JPEG q75 robustness",
        mean >= 0.90 && crc >= 18 && secs < 60.0,
        format!("mean recovery {mean:.4}, CRC-valid {crc}/20, {secs:.1} s"),
    ));

    let post_hoc = rows(&fixtures, Mode::PostHoc, Attack::Jpeg { quality: 75 }, &cfg);
    let ph = mean_recovery(&post_hoc);
    let gap_pp = (mean - ph) * 100.0;
    out.push(outcome(
        "integrated vs post-hoc gap at q75",
        gap_pp >= 10.0,
        format!("integrated {mean:.4}, post-hoc {ph:.4}, gap {gap_pp:.2} pp (need >= 10)"),
    ));

    let worst = integrated.iter().map(|r| r.psnr).fold(f64::INFINITY, f64::min);
    out.push(outcome(
        "imperceptibility PSNR >= 38 dB",
        integrated.iter().all(|r| r.psnr >= 38.0),
        format!("lowest {worst:.2} dB at lambda {}", cfg.lambda),
    ));

    let geometric = [
        Attack::CenterCrop { fraction: 0.75 },
        Attack::Scale { factor: 0.5 },
        Attack::PpmJpegRoundTrip { quality: 85 },
    ];
    let counts: Vec<(String, usize)> = geometric
        .iter()
        .map(|&a| (a.name().to_owned(), crc_count(&rows(&fixtures, Mode::Integrated, a, &cfg))))
        .collect();
    out.push(outcome(
        "crop/scale/format robustness",
        counts.iter().all(|(_, n)| *n >= 18),
        counts.iter().map(|(a, n)| format!("{a} {n}/20")).collect::<Vec<_>>().join(", "),
    ));
}

fn small_config() -> SessionConfig {
    SessionConfig {
        clock: Clock::Fixed { epoch_s: 1_700_000_000 },
        generator: GenConfig {
            canvas_w: 64,
            canvas_h: 64,
            ..GenConfig::default()
        },
        ..SessionConfig::new(RunMode::Auto)
    }
}

fn trace_equivalence() -> Outcome {
    let patterns = score_patterns();
    let (mut runs, mut mismatches) = (0, 0);
    for max_attempts in 1..=3u32 {
        for escalate in [false, true] {
            for a in &patterns {
                for b in &patterns {
                    let o = Orchestrator::new(
                        Arc::new(ProceduralGenerator::default()),
                        Arc::new(ScriptedScorer {
                            scripts: BTreeMap::from([
                                (TWO_IDS[0].to_owned(), a.clone()),
                                (TWO_IDS[1].to_owned(), b.clone()),
                            ]),
                            fallback: FALLBACK,
                        }),
                    );
                    let mut cfg = small_config();
                    cfg.review.max_attempts = max_attempts;
                    cfg.review.on_exhaust = if escalate { OnExhaust::Escalate } else { OnExhaust::TakeBest };
                    let tau = cfg.review.tau;
                    let mut s = o.start(TWO_ELEMENTS, cfg).expect("scene parses");
                    let got = orchestrator_trace(&o.run(&mut s));
                    let want = reference_trace(&TWO_IDS, &[a.clone(), b.clone()], tau, max_attempts, escalate);
                    runs += 1;
                    if got != want {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    outcome(
        "generate/review loop trace equivalence",
        mismatches == 0,
        format!("{mismatches} mismatches over {runs} scripted runs"),
    )
}

/// Returns the review-loop outcome and every finished session for the
/// payload check.
fn review_loop_property() -> (Outcome, Vec<Session>) {
    let o = Orchestrator::default();
    let mut kept_numbers = Vec::new();
    let (mut subtasks, mut not_worse) = (0, 0);
    let mut sessions = Vec::new();
    let mut unfinished = 0;
    let mut lowest_first = f64::INFINITY;
    for seed in 0..200u64 {
        let cfg = SessionConfig {
            generator: GenConfig {
                eta: 0.3,
                seed,
                ..GenConfig::default()
            },
            clock: Clock::Fixed { epoch_s: 1_700_000_000 },
            ..SessionConfig::new(RunMode::Auto)
        };
        let mut s = o.start(DRAGON, cfg).expect("prompt parses");
        o.run(&mut s);
        if s.state != State::Done {
            unfinished += 1;
        }
        for id in s.plan.element_ids() {
            let tries = s.attempts(&id);
            let Some(&kept) = s.accepted().get(&id) else { continue };
            let score = |n: u32| tries[n as usize - 1].score.as_ref().map_or(f64::NAN, |x| x.value);
            subtasks += 1;
            lowest_first = lowest_first.min(score(1));
            if score(kept) >= score(1) {
                not_worse += 1;
            }
            kept_numbers.push(f64::from(kept));
        }
        sessions.push(s);
    }
    let mean = kept_numbers.iter().sum::<f64>() / kept_numbers.len().max(1) as f64;
    let o = outcome(
        "review loop at eta 0.3, tau 0.7",
        unfinished == 0 && mean <= 3.0 && not_worse == subtasks && subtasks > 0,
        format!(
            "mean accepted attempt {mean:.3} over {subtasks} element subtasks, kept >= first in {not_worse}/{subtasks}, lowest first-attempt score {lowest_first:.3}, {unfinished} unfinished"
        ),
    );
    (o, sessions)
}

fn twenty_records() -> Ledger {
    let mut l = Ledger::new("s-acceptance");
    let agents = [Agent::Planner, Agent::Generator, Agent::Reviewer, Agent::Integrator, Agent::Protector, Agent::Human];
    for i in 0..20usize {
        l.push(
            Entry::new(agents[i % agents.len()], format!("step.{i}"), 1_700_000_000_000 + i as i64 * 1000)
                .input(json!({"i": i}))
                .output(json!({"square": i * i}))
                .param("attempt", i % 3 + 1),
        )
        .expect("sequential records");
    }
    l
}

fn provenance(sessions: &[Session]) -> Outcome {
    let bytes = export(&twenty_records());
    let mut missed = 0;
    for pos in 0..bytes.len() {
        let mut t = bytes.clone();
        t[pos] ^= 0xFF;
        if import(&t).is_ok() {
            missed += 1;
        }
    }
    let done: Vec<&Session> = sessions.iter().filter(|s| s.state == State::Done).collect();
    let matching = done
        .iter()
        .filter(|s| {
            let art = s.artifact().expect("done sessions carry an artifact");
            s.ledger()
                .records()
                .iter()
                .find(|r| r.action == "watermark.embedded")
                .is_some_and(|r| r.params.get("payload") == Some(&Scalar::Str(art.payload.hex())))
        })
        .count();
    outcome(
        "provenance tamper detection",
        missed == 0 && matching == done.len() && !done.is_empty(),
        format!(
            "{missed} of {} byte flips accepted, payload matches ledger in {matching}/{} done sessions",
            bytes.len(),
            done.len()
        ),
    )
}

fn determinism() -> Outcome {
    let run = || {
        let dir = tempfile::tempdir().expect("temp dir");
        let cfg = SessionConfig {
            generator: GenConfig {
                seed: 7,
                eta: 0.2,
                ..GenConfig::default()
            },
            clock: Clock::Fixed { epoch_s: 0 },
            ..SessionConfig::new(RunMode::Auto)
        };
        commands::run(DRAGON, cfg, dir.path()).expect("run succeeds");
        let read = |f| fs::read(dir.path().join(f)).expect("output written");
        (read(commands::ARTIFACT_FILE), read(commands::LEDGER_FILE))
    };
    let (a, b) = (run(), run());
    outcome(
        "determinism of two runs",
        a == b,
        format!("artifact {} bytes, ledger {} bytes, identical: {}", a.0.len(), a.1.len(), a == b),
    )
}

fn numerics() -> Outcome {
    let mut rng = SplitMix64::new(0xACCE);
    let (mut worst_rt, mut worst_energy) = (0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let b: [[f64; 8]; 8] = std::array::from_fn(|_| std::array::from_fn(|_| rng.next_f64() * 510.0 - 255.0));
        let c = dct8(&b);
        let back = idct8(&c);
        for (row_b, row_back) in b.iter().zip(&back) {
            for (x, y) in row_b.iter().zip(row_back) {
                worst_rt = worst_rt.max((x - y).abs());
            }
        }
        let es: f64 = b.iter().flatten().map(|v| v * v).sum();
        let ef: f64 = c.iter().flatten().map(|v| v * v).sum();
        worst_energy = worst_energy.max((es - ef).abs() / es);
    }
    outcome(
        "dct8 round trip and energy",
        worst_rt < 1e-9 && worst_energy < 1e-6,
        format!("max round-trip error {worst_rt:.2e}, max relative energy error {worst_energy:.2e}"),
    )
}

fn main() -> ExitCode {
    let mut results = Vec::new();
    watermark_criteria(&mut results);
    results.push(trace_equivalence());
    let (loop_outcome, sessions) = review_loop_property();
    results.push(loop_outcome);
    results.push(provenance(&sessions));
    results.push(determinism());
    results.push(numerics());

    for r in &results {
        println!("{} {}: {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    let failed = results.iter().filter(|r| !r.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
