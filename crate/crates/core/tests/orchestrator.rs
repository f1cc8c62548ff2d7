mod support;

use std::collections::BTreeMap;
use std::sync::Arc;

use aegis_core::generator::{GenConfig, ProceduralGenerator};
use aegis_core::orchestrator::{Clock, Intervention, Mode, Orchestrator, ReviewOverride, SessionConfig, State};
use aegis_core::provenance::{verify, Scalar};
use aegis_core::reviewer::{OnExhaust, ScriptedScorer};
use aegis_core::watermark::detect;
use proptest::prelude::*;
use support::review_loop::*;

const DRAGON: &str = "Red dragon flying above a medieval castle during a dramatic sunset";

fn small(mode: Mode) -> SessionConfig {
    SessionConfig {
        clock: Clock::Fixed { epoch_s: 1_700_000_000 },
        generator: GenConfig {
            canvas_w: 64,
            canvas_h: 64,
            ..GenConfig::default()
        },
        ..SessionConfig::new(mode)
    }
}

fn scripted(a: &[f64], b: &[f64]) -> Orchestrator {
    Orchestrator::new(
        Arc::new(ProceduralGenerator::default()),
        Arc::new(ScriptedScorer {
            scripts: BTreeMap::from([(TWO_IDS[0].to_owned(), a.to_vec()), (TWO_IDS[1].to_owned(), b.to_vec())]),
            fallback: FALLBACK,
        }),
    )
}

#[test]
fn traces_match_the_reference_model() {
    let patterns = score_patterns();
    let mut runs = 0;
    for max_attempts in 1..=3u32 {
        for escalate in [false, true] {
            for a in &patterns {
                for b in &patterns {
                    let o = scripted(a, b);
                    let mut cfg = small(Mode::Auto);
                    cfg.review.max_attempts = max_attempts;
                    cfg.review.on_exhaust = if escalate { OnExhaust::Escalate } else { OnExhaust::TakeBest };
                    let mut s = o.start(TWO_ELEMENTS, cfg).unwrap();
                    let got = orchestrator_trace(&o.run(&mut s));
                    let want = reference_trace(&TWO_IDS, &[a.clone(), b.clone()], 0.7, max_attempts, escalate);
                    assert_eq!(got, want, "scripts {a:?} {b:?} m={max_attempts} escalate={escalate}");
                    runs += 1;
                }
            }
        }
    }
    assert_eq!(runs, 14 * 14 * 6);
}

#[test]
fn kept_score_never_below_first_attempt() {
    let o = Orchestrator::default();
    let mut kept_attempts = Vec::new();
    for seed in 0..40u64 {
        let cfg = SessionConfig {
            generator: GenConfig {
                eta: 0.3,
                seed,
                canvas_w: 256,
                canvas_h: 256,
            },
            ..small(Mode::Auto)
        };
        let mut s = o.start(DRAGON, cfg).unwrap();
        o.run(&mut s);
        assert_eq!(s.state, State::Done);
        for id in s.plan.element_ids() {
            let tries = s.attempts(&id);
            let kept = s.accepted()[&id];
            let score = |n: u32| tries[n as usize - 1].score.as_ref().unwrap().value;
            assert!(score(kept) >= score(1), "seed {seed} {id}");
            kept_attempts.push(f64::from(kept));
        }
    }
    let mean = kept_attempts.iter().sum::<f64>() / kept_attempts.len() as f64;
    assert!(mean <= 3.0, "{mean}");
}

#[test]
fn artifact_carries_the_ledgered_payload() {
    let o = Orchestrator::default();
    let cfg = SessionConfig {
        generator: GenConfig {
            eta: 0.2,
            seed: 7,
            ..GenConfig::default()
        },
        clock: Clock::Fixed { epoch_s: 0 },
        ..SessionConfig::new(Mode::Auto)
    };
    let mut s = o.start(DRAGON, cfg).unwrap();
    o.run(&mut s);
    assert_eq!(s.state, State::Done);
    assert_eq!(verify(s.ledger()), Ok(()));
    let art = s.artifact().unwrap();
    let rec = s.ledger().records().iter().find(|r| r.action == "watermark.embedded").unwrap();
    assert_eq!(rec.params["payload"], Scalar::Str(art.payload.hex()));
    let d = detect(&art.image, &s.config.watermark, Some(&art.payload)).unwrap();
    assert!(d.crc_ok);
    assert_eq!(d.payload(), art.payload);
    assert!(art.psnr >= 38.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attempts_stay_within_granted_budget(
        a in proptest::collection::vec(0.0f64..0.69, 0..12),
        m in 1u32..4,
        decisions in proptest::collection::vec(any::<bool>(), 0..4),
    ) {
        let o = scripted(&a, &[]);
        let mut cfg = small(Mode::Interactive);
        cfg.review.max_attempts = m;
        let mut s = o.start(TWO_ELEMENTS, cfg).unwrap();
        o.intervene(&mut s, Intervention::ApprovePlan).unwrap();
        let mut retries = 0;
        let mut script = decisions.into_iter();
        loop {
            o.run(&mut s);
            let tries = s.attempts(TWO_IDS[0]).len() as u32;
            prop_assert!(tries <= m * (1 + retries));
            match s.state.clone() {
                State::AwaitReviewDecision { subtask } => {
                    let retry = script.next().unwrap_or(false);
                    retries += u32::from(retry);
                    let action = if retry { ReviewOverride::Retry } else { ReviewOverride::Accept };
                    o.intervene(&mut s, Intervention::OverrideReview { subtask, action }).unwrap();
                }
                State::Done => break,
                other => prop_assert!(false, "unexpected {}", other),
            }
        }
        prop_assert_eq!(verify(s.ledger()), Ok(()));
    }
}
