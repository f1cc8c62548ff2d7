//! Watermark evaluation corpus and attack harness.

use serde::Serialize;

use crate::generator::{Component, GenConfig, Generator, ProceduralGenerator};
use crate::integrator::{integrate, IntegratorConfig};
use crate::planner::{decompose, Lexicon, ReferencePlanner};
use crate::raster::{crop, jpeg_attack, psnr, read_ppm, round_half_up, scale, write_ppm, Image, Rect};
use crate::reviewer::{gate, AttributeScorer, Decision, ReviewPolicy, Scorer};
use crate::rng::SplitMix64;
use crate::watermark::{detect, embed, WatermarkConfig, WatermarkPayload};

pub const FIXTURE_SIDE: usize = 512;

pub const SCENE_PROMPTS: [&str; 10] = [
    "Red dragon flying above a medieval castle during a dramatic sunset",
    "a white lighthouse and a ship under a silver moon at night",
    "green tree next to a brown house on a bright day",
    "gold sun above a gray mountain at dawn",
    "a purple windmill with yellow flowers at sunrise",
    "navy bird over a stone bridge in a storm",
    "orange fish below a white cloud on a plain canvas",
    "a person riding a brown horse beside a tower at sunset",
    "magenta star over a cyan rock at night",
    "black castle below a red dragon and a gold moon at dawn",
];

#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: String,
    pub image: Image,
}

/// Runs the reference agents on a prompt: plan, generate with review, then
/// integrate. No watermark.
pub fn compose_scene(prompt: &str, seed: u64, side: usize) -> Image {
    let lexicon = Lexicon::builtin();
    let spec = ReferencePlanner { lexicon }.interpret(prompt).expect("corpus prompts parse");
    let plan = decompose(&spec);
    let gen = ProceduralGenerator::default();
    let scorer = AttributeScorer::default();
    let policy = ReviewPolicy::default();
    let cfg = GenConfig {
        canvas_w: side,
        canvas_h: side,
        eta: 0.2,
        seed,
    };
    let mut kept: Vec<Component> = Vec::new();
    for t in plan.renderable() {
        let mut history = Vec::new();
        let mut attempts = Vec::new();
        for attempt in 1..=policy.max_attempts {
            let c = gen.generate(t, &cfg, attempt).expect("renderable subtask");
            let s = scorer.score(&c, t).expect("scorable");
            history.push(s.clone());
            attempts.push(c);
            match gate(&s, &policy, &history) {
                Decision::Regenerate => continue,
                Decision::Accept { attempt } | Decision::Escalate { best_attempt: attempt } => {
                    kept.push(attempts.swap_remove(attempt as usize - 1));
                    break;
                }
            }
        }
    }
    integrate(&kept, &IntegratorConfig::default()).expect("consistent canvas").0.image
}

fn value_noise(rng: &mut SplitMix64, side: usize, cell: usize) -> Vec<f64> {
    let n = side / cell + 2;
    let lattice: Vec<f64> = (0..n * n).map(|_| rng.next_f64()).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = vec![0.0; side * side];
    for y in 0..side {
        let (gy, ty) = (y / cell, smooth((y % cell) as f64 / cell as f64));
        for x in 0..side {
            let (gx, tx) = (x / cell, smooth((x % cell) as f64 / cell as f64));
            let at = |i: usize, j: usize| lattice[j * n + i];
            let top = at(gx, gy) * (1.0 - tx) + at(gx + 1, gy) * tx;
            let bottom = at(gx, gy + 1) * (1.0 - tx) + at(gx + 1, gy + 1) * tx;
            out[y * side + x] = top * (1.0 - ty) + bottom * ty;
        }
    }
    out
}

/// Seeded fractal value noise with a little per-pixel grain, tinted.
pub fn texture(seed: u64, side: usize) -> Image {
    let mut rng = SplitMix64::new(seed);
    let octaves = 5 + (seed % 3) as u32;
    let contrast = 110.0 + 15.0 * (seed % 5) as f64;
    let grain = 6.0 + 2.0 * (seed % 4) as f64;
    let mut field = vec![0.0; side * side];
    let mut amp = 1.0;
    let mut norm = 0.0;
    for o in 0..octaves {
        let cell = (64usize >> o).max(1);
        let layer = value_noise(&mut rng, side, cell);
        for (f, l) in field.iter_mut().zip(&layer) {
            *f += amp * l;
        }
        norm += amp;
        amp *= 0.7;
    }
    let tint: [f64; 3] = std::array::from_fn(|_| 0.6 + 0.4 * rng.next_f64());
    let base = 128.0 - contrast / 2.0;
    let mut pixels = Vec::with_capacity(side * side);
    for f in field {
        let v = base + contrast * f / norm + rng.symmetric(grain);
        pixels.push(std::array::from_fn(|c| round_half_up((v * tint[c] + 255.0 * (1.0 - tint[c]) * 0.3).clamp(0.0, 255.0)) as u8));
    }
    Image::from_pixels(side, side, pixels).expect("square canvas")
}

/// The 20-image corpus: ten scene composites, ten textures.
pub fn corpus(side: usize) -> Vec<Fixture> {
    let mut out: Vec<Fixture> = SCENE_PROMPTS
        .iter()
        .enumerate()
        .map(|(i, p)| Fixture {
            name: format!("scene-{:02}", i + 1),
            image: compose_scene(p, 1000 + i as u64, side),
        })
        .collect();
    out.extend((0..10).map(|i| Fixture {
        name: format!("texture-{:02}", i + 1),
        image: texture(7000 + i, side),
    }));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "attack", rename_all = "snake_case")]
pub enum Attack {
    None,
    Jpeg { quality: u32 },
    /// Central crop keeping `fraction` of the area.
    CenterCrop { fraction: f64 },
    Scale { factor: f64 },
    /// Encode to PPM, JPEG-simulate, decode again.
    PpmJpegRoundTrip { quality: u32 },
}

impl Attack {
    pub fn name(&self) -> &'static str {
        match self {
            Attack::None => "none",
            Attack::Jpeg { .. } => "jpeg",
            Attack::CenterCrop { .. } => "crop",
            Attack::Scale { .. } => "scale",
            Attack::PpmJpegRoundTrip { .. } => "ppm_jpeg_ppm",
        }
    }

    pub fn parameter(&self) -> f64 {
        match *self {
            Attack::None => 0.0,
            Attack::Jpeg { quality } | Attack::PpmJpegRoundTrip { quality } => f64::from(quality),
            Attack::CenterCrop { fraction } => fraction,
            Attack::Scale { factor } => factor,
        }
    }

    pub fn apply(&self, img: &Image) -> Image {
        match *self {
            Attack::None => img.clone(),
            Attack::Jpeg { quality } => jpeg_attack(img, quality).expect("quality in range"),
            Attack::CenterCrop { fraction } => {
                let r = center_crop_rect(img.width(), img.height(), fraction);
                crop(img, r).expect("rect inside image")
            }
            Attack::Scale { factor } => scale(img, factor).expect("positive factor"),
            Attack::PpmJpegRoundTrip { quality } => {
                let decoded = read_ppm(&write_ppm(img)).expect("own encoding");
                let attacked = jpeg_attack(&decoded, quality).expect("quality in range");
                read_ppm(&write_ppm(&attacked)).expect("own encoding")
            }
        }
    }
}

/// Centered rect covering `fraction` of the area, same aspect.
pub fn center_crop_rect(w: usize, h: usize, fraction: f64) -> Rect {
    let k = fraction.sqrt();
    let (cw, ch) = (round_half_up(w as f64 * k) as usize, round_half_up(h as f64 * k) as usize);
    Rect::new((w - cw) / 2, (h - ch) / 2, cw, ch)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Embed into the pipeline output, then attack.
    Integrated,
    /// Embed into a copy already degraded by a q=85 JPEG pass, then attack.
    PostHoc,
}

pub const POST_HOC_QUALITY: u32 = 85;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub fixture: String,
    pub mode: Mode,
    pub attack: &'static str,
    pub parameter: f64,
    pub recovery_rate: f64,
    pub crc_ok: bool,
    /// Embedded vs. the image handed to the embedder.
    pub psnr: f64,
}

pub fn evaluate(fixture: &Fixture, mode: Mode, attack: Attack, payload: &WatermarkPayload, cfg: &WatermarkConfig) -> Row {
    let host = match mode {
        Mode::Integrated => fixture.image.clone(),
        Mode::PostHoc => jpeg_attack(&fixture.image, POST_HOC_QUALITY).expect("valid quality"),
    };
    let marked = embed(&host, payload, cfg).expect("fixture large enough");
    let attacked = attack.apply(&marked);
    let d = detect(&attacked, cfg, Some(payload)).expect("attacked fixture large enough");
    Row {
        fixture: fixture.name.clone(),
        mode,
        attack: attack.name(),
        parameter: attack.parameter(),
        recovery_rate: d.recovery_rate.unwrap_or(0.0),
        crc_ok: d.crc_ok,
        psnr: psnr(&host, &marked).expect("same size"),
    }
}

pub fn csv_header() -> &'static str {
    "fixture,mode,attack,parameter,recovery_rate,crc_ok,psnr"
}

pub fn csv_line(r: &Row) -> String {
    let mode = match r.mode {
        Mode::Integrated => "integrated",
        Mode::PostHoc => "post_hoc",
    };
    format!(
        "{},{},{},{},{:.6},{},{:.3}",
        r.fixture, mode, r.attack, r.parameter, r.recovery_rate, r.crc_ok, r.psnr
    )
}

/// The attacks the acceptance run covers.
pub fn standard_attacks() -> Vec<Attack> {
    vec![
        Attack::None,
        Attack::Jpeg { quality: 75 },
        Attack::CenterCrop { fraction: 0.75 },
        Attack::Scale { factor: 0.5 },
        Attack::PpmJpegRoundTrip { quality: 85 },
    ]
}
