//! The work behind each subcommand, kept out of `main` so tests can call it.

use std::fs;
use std::io;
use std::path::Path;

use aegis_core::orchestrator::{Orchestrator, Session, SessionConfig, State};
use aegis_core::provenance::{export, import, ProvenanceError};
use aegis_core::raster::{read_ppm, write_ppm, Image, RasterError};
use aegis_core::watermark::{detect, DetectionResult, WatermarkConfig, WatermarkError, WatermarkPayload};
use serde_json::{json, Value};
use thiserror::Error;

use crate::view::session_view;

pub const ARTIFACT_FILE: &str = "artifact.ppm";
pub const LEDGER_FILE: &str = "ledger.provlog";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("not a readable image: {0}")]
    BadImage(String),
    #[error("{0}")]
    Watermark(#[from] WatermarkError),
}

impl CommandError {
    /// 2 for bad input or usage, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CommandError::Usage(_) | CommandError::BadImage(_) => 2,
            CommandError::Io(_) | CommandError::Watermark(_) => 1,
        }
    }
}

/// Writes the ledger and report, and the artifact once there is one.
pub fn write_outputs(s: &Session, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    if let Some(a) = s.artifact() {
        fs::write(dir.join(ARTIFACT_FILE), write_ppm(&a.image))?;
    }
    fs::write(dir.join(LEDGER_FILE), export(s.ledger()))?;
    let mut report = serde_json::to_vec_pretty(&session_view(s)).expect("views serialize");
    report.push(b'\n');
    fs::write(dir.join(REPORT_FILE), report)
}

/// Plans and runs a session to completion and writes its files to `out`.
pub fn run(prompt: &str, cfg: SessionConfig, out: &Path) -> Result<Session, CommandError> {
    let o = Orchestrator::default();
    let mut s = o.start(prompt, cfg).map_err(|e| CommandError::Usage(e.to_string()))?;
    o.run(&mut s);
    write_outputs(&s, out)?;
    Ok(s)
}

pub fn run_succeeded(s: &Session) -> bool {
    s.state == State::Done
}

/// PPM or PNG, chosen by magic bytes.
pub fn decode_image(bytes: &[u8]) -> Result<Image, CommandError> {
    if bytes.starts_with(b"\x89PNG") {
        let rgb = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|e| CommandError::BadImage(e.to_string()))?
            .to_rgb8();
        let (w, h) = rgb.dimensions();
        let pixels = rgb.pixels().map(|p| p.0).collect();
        return Image::from_pixels(w as usize, h as usize, pixels).map_err(|e| CommandError::BadImage(e.to_string()));
    }
    read_ppm(bytes).map_err(|e: RasterError| CommandError::BadImage(e.to_string()))
}

/// Lossless PNG rendition; RGBA when the image has coverage.
pub fn encode_png(img: &Image) -> Vec<u8> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let mut out = io::Cursor::new(Vec::new());
    let written = match img.alpha() {
        Some(alpha) => {
            let raw = img
                .pixels()
                .iter()
                .zip(alpha)
                .flat_map(|(p, &a)| [p[0], p[1], p[2], a])
                .collect();
            image::RgbaImage::from_raw(w, h, raw).expect("sized buffer").write_to(&mut out, image::ImageFormat::Png)
        }
        None => {
            let raw = img.pixels().iter().flatten().copied().collect();
            image::RgbImage::from_raw(w, h, raw).expect("sized buffer").write_to(&mut out, image::ImageFormat::Png)
        }
    };
    written.expect("encoding to memory");
    out.into_inner()
}

pub fn verify_watermark(
    image_bytes: &[u8],
    key: u64,
    reference: Option<&str>,
) -> Result<DetectionResult, CommandError> {
    let img = decode_image(image_bytes)?;
    let reference = reference.map(parse_payload_hex).transpose()?;
    let cfg = WatermarkConfig {
        key,
        ..WatermarkConfig::default()
    };
    Ok(detect(&img, &cfg, reference.as_ref())?)
}

pub fn parse_payload_hex(s: &str) -> Result<WatermarkPayload, CommandError> {
    let t = s.trim().trim_start_matches("0x");
    if t.len() != 16 {
        return Err(CommandError::Usage(format!("payload '{s}' must be 16 hex digits")));
    }
    u64::from_str_radix(t, 16)
        .map(WatermarkPayload::from_bits)
        .map_err(|_| CommandError::Usage(format!("payload '{s}' is not hex")))
}

pub fn detection_json(d: &DetectionResult) -> Value {
    json!({
        "crc_ok": d.crc_ok,
        "payload": d.payload().hex(),
        "recovery_rate": d.recovery_rate,
        "sync": [d.sync.0, d.sync.1],
        "tile_shift": [d.tile_shift.0, d.tile_shift.1],
        "scale_used": d.scale_used,
        "confidence": d.confidence,
    })
}

/// Record count when the log verifies.
pub fn verify_ledger(bytes: &[u8]) -> Result<usize, ProvenanceError> {
    import(bytes).map(|l| l.len())
}
