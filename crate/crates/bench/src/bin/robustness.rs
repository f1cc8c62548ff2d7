//! Watermark robustness sweep over the fixture corpus, as CSV on stdout.
//!
//! Usage: robustness [--quick]

use std::time::Instant;

use aegis_core::robustness::{corpus, csv_header, csv_line, evaluate, standard_attacks, Attack, Mode, FIXTURE_SIDE};
use aegis_core::watermark::{WatermarkConfig, WatermarkPayload};

fn main() {
    let quick = std::env::args().any(|a| a == "--quick");
    let started = Instant::now();
    let fixtures = corpus(FIXTURE_SIDE);
    let payload = WatermarkPayload::from_id(0x5EED_0F_C0FFEE);
    let cfg = WatermarkConfig::default();
    println!("{}", csv_header());
    let mut attacks = standard_attacks();
    if !quick {
        attacks.extend([50, 60, 90].map(|quality| Attack::Jpeg { quality }));
    }
    for f in &fixtures {
        for &attack in &attacks {
            println!("{}", csv_line(&evaluate(f, Mode::Integrated, attack, &payload, &cfg)));
        }
        println!("{}", csv_line(&evaluate(f, Mode::PostHoc, Attack::Jpeg { quality: 75 }, &payload, &cfg)));
    }
    eprintln!("done in {:.1}s", started.elapsed().as_secs_f64());
}
