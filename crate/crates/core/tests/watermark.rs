use std::collections::HashSet;

use aegis_core::raster::{crop, jpeg_attack, psnr, Image, Rect};
use aegis_core::rng::SplitMix64;
use aegis_core::robustness::texture;
use aegis_core::watermark::{build_payload, detect, embed, WatermarkConfig, WatermarkPayload};

fn noise(seed: u64, side: usize) -> Image {
    let mut rng = SplitMix64::new(seed);
    Image::from_fn(side, side, |_, _| std::array::from_fn(|_| (rng.next_u64() >> 56) as u8)).unwrap()
}

fn keyed(key: u64) -> WatermarkConfig {
    WatermarkConfig {
        key,
        ..WatermarkConfig::default()
    }
}

#[test]
fn session_ids_do_not_collide() {
    let mut rng = SplitMix64::new(11);
    let mut seen = HashSet::new();
    for _ in 0..100_000 {
        let session = format!("s-{:016x}", rng.next_u64());
        let p = build_payload("acct-7", "proj-3", &session, 1_700_000_000).unwrap();
        assert!(p.crc_ok());
        assert!(seen.insert(p.id48), "collision on {session}");
    }
}

#[test]
fn clean_channel_on_textures() {
    let cfg = WatermarkConfig::default();
    for (seed, side) in [(1, 128), (2, 160), (3, 256), (4, 200)] {
        let img = texture(seed, side);
        let p = WatermarkPayload::from_id(0xABCD_0000_0000 + seed);
        let d = detect(&embed(&img, &p, &cfg).unwrap(), &cfg, Some(&p)).unwrap();
        assert!(d.crc_ok, "seed {seed}");
        assert_eq!(d.recovery_rate, Some(1.0));
        assert_eq!(d.sync, (0, 0));
        assert_eq!(d.scale_used, 1.0);
    }
}

#[test]
fn mid_gray_psnr() {
    let img = Image::filled(512, 512, [128; 3]).unwrap();
    let cfg = WatermarkConfig::default();
    let marked = embed(&img, &WatermarkPayload::from_id(0x1234_5678_9ABC), &cfg).unwrap();
    let db = psnr(&img, &marked).unwrap();
    assert!(db >= 38.0, "{db}");
}

#[test]
fn tiny_lambda_is_rounding_only() {
    let img = texture(9, 96);
    let cfg = WatermarkConfig {
        lambda: 1e-6,
        ..WatermarkConfig::default()
    };
    let marked = embed(&img, &WatermarkPayload::from_id(77), &cfg).unwrap();
    for (a, b) in img.pixels().iter().zip(marked.pixels()) {
        for c in 0..3 {
            assert!((i16::from(a[c]) - i16::from(b[c])).abs() <= 1);
        }
    }
}

#[test]
fn unmarked_noise_rarely_passes() {
    let cfg = WatermarkConfig::default();
    let passes = (0..1000).filter(|&i| detect(&noise(50_000 + i, 128), &cfg, None).unwrap().crc_ok).count();
    println!("false positives: {passes}/1000");
    assert!(passes <= 2, "{passes}");
}

#[test]
fn wrong_key_fails() {
    let mut rng = SplitMix64::new(5);
    let mut passes = 0;
    for i in 0..1000 {
        let img = texture(90_000 + i, 128);
        let p = WatermarkPayload::from_id(rng.next_u64() >> 16);
        let (k1, k2) = (rng.next_u64(), rng.next_u64());
        let marked = embed(&img, &p, &keyed(k1)).unwrap();
        if detect(&marked, &keyed(k2), Some(&p)).unwrap().crc_ok {
            passes += 1;
        }
    }
    println!("wrong-key passes: {passes}/1000");
    assert!(passes <= 1, "{passes}");
}

#[test]
fn crop_sync_matches_offset() {
    let cfg = WatermarkConfig::default();
    let img = texture(21, 320);
    let p = WatermarkPayload::from_id(0x0F0F_F0F0_1234);
    let marked = embed(&img, &p, &cfg).unwrap();
    for (x, y) in [(0, 0), (3, 0), (0, 5), (13, 7), (34, 34), (41, 66), (8, 16)] {
        let cut = crop(&marked, Rect::new(x, y, 240, 232)).unwrap();
        let d = detect(&cut, &cfg, Some(&p)).unwrap();
        assert!(d.crc_ok, "offset ({x},{y})");
        assert_eq!(d.sync, (x % 8, y % 8), "offset ({x},{y})");
        assert_eq!(d.recovery_rate, Some(1.0));
    }
}

#[test]
fn recovery_grows_with_lambda() {
    let p = WatermarkPayload::from_id(0x00C0_FFEE_0001);
    let hosts: Vec<Image> = (0..6).map(|s| texture(300 + s, 256)).collect();
    let mut means = Vec::new();
    for lambda in [1.0, 2.0, 4.0, 8.0] {
        let cfg = WatermarkConfig {
            lambda,
            ..WatermarkConfig::default()
        };
        let total: f64 = hosts
            .iter()
            .map(|h| {
                let attacked = jpeg_attack(&embed(h, &p, &cfg).unwrap(), 75).unwrap();
                detect(&attacked, &cfg, Some(&p)).unwrap().recovery_rate.unwrap()
            })
            .sum();
        means.push(total / hosts.len() as f64);
    }
    println!("recovery by lambda 1,2,4,8: {means:?}");
    for w in means.windows(2) {
        assert!(w[1] >= w[0], "{means:?}");
    }
}
