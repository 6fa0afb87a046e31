//! Monte Carlo BER measurement. A frame is one codeword: info bits are
//! encoded, interleaved onto the beamforming subchannels, optionally rotated,
//! sent through freshly drawn channel gains every `k_block` instants, and
//! decoded from the per-bit metric table. Frames are independent, so they run
//! in parallel; every frame draws from its own counter-addressed RNG stream
//! and batches are reduced in order, which makes results byte-identical for
//! any worker count.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::RngCore;
use rayon::prelude::*;

use crate::analysis::{diversity_order, estimate_slope};
use crate::channel::{draw_channel, effective_gains};
use crate::coding::{encode, viterbi_decode};
use crate::config::{FileConfig, SimConfig};
use crate::detector::{build_metric_table, ReceivedVector};
use crate::error::{Error, Result};
use crate::modem::Modem;
use crate::numerics::{gaussian_complex, RngStream};
use crate::precoding::apply_precoder;

/// Frames per scheduling batch. The stop rule is evaluated at batch
/// boundaries only, so this constant is part of the reproducibility contract.
const BATCH_FRAMES: u64 = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct BerPoint {
    pub snr_db: f64,
    pub bit_errors: u64,
    pub bits: u64,
    pub frames: u64,
}

impl BerPoint {
    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.bit_errors as f64 / self.bits as f64
        }
    }
}

/// Assembles one instant's per-stream symbols into subchannel order
/// (precoded first), rotates, and applies the transmit power scaling that
/// keeps total transmit energy at the antenna count.
fn transmit_vector(cfg: &SimConfig, stream_symbols: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut assembled = vec![Complex64::new(0.0, 0.0); cfg.s];
    for sub in 1..=cfg.s {
        assembled[cfg.precoder.position_of_subchannel(sub) - 1] = stream_symbols[sub - 1];
    }
    let scale = (cfg.n as f64 / cfg.s as f64).sqrt();
    Ok(apply_precoder(&cfg.precoder, &assembled)?
        .into_iter()
        .map(|v| v * scale)
        .collect())
}

/// Circularly symmetric complex noise with per-sample energy n0, i.e. n0/2
/// per real component.
fn noise_vector(rng: &mut RngStream, len: usize, n0: f64) -> Vec<Complex64> {
    let scale = n0.sqrt();
    gaussian_complex(rng, len)
        .into_iter()
        .map(|g| g * scale)
        .collect()
}

/// Runs one frame end to end and returns its info-bit error count.
fn simulate_frame(cfg: &SimConfig, modem: &Modem, n0: f64, frame: u64) -> Result<u64> {
    let mut rng = RngStream::new(cfg.seed, frame);
    let info: Vec<u8> = (0..cfg.frame_info_bits)
        .map(|_| (rng.next_u32() & 1) as u8)
        .collect();
    let coded = encode(&cfg.code, &info)?;
    let symbols = modem.map_frame(&coded)?;

    let p = cfg.precoder.p();
    let mut received = Vec::with_capacity(symbols.len());
    let mut gain_sets: Vec<Vec<f64>> = Vec::with_capacity(symbols.len());
    let mut gains = Vec::new();
    for (k, stream_symbols) in symbols.iter().enumerate() {
        if k % cfg.k_block == 0 {
            let ch = draw_channel(&mut rng, cfg.n, cfg.m, cfg.s)?;
            gains = effective_gains(&ch, cfg.precoder.bp(), cfg.precoder.bn())?;
        }
        let sent = transmit_vector(cfg, stream_symbols)?;
        let noise = noise_vector(&mut rng, cfg.s, n0);
        let r: Vec<Complex64> = (0..cfg.s).map(|l| sent[l] * gains[l] + noise[l]).collect();
        received.push(ReceivedVector::new(r[..p].to_vec(), r[p..].to_vec(), k + 1)?);
        gain_sets.push(gains.clone());
    }

    let table = build_metric_table(&cfg.code, modem, &cfg.precoder, &received, &gain_sets)?;
    let decoded = viterbi_decode(&cfg.code, &table)?;
    Ok(info
        .iter()
        .zip(&decoded)
        .filter(|(a, b)| a != b)
        .count() as u64)
}

fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var("BICMB_WORKERS") {
        Err(_) => Ok(None),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&w| w >= 1)
            .map(Some)
            .ok_or_else(|| {
                Error::Config(format!("BICMB_WORKERS must be a positive integer, got {v:?}"))
            }),
    }
}

fn run_point_inner(cfg: &SimConfig, snr_db: f64) -> Result<BerPoint> {
    // SNR is total transmit energy over per-receive-antenna noise energy, so
    // n0 scales with the antenna count. +inf disables noise.
    let n0 = cfg.n as f64 / 10f64.powf(snr_db / 10.0);
    let modem = Modem::new(
        cfg.constellation.clone(),
        cfg.spatial.clone(),
        cfg.bit_seed,
        cfg.code.coded_len(cfg.frame_info_bits),
    )?;
    let frame_bits = cfg.frame_info_bits as u64;
    let mut point = BerPoint {
        snr_db,
        bit_errors: 0,
        bits: 0,
        frames: 0,
    };
    while point.bit_errors < cfg.min_bit_errors && point.bits < cfg.max_bits {
        let start = point.frames;
        let batch: Result<Vec<u64>> = (start..start + BATCH_FRAMES)
            .into_par_iter()
            .map(|frame| simulate_frame(cfg, &modem, n0, frame))
            .collect();
        for errors in batch? {
            point.bit_errors += errors;
            point.bits += frame_bits;
            point.frames += 1;
        }
    }
    Ok(point)
}

/// Measures BER at one SNR, running frames until `min_bit_errors` errors or
/// `max_bits` info bits, whichever comes first (checked per batch).
/// `BICMB_WORKERS` caps the thread count; output does not depend on it.
pub fn run_point(cfg: &SimConfig, snr_db: f64) -> Result<BerPoint> {
    if snr_db.is_nan() {
        return Err(Error::InvalidInput("SNR is NaN".into()));
    }
    match workers_from_env()? {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| run_point_inner(cfg, snr_db)),
        None => run_point_inner(cfg, snr_db),
    }
}

pub fn sweep(cfg: &SimConfig) -> Result<Vec<BerPoint>> {
    cfg.snr_db.iter().map(|&snr| run_point(cfg, snr)).collect()
}

#[derive(Debug, Clone)]
pub struct VariantOutcome {
    pub label: String,
    pub predicted_order: usize,
    pub points: Vec<BerPoint>,
    pub slope_window_db: Option<(f64, f64)>,
    /// Fitted BER slope in diversity-order units, when enough points qualify.
    pub measured_slope: Option<f64>,
    pub csv_path: PathBuf,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub variants: Vec<VariantOutcome>,
    pub summary_path: PathBuf,
}

fn render_csv(points: &[BerPoint]) -> String {
    let mut out = String::from("snr_db,ber,bit_errors,bits,frames\n");
    for p in points {
        out.push_str(&format!(
            "{},{:.6e},{},{},{}\n",
            p.snr_db,
            p.ber(),
            p.bit_errors,
            p.bits,
            p.frames
        ));
    }
    out
}

/// Points with fewer errors than this carry too much log-BER noise to help a
/// slope fit, even when the bit budget ran out before the stop target.
const MIN_FIT_ERRORS: u64 = 100;

fn measured_slope(points: &[BerPoint], window: Option<(f64, f64)>) -> Option<f64> {
    let curve: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| window.map_or(true, |(lo, hi)| p.snr_db >= lo && p.snr_db <= hi))
        .filter(|p| p.bit_errors >= MIN_FIT_ERRORS)
        .map(|p| (p.snr_db, p.ber()))
        .collect();
    estimate_slope(&curve).ok()
}

fn render_summary(outcomes: &[VariantOutcome]) -> String {
    let mut out = String::new();
    for v in outcomes {
        let window = match v.slope_window_db {
            Some((lo, hi)) => format!("{lo}..{hi} dB"),
            None => "all points".into(),
        };
        let measured = match v.measured_slope {
            Some(d) => format!("{d:.3}"),
            None => "unavailable (needs 3 or more fully counted points)".into(),
        };
        out.push_str(&format!(
            "variant {}: predicted order {}, measured slope {} over {}\n",
            v.label, v.predicted_order, measured, window
        ));
    }
    out
}

/// Runs every variant's sweep, writes `<label>.csv` per variant plus a
/// `summary.txt` comparing fitted slopes against predicted diversity orders.
pub fn run_experiment(file: &FileConfig, out_dir: &Path) -> Result<ExperimentOutcome> {
    let variants = file.build()?;
    std::fs::create_dir_all(out_dir)?;
    let mut outcomes = Vec::new();
    for v in &variants {
        let points = sweep(&v.sim)?;
        let csv_path = out_dir.join(format!("{}.csv", v.label));
        std::fs::write(&csv_path, render_csv(&points))?;
        let report = diversity_order(
            &v.sim.code,
            &v.sim.spatial,
            v.sim.precoder.bp(),
            v.sim.n,
            v.sim.m,
            None,
        )?;
        outcomes.push(VariantOutcome {
            label: v.label.clone(),
            predicted_order: report.overall_order,
            measured_slope: measured_slope(&points, v.slope_window_db),
            points,
            slope_window_db: v.slope_window_db,
            csv_path,
        });
    }
    let summary_path = out_dir.join("summary.txt");
    std::fs::write(&summary_path, render_summary(&outcomes))?;
    Ok(ExperimentOutcome {
        variants: outcomes,
        summary_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_sim(text: &str) -> SimConfig {
        FileConfig::parse(text)
            .unwrap()
            .build()
            .unwrap()
            .remove(0)
            .sim
    }

    fn small_2x2() -> SimConfig {
        parse_sim(
            r#"
            [system]
            tx = 2
            rx = 2
            streams = 2
            [code]
            generators = "5,7"
            [modulation]
            bits = 2
            [interleaver]
            spatial = "rotating"
            [precoder]
            bp = [1, 2]
            [simulation]
            snr_db = [10.0]
            min_bit_errors = 50
            max_bits = 30000
            frame_info_bits = 120
            k_block = 30
            seed = 5
            "#,
        )
    }

    #[test]
    fn noise_energy_is_calibrated() {
        let mut rng = RngStream::new(7, 0);
        let n0 = 0.8;
        let total = 1_000_000;
        let v = noise_vector(&mut rng, total, n0);
        let energy = v.iter().map(|z| z.norm_sqr()).sum::<f64>() / total as f64;
        assert!((energy / n0 - 1.0).abs() < 0.01, "E|n|^2 = {energy}");
        let re = v.iter().map(|z| z.re * z.re).sum::<f64>() / total as f64;
        let im = v.iter().map(|z| z.im * z.im).sum::<f64>() / total as f64;
        assert!((re / (n0 / 2.0) - 1.0).abs() < 0.01, "re var {re}");
        assert!((im / (n0 / 2.0) - 1.0).abs() < 0.01, "im var {im}");
    }

    #[test]
    fn transmit_energy_is_calibrated() {
        // 16-QAM has per-symbol energy spread, so this exercises the
        // averaging and not just unitarity.
        let mut sim = small_2x2();
        sim.constellation = crate::modem::Constellation::qam(4).unwrap();
        let mut rng = RngStream::new(3, 9);
        let size = sim.constellation.size();
        let trials = 100_000;
        let mut acc = 0.0;
        for _ in 0..trials {
            let symbols: Vec<Complex64> = (0..sim.s)
                .map(|_| sim.constellation.point(rng.next_u32() as usize % size))
                .collect();
            let sent = transmit_vector(&sim, &symbols).unwrap();
            acc += sent.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        let avg = acc / trials as f64;
        assert!(
            (avg / sim.n as f64 - 1.0).abs() < 0.01,
            "average transmit energy {avg} vs {}",
            sim.n
        );
    }

    #[test]
    fn infinite_snr_decodes_cleanly() {
        let point = run_point(&small_2x2(), f64::INFINITY).unwrap();
        assert_eq!(point.bit_errors, 0);
        assert!(point.bits >= 30000);
    }

    #[test]
    fn results_do_not_depend_on_seam_or_workers() {
        let sim = small_2x2();
        let a = run_point(&sim, 6.0).unwrap();
        let b = run_point(&sim, 6.0).unwrap();
        assert_eq!(a, b);
        assert!(a.bit_errors >= 50, "6 dB should produce errors");

        // Sequential env mutation; no other test reads this variable.
        std::env::set_var("BICMB_WORKERS", "1");
        let c = run_point(&sim, 6.0);
        std::env::set_var("BICMB_WORKERS", "3");
        let d = run_point(&sim, 6.0);
        std::env::set_var("BICMB_WORKERS", "zero?");
        let e = run_point(&sim, 6.0);
        std::env::remove_var("BICMB_WORKERS");
        assert_eq!(a, c.unwrap());
        assert_eq!(a, d.unwrap());
        assert!(e.is_err());
    }

    #[test]
    fn plain_and_precoded_frames_differ() {
        // Same seed, same channel draws; the rotation must change decisions
        // somewhere at low SNR.
        let precoded = small_2x2();
        let mut plain = small_2x2();
        plain.precoder = crate::precoding::PrecoderConfig::none(2).unwrap();
        let a = run_point(&precoded, 2.0).unwrap();
        let b = run_point(&plain, 2.0).unwrap();
        assert_ne!(a.bit_errors, b.bit_errors);
    }

    #[test]
    fn experiment_outputs_are_stable() {
        let text = r#"
            [system]
            tx = 2
            rx = 2
            streams = 2
            [code]
            generators = "5,7"
            [modulation]
            bits = 2
            [interleaver]
            spatial = "rotating"
            [simulation]
            snr_db = [0.0, 6.0]
            min_bit_errors = 20
            max_bits = 8000
            frame_info_bits = 60
            k_block = 20
            seed = 11

            [[variant]]
            label = "rotated"
            precoder = { bp = [1, 2] }

            [[variant]]
            label = "block6"
            interleaver = { spatial = { block = 6 } }
        "#;
        let file = FileConfig::parse(text).unwrap();
        let base = std::env::temp_dir().join(format!("bicmb-harness-{}", std::process::id()));
        let dir1 = base.join("run1");
        let dir2 = base.join("run2");
        let out1 = run_experiment(&file, &dir1).unwrap();
        run_experiment(&file, &dir2).unwrap();

        assert_eq!(out1.variants.len(), 2);
        assert_eq!(out1.variants[0].label, "rotated");
        assert_eq!(out1.variants[0].predicted_order, 4);
        // A six-bit dwell lets a short error event sit entirely on the
        // weakest subchannel.
        assert_eq!(out1.variants[1].predicted_order, 1);
        // Two SNR points cannot support a slope fit.
        assert!(out1.variants[0].measured_slope.is_none());

        for name in ["rotated.csv", "block6.csv", "summary.txt"] {
            let a = std::fs::read(dir1.join(name)).unwrap();
            let b = std::fs::read(dir2.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
        let csv = std::fs::read_to_string(dir1.join("rotated.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("snr_db,ber,bit_errors,bits,frames"));
        assert_eq!(lines.count(), 2);
        let summary = std::fs::read_to_string(out1.summary_path).unwrap();
        assert!(summary.contains("variant rotated: predicted order 4"));
        let _ = std::fs::remove_dir_all(base);
    }

    #[test]
    fn nan_snr_is_rejected() {
        assert!(run_point(&small_2x2(), f64::NAN).is_err());
    }
}
