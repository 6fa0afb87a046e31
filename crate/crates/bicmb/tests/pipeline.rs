//! End-to-end checks that the simulated subchannel model agrees with the
//! physical antenna-domain path and that full runs behave.

use num_complex::Complex64;
use rand::RngCore;

use bicmb::analysis::estimate_slope;
use bicmb::channel::{draw_channel, effective_gains};
use bicmb::config::FileConfig;
use bicmb::harness::{run_point, sweep};
use bicmb::modem::Constellation;
use bicmb::numerics::RngStream;
use bicmb::precoding::{apply_precoder, default_angles, make_rotation, PrecoderConfig};

fn parse(text: &str) -> bicmb::config::SimConfig {
    FileConfig::parse(text).unwrap().build().unwrap().remove(0).sim
}

/// The simulator works on diag(gains)·Θx directly. Pushing the same symbols
/// through transmit steering, the drawn channel matrix, and receive combining
/// must give the same vector up to decomposition accuracy.
#[test]
fn subchannel_model_matches_antenna_path() {
    let (n, m, s) = (3usize, 3usize, 3usize);
    let theta = make_rotation(2, &default_angles(2).unwrap()).unwrap();
    let cfg = PrecoderConfig::partial(s, theta, vec![1, 2]).unwrap();
    let qam = Constellation::qam(2).unwrap();
    let mut rng = RngStream::new(41, 0);

    for trial in 0..50 {
        let ch = draw_channel(&mut rng, n, m, s).unwrap();
        let gains = effective_gains(&ch, cfg.bp(), cfg.bn()).unwrap();

        // Per-subchannel symbols, assembled precoded-first as the harness does.
        let symbols: Vec<Complex64> = (0..s)
            .map(|_| qam.point(rng.next_u32() as usize % qam.size()))
            .collect();
        let mut assembled = vec![Complex64::new(0.0, 0.0); s];
        for sub in 1..=s {
            assembled[cfg.position_of_subchannel(sub) - 1] = symbols[sub - 1];
        }
        let scale = (n as f64 / s as f64).sqrt();
        let y: Vec<Complex64> = apply_precoder(&cfg, &assembled)
            .unwrap()
            .into_iter()
            .map(|v| v * scale)
            .collect();

        // Antenna domain: steer subchannel s's component through v_tilde's
        // s-th column, pass the channel, combine with u_tilde.
        let y_sub: Vec<Complex64> = (1..=s)
            .map(|sub| y[cfg.position_of_subchannel(sub) - 1])
            .collect();
        let sent = ch.v_tilde.mul_vec(&y_sub);
        let got = ch.u_tilde.hermitian().mul_vec(&ch.h.mul_vec(&sent));
        let received: Vec<Complex64> = (1..=s)
            .map(|sub| got[sub - 1])
            .collect();

        for sub in 1..=s {
            let l = cfg.position_of_subchannel(sub);
            let model = y[l - 1] * gains[l - 1];
            let diff = (received[sub - 1] - model).norm();
            assert!(
                diff < 1e-8,
                "trial {trial}, subchannel {sub}: physical {} vs model {} (diff {diff:e})",
                received[sub - 1],
                model
            );
        }
    }
}

#[test]
fn noiseless_partial_precoding_frame_decodes() {
    let sim = parse(
        r#"
        [system]
        tx = 3
        rx = 3
        streams = 3
        [code]
        generators = "5,7"
        [modulation]
        bits = 2
        [interleaver]
        spatial = "rotating"
        bit_seed = 99
        [precoder]
        bp = [1, 2]
        [simulation]
        snr_db = [10.0]
        min_bit_errors = 10
        max_bits = 300000
        k_block = 1000
        frame_info_bits = 1800
        seed = 8
        "#,
    );
    let point = run_point(&sim, f64::INFINITY).unwrap();
    assert_eq!(point.bit_errors, 0);
    assert!(point.frames >= 128);
}

/// Thread count is an execution detail; byte-for-byte results must not move.
#[test]
fn worker_count_does_not_change_results() {
    let sim = parse(
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
        [simulation]
        snr_db = [6.0]
        min_bit_errors = 300
        max_bits = 500000
        frame_info_bits = 600
        k_block = 300
        seed = 21
        "#,
    );
    std::env::set_var("BICMB_WORKERS", "1");
    let one = run_point(&sim, 6.0).unwrap();
    std::env::set_var("BICMB_WORKERS", "2");
    let two = run_point(&sim, 6.0).unwrap();
    std::env::remove_var("BICMB_WORKERS");
    let free = run_point(&sim, 6.0).unwrap();
    assert_eq!(one, two);
    assert_eq!(one, free);
    assert!(one.bit_errors >= 300);
}

/// A 2x2 single-rate-1/2-code system protects every subchannel through the
/// rotating interleaver, so its measured BER slope should sit near the full
/// array gain of 4.
#[test]
fn full_diversity_2x2_slope() {
    let sim = parse(
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
        [simulation]
        snr_db = [10.0, 12.0, 14.0]
        min_bit_errors = 1000
        max_bits = 20000000
        k_block = 1000
        frame_info_bits = 1800
        seed = 1
        "#,
    );
    let points = sweep(&sim).unwrap();
    let curve: Vec<(f64, f64)> = points.iter().map(|p| (p.snr_db, p.ber())).collect();
    for p in &points {
        assert!(p.bit_errors >= 1000, "{} dB is under-sampled", p.snr_db);
    }
    let slope = estimate_slope(&curve).unwrap();
    assert!(
        (slope - 4.0).abs() <= 1.0,
        "measured slope {slope} too far from 4"
    );
}
