//! The production transform is checked against a direct double-loop Riemann
//! sum (no truncation, every sample) and against the analytic peak-response
//! scale for pure cosines.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tcct_core::wavelet::{cwt, morlet_sample, CwtPlan, MorletParams, ScaleGrid};

/// Untruncated discretization: every (scale, shift) sums over the whole
/// signal.
fn riemann_oracle(signal: &[f64], grid: &ScaleGrid<f64>, params: &MorletParams<f64>) -> Vec<Complex<f64>> {
    let t_len = signal.len();
    let mut out = Vec::with_capacity(grid.len() * t_len);
    for &s in grid.scales() {
        let norm = 1.0 / s.sqrt();
        for m in 0..t_len {
            let mut acc = Complex::new(0.0, 0.0);
            for (n, &x) in signal.iter().enumerate() {
                let u = (n as f64 - m as f64) / s;
                acc += x * morlet_sample(u, params).conj();
            }
            out.push(norm * acc);
        }
    }
    out
}

fn max_norm(coeffs: &[Complex<f64>]) -> f64 {
    coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

fn matrix_rel_err(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
    let scale = max_norm(b).max(1e-30);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
        / scale
}

#[test]
fn cwt_matches_riemann_sum_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let grid = ScaleGrid::geometric(8, 0.5, 12.0, 30.0, 1.0).unwrap();
    let params = MorletParams::default();
    for _ in 0..5 {
        let signal: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fast = cwt(&signal, &grid, &params).unwrap();
        let oracle = riemann_oracle(&signal, &grid, &params);
        let err = matrix_rel_err(&fast, &oracle);
        assert!(err < 1e-6, "relative error {err}");
    }
}

#[test]
fn cwt_matches_oracle_at_full_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let grid = ScaleGrid::geometric(16, 0.1, 15.0, 30.0, 1.0).unwrap();
    let params = MorletParams::default();
    let signal: Vec<f64> = (0..280).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let fast = cwt(&signal, &grid, &params).unwrap();
    let oracle = riemann_oracle(&signal, &grid, &params);
    let err = matrix_rel_err(&fast, &oracle);
    assert!(err < 1e-6, "relative error {err}");
}

#[test]
fn pure_cosine_peaks_at_predicted_scale() {
    let fs = 30.0;
    let params = MorletParams::default();
    let grid = ScaleGrid::geometric(32, 0.1, 15.0, fs, 1.0).unwrap();
    for &freq in &[0.5f64, 1.2, 3.0, 7.0] {
        let signal: Vec<f64> = (0..280)
            .map(|n| (2.0 * std::f64::consts::PI * freq * n as f64 / fs).cos())
            .collect();
        let coeffs = cwt(&signal, &grid, &params).unwrap();
        // Scale with the highest mean coefficient magnitude.
        let best = (0..grid.len())
            .max_by(|&a, &b| {
                let mean = |k: usize| {
                    coeffs[k * 280..(k + 1) * 280]
                        .iter()
                        .map(|c| c.norm())
                        .sum::<f64>()
                };
                mean(a).partial_cmp(&mean(b)).unwrap()
            })
            .unwrap();
        // Analytic peak response: s* = C * fs / f; allow one grid step.
        let predicted = grid.scale_for_frequency(freq, &params);
        let nearest = (0..grid.len())
            .min_by(|&a, &b| {
                let d = |k: usize| (grid.scales()[k].ln() - predicted.ln()).abs();
                d(a).partial_cmp(&d(b)).unwrap()
            })
            .unwrap();
        assert!(
            (best as isize - nearest as isize).abs() <= 1,
            "freq {freq}: peak at grid index {best}, predicted {nearest}"
        );
    }
}

#[test]
fn cwt_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let grid = ScaleGrid::geometric(6, 0.5, 10.0, 30.0, 1.0).unwrap();
    let params = MorletParams::default();
    let x: Vec<f64> = (0..96).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..96).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (a, b) = (0.7, -1.3);
    let combo: Vec<f64> = x.iter().zip(&y).map(|(&xv, &yv)| a * xv + b * yv).collect();
    let cx = cwt(&x, &grid, &params).unwrap();
    let cy = cwt(&y, &grid, &params).unwrap();
    let cc = cwt(&combo, &grid, &params).unwrap();
    for ((cxv, cyv), ccv) in cx.iter().zip(&cy).zip(&cc) {
        let want = a * cxv + b * cyv;
        assert!((ccv - want).norm() < 1e-8);
    }
}

#[test]
fn time_shift_covariance_away_from_boundaries() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    // Small scales only, so the truncated support leaves interior columns.
    let grid = ScaleGrid::geometric(6, 2.0, 12.0, 30.0, 1.0).unwrap();
    let params = MorletParams::default();
    let plan = CwtPlan::new(&grid, &params).unwrap();
    let hw = plan.max_half_width();
    let t_len = 280usize;
    let shift = 17usize;
    assert!(2 * hw + shift < t_len, "grid leaves no interior");

    let x: Vec<f64> = (0..t_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut shifted = vec![0.0; t_len];
    for i in 0..t_len - shift {
        shifted[i + shift] = x[i];
    }
    let cx = plan.apply(&x).unwrap();
    let cs = plan.apply(&shifted).unwrap();
    let peak = cx.iter().map(|c| c.norm()).fold(0.0, f64::max);
    for k in 0..grid.len() {
        for m in hw..t_len - hw - shift {
            let a = cx[k * t_len + m];
            let b = cs[k * t_len + m + shift];
            assert!(
                (a - b).norm() < 1e-6 * peak.max(1.0),
                "scale {k} column {m}: {a} vs {b}"
            );
        }
    }
}
