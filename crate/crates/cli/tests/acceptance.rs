//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! with the measured numbers. Tolerances are pinned in code.
//!
//! Criteria 8 and the level band inside 10 assert published reference
//! values that this intensity family cannot reproduce: the published fitted
//! vector and the published model quotes are mutually inconsistent (the
//! vector implies an expected 5y default count near 4 of 100 where the
//! quotes need roughly 20, confirmed independently by Monte Carlo). They
//! are implemented as stated rather than loosened.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use contagion_core::ajd::{expectation, riccati_oracle, transform, AjdParams};
use contagion_core::calibrate::{
    implied_rho, CalibrationBox, MarketConvention, Quote, QuoteKind, QuoteSet,
};
use contagion_core::kernel::{kernel_col, kernel_factorized, kernel_row, two_obligor_mode};
use contagion_core::model::{ContagionSpec, ObligorSet, RecoveryVector};
use contagion_core::precision::PrecisionPolicy;
use contagion_core::pricing::{
    attach_detach_times, expected_tranche_loss_general, expected_tranche_loss_hcm,
    expected_tranche_loss_ncm, loss_curve_closed_form, loss_curve_general, CountRounding,
    TrancheDeck,
};
use contagion_core::simulate::{
    deterministic_path, martingale_check, path_rng, simulate_defaults, simulate_y_path, Factor,
};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_contagion")
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

fn run_cmd(args: &[&str]) -> (i32, String) {
    let out = Command::new(bin())
        .args(args)
        .current_dir(repo_root())
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn verdict(criterion: &str, pass: bool, detail: &str) -> bool {
    println!(
        "criterion {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

fn base_ajd() -> AjdParams {
    AjdParams {
        kappa: 0.6,
        theta: 0.02,
        sigma: 0.141,
        jump_intensity: 0.2,
        jump_mean: 0.1,
        y0: 1.0,
    }
}

/// Deterministic pseudo-random doubles for hermetic spec draws.
struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(2862933555777941757)
            .wrapping_add(3037000493);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next()
    }
}

// ---------------------------------------------------------------------------
// criteria 1, 2, 12: reference spread columns and precision stability
// ---------------------------------------------------------------------------

fn price_with_config(config: &str, out: &str, extra: &[&str]) -> serde_json::Value {
    let root = repo_root();
    let out_dir = root.join("target").join(out);
    let mut args = vec![
        "price",
        config,
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--threads",
        "1",
    ];
    args.extend_from_slice(extra);
    let (code, err) = run_cmd(&args);
    assert_eq!(code, 0, "price failed: {err}");
    read_json(&out_dir.join("summary.json"))
}

#[test]
fn criterion_01_table1_hcm_column() {
    let t0 = Instant::now();
    let summary = price_with_config("configs/base_hcm.toml", "acc1", &[]);
    let wall = t0.elapsed().as_secs_f64();
    let target = [1002.0, 840.0, 795.0, 777.0, 739.0, 619.0];
    let spreads: Vec<f64> = summary["spread_bp"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let worst = spreads
        .iter()
        .zip(target)
        .map(|(s, t)| (s / t - 1.0).abs())
        .fold(0.0f64, f64::max);
    let pass = worst <= 0.015 && wall <= 60.0;
    assert!(
        verdict(
            "1 (reference HCM spread column, +-1.5%, <=60s single-threaded)",
            pass,
            &format!("spreads {spreads:.1?} vs {target:?}, worst rel {worst:.4}, wall {wall:.1}s")
        ),
        "criterion 1 failed"
    );
}

#[test]
fn criterion_02_table1_ncm_column() {
    let summary = price_with_config("configs/base_ncm.toml", "acc2", &[]);
    let target = [418.0, 190.0, 211.0, 235.0, 259.0, 283.0];
    let spreads: Vec<f64> = summary["spread_bp"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let worst = spreads
        .iter()
        .zip(target)
        .map(|(s, t)| (s / t - 1.0).abs())
        .fold(0.0f64, f64::max);
    let pass = worst <= 0.015;
    assert!(
        verdict(
            "2 (reference NCM spread column, +-1.5%)",
            pass,
            &format!("spreads {spreads:.1?} vs {target:?}, worst rel {worst:.4}")
        ),
        "criterion 2 failed"
    );
}

#[test]
fn criterion_12_precision_stability() {
    // rerun criterion 1's pricing with mantissa_bits doubled
    let base = price_with_config("configs/base_hcm.toml", "acc12a", &[]);
    let doubled_cfg = repo_root().join("target/acc12_config.toml");
    let text = std::fs::read_to_string(repo_root().join("configs/base_hcm.toml"))
        .unwrap()
        .replace("mantissa_bits = 1024", "mantissa_bits = 2048");
    std::fs::write(&doubled_cfg, text).unwrap();
    let doubled = price_with_config(doubled_cfg.to_str().unwrap(), "acc12b", &[]);
    let a: Vec<f64> = base["spread_bp"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let b: Vec<f64> = doubled["spread_bp"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let worst = a
        .iter()
        .zip(&b)
        .map(|(x, y)| ((x - y) / y).abs())
        .fold(0.0f64, f64::max);
    let pass = worst <= 1e-9;
    assert!(
        verdict(
            "12 (doubling mantissa_bits moves spreads < 1e-9 relative)",
            pass,
            &format!("worst relative change {worst:.3e}")
        ),
        "criterion 12 failed"
    );
}

// ---------------------------------------------------------------------------
// criterion 3: closed form vs brute force at N = 6
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_closed_form_equals_brute_force() {
    let t0 = Instant::now();
    let n = 6;
    let policy = PrecisionPolicy::with_bits(512);
    let ajd = base_ajd();
    let deck = TrancheDeck::with_uniform_schedule(
        vec![0.0, 0.1, 0.3, 0.6],
        vec![0.0, 0.0, 0.0],
        2.0,
        0.25,
        0.05,
        RecoveryVector::flat(n, 0.4).unwrap(),
    )
    .unwrap();
    let mut lcg = Lcg(20260810);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for case in 0..100 {
        let delta = {
            let mag = lcg.range(0.05, 0.3);
            if lcg.next() < 0.5 {
                -mag
            } else {
                mag
            }
        };
        let beta: Vec<f64> = (0..n).map(|_| lcg.range(0.02, 0.3)).collect();
        let spec = if case < 50 {
            ContagionSpec::hcm(beta, lcg.range(0.02, 0.4), delta).unwrap()
        } else {
            ContagionSpec::ncm(beta, lcg.range(0.05, 0.5), lcg.range(0.05, 0.5), delta).unwrap()
        };
        // the brute-force curve shares one subset/permutation enumeration
        // across tranches and dates; single-point calls go through the same
        // operation (spot-checked below)
        let oracle_curve =
            loss_curve_general(&spec, &deck, &ajd, &policy, &deck.pay_times[1..]).unwrap();
        let closed_curve = loss_curve_closed_form(&spec, &deck, &ajd, &policy).unwrap();
        for i in 1..=3usize {
            for (k, _t) in deck.pay_times[1..].iter().enumerate() {
                let oracle = oracle_curve.values[i - 1][k + 1];
                let closed = closed_curve.values[i - 1][k + 1];
                let rel = (closed - oracle).abs() / oracle.abs().max(1e-300);
                worst = worst.max(rel);
                checked += 1;
            }
        }
        if case % 25 == 0 {
            // per-operation entry points agree with the batched curves
            let t = deck.pay_times[4];
            let single =
                expected_tranche_loss_general(&spec, &deck, 2, t, &ajd, &policy).unwrap();
            assert_eq!(single, oracle_curve.values[1][4]);
            let closed_single = if case < 50 {
                expected_tranche_loss_hcm(&spec, &deck, 2, t, &ajd, &policy)
            } else {
                expected_tranche_loss_ncm(&spec, &deck, 2, t, &ajd, &policy)
            }
            .unwrap();
            let rel = (closed_single - single).abs() / single.abs().max(1e-300);
            worst = worst.max(rel);
        }
    }
    let wall = t0.elapsed().as_secs_f64();
    let pass = worst <= 1e-9 && wall <= 300.0;
    assert!(
        verdict(
            "3 (50 HCM + 50 NCM specs at N=6, closed == brute force, 1e-9 rel, <=5min)",
            pass,
            &format!("{checked} comparisons, worst rel {worst:.2e}, wall {wall:.1}s")
        ),
        "criterion 3 failed"
    );
}

// ---------------------------------------------------------------------------
// criterion 4: kernel normalization and Chapman-Kolmogorov
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_kernel_row_and_composition() {
    let policy = PrecisionPolicy::with_bits(768);
    let mut lcg = Lcg(418);
    let mut worst_norm = 0.0f64;
    let mut worst_ck = 0.0f64;
    for n in [6usize, 9, 12] {
        let delta = lcg.range(0.05, 0.25);
        let beta: Vec<f64> = (0..n).map(|_| lcg.range(0.05, 0.4)).collect();
        let rho_flat: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| lcg.range(0.02, 0.5)).collect())
            .collect();
        let specs = vec![
            ContagionSpec::hcm(beta.clone(), lcg.range(0.03, 0.3), -delta).unwrap(),
            ContagionSpec::ncm(beta.clone(), lcg.range(0.1, 0.4), lcg.range(0.1, 0.4), delta)
                .unwrap(),
            ContagionSpec::general(beta.clone(), rho_flat, delta).unwrap(),
        ];
        for spec in &specs {
            let e = ObligorSet::empty(n);
            for &z in &[0.3, 2.0, 25.0] {
                let row = kernel_row(spec, &e, z, &policy).unwrap();
                let total: f64 = row.iter().map(|(_, p)| p).sum();
                worst_norm = worst_norm.max((total - 1.0).abs());
            }
            // composition over the full lattice: row from empty, column to full
            let f = ObligorSet::full(n);
            let (z1, z2) = (0.5, 0.8);
            let row = kernel_row(spec, &e, z1, &policy).unwrap();
            let col = kernel_col(spec, &e, &f, z2, &policy).unwrap();
            let colmap: std::collections::HashMap<u128, f64> =
                col.into_iter().map(|(s, p)| (s.bits(), p)).collect();
            let composed: f64 = row.iter().map(|(h, p)| p * colmap[&h.bits()]).sum();
            let direct = kernel_factorized(spec, &e, &f, z1 + z2, &policy).unwrap();
            worst_ck = worst_ck.max((composed - direct).abs());
        }
    }
    let pass = worst_norm <= 1e-12 && worst_ck <= 1e-10;
    assert!(
        verdict(
            "4 (kernel rows sum to 1 within 1e-12; Chapman-Kolmogorov within 1e-10, N<=12)",
            pass,
            &format!("worst |sum-1| {worst_norm:.2e}, worst CK gap {worst_ck:.2e}")
        ),
        "criterion 4 failed"
    );
}

// ---------------------------------------------------------------------------
// criterion 5: AJD closed form vs Riccati and vs Monte Carlo
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_ajd_transform() {
    let p = base_ajd();
    let gs = [0.1, 0.35, 1.0, 10.0];
    let ts = [1.0, 5.0, 10.0];
    let mut worst_abs = 0.0f64;
    for &g in &gs {
        for &t in &ts {
            let cf = transform(&p, g, t).unwrap();
            let ode = riccati_oracle(&p, g, t).unwrap();
            worst_abs = worst_abs.max((cf.a - ode.a).abs()).max((cf.b - ode.b).abs());
        }
    }
    // one million paths reused across the whole (g, t) grid; the finer step
    // keeps the Euler discretization bias well under the Monte Carlo band
    let n_paths = 1_000_000u64;
    let dt = 1.0 / 500.0;
    let mut z_sums = vec![[0.0f64; 3]; 0];
    z_sums.resize(n_paths as usize, [0.0; 3]);
    for idx in 0..n_paths {
        let mut rng = path_rng(505, idx);
        let path = simulate_y_path(&p, 10.0, dt, &mut rng);
        z_sums[idx as usize] = [path.z_at(1.0), path.z_at(5.0), path.z_at(10.0)];
    }
    let mut worst_sigma = 0.0f64;
    for &g in &gs {
        for (k, &t) in ts.iter().enumerate() {
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for z in &z_sums {
                let v = (-g * z[k]).exp();
                sum += v;
                sumsq += v * v;
            }
            let mean = sum / n_paths as f64;
            let var = (sumsq / n_paths as f64 - mean * mean).max(0.0);
            let se = (var / n_paths as f64).sqrt();
            let analytic = expectation(&p, g, t).unwrap();
            // discretization of the integral biases the estimate by O(dt);
            // the 3-sigma band is what the criterion pins
            let sigmas = (mean - analytic).abs() / se.max(1e-12);
            worst_sigma = worst_sigma.max(sigmas);
        }
    }
    let pass = worst_abs <= 1e-8 && worst_sigma <= 3.0;
    assert!(
        verdict(
            "5 (AJD closed form vs Riccati <=1e-8; vs MC at 1e6 paths within 3 s.e.)",
            pass,
            &format!("worst |closed-ODE| {worst_abs:.2e}, worst MC gap {worst_sigma:.2} s.e.")
        ),
        "criterion 5 failed"
    );
}

// ---------------------------------------------------------------------------
// criterion 6: two-obligor analytics vs MC and mode location
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_two_obligor() {
    let lambda = 0.9;
    let spec = ContagionSpec::hcm(vec![lambda; 2], lambda, 0.0).unwrap();
    let t = 0.8;
    let n_paths = 1_000_000u64;
    let mut counts = [0u64; 3];
    for idx in 0..n_paths {
        let mut rng = path_rng(606, idx);
        let path = deterministic_path(1.0, t);
        let s = simulate_defaults(&spec, &path, &mut rng);
        counts[s.count_at(t)] += 1;
    }
    let n = n_paths as f64;
    let p_single = (-lambda * t).exp() - (-2.0 * lambda * t).exp();
    let expected = [
        (-2.0 * lambda * t).exp(),
        2.0 * p_single,
        1.0 - 2.0 * p_single - (-2.0 * lambda * t).exp(),
    ];
    let mut worst_sigma = 0.0f64;
    for (got, want) in counts.iter().zip(expected) {
        let phat = *got as f64 / n;
        let se = (want * (1.0 - want) / n).sqrt();
        worst_sigma = worst_sigma.max((phat - want).abs() / se);
    }
    // numeric argmax of P[X = {1}] over a z-grid
    let policy = PrecisionPolicy::with_bits(256);
    let empty = ObligorSet::empty(2);
    let one = ObligorSet::from_members(2, &[1]).unwrap();
    let step = 0.005;
    let mut best = (0.0, 0.0);
    for k in 1..1000 {
        let z = k as f64 * step;
        let p = kernel_factorized(&spec, &empty, &one, z, &policy).unwrap();
        if p > best.1 {
            best = (z, p);
        }
    }
    let mode_gap = (best.0 - two_obligor_mode(lambda).unwrap()).abs();
    let pass = worst_sigma <= 3.0 && mode_gap <= step;
    assert!(
        verdict(
            "6 (two-obligor MC within 3 s.e. at 1e6 paths; argmax at ln2/lambda within grid step)",
            pass,
            &format!("worst MC gap {worst_sigma:.2} s.e.; mode gap {mode_gap:.4} (step {step})")
        ),
        "criterion 6 failed"
    );
}

// ---------------------------------------------------------------------------
// criterion 7: martingale property of the compensated indicators
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_martingale_property() {
    let n = 6;
    let mut lcg = Lcg(707);
    let beta: Vec<f64> = (0..n).map(|_| lcg.range(0.05, 0.4)).collect();
    let spec = ContagionSpec::hcm(beta, 0.12, -0.07).unwrap();
    let factor = Factor::Ajd(base_ajd());
    let grid = [0.5, 1.0, 1.5, 2.0];
    let mut worst = (0.0f64, 1.0f64);
    for case in 0..10 {
        // random nonempty target set
        let mut members = Vec::new();
        for i in 1..=n {
            if lcg.next() < 0.5 {
                members.push(i);
            }
        }
        if members.is_empty() {
            members.push(1 + (case % n));
        }
        let f = ObligorSet::from_members(n, &members).unwrap();
        let (mean, se) =
            martingale_check(&spec, &factor, &f, &grid, 100_000, 1.0 / 250.0, 700 + case as u64);
        if mean / se.max(1e-12) > worst.0 / worst.1 {
            worst = (mean, se.max(1e-12));
        }
    }
    let sigmas = worst.0 / worst.1;
    let pass = sigmas <= 3.0;
    assert!(
        verdict(
            "7 (compensated indicator mean within 3 s.e. of 0; N=6, 1e5 paths, 10 sets)",
            pass,
            &format!("worst |mean| {:.3e} at s.e. {:.3e} ({sigmas:.2} s.e.)", worst.0, worst.1)
        ),
        "criterion 7 failed"
    );
}

// ---------------------------------------------------------------------------
// criteria 8-10: market data (CDX.NA.HY, 5/11/2007)
// ---------------------------------------------------------------------------

fn cdx_5y_quotes() -> QuoteSet {
    QuoteSet {
        maturity: 5.0,
        n_obligors: 100,
        recovery: 0.4,
        tranches: vec![
            Quote { lo: 0.0, hi: 0.10, kind: QuoteKind::UpfrontPct, bid: 70.50, ask: 70.75 },
            Quote { lo: 0.10, hi: 0.15, kind: QuoteKind::UpfrontPct, bid: 34.25, ask: 34.50 },
            Quote { lo: 0.15, hi: 0.25, kind: QuoteKind::RunningBp, bid: 316.0, ask: 319.0 },
            Quote { lo: 0.25, hi: 0.35, kind: QuoteKind::RunningBp, bid: 79.0, ask: 81.0 },
        ],
        index_bid: 262.85,
        index_ask: 263.10,
    }
}

/// Published 5Y fitted vector (a0, rho, delta, kappa, theta, sigma, mu, l, y0).
const PUBLISHED_5Y: [f64; 9] = [1.135, 0.00258, 0.0149, 0.958, 0.680, 0.125, 2.380, 0.236, 0.998];

#[test]
fn criterion_08_published_vector_reproduces_model_column() {
    // The published fitted vector cannot regenerate its published model
    // quotes under this intensity family; asserted as stated, expected red.
    let conv = MarketConvention {
        precision: PrecisionPolicy::with_bits(512),
        ..MarketConvention::default()
    };
    let model =
        contagion_core::calibrate::model_quotes(&PUBLISHED_5Y, &cdx_5y_quotes(), &conv).unwrap();
    let column = [66.70, 32.89, 337.72, 78.82, 248.00];
    let worst = model
        .iter()
        .zip(column)
        .map(|(m, t)| (m / t - 1.0).abs())
        .fold(0.0f64, f64::max);
    let pass = worst <= 0.05;
    assert!(
        verdict(
            "8 (published 5Y vector reproduces its published model quotes, +-5%)",
            pass,
            &format!("model {model:.2?} vs column {column:?}, worst rel {worst:.3}")
        ),
        "criterion 8 failed: the published vector does not reproduce its published quotes under this intensity family"
    );
}

fn run_calibration(quotes_file: &str, out: &str) -> (f64, f64, f64) {
    let root = repo_root();
    let out_dir = root.join("target").join(out);
    let t0 = Instant::now();
    let (code, err) = run_cmd(&[
        "calibrate",
        "configs/cdx_calibration.toml",
        quotes_file,
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--threads",
        "1",
    ]);
    assert_eq!(code, 0, "calibrate failed: {err}");
    let wall = t0.elapsed().as_secs_f64();
    let cal = read_json(&out_dir.join("calibration.json"));
    (
        cal["aape_pct"].as_f64().unwrap(),
        cal["objective"].as_f64().unwrap(),
        wall,
    )
}

#[test]
fn criterion_09_calibration_runs() {
    let (aape_5y, obj_5y, wall_5y) = run_calibration("data/cdx_na_hy_5y.csv", "acc9_5y");
    let p1 = verdict(
        "9a (5Y calibration AAPE <= 8%, <=30min, 8 starts)",
        aape_5y <= 8.0 && wall_5y <= 1800.0,
        &format!("AAPE {aape_5y:.2}% (objective {obj_5y:.4}), wall {wall_5y:.0}s"),
    );
    let (aape_joint, obj_joint, wall_joint) = run_calibration("data/cdx_na_hy_joint.csv", "acc9_joint");
    let p2 = verdict(
        "9b (joint 5Y+7Y calibration AAPE <= 8%, <=30min, 8 starts)",
        aape_joint <= 8.0 && wall_joint <= 1800.0,
        &format!("AAPE {aape_joint:.2}% (objective {obj_joint:.4}), wall {wall_joint:.0}s"),
    );
    assert!(p1 && p2, "criterion 9 failed");
}

#[test]
fn criterion_10_implied_rho_smile() {
    // market quotes with all non-rho parameters frozen at the published
    // 5Y vector
    let conv = MarketConvention {
        precision: PrecisionPolicy::with_bits(512),
        ..MarketConvention::default()
    };
    let qs = cdx_5y_quotes();
    let bounds = CalibrationBox::default();
    let mut column = Vec::new();
    for k in 0..qs.n_instruments() {
        column.push(implied_rho(&PUBLISHED_5Y, &qs, k, &bounds, &conv).unwrap());
    }
    let max = column.iter().cloned().fold(f64::MIN, f64::max);
    let min = column.iter().cloned().fold(f64::MAX, f64::min);
    let non_constant = max / min > 1.5;
    let ordering = column[1] < column[0]; // junior mezzanine below equity
    let band = (column[0] / 0.0027 - 1.0).abs() <= 0.25;
    let pass = non_constant && ordering && band;
    assert!(
        verdict(
            "10 (implied-rho smile: non-constant, [10,15] < equity, equity within +-25% of 0.0027)",
            pass,
            &format!(
                "column {column:.5?}; max/min {:.2}, ordering {}, equity band {}",
                max / min,
                ordering,
                band
            )
        ),
        "criterion 10 failed (level band blocked by the same inconsistency as criterion 8)"
    );
}

// ---------------------------------------------------------------------------
// criterion 11: attachment/detachment times
// ---------------------------------------------------------------------------

#[test]
fn criterion_11_attach_detach_times() {
    let n = 125;
    let spec = ContagionSpec::hcm_uniform(n, 0.35, 0.05, -0.008).unwrap();
    let deck = TrancheDeck::with_uniform_schedule(
        vec![0.0, 0.03, 0.06, 0.09, 0.12, 0.22, 0.60],
        vec![500.0, 400.0, 300.0, 200.0, 100.0, 0.0],
        5.0,
        0.25,
        0.05,
        RecoveryVector::flat(n, 0.4).unwrap(),
    )
    .unwrap();
    let ad = attach_detach_times(
        &spec,
        &deck,
        &base_ajd(),
        &PrecisionPolicy::default(),
        CountRounding::HalfUp,
        false,
    )
    .unwrap();
    let (attach, detach) = ad.times[0];
    let pass = (0.25..=0.75).contains(&attach)
        && (1.0..=1.5).contains(&detach)
        && ad.detach_counts[0] == 6;
    assert!(
        verdict(
            "11 (equity attach in [0.25,0.75]y, detach in [1.0,1.5]y, count 6, half-up)",
            pass,
            &format!(
                "counts {:?}, equity attach {attach:.3}y detach {detach:.3}y",
                ad.detach_counts
            )
        ),
        "criterion 11 failed"
    );
}

// sanity guard so the expensive price runs above stay meaningful: the base
// config in the repo must match the criterion-1 parameter list
#[test]
fn base_config_pins_criterion_parameters() {
    let text = std::fs::read_to_string(repo_root().join("configs/base_hcm.toml")).unwrap();
    for needle in [
        "n_obligors = 125",
        "a0 = 0.35",
        "rho = 0.05",
        "delta = -0.008",
        "kappa = 0.6",
        "theta = 0.02",
        "sigma = 0.141",
        "jump_intensity = 0.2",
        "jump_mean = 0.1",
        "rate = 0.05",
        "recovery = 0.4",
        "maturity_years = 5.0",
        "payment_interval_years = 0.25",
    ] {
        assert!(text.contains(needle), "base config lost {needle:?}");
    }
}
