//! Calibration of the homogeneous contagion model to market tranche quotes.
//!
//! The parameter vector is `x = (a0, rho, delta, kappa, theta, sigma, mu, l,
//! y0)`, constrained to an open box. The objective is the sum of squared
//! relative quote errors against bid/ask mids (tranches plus the index);
//! joint multi-maturity calibrations sum the per-maturity objectives.
//!
//! The minimizer is a bounded least-squares local search (Levenberg-
//! Marquardt on logit-transformed coordinates with finite-difference
//! Jacobians) restarted from quasi-random interior points; acceptance is on
//! the fitted objective/AAPE, not the optimizer path.

use rayon::prelude::*;

use crate::ajd::AjdParams;
use crate::error::{Error, Result};
use crate::model::{ContagionSpec, RecoveryVector};
use crate::numerics::halton;
use crate::precision::PrecisionPolicy;
use crate::pricing::{
    deck_curves, index_spread, tranche_spread, upfront_rate, IndexConvention, TrancheDeck,
};

pub const N_PARAMS: usize = 9;
pub const PARAM_NAMES: [&str; N_PARAMS] =
    ["a0", "rho", "delta", "kappa", "theta", "sigma", "mu", "l", "y0"];

/// Large objective value standing in for a failed pricing (rate collision or
/// numeric breakdown), keeping the optimizer inside feasible territory.
pub const PENALTY: f64 = 1e6;

/// How one instrument is quoted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuoteKind {
    /// Percent upfront at a fixed running spread.
    UpfrontPct,
    /// Running spread in bp with no upfront.
    RunningBp,
    /// Index running spread in bp.
    IndexBp,
}

#[derive(Debug, Clone, Copy)]
pub struct Quote {
    pub lo: f64,
    pub hi: f64,
    pub kind: QuoteKind,
    pub bid: f64,
    pub ask: f64,
}

impl Quote {
    pub fn mid(&self) -> f64 {
        0.5 * (self.bid + self.ask)
    }
}

/// Market quotes for one maturity: contiguous tranches plus the index.
#[derive(Debug, Clone)]
pub struct QuoteSet {
    pub maturity: f64,
    pub n_obligors: usize,
    pub recovery: f64,
    pub tranches: Vec<Quote>,
    pub index_bid: f64,
    pub index_ask: f64,
}

impl QuoteSet {
    pub fn validate(&self) -> Result<()> {
        if self.tranches.is_empty() {
            return Err(Error::Contract("quote set has no tranches".into()));
        }
        if !(self.maturity > 0.0) {
            return Err(Error::Contract(format!("maturity {} invalid", self.maturity)));
        }
        if !(0.0..1.0).contains(&self.recovery) {
            return Err(Error::Contract(format!("recovery {} invalid", self.recovery)));
        }
        let mut prev_hi = 0.0;
        for (k, q) in self.tranches.iter().enumerate() {
            if (q.lo - prev_hi).abs() > 1e-12 {
                return Err(Error::Contract(format!(
                    "tranche {k} starts at {} but previous ends at {prev_hi}",
                    q.lo
                )));
            }
            if !(q.hi > q.lo) {
                return Err(Error::Contract(format!("tranche {k} has no width")));
            }
            if q.bid > q.ask {
                return Err(Error::Contract(format!(
                    "tranche {k} has bid {} above ask {}",
                    q.bid, q.ask
                )));
            }
            if q.kind == QuoteKind::IndexBp {
                return Err(Error::Contract("index quotes go in index_bid/index_ask".into()));
            }
            prev_hi = q.hi;
        }
        if self.index_bid > self.index_ask {
            return Err(Error::Contract("index bid above ask".into()));
        }
        Ok(())
    }

    /// Bid/ask mids for the tranches followed by the index.
    pub fn mids(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.tranches.iter().map(|q| q.mid()).collect();
        out.push(0.5 * (self.index_bid + self.index_ask));
        out
    }

    pub fn n_instruments(&self) -> usize {
        self.tranches.len() + 1
    }
}

/// Open box constraining the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationBox {
    pub lo: [f64; N_PARAMS],
    pub hi: [f64; N_PARAMS],
}

impl Default for CalibrationBox {
    fn default() -> Self {
        CalibrationBox {
            lo: [0.0, 0.0, -2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            hi: [2.0, 2.0, 1.0, 7.0, 7.0, 0.4, 5.0, 1.0, 10.0],
        }
    }
}

impl CalibrationBox {
    pub fn validate(&self) -> Result<()> {
        for k in 0..N_PARAMS {
            if !(self.lo[k] < self.hi[k]) {
                return Err(Error::Contract(format!(
                    "box for {} is empty: [{}, {}]",
                    PARAM_NAMES[k], self.lo[k], self.hi[k]
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64; N_PARAMS]) -> bool {
        (0..N_PARAMS).all(|k| x[k] > self.lo[k] && x[k] < self.hi[k])
    }
}

/// Run-level settings threaded through pricing during calibration.
#[derive(Debug, Clone)]
pub struct MarketConvention {
    /// Discount rate for the premium/default legs.
    pub rate: f64,
    /// Premium interval in years.
    pub payment_interval: f64,
    /// Fixed running spread (bp) underlying upfront quotes.
    pub upfront_running_bp: f64,
    pub index_convention: IndexConvention,
    pub precision: PrecisionPolicy,
}

impl Default for MarketConvention {
    fn default() -> Self {
        MarketConvention {
            rate: 0.05,
            payment_interval: 0.25,
            upfront_running_bp: 0.0,
            index_convention: IndexConvention::LossNotional,
            precision: PrecisionPolicy::default(),
        }
    }
}

fn split_params(x: &[f64; N_PARAMS]) -> (f64, f64, f64, AjdParams) {
    (
        x[0],
        x[1],
        x[2],
        AjdParams {
            kappa: x[3],
            theta: x[4],
            sigma: x[5],
            jump_mean: x[6],
            jump_intensity: x[7],
            y0: x[8],
        },
    )
}

fn deck_for(qs: &QuoteSet, conv: &MarketConvention) -> Result<TrancheDeck> {
    let mut attach = vec![qs.tranches[0].lo];
    for q in &qs.tranches {
        attach.push(q.hi);
    }
    TrancheDeck::with_uniform_schedule(
        attach,
        vec![0.0; qs.tranches.len()],
        qs.maturity,
        conv.payment_interval,
        conv.rate,
        RecoveryVector::flat(qs.n_obligors, qs.recovery)?,
    )
}

/// Model values of every instrument in the quote set, in the quote's own
/// units (% for upfront quotes, bp for running and index quotes).
pub fn model_quotes(
    x: &[f64; N_PARAMS],
    qs: &QuoteSet,
    conv: &MarketConvention,
) -> Result<Vec<f64>> {
    let (a0, rho, delta, ajd) = split_params(x);
    let spec = ContagionSpec::hcm_uniform(qs.n_obligors, a0, rho, delta)?;
    let deck = deck_for(qs, conv)?;
    let (curve, icurve) = deck_curves(&spec, &deck, &ajd, &conv.precision)?;
    let mut out = Vec::with_capacity(qs.n_instruments());
    for (i, q) in qs.tranches.iter().enumerate() {
        let v = match q.kind {
            QuoteKind::UpfrontPct => {
                upfront_rate(&deck, i + 1, &curve, conv.upfront_running_bp)? * 100.0
            }
            QuoteKind::RunningBp => tranche_spread(&deck, i + 1, &curve)?,
            QuoteKind::IndexBp => unreachable!("validated out"),
        };
        out.push(v);
    }
    out.push(index_spread(&deck, &icurve, conv.index_convention)?);
    Ok(out)
}

/// Relative residuals `(model - mid) / mid` across all quote sets, or a flat
/// penalty vector when pricing fails.
fn residuals(x: &[f64; N_PARAMS], quote_sets: &[QuoteSet], conv: &MarketConvention) -> Vec<f64> {
    let m: usize = quote_sets.iter().map(|qs| qs.n_instruments()).sum();
    let mut out = Vec::with_capacity(m);
    for qs in quote_sets {
        match model_quotes(x, qs, conv) {
            Ok(model) => {
                for (v, mid) in model.iter().zip(qs.mids()) {
                    out.push((v - mid) / mid);
                }
            }
            Err(_) => {
                return vec![(PENALTY / m as f64).sqrt(); m];
            }
        }
    }
    out
}

/// Sum of squared relative quote errors; `PENALTY` if pricing fails at `x`.
pub fn objective(x: &[f64; N_PARAMS], quote_sets: &[QuoteSet], conv: &MarketConvention) -> f64 {
    residuals(x, quote_sets, conv).iter().map(|r| r * r).sum()
}

/// Average absolute percentage error (in percent).
pub fn aape(model: &[f64], mids: &[f64]) -> Result<f64> {
    if model.len() != mids.len() {
        return Err(Error::Contract("aape: length mismatch".into()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (m, q) in model.iter().zip(mids) {
        if *q == 0.0 {
            continue; // zero mid carries no relative information
        }
        sum += ((m - q) / q).abs();
        n += 1;
    }
    if n == 0 {
        return Err(Error::Contract("aape: all mids are zero".into()));
    }
    Ok(sum / n as f64 * 100.0)
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub x_hat: [f64; N_PARAMS],
    pub objective: f64,
    /// AAPE in percent across all instruments of all quote sets.
    pub aape: f64,
    /// Model values per quote set at the fitted vector.
    pub model_quotes: Vec<Vec<f64>>,
    /// Per-start iteration log: (start, iteration, objective).
    pub trace: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct CalibrationOptions {
    pub starts: usize,
    pub seed: u64,
    pub max_iterations: usize,
    /// Finite-difference step for the Jacobian.
    pub fd_step: f64,
    /// Stop once the objective improves by less than this.
    pub objective_tol: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            starts: 8,
            seed: 7,
            max_iterations: 40,
            fd_step: 1.49e-10,
            objective_tol: 1e-15,
        }
    }
}

// logit transform mapping the open box onto all of R^9
fn to_unconstrained(x: &[f64; N_PARAMS], b: &CalibrationBox) -> [f64; N_PARAMS] {
    let mut u = [0.0; N_PARAMS];
    for k in 0..N_PARAMS {
        let w = ((x[k] - b.lo[k]) / (b.hi[k] - b.lo[k])).clamp(1e-12, 1.0 - 1e-12);
        u[k] = (w / (1.0 - w)).ln();
    }
    u
}

fn to_box(u: &[f64; N_PARAMS], b: &CalibrationBox) -> [f64; N_PARAMS] {
    let mut x = [0.0; N_PARAMS];
    for k in 0..N_PARAMS {
        // clamp so saturated coordinates still land strictly inside
        let s = (1.0 / (1.0 + (-u[k]).exp())).clamp(1e-9, 1.0 - 1e-9);
        x[k] = b.lo[k] + (b.hi[k] - b.lo[k]) * s;
    }
    x
}

struct LmRun {
    x: [f64; N_PARAMS],
    objective: f64,
    trace: Vec<(usize, f64)>,
}

fn lm_minimize(
    u0: [f64; N_PARAMS],
    b: &CalibrationBox,
    quote_sets: &[QuoteSet],
    conv: &MarketConvention,
    opts: &CalibrationOptions,
) -> LmRun {
    let eval = |u: &[f64; N_PARAMS]| residuals(&to_box(u, b), quote_sets, conv);
    let sq = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let mut u = u0;
    let mut r = eval(&u);
    let mut obj = sq(&r);
    // coarse presearch along the overall intensity scale (a0): quote levels
    // are extremely elastic in it, so centering the scale first drops most
    // starts into a workable basin
    for offset in [-3.0, -2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 3.0] {
        let mut ut = u0;
        ut[0] += offset;
        let rt = eval(&ut);
        let ot = sq(&rt);
        if ot < obj {
            obj = ot;
            u = ut;
            r = rt;
        }
    }
    let mut lambda = 1e-3;
    let mut trace = vec![(0usize, obj)];
    let m = r.len();
    for iter in 1..=opts.max_iterations {
        // forward-difference Jacobian in the unconstrained coordinates
        let mut jac = vec![vec![0.0; N_PARAMS]; m];
        for k in 0..N_PARAMS {
            let mut up = u;
            let h = opts.fd_step.max(1e-12) * (1.0 + u[k].abs());
            up[k] += h;
            let rp = eval(&up);
            for (i, row) in jac.iter_mut().enumerate() {
                row[k] = (rp[i] - r[i]) / h;
            }
        }
        // normal equations with LM damping
        let mut jtj = [[0.0; N_PARAMS]; N_PARAMS];
        let mut jtr = [0.0; N_PARAMS];
        for row in 0..m {
            for a in 0..N_PARAMS {
                jtr[a] += jac[row][a] * r[row];
                for bb in a..N_PARAMS {
                    jtj[a][bb] += jac[row][a] * jac[row][bb];
                }
            }
        }
        for a in 0..N_PARAMS {
            for bb in 0..a {
                jtj[a][bb] = jtj[bb][a];
            }
        }
        let mut improved = false;
        let mut resets = 0;
        for _attempt in 0..24 {
            let mut lhs = jtj;
            for (a, row) in lhs.iter_mut().enumerate() {
                row[a] += lambda * jtj[a][a].max(1e-12);
            }
            let rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
            if let Some(step) = solve9(&lhs, &rhs) {
                let mut ut = u;
                for k in 0..N_PARAMS {
                    ut[k] += step[k];
                }
                let rt = eval(&ut);
                let ot = sq(&rt);
                if ot < obj {
                    u = ut;
                    r = rt;
                    let gain = obj - ot;
                    obj = ot;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = true;
                    trace.push((iter, obj));
                    if gain < opts.objective_tol {
                        return LmRun { x: to_box(&u, b), objective: obj, trace };
                    }
                    break;
                }
            }
            lambda *= 4.0;
            if lambda > 1e10 {
                // stalled at heavy damping: one fresh sweep from low damping
                if resets == 0 {
                    resets = 1;
                    lambda = 1e-4;
                } else {
                    break;
                }
            }
        }
        if !improved {
            break;
        }
    }
    LmRun {
        x: to_box(&u, b),
        objective: obj,
        trace,
    }
}

/// Dense 9x9 solve by Gaussian elimination with partial pivoting.
fn solve9(a: &[[f64; N_PARAMS]; N_PARAMS], rhs: &[f64]) -> Option<[f64; N_PARAMS]> {
    let n = N_PARAMS;
    let mut m = *a;
    let mut x: [f64; N_PARAMS] = rhs.try_into().ok()?;
    for col in 0..n {
        let mut piv = col;
        for row in col + 1..n {
            if m[row][col].abs() > m[piv][col].abs() {
                piv = row;
            }
        }
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        x.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for c in col..n {
                m[row][c] -= f * m[col][c];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        for row in 0..col {
            let f = m[row][col] / m[col][col];
            x[row] -= f * x[col];
        }
        x[col] /= m[col][col];
    }
    Some(x)
}

/// Best of `opts.starts` bounded local-minimizer runs from quasi-random
/// interior starts. Fails only if every start ends at the penalty plateau.
pub fn calibrate(
    quote_sets: &[QuoteSet],
    bounds: &CalibrationBox,
    conv: &MarketConvention,
    opts: &CalibrationOptions,
) -> Result<CalibrationResult> {
    bounds.validate()?;
    if quote_sets.is_empty() {
        return Err(Error::Contract("no quote sets to calibrate against".into()));
    }
    for qs in quote_sets {
        qs.validate()?;
    }
    let starts: Vec<usize> = (0..opts.starts.max(1)).collect();
    let runs: Vec<(usize, LmRun)> = starts
        .par_iter()
        .map(|&s| {
            // quasi-random interior start, offset by the seed
            let h = halton(opts.seed.wrapping_mul(131).wrapping_add(s as u64 + 1), N_PARAMS);
            let mut x0 = [0.0; N_PARAMS];
            for k in 0..N_PARAMS {
                x0[k] = bounds.lo[k] + (bounds.hi[k] - bounds.lo[k]) * (0.05 + 0.90 * h[k]);
            }
            let u0 = to_unconstrained(&x0, bounds);
            (s, lm_minimize(u0, bounds, quote_sets, conv, opts))
        })
        .collect();
    let best = runs
        .iter()
        .min_by(|(sa, a), (sb, b)| {
            a.objective
                .partial_cmp(&b.objective)
                .unwrap()
                .then(sa.cmp(sb))
        })
        .expect("at least one start");
    if best.1.objective >= 0.999 * PENALTY {
        let detail: Vec<String> = runs
            .iter()
            .map(|(s, r)| format!("start {s}: objective {:.3e}", r.objective))
            .collect();
        return Err(Error::CalibrationFailed(detail.join("; ")));
    }
    let x_hat = best.1.x;
    let model_quotes: Vec<Vec<f64>> = quote_sets
        .iter()
        .map(|qs| model_quotes(&x_hat, qs, conv))
        .collect::<Result<_>>()?;
    let all_model: Vec<f64> = model_quotes.iter().flatten().copied().collect();
    let all_mids: Vec<f64> = quote_sets.iter().flat_map(|qs| qs.mids()).collect();
    let mut trace = Vec::new();
    for (s, run) in &runs {
        for (iter, obj) in &run.trace {
            trace.push((*s, *iter, *obj));
        }
    }
    Ok(CalibrationResult {
        x_hat,
        objective: best.1.objective,
        aape: aape(&all_model, &all_mids)?,
        model_quotes,
        trace,
    })
}

/// Implied contagion rate of one instrument: the rho at which the model
/// value matches the market mid, all other parameters frozen. Instrument
/// indices follow `mids()` order (tranches then index).
pub fn implied_rho(
    x_fixed: &[f64; N_PARAMS],
    qs: &QuoteSet,
    instrument: usize,
    bounds: &CalibrationBox,
    conv: &MarketConvention,
) -> Result<f64> {
    qs.validate()?;
    if instrument >= qs.n_instruments() {
        return Err(Error::Contract(format!(
            "instrument {instrument} out of range ({} available)",
            qs.n_instruments()
        )));
    }
    let target = qs.mids()[instrument];
    let value_at = |rho: f64| -> Result<f64> {
        let mut x = *x_fixed;
        x[1] = rho;
        Ok(model_quotes(&x, qs, conv)?[instrument])
    };
    let gap = |rho: f64| -> Result<f64> { Ok(value_at(rho)? - target) };
    // expand a bracket around the frozen rho
    let rho0 = x_fixed[1].clamp(bounds.lo[1] + 1e-12, bounds.hi[1] - 1e-12);
    let g0 = gap(rho0)?;
    if g0 == 0.0 {
        return Ok(rho0);
    }
    let (mut lo, mut hi, mut g_lo, mut g_hi) = (rho0, rho0, g0, g0);
    for _ in 0..60 {
        if g_lo.signum() != g_hi.signum() {
            break;
        }
        let mut moved = false;
        if g_hi < 0.0 {
            // model too cheap: push rho up
            let next = (hi * 2.0).min(bounds.hi[1] * (1.0 - 1e-9));
            if next > hi {
                lo = hi;
                g_lo = g_hi;
                hi = next;
                g_hi = gap(hi)?;
                moved = true;
            }
        } else {
            let next = (lo * 0.5).max(bounds.lo[1] + 1e-12);
            if next < lo {
                hi = lo;
                g_hi = g_lo;
                lo = next;
                g_lo = gap(lo)?;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    if g_lo.signum() == g_hi.signum() {
        return Err(Error::NoRoot(format!(
            "no sign change for instrument {instrument} within rho in [{:.3e}, {:.3e}]",
            bounds.lo[1], bounds.hi[1]
        )));
    }
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        let gm = gap(mid)?;
        if gm == 0.0 {
            return Ok(mid);
        }
        if gm.signum() == g_lo.signum() {
            lo = mid;
            g_lo = gm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toy_quote_set(n: usize, maturity: f64) -> QuoteSet {
        QuoteSet {
            maturity,
            n_obligors: n,
            recovery: 0.4,
            tranches: vec![
                Quote { lo: 0.0, hi: 0.10, kind: QuoteKind::UpfrontPct, bid: 0.0, ask: 0.0 },
                Quote { lo: 0.10, hi: 0.25, kind: QuoteKind::RunningBp, bid: 0.0, ask: 0.0 },
            ],
            index_bid: 0.0,
            index_ask: 0.0,
        }
    }

    fn fast_convention() -> MarketConvention {
        MarketConvention {
            precision: PrecisionPolicy::with_bits(512),
            ..MarketConvention::default()
        }
    }

    fn with_quotes(mut qs: QuoteSet, values: &[f64]) -> QuoteSet {
        for (q, v) in qs.tranches.iter_mut().zip(values) {
            q.bid = *v;
            q.ask = *v;
        }
        qs.index_bid = values[qs.tranches.len()];
        qs.index_ask = values[qs.tranches.len()];
        qs
    }

    #[test]
    fn aape_arithmetic() {
        assert_eq!(aape(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        // one instrument off by 5%, four exact -> 1%
        let model = [1.05, 1.0, 1.0, 1.0, 1.0];
        let mids = [1.0; 5];
        assert_relative_eq!(aape(&model, &mids).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn objective_arithmetic() {
        let x: [f64; N_PARAMS] = [0.4, 0.05, -0.05, 0.6, 0.02, 0.141, 0.1, 0.2, 1.0];
        let conv = fast_convention();
        let base = toy_quote_set(10, 2.0);
        let model = model_quotes(&x, &base, &conv).unwrap();
        // model == mid for every instrument -> 0
        let qs = with_quotes(base.clone(), &model);
        assert!(objective(&x, &[qs.clone()], &conv) < 1e-24);
        // one quote off by +10%, others exact -> 0.01
        let mut bumped = model.clone();
        bumped[0] /= 1.10;
        let qs2 = with_quotes(base, &bumped);
        let obj = objective(&x, &[qs2], &conv);
        assert_relative_eq!(obj, 0.01, max_relative = 1e-9);
    }

    #[test]
    fn penalty_on_pricing_failure() {
        // delta = 0 collides the homogeneous ladder
        let x: [f64; N_PARAMS] = [0.4, 0.05, 0.0, 0.6, 0.02, 0.141, 0.1, 0.2, 1.0];
        let conv = fast_convention();
        let qs = with_quotes(toy_quote_set(10, 2.0), &[50.0, 100.0, 100.0]);
        let obj = objective(&x, &[qs], &conv);
        assert!(obj > 0.999 * PENALTY, "obj = {obj}");
    }

    #[test]
    fn box_logit_round_trip() {
        let b = CalibrationBox::default();
        let x: [f64; N_PARAMS] = [1.135, 0.00258, 0.0149, 0.958, 0.680, 0.125, 2.380, 0.236, 0.998];
        let u = to_unconstrained(&x, &b);
        let back = to_box(&u, &b);
        for k in 0..N_PARAMS {
            assert_relative_eq!(back[k], x[k], max_relative = 1e-9);
        }
        assert!(b.contains(&x));
    }

    #[test]
    fn synthetic_round_trip_recovers_quotes() {
        // generate quotes from a known interior vector, then refit
        let x_true: [f64; N_PARAMS] = [0.5, 0.04, -0.10, 0.8, 0.05, 0.15, 0.2, 0.3, 1.2];
        let conv = fast_convention();
        let base = toy_quote_set(12, 2.0);
        let truth = model_quotes(&x_true, &base, &conv).unwrap();
        let qs = with_quotes(base, &truth);
        let opts = CalibrationOptions {
            starts: 3,
            max_iterations: 60,
            seed: 11,
            ..CalibrationOptions::default()
        };
        let fit = calibrate(&[qs], &CalibrationBox::default(), &conv, &opts).unwrap();
        // quote recovery is asserted; parameter identifiability is not
        assert!(fit.objective < 1e-6, "objective {:.3e}", fit.objective);
        for (m, t) in fit.model_quotes[0].iter().zip(&truth) {
            assert_relative_eq!(m, t, max_relative = 2e-3);
        }
        assert!(CalibrationBox::default().contains(&fit.x_hat));
        assert!(!fit.trace.is_empty());
    }

    #[test]
    fn implied_rho_fixed_point_and_round_trip() {
        let x: [f64; N_PARAMS] = [0.5, 0.04, -0.10, 0.8, 0.05, 0.15, 0.2, 0.3, 1.2];
        let conv = fast_convention();
        let base = toy_quote_set(12, 2.0);
        let truth = model_quotes(&x, &base, &conv).unwrap();
        let qs = with_quotes(base, &truth);
        let b = CalibrationBox::default();
        // market equals model at rho0: the root is rho0 itself
        for instrument in 0..3 {
            let r = implied_rho(&x, &qs, instrument, &b, &conv).unwrap();
            assert_relative_eq!(r, x[1], epsilon = 2e-8);
        }
        // perturb one quote upward: implied rho moves up and reprices it
        let mut richer = truth.clone();
        richer[2] *= 1.3;
        let qs2 = with_quotes(toy_quote_set(12, 2.0), &richer);
        let r = implied_rho(&x, &qs2, 2, &b, &conv).unwrap();
        assert!(r > x[1]);
        let mut x2 = x;
        x2[1] = r;
        let reprice = model_quotes(&x2, &qs2, &conv).unwrap()[2];
        // within 2x the root tolerance propagated through the local slope
        let slope = {
            let mut xp = x2;
            xp[1] += 1e-6;
            (model_quotes(&xp, &qs2, &conv).unwrap()[2] - reprice) / 1e-6
        };
        assert!((reprice - richer[2]).abs() <= 2.0 * 1e-8 * slope.abs() + 1e-9);
    }

    #[test]
    fn no_root_when_quote_unreachable() {
        let x: [f64; N_PARAMS] = [0.5, 0.04, -0.10, 0.8, 0.05, 0.15, 0.2, 0.3, 1.2];
        let conv = fast_convention();
        // an absurd index quote no rho in the box can reach
        let mut qs = toy_quote_set(12, 2.0);
        qs.tranches[0].bid = 50.0;
        qs.tranches[0].ask = 50.0;
        qs.tranches[1].bid = 100.0;
        qs.tranches[1].ask = 100.0;
        qs.index_bid = 5e5;
        qs.index_ask = 5e5;
        let err = implied_rho(&x, &qs, 2, &CalibrationBox::default(), &conv).unwrap_err();
        assert!(matches!(err, Error::NoRoot(_)));
    }

    #[test]
    fn objective_is_reproducible() {
        let x: [f64; N_PARAMS] = [0.7, 0.03, -0.2, 0.9, 0.1, 0.2, 0.3, 0.25, 1.5];
        let conv = fast_convention();
        let qs = with_quotes(toy_quote_set(10, 2.0), &[40.0, 200.0, 150.0]);
        let a = objective(&x, &[qs.clone()], &conv);
        let b = objective(&x, &[qs], &conv);
        assert_eq!(a, b);
    }
}
