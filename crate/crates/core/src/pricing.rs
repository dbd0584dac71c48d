//! Tranche loss functionals, expected tranche losses and spreads.
//!
//! For the homogeneous and near-neighbor models every ordering of defaults
//! sees the same ladder of aggregate loads `a_0, a_1, ..., a_N` (with
//! `a_N = 0`), so the subset/permutation sum of the expected tranche loss
//! collapses to
//!
//! ```text
//! E[L^(i)(X_t)] = sum_{n >= floor(V_{i-1})+1} I^(i)(n) * a_0 * prod_{k<n} a_k
//!                 * sum_{j<=n} alpha^(n)_j(a_0..a_n) * E[e^{-a_j int_0^t Y}]
//! ```
//!
//! The `j = N` term carries a zero rate and weight one; its coefficient
//! equals `lim_{t->inf} E[L^(i)] = I^(i)(N)` analytically, and is computed
//! explicitly through `alpha^(N)_N` rather than pinned to a constant. The
//! factorial-sized products and alternating alphas force every sum onto
//! extended precision; the evaluator tracks how many bits each mixture
//! cancelled and re-runs at doubled precision if headroom gets thin.

use crate::ajd::{AjdParams, AjdReal};
use crate::error::{Error, Result};
use crate::hypoexp::AlphaLadder;
use crate::model::{ContagionKind, ContagionSpec, ObligorSet, RecoveryVector};
use crate::numerics::bisect_crossing;
use crate::precision::{CancelSum, PrecisionPolicy, Real};

/// When a mixture leaves fewer than this many accurate bits, the evaluation
/// is redone at doubled precision.
const MIN_HEADROOM_BITS: i64 = 96;
const MAX_ESCALATED_BITS: usize = 1 << 15;
/// Brute-force enumeration bound for the general expected-loss oracle.
pub const GENERAL_ORACLE_LIMIT: usize = 8;

/// How the default leg and premium notional treat losses inside a period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DefaultTiming {
    /// Defaults sit at the start of each interval (the convention behind the
    /// spread formula used throughout).
    #[default]
    IntervalStart,
    Midpoint,
    IntervalEnd,
}

/// Premium base for the index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IndexConvention {
    /// Premium accrues on notional minus accumulated loss.
    #[default]
    LossNotional,
    /// Premium accrues on surviving names' notional.
    SurvivalNotional,
}

/// Rounding rule mapping fractional detachment counts to obligor counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CountRounding {
    #[default]
    HalfUp,
    Ceil,
    Floor,
}

impl CountRounding {
    pub fn apply(&self, v: f64) -> usize {
        match self {
            CountRounding::HalfUp => (v + 0.5).floor() as usize,
            CountRounding::Ceil => v.ceil() as usize,
            CountRounding::Floor => v.floor() as usize,
        }
    }
}

/// CDO capital structure plus payment schedule and discounting.
#[derive(Debug, Clone)]
pub struct TrancheDeck {
    /// Attachment points `0 = p_0 < ... < p_K <= 1`.
    pub attach: Vec<f64>,
    /// Upfront rates per tranche, as fractions of tranche width.
    pub upfront: Vec<f64>,
    /// Maturity in years.
    pub maturity: f64,
    /// Premium dates `0 = t_0 < ... < t_m = T`.
    pub pay_times: Vec<f64>,
    /// Continuously compounded risk-free rate.
    pub rate: f64,
    pub recovery: RecoveryVector,
    pub timing: DefaultTiming,
}

impl TrancheDeck {
    pub fn new(
        attach: Vec<f64>,
        upfront: Vec<f64>,
        maturity: f64,
        pay_times: Vec<f64>,
        rate: f64,
        recovery: RecoveryVector,
    ) -> Result<Self> {
        if attach.len() < 2 {
            return Err(Error::Contract("need at least one tranche".into()));
        }
        if attach[0] != 0.0 {
            return Err(Error::Contract("first attachment point must be 0".into()));
        }
        if !attach.windows(2).all(|w| w[0] < w[1]) || *attach.last().unwrap() > 1.0 {
            return Err(Error::Contract(
                "attachment points must increase strictly and stay <= 1".into(),
            ));
        }
        if upfront.len() != attach.len() - 1 {
            return Err(Error::Contract(format!(
                "{} upfront rates for {} tranches",
                upfront.len(),
                attach.len() - 1
            )));
        }
        if pay_times.is_empty() || pay_times[0] != 0.0 {
            return Err(Error::Contract("payment grid must start at t_0 = 0".into()));
        }
        if !pay_times.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Contract("payment grid must increase strictly".into()));
        }
        let last = *pay_times.last().unwrap();
        if (last - maturity).abs() > 1e-9 {
            return Err(Error::Contract(format!(
                "payment grid must end at maturity: {last} vs {maturity}"
            )));
        }
        if !rate.is_finite() {
            return Err(Error::Domain(format!("rate {rate} invalid")));
        }
        Ok(TrancheDeck {
            attach,
            upfront,
            maturity,
            pay_times,
            rate,
            recovery,
            timing: DefaultTiming::IntervalStart,
        })
    }

    /// Deck on a uniform premium grid with spacing `delta` years; upfronts
    /// given in basis points.
    pub fn with_uniform_schedule(
        attach: Vec<f64>,
        upfront_bp: Vec<f64>,
        maturity: f64,
        delta: f64,
        rate: f64,
        recovery: RecoveryVector,
    ) -> Result<Self> {
        if !(delta > 0.0) || !(maturity > 0.0) {
            return Err(Error::Contract(format!(
                "need positive maturity and spacing, got T={maturity}, delta={delta}"
            )));
        }
        let m = (maturity / delta).round() as usize;
        if m == 0 || (m as f64 * delta - maturity).abs() > 1e-9 {
            return Err(Error::Contract(format!(
                "maturity {maturity} is not a whole number of {delta}-year periods"
            )));
        }
        let pay_times: Vec<f64> = (0..=m).map(|k| k as f64 * delta).collect();
        let upfront = upfront_bp.into_iter().map(|u| u * 1e-4).collect();
        Self::new(attach, upfront, maturity, pay_times, rate, recovery)
    }

    pub fn n_tranches(&self) -> usize {
        self.attach.len() - 1
    }

    /// Width `p_i - p_{i-1}` of 1-based tranche `i`.
    pub fn width(&self, i: usize) -> f64 {
        self.attach[i] - self.attach[i - 1]
    }

    /// Detachment count boundary `V_i = N p_i / (1 - R)` (homogeneous R).
    pub fn v_boundary(&self, i: usize, n_obligors: usize) -> Result<f64> {
        let r = self.homogeneous_recovery()?;
        Ok(n_obligors as f64 * self.attach[i] / (1.0 - r))
    }

    fn homogeneous_recovery(&self) -> Result<f64> {
        self.recovery.homogeneous().ok_or_else(|| {
            Error::Contract("closed-form pricing requires a homogeneous recovery rate".into())
        })
    }

    fn check_pool(&self, spec: &ContagionSpec) -> Result<()> {
        if self.recovery.len() != spec.n_obligors() {
            return Err(Error::Contract(format!(
                "recovery vector covers {} names, spec has {}",
                self.recovery.len(),
                spec.n_obligors()
            )));
        }
        Ok(())
    }
}

/// Expected tranche losses on the payment grid, per tranche.
#[derive(Debug, Clone)]
pub struct LossCurve {
    pub times: Vec<f64>,
    /// `values[tranche][k]` = expected loss at `times[k]`, fraction of pool
    /// notional.
    pub values: Vec<Vec<f64>>,
}

/// Tranche loss `(L - p_{i-1})^+ - (L - p_i)^+` for defaulted set `F`
/// (1-based tranche index).
pub fn tranche_loss(deck: &TrancheDeck, i: usize, f: &ObligorSet) -> f64 {
    if let Some(r) = deck.recovery.homogeneous() {
        let n = deck.recovery.len();
        return i_weight_sum(deck, i, f.card(), n, r);
    }
    let l = deck.recovery.loss_fraction(f);
    (l - deck.attach[i - 1]).max(0.0) - (l - deck.attach[i]).max(0.0)
}

/// `I^(i)(n)`: tranche-i loss when `n` obligors with common recovery `r`
/// have defaulted.
fn i_weight_sum(deck: &TrancheDeck, i: usize, n_def: usize, n: usize, r: f64) -> f64 {
    let v_lo = n as f64 * deck.attach[i - 1] / (1.0 - r);
    let v_hi = n as f64 * deck.attach[i] / (1.0 - r);
    let nd = n_def as f64;
    (1.0 - r) / n as f64 * ((nd - v_lo).max(0.0) - (nd - v_hi).max(0.0))
}

// ---------------------------------------------------------------------------
// cardinality-ladder closed form (homogeneous and near-neighbor models)
// ---------------------------------------------------------------------------

/// Aggregate-load ladder `a_0..a_N`; both closed-form models are instances.
/// A structurally zero rate absorbs the count chain, so the ladder truncates
/// there (counts beyond it have probability zero); the terminal entry is
/// always the zero rate of the absorbing level.
fn cardinality_ladder(spec: &ContagionSpec, bits: usize) -> Result<Vec<Real>> {
    let n = spec.n_obligors();
    let mut rates = Vec::with_capacity(n + 1);
    let mut a0 = Real::zero(bits);
    for &b in spec.beta() {
        a0 = a0.add(&Real::from_f64(b, bits));
    }
    if a0.is_zero() {
        // no base intensity: the chain never leaves the empty set
        return Ok(vec![Real::zero(bits)]);
    }
    rates.push(a0);
    let mut truncated = false;
    match spec.kind() {
        ContagionKind::Hcm => {
            let rho = spec.rho_hcm().expect("hcm");
            for k in 1..n {
                if rho == 0.0 {
                    truncated = true;
                    break;
                }
                let e = Real::from_f64(-spec.delta(), bits).mul_f64(k as f64).exp();
                let per = e.mul(&Real::from_f64(rho, bits).mul_f64(k as f64));
                rates.push(per.mul_f64((n - k) as f64));
            }
        }
        ContagionKind::Ncm => {
            let (p, q) = spec.ncm_rates().expect("ncm");
            let pq = Real::from_f64(p, bits).add(&Real::from_f64(q, bits));
            for k in 1..n {
                let e = Real::from_f64(-spec.delta(), bits).mul_f64(k as f64).exp();
                rates.push(e.mul(&pq));
            }
        }
        ContagionKind::General => {
            return Err(Error::Contract(
                "closed-form pricing needs an hcm or ncm spec; use the general oracle".into(),
            ));
        }
    }
    let _ = truncated;
    rates.push(Real::zero(bits));
    Ok(rates)
}

/// Per-rate mixture coefficients `C[j] = sum_n weight_i(n) a_0 prod_{k<n} a_k
/// alpha^(n)_j` for a family of count-indexed weight functions. Row `w` of
/// `weights` gives `weight_w(n)` for n = 1..=N.
fn ladder_coefficients(
    rates: &[Real],
    weights: &[Vec<f64>],
    policy: &PrecisionPolicy,
    bits: usize,
) -> Result<Vec<Vec<Real>>> {
    let n = rates.len() - 1;
    let mut shadow = PrecisionPolicy {
        mantissa_bits: bits,
        ..*policy
    };
    shadow.mantissa_bits = bits;
    let mut ladder = AlphaLadder::new(&shadow);
    ladder.push(rates[0].clone())?;
    let a0 = rates[0].clone();
    let mut chain = a0.clone(); // a_0 * prod_{k<n} a_k
    let mut out = vec![vec![Real::zero(bits); n + 1]; weights.len()];
    for count in 1..=n {
        if count >= 2 {
            chain = chain.mul(&rates[count - 1]);
        }
        ladder.push(rates[count].clone())?;
        let coeffs = ladder.coeffs();
        for (w, row) in weights.iter().enumerate() {
            let weight = row[count - 1];
            if weight == 0.0 {
                continue;
            }
            let scale = chain.mul_f64(weight);
            for (j, alpha) in coeffs.iter().enumerate() {
                out[w][j] = out[w][j].add(&scale.mul(alpha));
            }
        }
    }
    Ok(out)
}

/// Evaluates coefficient rows against transform weights, tracking the worst
/// cancellation headroom (bits of mantissa left after the mixture collapse).
fn mix_rows(
    coeffs: &[Vec<Real>],
    transform_grid: &[Vec<Real>],
    n_times: usize,
    bits: usize,
) -> (Vec<Vec<f64>>, i64) {
    let mut worst_headroom = i64::MAX;
    let mut values = Vec::with_capacity(coeffs.len());
    for row in coeffs {
        let mut per_time = Vec::with_capacity(n_times + 1);
        per_time.push(0.0); // t_0 = 0
        for k in 0..n_times {
            let mut sum = CancelSum::new(bits);
            for (j, c) in row.iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                sum.add(&c.mul(&transform_grid[j][k]));
            }
            let cancelled = sum.cancelled_bits();
            if cancelled != i64::MAX {
                worst_headroom = worst_headroom.min(bits as i64 - cancelled);
            }
            per_time.push(sum.value().to_f64());
        }
        values.push(per_time);
    }
    (values, worst_headroom)
}

fn closed_form_values(
    spec: &ContagionSpec,
    ajd: &AjdParams,
    weights: &[Vec<f64>],
    times: &[f64],
    policy: &PrecisionPolicy,
) -> Result<Vec<Vec<f64>>> {
    let mut bits = policy.mantissa_bits;
    loop {
        let rates = cardinality_ladder(spec, bits)?;
        let coeffs = ladder_coefficients(&rates, weights, policy, bits)?;
        let ajd_real = AjdReal::new(ajd, bits)?;
        let grid = ajd_real.exp_integral_grid(&rates, times)?;
        let (values, headroom) = mix_rows(&coeffs, &grid, times.len(), bits);
        if headroom >= MIN_HEADROOM_BITS || bits >= MAX_ESCALATED_BITS {
            if headroom < MIN_HEADROOM_BITS {
                return Err(Error::NumericDomain(format!(
                    "mixture cancellation exhausted {bits}-bit precision (headroom {headroom})"
                )));
            }
            return Ok(values);
        }
        bits *= 2;
    }
}

/// Expected tranche losses for every tranche on the deck's payment grid,
/// using the closed form matching the spec's contagion kind.
pub fn loss_curve_closed_form(
    spec: &ContagionSpec,
    deck: &TrancheDeck,
    ajd: &AjdParams,
    policy: &PrecisionPolicy,
) -> Result<LossCurve> {
    deck.check_pool(spec)?;
    let r = deck.homogeneous_recovery()?;
    let n = spec.n_obligors();
    let weights: Vec<Vec<f64>> = (1..=deck.n_tranches())
        .map(|i| (1..=n).map(|c| i_weight_sum(deck, i, c, n, r)).collect())
        .collect();
    let times = &deck.pay_times[1..];
    let values = closed_form_values(spec, ajd, &weights, times, policy)?;
    Ok(LossCurve {
        times: deck.pay_times.clone(),
        values,
    })
}

fn single_time_loss(
    spec: &ContagionSpec,
    deck: &TrancheDeck,
    tranche: usize,
    t: f64,
    ajd: &AjdParams,
    policy: &PrecisionPolicy,
) -> Result<f64> {
    deck.check_pool(spec)?;
    if tranche == 0 || tranche > deck.n_tranches() {
        return Err(Error::Contract(format!("tranche index {tranche} out of range")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    if !(t > 0.0) {
        return Err(Error::Domain(format!("time {t} must be >= 0")));
    }
    let r = deck.homogeneous_recovery()?;
    let n = spec.n_obligors();
    let weights = vec![(1..=n)
        .map(|c| i_weight_sum(deck, tranche, c, n, r))
        .collect::<Vec<f64>>()];
    let values = closed_form_values(spec, ajd, &weights, &[t], policy)?;
    Ok(values[0][1])
}

/// `E[L^(i)(X_t)]` under the homogeneous contagion model.
pub fn expected_tranche_loss_hcm(
    spec: &ContagionSpec,
    deck: &TrancheDeck,
    tranche: usize,
    t: f64,
    ajd: &AjdParams,
    policy: &PrecisionPolicy,
) -> Result<f64> {
    if spec.kind() != ContagionKind::Hcm {
        return Err(Error::Contract("expected_tranche_loss_hcm needs an hcm spec".into()));
    }
    single_time_loss(spec, deck, tranche, t, ajd, policy)
}

/// `E[L^(i)(X_t)]` under the near-neighbor contagion model.
pub fn expected_tranche_loss_ncm(
    spec: &ContagionSpec,
    deck: &TrancheDeck,
    tranche: usize,
    t: f64,
    ajd: &AjdParams,
    policy: &PrecisionPolicy,
) -> Result<f64> {
    if spec.kind() != ContagionKind::Ncm {
        return Err(Error::Contract("expected_tranche_loss_ncm needs an ncm spec".into()));
    }
    single_time_loss(spec, deck, tranche, t, ajd, policy)
}

// ---------------------------------------------------------------------------
// brute-force oracle: full subset/permutation enumeration
// ---------------------------------------------------------------------------

/// Mixture coefficients per (defaulted set, rate subset) from literal
/// enumeration of every default ordering.
struct EnumeratedMixtures {
    /// coeffs[f_bits limited to usize index] -> (subset mask of rate, coeff)
    coeffs: Vec<Vec<(u32, Real)>>,
    bar_by_mask: Vec<Real>,
}

fn enumerate_paths(spec: &ContagionSpec, policy: &PrecisionPolicy) -> Result<EnumeratedMixtures> {
    let n = spec.n_obligors();
    let bits = policy.mantissa_bits;
    let size = 1usize << n;
    let mut bar_by_mask = Vec::with_capacity(size);
    for mask in 0..size as u32 {
        let set = ObligorSet::from_bits(n, mask as u128);
        bar_by_mask.push(spec.aggregate_load_real(&set, bits));
    }
    let mut coeffs: Vec<Vec<(u32, Real)>> = vec![Vec::new(); size];
    coeffs[0].push((0, Real::one(bits)));

    struct Frame<'s> {
        spec: &'s ContagionSpec,
        bits: usize,
    }
    fn dfs(
        fr: &Frame,
        current: ObligorSet,
        path_sets: &mut Vec<u32>,
        ladder: &AlphaLadder,
        lhat: &Real,
        out: &mut [Vec<(u32, Real)>],
    ) -> Result<()> {
        let survivors: Vec<usize> = current.survivors().collect();
        for i in survivors {
            let load = fr.spec.contagion_load_real(&current, i, fr.bits);
            if load.is_zero() {
                continue;
            }
            let next = current.with(i)?;
            let mut extended = ladder.clone();
            extended.push(fr.spec.aggregate_load_real(&next, fr.bits))?;
            let lhat_next = lhat.mul(&load);
            path_sets.push(next.bits() as u32);
            // record this path's alpha row against its ladder of sets
            let fmask = next.bits() as u32;
            for (pos, alpha) in extended.coeffs().iter().enumerate() {
                let set_mask = if pos == 0 {
                    path_sets[0] // the start (empty) set
                } else {
                    path_sets[pos]
                };
                out[fmask as usize].push((set_mask, lhat_next.mul(alpha)));
            }
            dfs(fr, next, path_sets, &extended, &lhat_next, out)?;
            path_sets.pop();
        }
        Ok(())
    }

    let empty = ObligorSet::empty(n);
    let mut ladder = AlphaLadder::new(policy);
    ladder.push(bar_by_mask[0].clone())?;
    let mut path_sets = vec![0u32];
    dfs(
        &Frame { spec, bits },
        empty,
        &mut path_sets,
        &ladder,
        &Real::one(bits),
        &mut coeffs,
    )?;
    Ok(EnumeratedMixtures { coeffs, bar_by_mask })
}

/// Brute-force `E[L^(i)(X_t)]` by enumerating all subsets and orderings;
/// the oracle against which the closed forms are tested. Refuses N > 8.
pub fn expected_tranche_loss_general(
    spec: &ContagionSpec,
    deck: &TrancheDeck,
    tranche: usize,
    t: f64,
    ajd: &AjdParams,
    policy: &PrecisionPolicy,
) -> Result<f64> {
    let curve = loss_curve_general(spec, deck, ajd, policy, &[t])?;
    Ok(curve.values[tranche - 1][1])
}

/// Brute-force loss curve at arbitrary times (shared path enumeration).
pub fn loss_curve_general(
    spec: &ContagionSpec,
    deck: &TrancheDeck,
    ajd: &AjdParams,
    policy: &PrecisionPolicy,
    times: &[f64],
) -> Result<LossCurve> {
    deck.check_pool(spec)?;
    let n = spec.n_obligors();
    if n > GENERAL_ORACLE_LIMIT {
        return Err(Error::SizeRefusal {
            what: "expected_tranche_loss_general",
            got: n,
            limit: GENERAL_ORACLE_LIMIT,
        });
    }
    let bits = policy.mantissa_bits;
    let mixtures = enumerate_paths(spec, policy)?;
    let ajd_real = AjdReal::new(ajd, bits)?;
    let grid = ajd_real.exp_integral_grid(&mixtures.bar_by_mask, times)?;
    let size = 1usize << n;
    let mut values = vec![vec![0.0f64; times.len() + 1]; deck.n_tranches()];
    for fmask in 0..size {
        let fset = ObligorSet::from_bits(n, fmask as u128);
        for i in 1..=deck.n_tranches() {
            let li = tranche_loss(deck, i, &fset);
            if li == 0.0 {
                continue;
            }
            for (k, _) in times.iter().enumerate() {
                let mut sum = CancelSum::new(bits);
                for (set_mask, c) in &mixtures.coeffs[fmask] {
                    sum.add(&c.mul(&grid[*set_mask as usize][k]));
                }
                values[i - 1][k + 1] += li * sum.value().to_f64();
            }
        }
    }
    let mut curve_times = vec![0.0];
    curve_times.extend_from_slice(times);
    Ok(LossCurve {
        times: curve_times,
        values,
    })
}

// ---------------------------------------------------------------------------
// spreads
// ---------------------------------------------------------------------------

fn leg_values(deck: &TrancheDeck, i: usize, el: &[f64]) -> (f64, f64) {
    let r = deck.rate;
    let width = deck.width(i);
    let mut protection = 0.0;
    let mut annuity = 0.0;
    for k in 1..deck.pay_times.len() {
        let (t_prev, t_k) = (deck.pay_times[k - 1], deck.pay_times[k]);
        let dt = t_k - t_prev;
        match deck.timing {
            DefaultTiming::IntervalStart => {
                protection += (-r * t_k).exp() * (el[k] - el[k - 1]);
                annuity += (-r * t_k).exp() * (width - el[k - 1]).max(0.0) * dt;
            }
            DefaultTiming::Midpoint => {
                let t_mid = 0.5 * (t_prev + t_k);
                protection += (-r * t_mid).exp() * (el[k] - el[k - 1]);
                annuity += (-r * t_k).exp()
                    * (width - 0.5 * (el[k] + el[k - 1])).max(0.0)
                    * dt;
            }
            DefaultTiming::IntervalEnd => {
                protection += (-r * t_k).exp() * (el[k] - el[k - 1]);
                annuity += (-r * t_k).exp() * (width - el[k]).max(0.0) * dt;
            }
        }
    }
    (protection, annuity)
}

/// Running spread (in bp) equating premium and default legs for 1-based
/// tranche `i`, given its expected-loss curve on the deck grid.
pub fn tranche_spread(deck: &TrancheDeck, i: usize, curve: &LossCurve) -> Result<f64> {
    let el = &curve.values[i - 1];
    if el.len() != deck.pay_times.len() {
        return Err(Error::Contract(
            "loss curve grid does not match the payment grid".into(),
        ));
    }
    let width = deck.width(i);
    let (protection, annuity) = leg_values(deck, i, el);
    if annuity <= 1e-14 * width * deck.maturity {
        return Err(Error::DegenerateTranche { tranche: i });
    }
    Ok((protection - deck.upfront[i - 1] * width) / annuity * 1e4)
}

/// Upfront rate (fraction of tranche width) that balances the legs at a
/// fixed running spread (bp). This is how upfront-quoted tranches are priced.
pub fn upfront_rate(deck: &TrancheDeck, i: usize, curve: &LossCurve, running_bp: f64) -> Result<f64> {
    let el = &curve.values[i - 1];
    let width = deck.width(i);
    let (protection, annuity) = leg_values(deck, i, el);
    Ok((protection - running_bp * 1e-4 * annuity) / width)
}

/// Total-pool loss together with the expected defaulted fraction, for index
/// pricing under either premium convention.
#[derive(Debug, Clone)]
pub struct IndexCurve {
    pub times: Vec<f64>,
    /// E[L_t], fraction of pool notional.
    pub loss: Vec<f64>,
    /// E[|X_t|] / N.
    pub count_fraction: Vec<f64>,
}

/// Closed-form index curve for hcm/ncm specs.
pub fn index_curve(
    spec: &ContagionSpec,
    deck: &TrancheDeck,
    ajd: &AjdParams,
    policy: &PrecisionPolicy,
) -> Result<IndexCurve> {
    deck.check_pool(spec)?;
    let r = deck.homogeneous_recovery()?;
    let n = spec.n_obligors();
    let per_name = (1.0 - r) / n as f64;
    // weight rows: total loss (1-R)n/N and defaulted fraction n/N
    let weights = vec![
        (1..=n).map(|c| per_name * c as f64).collect::<Vec<f64>>(),
        (1..=n).map(|c| c as f64 / n as f64).collect::<Vec<f64>>(),
    ];
    let times = &deck.pay_times[1..];
    let values = closed_form_values(spec, ajd, &weights, times, policy)?;
    Ok(IndexCurve {
        times: deck.pay_times.clone(),
        loss: values[0].clone(),
        count_fraction: values[1].clone(),
    })
}

/// Index spread in bp: the [0, 1] tranche with zero upfront.
pub fn index_spread(
    deck: &TrancheDeck,
    curve: &IndexCurve,
    convention: IndexConvention,
) -> Result<f64> {
    let r = deck.rate;
    let mut protection = 0.0;
    let mut annuity = 0.0;
    for k in 1..deck.pay_times.len() {
        let t_k = deck.pay_times[k];
        let dt = t_k - deck.pay_times[k - 1];
        protection += (-r * t_k).exp() * (curve.loss[k] - curve.loss[k - 1]);
        let base = match convention {
            IndexConvention::LossNotional => 1.0 - curve.loss[k - 1],
            IndexConvention::SurvivalNotional => 1.0 - curve.count_fraction[k - 1],
        };
        annuity += (-r * t_k).exp() * base.max(0.0) * dt;
    }
    if annuity <= 1e-14 * deck.maturity {
        return Err(Error::DegenerateTranche { tranche: 0 });
    }
    Ok(protection / annuity * 1e4)
}

// ---------------------------------------------------------------------------
// default-count distribution and attachment/detachment times
// ---------------------------------------------------------------------------

/// `P(|X_t| = n)` for n = 0..=N under the closed-form models.
pub fn loss_count_distribution(
    spec: &ContagionSpec,
    t: f64,
    ajd: &AjdParams,
    policy: &PrecisionPolicy,
) -> Result<Vec<f64>> {
    let n = spec.n_obligors();
    if t == 0.0 {
        let mut out = vec![0.0; n + 1];
        out[0] = 1.0;
        return Ok(out);
    }
    // indicator weights select one count each
    let weights: Vec<Vec<f64>> = (1..=n)
        .map(|target| {
            (1..=n)
                .map(|c| if c == target { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let values = closed_form_values(spec, ajd, &weights, &[t], policy)?;
    let mut out = Vec::with_capacity(n + 1);
    let bits = policy.mantissa_bits;
    let rates = cardinality_ladder(spec, bits)?;
    let grid = AjdReal::new(ajd, bits)?.exp_integral_grid(&rates[..1], &[t])?;
    out.push(grid[0][0].to_f64()); // P(0) = E[e^{-a_0 Z_t}]
    for row in values {
        out.push(row[1]);
    }
    Ok(out)
}

/// Reusable expected-default-count evaluator: the count coefficients are
/// built once, each time evaluation costs one transform sweep.
pub struct DefaultCountCurve {
    rates: Vec<Real>,
    coeffs: Vec<Real>,
    ajd_real: AjdReal,
    bits: usize,
}

impl DefaultCountCurve {
    pub fn new(spec: &ContagionSpec, ajd: &AjdParams, policy: &PrecisionPolicy) -> Result<Self> {
        let bits = policy.mantissa_bits;
        let n = spec.n_obligors();
        let rates = cardinality_ladder(spec, bits)?;
        let weights = vec![(1..=n).map(|c| c as f64).collect::<Vec<f64>>()];
        let coeffs = ladder_coefficients(&rates, &weights, policy, bits)?;
        Ok(DefaultCountCurve {
            rates,
            coeffs: coeffs.into_iter().next().unwrap(),
            ajd_real: AjdReal::new(ajd, bits)?,
            bits,
        })
    }

    /// `E[|X_t|]`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(0.0);
        }
        let grid = self.ajd_real.exp_integral_grid(&self.rates, &[t])?;
        let mut sum = CancelSum::new(self.bits);
        for (j, c) in self.coeffs.iter().enumerate() {
            if !c.is_zero() {
                sum.add(&c.mul(&grid[j][0]));
            }
        }
        Ok(sum.value().to_f64())
    }
}

/// `E[|X_t|] = sum_n n P(|X_t| = n)`.
pub fn expected_default_count(
    spec: &ContagionSpec,
    t: f64,
    ajd: &AjdParams,
    policy: &PrecisionPolicy,
) -> Result<f64> {
    DefaultCountCurve::new(spec, ajd, policy)?.eval(t)
}

/// Attachment/detachment threshold counts and times per tranche.
#[derive(Debug, Clone)]
pub struct AttachDetach {
    /// Expected-count threshold whose crossing detaches each tranche.
    pub detach_counts: Vec<usize>,
    /// (attach time, detach time) in years; unreachable thresholds are
    /// `f64::INFINITY`.
    pub times: Vec<(f64, f64)>,
}

/// Times at which the expected default count crosses each tranche boundary.
/// Boundary counts are `rounding(V_i)`; the first tranche attaches when the
/// expected count reaches 1 unless `zero_attach_is_zero` keeps it at zero.
pub fn attach_detach_times(
    spec: &ContagionSpec,
    deck: &TrancheDeck,
    ajd: &AjdParams,
    policy: &PrecisionPolicy,
    rounding: CountRounding,
    zero_attach_is_zero: bool,
) -> Result<AttachDetach> {
    deck.check_pool(spec)?;
    let n = spec.n_obligors();
    let curve = DefaultCountCurve::new(spec, ajd, policy)?;
    let k = deck.n_tranches();
    let mut detach_counts = Vec::with_capacity(k);
    for i in 1..=k {
        detach_counts.push(rounding.apply(deck.v_boundary(i, n)?));
    }
    let crossing = |count: usize| -> Result<f64> {
        if count == 0 {
            return Ok(0.0);
        }
        if count >= n {
            // E[|X_t|] < N for all finite t
            return Ok(f64::INFINITY);
        }
        let target = count as f64;
        let mut hi = 1.0;
        while curve.eval(hi)? < target {
            hi *= 2.0;
            if hi > 1e5 {
                return Ok(f64::INFINITY);
            }
        }
        let f = |t: f64| curve.eval(t).unwrap_or(f64::NAN);
        Ok(bisect_crossing(&f, 0.0, hi, target, 1e-6 * hi.max(1.0)))
    };
    let mut times = Vec::with_capacity(k);
    for i in 0..k {
        let attach_count = if i == 0 {
            usize::from(!zero_attach_is_zero)
        } else {
            detach_counts[i - 1]
        };
        times.push((crossing(attach_count)?, crossing(detach_counts[i])?));
    }
    Ok(AttachDetach {
        detach_counts,
        times,
    })
}

/// Spread table for every tranche of the deck via the closed form.
pub fn price_deck(
    spec: &ContagionSpec,
    deck: &TrancheDeck,
    ajd: &AjdParams,
    policy: &PrecisionPolicy,
) -> Result<(LossCurve, Vec<f64>)> {
    let curve = loss_curve_closed_form(spec, deck, ajd, policy)?;
    let spreads = (1..=deck.n_tranches())
        .map(|i| tranche_spread(deck, i, &curve))
        .collect::<Result<Vec<f64>>>()?;
    Ok((curve, spreads))
}

/// Tranche loss curves and the index curve in one ladder/transform pass;
/// what quote evaluation during calibration runs on.
pub fn deck_curves(
    spec: &ContagionSpec,
    deck: &TrancheDeck,
    ajd: &AjdParams,
    policy: &PrecisionPolicy,
) -> Result<(LossCurve, IndexCurve)> {
    deck.check_pool(spec)?;
    let r = deck.homogeneous_recovery()?;
    let n = spec.n_obligors();
    let k_tr = deck.n_tranches();
    let per_name = (1.0 - r) / n as f64;
    let mut weights: Vec<Vec<f64>> = (1..=k_tr)
        .map(|i| (1..=n).map(|c| i_weight_sum(deck, i, c, n, r)).collect())
        .collect();
    weights.push((1..=n).map(|c| per_name * c as f64).collect());
    weights.push((1..=n).map(|c| c as f64 / n as f64).collect());
    let times = &deck.pay_times[1..];
    let mut values = closed_form_values(spec, ajd, &weights, times, policy)?;
    let count_fraction = values.pop().expect("count row");
    let loss = values.pop().expect("loss row");
    Ok((
        LossCurve {
            times: deck.pay_times.clone(),
            values,
        },
        IndexCurve {
            times: deck.pay_times.clone(),
            loss,
            count_fraction,
        },
    ))
}

/// Reprices the deck at doubled mantissa bits and reports the worst relative
/// spread change. The policy invariant requires this to stay below 1e-9.
pub fn precision_self_check(
    spec: &ContagionSpec,
    deck: &TrancheDeck,
    ajd: &AjdParams,
    policy: &PrecisionPolicy,
) -> Result<f64> {
    let (_, base) = price_deck(spec, deck, ajd, policy)?;
    let (_, doubled) = price_deck(spec, deck, ajd, &policy.doubled())?;
    let mut worst: f64 = 0.0;
    for (a, b) in base.iter().zip(&doubled) {
        let denom = b.abs().max(1e-12);
        worst = worst.max((a - b).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn policy() -> PrecisionPolicy {
        PrecisionPolicy::default()
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

    fn itraxx_deck(n: usize) -> TrancheDeck {
        TrancheDeck::with_uniform_schedule(
            vec![0.0, 0.03, 0.06, 0.09, 0.12, 0.22, 0.60],
            vec![500.0, 400.0, 300.0, 200.0, 100.0, 0.0],
            5.0,
            0.25,
            0.05,
            RecoveryVector::flat(n, 0.4).unwrap(),
        )
        .unwrap()
    }

    fn small_deck(n: usize) -> TrancheDeck {
        TrancheDeck::with_uniform_schedule(
            vec![0.0, 0.1, 0.3, 1.0],
            vec![0.0, 0.0, 0.0],
            2.0,
            0.25,
            0.05,
            RecoveryVector::flat(n, 0.4).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn tranche_loss_examples() {
        let deck = itraxx_deck(125);
        let empty = ObligorSet::empty(125);
        assert_eq!(tranche_loss(&deck, 1, &empty), 0.0);
        let six = ObligorSet::from_members(125, &[1, 2, 3, 4, 5, 6]).unwrap();
        assert_relative_eq!(tranche_loss(&deck, 1, &six), 0.0288, max_relative = 1e-12);
        let seven = six.with(7).unwrap();
        // 7 * 0.0048 = 0.0336 caps at the 3% detachment
        assert_relative_eq!(tranche_loss(&deck, 1, &seven), 0.03, max_relative = 1e-12);
        assert_relative_eq!(tranche_loss(&deck, 2, &seven), 0.0036, max_relative = 1e-10);
    }

    #[test]
    fn heterogeneous_recovery_uses_general_formula() {
        let mut r = vec![0.4; 4];
        r[0] = 0.1;
        let deck = TrancheDeck::with_uniform_schedule(
            vec![0.0, 0.5, 1.0],
            vec![0.0, 0.0],
            1.0,
            0.25,
            0.0,
            RecoveryVector::new(r).unwrap(),
        )
        .unwrap();
        let f = ObligorSet::from_members(4, &[1, 2]).unwrap();
        // L = (0.9 + 0.6)/4 = 0.375
        assert_relative_eq!(tranche_loss(&deck, 1, &f), 0.375, max_relative = 1e-12);
        assert_eq!(tranche_loss(&deck, 2, &f), 0.0);
    }

    #[test]
    fn closed_form_matches_brute_force_hcm_and_ncm() {
        let n = 6;
        let deck = small_deck(n);
        let ajd = base_ajd();
        let hcm = ContagionSpec::hcm(vec![0.05, 0.08, 0.03, 0.06, 0.09, 0.04], 0.07, -0.12).unwrap();
        let ncm = ContagionSpec::ncm(vec![0.05, 0.08, 0.03, 0.06, 0.09, 0.04], 0.21, 0.34, 0.09).unwrap();
        for (spec, which) in [(&hcm, "hcm"), (&ncm, "ncm")] {
            for i in 1..=3 {
                for &t in &[0.25, 1.0, 2.0] {
                    let general =
                        expected_tranche_loss_general(spec, &deck, i, t, &ajd, &policy()).unwrap();
                    let closed = match which {
                        "hcm" => expected_tranche_loss_hcm(spec, &deck, i, t, &ajd, &policy()),
                        _ => expected_tranche_loss_ncm(spec, &deck, i, t, &ajd, &policy()),
                    }
                    .unwrap();
                    assert_relative_eq!(closed, general, max_relative = 1e-9);
                }
            }
        }
    }

    #[test]
    fn closed_form_matches_brute_force_at_seven_names() {
        let n = 7;
        let deck = small_deck(n);
        let ajd = base_ajd();
        let policy = PrecisionPolicy::with_bits(512);
        let beta: Vec<f64> = (1..=n).map(|i| 0.02 + 0.03 * i as f64).collect();
        let hcm = ContagionSpec::hcm(beta.clone(), 0.11, 0.08).unwrap();
        let ncm = ContagionSpec::ncm(beta, 0.28, 0.17, -0.15).unwrap();
        let t = 1.25;
        for i in [1usize, 2] {
            let a = expected_tranche_loss_general(&hcm, &deck, i, t, &ajd, &policy).unwrap();
            let b = expected_tranche_loss_hcm(&hcm, &deck, i, t, &ajd, &policy).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-9);
            let a = expected_tranche_loss_general(&ncm, &deck, i, t, &ajd, &policy).unwrap();
            let b = expected_tranche_loss_ncm(&ncm, &deck, i, t, &ajd, &policy).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
    }

    #[test]
    fn loss_at_time_zero_is_zero() {
        let spec = ContagionSpec::hcm_uniform(10, 0.35, 0.05, -0.008).unwrap();
        let deck = small_deck(10);
        let v = expected_tranche_loss_hcm(&spec, &deck, 1, 0.0, &base_ajd(), &policy()).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn constant_term_equals_long_run_limit() {
        // all positive-rate weights die off; the zero-rate coefficient must
        // equal I^(i)(N)
        let n = 10;
        let spec = ContagionSpec::hcm_uniform(n, 0.35, 0.05, -0.008).unwrap();
        let deck = small_deck(n);
        let ajd = base_ajd();
        let r = 0.4;
        for i in 1..=3usize {
            let limit = i_weight_sum(&deck, i, n, n, r);
            let at_infinity =
                expected_tranche_loss_hcm(&spec, &deck, i, 5e3, &ajd, &policy()).unwrap();
            assert_relative_eq!(at_infinity, limit, max_relative = 1e-9);
        }
        // and algebraically: a_0 W_N alpha^(N)_N = 1 to working precision
        let bits = policy().mantissa_bits;
        let rates = cardinality_ladder(&spec, bits).unwrap();
        let weights = vec![vec![0.0; n - 1]
            .into_iter()
            .chain([1.0])
            .collect::<Vec<f64>>()];
        let coeffs = ladder_coefficients(&rates, &weights, &policy(), bits).unwrap();
        assert_relative_eq!(coeffs[0][n].to_f64(), 1.0, max_relative = 1e-20);
    }

    #[test]
    fn loss_curves_are_monotone_bounded_and_additive() {
        let n = 12;
        let spec = ContagionSpec::hcm_uniform(n, 0.4, 0.06, -0.05).unwrap();
        let deck = TrancheDeck::with_uniform_schedule(
            vec![0.0, 0.1, 0.4, 1.0],
            vec![0.0, 0.0, 0.0],
            3.0,
            0.25,
            0.05,
            RecoveryVector::flat(n, 0.4).unwrap(),
        )
        .unwrap();
        let ajd = base_ajd();
        let curve = loss_curve_closed_form(&spec, &deck, &ajd, &policy()).unwrap();
        let index = index_curve(&spec, &deck, &ajd, &policy()).unwrap();
        for i in 0..3 {
            let width = deck.width(i + 1);
            for k in 0..curve.times.len() {
                let v = curve.values[i][k];
                assert!(v >= -1e-12 && v <= width + 1e-12);
                if k > 0 {
                    assert!(v >= curve.values[i][k - 1] - 1e-12, "tranche {i} not monotone");
                }
            }
        }
        // contiguous tranches spanning [0,1] add up to the pool loss
        for k in 0..curve.times.len() {
            let total: f64 = (0..3).map(|i| curve.values[i][k]).sum();
            assert_relative_eq!(total, index.loss[k], epsilon = 1e-10);
        }
        // count fraction dominates loss fraction (loss = 0.6 * count here)
        for k in 1..index.times.len() {
            assert_relative_eq!(index.loss[k], 0.6 * index.count_fraction[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_intensity_pool_has_zero_spread() {
        let n = 8;
        let spec = ContagionSpec::hcm(vec![0.0; n], 0.0, 0.0).unwrap();
        // delta = 0 would alias ladder rates, but every rate is zero... the
        // ladder is all zeros which collides; price via the general oracle
        let deck = small_deck(n);
        let ajd = base_ajd();
        let curve = loss_curve_general(&spec, &deck, &ajd, &policy(), &deck.pay_times[1..]).unwrap();
        for i in 1..=3 {
            let s = tranche_spread(&deck, i, &curve).unwrap();
            assert_eq!(s, 0.0);
        }
    }

    #[test]
    fn count_distribution_normalizes_and_matches_kernel_row() {
        let ajd = base_ajd();
        // N = 10 normalization
        let spec = ContagionSpec::hcm_uniform(10, 0.35, 0.05, -0.008).unwrap();
        let p = loss_count_distribution(&spec, 2.0, &ajd, &policy()).unwrap();
        assert_eq!(p.len(), 11);
        let total: f64 = p.iter().sum();
        assert!((total - 1.0).abs() < 1e-10, "total = {total}");
        assert!(p.iter().all(|&x| x >= -1e-14));
        // t = 0: point mass at zero defaults
        let p0 = loss_count_distribution(&spec, 0.0, &ajd, &policy()).unwrap();
        assert_eq!(p0[0], 1.0);
        assert!(p0[1..].iter().all(|&x| x == 0.0));

        // N = 6: match kernel_row aggregated by cardinality, with the
        // z-argument replaced by the transform expectation... the kernel is
        // conditional on z, so integrate by comparing against the general
        // enumeration instead: brute-force count probabilities
        let spec6 = ContagionSpec::hcm_uniform(6, 0.4, 0.07, -0.1).unwrap();
        let t = 1.3;
        let p6 = loss_count_distribution(&spec6, t, &ajd, &policy()).unwrap();
        let deck = TrancheDeck::with_uniform_schedule(
            vec![0.0, 1.0],
            vec![0.0],
            2.0,
            0.25,
            0.05,
            RecoveryVector::flat(6, 0.4).unwrap(),
        )
        .unwrap();
        // expected count from distribution vs. the dedicated evaluator
        let mean: f64 = p6.iter().enumerate().map(|(k, &v)| k as f64 * v).sum();
        let direct = expected_default_count(&spec6, t, &ajd, &policy()).unwrap();
        assert_relative_eq!(mean, direct, max_relative = 1e-10);
        // and against the brute-force pool loss: E[L] = 0.6 E[|X|] / 6
        let curve = loss_curve_general(&spec6, &deck, &ajd, &policy(), &[t]).unwrap();
        assert_relative_eq!(curve.values[0][1], 0.6 * mean / 6.0, max_relative = 1e-9);
    }

    #[test]
    fn expected_count_is_monotone_from_zero() {
        let spec = ContagionSpec::hcm_uniform(10, 0.35, 0.05, -0.008).unwrap();
        let ajd = base_ajd();
        let curve = DefaultCountCurve::new(&spec, &ajd, &policy()).unwrap();
        assert_eq!(curve.eval(0.0).unwrap(), 0.0);
        let mut prev = 0.0;
        for &t in &[0.5, 1.0, 2.0, 4.0, 8.0] {
            let v = curve.eval(t).unwrap();
            assert!(v >= prev && v <= 10.0);
            prev = v;
        }
    }

    #[test]
    fn count_rounding_conventions() {
        assert_eq!(CountRounding::HalfUp.apply(6.25), 6);
        assert_eq!(CountRounding::HalfUp.apply(12.5), 13);
        assert_eq!(CountRounding::Ceil.apply(6.25), 7);
        assert_eq!(CountRounding::Floor.apply(12.5), 12);
    }

    #[test]
    fn attach_detach_structure() {
        let n = 20;
        let spec = ContagionSpec::hcm_uniform(n, 0.4, 0.06, -0.02).unwrap();
        let deck = TrancheDeck::with_uniform_schedule(
            vec![0.0, 0.12, 0.6],
            vec![0.0, 0.0],
            5.0,
            0.25,
            0.05,
            RecoveryVector::flat(n, 0.4).unwrap(),
        )
        .unwrap();
        let ajd = base_ajd();
        let ad = attach_detach_times(&spec, &deck, &ajd, &policy(), CountRounding::HalfUp, false)
            .unwrap();
        // V_1 = 20*0.12/0.6 = 4, V_2 = 20 -> detach counts (4, 20)
        assert_eq!(ad.detach_counts, vec![4, 20]);
        let (a1, d1) = ad.times[0];
        let (a2, d2) = ad.times[1];
        assert!(a1 > 0.0 && a1 < d1);
        assert_eq!(a2, d1);
        assert!(d2.is_infinite(), "count N is unreachable in expectation");
        // attach threshold 1 crossing really is EDC = 1
        let curve = DefaultCountCurve::new(&spec, &ajd, &policy()).unwrap();
        assert_relative_eq!(curve.eval(a1).unwrap(), 1.0, epsilon = 1e-4);
        // zero-attach convention reports 0 for the first tranche
        let ad0 = attach_detach_times(&spec, &deck, &ajd, &policy(), CountRounding::HalfUp, true)
            .unwrap();
        assert_eq!(ad0.times[0].0, 0.0);
    }

    #[test]
    fn degenerate_tranche_under_endpoint_timing() {
        // ferocious contagion wipes the pool before the first payment date
        let n = 8;
        let spec = ContagionSpec::hcm(vec![50.0; n], 80.0, 0.1).unwrap();
        let mut deck = TrancheDeck::with_uniform_schedule(
            vec![0.0, 0.001, 1.0],
            vec![0.0, 0.0],
            2.0,
            0.25,
            0.05,
            RecoveryVector::flat(n, 0.4).unwrap(),
        )
        .unwrap();
        deck.timing = DefaultTiming::IntervalEnd;
        let ajd = base_ajd();
        let curve =
            loss_curve_general(&spec, &deck, &ajd, &policy(), &deck.pay_times[1..]).unwrap();
        let err = tranche_spread(&deck, 1, &curve).unwrap_err();
        assert!(matches!(err, Error::DegenerateTranche { tranche: 1 }));
    }

    #[test]
    fn precision_self_check_is_stable_for_moderate_pool() {
        let n = 25;
        let spec = ContagionSpec::hcm_uniform(n, 0.35, 0.05, -0.008).unwrap();
        let deck = TrancheDeck::with_uniform_schedule(
            vec![0.0, 0.03, 0.12, 0.6],
            vec![500.0, 100.0, 0.0],
            5.0,
            0.25,
            0.05,
            RecoveryVector::flat(n, 0.4).unwrap(),
        )
        .unwrap();
        let drift = precision_self_check(&spec, &deck, &base_ajd(), &PrecisionPolicy::with_bits(512))
            .unwrap();
        assert!(drift < 1e-9, "drift = {drift:e}");
    }
}
