//! Conditional transition kernels of the defaulted-set chain.
//!
//! Given the factor integral `z = int_s^t Phi(u, Y_u) du`, the chain moves
//! from set E to set F with probability
//!
//! ```text
//! G(E, F, z) = sum over orderings pi of F\E of
//!              Lhat_pi * sum_i alpha_i(ladder_pi) e^{-Lbar_{F_i} z}
//! ```
//!
//! The production evaluator walks orderings lazily with early exit on zero
//! contagion loads and shares every common prefix, which collapses the
//! factorial sum onto the subset lattice between E and F: each visited set
//! carries one mixture-coefficient vector, built from its predecessors by
//! the same division-and-force step as the alpha recursion. Homogeneous
//! specs skip the lattice entirely: every ordering sees the same cardinality
//! ladder.
//!
//! `kernel_general` evaluates the kernel for arbitrary time-dependent
//! intensity curves by nested adaptive quadrature over the H-recursion; it
//! is oracle-scale machinery (N <= 8).

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::hypoexp::AlphaLadder;
use crate::model::{ContagionKind, ContagionSpec, ObligorSet};
use crate::numerics::integrate;
use crate::precision::{PrecisionPolicy, Real};

/// Hard ceiling on `|F \ E|` for exact subset enumeration.
pub const ROW_ENUMERATION_LIMIT: usize = 25;
/// Lattice walks cost O(3^n); beyond this the general path refuses.
pub const LATTICE_LIMIT: usize = 16;
/// kernel_general sums |F\E|! nested quadratures.
pub const GENERAL_LIMIT: usize = 8;

/// Time of the maximum of `P[X_t = {i} | X_s = empty]` in the symmetric
/// two-obligor model with constant intensity `lambda`.
pub fn two_obligor_mode(lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!(
            "two_obligor_mode: lambda = {lambda} must be > 0"
        )));
    }
    Ok(std::f64::consts::LN_2 / lambda)
}

// ---------------------------------------------------------------------------
// factorized kernel: subset-lattice mixture walk
// ---------------------------------------------------------------------------

/// Bookkeeping for one interval `[base, base u diff]` of the subset lattice.
struct Lattice<'a> {
    spec: &'a ContagionSpec,
    base: ObligorSet,
    diff: Vec<usize>,
    bits: usize,
    tol: f64,
    bar_real: HashMap<u32, Real>,
    bar_f64: HashMap<u32, f64>,
}

impl<'a> Lattice<'a> {
    fn new(spec: &'a ContagionSpec, base: ObligorSet, top: ObligorSet, policy: &PrecisionPolicy) -> Self {
        let diff: Vec<usize> = top.minus(&base).members().collect();
        Lattice {
            spec,
            base,
            diff,
            bits: policy.mantissa_bits,
            tol: policy.collision_rel_tol,
            bar_real: HashMap::new(),
            bar_f64: HashMap::new(),
        }
    }

    fn n(&self) -> usize {
        self.diff.len()
    }

    fn set_of(&self, cm: u32) -> ObligorSet {
        let mut s = self.base;
        for (b, &obligor) in self.diff.iter().enumerate() {
            if cm >> b & 1 == 1 {
                s = s.with(obligor).expect("diff member in range");
            }
        }
        s
    }

    fn bar(&mut self, cm: u32) -> (Real, f64) {
        if !self.bar_real.contains_key(&cm) {
            let set = self.set_of(cm);
            let r = self.spec.aggregate_load_real(&set, self.bits);
            self.bar_f64.insert(cm, r.to_f64());
            self.bar_real.insert(cm, r);
        }
        (self.bar_real[&cm].clone(), self.bar_f64[&cm])
    }

    fn check_distinct(&mut self, gm: u32, hm: u32) -> Result<()> {
        let (_, bg) = self.bar(gm);
        let (_, bh) = self.bar(hm);
        if (bg - bh).abs() <= self.tol * bg.abs().max(bh.abs()) {
            return Err(Error::RateCollision {
                i: gm as usize,
                j: hm as usize,
                li: bg,
                lj: bh,
                tol: self.tol,
            });
        }
        Ok(())
    }
}

/// Index of submask `gm` among the submasks of `hm` (gm must be a submask).
fn squeeze(gm: u32, hm: u32) -> usize {
    debug_assert_eq!(gm & !hm, 0);
    let mut idx = 0usize;
    let mut bit = 0;
    let mut h = hm;
    while h != 0 {
        let low = h & h.wrapping_neg();
        if gm & low != 0 {
            idx |= 1 << bit;
        }
        bit += 1;
        h ^= low;
    }
    idx
}

/// Inverse of [`squeeze`]: expand an index into a submask of `hm`.
fn unsqueeze(idx: usize, hm: u32) -> u32 {
    let mut gm = 0u32;
    let mut bit = 0;
    let mut h = hm;
    while h != 0 {
        let low = h & h.wrapping_neg();
        if idx >> bit & 1 == 1 {
            gm |= low;
        }
        bit += 1;
        h ^= low;
    }
    gm
}

/// Iterate masks of `n` bits with exactly `k` bits set (Gosper's hack).
fn masks_of_weight(n: usize, k: usize) -> impl Iterator<Item = u32> {
    let end = 1u32 << n;
    let mut cur = if k == 0 { 0 } else { (1u32 << k) - 1 };
    let mut done = false;
    std::iter::from_fn(move || {
        if done || cur >= end {
            return None;
        }
        let out = cur;
        if k == 0 {
            done = true;
        } else {
            let c = cur & cur.wrapping_neg();
            let r = cur + c;
            cur = (((r ^ cur) >> 2) / c) | r;
        }
        Some(out)
    })
}

/// Forward mixture walk from `base` over the interval up to `top`.
/// Calls `visit(cm, coeffs)` for every reachable set, where `coeffs[squeeze(gm, cm)]`
/// is the weight of `e^{-Lbar_gm z}` in `P[X_z = set_of(cm) | X_0 = base]`.
fn forward_walk(
    lat: &mut Lattice,
    mut visit: impl FnMut(&mut Lattice, u32, &[Real]) -> Result<()>,
) -> Result<()> {
    let n = lat.n();
    let bits = lat.bits;
    let mut prev: HashMap<u32, Vec<Real>> = HashMap::new();
    let root = vec![Real::one(bits)];
    visit(lat, 0, &root)?;
    prev.insert(0, root);
    for level in 1..=n {
        let mut cur: HashMap<u32, Vec<Real>> = HashMap::new();
        for hm in masks_of_weight(n, level) {
            let (bar_h, _) = lat.bar(hm);
            let mut coeffs = vec![Real::zero(bits); 1 << level];
            let mut reachable = false;
            for b in 0..n {
                if hm >> b & 1 == 0 {
                    continue;
                }
                let pm = hm ^ (1 << b);
                let Some(pc) = prev.get(&pm) else { continue };
                let pred_set = lat.set_of(pm);
                let jump = lat
                    .spec
                    .contagion_load_real(&pred_set, lat.diff[b], bits);
                if jump.is_zero() {
                    continue; // early exit: this ordering contributes nothing
                }
                reachable = true;
                let pc = pc.clone();
                for (pidx, c) in pc.iter().enumerate() {
                    if c.is_zero() {
                        continue;
                    }
                    let gm = unsqueeze(pidx, pm);
                    lat.check_distinct(gm, hm)?;
                    let (bar_g, _) = lat.bar(gm);
                    let denom = bar_h.sub(&bar_g);
                    let gidx = squeeze(gm, hm);
                    let add = jump.mul(c).div(&denom);
                    coeffs[gidx] = coeffs[gidx].add(&add);
                }
            }
            if !reachable {
                continue;
            }
            // forced last step: coefficients of each node sum to zero so that
            // P = 0 at z = 0
            let hidx = (1usize << level) - 1;
            let mut tail = Real::zero(bits);
            for (idx, c) in coeffs.iter().enumerate() {
                if idx != hidx {
                    tail = tail.add(c);
                }
            }
            coeffs[hidx] = tail.neg();
            visit(lat, hm, &coeffs)?;
            cur.insert(hm, coeffs);
        }
        prev = cur;
    }
    Ok(())
}

/// Mixture value `sum_G c_G e^{-Lbar_G z}` for one node.
fn node_value(
    lat: &mut Lattice,
    hm: u32,
    coeffs: &[Real],
    z: f64,
    weights: &mut HashMap<u32, Real>,
) -> Real {
    let bits = lat.bits;
    let zr = Real::from_f64(z, bits);
    let mut acc = Real::zero(bits);
    for (idx, c) in coeffs.iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let gm = unsqueeze(idx, hm);
        let w = weights.entry(gm).or_insert_with(|| {
            let (bar, _) = {
                let set = lat.set_of(gm);
                let r = lat.spec.aggregate_load_real(&set, bits);
                let f = r.to_f64();
                (r, f)
            };
            bar.neg().mul(&zr).exp()
        });
        acc = acc.add(&c.mul(w));
    }
    acc
}

/// Homogeneous fast path: every ordering sees the cardinality ladder, so the
/// permutation sum collapses to a combinatorial prefactor times one mixture.
fn hcm_point(
    spec: &ContagionSpec,
    e: &ObligorSet,
    f: &ObligorSet,
    z: f64,
    policy: &PrecisionPolicy,
) -> Result<f64> {
    let bits = policy.mantissa_bits;
    let n = f.minus(e).card();
    // without contagion the chain stops after the first default
    let steps_through_contagion = e.card() + n > 1 && n >= 1 && !(e.is_empty() && n == 1);
    if spec.rho_hcm() == Some(0.0) && steps_through_contagion {
        return Ok(0.0);
    }
    let ladder = hcm_ladder(spec, e.card(), n, bits, policy)?;
    let mix = ladder.mix(n, z);
    let beta_sum = if e.is_empty() {
        f.members().map(|i| spec.beta()[i - 1]).sum::<f64>()
    } else {
        0.0
    };
    Ok(ladder.prefactor(n, beta_sum).mul(&mix).to_f64())
}

/// Cardinality ladder for homogeneous specs starting from a set of size `m`:
/// rates `Lbar` at sizes m..m+n plus the alpha rows for every prefix.
struct HcmLadder {
    rows: Vec<Vec<Real>>, // rows[j] = alpha coefficients of ladder prefix 0..=j
    rates: Vec<Real>,
    chain_product: Vec<Real>, // product of per-step loads, excluding the beta factor
    from_empty: bool,
    bits: usize,
}

fn hcm_ladder(
    spec: &ContagionSpec,
    m: usize,
    n: usize,
    bits: usize,
    policy: &PrecisionPolicy,
) -> Result<HcmLadder> {
    let total = spec.n_obligors();
    let rho = spec.rho_hcm().expect("hcm spec");
    let mut ladder = AlphaLadder::new(policy);
    let mut rows = Vec::with_capacity(n + 1);
    let mut chain_product = vec![Real::one(bits)];
    for j in 0..=n {
        let k = m + j;
        let rate = if k == 0 {
            spec.aggregate_load_real(&ObligorSet::empty(total), bits)
        } else if k == total {
            Real::zero(bits)
        } else {
            let per = Real::from_f64(-spec.delta(), bits)
                .mul_f64(k as f64)
                .exp()
                .mul(&Real::from_f64(rho, bits).mul_f64(k as f64));
            per.mul_f64((total - k) as f64)
        };
        ladder.push(rate)?;
        rows.push(ladder.coeffs().to_vec());
        if j < n {
            // per-step load at size k (empty-set step contributes beta later)
            if k > 0 {
                let step = Real::from_f64(-spec.delta(), bits)
                    .mul_f64(k as f64)
                    .exp()
                    .mul(&Real::from_f64(rho, bits).mul_f64(k as f64));
                chain_product.push(chain_product[j].mul(&step));
            } else {
                chain_product.push(chain_product[j].clone());
            }
        }
    }
    Ok(HcmLadder {
        rows,
        rates: ladder.rates().to_vec(),
        chain_product,
        from_empty: m == 0,
        bits,
    })
}

impl HcmLadder {
    /// `sum_{i<=j} alpha^{(j)}_i e^{-r_i z}`.
    fn mix(&self, j: usize, z: f64) -> Real {
        let zr = Real::from_f64(z, self.bits);
        let mut acc = Real::zero(self.bits);
        for (i, a) in self.rows[j].iter().enumerate() {
            acc = acc.add(&a.mul(&self.rates[i].neg().mul(&zr).exp()));
        }
        acc
    }

    /// Permutation-sum prefactor for reaching a specific set `j` steps up.
    /// From the empty set the first default contributes `sum_{i in F} beta_i`
    /// and the remaining orderings a factor `(j-1)!`; otherwise all `j!`
    /// orderings carry the same product of cardinality loads.
    fn prefactor(&self, j: usize, beta_sum_f: f64) -> Real {
        if j == 0 {
            return Real::one(self.bits);
        }
        let fact = |k: usize| -> Real {
            let mut f = Real::one(self.bits);
            for v in 2..=k {
                f = f.mul_f64(v as f64);
            }
            f
        };
        if self.from_empty {
            fact(j - 1)
                .mul(&self.chain_product[j])
                .mul(&Real::from_f64(beta_sum_f, self.bits))
        } else {
            fact(j).mul(&self.chain_product[j])
        }
    }
}

/// `P[X gains exactly F\E by "time" z | X = E]` under the factorized
/// intensity model, where z stands for the integrated factor.
pub fn kernel_factorized(
    spec: &ContagionSpec,
    e: &ObligorSet,
    f: &ObligorSet,
    z: f64,
    policy: &PrecisionPolicy,
) -> Result<f64> {
    validate_z(z)?;
    if !e.is_subset_of(f) {
        return Ok(0.0);
    }
    let bits = policy.mantissa_bits;
    if e == f {
        let bar = spec.aggregate_load_real(e, bits);
        return Ok(bar.neg().mul_f64(z).exp().to_f64());
    }
    let n = f.minus(e).card();
    if spec.kind() == ContagionKind::Hcm {
        return hcm_point(spec, e, f, z, policy);
    }
    if n > LATTICE_LIMIT {
        return Err(Error::SizeRefusal {
            what: "kernel_factorized lattice walk",
            got: n,
            limit: LATTICE_LIMIT,
        });
    }
    let mut lat = Lattice::new(spec, *e, *f, policy);
    let top = (1u32 << n) - 1;
    let mut weights = HashMap::new();
    let mut out = 0.0;
    forward_walk(&mut lat, |lat, cm, coeffs| {
        if cm == top {
            out = node_value(lat, cm, coeffs, z, &mut weights).to_f64();
        }
        Ok(())
    })?;
    Ok(out)
}

/// Full conditional distribution of the chain given `X = E` and factor
/// integral `z`: probabilities for every `F` containing `E`, in ascending
/// bitmask order. Unreachable sets carry probability zero.
pub fn kernel_row(
    spec: &ContagionSpec,
    e: &ObligorSet,
    z: f64,
    policy: &PrecisionPolicy,
) -> Result<Vec<(ObligorSet, f64)>> {
    validate_z(z)?;
    let total = spec.n_obligors();
    let full = ObligorSet::full(total);
    let n = full.minus(e).card();
    if n > ROW_ENUMERATION_LIMIT {
        return Err(Error::SizeRefusal {
            what: "kernel_row subset enumeration",
            got: n,
            limit: ROW_ENUMERATION_LIMIT,
        });
    }
    if spec.kind() == ContagionKind::Hcm {
        return hcm_row(spec, e, z, policy);
    }
    if n > LATTICE_LIMIT {
        return Err(Error::SizeRefusal {
            what: "kernel_row lattice walk",
            got: n,
            limit: LATTICE_LIMIT,
        });
    }
    let mut lat = Lattice::new(spec, *e, full, policy);
    let mut weights = HashMap::new();
    let mut values: HashMap<u32, f64> = HashMap::new();
    forward_walk(&mut lat, |lat, cm, coeffs| {
        let v = node_value(lat, cm, coeffs, z, &mut weights).to_f64();
        values.insert(cm, v);
        Ok(())
    })?;
    let mut out = Vec::with_capacity(1 << n);
    for cm in 0..(1u32 << n) {
        let set = lat.set_of(cm);
        out.push((set, values.get(&cm).copied().unwrap_or(0.0)));
    }
    Ok(out)
}

fn hcm_row(
    spec: &ContagionSpec,
    e: &ObligorSet,
    z: f64,
    policy: &PrecisionPolicy,
) -> Result<Vec<(ObligorSet, f64)>> {
    let bits = policy.mantissa_bits;
    let total = spec.n_obligors();
    let full = ObligorSet::full(total);
    let diff: Vec<usize> = full.minus(e).members().collect();
    let n = diff.len();
    let ladder = hcm_ladder(spec, e.card(), n, bits, policy)?;
    // one mixture per target size; the beta sum varies per set only when the
    // chain starts empty
    let mixes: Vec<Real> = (0..=n).map(|j| ladder.mix(j, z)).collect();
    let mut out = Vec::with_capacity(1 << n);
    for cm in 0..(1u64 << n) as u64 {
        let j = cm.count_ones() as usize;
        let mut set = *e;
        let mut beta_sum = 0.0;
        for (b, &obligor) in diff.iter().enumerate() {
            if cm >> b & 1 == 1 {
                set = set.with(obligor)?;
                beta_sum += spec.beta()[obligor - 1];
            }
        }
        let v = ladder.prefactor(j, beta_sum).mul(&mixes[j]).to_f64();
        out.push((set, v));
    }
    Ok(out)
}

/// Backward counterpart of [`kernel_row`]: probabilities `G(H, F, z)` of
/// finishing exactly at `F` for every start `H` between `e_low` and `F`.
pub fn kernel_col(
    spec: &ContagionSpec,
    e_low: &ObligorSet,
    f: &ObligorSet,
    z: f64,
    policy: &PrecisionPolicy,
) -> Result<Vec<(ObligorSet, f64)>> {
    validate_z(z)?;
    if !e_low.is_subset_of(f) {
        return Err(Error::Contract("kernel_col: e_low must be inside F".into()));
    }
    let n = f.minus(e_low).card();
    if n > LATTICE_LIMIT {
        return Err(Error::SizeRefusal {
            what: "kernel_col lattice walk",
            got: n,
            limit: LATTICE_LIMIT,
        });
    }
    let bits = policy.mantissa_bits;
    let mut lat = Lattice::new(spec, *e_low, *f, policy);
    let top = (1u32 << n) - 1;
    // backward recursion: coefficients of H live on sets G between H and F,
    // indexed by squeeze(gm ^ hm, top ^ hm)
    let mut next: HashMap<u32, Vec<Real>> = HashMap::new();
    next.insert(top, vec![Real::one(bits)]);
    let mut values: Vec<(ObligorSet, f64)> = Vec::with_capacity(1 << n);
    let zr = Real::from_f64(z, bits);
    let mut weights: HashMap<u32, Real> = HashMap::new();
    let mut value_of = |lat: &mut Lattice, hm: u32, coeffs: &[Real]| -> f64 {
        let free = top ^ hm;
        let mut acc = Real::zero(bits);
        for (idx, c) in coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let gm = hm | unsqueeze(idx, free);
            let w = weights.entry(gm).or_insert_with(|| {
                lat.spec
                    .aggregate_load_real(&lat.set_of(gm), bits)
                    .neg()
                    .mul(&zr)
                    .exp()
            });
            acc = acc.add(&c.mul(w));
        }
        acc.to_f64()
    };
    let top_set = lat.set_of(top);
    values.push((top_set, value_of(&mut lat, top, &next[&top])));
    for level in (0..n).rev() {
        let mut cur: HashMap<u32, Vec<Real>> = HashMap::new();
        for hm in masks_of_weight(n, level) {
            let free = top ^ hm;
            let (bar_h, _) = lat.bar(hm);
            let mut coeffs = vec![Real::zero(bits); 1 << (n - level)];
            let mut reachable = false;
            let hset = lat.set_of(hm);
            for b in 0..n {
                if free >> b & 1 == 0 {
                    continue;
                }
                let um = hm | (1 << b);
                let Some(uc) = next.get(&um) else { continue };
                let jump = lat.spec.contagion_load_real(&hset, lat.diff[b], bits);
                if jump.is_zero() {
                    continue;
                }
                reachable = true;
                let uc = uc.clone();
                let ufree = top ^ um;
                for (uidx, c) in uc.iter().enumerate() {
                    if c.is_zero() {
                        continue;
                    }
                    let gm = um | unsqueeze(uidx, ufree);
                    lat.check_distinct(hm, gm)?;
                    let (bar_g, _) = lat.bar(gm);
                    let denom = bar_h.sub(&bar_g);
                    let gidx = squeeze(gm ^ hm, free);
                    coeffs[gidx] = coeffs[gidx].add(&jump.mul(c).div(&denom));
                }
            }
            if reachable {
                // P(0) = 0 away from F itself
                let mut tail = Real::zero(bits);
                for (idx, c) in coeffs.iter().enumerate() {
                    if idx != 0 {
                        tail = tail.add(c);
                    }
                }
                coeffs[0] = tail.neg();
                values.push((hset, value_of(&mut lat, hm, &coeffs)));
                cur.insert(hm, coeffs);
            } else {
                values.push((hset, 0.0));
            }
        }
        next = cur;
    }
    values.sort_by_key(|(s, _)| s.bits());
    Ok(values)
}

fn validate_z(z: f64) -> Result<()> {
    if !(z >= 0.0) {
        return Err(Error::Domain(format!(
            "kernel: factor integral z = {z} must be >= 0"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// general kernel: nested quadrature over the H-recursion
// ---------------------------------------------------------------------------

/// Time-dependent jump intensities `lambda_{E, E u {i}}(t)`.
pub trait TimeVaryingRates {
    fn jump_rate(&self, e: &ObligorSet, i: usize, t: f64) -> f64;

    /// Total leaving rate `lambda_E(t)`.
    fn total_rate(&self, e: &ObligorSet, t: f64) -> f64 {
        e.survivors().map(|i| self.jump_rate(e, i, t)).sum()
    }

    /// Structural zero test, used to prune orderings.
    fn jump_possible(&self, e: &ObligorSet, i: usize) -> bool {
        let _ = (e, i);
        true
    }
}

/// Contagion loads scaled by a deterministic positive factor curve.
pub struct ScaledLoads<'a, F: Fn(f64) -> f64> {
    pub spec: &'a ContagionSpec,
    pub phi: F,
}

impl<F: Fn(f64) -> f64> TimeVaryingRates for ScaledLoads<'_, F> {
    fn jump_rate(&self, e: &ObligorSet, i: usize, t: f64) -> f64 {
        (self.phi)(t) * self.spec.contagion_load(e, i).expect("survivor")
    }

    fn total_rate(&self, e: &ObligorSet, t: f64) -> f64 {
        (self.phi)(t) * self.spec.aggregate_load(e)
    }

    fn jump_possible(&self, e: &ObligorSet, i: usize) -> bool {
        self.spec.contagion_load(e, i).expect("survivor") > 0.0
    }
}

/// Kernel query under general per-pair intensity curves.
pub struct KernelQuery<'a> {
    pub from: ObligorSet,
    pub to: ObligorSet,
    pub s: f64,
    pub t: f64,
    pub rates: &'a dyn TimeVaryingRates,
    /// Per-level absolute quadrature tolerance.
    pub tol: f64,
}

impl<'a> KernelQuery<'a> {
    pub fn new(from: ObligorSet, to: ObligorSet, s: f64, t: f64, rates: &'a dyn TimeVaryingRates) -> Self {
        KernelQuery {
            from,
            to,
            s,
            t,
            rates,
            tol: 1e-12,
        }
    }
}

/// `G(s, t; E, F)` by summing every ordering of `F\E`, each evaluated through
/// the nested H-recursion with adaptive quadrature at every level.
pub fn kernel_general(q: &KernelQuery) -> Result<f64> {
    if q.from.n_total() > GENERAL_LIMIT {
        return Err(Error::SizeRefusal {
            what: "kernel_general",
            got: q.from.n_total(),
            limit: GENERAL_LIMIT,
        });
    }
    if !(q.s <= q.t) {
        return Err(Error::Domain(format!("need s <= t, got s={}, t={}", q.s, q.t)));
    }
    if !q.from.is_subset_of(&q.to) {
        return Ok(0.0);
    }
    if q.from == q.to {
        return Ok(h0(q.rates, &q.from, q.s, q.t, q.tol));
    }
    let remaining: Vec<usize> = q.to.minus(&q.from).members().collect();
    let mut chain = Vec::with_capacity(remaining.len());
    let mut used = vec![false; remaining.len()];
    let mut sum = 0.0;
    permute_sum(q, &remaining, &mut used, q.from, &mut chain, &mut sum);
    Ok(sum)
}

fn permute_sum(
    q: &KernelQuery,
    remaining: &[usize],
    used: &mut [bool],
    current: ObligorSet,
    chain: &mut Vec<(ObligorSet, usize)>,
    sum: &mut f64,
) {
    if chain.len() == remaining.len() {
        *sum += h_chain(q.rates, &q.from, chain, q.s, q.t, q.tol);
        return;
    }
    for (k, &obligor) in remaining.iter().enumerate() {
        if used[k] || !q.rates.jump_possible(&current, obligor) {
            continue; // lazy enumeration: dead orderings are dropped here
        }
        used[k] = true;
        chain.push((current, obligor));
        let next = current.with(obligor).expect("member in range");
        permute_sum(q, remaining, used, next, chain, sum);
        chain.pop();
        used[k] = false;
    }
}

fn h0(rates: &dyn TimeVaryingRates, e: &ObligorSet, s: f64, t: f64, tol: f64) -> f64 {
    (-integrate(&|u| rates.total_rate(e, u), s, t, tol)).exp()
}

/// `H_k(s, t; chain)` where `chain` lists (set before default, obligor).
fn h_chain(
    rates: &dyn TimeVaryingRates,
    base: &ObligorSet,
    chain: &[(ObligorSet, usize)],
    s: f64,
    t: f64,
    tol: f64,
) -> f64 {
    match chain.split_last() {
        None => h0(rates, base, s, t, tol),
        Some((&(before, obligor), prefix)) => {
            let after = before.with(obligor).expect("member in range");
            integrate(
                &|v| {
                    rates.jump_rate(&before, obligor, v)
                        * (-integrate(&|u| rates.total_rate(&after, u), v, t, tol)).exp()
                        * h_chain(rates, base, prefix, s, v, tol)
                },
                s,
                t,
                tol,
            )
        }
    }
}
