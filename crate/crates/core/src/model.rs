//! Portfolio data model: obligor sets, the contagion specification and the
//! intensity family it induces.
//!
//! The defaulted-set process lives on subsets of `{1..N}` with `N <= 128`,
//! so sets are fixed-width bitmasks with O(1) cardinality and membership.
//! Intensities factor as `lambda_EF(t) = Phi(t, Y_t) * L_E(i)` where the
//! contagion load `L_E(i)` is `beta_i` for an empty defaulted set and
//! `h(|E|) * sum_{j in E} rho_ji` otherwise, with `h(n) = exp(-delta*n)`.

use crate::error::{Error, Result};
use crate::precision::Real;

pub const MAX_OBLIGORS: usize = 128;

/// Subset of the obligor universe `{1..N}` backed by a bitmask.
/// Bit `i-1` holds obligor `i`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObligorSet {
    bits: u128,
    n: u8,
}

impl ObligorSet {
    pub fn empty(n: usize) -> Self {
        assert!((1..=MAX_OBLIGORS).contains(&n), "obligor count out of range");
        ObligorSet { bits: 0, n: n as u8 }
    }

    pub fn full(n: usize) -> Self {
        let mut s = Self::empty(n);
        s.bits = if n == 128 { u128::MAX } else { (1u128 << n) - 1 };
        s
    }

    pub fn from_members(n: usize, members: &[usize]) -> Result<Self> {
        let mut s = Self::empty(n);
        for &i in members {
            s = s.with(i)?;
        }
        Ok(s)
    }

    pub(crate) fn from_bits(n: usize, bits: u128) -> Self {
        let mut s = Self::empty(n);
        debug_assert_eq!(bits & !Self::full(n).bits, 0, "bits outside 1..=N");
        s.bits = bits;
        s
    }

    pub fn bits(&self) -> u128 {
        self.bits
    }

    /// Universe size N.
    pub fn n_total(&self) -> usize {
        self.n as usize
    }

    /// |E| via popcount.
    pub fn card(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn is_full(&self) -> bool {
        *self == Self::full(self.n_total())
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.n_total() {
            Err(Error::IndexOutOfRange {
                index: i,
                n: self.n_total(),
            })
        } else {
            Ok(())
        }
    }

    pub fn contains(&self, i: usize) -> bool {
        i >= 1 && i <= self.n_total() && self.bits >> (i - 1) & 1 == 1
    }

    pub fn with(&self, i: usize) -> Result<Self> {
        self.check_index(i)?;
        let mut s = *self;
        s.bits |= 1u128 << (i - 1);
        Ok(s)
    }

    pub fn without(&self, i: usize) -> Result<Self> {
        self.check_index(i)?;
        let mut s = *self;
        s.bits &= !(1u128 << (i - 1));
        Ok(s)
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.bits & !other.bits == 0
    }

    pub fn union(&self, other: &Self) -> Self {
        ObligorSet {
            bits: self.bits | other.bits,
            n: self.n,
        }
    }

    /// Set difference `self \ other`.
    pub fn minus(&self, other: &Self) -> Self {
        ObligorSet {
            bits: self.bits & !other.bits,
            n: self.n,
        }
    }

    /// Obligors in the set, ascending.
    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        let n = self.n_total();
        (1..=n).filter(move |&i| self.contains(i))
    }

    /// Obligors not in the set (the survivors), ascending.
    pub fn survivors(&self) -> impl Iterator<Item = usize> + '_ {
        let n = self.n_total();
        (1..=n).filter(move |&i| !self.contains(i))
    }
}

impl std::fmt::Debug for ObligorSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.members().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

/// Which closed-form fast paths a spec qualifies for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContagionKind {
    General,
    /// Homogeneous: constant off-diagonal contagion rate rho.
    Hcm,
    /// Near-neighbor: circular neighbor-only contagion with clockwise rate p
    /// and counter-clockwise rate q.
    Ncm,
}

#[derive(Debug, Clone)]
enum RhoMatrix {
    Dense(Vec<f64>),
    Hcm(f64),
    Ncm { p: f64, q: f64 },
}

/// Base intensities, contagion matrix and contagion-magnitude decay.
#[derive(Debug, Clone)]
pub struct ContagionSpec {
    n: usize,
    beta: Vec<f64>,
    rho: RhoMatrix,
    delta: f64,
    kind: ContagionKind,
}

impl ContagionSpec {
    /// General spec with an explicit N x N contagion matrix (row-major,
    /// `rho[j][i]` = rate from defaulted j onto survivor i). The diagonal is
    /// forced to zero.
    pub fn general(beta: Vec<f64>, rho: Vec<Vec<f64>>, delta: f64) -> Result<Self> {
        let n = beta.len();
        Self::check_n(n)?;
        Self::check_beta(&beta)?;
        if rho.len() != n || rho.iter().any(|r| r.len() != n) {
            return Err(Error::Contract(format!("rho must be {n}x{n}")));
        }
        let mut flat = Vec::with_capacity(n * n);
        for (j, row) in rho.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                if v < 0.0 || !v.is_finite() {
                    return Err(Error::Domain(format!("rho[{}][{}] = {v} invalid", j + 1, i + 1)));
                }
                flat.push(if i == j { 0.0 } else { v });
            }
        }
        Ok(ContagionSpec {
            n,
            beta,
            rho: RhoMatrix::Dense(flat),
            delta,
            kind: ContagionKind::General,
        })
    }

    /// Homogeneous contagion: `rho_ij = rho` for all i != j.
    pub fn hcm(beta: Vec<f64>, rho: f64, delta: f64) -> Result<Self> {
        let n = beta.len();
        Self::check_n(n)?;
        Self::check_beta(&beta)?;
        if rho < 0.0 || !rho.is_finite() {
            return Err(Error::Domain(format!("rho = {rho} invalid")));
        }
        Ok(ContagionSpec {
            n,
            beta,
            rho: RhoMatrix::Hcm(rho),
            delta,
            kind: ContagionKind::Hcm,
        })
    }

    /// Homogeneous spec with the total base intensity split uniformly.
    pub fn hcm_uniform(n: usize, a0: f64, rho: f64, delta: f64) -> Result<Self> {
        Self::check_n(n)?;
        if a0 < 0.0 || !a0.is_finite() {
            return Err(Error::Domain(format!("a0 = {a0} invalid")));
        }
        Self::hcm(vec![a0 / n as f64; n], rho, delta)
    }

    /// Near-neighbor contagion on the circle `1 -> 2 -> ... -> N -> 1`:
    /// obligor j infects j+1 at rate p and j-1 at rate q.
    pub fn ncm(beta: Vec<f64>, p: f64, q: f64, delta: f64) -> Result<Self> {
        let n = beta.len();
        Self::check_n(n)?;
        if n < 3 {
            return Err(Error::Contract(
                "ncm needs N >= 3 for a well-defined neighbor circle".into(),
            ));
        }
        Self::check_beta(&beta)?;
        if p <= 0.0 || q <= 0.0 || !p.is_finite() || !q.is_finite() {
            return Err(Error::Domain(format!("ncm rates p={p}, q={q} must be positive")));
        }
        Ok(ContagionSpec {
            n,
            beta,
            rho: RhoMatrix::Ncm { p, q },
            delta,
            kind: ContagionKind::Ncm,
        })
    }

    pub fn ncm_uniform(n: usize, a0: f64, p: f64, q: f64, delta: f64) -> Result<Self> {
        Self::check_n(n)?;
        Self::ncm(vec![a0 / n as f64; n], p, q, delta)
    }

    fn check_n(n: usize) -> Result<()> {
        if (1..=MAX_OBLIGORS).contains(&n) {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "obligor count {n} outside 1..={MAX_OBLIGORS}"
            )))
        }
    }

    fn check_beta(beta: &[f64]) -> Result<()> {
        for (i, &b) in beta.iter().enumerate() {
            if b < 0.0 || !b.is_finite() {
                return Err(Error::Domain(format!("beta[{}] = {b} invalid", i + 1)));
            }
        }
        Ok(())
    }

    pub fn n_obligors(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> ContagionKind {
        self.kind
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Total base intensity `a_0 = sum_i beta_i`.
    pub fn a0(&self) -> f64 {
        self.beta.iter().sum()
    }

    /// Constant off-diagonal rate for homogeneous specs.
    pub fn rho_hcm(&self) -> Option<f64> {
        match self.rho {
            RhoMatrix::Hcm(r) => Some(r),
            _ => None,
        }
    }

    pub fn ncm_rates(&self) -> Option<(f64, f64)> {
        match self.rho {
            RhoMatrix::Ncm { p, q } => Some((p, q)),
            _ => None,
        }
    }

    /// Individual contagion rate `rho_ji` from defaulted j onto survivor i
    /// (1-based, zero diagonal).
    pub fn rho(&self, j: usize, i: usize) -> f64 {
        debug_assert!(i >= 1 && i <= self.n && j >= 1 && j <= self.n);
        if i == j {
            return 0.0;
        }
        match &self.rho {
            RhoMatrix::Dense(m) => m[(j - 1) * self.n + (i - 1)],
            RhoMatrix::Hcm(r) => *r,
            RhoMatrix::Ncm { p, q } => {
                let n = self.n;
                let clockwise = i == j % n + 1; // j -> j+1 with N -> 1 wrap
                let counter = j == i % n + 1; // j -> j-1 with 1 -> N wrap
                if clockwise {
                    *p
                } else if counter {
                    *q
                } else {
                    0.0
                }
            }
        }
    }

    /// Contagion magnitude `h(k) = exp(-delta * k)`; `h(0) = 1`.
    pub fn h(&self, k: usize) -> f64 {
        (-self.delta * k as f64).exp()
    }

    fn h_real(&self, k: usize, bits: usize) -> Real {
        Real::from_f64(-self.delta, bits).mul_f64(k as f64).exp()
    }

    /// Contagion load `L_E(i)` of the defaulted set onto survivor `i`.
    pub fn contagion_load(&self, e: &ObligorSet, i: usize) -> Result<f64> {
        self.check_set(e)?;
        if i == 0 || i > self.n {
            return Err(Error::IndexOutOfRange { index: i, n: self.n });
        }
        if e.contains(i) {
            return Err(Error::Contract(format!(
                "contagion_load: obligor {i} is already in the defaulted set"
            )));
        }
        if e.is_empty() {
            return Ok(self.beta[i - 1]);
        }
        let mut s = 0.0;
        for j in e.members() {
            s += self.rho(j, i);
        }
        Ok(self.h(e.card()) * s)
    }

    /// Aggregate load on all survivors; zero when everyone has defaulted.
    pub fn aggregate_load(&self, e: &ObligorSet) -> f64 {
        debug_assert_eq!(e.n_total(), self.n);
        if e.is_full() {
            return 0.0;
        }
        if e.is_empty() {
            return self.a0();
        }
        if let RhoMatrix::Hcm(r) = self.rho {
            let k = e.card();
            return (self.n - k) as f64 * (self.h(k) * (r * k as f64));
        }
        e.survivors()
            .map(|i| self.contagion_load(e, i).expect("survivor"))
            .sum()
    }

    /// `L_E(i)` at extended precision; used by the kernel and pricing paths.
    pub(crate) fn contagion_load_real(&self, e: &ObligorSet, i: usize, bits: usize) -> Real {
        debug_assert!(!e.contains(i));
        if e.is_empty() {
            return Real::from_f64(self.beta[i - 1], bits);
        }
        let mut s = Real::zero(bits);
        for j in e.members() {
            s = s.add(&Real::from_f64(self.rho(j, i), bits));
        }
        self.h_real(e.card(), bits).mul(&s)
    }

    /// Aggregate load at extended precision. For homogeneous specs this is
    /// the survivor count times the per-survivor load, which matches the
    /// survivor sum bit-for-bit because the addends are identical.
    pub(crate) fn aggregate_load_real(&self, e: &ObligorSet, bits: usize) -> Real {
        if e.is_full() {
            return Real::zero(bits);
        }
        if e.is_empty() {
            let mut s = Real::zero(bits);
            for &b in &self.beta {
                s = s.add(&Real::from_f64(b, bits));
            }
            return s;
        }
        if let RhoMatrix::Hcm(r) = self.rho {
            let k = e.card();
            let per = self
                .h_real(k, bits)
                .mul(&Real::from_f64(r, bits).mul_f64(k as f64));
            return per.mul_f64((self.n - k) as f64);
        }
        let mut s = Real::zero(bits);
        for i in e.survivors() {
            s = s.add(&self.contagion_load_real(e, i, bits));
        }
        s
    }

    /// Product of contagion loads along the chain that defaults the obligors
    /// of `pi` in order, starting from `start`. Empty chains give 1.
    pub fn path_load(&self, start: &ObligorSet, pi: &[usize]) -> Result<f64> {
        self.check_set(start)?;
        let mut current = *start;
        let mut product = 1.0;
        for &obligor in pi {
            if current.contains(obligor) {
                return Err(Error::Contract(format!(
                    "path_load: obligor {obligor} repeats or is already defaulted"
                )));
            }
            product *= self.contagion_load(&current, obligor)?;
            current = current.with(obligor)?;
        }
        Ok(product)
    }

    /// Signed intensity `lambda_EF` given the current factor value
    /// `phi = Phi(t, Y_t)`: `phi * L_E(i)` for `F = E u {i}`, `-phi * Lbar_E`
    /// for `F = E`, zero otherwise.
    pub fn intensity(&self, e: &ObligorSet, f: &ObligorSet, phi_value: f64) -> Result<f64> {
        self.check_set(e)?;
        self.check_set(f)?;
        if !(phi_value >= 0.0) {
            return Err(Error::Domain(format!(
                "intensity: phi value {phi_value} must be nonnegative"
            )));
        }
        if e == f {
            return Ok(-phi_value * self.aggregate_load(e));
        }
        if !e.is_subset_of(f) || f.minus(e).card() != 1 {
            return Ok(0.0);
        }
        let i = f.minus(e).members().next().expect("single new obligor");
        Ok(phi_value * self.contagion_load(e, i)?)
    }

    fn check_set(&self, e: &ObligorSet) -> Result<()> {
        if e.n_total() != self.n {
            return Err(Error::Contract(format!(
                "set universe {} does not match spec N = {}",
                e.n_total(),
                self.n
            )));
        }
        Ok(())
    }
}

/// Per-obligor recovery rates.
#[derive(Debug, Clone)]
pub struct RecoveryVector {
    r: Vec<f64>,
    homogeneous: Option<f64>,
}

impl RecoveryVector {
    pub fn flat(n: usize, r: f64) -> Result<Self> {
        Self::new(vec![r; n])
    }

    pub fn new(r: Vec<f64>) -> Result<Self> {
        if r.is_empty() {
            return Err(Error::Contract("empty recovery vector".into()));
        }
        for (i, &x) in r.iter().enumerate() {
            if !(0.0..1.0).contains(&x) {
                return Err(Error::Domain(format!(
                    "recovery R[{}] = {x} outside [0,1)",
                    i + 1
                )));
            }
        }
        let homogeneous = if r.windows(2).all(|w| w[0] == w[1]) {
            Some(r[0])
        } else {
            None
        };
        Ok(RecoveryVector { r, homogeneous })
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// The common rate when all obligors share one.
    pub fn homogeneous(&self) -> Option<f64> {
        self.homogeneous
    }

    pub fn rate(&self, i: usize) -> f64 {
        self.r[i - 1]
    }

    /// Pool loss fraction `sum_{j in F} (1 - R_j) / N` of set F.
    pub fn loss_fraction(&self, f: &ObligorSet) -> f64 {
        let n = self.r.len() as f64;
        if let Some(r) = self.homogeneous {
            return f.card() as f64 * (1.0 - r) / n;
        }
        f.members().map(|j| 1.0 - self.rate(j)).sum::<f64>() / n
    }
}
