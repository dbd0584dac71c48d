//! Extended-precision arithmetic used by the closed-form pricing machinery.
//!
//! Alpha coefficients for a 125-name pool mix factorials as large as
//! `(124!)^2` with alternating signs, so the mixture sums cancel hundreds of
//! decimal digits. Everything on that path runs on [`Real`], a thin wrapper
//! around an arbitrary-precision binary float, at a precision chosen by
//! [`PrecisionPolicy`].

use std::cell::RefCell;
use std::cmp::Ordering;
use std::fmt;

use astro_float::{BigFloat, Consts, RoundingMode, Sign};

const RM: RoundingMode = RoundingMode::ToEven;

thread_local! {
    static CONSTS: RefCell<Consts> = RefCell::new(Consts::new().expect("constants cache"));
}

/// Working-precision settings threaded through kernels, pricing and calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionPolicy {
    /// Mantissa size in bits for extended-precision arithmetic (>= 53).
    pub mantissa_bits: usize,
    /// Relative tolerance under which two rate values count as colliding.
    pub collision_rel_tol: f64,
}

impl Default for PrecisionPolicy {
    fn default() -> Self {
        Self {
            mantissa_bits: 1024,
            collision_rel_tol: 1e-9,
        }
    }
}

impl PrecisionPolicy {
    pub fn with_bits(mantissa_bits: usize) -> Self {
        Self {
            mantissa_bits,
            ..Self::default()
        }
    }

    /// Same policy with the mantissa doubled; used by the pricing self-check.
    pub fn doubled(&self) -> Self {
        Self {
            mantissa_bits: self.mantissa_bits * 2,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.mantissa_bits < 53 {
            return Err(format!(
                "mantissa_bits must be >= 53, got {}",
                self.mantissa_bits
            ));
        }
        if !(self.collision_rel_tol > 0.0 && self.collision_rel_tol < 1.0) {
            return Err(format!(
                "collision_rel_tol must be in (0,1), got {}",
                self.collision_rel_tol
            ));
        }
        Ok(())
    }
}

/// Arbitrary-precision real number. The precision is fixed at construction
/// and propagated through operations (binary ops use the larger operand
/// precision).
#[derive(Clone)]
pub struct Real {
    v: BigFloat,
    p: usize,
}

impl Real {
    pub fn from_f64(x: f64, bits: usize) -> Self {
        Real {
            v: BigFloat::from_f64(x, bits),
            p: bits,
        }
    }

    pub fn from_usize(n: usize, bits: usize) -> Self {
        Real::from_f64(n as f64, bits).assert_finite()
    }

    pub fn zero(bits: usize) -> Self {
        Real::from_f64(0.0, bits)
    }

    pub fn one(bits: usize) -> Self {
        Real::from_f64(1.0, bits)
    }

    pub fn bits(&self) -> usize {
        self.p
    }

    fn wrap(&self, v: BigFloat) -> Real {
        Real { v, p: self.p }
    }

    fn assert_finite(self) -> Self {
        debug_assert!(!self.v.is_nan() && !self.v.is_inf(), "non-finite Real");
        self
    }

    pub fn is_zero(&self) -> bool {
        self.v.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.v.is_negative() && !self.v.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.v.is_positive() && !self.v.is_zero()
    }

    pub fn add(&self, rhs: &Real) -> Real {
        let p = self.p.max(rhs.p);
        Real {
            v: self.v.add(&rhs.v, p, RM),
            p,
        }
    }

    pub fn sub(&self, rhs: &Real) -> Real {
        let p = self.p.max(rhs.p);
        Real {
            v: self.v.sub(&rhs.v, p, RM),
            p,
        }
    }

    pub fn mul(&self, rhs: &Real) -> Real {
        let p = self.p.max(rhs.p);
        Real {
            v: self.v.mul(&rhs.v, p, RM),
            p,
        }
    }

    pub fn div(&self, rhs: &Real) -> Real {
        let p = self.p.max(rhs.p);
        Real {
            v: self.v.div(&rhs.v, p, RM),
            p,
        }
    }

    pub fn neg(&self) -> Real {
        self.wrap(self.v.neg())
    }

    pub fn abs(&self) -> Real {
        self.wrap(self.v.abs())
    }

    pub fn mul_f64(&self, rhs: f64) -> Real {
        self.mul(&Real::from_f64(rhs, self.p))
    }

    pub fn exp(&self) -> Real {
        CONSTS.with(|cc| self.wrap(self.v.exp(self.p, RM, &mut cc.borrow_mut())))
    }

    pub fn ln(&self) -> Real {
        CONSTS.with(|cc| self.wrap(self.v.ln(self.p, RM, &mut cc.borrow_mut())))
    }

    pub fn sqrt(&self) -> Real {
        self.wrap(self.v.sqrt(self.p, RM))
    }

    pub fn powi(&self, n: usize) -> Real {
        self.wrap(self.v.powi(n, self.p, RM))
    }

    pub fn cmp(&self, rhs: &Real) -> Ordering {
        match self.v.cmp(&rhs.v) {
            Some(s) if s < 0 => Ordering::Less,
            Some(s) if s > 0 => Ordering::Greater,
            _ => Ordering::Equal,
        }
    }

    /// Binary exponent of |x| (position of the leading bit), or `None` for zero.
    pub fn exponent2(&self) -> Option<i64> {
        if self.v.is_zero() {
            None
        } else {
            self.v.exponent().map(|e| e as i64)
        }
    }

    /// Nearest f64, saturating to +/-inf outside the double range.
    pub fn to_f64(&self) -> f64 {
        if self.v.is_zero() {
            return 0.0;
        }
        if self.v.is_nan() {
            return f64::NAN;
        }
        if self.v.is_inf_pos() {
            return f64::INFINITY;
        }
        if self.v.is_inf_neg() {
            return f64::NEG_INFINITY;
        }
        let (words, _n, sign, e, _inexact) = self.v.as_raw_parts().expect("finite raw parts");
        // Mantissa words are little-endian; the number is sign * frac * 2^e
        // with frac in [0.5, 1). Two leading words give > 53 significant bits.
        let top = *words.last().unwrap() as u128;
        let lo = if words.len() >= 2 {
            words[words.len() - 2] as u128
        } else {
            0
        };
        let frac128 = (top << 64) | lo;
        let mut x = frac128 as f64; // ~2^128 scale
        let shift = e as i64 - 128;
        // Apply 2^shift in two steps to dodge premature under/overflow.
        let half = (shift / 2) as i32;
        let rest = (shift - half as i64) as i32;
        x *= 2f64.powi(half);
        x *= 2f64.powi(rest);
        if sign == Sign::Neg {
            -x
        } else {
            x
        }
    }
}

impl fmt::Debug for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Real({:e}, p={})", self.to_f64(), self.p)
    }
}

/// Sum accumulator that tracks the largest term magnitude so callers can
/// measure how many bits of cancellation a mixture consumed.
pub struct CancelSum {
    acc: Real,
    max_exp: Option<i64>,
}

impl CancelSum {
    pub fn new(bits: usize) -> Self {
        CancelSum {
            acc: Real::zero(bits),
            max_exp: None,
        }
    }

    pub fn add(&mut self, term: &Real) {
        if let Some(e) = term.exponent2() {
            self.max_exp = Some(self.max_exp.map_or(e, |m| m.max(e)));
        }
        self.acc = self.acc.add(term);
    }

    pub fn value(&self) -> &Real {
        &self.acc
    }

    /// Bits lost to cancellation: exponent gap between the largest term and
    /// the result. Zero when nothing cancelled.
    pub fn cancelled_bits(&self) -> i64 {
        match (self.max_exp, self.acc.exponent2()) {
            (Some(m), Some(r)) => (m - r).max(0),
            (Some(_), None) => i64::MAX, // total cancellation to exact zero
            _ => 0,
        }
    }
}
