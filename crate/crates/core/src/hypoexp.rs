//! Alpha coefficients and hypoexponential mixtures.
//!
//! A chain through defaulted sets with pairwise-distinct aggregate loads
//! `l_0, ..., l_n` contributes the mixture `H_n(z) = sum_i alpha_i e^{-l_i z}`
//! where the alpha family satisfies
//!
//! ```text
//! alpha^(0)_0 = 1
//! alpha^(m)_i = alpha^(m-1)_i / (l_m - l_i),   i < m
//! alpha^(m)_m = -sum_{i<m} alpha^(m)_i
//! ```
//!
//! The recursion is evaluated at extended precision: for long ladders the
//! coefficients alternate in sign and grow past 1e250 while the mixture
//! itself stays inside [0, 1].

use crate::error::{Error, Result};
use crate::precision::{CancelSum, PrecisionPolicy, Real};

/// Incremental builder: pushing rate `l_m` extends the coefficient row from
/// order `m-1` to `m`. Kept separate from [`AlphaTable`] so chain walks
/// (pricing ladders, kernel paths) can share prefixes.
#[derive(Clone)]
pub struct AlphaLadder {
    bits: usize,
    tol: f64,
    rates_f64: Vec<f64>,
    rates: Vec<Real>,
    coeffs: Vec<Real>,
}

impl AlphaLadder {
    pub fn new(policy: &PrecisionPolicy) -> Self {
        AlphaLadder {
            bits: policy.mantissa_bits,
            tol: policy.collision_rel_tol,
            rates_f64: Vec::new(),
            rates: Vec::new(),
            coeffs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn rates(&self) -> &[Real] {
        &self.rates
    }

    pub fn rates_f64(&self) -> &[f64] {
        &self.rates_f64
    }

    /// Current coefficient row `alpha^(m)_0..alpha^(m)_m` where `m = len - 1`.
    pub fn coeffs(&self) -> &[Real] {
        &self.coeffs
    }

    pub fn push(&mut self, rate: Real) -> Result<()> {
        let rf = rate.to_f64();
        for (j, &prev) in self.rates_f64.iter().enumerate() {
            if (prev - rf).abs() <= self.tol * prev.abs().max(rf.abs()) {
                return Err(Error::RateCollision {
                    i: j,
                    j: self.rates_f64.len(),
                    li: prev,
                    lj: rf,
                    tol: self.tol,
                });
            }
        }
        if self.rates.is_empty() {
            self.coeffs.push(Real::one(self.bits));
        } else {
            let m = self.rates.len();
            let mut tail = Real::zero(self.bits);
            for i in 0..m {
                let denom = rate.sub(&self.rates[i]);
                self.coeffs[i] = self.coeffs[i].div(&denom);
                tail = tail.add(&self.coeffs[i]);
            }
            self.coeffs.push(tail.neg());
        }
        self.rates_f64.push(rf);
        self.rates.push(rate);
        Ok(())
    }

    pub fn into_table(self) -> AlphaTable {
        AlphaTable {
            rates: self.rates,
            coeffs: self.coeffs,
            bits: self.bits,
        }
    }
}

/// Rates and their alpha coefficients at working precision.
#[derive(Clone, Debug)]
pub struct AlphaTable {
    rates: Vec<Real>,
    coeffs: Vec<Real>,
    bits: usize,
}

impl AlphaTable {
    pub fn order(&self) -> usize {
        self.rates.len() - 1
    }

    pub fn rates(&self) -> &[Real] {
        &self.rates
    }

    pub fn coeffs(&self) -> &[Real] {
        &self.coeffs
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    /// `H_n(z) = sum_i alpha_i e^{-l_i z}` at working precision.
    pub fn mix_real(&self, z: f64) -> Real {
        let zr = Real::from_f64(z, self.bits);
        let mut sum = CancelSum::new(self.bits);
        for (a, l) in self.coeffs.iter().zip(&self.rates) {
            let term = a.mul(&l.neg().mul(&zr).exp());
            sum.add(&term);
        }
        sum.value().clone()
    }

    /// Mixture against caller-supplied weights `w_i` in place of
    /// `e^{-l_i z}`; returns the accumulator so the caller can inspect how
    /// much cancellation occurred.
    pub fn mix_weights(&self, weights: &[Real]) -> CancelSum {
        debug_assert_eq!(weights.len(), self.coeffs.len());
        let mut sum = CancelSum::new(self.bits);
        for (a, w) in self.coeffs.iter().zip(weights) {
            sum.add(&a.mul(w));
        }
        sum
    }

    /// Residual of the alpha sum with the last coefficient taken from the
    /// independent product form instead of the forced last step, and the
    /// bound `2^{-bits/2} * max|alpha_i|` it must stay under.
    pub fn cancellation_sentinel(&self) -> (f64, f64) {
        let m = self.order();
        let mut sum = self
            .coeffs
            .iter()
            .take(m)
            .fold(Real::zero(self.bits), |acc, a| acc.add(a));
        sum = sum.add(&alpha_product_form(&self.rates, m));
        let max_exp = self
            .coeffs
            .iter()
            .filter_map(|a| a.exponent2())
            .max()
            .unwrap_or(0);
        let bound = 2f64.powi(-((self.bits / 2) as i32))
            * 2f64.powf(max_exp as f64);
        (sum.to_f64().abs(), bound)
    }
}

/// Builds the alpha table for a full rate vector.
pub fn alpha_coeffs(rates: &[f64], policy: &PrecisionPolicy) -> Result<AlphaTable> {
    if rates.is_empty() {
        return Err(Error::Contract("alpha_coeffs: empty rate vector".into()));
    }
    let mut ladder = AlphaLadder::new(policy);
    for &r in rates {
        ladder.push(Real::from_f64(r, policy.mantissa_bits))?;
    }
    Ok(ladder.into_table())
}

/// Independent cross-check path: `alpha^(n)_i = prod_{j != i} (l_j - l_i)^{-1}`.
/// Never used in production evaluation.
pub fn alpha_product_form(rates: &[Real], i: usize) -> Real {
    let bits = rates[i].bits();
    let mut prod = Real::one(bits);
    for (j, l) in rates.iter().enumerate() {
        if j != i {
            prod = prod.mul(&l.sub(&rates[i]));
        }
    }
    Real::one(bits).div(&prod)
}

/// `H_n(z)` as a double.
pub fn hypoexp_mix(table: &AlphaTable, z: f64) -> Result<f64> {
    if !(z >= 0.0) {
        return Err(Error::Domain(format!("hypoexp_mix: z = {z} must be >= 0")));
    }
    Ok(table.mix_real(z).to_f64())
}

const INTEGRAL_MAX_ORDER: usize = 6;

/// Slow oracle: evaluates the iterated-convolution recursion
/// `H_m(0, z) = int_0^z e^{-l_m (z-u)} H_{m-1}(0, u) du` by quadrature on a
/// doubling grid, with no alpha shortcut. Test use only; refuses n > 6.
pub fn hypoexp_mix_integral(rates: &[f64], z: f64) -> Result<f64> {
    let n = rates.len() - 1;
    if n > INTEGRAL_MAX_ORDER {
        return Err(Error::SizeRefusal {
            what: "hypoexp_mix_integral",
            got: n,
            limit: INTEGRAL_MAX_ORDER,
        });
    }
    if !(z >= 0.0) {
        return Err(Error::Domain(format!("z = {z} must be >= 0")));
    }
    if z == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let mut m = 512usize;
    let mut prev = convolve_levels(rates, z, m);
    loop {
        m *= 2;
        let next = convolve_levels(rates, z, m);
        if (next - prev).abs() <= 1e-15 + 1e-11 * next.abs() || m >= 1 << 18 {
            // scheme is fourth order: one Richardson step on the last pair
            return Ok(next + (next - prev) / 15.0);
        }
        prev = next;
    }
}

/// One pass of the level-by-level convolution on an `m`-panel uniform grid.
fn convolve_levels(rates: &[f64], z: f64, m: usize) -> f64 {
    let h = z / m as f64;
    let mut level: Vec<f64> = (0..=m).map(|j| (-rates[0] * h * j as f64).exp()).collect();
    for &l in &rates[1..] {
        let decay = (-l * h).exp();
        let (w_prev, w_mid, w_next) = panel_weights(l, h);
        let mut next = vec![0.0; m + 1];
        for j in 1..=m {
            // c_j = e^{-l h} c_{j-1} + int over the last panel, with the
            // integrand's H-part interpolated quadratically.
            let (f0, f1, f2) = if j >= 2 {
                (level[j - 2], level[j - 1], level[j])
            } else {
                // first panel: use the forward triple shifted one panel left
                let fm1 = quad_extrapolate(level[0], level[1], level[2]);
                (fm1, level[0], level[1])
            };
            next[j] = decay * next[j - 1] + w_prev * f0 + w_mid * f1 + w_next * f2;
        }
        level = next;
    }
    level[m]
}

/// Quadratic extrapolation one step left of three equally spaced values.
fn quad_extrapolate(f0: f64, f1: f64, f2: f64) -> f64 {
    3.0 * f0 - 3.0 * f1 + f2
}

/// Weights so that `w_prev f(-h) + w_mid f(0) + w_next f(h)` equals
/// `int_0^h e^{-l (h-s)} q(s) ds` exactly for quadratics `q`.
fn panel_weights(l: f64, h: f64) -> (f64, f64, f64) {
    let x = l * h;
    // moments of s^r against e^{-l(h-s)} on [0, h]
    let (a0, a1, a2) = if x.abs() < 1e-4 {
        // series in x to dodge cancellation of the closed forms
        let a0 = h * (1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0);
        let a1 = h * h * (0.5 - x / 3.0 + x * x / 8.0 - x * x * x / 30.0);
        let a2 = h * h * h * (1.0 / 3.0 - x / 4.0 + x * x / 10.0 - x * x * x / 36.0);
        (a0, a1, a2)
    } else {
        let em = (-x).exp();
        let i0 = (1.0 - em) / l; // int e^{-l w} dw
        let i1 = (1.0 - em * (1.0 + x)) / (l * l);
        let i2 = (2.0 - em * (2.0 + 2.0 * x + x * x)) / (l * l * l);
        // s = h - w
        (i0, h * i0 - i1, h * h * i0 - 2.0 * h * i1 + i2)
    };
    // Lagrange basis on nodes {-h, 0, h}
    let h2 = h * h;
    let w_prev = (a2 - h * a1) / (2.0 * h2);
    let w_mid = (h2 * a0 - a2) / h2;
    let w_next = (a2 + h * a1) / (2.0 * h2);
    (w_prev, w_mid, w_next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn policy() -> PrecisionPolicy {
        PrecisionPolicy::default()
    }

    fn coeffs_f64(t: &AlphaTable) -> Vec<f64> {
        t.coeffs().iter().map(|c| c.to_f64()).collect()
    }

    #[test]
    fn order_zero_is_one() {
        let t = alpha_coeffs(&[0.7], &policy()).unwrap();
        assert_eq!(coeffs_f64(&t), vec![1.0]);
    }

    #[test]
    fn single_obligor_pair() {
        // rates (beta_1, 0) -> (-1/beta_1, 1/beta_1)
        let beta = 0.37;
        let t = alpha_coeffs(&[beta, 0.0], &policy()).unwrap();
        let c = coeffs_f64(&t);
        assert_relative_eq!(c[0], -1.0 / beta, max_relative = 1e-14);
        assert_relative_eq!(c[1], 1.0 / beta, max_relative = 1e-14);
    }

    #[test]
    fn hand_recursion_1_2_3() {
        let t = alpha_coeffs(&[1.0, 2.0, 3.0], &policy()).unwrap();
        let c = coeffs_f64(&t);
        assert_relative_eq!(c[0], 0.5, max_relative = 1e-14);
        assert_relative_eq!(c[1], -1.0, max_relative = 1e-14);
        assert_relative_eq!(c[2], 0.5, max_relative = 1e-14);
    }

    #[test]
    fn recursion_matches_product_form_to_1e20() {
        let rates: Vec<f64> = (0..=20).map(|k| 0.3 + 0.7 * k as f64).collect();
        let t = alpha_coeffs(&rates, &policy()).unwrap();
        for i in 0..=20 {
            let prod = alpha_product_form(t.rates(), i);
            let rec = &t.coeffs()[i];
            let rel = rec.sub(&prod).div(&prod).abs().to_f64();
            assert!(rel < 1e-20, "i = {i}: rel = {rel}");
        }
    }

    #[test]
    fn collision_is_an_error_not_a_perturbation() {
        let err = alpha_coeffs(&[1.0, 2.0, 2.0 + 1e-12], &policy()).unwrap_err();
        match err {
            Error::RateCollision { i, j, .. } => {
                assert_eq!((i, j), (1, 2));
            }
            other => panic!("expected RateCollision, got {other:?}"),
        }
    }

    #[test]
    fn coefficient_sum_vanishes_for_positive_order() {
        let t = alpha_coeffs(&[0.35, 6.3, 12.4, 18.2], &policy()).unwrap();
        let sum: f64 = t
            .coeffs()
            .iter()
            .fold(Real::zero(64), |a, c| a.add(c))
            .to_f64();
        assert_eq!(sum, 0.0); // forced last step makes this exact
        assert_eq!(hypoexp_mix(&t, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn mix_two_rates_matches_convolution_value() {
        let t = alpha_coeffs(&[1.0, 2.0], &policy()).unwrap();
        let v = hypoexp_mix(&t, 1.0).unwrap();
        assert_relative_eq!(v, (-1.0f64).exp() - (-2.0f64).exp(), max_relative = 1e-13);
        assert_relative_eq!(v, 0.23254, max_relative = 1e-4);
    }

    #[test]
    fn base_case_mix_is_plain_exponential() {
        let t = alpha_coeffs(&[0.8], &policy()).unwrap();
        assert_relative_eq!(
            hypoexp_mix(&t, 2.5).unwrap(),
            (-0.8f64 * 2.5).exp(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn integral_oracle_matches_base_case_exactly() {
        let v = hypoexp_mix_integral(&[0.8], 2.5).unwrap();
        assert_relative_eq!(v, (-0.8f64 * 2.5).exp(), max_relative = 1e-12);
    }

    #[test]
    fn integral_oracle_two_and_three_rates() {
        let v = hypoexp_mix_integral(&[1.0, 2.0], 1.0).unwrap();
        assert_relative_eq!(v, (-1.0f64).exp() - (-2.0f64).exp(), epsilon = 1e-10);

        let t = alpha_coeffs(&[1.0, 2.0, 3.0], &policy()).unwrap();
        let closed = hypoexp_mix(&t, 0.7).unwrap();
        let quad = hypoexp_mix_integral(&[1.0, 2.0, 3.0], 0.7).unwrap();
        assert_relative_eq!(quad, closed, epsilon = 1e-10);
    }

    #[test]
    fn integral_oracle_refuses_large_order() {
        let rates: Vec<f64> = (0..8).map(|k| 1.0 + k as f64).collect();
        assert!(matches!(
            hypoexp_mix_integral(&rates, 1.0),
            Err(Error::SizeRefusal { .. })
        ));
    }

    #[test]
    fn oracle_equivalence_up_to_order_six() {
        // spread ratio up to 1e4
        let cases: Vec<Vec<f64>> = vec![
            vec![0.011, 3.7, 21.0, 110.0],
            vec![5.0, 1.0, 40.0, 8.0, 0.3],
            vec![2.0, 4.0, 6.0, 8.0, 10.0, 12.0],
            vec![0.35, 6.28, 12.42, 18.4, 24.2, 29.8, 35.2],
        ];
        for rates in cases {
            let t = alpha_coeffs(&rates, &policy()).unwrap();
            for &z in &[0.05, 0.4, 1.3] {
                let closed = hypoexp_mix(&t, z).unwrap();
                let quad = hypoexp_mix_integral(&rates, z).unwrap();
                assert_relative_eq!(quad, closed, max_relative = 1e-9, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn cancellation_sentinel_stays_under_bound() {
        // ladder like the homogeneous model's: steep growth then decay
        let n = 40usize;
        let rates: Vec<f64> = std::iter::once(0.35)
            .chain((1..=n).map(|k| 0.05 * (k * (n + 1 - k)) as f64 * (0.008 * k as f64).exp()))
            .collect();
        let t = alpha_coeffs(&rates, &policy()).unwrap();
        let (residual, bound) = t.cancellation_sentinel();
        assert!(
            residual <= bound,
            "sentinel {residual:e} exceeds bound {bound:e}"
        );
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn distinct_rates() -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(0.01f64..50.0, 2..7).prop_filter(
                "pairwise distinct",
                |v| {
                    v.iter().enumerate().all(|(i, a)| {
                        v[..i]
                            .iter()
                            .all(|b| (a - b).abs() > 1e-4 * a.abs().max(b.abs()))
                    })
                },
            )
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            // H_n(z) > 0 for z > 0: it is an iterated convolution of
            // positive integrands.
            #[test]
            fn mixture_is_positive(rates in distinct_rates(), z in 1e-3f64..10.0) {
                let t = alpha_coeffs(&rates, &policy()).unwrap();
                prop_assert!(hypoexp_mix(&t, z).unwrap() > 0.0);
            }

            // Permuting the rates permutes the coefficients consistently:
            // the mixture value does not change.
            #[test]
            fn mixture_is_permutation_invariant(rates in distinct_rates(), z in 0.0f64..10.0, seed in 0u64..1000) {
                let t = alpha_coeffs(&rates, &policy()).unwrap();
                let mut shuffled = rates.clone();
                // cheap deterministic shuffle
                let k = shuffled.len();
                for i in (1..k).rev() {
                    let j = (seed as usize).wrapping_mul(6364136223846793005).wrapping_add(i) % (i + 1);
                    shuffled.swap(i, j);
                }
                let t2 = alpha_coeffs(&shuffled, &policy()).unwrap();
                let a = hypoexp_mix(&t, z).unwrap();
                let b = hypoexp_mix(&t2, z).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300));
            }
        }
    }
}
