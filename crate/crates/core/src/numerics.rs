//! Small numerical utilities shared across modules: adaptive Gauss-Kronrod
//! quadrature, an embedded Runge-Kutta integrator, bisection, Halton points
//! and a one-sample Kolmogorov-Smirnov test.

/// 7-point Gauss / 15-point Kronrod nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kronrod = 0.0;
    let mut gauss = 0.0;
    for i in 0..8 {
        let (fl, fr) = if i == 7 {
            let v = f(c);
            (v, 0.0)
        } else {
            (f(c - h * XGK[i]), f(c + h * XGK[i]))
        };
        let fsum = if i == 7 { fl } else { fl + fr };
        kronrod += WGK[i] * fsum;
        if i % 2 == 1 {
            gauss += WG[i / 2] * fsum;
        }
    }
    (kronrod * h, (kronrod - gauss).abs() * h)
}

/// Adaptive Gauss-Kronrod integration to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (val, err) = gk15(f, a, b);
        if err <= tol || depth >= 48 {
            val
        } else {
            let c = 0.5 * (a + b);
            rec(f, a, c, 0.5 * tol, depth + 1) + rec(f, c, b, 0.5 * tol, depth + 1)
        }
    }
    rec(f, a, b, tol, 0)
}

/// Embedded Cash-Karp RK45 with adaptive stepping for small fixed-size
/// systems. `f(t, y)` returns dy/dt.
pub fn rk45<const N: usize, F: Fn(f64, &[f64; N]) -> [f64; N]>(
    f: &F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    tol: f64,
) -> [f64; N] {
    if t1 == t0 {
        return y0;
    }
    let mut t = t0;
    let mut y = y0;
    let mut h = (t1 - t0) / 64.0;
    let hmin = (t1 - t0) * 1e-14;
    while t < t1 {
        if t + h > t1 {
            h = t1 - t;
        }
        let (ynew, err) = ck_step(f, t, &y, h);
        let scale: f64 = tol + tol * norm_inf(&y);
        if err <= scale || h <= hmin {
            t += h;
            y = ynew;
        }
        let factor = if err > 0.0 {
            0.9 * (scale / err).powf(0.2)
        } else {
            4.0
        };
        h *= factor.clamp(0.2, 4.0);
        h = h.max(hmin);
    }
    y
}

fn norm_inf<const N: usize>(y: &[f64; N]) -> f64 {
    y.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[allow(clippy::needless_range_loop)]
fn ck_step<const N: usize, F: Fn(f64, &[f64; N]) -> [f64; N]>(
    f: &F,
    t: f64,
    y: &[f64; N],
    h: f64,
) -> ([f64; N], f64) {
    const A: [f64; 6] = [0.0, 0.2, 0.3, 0.6, 1.0, 0.875];
    const B: [[f64; 5]; 6] = [
        [0.0, 0.0, 0.0, 0.0, 0.0],
        [0.2, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
        [0.3, -0.9, 1.2, 0.0, 0.0],
        [-11.0 / 54.0, 2.5, -70.0 / 27.0, 35.0 / 27.0, 0.0],
        [
            1631.0 / 55296.0,
            175.0 / 512.0,
            575.0 / 13824.0,
            44275.0 / 110592.0,
            253.0 / 4096.0,
        ],
    ];
    const C5: [f64; 6] = [37.0 / 378.0, 0.0, 250.0 / 621.0, 125.0 / 594.0, 0.0, 512.0 / 1771.0];
    const C4: [f64; 6] = [
        2825.0 / 27648.0,
        0.0,
        18575.0 / 48384.0,
        13525.0 / 55296.0,
        277.0 / 14336.0,
        0.25,
    ];
    let mut k = [[0.0; N]; 6];
    k[0] = f(t, y);
    for s in 1..6 {
        let mut ys = *y;
        for i in 0..N {
            for (j, kj) in k.iter().enumerate().take(s) {
                ys[i] += h * B[s][j] * kj[i];
            }
        }
        k[s] = f(t + A[s] * h, &ys);
    }
    let mut y5 = *y;
    let mut err = 0.0f64;
    for i in 0..N {
        let mut d5 = 0.0;
        let mut d4 = 0.0;
        for s in 0..6 {
            d5 += C5[s] * k[s][i];
            d4 += C4[s] * k[s][i];
        }
        y5[i] += h * d5;
        err = err.max((h * (d5 - d4)).abs());
    }
    (y5, err)
}

/// First `t` in `[lo, hi]` with `f(t) >= target`, for nondecreasing `f`,
/// found by bisection to absolute tolerance `tol`. Assumes
/// `f(lo) < target <= f(hi)`.
pub fn bisect_crossing<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, target: f64, tol: f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

const HALTON_PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Halton low-discrepancy point in the unit cube (index should start at 1).
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= HALTON_PRIMES.len());
    (0..dim)
        .map(|d| {
            let base = HALTON_PRIMES[d] as u64;
            let mut i = index;
            let mut f = 1.0;
            let mut x = 0.0;
            while i > 0 {
                f /= base as f64;
                x += f * (i % base) as f64;
                i /= base;
            }
            x
        })
        .collect()
}

/// One-sample Kolmogorov-Smirnov test of `samples` against U(0,1).
/// Returns (D, approximate p-value).
pub fn ks_test_uniform(samples: &mut [f64]) -> (f64, f64) {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((x - lo).abs()).max((hi - x).abs());
    }
    // Stephens' finite-sample correction feeding the Kolmogorov tail
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    (d, kolmogorov_tail(lambda))
}

/// Tail probability `P(K > lambda)` of the Kolmogorov distribution. Uses the
/// alternating series for large arguments and its theta-dual for small ones,
/// where the alternating form converges too slowly.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.755 {
        let f = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let mut cdf = 0.0;
        for k in 1..50 {
            let m = (2 * k - 1) as f64;
            let term = (-m * m * f).exp();
            cdf += term;
            if term < 1e-16 {
                break;
            }
        }
        cdf *= (2.0 * std::f64::consts::PI).sqrt() / lambda;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut p = 0.0;
        for k in 1..101 {
            let term = 2.0
                * (-1.0f64).powi(k - 1)
                * (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
            p += term;
            if term.abs() < 1e-16 {
                break;
            }
        }
        p.clamp(0.0, 1.0)
    }
}
