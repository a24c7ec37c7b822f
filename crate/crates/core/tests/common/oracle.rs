//! Independent reference computations for the ANOVA path. Nothing here calls
//! into the library: sums of squares come from the residual formula and the
//! F tail from direct quadrature of the (numerically normalized) density.

#![allow(dead_code)]

pub struct BruteAnova {
    pub ss_condition: f64,
    pub ss_subject: f64,
    pub ss_error: f64,
    pub ss_total: f64,
    pub f: f64,
}

/// Two-pass sums of squares; the error term is summed from explicit residuals
/// `x_ij - row_i - col_j + grand` rather than obtained by subtraction.
pub fn brute_anova(rows: &[Vec<f64>]) -> BruteAnova {
    let n = rows.len();
    let k = rows[0].len();
    let mut grand = 0.0;
    for r in rows {
        for x in r {
            grand += x;
        }
    }
    grand /= (n * k) as f64;
    let row_mean: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>() / k as f64).collect();
    let mut col_mean = vec![0.0; k];
    for r in rows {
        for j in 0..k {
            col_mean[j] += r[j] / n as f64;
        }
    }
    let (mut ssc, mut sss, mut sse, mut sst) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..k {
            let x = rows[i][j];
            ssc += (col_mean[j] - grand).powi(2);
            sss += (row_mean[i] - grand).powi(2);
            sse += (x - row_mean[i] - col_mean[j] + grand).powi(2);
            sst += (x - grand).powi(2);
        }
    }
    let f = (ssc / (k - 1) as f64) / (sse / ((n - 1) * (k - 1)) as f64);
    BruteAnova { ss_condition: ssc, ss_subject: sss, ss_error: sse, ss_total: sst, f }
}

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    // split into panels so the adaptive rule sees the peak
    let panels = 64;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (fa, fb, fm) = (f(lo), f(hi), f(0.5 * (lo + hi)));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            simpson(&f, lo, hi, fa, fm, fb, whole, tol / panels as f64, 40)
        })
        .sum()
}

/// P(F > f) by quadrature. Substitutes x = s², s = v / (1 - v) so the
/// integrand is smooth on v ∈ [0, 1).
pub fn f_tail_quadrature(f: f64, d1: f64, d2: f64) -> f64 {
    let integrand = |v: f64| {
        if v >= 1.0 {
            return 0.0;
        }
        let s = v / (1.0 - v);
        let ln = (d1 - 1.0) * s.ln() - 0.5 * (d1 + d2) * (1.0 + d1 * s * s / d2).ln();
        let g = if s == 0.0 { if d1 == 1.0 { 1.0 } else { 0.0 } } else { ln.exp() };
        2.0 * g / (1.0 - v).powi(2)
    };
    let total = integrate(integrand, 0.0, 1.0, 1e-14);
    let s0 = f.sqrt();
    let tail = integrate(integrand, s0 / (1.0 + s0), 1.0, 1e-14);
    tail / total
}
