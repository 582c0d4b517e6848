//! Gauss–Kronrod (7, 15) quadrature: single panels, fixed panel sets and a
//! globally adaptive driver that keeps bisecting the worst panel.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;
use thiserror::Error;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

/// Gauss weights for the odd-indexed Kronrod nodes (the 7-point rule).
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadResult {
    pub value: f64,
    /// `Σ |K15 − G7|` over panels.
    pub error: f64,
    pub evaluations: usize,
    pub panels: usize,
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum QuadError {
    #[error("quadrature did not converge: value {value}, error bound {error:e} after {panels} panels")]
    NoConvergence { value: f64, error: f64, panels: usize },
    #[error("integrand is not finite at {0}")]
    NonFinite(f64),
}

/// Absolute/relative targets and a panel budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_panels: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 1e-13, rel: 1e-11, max_panels: 200_000 }
    }
}

/// One G7K15 panel on `[a, b]`: (Kronrod value, |Kronrod − Gauss|).
pub fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = half * XGK[i];
        let pair = f(mid - dx) + f(mid + dx);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Sum of GK15 over `panels` equal panels.
pub fn fixed_panels(f: &impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> QuadResult {
    let h = (b - a) / panels as f64;
    let (mut value, mut error) = (0.0, 0.0);
    for i in 0..panels {
        let lo = a + h * i as f64;
        let hi = if i + 1 == panels { b } else { lo + h };
        let (v, e) = gk15(f, lo, hi);
        value += v;
        error += e;
    }
    QuadResult { value, error, evaluations: 15 * panels, panels }
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Adaptive integration starting from the panels delimited by `breaks`
/// (sorted, at least two points). The worst panel is bisected until the
/// summed error meets the tolerance.
pub fn adaptive(f: &impl Fn(f64) -> f64, breaks: &[f64], tol: &Tolerance) -> Result<QuadResult, QuadError> {
    assert!(breaks.len() >= 2, "need at least one panel");
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    let (mut value, mut error) = (0.0, 0.0);
    let mut push = |heap: &mut BinaryHeap<Panel>, a: f64, b: f64| -> Result<(f64, f64), QuadError> {
        let (v, e) = gk15(f, a, b);
        evaluations += 15;
        if !v.is_finite() {
            return Err(QuadError::NonFinite(0.5 * (a + b)));
        }
        heap.push(Panel { a, b, value: v, error: e });
        Ok((v, e))
    };
    for w in breaks.windows(2) {
        let (v, e) = push(&mut heap, w[0], w[1])?;
        value += v;
        error += e;
    }
    while error > tol.abs.max(tol.rel * value.abs()) {
        if heap.len() >= tol.max_panels {
            return Err(QuadError::NoConvergence { value, error, panels: heap.len() });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // panel cannot be split further in floating point
            heap.push(worst);
            return Err(QuadError::NoConvergence { value, error, panels: heap.len() });
        }
        let (v1, e1) = push(&mut heap, worst.a, mid)?;
        let (v2, e2) = push(&mut heap, mid, worst.b)?;
        value += v1 + v2 - worst.value;
        error += e1 + e2 - worst.error;
    }
    // re-sum to shed the drift of the running totals
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum();
    Ok(QuadResult { value, error, evaluations, panels: heap.len() })
}

/// Equally spaced break points so that no panel is wider than `max_width`.
pub fn breakpoints(a: f64, b: f64, max_width: f64) -> Vec<f64> {
    let n = ((b - a) / max_width).ceil().max(1.0) as usize;
    (0..=n).map(|i| if i == n { b } else { a + (b - a) * i as f64 / n as f64 }).collect()
}

/// Composite Simpson rule on `cells` (rounded up to even) equal cells. Slow
/// but independent of the Gauss–Kronrod machinery.
pub fn composite_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, cells: usize) -> f64 {
    let n = cells + cells % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * i as f64);
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_panel_is_exact_for_polynomials() {
        let (v, e) = gk15(&|x: f64| x.powi(13) + 3.0 * x * x, -1.0, 2.0);
        let want = (2f64.powi(14) - 1.0) / 14.0 + 9.0;
        assert!((v - want).abs() < 1e-10 * want);
        assert!(e < 1e-8);
        // the embedded Gauss rule integrates degree 13 exactly too
        let (v, e) = gk15(&|x: f64| x.powi(12), 0.0, 1.0);
        assert!((v - 1.0 / 13.0).abs() < 1e-15 && e < 1e-14);
    }

    #[test]
    fn adaptive_handles_oscillation_and_endpoint_singularity() {
        let tol = Tolerance::default();
        let r = adaptive(&|x: f64| (40.0 * x).sin() * x, &breakpoints(0.0, 10.0, 0.05), &tol).unwrap();
        let want = ((400.0f64).sin() - 400.0 * (400.0f64).cos()) / 1600.0;
        assert!((r.value - want).abs() < 1e-11);
        let r = adaptive(&|x: f64| 1.0 / x.sqrt(), &[0.0, 1.0], &Tolerance { abs: 1e-9, rel: 1e-9, ..tol }).unwrap();
        assert!((r.value - 2.0).abs() < 1e-8);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let tol = Tolerance { abs: 1e-15, rel: 0.0, max_panels: 4 };
        let err = adaptive(&|x: f64| (1.0 / x).sin(), &[1e-6, 1.0], &tol).unwrap_err();
        assert!(matches!(err, QuadError::NoConvergence { panels: 4, .. }));
    }

    #[test]
    fn fixed_panel_error_shrinks_with_more_nodes() {
        let f = |x: f64| (3.0 * x).cos() * (-x).exp();
        let mut last = f64::INFINITY;
        for panels in [1, 2, 4, 8] {
            let r = fixed_panels(&f, 0.0, 6.0, panels);
            assert!(r.error < last);
            last = r.error;
        }
    }

    #[test]
    fn simpson_agrees_with_kronrod() {
        let f = |x: f64| (x * x).sin();
        let s = composite_simpson(&f, 0.0, 3.0, 200_000);
        let k = adaptive(&f, &[0.0, 3.0], &Tolerance::default()).unwrap();
        assert!((s - k.value).abs() < 1e-12);
    }
}
