//! Piecewise Gauss-Legendre quadrature.
//!
//! All built-in kernels are polynomial between a handful of breakpoints and
//! tabulated kernels are piecewise linear, so splitting the range at the
//! breakpoints and applying a fixed-order rule on each piece integrates the
//! kernel functionals exactly up to rounding.

use std::f64::consts::PI;

/// Nodes and weights of an `n`-point Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = ((i as f64 + 0.75) / (nf + 0.5) * PI).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integral of `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        if b <= a {
            return 0.0;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Integral of `f` over `[a, b]`, split at every breakpoint strictly inside.
    /// `breaks` must be sorted ascending.
    pub fn integrate_pieces<F: FnMut(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        breaks: &[f64],
        mut f: F,
    ) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut total = 0.0;
        let mut lo = a;
        for &p in breaks.iter().filter(|&&p| p > a && p < b) {
            total += self.integrate(lo, p, &mut f);
            lo = p;
        }
        total + self.integrate(lo, b, &mut f)
    }
}

/// Value and derivative of the Legendre polynomial P_n at `x`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Sorts and removes near-duplicate breakpoints.
pub(crate) fn normalize_breaks(mut pts: Vec<f64>) -> Vec<f64> {
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 5, 8, 20] {
            let gl = GaussLegendre::new(n);
            let s: f64 = gl.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-14, "n={n} sum={s}");
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        let gl = GaussLegendre::new(6);
        for deg in 0..=11 {
            let got = gl.integrate(0.0, 1.0, |x| x.powi(deg));
            let want = 1.0 / (deg as f64 + 1.0);
            assert!((got - want).abs() < 1e-14, "deg={deg}");
        }
    }

    #[test]
    fn pieces_handle_kinks() {
        let gl = GaussLegendre::new(4);
        let got = gl.integrate_pieces(-1.0, 2.0, &[0.0], |x| x.abs());
        assert!((got - 2.5).abs() < 1e-14);
    }
}
