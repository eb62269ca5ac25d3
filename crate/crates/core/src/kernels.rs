//! Smoothing kernels and the constants the estimators derive from them.
//!
//! Every kernel is a symmetric density supported on `[-b, b]`. Besides point
//! evaluation, the estimators need four functionals of `f`:
//!
//! * `∫ f(r)² dr`, the variance factor of the rate estimator;
//! * `γ_f = ∬ f(r₁) f(r₂) |r₁ - r₂| dr₁ dr₂ - 2 ∫ f(r) |r| dr`, the bias factor (always negative);
//! * the autoconvolution `g(x) = ∫ f(r + x) f(r) dr`, the Poisson self-overlap of two
//!   rate estimates `x` bandwidths apart;
//! * `∬ |t + (r - m) h| f(r) f(m) dr dm`, the regressor used to estimate `C'(0+)`.
//!
//! Built-in kernels use closed forms where they are short and fall back to
//! piecewise Gauss-Legendre quadrature otherwise. Custom kernels are tabulated
//! on a uniform grid and interpolated linearly.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_bandwidth, Error, Result};
use crate::quadrature::{normalize_breaks, GaussLegendre};

/// Names of the built-in kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelName {
    Uniform,
    Epanechnikov,
    Triangular,
    Quartic,
}

impl KernelName {
    pub const ALL: [KernelName; 4] = [
        KernelName::Uniform,
        KernelName::Epanechnikov,
        KernelName::Triangular,
        KernelName::Quartic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KernelName::Uniform => "uniform",
            KernelName::Epanechnikov => "epanechnikov",
            KernelName::Triangular => "triangular",
            KernelName::Quartic => "quartic",
        }
    }
}

impl fmt::Display for KernelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" | "box" => Ok(KernelName::Uniform),
            "epanechnikov" | "epan" => Ok(KernelName::Epanechnikov),
            "triangular" | "triangle" => Ok(KernelName::Triangular),
            "quartic" | "biweight" => Ok(KernelName::Quartic),
            other => Err(Error::InvalidKernel(format!(
                "unknown kernel name '{other}'"
            ))),
        }
    }
}

#[derive(Debug)]
struct Table {
    lo: f64,
    step: f64,
    values: Vec<f64>,
}

impl Table {
    fn eval(&self, u: f64) -> f64 {
        let pos = (u - self.lo) / self.step;
        let last = self.values.len() - 1;
        if !(0.0..=last as f64).contains(&pos) {
            return 0.0;
        }
        let i = (pos.floor() as usize).min(last - 1);
        let w = pos - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

#[derive(Debug, Clone)]
enum Shape {
    Builtin(KernelName),
    Tabulated(Arc<Table>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Constants {
    squared_integral: f64,
    mean_abs_difference: f64,
    mean_abs: f64,
}

/// A symmetric, compactly supported kernel density.
#[derive(Debug, Clone)]
pub struct Kernel {
    shape: Shape,
    support: f64,
    consts: Constants,
    /// Points where `f` is not smooth, including `±b`.
    breaks: Arc<[f64]>,
    /// Points where the autoconvolution is not smooth: pairwise differences of `breaks`.
    diff_breaks: Arc<[f64]>,
    rule: Arc<GaussLegendre>,
}

impl PartialEq for Kernel {
    fn eq(&self, other: &Self) -> bool {
        match (&self.shape, &other.shape) {
            (Shape::Builtin(a), Shape::Builtin(b)) => a == b,
            (Shape::Tabulated(a), Shape::Tabulated(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl From<KernelName> for Kernel {
    fn from(name: KernelName) -> Self {
        Kernel::new(name)
    }
}

impl Kernel {
    pub fn new(name: KernelName) -> Self {
        let consts = match name {
            KernelName::Uniform => Constants {
                squared_integral: 0.5,
                mean_abs_difference: 2.0 / 3.0,
                mean_abs: 0.5,
            },
            KernelName::Epanechnikov => Constants {
                squared_integral: 0.6,
                mean_abs_difference: 18.0 / 35.0,
                mean_abs: 0.375,
            },
            KernelName::Triangular => Constants {
                squared_integral: 2.0 / 3.0,
                mean_abs_difference: 7.0 / 15.0,
                mean_abs: 1.0 / 3.0,
            },
            KernelName::Quartic => Constants {
                squared_integral: 5.0 / 7.0,
                mean_abs_difference: 100.0 / 231.0,
                mean_abs: 0.3125,
            },
        };
        Kernel {
            shape: Shape::Builtin(name),
            support: 1.0,
            consts,
            breaks: Arc::from(vec![-1.0, 0.0, 1.0]),
            diff_breaks: Arc::from(vec![-2.0, -1.0, 0.0, 1.0, 2.0]),
            rule: Arc::new(GaussLegendre::new(8)),
        }
    }

    pub fn uniform() -> Self {
        Self::new(KernelName::Uniform)
    }

    pub fn epanechnikov() -> Self {
        Self::new(KernelName::Epanechnikov)
    }

    pub fn triangular() -> Self {
        Self::new(KernelName::Triangular)
    }

    pub fn quartic() -> Self {
        Self::new(KernelName::Quartic)
    }

    /// Builds a kernel from `(u, f(u))` samples on a uniform grid spanning `[-b, b]`.
    ///
    /// The table must be symmetric and integrate to one within 1e-3 (trapezoid
    /// rule, which is exact for the interpolant); it is then symmetrized and
    /// renormalized exactly.
    pub fn tabulated(points: &[(f64, f64)]) -> Result<Self> {
        let n = points.len();
        if n < 3 {
            return Err(Error::InvalidKernel("table needs at least 3 points".into()));
        }
        if points.iter().any(|(u, v)| !u.is_finite() || !v.is_finite()) {
            return Err(Error::InvalidKernel(
                "table contains non-finite values".into(),
            ));
        }
        if points.iter().any(|&(_, v)| v < 0.0) {
            return Err(Error::InvalidKernel(
                "density values must be nonnegative".into(),
            ));
        }
        let lo = points[0].0;
        let hi = points[n - 1].0;
        if !(hi > 0.0) || (lo + hi).abs() > 1e-9 * hi {
            return Err(Error::InvalidKernel(format!(
                "support must be symmetric [-b, b], got [{lo}, {hi}]"
            )));
        }
        let b = hi;
        let step = 2.0 * b / (n - 1) as f64;
        for (i, &(u, _)) in points.iter().enumerate() {
            let expected = -b + step * i as f64;
            if (u - expected).abs() > 1e-6 * step {
                return Err(Error::InvalidKernel(format!(
                    "abscissae must be uniformly spaced (row {}: {u}, expected {expected})",
                    i + 1
                )));
            }
        }
        let peak = points.iter().map(|p| p.1).fold(0.0, f64::max);
        if peak <= 0.0 {
            return Err(Error::InvalidKernel("density is identically zero".into()));
        }
        for i in 0..n / 2 {
            let (a, c) = (points[i].1, points[n - 1 - i].1);
            if (a - c).abs() > 1e-6 * peak {
                return Err(Error::InvalidKernel(format!(
                    "density is not symmetric: f({}) = {a} but f({}) = {c}",
                    points[i].0,
                    points[n - 1 - i].0
                )));
            }
        }
        let mut values: Vec<f64> = (0..n)
            .map(|i| 0.5 * (points[i].1 + points[n - 1 - i].1))
            .collect();
        let mass = step * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1]));
        if (mass - 1.0).abs() > 1e-3 {
            return Err(Error::InvalidKernel(format!(
                "density integrates to {mass}, expected 1"
            )));
        }
        values.iter_mut().for_each(|v| *v /= mass);

        let breaks: Vec<f64> = (0..n).map(|i| -b + step * i as f64).collect();
        let diff_breaks: Vec<f64> = (0..2 * n - 1).map(|i| -2.0 * b + step * i as f64).collect();
        let mut kernel = Kernel {
            shape: Shape::Tabulated(Arc::new(Table {
                lo: -b,
                step,
                values,
            })),
            support: b,
            consts: Constants {
                squared_integral: 0.0,
                mean_abs_difference: 0.0,
                mean_abs: 0.0,
            },
            breaks: Arc::from(breaks),
            diff_breaks: Arc::from(diff_breaks),
            // Piecewise linear f: every integrand below is a polynomial of degree <= 5.
            rule: Arc::new(GaussLegendre::new(4)),
        };
        kernel.consts = kernel.constants_by_quadrature();
        Ok(kernel)
    }

    /// Parses a two-column `u f(u)` table (whitespace or comma separated,
    /// `#` starts a comment) and builds a tabulated kernel.
    pub fn from_table_str(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| {
                    Error::InvalidKernel(format!("line {}: cannot parse '{s}'", lineno + 1))
                })
            };
            if cols.len() != 2 {
                return Err(Error::InvalidKernel(format!(
                    "line {}: expected two columns, found {}",
                    lineno + 1,
                    cols.len()
                )));
            }
            points.push((parse(cols[0])?, parse(cols[1])?));
        }
        Self::tabulated(&points)
    }

    pub fn name(&self) -> &str {
        match &self.shape {
            Shape::Builtin(n) => n.as_str(),
            Shape::Tabulated(_) => "tabulated",
        }
    }

    pub fn builtin_name(&self) -> Option<KernelName> {
        match self.shape {
            Shape::Builtin(n) => Some(n),
            Shape::Tabulated(_) => None,
        }
    }

    /// Support half-width `b`.
    pub fn support(&self) -> f64 {
        self.support
    }

    /// Kernel density `f(u)`.
    #[inline]
    pub fn density(&self, u: f64) -> f64 {
        match &self.shape {
            Shape::Builtin(name) => builtin_density(*name, u),
            Shape::Tabulated(table) => table.eval(u),
        }
    }

    /// `f_h(t, s) = f((s - t) / h) / h`.
    pub fn eval_scaled(&self, t: f64, s: f64, h: f64) -> Result<f64> {
        check_bandwidth(h)?;
        Ok(self.density((s - t) / h) / h)
    }

    /// `∫ f(r)² dr`.
    pub fn squared_integral(&self) -> f64 {
        self.consts.squared_integral
    }

    /// `E|r₁ - r₂|` for independent `r₁, r₂ ~ f`.
    pub fn mean_abs_difference(&self) -> f64 {
        self.consts.mean_abs_difference
    }

    /// `E|r|` for `r ~ f`.
    pub fn mean_abs(&self) -> f64 {
        self.consts.mean_abs
    }

    /// `γ_f = E|r₁ - r₂| - 2 E|r|`; strictly negative for any density.
    pub fn gamma_f(&self) -> f64 {
        self.consts.mean_abs_difference - 2.0 * self.consts.mean_abs
    }

    /// `g(x) = ∫ f(r + x) f(r) dr`.
    pub fn autoconvolution(&self, x: f64) -> f64 {
        let x = x.abs();
        if x >= 2.0 * self.support {
            return 0.0;
        }
        match self.shape {
            Shape::Builtin(KernelName::Uniform) => 0.25 * (2.0 - x),
            Shape::Builtin(KernelName::Epanechnikov) => {
                let d = 2.0 - x;
                3.0 / 160.0 * d * d * d * (x * x + 6.0 * x + 4.0)
            }
            _ => self.autoconvolution_by_quadrature(x),
        }
    }

    /// `∬ |t + (r - m) h| f(r) f(m) dr dm`. Equals `t` whenever `t >= 2bh`.
    pub fn abs_moment_integral(&self, t: f64, h: f64) -> Result<f64> {
        check_bandwidth(h)?;
        let x = t / h;
        if x.abs() >= 2.0 * self.support {
            return Ok(t.abs());
        }
        Ok(h * self.shifted_abs_moment(x))
    }

    /// `∫ |x + d| g(d) dd`, where `g` is the autoconvolution (the density of `r - m`).
    fn shifted_abs_moment(&self, x: f64) -> f64 {
        let reach = 2.0 * self.support;
        let mut breaks: Vec<f64> = self.diff_breaks.to_vec();
        breaks.push(-x);
        let breaks = normalize_breaks(breaks);
        self.rule.integrate_pieces(-reach, reach, &breaks, |d| {
            (x + d).abs() * self.autoconvolution(d)
        })
    }

    pub(crate) fn autoconvolution_by_quadrature(&self, x: f64) -> f64 {
        let b = self.support;
        let lo = (-b).max(-b - x);
        let hi = b.min(b - x);
        if hi <= lo {
            return 0.0;
        }
        let mut breaks: Vec<f64> = self.breaks.to_vec();
        breaks.extend(self.breaks.iter().map(|k| k - x));
        let breaks = normalize_breaks(breaks);
        self.rule
            .integrate_pieces(lo, hi, &breaks, |r| self.density(r + x) * self.density(r))
    }

    /// The three constants recomputed from the density alone.
    fn constants_by_quadrature(&self) -> Constants {
        let b = self.support;
        let squared_integral = self
            .rule
            .integrate_pieces(-b, b, &self.breaks, |r| self.density(r).powi(2));
        let mean_abs = self
            .rule
            .integrate_pieces(-b, b, &self.breaks, |r| self.density(r) * r.abs());
        let reach = 2.0 * b;
        let mean_abs_difference =
            self.rule
                .integrate_pieces(-reach, reach, &self.diff_breaks, |d| {
                    d.abs() * self.autoconvolution_by_quadrature(d)
                });
        Constants {
            squared_integral,
            mean_abs_difference,
            mean_abs,
        }
    }

    /// Total mass `∫ f`, by quadrature.
    pub fn mass(&self) -> f64 {
        let b = self.support;
        self.rule
            .integrate_pieces(-b, b, &self.breaks, |r| self.density(r))
    }

    /// `∫ g(x)² dx`, the variance factor of a lagged product of Poisson rate estimates.
    pub fn autoconvolution_squared_integral(&self) -> f64 {
        let reach = 2.0 * self.support;
        self.rule
            .integrate_pieces(-reach, reach, &self.diff_breaks, |x| {
                self.autoconvolution(x).powi(2)
            })
    }
}

#[inline]
fn builtin_density(name: KernelName, u: f64) -> f64 {
    let a = u.abs();
    if a > 1.0 {
        return 0.0;
    }
    match name {
        KernelName::Uniform => 0.5,
        KernelName::Epanechnikov => 0.75 * (1.0 - u * u),
        KernelName::Triangular => 1.0 - a,
        KernelName::Quartic => {
            let w = 1.0 - u * u;
            0.9375 * w * w
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all() -> Vec<Kernel> {
        KernelName::ALL.iter().map(|&n| Kernel::new(n)).collect()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn eval_scaled_examples() {
        let u = Kernel::uniform();
        assert_eq!(u.eval_scaled(0.0, 0.0, 1.0).unwrap(), 0.5);
        let e = Kernel::epanechnikov();
        assert!(close(e.eval_scaled(0.0, 0.5, 1.0).unwrap(), 0.5625, 1e-15));
        for k in all() {
            let h = 0.3;
            let far = 2.0 * k.support() * h;
            assert_eq!(k.eval_scaled(1.0, 1.0 + far, h).unwrap(), 0.0);
            assert_eq!(k.eval_scaled(1.0, 1.0 - far, h).unwrap(), 0.0);
        }
    }

    #[test]
    fn eval_scaled_rejects_bad_bandwidth() {
        let k = Kernel::quartic();
        assert_eq!(
            k.eval_scaled(0.0, 0.0, 0.0),
            Err(Error::InvalidBandwidth(0.0))
        );
        assert!(k.eval_scaled(0.0, 0.0, -1.0).is_err());
        assert!(k.eval_scaled(0.0, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn closed_form_constants() {
        assert_eq!(Kernel::uniform().squared_integral(), 0.5);
        assert!(close(Kernel::epanechnikov().squared_integral(), 0.6, 1e-15));
        assert!(close(
            Kernel::quartic().squared_integral(),
            5.0 / 7.0,
            1e-15
        ));
        assert!(close(Kernel::uniform().gamma_f(), -1.0 / 3.0, 1e-15));
        assert!(close(
            Kernel::epanechnikov().gamma_f(),
            -33.0 / 140.0,
            1e-15
        ));
        assert!(close(
            Kernel::epanechnikov().mean_abs_difference(),
            0.514286,
            1e-6
        ));
    }

    #[test]
    fn closed_forms_match_quadrature() {
        for k in all() {
            let q = k.constants_by_quadrature();
            assert!(
                close(q.squared_integral, k.squared_integral(), 1e-12),
                "{}",
                k.name()
            );
            assert!(close(q.mean_abs, k.mean_abs(), 1e-12), "{}", k.name());
            assert!(
                close(q.mean_abs_difference, k.mean_abs_difference(), 1e-12),
                "{}",
                k.name()
            );
        }
    }

    #[test]
    fn autoconvolution_examples() {
        let u = Kernel::uniform();
        assert_eq!(u.autoconvolution(0.0), 0.5);
        assert_eq!(u.autoconvolution(1.0), 0.25);
        for k in all() {
            assert_eq!(k.autoconvolution(2.0 * k.support()), 0.0);
            assert!(close(k.autoconvolution(0.0), k.squared_integral(), 1e-12));
        }
    }

    #[test]
    fn autoconvolution_squared_integral_uniform() {
        assert!(close(
            Kernel::uniform().autoconvolution_squared_integral(),
            1.0 / 3.0,
            1e-13
        ));
        // Epanechnikov: ∫ g² = 167/385 by direct polynomial integration of the closed form.
        assert!(close(
            Kernel::epanechnikov().autoconvolution_squared_integral(),
            167.0 / 385.0,
            1e-12
        ));
    }

    #[test]
    fn autoconvolution_closed_forms_match_quadrature() {
        for k in [Kernel::uniform(), Kernel::epanechnikov()] {
            for i in 0..=200 {
                let x = -2.0 + 0.02 * i as f64;
                let a = k.autoconvolution(x);
                let b = k.autoconvolution_by_quadrature(x.abs());
                assert!(close(a, b, 1e-9), "{} x={x}: {a} vs {b}", k.name());
            }
        }
    }

    #[test]
    fn abs_moment_examples() {
        let u = Kernel::uniform();
        assert!(close(
            u.abs_moment_integral(0.0, 1.0).unwrap(),
            2.0 / 3.0,
            1e-12
        ));
        let e = Kernel::epanechnikov();
        let got = e.abs_moment_integral(0.0, 0.064).unwrap();
        assert!(close(got, 0.064 * 18.0 / 35.0, 1e-12), "{got}");
        assert!(close(got, 0.032914, 1e-6));
        for k in all() {
            let h = 0.05;
            let t = 3.0 * k.support() * h;
            assert_eq!(k.abs_moment_integral(t, h).unwrap(), t);
        }
    }

    #[test]
    fn abs_moment_is_continuous_at_two_bh() {
        for k in all() {
            let h = 0.1;
            let t = 2.0 * h * (1.0 - 1e-9);
            let v = k.abs_moment_integral(t, h).unwrap();
            assert!(close(v, 2.0 * h, 1e-9), "{}: {v}", k.name());
        }
    }

    #[test]
    fn kernel_names_parse() {
        assert_eq!(
            "Epanechnikov".parse::<KernelName>().unwrap(),
            KernelName::Epanechnikov
        );
        assert!("gaussian".parse::<KernelName>().is_err());
        for n in KernelName::ALL {
            assert_eq!(n.as_str().parse::<KernelName>().unwrap(), n);
        }
    }

    fn epanechnikov_table(n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| {
                let u = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
                (u, 0.75 * (1.0 - u * u))
            })
            .collect()
    }

    #[test]
    fn tabulated_kernel_approximates_builtin() {
        let k = Kernel::tabulated(&epanechnikov_table(401)).unwrap();
        assert_eq!(k.support(), 1.0);
        assert!(close(k.mass(), 1.0, 1e-12));
        assert!(close(k.squared_integral(), 0.6, 1e-4));
        assert!(close(k.gamma_f(), -33.0 / 140.0, 1e-4));
        assert!(close(k.density(0.5), 0.5625, 1e-4));
        assert_eq!(k.density(1.5), 0.0);
        assert!(k.gamma_f() < 0.0);
    }

    #[test]
    fn tabulated_kernel_with_wider_support() {
        // Triangular density on [-2, 2].
        let pts: Vec<(f64, f64)> = (0..=40)
            .map(|i| {
                let u = -2.0 + 0.1 * i as f64;
                (u, 0.5 * (1.0 - u.abs() / 2.0))
            })
            .collect();
        let k = Kernel::tabulated(&pts).unwrap();
        assert_eq!(k.support(), 2.0);
        // Scaling a density by 2 doubles the L1-type constants and halves ∫f².
        assert!(close(k.squared_integral(), 1.0 / 3.0, 1e-12));
        assert!(close(k.gamma_f(), -0.4, 1e-12));
        let h = 0.1;
        assert_eq!(k.abs_moment_integral(0.5, h).unwrap(), 0.5);
    }

    #[test]
    fn tabulated_rejects_bad_tables() {
        assert!(Kernel::tabulated(&[(-1.0, 0.5), (1.0, 0.5)]).is_err());
        let mut asym = epanechnikov_table(11);
        asym[2].1 += 0.1;
        assert!(Kernel::tabulated(&asym).is_err());
        let mut uneven = epanechnikov_table(11);
        uneven[3].0 += 0.05;
        assert!(Kernel::tabulated(&uneven).is_err());
        let unnormalized: Vec<_> = epanechnikov_table(11)
            .iter()
            .map(|&(u, v)| (u, 2.0 * v))
            .collect();
        assert!(Kernel::tabulated(&unnormalized).is_err());
        let mut negative = epanechnikov_table(11);
        negative[0].1 = -0.01;
        negative[10].1 = -0.01;
        assert!(Kernel::tabulated(&negative).is_err());
    }

    #[test]
    fn table_text_parsing() {
        let text = "# u f\n-1 0\n-0.5, 0.5\n0 1\n0.5 0.5\n1 0\n";
        let k = Kernel::from_table_str(text).unwrap();
        assert!(close(k.mass(), 1.0, 1e-12));
        assert!(close(k.density(0.0), 1.0, 1e-12));
        assert!(Kernel::from_table_str("-1 0\nfoo 1\n1 0").is_err());
        assert!(Kernel::from_table_str("-1 0 3\n0 1\n1 0").is_err());
    }
}
