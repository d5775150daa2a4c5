//! Globally adaptive Gauss–Legendre quadrature.
//!
//! Each panel is evaluated with a 15-point Gauss–Legendre rule on the whole
//! panel and on its two halves; the halves are kept as the estimate and the
//! difference serves as the error estimate. The panel with the largest error
//! is split until the summed error meets the tolerance.
//!
//! Infinite endpoints are truncated at `tail_cutoff_sigmas * scale` measured
//! from the origin, so integrands must be centred near zero and decay at least
//! exponentially on the caller-supplied scale.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{domain, Error, Result};

// Non-negative half of the symmetric 15-point rule: (node, weight).
const GL15: [(f64, f64); 8] = [
    (0.0, 0.202_578_241_925_560_9),
    (0.201_194_093_997_434_51, 0.198_431_485_327_111_25),
    (0.394_151_347_077_563_4, 0.186_161_000_015_561_88),
    (0.570_972_172_608_538_8, 0.166_269_205_816_993_78),
    (0.724_417_731_360_170_1, 0.139_570_677_926_153_9),
    (0.848_206_583_410_427_2, 0.107_159_220_467_171_77),
    (0.937_273_392_400_706, 0.070_366_047_488_108_07),
    (0.987_992_518_020_485_4, 0.030_753_241_996_118_647),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    pub tail_cutoff_sigmas: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            max_subdivisions: 5000,
            tail_cutoff_sigmas: 12.0,
        }
    }
}

impl QuadratureSpec {
    pub fn new(abs_tol: f64, rel_tol: f64, max_subdivisions: usize, tail_cutoff_sigmas: f64) -> Result<Self> {
        let spec = Self {
            abs_tol,
            rel_tol,
            max_subdivisions,
            tail_cutoff_sigmas,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return Err(domain("QuadratureSpec", "tolerances must be positive"));
        }
        if self.max_subdivisions < 1 {
            return Err(domain("QuadratureSpec", "max_subdivisions must be at least 1"));
        }
        if !(self.tail_cutoff_sigmas >= 6.0) {
            return Err(domain("QuadratureSpec", "tail_cutoff_sigmas must be at least 6"));
        }
        Ok(())
    }

    /// Same spec with both tolerances tightened by `factor`, floored near machine precision.
    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            abs_tol: (self.abs_tol * factor).max(1e-15),
            rel_tol: (self.rel_tol * factor).max(1e-14),
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub err_estimate: f64,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err) == Ordering::Equal
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
        self.err.total_cmp(&other.err)
    }
}

fn gl15<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64) -> f64 {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut acc = GL15[0].1 * f(mid);
    for &(x, w) in &GL15[1..] {
        acc += w * (f(mid - half * x) + f(mid + half * x));
    }
    acc * half
}

fn panel<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64) -> Result<Panel> {
    let whole = gl15(f, lo, hi);
    let mid = 0.5 * (lo + hi);
    let halves = gl15(f, lo, mid) + gl15(f, mid, hi);
    if !whole.is_finite() || !halves.is_finite() {
        return Err(domain(
            "integrate_adaptive",
            format!("integrand is not finite on [{lo}, {hi}]"),
        ));
    }
    Ok(Panel {
        lo,
        hi,
        value: halves,
        err: (whole - halves).abs(),
    })
}

/// Integrates `f` over `[lo, hi]`, truncating infinite endpoints at
/// `spec.tail_cutoff_sigmas` on a unit scale.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(f: F, lo: f64, hi: f64, spec: &QuadratureSpec) -> Result<Integral> {
    integrate_adaptive_scaled(f, lo, hi, 1.0, spec)
}

/// As [`integrate_adaptive`], with infinite endpoints truncated at
/// `spec.tail_cutoff_sigmas * scale` beyond `max(lo, 0)` / `min(hi, 0)`.
pub fn integrate_adaptive_scaled<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    scale: f64,
    spec: &QuadratureSpec,
) -> Result<Integral> {
    spec.validate()?;
    if lo.is_nan() || hi.is_nan() {
        return Err(domain("integrate_adaptive", "NaN bound"));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(domain("integrate_adaptive", format!("scale must be positive, got {scale}")));
    }
    if lo > hi {
        let r = integrate_adaptive_scaled(f, hi, lo, scale, spec)?;
        return Ok(Integral {
            value: -r.value,
            err_estimate: r.err_estimate,
        });
    }
    let reach = spec.tail_cutoff_sigmas * scale;
    let (a, b) = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => (lo, hi),
        (true, false) => (lo, lo.max(0.0) + reach),
        (false, true) => (hi.min(0.0) - reach, hi),
        (false, false) => (-reach, reach),
    };
    if a >= b {
        return Ok(Integral {
            value: 0.0,
            err_estimate: 0.0,
        });
    }

    let first = panel(&mut f, a, b)?;
    let mut total = first.value;
    let mut total_err = first.err;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let mut subdivisions = 0;

    while total_err > spec.abs_tol.max(spec.rel_tol * total.abs()) {
        if subdivisions >= spec.max_subdivisions {
            return Err(Error::NonConvergence {
                subdivisions,
                estimate: total,
                err_estimate: total_err,
            });
        }
        let worst = heap.pop().expect("heap holds at least one panel");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // panel cannot be split further in floating point
            return Err(Error::NonConvergence {
                subdivisions,
                estimate: total,
                err_estimate: total_err,
            });
        }
        let left = panel(&mut f, worst.lo, mid)?;
        let right = panel(&mut f, mid, worst.hi)?;
        total += left.value + right.value - worst.value;
        total_err += left.err + right.err - worst.err;
        heap.push(left);
        heap.push(right);
        subdivisions += 1;
    }

    // re-sum to shed the drift of incremental updates
    let mut panels = heap.into_vec();
    panels.sort_by(|p, q| p.lo.total_cmp(&q.lo));
    let value = panels.iter().map(|p| p.value).sum();
    let err_estimate = panels.iter().map(|p| p.err).sum();
    Ok(Integral { value, err_estimate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn phi(x: f64) -> f64 {
        (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
    }

    #[test]
    fn normal_density_has_unit_mass() {
        let r = integrate_adaptive(phi, f64::NEG_INFINITY, f64::INFINITY, &QuadratureSpec::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn gamma_two_on_half_line() {
        let r = integrate_adaptive_scaled(|x| x * (-x).exp(), 0.0, f64::INFINITY, 3.0, &QuadratureSpec::default())
            .unwrap();
        assert!((r.value - 1.0).abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn gaussian_entropy() {
        let r = integrate_adaptive(
            |x| -phi(x) * phi(x).ln(),
            f64::NEG_INFINITY,
            f64::INFINITY,
            &QuadratureSpec::default(),
        )
        .unwrap();
        let expect = 0.5 * (2.0 * PI * std::f64::consts::E).ln();
        assert!((expect - 1.418_938_533_2).abs() < 1e-10);
        assert!((r.value - expect).abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn reversed_and_empty_intervals() {
        let spec = QuadratureSpec::default();
        let fwd = integrate_adaptive(|x| x * x, 0.0, 2.0, &spec).unwrap().value;
        let back = integrate_adaptive(|x| x * x, 2.0, 0.0, &spec).unwrap().value;
        assert!((fwd - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(fwd, -back);
        assert_eq!(integrate_adaptive(|x| x, 1.0, 1.0, &spec).unwrap().value, 0.0);
    }

    #[test]
    fn non_convergence_is_reported() {
        let spec = QuadratureSpec::new(1e-14, 1e-14, 3, 12.0).unwrap();
        let r = integrate_adaptive(|x: f64| x.abs().sqrt(), -1.0, 1.0, &spec);
        assert!(matches!(r, Err(Error::NonConvergence { .. })), "{r:?}");
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(QuadratureSpec::new(0.0, 1e-9, 10, 12.0).is_err());
        assert!(QuadratureSpec::new(1e-9, -1.0, 10, 12.0).is_err());
        assert!(QuadratureSpec::new(1e-9, 1e-9, 0, 12.0).is_err());
        assert!(QuadratureSpec::new(1e-9, 1e-9, 10, 5.0).is_err());
    }

    #[test]
    fn non_finite_integrand_is_a_domain_error() {
        let r = integrate_adaptive(|_| f64::NAN, 0.0, 1.0, &QuadratureSpec::default());
        assert!(matches!(r, Err(Error::Domain { .. })));
    }
}
