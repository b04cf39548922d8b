//! Deterministic second moments of `int_0^1 h(W(t)) dt` for a step function
//! `h` on the line:
//!
//! `E[(int h(W))^2] = 2 int_{0<s<t<1} int int h(zeta) h(z) E(s, zeta) E(t-s, z-zeta)`.
//!
//! The `z` integral is done in closed form with the normal CDF, the `zeta`
//! integral adaptively, and the `(s, u = t - s)` integral by tensor
//! Gauss-Legendre after `s = v^2`, `u = w^2` and polar coordinates on the
//! quarter disc `v^2 + w^2 <= 1`.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

use statrs::function::erf::erfc;

use super::quadrature::{adaptive, composite_nodes};
use crate::error::{Error, Result};
use crate::fields::{ScalarField, StepProfile};

const CLIP: f64 = 12.0;

fn big_phi(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-x * FRAC_1_SQRT_2)
    }
}

fn std_density(y: f64) -> f64 {
    (-0.5 * y * y).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Resolution of the outer tensor rule.
#[derive(Clone, Copy, Debug)]
pub struct OracleOptions {
    /// Gauss-Legendre points per panel, in both polar directions.
    pub points: usize,
    /// Geometric radial panels `[2^-j, 2^-j+1]`, plus `[0, 2^-radial_panels]`.
    pub radial_panels: u32,
    /// Equal angular panels.
    pub angular_panels: usize,
    pub inner_rel_tol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { points: 10, radial_panels: 8, angular_panels: 8, inner_rel_tol: 1e-10 }
    }
}

struct Segments(Vec<(f64, f64, f64)>);

impl Segments {
    /// `E[h(zeta + sqrt(u) Z)]`.
    fn smoothed(&self, u: f64, zeta: f64) -> f64 {
        let r = u.sqrt();
        self.0.iter().map(|(a, b, c)| c * (big_phi((b - zeta) / r) - big_phi((a - zeta) / r))).sum()
    }

    /// `E[h(sqrt(s) Y) E[h(sqrt(s) Y + sqrt(u) Z)]]`, `Y, Z` standard normal.
    fn pair(&self, s: f64, u: f64, rel_tol: f64) -> f64 {
        let rs = s.sqrt();
        let mut cuts: Vec<f64> =
            self.0.iter().flat_map(|(a, b, _)| [a / rs, b / rs]).filter(|y| y.abs() < CLIP).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut total = 0.0;
        for (a, b, c) in &self.0 {
            let lo = (a / rs).max(-CLIP);
            let hi = (b / rs).min(CLIP);
            if lo >= hi {
                continue;
            }
            let mut breaks = vec![lo];
            breaks.extend(cuts.iter().copied().filter(|y| *y > lo && *y < hi));
            breaks.push(hi);
            total += c * adaptive(|y| std_density(y) * self.smoothed(u, rs * y), &breaks, rel_tol, 1e-15);
        }
        total
    }
}

/// `E[(int_0^1 h(W(t)) dt)^2]`.
pub fn second_moment(h: &StepProfile, options: OracleOptions) -> f64 {
    let seg = Segments(h.nonzero_segments());
    if seg.0.is_empty() {
        return 0.0;
    }
    let mut radial = vec![0.0];
    radial.extend((0..=options.radial_panels).rev().map(|j| (-(j as f64)).exp2()));
    let angular: Vec<f64> =
        (0..=options.angular_panels).map(|i| FRAC_PI_2 * i as f64 / options.angular_panels as f64).collect();
    let rs = composite_nodes(&radial, options.points);
    let thetas = composite_nodes(&angular, options.points);
    let mut total = 0.0;
    for (r, wr) in &rs {
        let mut inner = 0.0;
        for (th, wt) in &thetas {
            let (v, w) = (r * th.cos(), r * th.sin());
            let jac = 4.0 * r * r * r * th.cos() * th.sin();
            inner += wt * jac * seg.pair(v * v, w * w, options.inner_rel_tol);
        }
        total += wr * inner;
    }
    2.0 * total
}

/// `E[rho(x)^2]` with `rho(x) = int_0^1 g(W + x) - g(W) dt` for a one-dimensional
/// field with a time-independent step profile.
pub fn rho_second_moment(g: &dyn ScalarField, x: f64, options: OracleOptions) -> Result<f64> {
    let profile =
        g.step_profile().ok_or_else(|| Error::InvalidArgument(format!("{} has no step profile", g.name())))?;
    Ok(second_moment(&profile.shifted(x).minus(&profile), options))
}

/// `E[(int_0^1 g(W) dt)^2]`.
pub fn functional_second_moment(g: &dyn ScalarField, options: OracleOptions) -> Result<f64> {
    let profile =
        g.step_profile().ok_or_else(|| Error::InvalidArgument(format!("{} has no step profile", g.name())))?;
    Ok(second_moment(&profile, options))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::scalar;

    #[test]
    fn arcsine_law() {
        // Time spent positive is arcsine distributed: E[T^2] = 3/8.
        let h = StepProfile::new(vec![0.0], vec![0.0, 1.0]).unwrap();
        let m = second_moment(&h, OracleOptions::default());
        assert!((m - 0.375).abs() < 1e-8, "{m}");
    }

    #[test]
    fn constant_profile() {
        let m = second_moment(&StepProfile::constant(1.5), OracleOptions::default());
        assert!((m - 2.25).abs() < 1e-9, "{m}");
        assert_eq!(second_moment(&StepProfile::constant(0.0), OracleOptions::default()), 0.0);
    }

    #[test]
    fn refinement_is_stable() {
        let g = scalar("sign", 1).unwrap();
        let coarse = rho_second_moment(g.as_ref(), 0.1, OracleOptions::default()).unwrap();
        let fine = rho_second_moment(
            g.as_ref(),
            0.1,
            OracleOptions { points: 16, radial_panels: 12, angular_panels: 12, inner_rel_tol: 1e-12 },
        )
        .unwrap();
        assert!((coarse - fine).abs() < 1e-5 * fine, "{coarse} {fine}");
        assert!(rho_second_moment(g.as_ref(), 0.0, OracleOptions::default()).unwrap() == 0.0);
    }

    #[test]
    fn non_step_fields_rejected() {
        let g = scalar("lip_sin", 1).unwrap();
        assert!(rho_second_moment(g.as_ref(), 0.1, OracleOptions::default()).is_err());
    }
}
