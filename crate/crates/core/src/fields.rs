//! Bounded Borel fields: scalar test functions `g(t, z)` and drifts `f(t, x)`.
//!
//! Fields are pure evaluation maps. Values on discontinuity sets are fixed by
//! convention (`sign(0) = 0`) and are irrelevant for time integrals along a
//! Brownian path.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    Smooth,
    Lipschitz,
    Discontinuous,
}

/// Sign with `sign(0) = 0`.
#[inline]
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// A scalar field `g: [0, 1] x R^d -> R` with `|g| <= bound`.
pub trait ScalarField: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn bound(&self) -> f64;
    fn smoothness(&self) -> Smoothness;
    fn eval(&self, t: f64, z: &[f64]) -> f64;

    /// Piecewise-constant description, available for time-independent
    /// one-dimensional step fields.
    fn step_profile(&self) -> Option<StepProfile> {
        None
    }

    /// `||g||_{L^p([0,1] x R^d)}` when finite and known in closed form.
    fn lp_norm(&self, _p: f64) -> Option<f64> {
        None
    }
}

/// A drift `f: [0, 1] x R^d -> R^d` with `|f| <= bound <= 1`.
pub trait DriftField: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn bound(&self) -> f64;
    fn smoothness(&self) -> Smoothness;
    fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]);

    fn eval(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, x, &mut out);
        out
    }
}

pub type SharedField = Arc<dyn ScalarField>;
pub type SharedDrift = Arc<dyn DriftField>;

/// Step function on the real line: `values[i]` holds on `(breaks[i-1], breaks[i])`
/// with `breaks[-1] = -inf` and `breaks[len] = +inf`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepProfile {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl StepProfile {
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breaks.len() + 1 || breaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("malformed step profile".into()));
        }
        Ok(Self { breaks, values })
    }

    pub fn constant(c: f64) -> Self {
        Self { breaks: Vec::new(), values: vec![c] }
    }

    /// Value away from the breakpoints.
    pub fn eval(&self, z: f64) -> f64 {
        let i = self.breaks.partition_point(|b| *b <= z);
        self.values[i]
    }

    /// `z -> self(z + x)`.
    pub fn shifted(&self, x: f64) -> Self {
        Self { breaks: self.breaks.iter().map(|b| b - x).collect(), values: self.values.clone() }
    }

    /// Pointwise difference, merged onto the union of breakpoints.
    pub fn minus(&self, other: &StepProfile) -> Self {
        let mut breaks: Vec<f64> = self.breaks.iter().chain(&other.breaks).copied().collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let value_on = |i: usize| -> f64 {
            let probe = match (i.checked_sub(1).map(|j| breaks[j]), breaks.get(i)) {
                (None, None) => 0.0,
                (None, Some(r)) => r - 1.0,
                (Some(l), None) => l + 1.0,
                (Some(l), Some(r)) => 0.5 * (l + r),
            };
            self.eval(probe) - other.eval(probe)
        };
        let values = (0..=breaks.len()).map(value_on).collect();
        Self { breaks, values }.simplified()
    }

    fn simplified(self) -> Self {
        let mut breaks = Vec::new();
        let mut values = vec![self.values[0]];
        for (b, v) in self.breaks.iter().zip(&self.values[1..]) {
            if *v != *values.last().unwrap() {
                breaks.push(*b);
                values.push(*v);
            }
        }
        Self { breaks, values }
    }

    /// Segments `(a, b, value)` with non-zero value; endpoints may be infinite.
    pub fn nonzero_segments(&self) -> Vec<(f64, f64, f64)> {
        (0..self.values.len())
            .filter(|i| self.values[*i] != 0.0)
            .map(|i| {
                let a = if i == 0 { f64::NEG_INFINITY } else { self.breaks[i - 1] };
                let b = self.breaks.get(i).copied().unwrap_or(f64::INFINITY);
                (a, b, self.values[i])
            })
            .collect()
    }
}

/// The built-in fields.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CatalogKind {
    Zero,
    Const(f64),
    Sign,
    Checkerboard(u32),
    RadialStep,
    LipSin,
    TimeFlip,
    BoxIndicator,
    GaussBump,
}

pub const CATALOG_NAMES: &[&str] =
    &["zero", "const_<c>", "sign", "checkerboard_<m>", "radial_step", "lip_sin", "time_flip", "box", "gauss_bump"];

impl CatalogKind {
    pub fn parse(name: &str) -> Result<Self> {
        let kind = match name {
            "zero" => Self::Zero,
            "sign" => Self::Sign,
            "radial_step" => Self::RadialStep,
            "lip_sin" => Self::LipSin,
            "time_flip" => Self::TimeFlip,
            "box" => Self::BoxIndicator,
            "gauss_bump" => Self::GaussBump,
            other => {
                if let Some(c) = other.strip_prefix("const_") {
                    let c: f64 = c.parse().map_err(|_| Error::BadFieldParameter(other.into()))?;
                    if !(c.abs() <= 1.0) {
                        return Err(Error::BadFieldParameter(format!("|c| <= 1 required in `{other}`")));
                    }
                    Self::Const(c)
                } else if let Some(m) = other.strip_prefix("checkerboard_") {
                    let m: u32 = m.parse().map_err(|_| Error::BadFieldParameter(other.into()))?;
                    if m > 30 {
                        return Err(Error::BadFieldParameter(format!("scale too fine in `{other}`")));
                    }
                    Self::Checkerboard(m)
                } else {
                    return Err(Error::UnknownField(other.into()));
                }
            }
        };
        Ok(kind)
    }
}

#[derive(Clone, Debug)]
pub struct CatalogField {
    kind: CatalogKind,
    dim: usize,
}

impl CatalogField {
    pub fn new(kind: CatalogKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        Ok(Self { kind, dim })
    }

    pub fn kind(&self) -> CatalogKind {
        self.kind
    }
}

impl ScalarField for CatalogField {
    fn name(&self) -> String {
        match self.kind {
            CatalogKind::Zero => "zero".into(),
            CatalogKind::Const(c) => format!("const_{c}"),
            CatalogKind::Sign => "sign".into(),
            CatalogKind::Checkerboard(m) => format!("checkerboard_{m}"),
            CatalogKind::RadialStep => "radial_step".into(),
            CatalogKind::LipSin => "lip_sin".into(),
            CatalogKind::TimeFlip => "time_flip".into(),
            CatalogKind::BoxIndicator => "box".into(),
            CatalogKind::GaussBump => "gauss_bump".into(),
        }
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn bound(&self) -> f64 {
        match self.kind {
            CatalogKind::Zero => 0.0,
            CatalogKind::Const(c) => c.abs(),
            _ => 1.0,
        }
    }

    fn smoothness(&self) -> Smoothness {
        match self.kind {
            CatalogKind::Zero | CatalogKind::Const(_) | CatalogKind::LipSin | CatalogKind::GaussBump => {
                Smoothness::Smooth
            }
            _ => Smoothness::Discontinuous,
        }
    }

    #[inline]
    fn eval(&self, t: f64, z: &[f64]) -> f64 {
        match self.kind {
            CatalogKind::Zero => 0.0,
            CatalogKind::Const(c) => c,
            CatalogKind::Sign => sign(z[0]),
            CatalogKind::Checkerboard(m) => {
                let freq = (m as f64).exp2() * PI;
                sign(z.iter().map(|zj| (freq * zj).sin()).product())
            }
            CatalogKind::RadialStep => {
                if z.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            CatalogKind::LipSin => z[0].sin(),
            CatalogKind::TimeFlip => sign(z[0]) * sign(t - 0.5),
            CatalogKind::BoxIndicator => {
                if z.iter().all(|v| v.abs() <= 1.0) {
                    1.0
                } else {
                    0.0
                }
            }
            CatalogKind::GaussBump => (-0.5 * z.iter().map(|v| v * v).sum::<f64>()).exp(),
        }
    }

    fn step_profile(&self) -> Option<StepProfile> {
        if self.dim != 1 {
            return None;
        }
        let profile = match self.kind {
            CatalogKind::Zero => StepProfile::constant(0.0),
            CatalogKind::Const(c) => StepProfile::constant(c),
            CatalogKind::Sign => StepProfile { breaks: vec![0.0], values: vec![-1.0, 1.0] },
            CatalogKind::RadialStep => StepProfile { breaks: vec![-1.0, 1.0], values: vec![-1.0, 1.0, -1.0] },
            CatalogKind::BoxIndicator => StepProfile { breaks: vec![-1.0, 1.0], values: vec![0.0, 1.0, 0.0] },
            _ => return None,
        };
        Some(profile)
    }

    fn lp_norm(&self, p: f64) -> Option<f64> {
        let d = self.dim as f64;
        match self.kind {
            CatalogKind::Zero => Some(0.0),
            CatalogKind::Const(0.0) => Some(0.0),
            CatalogKind::BoxIndicator => Some((2f64.powf(d)).powf(1.0 / p)),
            CatalogKind::GaussBump => Some((2.0 * PI / p).powf(d / (2.0 * p))),
            _ => None,
        }
    }
}

/// Looks up a scalar field by catalog name.
pub fn scalar(name: &str, dim: usize) -> Result<SharedField> {
    Ok(Arc::new(CatalogField::new(CatalogKind::parse(name)?, dim)?))
}

/// Looks up a drift by catalog name; the scalar profile acts along the first axis.
pub fn drift(name: &str, dim: usize) -> Result<SharedDrift> {
    Ok(Arc::new(AxisDrift::new(scalar(name, dim)?, 0)?))
}

/// `f(t, x) = g(t, x) e_axis`.
#[derive(Clone, Debug)]
pub struct AxisDrift {
    field: SharedField,
    axis: usize,
}

impl AxisDrift {
    pub fn new(field: SharedField, axis: usize) -> Result<Self> {
        if axis >= field.dim() {
            return Err(Error::InvalidArgument(format!("axis {axis} out of range")));
        }
        if field.bound() > 1.0 {
            return Err(Error::BadFieldParameter(format!("drift `{}` exceeds bound 1", field.name())));
        }
        Ok(Self { field, axis })
    }

    pub fn field(&self) -> &SharedField {
        &self.field
    }
}

impl DriftField for AxisDrift {
    fn name(&self) -> String {
        self.field.name()
    }
    fn dim(&self) -> usize {
        self.field.dim()
    }
    fn bound(&self) -> f64 {
        self.field.bound()
    }
    fn smoothness(&self) -> Smoothness {
        self.field.smoothness()
    }
    #[inline]
    fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        out[self.axis] = self.field.eval(t, x);
    }
}

/// `h(t, z) = g(t, z + x) - g(t, z + y)`; bounded by twice the bound of `g`.
#[derive(Clone, Debug)]
pub struct DifferenceField {
    inner: SharedField,
    x: Vec<f64>,
    y: Vec<f64>,
    dim: usize,
}

pub fn difference_field(g: SharedField, x: &[f64], y: &[f64]) -> Result<DifferenceField> {
    for v in [x, y] {
        if v.len() != g.dim() {
            return Err(Error::DimensionMismatch { expected: g.dim(), got: v.len() });
        }
    }
    Ok(DifferenceField { dim: g.dim(), inner: g, x: x.to_vec(), y: y.to_vec() })
}

impl ScalarField for DifferenceField {
    fn name(&self) -> String {
        format!("diff({};{:?};{:?})", self.inner.name(), self.x, self.y)
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn bound(&self) -> f64 {
        2.0 * self.inner.bound()
    }
    fn smoothness(&self) -> Smoothness {
        self.inner.smoothness()
    }
    fn eval(&self, t: f64, z: &[f64]) -> f64 {
        let zx: Vec<f64> = z.iter().zip(&self.x).map(|(a, b)| a + b).collect();
        let zy: Vec<f64> = z.iter().zip(&self.y).map(|(a, b)| a + b).collect();
        self.inner.eval(t, &zx) - self.inner.eval(t, &zy)
    }
    fn step_profile(&self) -> Option<StepProfile> {
        let g = self.inner.step_profile()?;
        Some(g.shifted(self.x[0]).minus(&g.shifted(self.y[0])))
    }
}

/// `h(s, z) = g(t0 + s * time_scale, z0 + space_scale * z)`: the field seen by a
/// path rescaled to a window.
#[derive(Clone, Debug)]
pub struct RescaledField {
    inner: SharedField,
    t0: f64,
    time_scale: f64,
    z0: Vec<f64>,
    space_scale: f64,
}

impl RescaledField {
    pub fn new(inner: SharedField, t0: f64, time_scale: f64, z0: Vec<f64>, space_scale: f64) -> Result<Self> {
        if z0.len() != inner.dim() {
            return Err(Error::DimensionMismatch { expected: inner.dim(), got: z0.len() });
        }
        Ok(Self { inner, t0, time_scale, z0, space_scale })
    }
}

impl ScalarField for RescaledField {
    fn name(&self) -> String {
        format!("rescaled({})", self.inner.name())
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn bound(&self) -> f64 {
        self.inner.bound()
    }
    fn smoothness(&self) -> Smoothness {
        self.inner.smoothness()
    }
    fn eval(&self, s: f64, z: &[f64]) -> f64 {
        let zz: Vec<f64> = z.iter().zip(&self.z0).map(|(v, o)| o + self.space_scale * v).collect();
        self.inner.eval(self.t0 + s * self.time_scale, &zz)
    }
}
