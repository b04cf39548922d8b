//! The heat kernel `E(t, z) = (2 pi t)^(-1/2) exp(-z^2 / 2t)` and its first two
//! spatial derivatives.

use serde::Serialize;

use super::quadrature::adaptive;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Kernel {
    E,
    B,
    D,
}

impl Kernel {
    pub const ALL: [Kernel; 3] = [Kernel::E, Kernel::B, Kernel::D];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "E" | "e" => Ok(Kernel::E),
            "B" | "b" => Ok(Kernel::B),
            "D" | "d" => Ok(Kernel::D),
            other => Err(Error::InvalidArgument(format!("unknown kernel {other:?}"))),
        }
    }

    pub fn symbol(&self) -> char {
        match self {
            Kernel::E => 'E',
            Kernel::B => 'B',
            Kernel::D => 'D',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatKernel {
    t: f64,
}

impl HeatKernel {
    pub fn new(t: f64) -> Result<Self> {
        if !(t > 0.0) {
            return Err(Error::NonPositiveTime(t));
        }
        Ok(Self { t })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn e(&self, z: f64) -> f64 {
        (-z * z / (2.0 * self.t)).exp() / (2.0 * std::f64::consts::PI * self.t).sqrt()
    }

    /// `dE/dz = -(z/t) E`.
    pub fn b(&self, z: f64) -> f64 {
        -(z / self.t) * self.e(z)
    }

    /// `d^2E/dz^2 = (z^2/t^2 - 1/t) E`.
    pub fn d(&self, z: f64) -> f64 {
        (z * z / (self.t * self.t) - 1.0 / self.t) * self.e(z)
    }

    pub fn eval(&self, which: Kernel, z: f64) -> f64 {
        match which {
            Kernel::E => self.e(z),
            Kernel::B => self.b(z),
            Kernel::D => self.d(z),
        }
    }

    /// `int |K(t, z)| dz` over `[-12 sqrt t, 12 sqrt t]`, split at the sign
    /// changes of the kernel.
    pub fn l1_mass(&self, which: Kernel) -> f64 {
        let r = self.t.sqrt();
        let breaks = match which {
            Kernel::E => vec![-12.0 * r, 12.0 * r],
            Kernel::B => vec![-12.0 * r, 0.0, 12.0 * r],
            Kernel::D => vec![-12.0 * r, -r, 0.0, r, 12.0 * r],
        };
        adaptive(|z| self.eval(which, z).abs(), &breaks, 1e-10, 0.0)
    }
}

pub fn kernel_eval(which: Kernel, t: f64, z: f64) -> Result<f64> {
    Ok(HeatKernel::new(t)?.eval(which, z))
}

pub fn kernel_l1_mass(which: Kernel, t: f64) -> Result<f64> {
    Ok(HeatKernel::new(t)?.l1_mass(which))
}
