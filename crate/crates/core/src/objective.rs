//! Scalar loss surfaces that the estimators probe.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Dataset, Mlp};
use crate::psi::PsiChart;

/// Coordinates a loss surface is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    /// Raw network weights.
    Weight,
    /// Basis-path values.
    Psi,
}

impl std::fmt::Display for Space {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Space::Weight => "weight",
            Space::Psi => "psi",
        })
    }
}

impl std::str::FromStr for Space {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weight" => Ok(Space::Weight),
            "psi" => Ok(Space::Psi),
            other => Err(Error::InvalidConfig(format!("unknown space `{other}`"))),
        }
    }
}

/// A real function on `R^dim` that may fail at some points.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> Result<f64>;

    /// Whether `gradient` is exact rather than the finite-difference default.
    fn has_gradient(&self) -> bool {
        false
    }

    /// Defaults to central differences with step `1e-6`.
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let h = 1e-6;
        let mut p = x.to_vec();
        let mut g = vec![0.0; x.len()];
        for k in 0..x.len() {
            p[k] = x[k] + h;
            let up = self.value(&p)?;
            p[k] = x[k] - h;
            let down = self.value(&p)?;
            p[k] = x[k];
            g[k] = (up - down) / (2.0 * h);
        }
        Ok(g)
    }

    fn space(&self) -> Option<Space> {
        None
    }
}

/// Training loss over flattened weights.
pub struct WeightObjective<'a> {
    dims: Vec<usize>,
    data: &'a Dataset,
}

impl<'a> WeightObjective<'a> {
    pub fn new(dims: &[usize], data: &'a Dataset) -> Self {
        Self {
            dims: dims.to_vec(),
            data,
        }
    }
}

impl Objective for WeightObjective<'_> {
    fn dim(&self) -> usize {
        self.dims.windows(2).map(|p| p[0] * p[1]).sum()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Mlp::from_flat(&self.dims, x)?.loss(self.data)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let g = Mlp::from_flat(&self.dims, x)?.gradient(self.data)?;
        Ok(g.into_iter().flatten().collect())
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn space(&self) -> Option<Space> {
        Some(Space::Weight)
    }
}

/// Training loss over basis-path values.
pub struct PsiObjective<'a> {
    chart: PsiChart,
    data: &'a Dataset,
}

impl<'a> PsiObjective<'a> {
    pub fn new(net: &Mlp, data: &'a Dataset) -> Result<Self> {
        Ok(Self {
            chart: PsiChart::new(net)?,
            data,
        })
    }

    pub fn chart(&self) -> &PsiChart {
        &self.chart
    }

    /// Basis values of the network the objective was built from.
    pub fn center(&self) -> Vec<f64> {
        self.chart.values().to_vec()
    }
}

impl Objective for PsiObjective<'_> {
    fn dim(&self) -> usize {
        self.chart.dim()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        self.chart.loss_at(x, self.data)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.chart.loss_and_gradient_at(x, self.data).map(|(_, g)| g)
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn space(&self) -> Option<Space> {
        Some(Space::Psi)
    }
}

/// Wraps a closure; handy for analytic test surfaces.
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F> FnObjective<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let v = (self.f)(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!("objective returned {v}")))
        }
    }
}
