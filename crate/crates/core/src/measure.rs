//! Explicit stationary measures of the perturbed walk: per-component weighted
//! geometric products, closed-form component masses and first moments, and
//! balance-equation verification.

use alloc::vec::Vec;
use core::fmt;

use crate::lattice::Partition;
use crate::num::powi;
use crate::walk::RandomWalkSpec;

/// Normalization tolerance: component masses must sum to one within this.
pub const NORMALIZATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureError {
    ComponentCountMismatch { measure: usize, partition: usize },
    /// Weight or ratio not strictly positive.
    NonPositive { component: usize },
    /// Ratio at least one on an unbounded dimension: infinite mass.
    DivergentMass { component: usize, dim: usize },
}

impl fmt::Display for MeasureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureError::ComponentCountMismatch { measure, partition } => write!(
                f,
                "measure has {measure} component rows but the partition has {partition}"
            ),
            MeasureError::NonPositive { component } => {
                write!(f, "component {component}: weights and ratios must be positive")
            }
            MeasureError::DivergentMass { component, dim } => write!(
                f,
                "component {component}: ratio >= 1 on unbounded dimension {dim}"
            ),
        }
    }
}

impl core::error::Error for MeasureError {}

/// Mass and first moments of one component: `m0 = Σ π̄(n)`,
/// `m1[i] = Σ n_i π̄(n)` over the component's states.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMoments {
    pub mass: f64,
    pub first: Vec<f64>,
}

/// `π̄(n) = c_norm · w_k · Π_i ρ_{k,i}^{n_i}` with `k` the component of `n`.
///
/// Covers every perturbed walk shipped with the artifact; the piecewise
/// geometric forms of threshold models are absorbed into the per-component
/// weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricStationaryMeasure {
    weights: Vec<f64>,
    ratios: Vec<Vec<f64>>,
    c_norm: f64,
}

impl GeometricStationaryMeasure {
    /// Builds an unnormalized measure (`c_norm = 1`); call
    /// [`GeometricStationaryMeasure::normalize`] before using it as a
    /// probability distribution.
    pub fn new(
        partition: &Partition,
        weights: Vec<f64>,
        ratios: Vec<Vec<f64>>,
    ) -> Result<Self, MeasureError> {
        if weights.len() != partition.len() || ratios.len() != partition.len() {
            return Err(MeasureError::ComponentCountMismatch {
                measure: weights.len().min(ratios.len()),
                partition: partition.len(),
            });
        }
        for k in 0..weights.len() {
            if !(weights[k] > 0.0) || ratios[k].len() != partition.dim() {
                return Err(MeasureError::NonPositive { component: k });
            }
            for (i, &r) in ratios[k].iter().enumerate() {
                if !(r > 0.0) {
                    return Err(MeasureError::NonPositive { component: k });
                }
                if partition.component(k).upper()[i].is_none() && r >= 1.0 {
                    return Err(MeasureError::DivergentMass { component: k, dim: i });
                }
            }
        }
        Ok(GeometricStationaryMeasure {
            weights,
            ratios,
            c_norm: 1.0,
        })
    }

    pub fn c_norm(&self) -> f64 {
        self.c_norm
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    pub fn ratios(&self, k: usize) -> &[f64] {
        &self.ratios[k]
    }

    /// `π̄(n)`.
    pub fn point_mass(&self, partition: &Partition, n: &[i64]) -> f64 {
        let k = partition.locate(n);
        let mut mass = self.c_norm * self.weights[k];
        for (i, &x) in n.iter().enumerate() {
            mass *= powi(self.ratios[k][i], x as u64);
        }
        mass
    }

    /// Closed-form component mass and first moments, as products of
    /// per-dimension geometric sums.
    pub fn component_moments(
        &self,
        partition: &Partition,
        k: usize,
    ) -> Result<ComponentMoments, MeasureError> {
        let b = partition.component(k);
        let dim = partition.dim();
        let mut mass_factors = Vec::with_capacity(dim);
        let mut first_factors = Vec::with_capacity(dim);
        for i in 0..dim {
            let rho = self.ratios[k][i];
            let lo = b.lower()[i];
            match b.upper()[i] {
                Some(up) => {
                    mass_factors.push(geometric_sum(rho, lo, up));
                    first_factors.push(first_moment_sum(rho, lo, up));
                }
                None => {
                    if rho >= 1.0 {
                        return Err(MeasureError::DivergentMass { component: k, dim: i });
                    }
                    mass_factors.push(powi(rho, lo as u64) / (1.0 - rho));
                    // Σ_{x>=L} x ρ^x = ρ^L (L - (L-1)ρ) / (1-ρ)^2.
                    let l = lo as f64;
                    first_factors.push(
                        powi(rho, lo as u64) * (l - (l - 1.0) * rho)
                            / ((1.0 - rho) * (1.0 - rho)),
                    );
                }
            }
        }
        let all_mass: f64 = mass_factors.iter().product();
        let scale = self.c_norm * self.weights[k];
        let mut first = Vec::with_capacity(dim);
        for i in 0..dim {
            let mut v = scale * first_factors[i];
            for (i2, &f) in mass_factors.iter().enumerate() {
                if i2 != i {
                    v *= f;
                }
            }
            first.push(v);
        }
        Ok(ComponentMoments {
            mass: scale * all_mass,
            first,
        })
    }

    /// Sets `c_norm` so the component masses sum to one.
    pub fn normalize(mut self, partition: &Partition) -> Result<Self, MeasureError> {
        self.c_norm = 1.0;
        let mut total = 0.0;
        for k in 0..partition.len() {
            total += self.component_moments(partition, k)?.mass;
        }
        self.c_norm = 1.0 / total;
        Ok(self)
    }

    /// Maximum balance-equation residual
    /// `|π̄(n) − Σ_u π̄(n−u) P(n−u, n)|` over the given test states.
    pub fn verify_balance(
        &self,
        partition: &Partition,
        walk: &RandomWalkSpec,
        test_states: &[Vec<i64>],
    ) -> f64 {
        let mut worst = 0.0f64;
        for n in test_states {
            let mut inflow = 0.0;
            // Sum over predecessor states n - u with u admissible from there.
            for k in 0..partition.len() {
                let _ = k;
            }
            let dim = partition.dim();
            let mut u = alloc::vec![-1i64; dim];
            loop {
                let prev: Vec<i64> = n.iter().zip(u.iter()).map(|(&a, &b)| a - b).collect();
                if prev.iter().all(|&x| x >= 0) {
                    let kp = partition.locate(&prev);
                    if partition.neighborhood(kp).iter().any(|s| s == &u) {
                        inflow += self.point_mass(partition, &prev) * walk.law().prob(kp, &u);
                    }
                }
                // Next step vector in {-1,0,1}^dim.
                let mut d = dim;
                loop {
                    if d == 0 {
                        d = usize::MAX;
                        break;
                    }
                    d -= 1;
                    u[d] += 1;
                    if u[d] <= 1 {
                        break;
                    }
                    u[d] = -1;
                }
                if d == usize::MAX {
                    break;
                }
            }
            worst = worst.max((self.point_mass(partition, n) - inflow).abs());
        }
        worst
    }
}

/// `Σ_{x=L}^{U} ρ^x`, with the `ρ = 1` case summed directly.
fn geometric_sum(rho: f64, lo: i64, up: i64) -> f64 {
    if (rho - 1.0).abs() < 1e-14 {
        (up - lo + 1) as f64
    } else {
        (powi(rho, lo as u64) - powi(rho, (up + 1) as u64)) / (1.0 - rho)
    }
}

/// `Σ_{x=L}^{U} x ρ^x`.
fn first_moment_sum(rho: f64, lo: i64, up: i64) -> f64 {
    if (rho - 1.0).abs() < 1e-14 {
        ((lo + up) * (up - lo + 1)) as f64 / 2.0
    } else {
        // f(n) = Σ_{x=0}^{n} x ρ^x = ρ(1 - (n+1)ρ^n + n ρ^{n+1}) / (1-ρ)^2.
        let f = |n: i64| -> f64 {
            if n < 0 {
                return 0.0;
            }
            let nf = n as f64;
            rho * (1.0 - (nf + 1.0) * powi(rho, n as u64) + nf * powi(rho, (n + 1) as u64))
                / ((1.0 - rho) * (1.0 - rho))
        };
        f(up) - f(lo - 1)
    }
}
