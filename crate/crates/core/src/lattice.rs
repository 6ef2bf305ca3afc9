//! Coherent-state lattice path integrals evaluated as products of grid
//! transfer matrices, plus the one-step Gaussian λ average.

use serde::{Deserialize, Serialize};

use crate::dynamics::{exact_evolution, reduced_evolution};
use crate::fock::coherent::{CoherentFamily, CoherentLabel};
use crate::fock::OperatorMatrix;
use crate::linalg::{self, CMatrix, CVector, HermitianEigen, I, ONE};
use crate::projection::{
    gamma_integral_projector, spectral_projector, sum_of_squares, ConstraintSet, GammaQuadrature,
};
use crate::quadrature;
use crate::{Error, Result, C64};

const TWO_PI: f64 = std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridShape {
    /// Lattice points with `p² + q² ≤ R²`, each carrying the cell area `h²`.
    Disk,
    /// Full square `[−R, R]²` with trapezoidal weights.
    Square,
}

/// Quadrature nodes for `∫ dp dq`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub shape: GridShape,
    pub radius: f64,
    pub spacing: f64,
    pub nodes: Vec<CoherentLabel>,
    pub weights: Vec<f64>,
}

/// Grid parameters without the node list, for reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub shape: GridShape,
    pub radius: f64,
    pub spacing: f64,
    pub nodes: usize,
}

impl PhaseGrid {
    pub fn new(shape: GridShape, radius: f64, spacing: f64) -> Result<Self> {
        if !(radius > 0.0 && spacing > 0.0 && radius.is_finite() && spacing.is_finite()) {
            return Err(Error::invalid("grid radius and spacing must be positive"));
        }
        let m = (radius / spacing + 1e-9).floor() as i64;
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for i in -m..=m {
            for j in -m..=m {
                let p = i as f64 * spacing;
                let q = j as f64 * spacing;
                let w = match shape {
                    GridShape::Disk => {
                        if p * p + q * q > radius * radius * (1.0 + 1e-12) {
                            continue;
                        }
                        spacing * spacing
                    }
                    GridShape::Square => {
                        let edge = |k: i64| if k.abs() == m { 0.5 } else { 1.0 };
                        spacing * spacing * edge(i) * edge(j)
                    }
                };
                nodes.push(CoherentLabel { p, q });
                weights.push(w);
            }
        }
        Ok(Self {
            shape,
            radius,
            spacing,
            nodes,
            weights,
        })
    }

    pub fn disk(radius: f64, spacing: f64) -> Result<Self> {
        Self::new(GridShape::Disk, radius, spacing)
    }

    pub fn square(radius: f64, spacing: f64) -> Result<Self> {
        Self::new(GridShape::Square, radius, spacing)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn descriptor(&self) -> GridDescriptor {
        GridDescriptor {
            shape: self.shape,
            radius: self.radius,
            spacing: self.spacing,
            nodes: self.len(),
        }
    }

    fn scaled_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w / TWO_PI).collect()
    }
}

/// `Σᵢ wᵢ |zᵢ⟩⟨zᵢ| / 2π` as a `D × D` matrix.
pub fn resolution_matrix(family: &CoherentFamily, grid: &PhaseGrid) -> Result<CMatrix> {
    let c = family.state_matrix(&grid.nodes)?;
    let mut cw = c.clone();
    for (k, w) in grid.scaled_weights().into_iter().enumerate() {
        for z in cw.column_mut(k).iter_mut() {
            *z *= w;
        }
    }
    Ok(cw * c.adjoint())
}

/// Spectral norm of the resolution defect on occupation levels
/// `0..=probe_level`.
pub fn resolution_residual(family: &CoherentFamily, grid: &PhaseGrid, probe_level: usize) -> Result<f64> {
    if probe_level >= family.cutoff() {
        return Err(Error::invalid("probe level exceeds the truncation"));
    }
    let s = resolution_matrix(family, grid)?;
    let k = probe_level + 1;
    let block = s.view((0, 0), (k, k)).into_owned() - linalg::identity(k);
    Ok(linalg::spectral_norm(&block))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeOptions {
    /// Highest occupation level checked by the resolution residual.
    pub probe_level: usize,
    /// Residual above which the result is flagged as quadrature-dominated.
    pub residual_tolerance: f64,
}

impl Default for LatticeOptions {
    fn default() -> Self {
        Self {
            probe_level: 2,
            residual_tolerance: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeResult {
    pub value: C64,
    pub slices: usize,
    pub grid: GridDescriptor,
    pub reference: C64,
    pub deviation: f64,
    pub resolution_residual: f64,
    pub quadrature_dominated: bool,
}

/// `⟨z″| K C W (C†KC W)^{N−2} C† K |z′⟩` with `W = diag(w)/2π`: the
/// `N`-slice lattice sum with `N − 1` intermediate grid integrations.
pub fn lattice_sum(
    family: &CoherentFamily,
    kernel: &CMatrix,
    from: CoherentLabel,
    to: CoherentLabel,
    slices: usize,
    grid: &PhaseGrid,
) -> Result<C64> {
    if slices == 0 {
        return Err(Error::invalid("lattice needs at least one slice"));
    }
    let start = family.state(from)?;
    let end = family.state(to)?;
    let k_start = kernel * start.amplitudes();
    if slices == 1 {
        return Ok(end.amplitudes().dotc(&k_start));
    }
    let c = family.state_matrix(&grid.nodes)?;
    let w = grid.scaled_weights();
    let transfer = c.adjoint() * (kernel * &c);
    let weigh = |v: &mut CVector| {
        for (z, &wk) in v.iter_mut().zip(&w) {
            *z *= wk;
        }
    };
    let mut v = c.adjoint() * k_start;
    weigh(&mut v);
    for _ in 0..slices - 2 {
        v = &transfer * v;
        weigh(&mut v);
    }
    let left = c.adjoint() * (kernel.adjoint() * end.amplitudes());
    Ok(left.dotc(&v))
}

fn first_order_kernel(h: &OperatorMatrix, eps: f64) -> CMatrix {
    linalg::identity(h.dim()) - h.entries() * (I * eps)
}

fn finish(
    family: &CoherentFamily,
    value: C64,
    reference: C64,
    slices: usize,
    grid: &PhaseGrid,
    opts: &LatticeOptions,
) -> Result<LatticeResult> {
    let probe = opts.probe_level.min(family.cutoff() - 1);
    let residual = resolution_residual(family, grid, probe)?;
    Ok(LatticeResult {
        value,
        slices,
        grid: grid.descriptor(),
        reference,
        deviation: (value - reference).norm(),
        resolution_residual: residual,
        quadrature_dominated: residual > opts.residual_tolerance,
    })
}

/// Lattice propagator with the first-order factor
/// `⟨z_{n+1}|(1 − iεH)|z_n⟩` per slice, compared with `⟨z″|e^{−iHT}|z′⟩`.
#[allow(clippy::too_many_arguments)]
pub fn lattice_propagator(
    family: &CoherentFamily,
    h: &OperatorMatrix,
    from: CoherentLabel,
    to: CoherentLabel,
    t: f64,
    slices: usize,
    grid: &PhaseGrid,
    opts: &LatticeOptions,
) -> Result<LatticeResult> {
    h.check_same_space(family.momentum())?;
    if slices == 0 {
        return Err(Error::invalid("lattice needs at least one slice"));
    }
    let kernel = first_order_kernel(h, t / slices as f64);
    let value = lattice_sum(family, &kernel, from, to, slices, grid)?;
    let u = exact_evolution(h, t)?;
    let reference = u.matrix_element(&family.state(to)?, &family.state(from)?)?;
    finish(family, value, reference, slices, grid, opts)
}

/// Lattice propagator whose per-slice kernel is `(1 − iεH) G`, with `G`
/// the γ-integrated constraint factor, compared with
/// `⟨z″|E e^{−i(EHE)T} E|z′⟩`.
#[allow(clippy::too_many_arguments)]
pub fn constrained_lattice_propagator(
    family: &CoherentFamily,
    h: &OperatorMatrix,
    constraints: &ConstraintSet,
    delta_sq: f64,
    from: CoherentLabel,
    to: CoherentLabel,
    t: f64,
    slices: usize,
    grid: &PhaseGrid,
    quad: &GammaQuadrature,
    opts: &LatticeOptions,
) -> Result<LatticeResult> {
    h.check_same_space(family.momentum())?;
    if slices == 0 {
        return Err(Error::invalid("lattice needs at least one slice"));
    }
    let x = sum_of_squares(constraints);
    let e = spectral_projector(&x, delta_sq, family.tolerances())?;
    let eps = t / slices as f64;
    let g = gamma_integral_projector(&x, delta_sq, quad, eps)?;
    let kernel = first_order_kernel(h, eps) * g.operator.entries();
    let value = lattice_sum(family, &kernel, from, to, slices, grid)?;
    let k = reduced_evolution(h, &e, t)?;
    let reference = k.matrix_element(&family.state(to)?, &family.state(from)?)?;
    finish(family, value, reference, slices, grid, opts)
}

/// Normalized λ moments `⟨λᵏ⟩`, `k = 0, 1, 2`, of the weight
/// `e^{−iaλ²/(4γ)} e^{−ηλ²}` on `[−λ_max, λ_max]`.
pub fn lambda_moments(gamma: f64, a: f64, eta: f64, lambda_max: f64) -> Result<[C64; 3]> {
    if !(a > 0.0 && eta > 0.0 && lambda_max > 0.0 && gamma != 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("λ average needs a > 0, η > 0, λ_max > 0, γ ≠ 0"));
    }
    let weight = move |l: f64| C64::new(-eta * l * l, -a * l * l / (4.0 * gamma)).exp();
    let mut out = [C64::new(0.0, 0.0); 3];
    for (k, slot) in out.iter_mut().enumerate() {
        let f = move |l: f64| weight(l) * l.powi(k as i32);
        let (v, _) = quadrature::adaptive_integrate(&f, -lambda_max, lambda_max, 1e-15, 1e-13)?;
        *slot = v;
    }
    let z = out[0];
    Ok([ONE, out[1] / z, out[2] / z])
}

/// One-step average of `1 − iaλφ − ½a²λ²φ²` (or of its first-order part)
/// against the regularized Gaussian weight.
pub fn lambda_average_step(
    phi: f64,
    gamma: f64,
    a: f64,
    eta: f64,
    lambda_max: f64,
) -> Result<C64> {
    let m = lambda_moments(gamma, a, eta, lambda_max)?;
    Ok(expand(&m, phi, a, true))
}

fn expand(m: &[C64; 3], phi: f64, a: f64, second_order: bool) -> C64 {
    let first = m[0] - I * (a * phi) * m[1];
    if second_order {
        first - m[2] * (0.5 * a * a * phi * phi)
    } else {
        first
    }
}

/// Default regularization ladder.
pub const ETA_LADDER: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Range that makes `e^{−ηλ²}` negligible at the endpoints.
pub fn lambda_range(eta: f64) -> f64 {
    (40.0 / eta).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaAverage {
    pub etas: Vec<f64>,
    pub samples: Vec<C64>,
    pub value: C64,
    pub error_estimate: f64,
}

/// Moments extrapolated to `η → 0` along `etas` by rational extrapolation.
pub fn lambda_moments_extrapolated(gamma: f64, a: f64, etas: &[f64]) -> Result<([C64; 3], f64)> {
    if etas.len() < 2 {
        return Err(Error::invalid("η ladder needs at least two values"));
    }
    let per_eta = etas
        .iter()
        .map(|&eta| lambda_moments(gamma, a, eta, lambda_range(eta)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = [ONE; 3];
    let mut err = 0.0f64;
    for k in 1..3 {
        let ys: Vec<C64> = per_eta.iter().map(|m| m[k]).collect();
        let (v, e) = quadrature::rational_extrapolate(etas, &ys)?;
        out[k] = v;
        err = err.max(e);
    }
    Ok((out, err))
}

pub fn lambda_average_extrapolated(phi: f64, gamma: f64, a: f64, etas: &[f64]) -> Result<LambdaAverage> {
    if etas.len() < 2 {
        return Err(Error::invalid("η ladder needs at least two values"));
    }
    let samples = etas
        .iter()
        .map(|&eta| lambda_average_step(phi, gamma, a, eta, lambda_range(eta)))
        .collect::<Result<Vec<_>>>()?;
    let (value, error_estimate) = quadrature::rational_extrapolate(etas, &samples)?;
    if !error_estimate.is_finite() || !value.re.is_finite() || !value.im.is_finite() {
        return Err(Error::QuadratureNonConvergence(error_estimate));
    }
    Ok(LambdaAverage {
        etas: etas.to_vec(),
        samples,
        value,
        error_estimate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderReport {
    pub gamma: f64,
    pub eps: Vec<f64>,
    /// `‖K₁ − e^{iγεX}‖` with the λ²Φ² term dropped.
    pub first_order_defects: Vec<f64>,
    /// `‖K₂ − e^{iγεX}‖` with the full second-order expansion.
    pub second_order_defects: Vec<f64>,
    pub first_order_slope: Option<f64>,
    pub second_order_slope: Option<f64>,
}

/// Defects below this count as exact.
const DEFECT_FLOOR: f64 = 1e-12;

/// One-step kernels at fixed `γ` built from λ-averaged constraint
/// expansions, compared with `e^{iγεΣΦ²}` along an ε ladder.
pub fn first_order_insufficiency_demo(
    constraints: &ConstraintSet,
    gamma: f64,
    eps_ladder: &[f64],
) -> Result<FirstOrderReport> {
    if eps_ladder.len() < 2 {
        return Err(Error::invalid("ε ladder needs at least two values"));
    }
    let x = sum_of_squares(constraints);
    let eig = HermitianEigen::new(x.entries());
    let mut first = Vec::with_capacity(eps_ladder.len());
    let mut second = Vec::with_capacity(eps_ladder.len());
    for &eps in eps_ladder {
        let (m, _) = lambda_moments_extrapolated(gamma, eps, &ETA_LADDER)?;
        let target = eig.apply_fn(|l| (I * (gamma * eps * l)).exp());
        let k1 = eig.apply_fn(|l| expand(&m, l.max(0.0).sqrt(), eps, false));
        let k2 = eig.apply_fn(|l| expand(&m, l.max(0.0).sqrt(), eps, true));
        first.push(linalg::spectral_norm(&(k1 - &target)));
        second.push(linalg::spectral_norm(&(k2 - &target)));
    }
    let slope = |d: &[f64]| {
        if d.iter().all(|&v| v <= DEFECT_FLOOR) {
            None
        } else {
            Some(linalg::log_log_slope(eps_ladder, d))
        }
    };
    Ok(FirstOrderReport {
        gamma,
        eps: eps_ladder.to_vec(),
        first_order_slope: slope(&first),
        second_order_slope: slope(&second),
        first_order_defects: first,
        second_order_defects: second,
    })
}
