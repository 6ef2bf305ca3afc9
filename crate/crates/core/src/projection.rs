//! Spectral projectors `E(ΣΦ² ≤ δ²)`, their γ-integral representation and
//! the germ quotient for a constraint with continuous spectrum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fock::coherent::CoherentLabel;
use crate::fock::{hermitian_spectrum, HilbertSpace, OperatorMatrix, StateVector};
use crate::linalg::{self, CMatrix, CVector, HermitianEigen};
use crate::quadrature::{self, PanelRule};
use crate::{Error, Result, Tolerances, C64};

/// Hermitian constraint operators `Φ_α` on a common space.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    space: HilbertSpace,
    phis: Vec<OperatorMatrix>,
}

impl ConstraintSet {
    pub fn new(phis: Vec<OperatorMatrix>, tol: &Tolerances) -> Result<Self> {
        let first = phis.first().ok_or(Error::EmptyConstraints)?.clone();
        let space = first.space().clone();
        let mut checked = Vec::with_capacity(phis.len());
        for phi in phis {
            first.check_same_space(&phi)?;
            checked.push(phi.into_hermitian(tol.hermitian)?);
        }
        Ok(Self {
            space,
            phis: checked,
        })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn phis(&self) -> &[OperatorMatrix] {
        &self.phis
    }

    pub fn len(&self) -> usize {
        self.phis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phis.is_empty()
    }
}

/// `Σ_α Φ_α²`.
pub fn sum_of_squares(c: &ConstraintSet) -> OperatorMatrix {
    let d = c.space.dim();
    let mut acc = CMatrix::zeros(d, d);
    for phi in &c.phis {
        acc += phi.entries() * phi.entries();
    }
    let acc = linalg::hermitian_part(&acc);
    OperatorMatrix::hermitian(c.space.clone(), acc, f64::INFINITY)
        .expect("hermitian part is hermitian")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaPolicy {
    /// Midway between the lowest eigenvalue cluster and the next one.
    #[default]
    GapMidpoint,
    Fixed(f64),
}

/// Ascending eigenvalues grouped into clusters whose neighbours differ by
/// at most `rel_gap` times the spectral scale.
pub fn eigenvalue_clusters(values: &[f64], rel_gap: f64) -> Vec<Vec<f64>> {
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut clusters: Vec<Vec<f64>> = Vec::new();
    for &v in values {
        match clusters.last_mut() {
            Some(c) if v - c[c.len() - 1] <= rel_gap * scale => c.push(v),
            _ => clusters.push(vec![v]),
        }
    }
    clusters
}

pub fn choose_delta(x: &OperatorMatrix, policy: DeltaPolicy, tol: &Tolerances) -> Result<f64> {
    x.require_hermitian()?;
    match policy {
        DeltaPolicy::Fixed(v) => {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(Error::invalid("fixed δ² must be positive and finite"))
            }
        }
        DeltaPolicy::GapMidpoint => {
            let eig = HermitianEigen::new(x.entries());
            let clusters = eigenvalue_clusters(&eig.values, tol.cluster_rel_gap);
            if clusters.len() < 2 {
                return Err(Error::DegenerateGap);
            }
            let top = clusters[0].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let next = clusters[1][0];
            let mid = 0.5 * (top + next);
            if mid <= 0.0 {
                return Err(Error::invalid(format!(
                    "gap midpoint {mid} is not positive; the operator is not a sum of squares"
                )));
            }
            Ok(mid)
        }
    }
}

/// Orthogonal projector onto the eigenvectors of `X` with eigenvalue ≤ δ².
#[derive(Debug, Clone)]
pub struct Projector {
    matrix: OperatorMatrix,
    delta_sq: f64,
    retained: Vec<(f64, StateVector)>,
    excluded: Vec<f64>,
}

impl Projector {
    pub fn matrix(&self) -> &OperatorMatrix {
        &self.matrix
    }

    pub fn entries(&self) -> &CMatrix {
        self.matrix.entries()
    }

    pub fn delta_sq(&self) -> f64 {
        self.delta_sq
    }

    pub fn retained(&self) -> &[(f64, StateVector)] {
        &self.retained
    }

    pub fn excluded_eigenvalues(&self) -> &[f64] {
        &self.excluded
    }

    pub fn rank(&self) -> usize {
        self.retained.len()
    }

    pub fn space(&self) -> &HilbertSpace {
        self.matrix.space()
    }

    /// `‖E² − E‖` in the spectral norm.
    pub fn idempotence_defect(&self) -> f64 {
        let e = self.entries();
        linalg::spectral_norm(&(e * e - e))
    }

    /// Rebuild a projector from an arbitrary orthonormal set, e.g. for tests
    /// and scenario files; δ² is recorded as given.
    pub fn from_states(space: &HilbertSpace, states: &[StateVector], delta_sq: f64) -> Result<Self> {
        let d = space.dim();
        let mut m = CMatrix::zeros(d, d);
        let mut retained = Vec::new();
        for s in states {
            if s.space() != space {
                return Err(Error::DimensionMismatch {
                    left: d,
                    right: s.dim(),
                });
            }
            let v = s.amplitudes();
            m += v * v.adjoint();
            retained.push((0.0, s.clone()));
        }
        let matrix = OperatorMatrix::hermitian(space.clone(), linalg::hermitian_part(&m), f64::INFINITY)?;
        let p = Self {
            matrix,
            delta_sq,
            retained,
            excluded: Vec::new(),
        };
        let defect = p.idempotence_defect();
        if defect > 1e-10 {
            return Err(Error::invalid(format!(
                "states are not orthonormal (‖E²−E‖ = {defect:.3e})"
            )));
        }
        Ok(p)
    }
}

pub fn spectral_projector(x: &OperatorMatrix, delta_sq: f64, tol: &Tolerances) -> Result<Projector> {
    if !(delta_sq.is_finite()) {
        return Err(Error::invalid("δ² must be finite"));
    }
    let spectrum = hermitian_spectrum(x, tol)?;
    if let Some(&(eigenvalue, _)) = spectrum
        .iter()
        .find(|(l, _)| (l - delta_sq).abs() <= tol.boundary)
    {
        return Err(Error::BoundaryCollision {
            delta_sq,
            eigenvalue,
            tolerance: tol.boundary,
        });
    }
    let d = x.dim();
    let mut m = CMatrix::zeros(d, d);
    let mut retained = Vec::new();
    let mut excluded = Vec::new();
    for (l, v) in spectrum {
        if l <= delta_sq {
            let a = v.amplitudes();
            m += a * a.adjoint();
            retained.push((l, v));
        } else {
            excluded.push(l);
        }
    }
    let matrix = OperatorMatrix::hermitian(x.space().clone(), linalg::hermitian_part(&m), f64::INFINITY)?;
    let p = Projector {
        matrix,
        delta_sq,
        retained,
        excluded,
    };
    let defect = p.idempotence_defect();
    let trace_gap = (p.matrix.trace().re - p.rank() as f64).abs();
    if defect > tol.idempotence || trace_gap > tol.rank_trace {
        return Err(Error::invalid(format!(
            "projector check failed: ‖E²−E‖ = {defect:.3e}, |tr E − rank| = {trace_gap:.3e}"
        )));
    }
    Ok(p)
}

/// Quadrature over `γ ∈ [−Γ, Γ]` for the weight `sin(γεδ²)/(πγ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaQuadrature {
    pub gamma_max: f64,
    pub rule: PanelRule,
    /// Panels on the full symmetric interval; `None` picks about one
    /// panel per half-oscillation of the fastest eigen-entry integrand.
    #[serde(default)]
    pub panels: Option<usize>,
}

impl GammaQuadrature {
    pub fn new(gamma_max: f64) -> Self {
        Self {
            gamma_max,
            rule: PanelRule::TanhSinh { level: 3 },
            panels: None,
        }
    }

    pub fn with_rule(mut self, rule: PanelRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn with_panels(mut self, panels: usize) -> Self {
        self.panels = Some(panels);
        self
    }

    /// Nodes and weights in `γ`, symmetric about 0.
    pub fn nodes(&self, eps: f64, delta_sq: f64, max_abs_eigenvalue: f64) -> Result<Vec<(f64, f64)>> {
        if !(self.gamma_max > 0.0 && self.gamma_max.is_finite()) {
            return Err(Error::invalid("Γ must be positive and finite"));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid("ε must be positive and finite"));
        }
        let panels = match self.panels {
            Some(0) => return Err(Error::invalid("panel count must be positive")),
            Some(n) => n,
            None => {
                let freq = eps * (delta_sq.abs() + max_abs_eigenvalue);
                let half_periods = 2.0 * self.gamma_max * freq / std::f64::consts::PI;
                half_periods.ceil() as usize + 2
            }
        };
        // even panel counts keep γ = 0 on a panel edge
        let panels = panels + panels % 2;
        Ok(quadrature::composite_nodes(
            -self.gamma_max,
            self.gamma_max,
            panels,
            self.rule,
        ))
    }
}

/// `sin(γεδ²)/(πγ)`, with the limit `εδ²/π` at `γ = 0`.
pub fn gamma_weight(gamma: f64, eps: f64, delta_sq: f64) -> f64 {
    let s = gamma * eps * delta_sq;
    if s.abs() < 1e-8 {
        eps * delta_sq / std::f64::consts::PI * (1.0 - s * s / 6.0)
    } else {
        s.sin() / (std::f64::consts::PI * gamma)
    }
}

/// `∫ e^{iγελ} sin(γεδ²)/(πγ) dγ` on the given nodes. The sine part of the
/// exponential is odd and cancels on a symmetric rule.
pub fn gamma_entry(lambda: f64, eps: f64, delta_sq: f64, nodes: &[(f64, f64)]) -> f64 {
    nodes
        .iter()
        .map(|&(g, w)| w * (g * eps * lambda).cos() * gamma_weight(g, eps, delta_sq))
        .sum()
}

/// Bound on `|Si(x) − π/2|` for `x > 0`.
pub fn si_tail_bound(x: f64) -> f64 {
    1.0 / x + 1.0 / (x * x)
}

/// Result of the γ-integral construction.
#[derive(Debug, Clone)]
pub struct GammaProjection {
    pub operator: OperatorMatrix,
    pub delta_sq: f64,
    pub gamma_eps: f64,
    /// `(eigenvalue, diagonal entry)` in ascending eigenvalue order.
    pub entries: Vec<(f64, f64)>,
    /// Eigenvalues closer to δ² than the quadrature resolves.
    pub flagged: Vec<f64>,
    pub node_count: usize,
}

impl GammaProjection {
    /// Largest `|entry − 1{λ ≤ δ²}|` over unflagged eigenvalues.
    pub fn max_entry_error(&self) -> f64 {
        self.entries
            .iter()
            .filter(|(l, _)| !self.flagged.contains(l))
            .map(|&(l, g)| (g - if l <= self.delta_sq { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }

    /// Analytic envelope of the entry error from the sine-integral tail.
    pub fn predicted_entry_error(&self, lambda: f64) -> f64 {
        let a = self.gamma_eps * (self.delta_sq + lambda).abs();
        let b = self.gamma_eps * (self.delta_sq - lambda).abs();
        (si_tail_bound(a) + si_tail_bound(b)) / std::f64::consts::PI
    }
}

/// Resolution band: eigenvalues with `Γε|λ − δ²|` below this are flagged.
pub const GAMMA_RESOLUTION: f64 = 10.0;

pub fn gamma_integral_projector(
    x: &OperatorMatrix,
    delta_sq: f64,
    quad: &GammaQuadrature,
    eps: f64,
) -> Result<GammaProjection> {
    x.require_hermitian()?;
    let eig = HermitianEigen::new(x.entries());
    let max_abs = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let nodes = quad.nodes(eps, delta_sq, max_abs)?;
    let gamma_eps = quad.gamma_max * eps;
    let values: Vec<f64> = eig
        .values
        .par_iter()
        .map(|&l| gamma_entry(l, eps, delta_sq, &nodes))
        .collect();
    let diag: Vec<C64> = values.iter().map(|&g| C64::new(g, 0.0)).collect();
    let m = linalg::hermitian_part(&eig.apply_diag(&diag));
    let flagged = eig
        .values
        .iter()
        .cloned()
        .filter(|l| gamma_eps * (l - delta_sq).abs() < GAMMA_RESOLUTION)
        .collect();
    Ok(GammaProjection {
        operator: OperatorMatrix::hermitian(x.space().clone(), m, f64::INFINITY)?,
        delta_sq,
        gamma_eps,
        entries: eig.values.iter().cloned().zip(values).collect(),
        flagged,
        node_count: nodes.len(),
    })
}

/// `[O, E] = 0` test; returns the flag and `‖OE − EO‖`.
pub fn is_observable(o: &OperatorMatrix, e: &Projector, tol: &Tolerances) -> Result<(bool, f64)> {
    o.check_same_space(e.matrix())?;
    let residual = linalg::spectral_norm(&linalg::commutator(o.entries(), e.entries()));
    Ok((residual <= tol.observable, residual))
}

/// Orthonormal basis of the range of `E`, re-orthogonalized by modified
/// Gram–Schmidt.
pub fn physical_basis(e: &Projector) -> Result<Vec<StateVector>> {
    if e.rank() == 0 {
        return Err(Error::EmptyPhysicalSpace);
    }
    let mut basis: Vec<CVector> = Vec::with_capacity(e.rank());
    for (_, s) in e.retained() {
        let mut v = s.amplitudes().clone();
        for _ in 0..2 {
            for b in &basis {
                let c = b.dotc(&v);
                v -= b * c;
            }
        }
        let n = v.norm();
        if n < 1e-8 {
            return Err(Error::invalid("retained vectors are linearly dependent"));
        }
        basis.push(v.unscale(n));
    }
    basis
        .into_iter()
        .map(|v| StateVector::new(e.space().clone(), v))
        .collect()
}

/// `⟨k|p,q⟩` up to the common factor `π^{−1/4}`.
fn momentum_amplitude(label: CoherentLabel, k: f64) -> C64 {
    C64::new(-0.5 * (k - label.p).powi(2), -label.q * k).exp()
}

/// `⟨p″,q″|E(P² ≤ δ²)|p′,q′⟩ / ⟨0|E(P² ≤ δ²)|0⟩`, both integrals taken over
/// `k ∈ [−δ, δ]` in the momentum representation.
pub fn germ_quotient(bra: CoherentLabel, ket: CoherentLabel, delta: f64) -> Result<C64> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid("δ must be positive and finite"));
    }
    let num = |k: f64| momentum_amplitude(bra, k).conj() * momentum_amplitude(ket, k);
    let den = |k: f64| C64::new((-k * k).exp(), 0.0);
    let (n, _) = quadrature::adaptive_integrate(&num, -delta, delta, 0.0, 1e-14)?;
    let (d, _) = quadrature::adaptive_integrate(&den, -delta, delta, 0.0, 1e-14)?;
    Ok(n / d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GermLimit {
    pub schedule: Vec<f64>,
    pub values: Vec<C64>,
    pub limit: C64,
    /// Size of the last extrapolation correction; infinite for a single point.
    pub error_estimate: f64,
}

/// Germ quotient along a decreasing δ schedule, extrapolated to δ → 0 in
/// powers of δ².
pub fn germ_limit(bra: CoherentLabel, ket: CoherentLabel, schedule: &[f64]) -> Result<GermLimit> {
    if schedule.is_empty() {
        return Err(Error::invalid("germ schedule is empty"));
    }
    if schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("germ schedule must be strictly decreasing"));
    }
    let values = schedule
        .iter()
        .map(|&d| germ_quotient(bra, ket, d))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = schedule.iter().map(|d| d * d).collect();
    let (limit, error_estimate) = quadrature::polynomial_extrapolate(&xs, &values);
    Ok(GermLimit {
        schedule: schedule.to_vec(),
        values,
        limit,
        error_estimate,
    })
}
