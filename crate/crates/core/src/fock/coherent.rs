//! Coherent states `|p,q⟩ = e^{−iqP} e^{ipQ} |0⟩` on a truncated Fock space.
//!
//! The two exponentials are evaluated from eigendecompositions of the
//! truncated `P` and `Q`, in that order, rather than from closed-form
//! Poisson amplitudes. Truncation error grows with the label radius, so
//! every family carries a trust radius: the largest `√(p²+q²)` for which the
//! Poisson tail `Σ_{n≥D} e^{−μ} μⁿ/n!`, `μ = (p²+q²)/2`, stays below the
//! configured deficit.

use serde::{Deserialize, Serialize};

use crate::fock::{canonical_pair, HilbertSpace, OperatorMatrix, StateVector};
use crate::linalg::{self, CMatrix, CVector, HermitianEigen, I};
use crate::{Error, Result, Tolerances, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentLabel {
    pub p: f64,
    pub q: f64,
}

impl CoherentLabel {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !p.is_finite() || !q.is_finite() {
            return Err(Error::invalid("coherent labels must be finite"));
        }
        Ok(Self { p, q })
    }

    pub const ORIGIN: CoherentLabel = CoherentLabel { p: 0.0, q: 0.0 };

    pub fn radius(&self) -> f64 {
        self.p.hypot(self.q)
    }
}

/// Closed-form overlap ⟨bra|ket⟩ of two untruncated coherent states:
/// `exp{ i(p″+p′)(q″−q′)/2 − [(p″−p′)² + (q″−q′)²]/4 }`.
pub fn overlap_formula(bra: CoherentLabel, ket: CoherentLabel) -> C64 {
    let dp = bra.p - ket.p;
    let dq = bra.q - ket.q;
    C64::new(-0.25 * (dp * dp + dq * dq), 0.5 * (bra.p + ket.p) * dq).exp()
}

/// Norm-squared lost by truncating an ideal coherent state of radius `r`
/// to the first `cutoff` occupation levels.
pub fn truncation_deficit(cutoff: usize, radius: f64) -> f64 {
    let mu = 0.5 * radius * radius;
    if mu == 0.0 {
        return 0.0;
    }
    let d = cutoff as f64;
    let ln_fact: f64 = (1..=cutoff).map(|k| (k as f64).ln()).sum();
    let mut term = (-mu + d * mu.ln() - ln_fact).exp();
    let mut sum = 0.0;
    let mut n = d;
    loop {
        sum += term;
        n += 1.0;
        term *= mu / n;
        if n > mu && term < 1e-17 * sum.max(1e-300) {
            break;
        }
        if n > d + 10_000.0 {
            break;
        }
    }
    sum.min(1.0)
}

/// Largest radius whose truncation deficit stays at or below `max_deficit`.
pub fn trust_radius(cutoff: usize, max_deficit: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = 2.0 * (cutoff as f64).sqrt() + 10.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if truncation_deficit(cutoff, mid) <= max_deficit {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    lo
}

/// Canonical pair of a Fock space together with the spectral data needed to
/// build coherent states cheaply (`O(D²)` per label).
#[derive(Debug, Clone)]
pub struct CoherentFamily {
    space: HilbertSpace,
    p: OperatorMatrix,
    q: OperatorMatrix,
    p_eig: HermitianEigen,
    q_eig: HermitianEigen,
    vacuum_in_q: CVector,
    trust_radius: f64,
    tol: Tolerances,
}

impl CoherentFamily {
    pub fn new(space: &HilbertSpace, tol: &Tolerances) -> Result<Self> {
        let cutoff = space.fock_cutoff()?;
        let (p, q) = canonical_pair(space)?;
        let p_eig = HermitianEigen::new(p.entries());
        let q_eig = HermitianEigen::new(q.entries());
        let vacuum_in_q = q_eig.vectors.row(0).adjoint();
        Ok(Self {
            space: space.clone(),
            p,
            q,
            p_eig,
            q_eig,
            vacuum_in_q,
            trust_radius: trust_radius(cutoff, tol.trust_deficit),
            tol: tol.clone(),
        })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn cutoff(&self) -> usize {
        self.space.dim()
    }

    pub fn momentum(&self) -> &OperatorMatrix {
        &self.p
    }

    pub fn position(&self) -> &OperatorMatrix {
        &self.q
    }

    pub fn trust_radius(&self) -> f64 {
        self.trust_radius
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    pub fn check(&self, label: CoherentLabel) -> Result<()> {
        let radius = label.radius();
        if radius > self.trust_radius {
            return Err(Error::TrustRadius {
                p: label.p,
                q: label.q,
                radius,
                trust: self.trust_radius,
                cutoff: self.cutoff(),
                deficit: truncation_deficit(self.cutoff(), radius),
            });
        }
        Ok(())
    }

    pub fn state(&self, label: CoherentLabel) -> Result<StateVector> {
        self.check(label)?;
        StateVector::new(self.space.clone(), self.amplitudes(label))
    }

    /// Amplitudes of `|p,q⟩` without the trust-radius check.
    pub(crate) fn amplitudes(&self, label: CoherentLabel) -> CVector {
        // e^{ipQ}|0⟩ in the Q eigenbasis
        let mut v = self.vacuum_in_q.clone();
        for (k, z) in v.iter_mut().enumerate() {
            *z *= (I * (label.p * self.q_eig.values[k])).exp();
        }
        let u = &self.q_eig.vectors * v;
        let mut w = self.p_eig.vectors.adjoint() * u;
        for (k, z) in w.iter_mut().enumerate() {
            *z *= (-I * (label.q * self.p_eig.values[k])).exp();
        }
        &self.p_eig.vectors * w
    }

    /// Coherent states for many labels as the columns of a `D × n` matrix.
    pub fn state_matrix(&self, labels: &[CoherentLabel]) -> Result<CMatrix> {
        let mut m = CMatrix::zeros(self.cutoff(), labels.len());
        for (k, &l) in labels.iter().enumerate() {
            self.check(l)?;
            m.set_column(k, &self.amplitudes(l));
        }
        Ok(m)
    }

    /// `e^{ipQ}` as a full matrix.
    pub fn exp_position(&self, p: f64) -> CMatrix {
        self.q_eig.exp_scaled(I * p)
    }

    /// `e^{−iqP}` as a full matrix.
    pub fn exp_momentum(&self, q: f64) -> CMatrix {
        self.p_eig.exp_scaled(-I * q)
    }

    /// ⟨p,q|H|p,q⟩.
    pub fn lower_symbol(&self, h: &OperatorMatrix, label: CoherentLabel) -> Result<C64> {
        h.check_same_space(&self.p)?;
        let psi = self.state(label)?;
        h.matrix_element(&psi, &psi)
    }

    /// Low-occupation window used by [`CoherentFamily::weyl_residual`]:
    /// levels `n ≤ D/2 − ⌈4(p²+q²)⌉`.
    pub fn weyl_window(&self, p: f64, q: f64) -> Option<usize> {
        let shrink = (4.0 * (p * p + q * q)).ceil() as usize;
        (self.cutoff() / 2).checked_sub(shrink)
    }

    /// Operator-norm defect of `e^{ipQ} e^{−iqP} = e^{ipq} e^{−iqP} e^{ipQ}`
    /// on the span of the window levels.
    pub fn weyl_residual(&self, p: f64, q: f64) -> Result<f64> {
        let window = self.weyl_window(p, q).ok_or(Error::EmptyWindow {
            cutoff: self.cutoff(),
        })?;
        let eq = self.exp_position(p);
        let ep = self.exp_momentum(q);
        let lhs = &eq * &ep;
        let rhs = (&ep * &eq) * (I * (p * q)).exp();
        let diff = lhs - rhs;
        let cols = diff.columns(0, window + 1).into_owned();
        Ok(linalg::spectral_norm(&cols))
    }

    /// Central-difference estimate of the Fubini–Study metric
    /// `g_ij = 2 Re[⟨∂_iψ|∂_jψ⟩ − ⟨∂_iψ|ψ⟩⟨ψ|∂_jψ⟩]` in `(p, q)` order.
    pub fn fubini_study_metric(&self, label: CoherentLabel, h: f64) -> Result<[[f64; 2]; 2]> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid("finite-difference step must be positive"));
        }
        let shifted = |dp: f64, dq: f64| -> Result<CVector> {
            let l = CoherentLabel::new(label.p + dp, label.q + dq)?;
            self.check(l)?;
            Ok(self.amplitudes(l))
        };
        let psi = shifted(0.0, 0.0)?;
        let d_p = (shifted(h, 0.0)? - shifted(-h, 0.0)?).unscale(2.0 * h);
        let d_q = (shifted(0.0, h)? - shifted(0.0, -h)?).unscale(2.0 * h);
        let derivs = [d_p, d_q];
        let mut g = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let a = derivs[i].dotc(&derivs[j]);
                let b = derivs[i].dotc(&psi) * psi.dotc(&derivs[j]);
                g[i][j] = 2.0 * (a - b).re;
            }
        }
        Ok(g)
    }
}

pub fn coherent_state(space: &HilbertSpace, label: CoherentLabel) -> Result<StateVector> {
    CoherentFamily::new(space, &Tolerances::default())?.state(label)
}

/// ⟨a|b⟩.
pub fn overlap(a: &StateVector, b: &StateVector) -> Result<C64> {
    a.inner(b)
}

pub fn lower_symbol(h: &OperatorMatrix, label: CoherentLabel) -> Result<C64> {
    CoherentFamily::new(h.space(), &Tolerances::default())?.lower_symbol(h, label)
}

pub fn weyl_residual(space: &HilbertSpace, p: f64, q: f64) -> Result<f64> {
    CoherentFamily::new(space, &Tolerances::default())?.weyl_residual(p, q)
}

pub fn fubini_study_metric(
    space: &HilbertSpace,
    label: CoherentLabel,
    h: f64,
) -> Result<[[f64; 2]; 2]> {
    CoherentFamily::new(space, &Tolerances::default())?.fubini_study_metric(label, h)
}
