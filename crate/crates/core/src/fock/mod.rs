//! Finite-dimensional realization of canonical operators, coherent states
//! and spin generators.
//!
//! Fock spaces are truncated at a cutoff `D`, so `[A, A†] = 1` holds only
//! below the top occupation level: `A A†` has a zero in its last diagonal
//! entry. Everything that depends on the truncation is either restricted to
//! a documented low-occupation window or guarded by the coherent-state
//! trust radius (see [`coherent`]).

pub mod coherent;
pub mod spin;

use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::linalg::{self, CMatrix, CVector, HermitianEigen, I, ONE};
use crate::{Error, Result, Tolerances, C64};

pub use coherent::{
    coherent_state, fubini_study_metric, lower_symbol, overlap, weyl_residual, CoherentFamily,
    CoherentLabel,
};
pub use spin::{coupled_rotation_generators, kron_lift, rotation_generators, tensor_product};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HilbertSpace {
    /// Occupation-number basis `n = 0..cutoff-1`.
    Fock { cutoff: usize },
    /// Direct sum of spin multiplets, stored as `2j` per block.
    SpinSum { twice_spins: Vec<u32> },
    /// Tensor product of factors, left factor most significant.
    Product(Vec<HilbertSpace>),
}

impl HilbertSpace {
    pub fn fock(cutoff: usize) -> Result<Self> {
        if cutoff == 0 {
            return Err(Error::invalid("Fock cutoff must be positive"));
        }
        Ok(HilbertSpace::Fock { cutoff })
    }

    /// Spin values must be nonnegative half-integers.
    pub fn spin_sum(spins: &[f64]) -> Result<Self> {
        if spins.is_empty() {
            return Err(Error::invalid("spin list is empty"));
        }
        let twice_spins = spins
            .iter()
            .map(|&j| {
                let t = 2.0 * j;
                if j < 0.0 || (t - t.round()).abs() > 1e-12 {
                    Err(Error::invalid(format!("{j} is not a nonnegative half-integer")))
                } else {
                    Ok(t.round() as u32)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(HilbertSpace::SpinSum { twice_spins })
    }

    pub fn product(factors: Vec<HilbertSpace>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::invalid("tensor product needs at least one factor"));
        }
        Ok(HilbertSpace::Product(factors))
    }

    pub fn dim(&self) -> usize {
        match self {
            HilbertSpace::Fock { cutoff } => *cutoff,
            HilbertSpace::SpinSum { twice_spins } => {
                twice_spins.iter().map(|&t| t as usize + 1).sum()
            }
            HilbertSpace::Product(factors) => factors.iter().map(HilbertSpace::dim).product(),
        }
    }

    /// Index ranges of the spin multiplets of a `SpinSum`, in order.
    pub fn spin_blocks(&self) -> Option<Vec<std::ops::Range<usize>>> {
        match self {
            HilbertSpace::SpinSum { twice_spins } => {
                let mut start = 0;
                Some(
                    twice_spins
                        .iter()
                        .map(|&t| {
                            let r = start..start + t as usize + 1;
                            start = r.end;
                            r
                        })
                        .collect(),
                )
            }
            _ => None,
        }
    }

    pub fn fock_cutoff(&self) -> Result<usize> {
        match self {
            HilbertSpace::Fock { cutoff } => Ok(*cutoff),
            other => Err(Error::SpaceKind {
                expected: "Fock",
                found: other.to_string(),
            }),
        }
    }
}

impl fmt::Display for HilbertSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HilbertSpace::Fock { cutoff } => write!(f, "Fock(D={cutoff})"),
            HilbertSpace::SpinSum { twice_spins } => {
                let js: Vec<String> = twice_spins
                    .iter()
                    .map(|&t| {
                        if t % 2 == 0 {
                            format!("{}", t / 2)
                        } else {
                            format!("{t}/2")
                        }
                    })
                    .collect();
                write!(f, "SpinSum[{}]", js.join(", "))
            }
            HilbertSpace::Product(factors) => {
                let parts: Vec<String> = factors.iter().map(|s| s.to_string()).collect();
                write!(f, "{}", parts.join(" ⊗ "))
            }
        }
    }
}

/// Dense operator on a [`HilbertSpace`]. The hermitian flag is only set
/// after the entries have been checked.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    space: HilbertSpace,
    entries: CMatrix,
    hermitian: bool,
}

impl OperatorMatrix {
    pub fn new(space: HilbertSpace, entries: CMatrix) -> Result<Self> {
        let dim = space.dim();
        if entries.nrows() != dim || entries.ncols() != dim {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: entries.nrows().max(entries.ncols()),
            });
        }
        Ok(Self {
            space,
            entries,
            hermitian: false,
        })
    }

    /// Builds an operator asserted to be hermitian and verifies the claim.
    pub fn hermitian(space: HilbertSpace, entries: CMatrix, tol: f64) -> Result<Self> {
        Self::new(space, entries)?.into_hermitian(tol)
    }

    /// Verifies hermiticity and sets the flag.
    pub fn into_hermitian(mut self, tol: f64) -> Result<Self> {
        let dev = linalg::hermitian_deviation(&self.entries);
        if dev > tol {
            return Err(Error::NotHermitian(dev));
        }
        self.hermitian = true;
        Ok(self)
    }

    pub fn identity(space: &HilbertSpace) -> Self {
        let d = space.dim();
        Self {
            space: space.clone(),
            entries: linalg::identity(d),
            hermitian: true,
        }
    }

    pub fn zeros(space: &HilbertSpace) -> Self {
        let d = space.dim();
        Self {
            space: space.clone(),
            entries: CMatrix::zeros(d, d),
            hermitian: true,
        }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn require_hermitian(&self) -> Result<()> {
        if self.hermitian {
            Ok(())
        } else {
            Err(Error::NotHermitian(linalg::hermitian_deviation(&self.entries)))
        }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            space: self.space.clone(),
            entries: self.entries.adjoint(),
            hermitian: self.hermitian,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            space: self.space.clone(),
            entries: self.entries.scale(s),
            hermitian: self.hermitian,
        }
    }

    pub fn scale_complex(&self, z: C64) -> Self {
        Self {
            space: self.space.clone(),
            entries: &self.entries * z,
            hermitian: self.hermitian && z.im == 0.0,
        }
    }

    pub fn trace(&self) -> C64 {
        self.entries.trace()
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.check_same_space(other)?;
        Self::new(
            self.space.clone(),
            linalg::commutator(&self.entries, &other.entries),
        )
    }

    pub fn apply(&self, v: &StateVector) -> Result<StateVector> {
        if v.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: v.dim(),
            });
        }
        Ok(StateVector {
            space: self.space.clone(),
            amplitudes: &self.entries * &v.amplitudes,
        })
    }

    /// ⟨a|M|b⟩.
    pub fn matrix_element(&self, a: &StateVector, b: &StateVector) -> Result<C64> {
        let mb = self.apply(b)?;
        a.inner(&mb)
    }

    pub fn check_same_space(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(())
    }
}

impl Add for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_eq!(self.dim(), rhs.dim(), "operator dimensions differ");
        OperatorMatrix {
            space: self.space.clone(),
            entries: &self.entries + &rhs.entries,
            hermitian: self.hermitian && rhs.hermitian,
        }
    }
}

impl Sub for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_eq!(self.dim(), rhs.dim(), "operator dimensions differ");
        OperatorMatrix {
            space: self.space.clone(),
            entries: &self.entries - &rhs.entries,
            hermitian: self.hermitian && rhs.hermitian,
        }
    }
}

impl Mul for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_eq!(self.dim(), rhs.dim(), "operator dimensions differ");
        OperatorMatrix {
            space: self.space.clone(),
            entries: &self.entries * &rhs.entries,
            hermitian: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    space: HilbertSpace,
    amplitudes: CVector,
}

impl StateVector {
    pub fn new(space: HilbertSpace, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                left: space.dim(),
                right: amplitudes.len(),
            });
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("state amplitudes must be finite"));
        }
        Ok(Self { space, amplitudes })
    }

    /// Basis vector `|n⟩`.
    pub fn basis(space: &HilbertSpace, n: usize) -> Result<Self> {
        let d = space.dim();
        if n >= d {
            return Err(Error::invalid(format!("basis index {n} outside dimension {d}")));
        }
        let mut amplitudes = CVector::zeros(d);
        amplitudes[n] = ONE;
        Ok(Self {
            space: space.clone(),
            amplitudes,
        })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self {
            space: self.space.clone(),
            amplitudes: self.amplitudes.unscale(n),
        }
    }

    /// ⟨self|other⟩, antilinear in `self`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// |⟨self|other⟩|² for normalized inputs.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr() / (self.norm().powi(2) * other.norm().powi(2)))
    }
}

/// Truncated annihilation and creation operators, `A|n⟩ = √n |n−1⟩`.
///
/// With the top level cut off, `A A†` misses the last diagonal entry so the
/// commutator `[A, A†]` equals the identity except at `n = D−1`.
pub fn ladder_pair(space: &HilbertSpace) -> Result<(OperatorMatrix, OperatorMatrix)> {
    let d = space.fock_cutoff()?;
    let mut a = CMatrix::zeros(d, d);
    for n in 1..d {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    let ad = a.adjoint();
    Ok((
        OperatorMatrix::new(space.clone(), a)?,
        OperatorMatrix::new(space.clone(), ad)?,
    ))
}

/// Momentum and position `(P, Q)` with `Q = (A + A†)/√2`,
/// `P = (A − A†)/(i√2)`, so that `Q + iP = √2 A` annihilates `|0⟩`.
pub fn canonical_pair(space: &HilbertSpace) -> Result<(OperatorMatrix, OperatorMatrix)> {
    let (a, ad) = ladder_pair(space)?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let q = (a.entries() + ad.entries()).scale(s);
    let p = (a.entries() - ad.entries()) * (-I * s);
    Ok((
        OperatorMatrix::hermitian(space.clone(), p, 0.0)?,
        OperatorMatrix::hermitian(space.clone(), q, 0.0)?,
    ))
}

/// Eigenpairs of a hermitian operator in ascending order, with the
/// eigensolver residual checked against `tol.eigen_residual`.
pub fn hermitian_spectrum(m: &OperatorMatrix, tol: &Tolerances) -> Result<Vec<(f64, StateVector)>> {
    m.require_hermitian()?;
    let eig = HermitianEigen::new(m.entries());
    let scale = linalg::max_abs(m.entries()).max(1.0);
    let mut out = Vec::with_capacity(eig.dim());
    for (k, &value) in eig.values.iter().enumerate() {
        let v: CVector = eig.vectors.column(k).into_owned();
        let residual = (m.entries() * &v - v.scale(value)).norm();
        if residual > tol.eigen_residual * scale {
            return Err(Error::invalid(format!(
                "eigenpair {k} residual {residual:.3e} exceeds tolerance"
            )));
        }
        out.push((value, StateVector::new(m.space().clone(), v)?));
    }
    Ok(out)
}
