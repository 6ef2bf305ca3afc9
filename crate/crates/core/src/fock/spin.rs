//! Spin generators and tensor-product helpers.

use crate::fock::{HilbertSpace, OperatorMatrix};
use crate::linalg::{self, CMatrix, I};
use crate::{Error, Result, C64};

fn spin_block(twice_j: u32) -> [CMatrix; 3] {
    let d = twice_j as usize + 1;
    let j = twice_j as f64 / 2.0;
    let mut jz = CMatrix::zeros(d, d);
    let mut jp = CMatrix::zeros(d, d);
    // basis ordered m = j, j−1, …, −j
    for k in 0..d {
        let m = j - k as f64;
        jz[(k, k)] = C64::new(m, 0.0);
        if k > 0 {
            // J+ |j,m⟩ = √(j(j+1) − m(m+1)) |j,m+1⟩
            jp[(k - 1, k)] = C64::new((j * (j + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
        }
    }
    let jm = jp.adjoint();
    let jx = (&jp + &jm).scale(0.5);
    let jy = (&jp - &jm) * (-I * 0.5);
    [jx, jy, jz]
}

/// Block-diagonal `(J1, J2, J3)` on a direct sum of spin multiplets.
pub fn rotation_generators(space: &HilbertSpace) -> Result<[OperatorMatrix; 3]> {
    let HilbertSpace::SpinSum { twice_spins } = space else {
        return Err(Error::SpaceKind {
            expected: "SpinSum",
            found: space.to_string(),
        });
    };
    let d = space.dim();
    let mut gens = [CMatrix::zeros(d, d), CMatrix::zeros(d, d), CMatrix::zeros(d, d)];
    let mut offset = 0;
    for &t in twice_spins {
        let block = spin_block(t);
        let n = t as usize + 1;
        for (g, b) in gens.iter_mut().zip(block.iter()) {
            g.view_mut((offset, offset), (n, n)).copy_from(b);
        }
        offset += n;
    }
    let [a, b, c] = gens;
    Ok([
        OperatorMatrix::hermitian(space.clone(), a, 1e-14)?,
        OperatorMatrix::hermitian(space.clone(), b, 1e-14)?,
        OperatorMatrix::hermitian(space.clone(), c, 1e-14)?,
    ])
}

/// `a ⊗ b` on the product space.
pub fn tensor_product(a: &OperatorMatrix, b: &OperatorMatrix) -> OperatorMatrix {
    let space = HilbertSpace::Product(vec![a.space().clone(), b.space().clone()]);
    let m = linalg::kron(a.entries(), b.entries());
    let op = OperatorMatrix::new(space, m).expect("kron dimension is consistent");
    if a.is_hermitian() && b.is_hermitian() {
        op.into_hermitian(1e-12).unwrap_or_else(|e| panic!("kron of hermitian factors: {e}"))
    } else {
        op
    }
}

/// `1 ⊗ … ⊗ op ⊗ … ⊗ 1` with `op` in slot `slot` of `factors`.
pub fn kron_lift(op: &OperatorMatrix, factors: &[HilbertSpace], slot: usize) -> Result<OperatorMatrix> {
    if slot >= factors.len() || factors[slot].dim() != op.dim() {
        return Err(Error::invalid("lift slot does not match operator space"));
    }
    let mut m = CMatrix::identity(1, 1);
    for (k, f) in factors.iter().enumerate() {
        let piece = if k == slot {
            op.entries().clone()
        } else {
            linalg::identity(f.dim())
        };
        m = linalg::kron(&m, &piece);
    }
    let lifted = OperatorMatrix::new(HilbertSpace::product(factors.to_vec())?, m)?;
    if op.is_hermitian() {
        lifted.into_hermitian(1e-12)
    } else {
        Ok(lifted)
    }
}

/// Total angular momentum `J_k = Σ_s 1⊗…⊗J_k^(s)⊗…⊗1` for particles of the
/// given spins coupled by tensor product.
pub fn coupled_rotation_generators(spins: &[f64]) -> Result<[OperatorMatrix; 3]> {
    let factors: Vec<HilbertSpace> = spins
        .iter()
        .map(|&j| HilbertSpace::spin_sum(&[j]))
        .collect::<Result<_>>()?;
    let product = HilbertSpace::product(factors.clone())?;
    let mut total = [
        OperatorMatrix::zeros(&product),
        OperatorMatrix::zeros(&product),
        OperatorMatrix::zeros(&product),
    ];
    for (slot, f) in factors.iter().enumerate() {
        let local = rotation_generators(f)?;
        for k in 0..3 {
            let lifted = kron_lift(&local[k], &factors, slot)?;
            total[k] = &total[k] + &lifted;
        }
    }
    Ok(total)
}
