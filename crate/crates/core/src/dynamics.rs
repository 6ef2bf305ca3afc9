//! Time evolution: exact, time-ordered, reduced to a physical subspace and
//! the interleaved product `(e^{−iεH} E)ᴺ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fock::OperatorMatrix;
use crate::linalg::{self, CMatrix, HermitianEigen, I};
use crate::projection::Projector;
use crate::{Error, Result};

/// `e^{−iHT}` by spectral decomposition.
pub fn exact_evolution(h: &OperatorMatrix, t: f64) -> Result<OperatorMatrix> {
    h.require_hermitian()?;
    let u = HermitianEigen::new(h.entries()).exp_scaled(-I * t);
    OperatorMatrix::new(h.space().clone(), u)
}

/// `e^{−iεH_N} ⋯ e^{−iεH_1}`; the last generator in the list acts last.
pub fn trotter_product(hs: &[OperatorMatrix], eps: f64) -> Result<OperatorMatrix> {
    let first = hs.first().ok_or_else(|| Error::invalid("generator list is empty"))?;
    let mut u = linalg::identity(first.dim());
    for h in hs {
        first.check_same_space(h)?;
        h.require_hermitian()?;
        u = HermitianEigen::new(h.entries()).exp_scaled(-I * eps) * u;
    }
    OperatorMatrix::new(first.space().clone(), u)
}

/// Generators `H(kε)`, `k = 1..=N`, sampled at the right end of each slice.
pub fn sample_schedule(
    h: impl Fn(f64) -> OperatorMatrix,
    t: f64,
    n: usize,
) -> Vec<OperatorMatrix> {
    let eps = t / n as f64;
    (1..=n).map(|k| h(k as f64 * eps)).collect()
}

/// `E e^{−i(EHE)T} E`.
pub fn reduced_evolution(h: &OperatorMatrix, e: &Projector, t: f64) -> Result<OperatorMatrix> {
    h.check_same_space(e.matrix())?;
    h.require_hermitian()?;
    let p = e.entries();
    let reduced = linalg::hermitian_part(&(p * h.entries() * p));
    let u = HermitianEigen::new(&reduced).exp_scaled(-I * t);
    OperatorMatrix::new(h.space().clone(), p * u * p)
}

/// `(e^{−iεH} E)ᴺ` with `ε = T/N`; the rightmost factor is `E`.
pub fn chernoff_product(h: &OperatorMatrix, e: &Projector, t: f64, n: usize) -> Result<OperatorMatrix> {
    if n == 0 {
        return Err(Error::invalid("Chernoff product needs N ≥ 1"));
    }
    h.check_same_space(e.matrix())?;
    h.require_hermitian()?;
    let eig = HermitianEigen::new(h.entries());
    Ok(chernoff_from_eigen(&eig, e.entries(), t, n, h))
}

fn chernoff_from_eigen(
    eig: &HermitianEigen,
    e: &CMatrix,
    t: f64,
    n: usize,
    h: &OperatorMatrix,
) -> OperatorMatrix {
    let step = eig.exp_scaled(-I * (t / n as f64)) * e;
    OperatorMatrix::new(h.space().clone(), linalg::matrix_power(&step, n))
        .expect("dimensions preserved")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionReport {
    pub n_values: Vec<usize>,
    /// Spectral-norm distance to the reduced evolution.
    pub errors: Vec<f64>,
    /// Slope of `−log error` against `log N`; absent when every error is
    /// already at round-off.
    pub fitted_order: Option<f64>,
}

/// Errors below this are treated as exact agreement.
pub const EXACT_AGREEMENT: f64 = 1e-10;

pub fn chernoff_convergence(
    h: &OperatorMatrix,
    e: &Projector,
    t: f64,
    ladder: &[usize],
) -> Result<EvolutionReport> {
    if ladder.len() < 4 {
        return Err(Error::invalid("Chernoff ladder needs at least four N values"));
    }
    if ladder[0] == 0 || ladder.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(Error::invalid("Chernoff ladder must double at every step"));
    }
    h.check_same_space(e.matrix())?;
    h.require_hermitian()?;
    let target = reduced_evolution(h, e, t)?;
    let eig = HermitianEigen::new(h.entries());
    let errors: Vec<f64> = ladder
        .par_iter()
        .map(|&n| {
            let k = chernoff_from_eigen(&eig, e.entries(), t, n, h);
            linalg::spectral_norm(&(k.entries() - target.entries()))
        })
        .collect();
    let fitted_order = if errors.iter().all(|&x| x <= EXACT_AGREEMENT) {
        None
    } else {
        let ns: Vec<f64> = ladder.iter().map(|&n| n as f64).collect();
        let floor: Vec<f64> = errors.iter().map(|&x| x.max(f64::MIN_POSITIVE)).collect();
        Some(-linalg::log_log_slope(&ns, &floor))
    };
    Ok(EvolutionReport {
        n_values: ladder.to_vec(),
        errors,
        fitted_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{canonical_pair, HilbertSpace, StateVector};
    use crate::projection::{spectral_projector, sum_of_squares, ConstraintSet};
    use crate::{Tolerances, C64};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn fock(d: usize) -> HilbertSpace {
        HilbertSpace::fock(d).unwrap()
    }

    fn herm(space: &HilbertSpace, m: CMatrix) -> OperatorMatrix {
        OperatorMatrix::hermitian(space.clone(), linalg::hermitian_part(&m), 1e-12).unwrap()
    }

    fn random_hermitian(d: usize, seed: u64) -> OperatorMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = CMatrix::from_fn(d, d, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        herm(&fock(d), m)
    }

    fn ground_projector(d: usize) -> Projector {
        let (p, q) = canonical_pair(&fock(d)).unwrap();
        let c = ConstraintSet::new(vec![p, q], &Tolerances::default()).unwrap();
        spectral_projector(&sum_of_squares(&c), 2.0, &Tolerances::default()).unwrap()
    }

    fn q_squared(d: usize) -> OperatorMatrix {
        let (_, q) = canonical_pair(&fock(d)).unwrap();
        herm(&fock(d), q.entries() * q.entries())
    }

    fn dist(a: &CMatrix, b: &CMatrix) -> f64 {
        linalg::spectral_norm(&(a - b))
    }

    #[test]
    fn exact_evolution_examples() {
        let h = random_hermitian(30, 1);
        let u = exact_evolution(&h, 0.0).unwrap();
        assert!(dist(u.entries(), &linalg::identity(30)) < 1e-12);
        let u = exact_evolution(&h, 1.3).unwrap();
        assert!(dist(&(u.entries().adjoint() * u.entries()), &linalg::identity(30)) <= 1e-10);

        // P² + Q² has levels 2n+1 below the truncation edge
        let d = 30;
        let (p, q) = canonical_pair(&fock(d)).unwrap();
        let h = herm(&fock(d), p.entries() * p.entries() + q.entries() * q.entries());
        let u = exact_evolution(&h, PI).unwrap();
        let low = 20;
        for n in 0..low {
            let v = StateVector::basis(&fock(d), n).unwrap();
            let w = u.apply(&v).unwrap();
            let z = v.inner(&w).unwrap();
            assert!((z + 1.0).norm() < 1e-9, "level {n}: {z}");
        }
    }

    #[test]
    fn trotter_with_equal_generators_is_exact() {
        let h = random_hermitian(12, 2);
        let hs = vec![h.clone(); 7];
        let u = trotter_product(&hs, 0.1).unwrap();
        assert!(dist(u.entries(), exact_evolution(&h, 0.7).unwrap().entries()) < 1e-10);
        let one = trotter_product(&hs[..1], 0.25).unwrap();
        assert!(dist(one.entries(), exact_evolution(&h, 0.25).unwrap().entries()) < 1e-12);
        assert!(trotter_product(&[], 0.1).is_err());
    }

    #[test]
    fn trotter_is_first_order_for_switching_hamiltonian() {
        let d = 20;
        let (p, q) = canonical_pair(&fock(d)).unwrap();
        let p2 = p.entries() * p.entries();
        let q2 = q.entries() * q.entries();
        let t = 1.0;
        let h = |s: f64| {
            let c = (PI * s / (2.0 * t)).cos().powi(2);
            herm(&fock(d), q2.scale(c) + p2.scale(1.0 - c))
        };
        let run = |n: usize| trotter_product(&sample_schedule(h, t, n), t / n as f64).unwrap();
        let reference = run(1 << 14);
        let errs: Vec<f64> = [64usize, 128, 256, 512]
            .iter()
            .map(|&n| dist(run(n).entries(), reference.entries()))
            .collect();
        for w in errs.windows(2) {
            let r = w[0] / w[1];
            assert!((2.0 / 1.15..=2.0 * 1.15).contains(&r), "{errs:?}");
        }
    }

    #[test]
    fn reduced_evolution_examples() {
        let e = ground_projector(16);
        let h = q_squared(16);
        let k = reduced_evolution(&h, &e, 0.0).unwrap();
        assert!(dist(k.entries(), e.entries()) < 1e-12);

        // rank one: phase e^{−i⟨ψ|H|ψ⟩T}
        let psi = &e.retained()[0].1;
        let mean = h.matrix_element(psi, psi).unwrap();
        let k = reduced_evolution(&h, &e, 0.9).unwrap();
        let expect = e.entries() * (-I * mean * 0.9).exp();
        assert!(dist(k.entries(), &expect) < 1e-10);

        // commuting case
        let (p, q) = canonical_pair(&fock(16)).unwrap();
        let osc = herm(&fock(16), p.entries() * p.entries() + q.entries() * q.entries());
        let k = reduced_evolution(&osc, &e, 2.1).unwrap();
        let expect = e.entries() * exact_evolution(&osc, 2.1).unwrap().entries();
        assert!(dist(k.entries(), &expect) < 1e-10);
    }

    #[test]
    fn chernoff_is_first_order_for_non_observable() {
        let d = 30;
        let e = ground_projector(d);
        let h = q_squared(d);
        let target = reduced_evolution(&h, &e, 1.0).unwrap();
        let ns = [64usize, 128, 256, 512, 1024, 2048, 4096];
        let errs: Vec<f64> = ns
            .iter()
            .map(|&n| dist(chernoff_product(&h, &e, 1.0, n).unwrap().entries(), target.entries()))
            .collect();
        for w in errs.windows(2) {
            let r = w[0] / w[1];
            assert!((1.7..=2.3).contains(&r), "{errs:?}");
        }
    }

    #[test]
    fn chernoff_single_step_expansion() {
        let d = 12;
        let e = ground_projector(d);
        let h = q_squared(d);
        let id = linalg::identity(d);
        let defect = |t: f64| {
            let k = chernoff_product(&h, &e, t, 1).unwrap();
            let lin = (&id - h.entries() * (I * t)) * e.entries();
            let projected = e.entries() * k.entries() - e.entries() * &lin;
            (dist(k.entries(), &lin), linalg::spectral_norm(&projected))
        };
        let (a1, b1) = defect(1e-2);
        let (a2, b2) = defect(5e-3);
        assert!((3.5..4.5).contains(&(a1 / a2)), "{a1} {a2}");
        assert!((3.5..4.5).contains(&(b1 / b2)), "{b1} {b2}");
    }

    #[test]
    fn chernoff_matches_for_observables() {
        let d = 16;
        let e = ground_projector(d);
        let (p, q) = canonical_pair(&fock(d)).unwrap();
        let osc = herm(&fock(d), p.entries() * p.entries() + q.entries() * q.entries());
        let target = reduced_evolution(&osc, &e, 1.0).unwrap();
        for n in [1usize, 3, 10, 64] {
            let k = chernoff_product(&osc, &e, 1.0, n).unwrap();
            assert!(dist(k.entries(), target.entries()) < 1e-10);
        }
        let r = chernoff_convergence(&osc, &e, 1.0, &[8, 16, 32, 64]).unwrap();
        assert!(r.errors.iter().all(|&x| x <= 1e-10));
        assert!(r.fitted_order.is_none());
    }

    #[test]
    fn convergence_report() {
        let d = 30;
        let r = chernoff_convergence(&q_squared(d), &ground_projector(d), 1.0, &[64, 128, 256, 512, 1024])
            .unwrap();
        let order = r.fitted_order.unwrap();
        assert!((order - 1.0).abs() <= 0.3, "order {order}");
        assert_eq!(r.errors.len(), r.n_values.len());
        let e = ground_projector(8);
        assert!(chernoff_convergence(&q_squared(8), &e, 1.0, &[]).is_err());
        assert!(chernoff_convergence(&q_squared(8), &e, 1.0, &[4, 8, 16, 33]).is_err());
        assert!(chernoff_product(&q_squared(8), &e, 1.0, 0).is_err());
    }

    #[test]
    fn chernoff_left_deficit_vanishes_with_n() {
        let d = 20;
        let e = ground_projector(d);
        let h = q_squared(d);
        let comp = linalg::identity(d) - e.entries();
        let left = |n| linalg::spectral_norm(&(&comp * chernoff_product(&h, &e, 1.0, n).unwrap().entries()));
        let right = |n| linalg::spectral_norm(&(chernoff_product(&h, &e, 1.0, n).unwrap().entries() * &comp));
        assert!(right(64) < 1e-12);
        let r = left(128) / left(256);
        assert!((1.7..2.3).contains(&r));
    }

    fn random_projector(d: usize, rank: usize, seed: u64) -> Projector {
        let h = random_hermitian(d, seed);
        let states: Vec<StateVector> = HermitianEigen::new(h.entries())
            .vectors
            .columns(0, rank)
            .column_iter()
            .map(|c| StateVector::new(fock(d), c.into_owned()).unwrap())
            .collect();
        Projector::from_states(&fock(d), &states, 1.0).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn reduced_evolution_invariants(seed in 0u64..1000, rank in 1usize..5, t1 in -2.0f64..2.0, t2 in -2.0f64..2.0) {
            let d = 6;
            let e = random_projector(d, rank, seed);
            let h = random_hermitian(d, seed + 7);
            let comp = linalg::identity(d) - e.entries();
            let k1 = reduced_evolution(&h, &e, t1).unwrap();
            let k2 = reduced_evolution(&h, &e, t2).unwrap();
            let k12 = reduced_evolution(&h, &e, t1 + t2).unwrap();
            prop_assert!(linalg::spectral_norm(&(&comp * k1.entries())) <= 1e-9);
            prop_assert!(linalg::spectral_norm(&(k1.entries() * &comp)) <= 1e-9);
            prop_assert!(dist(&(k1.entries() * k2.entries()), &(k12.entries() * e.entries())) <= 1e-9);
            let gram = e.entries() * k1.entries().adjoint() * k1.entries() * e.entries();
            prop_assert!(dist(&gram, e.entries()) <= 1e-10);
        }

        #[test]
        fn chernoff_right_confinement(seed in 0u64..1000, n in 1usize..40) {
            let d = 6;
            let e = random_projector(d, 2, seed);
            let h = random_hermitian(d, seed + 3);
            let comp = linalg::identity(d) - e.entries();
            let k = chernoff_product(&h, &e, 0.8, n).unwrap();
            prop_assert!(linalg::spectral_norm(&(k.entries() * &comp)) <= 1e-9);
        }

        #[test]
        fn exact_evolution_is_unitary(seed in 0u64..1000, t in -5.0f64..5.0) {
            let h = random_hermitian(10, seed);
            let u = exact_evolution(&h, t).unwrap();
            prop_assert!(dist(&(u.entries().adjoint() * u.entries()), &linalg::identity(10)) <= 1e-10);
        }
    }
}
