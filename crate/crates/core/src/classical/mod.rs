//! Classical constraint theory on polynomial phase-space functions.
//!
//! Phase points are laid out as `[p_1..p_J, q_1..q_J]`, the same order as
//! polynomial exponent vectors. The bracket convention is `{q, p} = 1`.

mod polynomial;

pub use polynomial::{poisson_bracket, Exponents, PhasePolynomial};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fock::{canonical_pair, HilbertSpace, OperatorMatrix};
use crate::{Error, Result, Tolerances};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSystem {
    h: PhasePolynomial,
    phis: Vec<PhasePolynomial>,
}

impl ConstraintSystem {
    /// Lifts every member to the largest dof present.
    pub fn new(h: PhasePolynomial, phis: Vec<PhasePolynomial>) -> Self {
        let dof = phis.iter().map(|p| p.dof()).fold(h.dof(), usize::max);
        Self {
            h: h.with_dof(dof).unwrap(),
            phis: phis.into_iter().map(|p| p.with_dof(dof).unwrap()).collect(),
        }
    }

    pub fn h(&self) -> &PhasePolynomial {
        &self.h
    }

    pub fn phis(&self) -> &[PhasePolynomial] {
        &self.phis
    }

    pub fn dof(&self) -> usize {
        self.h.dof()
    }

    pub fn constraint_count(&self) -> usize {
        self.phis.len()
    }

    /// `max_α |φ_α(x)|`, zero without constraints.
    pub fn drift(&self, point: &[f64]) -> f64 {
        self.phis
            .iter()
            .map(|p| p.evaluate(point).abs())
            .fold(0.0, f64::max)
    }
}

fn common_dof(phis: &[PhasePolynomial]) -> Result<usize> {
    let dof = phis.first().map(|p| p.dof()).unwrap_or(0);
    if phis.iter().any(|p| p.dof() != dof) {
        return Err(Error::invalid("constraints must share one phase space"));
    }
    Ok(dof)
}

fn jacobian(phis: &[PhasePolynomial], point: &[f64]) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = phis.iter().map(|p| p.gradient(point)).collect();
    DMatrix::from_fn(phis.len(), point.len(), |a, s| rows[a][s])
}

const NEWTON_MAX_ITER: usize = 100;
const SEED_BOX: f64 = 2.0;

/// Projects `seeds` random points onto `{φ_α = 0}` with pseudo-inverse
/// Newton steps. Failed seeds are dropped.
pub fn surface_samples(
    phis: &[PhasePolynomial],
    seeds: usize,
    rng_seed: u64,
    tol: &Tolerances,
) -> Result<Vec<Vec<f64>>> {
    let dof = common_dof(phis)?.max(1);
    if phis.len() > 2 * dof {
        return Err(Error::invalid(format!(
            "{} constraints exceed the phase-space dimension {}",
            phis.len(),
            2 * dof
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let starts: Vec<Vec<f64>> = (0..seeds)
        .map(|_| (0..2 * dof).map(|_| rng.random_range(-SEED_BOX..SEED_BOX)).collect())
        .collect();
    let results: Vec<Option<Vec<f64>>> = starts
        .into_par_iter()
        .map(|x| newton_project(phis, x, tol.surface))
        .collect();
    let total = results.len();
    let points: Vec<Vec<f64>> = results.into_iter().flatten().collect();
    let failed = total - points.len();
    if total > 0 && failed as f64 > tol.newton_failure_rate * total as f64 {
        return Err(Error::IllConditionedSurface { failed, total });
    }
    Ok(points)
}

fn newton_project(phis: &[PhasePolynomial], mut x: Vec<f64>, tol: f64) -> Option<Vec<f64>> {
    if phis.is_empty() {
        return Some(x);
    }
    for _ in 0..NEWTON_MAX_ITER {
        let r = DVector::from_iterator(phis.len(), phis.iter().map(|p| p.evaluate(&x)));
        if r.amax() <= tol {
            return Some(x);
        }
        if !r.iter().all(|v| v.is_finite()) {
            return None;
        }
        let jac = jacobian(phis, &x);
        let pinv = jac.pseudo_inverse(1e-12).ok()?;
        let step = pinv * r;
        for (xi, si) in x.iter_mut().zip(step.iter()) {
            *xi -= si;
        }
    }
    let residual = phis.iter().map(|p| p.evaluate(&x).abs()).fold(0.0, f64::max);
    (residual <= tol).then_some(x)
}

/// `M_{αβ} = {φ_α, φ_β}(x)`.
pub fn bracket_matrix(phis: &[PhasePolynomial], point: &[f64]) -> DMatrix<f64> {
    let a = phis.len();
    let mut m = DMatrix::zeros(a, a);
    for i in 0..a {
        for j in i + 1..a {
            let v = poisson_bracket(&phis[i], &phis[j]).evaluate(point);
            m[(i, j)] = v;
            m[(j, i)] = -v;
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    FirstClassClosed,
    FirstClassOpen,
    SecondClass,
    Mixed,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::FirstClassClosed => "first-class-closed",
            Verdict::FirstClassOpen => "first-class-open",
            Verdict::SecondClass => "second-class",
            Verdict::Mixed => "mixed",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub verdict: Verdict,
    /// `max_x |{φ_α, φ_β}(x)|` over the samples.
    pub on_surface_bracket_residuals: Vec<Vec<f64>>,
    /// Smallest singular value of the bracket matrix over the samples.
    pub bracket_matrix_min_singular_value: f64,
    /// `max_x |{φ_α, H}(x)|` over the samples.
    pub h_bracket_residuals: Vec<f64>,
    pub sample_count: usize,
    pub tol_first: f64,
    pub tol_second: f64,
    /// First-class candidate whose brackets with H do not vanish on the
    /// surface, so further constraints would be needed.
    pub secondary_constraints_suspected: bool,
    /// Largest coefficient left after subtracting the best constant-coefficient
    /// combination of constraints from the brackets.
    pub structure_fit_residual: f64,
}

pub const MIN_CLASSIFY_SAMPLES: usize = 20;

pub fn classify(
    system: &ConstraintSystem,
    samples: &[Vec<f64>],
    tol_first: f64,
    tol_second: f64,
) -> Result<ClassificationReport> {
    if samples.len() < MIN_CLASSIFY_SAMPLES {
        return Err(Error::invalid(format!(
            "classification needs at least {MIN_CLASSIFY_SAMPLES} surface samples, got {}",
            samples.len()
        )));
    }
    let phis = system.phis();
    let a = phis.len();
    if a == 0 {
        return Err(Error::EmptyConstraints);
    }
    let brackets: Vec<Vec<PhasePolynomial>> = (0..a)
        .map(|i| (0..a).map(|j| poisson_bracket(&phis[i], &phis[j])).collect())
        .collect();
    let h_brackets: Vec<PhasePolynomial> =
        phis.iter().map(|p| poisson_bracket(p, system.h())).collect();

    let mut residuals = vec![vec![0.0; a]; a];
    let mut h_residuals = vec![0.0; a];
    let mut min_sv = f64::INFINITY;
    // per sample: number of singular values above tol_second, and whether the
    // rest sit below tol_first
    let mut ranks = Vec::with_capacity(samples.len());
    let mut clean_split = true;
    for x in samples {
        for i in 0..a {
            for j in 0..a {
                residuals[i][j] = f64::max(residuals[i][j], brackets[i][j].evaluate(x).abs());
            }
            h_residuals[i] = f64::max(h_residuals[i], h_brackets[i].evaluate(x).abs());
        }
        let sv = bracket_matrix(phis, x).singular_values();
        min_sv = min_sv.min(sv.min());
        let rank = sv.iter().filter(|&&s| s >= tol_second).count();
        clean_split &= sv.iter().all(|&s| s >= tol_second || s <= tol_first);
        ranks.push(rank);
    }

    let max_residual = residuals.iter().flatten().fold(0.0, |m: f64, v| m.max(*v));
    let fit_residual = structure_fit_residual(phis, &brackets);
    let first = max_residual <= tol_first;
    let verdict = if first {
        if fit_residual <= STRUCTURE_FIT_TOL * (1.0 + max_coeff(phis)) {
            Verdict::FirstClassClosed
        } else {
            Verdict::FirstClassOpen
        }
    } else if min_sv >= tol_second {
        Verdict::SecondClass
    } else if clean_split && ranks.iter().all(|&r| r == ranks[0]) && ranks[0] > 0 {
        Verdict::Mixed
    } else {
        Verdict::Inconclusive
    };
    let secondary = first && h_residuals.iter().any(|&r| r > tol_first);
    Ok(ClassificationReport {
        verdict,
        on_surface_bracket_residuals: residuals,
        bracket_matrix_min_singular_value: min_sv,
        h_bracket_residuals: h_residuals,
        sample_count: samples.len(),
        tol_first,
        tol_second,
        secondary_constraints_suspected: secondary,
        structure_fit_residual: fit_residual,
    })
}

const STRUCTURE_FIT_TOL: f64 = 1e-10;

fn max_coeff(phis: &[PhasePolynomial]) -> f64 {
    phis.iter().map(|p| p.max_abs_coeff()).fold(0.0, f64::max)
}

/// Largest leftover coefficient of `{φ_α, φ_β} − Σ_γ c^γ φ_γ` over all pairs,
/// with `c` the least-squares constant fit on the monomial coefficients.
fn structure_fit_residual(phis: &[PhasePolynomial], brackets: &[Vec<PhasePolynomial>]) -> f64 {
    let a = phis.len();
    let mut worst: f64 = 0.0;
    for i in 0..a {
        for j in i + 1..a {
            let target = &brackets[i][j];
            let mut monomials: Vec<&Exponents> = target.terms().keys().collect();
            for p in phis {
                monomials.extend(p.terms().keys());
            }
            monomials.sort();
            monomials.dedup();
            let coeff = |p: &PhasePolynomial, e: &Exponents| p.terms().get(e).copied().unwrap_or(0.0);
            let design = DMatrix::from_fn(monomials.len(), a, |r, g| coeff(&phis[g], monomials[r]));
            let rhs = DVector::from_fn(monomials.len(), |r, _| coeff(target, monomials[r]));
            let c = design
                .clone()
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .unwrap_or_else(|_| DVector::zeros(a));
            let mut fitted = target.clone();
            for (g, phi) in phis.iter().enumerate() {
                fitted = &fitted - &phi.scale(c[g]);
            }
            worst = worst.max(fitted.max_abs_coeff());
        }
    }
    worst
}

/// Multipliers `λ = −M⁻¹ b` with `M_{αβ} = {φ_α, φ_β}` and `b_α = {φ_α, H}`,
/// so that `{φ_α, H} + λ^β {φ_α, φ_β} = 0` at `point`.
pub fn solve_multipliers(system: &ConstraintSystem, point: &[f64], tol: &Tolerances) -> Result<Vec<f64>> {
    let phis = system.phis();
    let m = bracket_matrix(phis, point);
    let b = DVector::from_iterator(
        phis.len(),
        phis.iter().map(|p| poisson_bracket(p, system.h()).evaluate(point)),
    );
    multipliers_from(&m, &b, tol.multiplier_min_sv)
}

fn multipliers_from(m: &DMatrix<f64>, b: &DVector<f64>, min_sv: f64) -> Result<Vec<f64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let svd = m.clone().svd(true, true);
    let smallest = svd.singular_values.min();
    if smallest < min_sv {
        return Err(Error::NotSecondClass(smallest));
    }
    let lambda = -svd.solve(b, 0.0).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(lambda.iter().copied().collect())
}

/// `max_α |{φ_α, H} + λ^β {φ_α, φ_β}|` at `point`.
pub fn multiplier_residual(system: &ConstraintSystem, point: &[f64], lambda: &[f64]) -> f64 {
    let phis = system.phis();
    let m = bracket_matrix(phis, point);
    phis.iter()
        .enumerate()
        .map(|(a, p)| {
            let mut r = poisson_bracket(p, system.h()).evaluate(point);
            for (b, l) in lambda.iter().enumerate() {
                r += l * m[(a, b)];
            }
            r.abs()
        })
        .fold(0.0, f64::max)
}

pub enum MultiplierSource<'a> {
    /// Recompute determined multipliers at every stage point.
    AutoSecondClass,
    /// Prescribed `λ(t)`.
    Schedule(&'a dyn Fn(f64) -> Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// `max_α |φ_α|` at each stored point.
    pub drift: Vec<f64>,
    /// Sum over steps of the step-doubling local-error estimate of the
    /// plain integrator, `‖x_dt − x_{dt/2,dt/2}‖∞ · 16/15`.
    pub local_error_estimate: f64,
}

impl Trajectory {
    pub fn max_drift(&self) -> f64 {
        self.drift.iter().copied().fold(0.0, f64::max)
    }

    pub fn last(&self) -> &[f64] {
        self.points.last().unwrap()
    }
}

struct VectorField<'a> {
    system: &'a ConstraintSystem,
    dh: Vec<PhasePolynomial>,
    dphi: Vec<Vec<PhasePolynomial>>,
    brackets: Vec<Vec<PhasePolynomial>>,
    h_brackets: Vec<PhasePolynomial>,
    min_sv: f64,
}

impl<'a> VectorField<'a> {
    fn new(system: &'a ConstraintSystem, min_sv: f64) -> Self {
        let slots = 2 * system.dof();
        let grad = |f: &PhasePolynomial| -> Vec<PhasePolynomial> {
            (0..slots)
                .map(|s| if s < system.dof() { f.d_dp(s) } else { f.d_dq(s - system.dof()) })
                .collect()
        };
        let phis = system.phis();
        Self {
            system,
            dh: grad(system.h()),
            dphi: phis.iter().map(grad).collect(),
            brackets: phis
                .iter()
                .map(|a| phis.iter().map(|b| poisson_bracket(a, b)).collect())
                .collect(),
            h_brackets: phis.iter().map(|p| poisson_bracket(p, system.h())).collect(),
            min_sv,
        }
    }

    fn auto_lambda(&self, x: &[f64]) -> Result<Vec<f64>> {
        let a = self.brackets.len();
        let m = DMatrix::from_fn(a, a, |i, j| self.brackets[i][j].evaluate(x));
        let b = DVector::from_fn(a, |i, _| self.h_brackets[i].evaluate(x));
        multipliers_from(&m, &b, self.min_sv)
    }

    /// `q̇ = ∂H/∂p + λ·∂φ/∂p`, `ṗ = −∂H/∂q − λ·∂φ/∂q`.
    fn eval(&self, x: &[f64], lambda: &[f64]) -> Vec<f64> {
        let j = self.system.dof();
        let mut g: Vec<f64> = self.dh.iter().map(|d| d.evaluate(x)).collect();
        for (l, dphi) in lambda.iter().zip(&self.dphi) {
            for (gs, d) in g.iter_mut().zip(dphi) {
                *gs += l * d.evaluate(x);
            }
        }
        let mut out = vec![0.0; 2 * j];
        for k in 0..j {
            out[k] = -g[j + k];
            out[j + k] = g[k];
        }
        out
    }

    fn rhs(&self, source: &MultiplierSource<'_>, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let lambda = match source {
            MultiplierSource::AutoSecondClass => self.auto_lambda(x)?,
            MultiplierSource::Schedule(f) => {
                let l = f(t);
                if l.len() != self.dphi.len() {
                    return Err(Error::invalid(format!(
                        "multiplier schedule returned {} values for {} constraints",
                        l.len(),
                        self.dphi.len()
                    )));
                }
                l
            }
        };
        Ok(self.eval(x, &lambda))
    }

    fn rk4(&self, source: &MultiplierSource<'_>, t: f64, x: &[f64], dt: f64) -> Result<Vec<f64>> {
        let axpy = |a: f64, k: &[f64]| -> Vec<f64> { x.iter().zip(k).map(|(xi, ki)| xi + a * ki).collect() };
        let k1 = self.rhs(source, t, x)?;
        let k2 = self.rhs(source, t + dt / 2.0, &axpy(dt / 2.0, &k1))?;
        let k3 = self.rhs(source, t + dt / 2.0, &axpy(dt / 2.0, &k2))?;
        let k4 = self.rhs(source, t + dt, &axpy(dt, &k3))?;
        Ok((0..x.len())
            .map(|s| x[s] + dt / 6.0 * (k1[s] + 2.0 * k2[s] + 2.0 * k3[s] + k4[s]))
            .collect())
    }
}

pub const INITIAL_SURFACE_TOL: f64 = 1e-8;

/// Classical RK4 integration of the constrained equations of motion.
pub fn integrate_constrained(
    system: &ConstraintSystem,
    source: MultiplierSource<'_>,
    x0: &[f64],
    dt: f64,
    steps: usize,
    tol: &Tolerances,
) -> Result<Trajectory> {
    if x0.len() != 2 * system.dof() {
        return Err(Error::DimensionMismatch {
            left: x0.len(),
            right: 2 * system.dof(),
        });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("time step must be positive"));
    }
    let d0 = system.drift(x0);
    if d0 > INITIAL_SURFACE_TOL {
        return Err(Error::invalid(format!(
            "initial point is off the constraint surface (max |φ| = {d0:e})"
        )));
    }
    let field = VectorField::new(system, tol.multiplier_min_sv);
    if let MultiplierSource::AutoSecondClass = source {
        if system.constraint_count() > 0 {
            let smallest = bracket_matrix(system.phis(), x0).singular_values().min();
            if smallest < tol.second_class {
                return Err(Error::NotSecondClass(smallest));
            }
        }
    }
    let mut x = x0.to_vec();
    let mut traj = Trajectory {
        times: vec![0.0],
        points: vec![x.clone()],
        drift: vec![d0],
        local_error_estimate: 0.0,
    };
    for step in 0..steps {
        let t = step as f64 * dt;
        let next = field.rk4(&source, t, &x, dt)?;
        let half = field.rk4(&source, t, &x, dt / 2.0)?;
        let twice = field.rk4(&source, t + dt / 2.0, &half, dt / 2.0)?;
        let local = next
            .iter()
            .zip(&twice)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        traj.local_error_estimate += local * 16.0 / 15.0;
        x = next;
        let drift = system.drift(&x);
        if drift.is_nan() || drift > tol.drift_limit {
            return Err(Error::DriftExplosion {
                drift,
                limit: tol.drift_limit,
                step: step + 1,
            });
        }
        traj.times.push((step + 1) as f64 * dt);
        traj.points.push(x.clone());
        traj.drift.push(drift);
    }
    Ok(traj)
}

/// Operator for a one-dof polynomial on a Fock space, with each monomial
/// `pᵃqᵇ` mapped to `(PᵃQᵇ + QᵇPᵃ)/2`. Powers are truncated matrix powers.
pub fn symmetric_quantization(poly: &PhasePolynomial, space: &HilbertSpace) -> Result<OperatorMatrix> {
    if poly.dof() != 1 {
        return Err(Error::invalid(format!(
            "only one-degree-of-freedom polynomials can be quantized, got {}",
            poly.dof()
        )));
    }
    let (p, q) = canonical_pair(space)?;
    let power = |m: &OperatorMatrix, k: u32| -> OperatorMatrix {
        (0..k).fold(OperatorMatrix::identity(space), |acc, _| &acc * m)
    };
    let mut out = OperatorMatrix::zeros(space);
    for (e, &c) in poly.terms() {
        let (pa, qb) = (power(&p, e[0]), power(&q, e[1]));
        let sym = &(&pa * &qb) + &(&qb * &pa);
        out = &out + &sym.scale(c / 2.0);
    }
    out.into_hermitian(1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn poly(s: &str) -> PhasePolynomial {
        PhasePolynomial::parse(s).unwrap()
    }

    fn angular_momenta() -> Vec<PhasePolynomial> {
        ["q2*p3 - q3*p2", "q3*p1 - q1*p3", "q1*p2 - q2*p1"]
            .iter()
            .map(|s| PhasePolynomial::parse_with_dof(s, 3).unwrap())
            .collect()
    }

    /// Circle of radius one with its tangency condition, gravity along q2.
    pub(crate) fn pendulum() -> ConstraintSystem {
        ConstraintSystem::new(
            poly("0.5*p1^2 + 0.5*p2^2 + q2"),
            vec![poly("q1^2 + q2^2 - 1"), poly("q1*p1 + q2*p2")],
        )
    }

    #[test]
    fn angular_momentum_algebra() {
        let l = angular_momenta();
        // direct expansion: {q2 p3 − q3 p2, q3 p1 − q1 p3} = q1 p2 − q2 p1
        let b = poisson_bracket(&l[0], &l[1]);
        assert_eq!(b, l[2]);
        assert_eq!(poisson_bracket(&l[1], &l[2]), l[0]);
        assert_eq!(poisson_bracket(&l[2], &l[0]), l[1]);
    }

    #[test]
    fn newton_samples() {
        let tol = Tolerances::default();
        let p1 = vec![PhasePolynomial::p(2, 0)];
        for x in surface_samples(&p1, 10, 1, &tol).unwrap() {
            assert_eq!(x[0], 0.0);
        }
        let pq = vec![poly("p1"), poly("q1")];
        for x in surface_samples(&pq, 10, 2, &tol).unwrap() {
            assert_eq!(x, vec![0.0, 0.0]);
        }
        let circle = vec![poly("q1^2 + q2^2 - 1").with_dof(2).unwrap()];
        let pts = surface_samples(&circle, 30, 3, &tol).unwrap();
        assert!(pts.len() >= 28);
        for x in pts {
            assert!((x[2].hypot(x[3]) - 1.0).abs() <= 1e-10);
        }
        assert!(surface_samples(&[poly("p1"), poly("q1"), poly("p1 + q1")], 4, 0, &tol).is_err());
    }

    #[test]
    fn unreachable_surface_is_reported() {
        let tol = Tolerances::default();
        let empty = vec![poly("q1^2 + 1")];
        assert!(matches!(
            surface_samples(&empty, 20, 0, &tol),
            Err(Error::IllConditionedSurface { failed: 20, total: 20 })
        ));
    }

    #[test]
    fn bracket_matrix_examples() {
        let pq = vec![poly("p1"), poly("q1")];
        let m = bracket_matrix(&pq, &[0.3, -0.7]);
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
        let momenta = vec![poly("p1"), poly("p2")];
        assert_eq!(bracket_matrix(&momenta, &[1.0, 2.0, 3.0, 4.0]), DMatrix::zeros(2, 2));
        // q ∥ p makes L vanish
        let x = [0.2, -0.4, 0.6, 1.0, -2.0, 3.0];
        let m = bracket_matrix(&angular_momenta(), &x);
        assert!(m.amax() < 1e-12);
        let y = [0.3, 1.1, -0.2, 0.5, 0.9, -1.4];
        let m = bracket_matrix(&angular_momenta(), &y);
        assert!((&m + m.transpose()).amax() <= 1e-12);
        assert!(m.amax() > 0.1);
    }

    #[test]
    fn classify_examples() {
        let tol = Tolerances::default();
        let sys = ConstraintSystem::new(poly("0.5*p1^2 + 0.5*p2^2 + 0.5*p3^2"), angular_momenta());
        let samples = surface_samples(sys.phis(), 40, 7, &tol).unwrap();
        let r = classify(&sys, &samples, 1e-8, 1e-6).unwrap();
        assert_eq!(r.verdict, Verdict::FirstClassClosed);
        assert!(!r.secondary_constraints_suspected);
        assert!(r.structure_fit_residual < 1e-12);

        let sys = ConstraintSystem::new(poly("0.5*p1^2 + 0.5*q1^2"), vec![poly("p1"), poly("q1")]);
        let samples = surface_samples(sys.phis(), 20, 7, &tol).unwrap();
        let r = classify(&sys, &samples, 1e-8, 1e-6).unwrap();
        assert_eq!(r.verdict, Verdict::SecondClass);
        assert!((r.bracket_matrix_min_singular_value - 1.0).abs() < 1e-12);

        let sys = ConstraintSystem::new(poly("0.5*p1^2 + q2^2"), vec![poly("p1")]);
        let samples = surface_samples(sys.phis(), 20, 1, &tol).unwrap();
        assert_eq!(classify(&sys, &samples, 1e-8, 1e-6).unwrap().verdict, Verdict::FirstClassClosed);

        assert!(classify(&sys, &samples[..10], 1e-8, 1e-6).is_err());
    }

    #[test]
    fn open_mixed_and_secondary() {
        let tol = Tolerances::default();
        let open = ConstraintSystem::new(poly("p1"), vec![poly("p1"), poly("p2 + q1^2*p2")]);
        let s = surface_samples(open.phis(), 30, 5, &tol).unwrap();
        let r = classify(&open, &s, 1e-8, 1e-6).unwrap();
        // {p1, (1 + q1²) p2} = −2 q1 p2, a non-constant multiple of φ2
        assert_eq!(r.verdict, Verdict::FirstClassOpen, "{r:?}");

        let mixed = ConstraintSystem::new(poly("0.5*p3^2"), vec![poly("p1"), poly("q1"), poly("p2")]);
        let s = surface_samples(mixed.phis(), 20, 5, &tol).unwrap();
        assert_eq!(classify(&mixed, &s, 1e-8, 1e-6).unwrap().verdict, Verdict::Mixed);

        let driven = ConstraintSystem::new(poly("0.5*p1^2 + q1"), vec![poly("p1")]);
        let s = surface_samples(driven.phis(), 20, 5, &tol).unwrap();
        let r = classify(&driven, &s, 1e-8, 1e-6).unwrap();
        assert_eq!(r.verdict, Verdict::FirstClassClosed);
        assert!(r.secondary_constraints_suspected);
    }

    #[test]
    fn multiplier_examples() {
        let tol = Tolerances::default();
        let sys = ConstraintSystem::new(poly("0.5*p1^2 + 0.5*q1^2"), vec![poly("p1"), poly("q1")]);
        let origin = solve_multipliers(&sys, &[0.0, 0.0], &tol).unwrap();
        assert!(origin.iter().all(|l| l.abs() < 1e-15));
        let probe = solve_multipliers(&sys, &[1.0, 1.0], &tol).unwrap();
        assert!((probe[0] + 1.0).abs() < 1e-14 && (probe[1] + 1.0).abs() < 1e-14);
        assert!(multiplier_residual(&sys, &[1.0, 1.0], &probe) <= 1e-9);

        let momenta = ConstraintSystem::new(poly("p1^2"), vec![poly("p1"), poly("p2")]);
        assert!(matches!(
            solve_multipliers(&momenta, &[0.0; 4], &tol),
            Err(Error::NotSecondClass(_))
        ));
    }

    #[test]
    fn trajectory_examples() {
        let tol = Tolerances::default();
        let free = ConstraintSystem::new(poly("0.5*p1^2"), vec![]);
        let t = integrate_constrained(&free, MultiplierSource::AutoSecondClass, &[0.7, -1.0], 0.1, 50, &tol).unwrap();
        let end = t.last();
        assert!((end[0] - 0.7).abs() < 1e-14);
        assert!((end[1] - (-1.0 + 0.7 * 5.0)).abs() < 1e-12);

        let pinned = ConstraintSystem::new(poly("0.5*p1^2 + 0.5*q1^2"), vec![poly("p1"), poly("q1")]);
        let t = integrate_constrained(&pinned, MultiplierSource::AutoSecondClass, &[0.0, 0.0], 0.1, 20, &tol).unwrap();
        assert!(t.points.iter().all(|x| x == &vec![0.0, 0.0]));
        assert_eq!(t.max_drift(), 0.0);

        let gauge = ConstraintSystem::new(poly("0.5*p1^2 + 0.5*p2^2"), vec![poly("p1")]);
        let zero = |_t: f64| vec![0.0];
        let x0 = [0.0, 0.8, 0.3, -0.2];
        let t = integrate_constrained(&gauge, MultiplierSource::Schedule(&zero), &x0, 0.05, 40, &tol).unwrap();
        for x in &t.points {
            assert_eq!(x[0], 0.0);
            assert_eq!(x[2], 0.3);
        }
        assert!((t.last()[3] - (-0.2 + 0.8 * 2.0)).abs() < 1e-12);
        assert!(integrate_constrained(&gauge, MultiplierSource::AutoSecondClass, &x0, 0.05, 1, &tol).is_err());
        assert!(integrate_constrained(&gauge, MultiplierSource::Schedule(&zero), &[0.1, 0.0, 0.0, 0.0], 0.05, 1, &tol).is_err());
    }

    #[test]
    fn pendulum_drift_is_fourth_order() {
        let tol = Tolerances::default();
        let sys = pendulum();
        let th: f64 = 0.4;
        let x0 = [0.0, 0.0, th.sin(), -th.cos()];
        let mut drifts = Vec::new();
        for steps in [100, 200, 400] {
            let t = integrate_constrained(&sys, MultiplierSource::AutoSecondClass, &x0, 4.0 / steps as f64, steps, &tol)
                .unwrap();
            drifts.push(t.max_drift());
        }
        for w in drifts.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 3.5, "{drifts:?}");
        }
    }

    #[test]
    fn pendulum_drift_tracks_local_error() {
        let tol = Tolerances::default();
        let x0 = [0.3, 0.0, 0.0, -1.0];
        let t = integrate_constrained(&pendulum(), MultiplierSource::AutoSecondClass, &x0, 1e-2, 10_000, &tol).unwrap();
        assert!(t.max_drift() <= 10.0 * t.local_error_estimate, "{} {}", t.max_drift(), t.local_error_estimate);
    }

    #[test]
    fn quantized_oscillator() {
        let space = HilbertSpace::fock(12).unwrap();
        let (p, q) = canonical_pair(&space).unwrap();
        let x = symmetric_quantization(&poly("p1^2 + q1^2"), &space).unwrap();
        let direct = &(&p * &p) + &(&q * &q);
        assert!(crate::linalg::max_abs(&(x.entries() - direct.entries())) < 1e-12);
        let pq = symmetric_quantization(&poly("p1*q1"), &space).unwrap();
        let direct = (&(&p * &q) + &(&q * &p)).scale(0.5);
        assert!(crate::linalg::max_abs(&(pq.entries() - direct.entries())) < 1e-12);
        assert!(symmetric_quantization(&poly("p2"), &space).is_err());
    }

    #[test]
    fn large_steps_explode() {
        let tol = Tolerances::default();
        let x0 = [2.0, 0.0, 0.0, -1.0];
        let r = integrate_constrained(&pendulum(), MultiplierSource::AutoSecondClass, &x0, 0.5, 200, &tol);
        assert!(matches!(r, Err(Error::DriftExplosion { .. })), "{r:?}");
    }

    fn small_poly(dof: usize) -> impl Strategy<Value = PhasePolynomial> {
        let term = (proptest::collection::vec(0u32..3, 2 * dof), -3i32..=3);
        proptest::collection::vec(term, 0..5).prop_map(move |terms| {
            let terms = terms
                .into_iter()
                .filter(|(e, _)| e.iter().sum::<u32>() <= 4)
                .map(|(e, c)| (e, c as f64));
            PhasePolynomial::from_terms(dof, terms)
        })
    }

    fn triple() -> impl Strategy<Value = (PhasePolynomial, PhasePolynomial, PhasePolynomial)> {
        (1usize..=3).prop_flat_map(|j| (small_poly(j), small_poly(j), small_poly(j)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn bracket_identities((f, g, h) in triple()) {
            let zero = |p: &PhasePolynomial| p.max_abs_coeff() <= 1e-12;
            prop_assert!(zero(&(&poisson_bracket(&f, &g) + &poisson_bracket(&g, &f))));
            let leibniz = &poisson_bracket(&f, &(&g * &h))
                - &(&(&poisson_bracket(&f, &g) * &h) + &(&g * &poisson_bracket(&f, &h)));
            prop_assert!(zero(&leibniz));
            let jacobi = &(&poisson_bracket(&f, &poisson_bracket(&g, &h))
                + &poisson_bracket(&g, &poisson_bracket(&h, &f)))
                + &poisson_bracket(&h, &poisson_bracket(&f, &g));
            prop_assert!(zero(&jacobi));
        }

        #[test]
        fn bracket_is_bilinear((f, g, h) in triple(), a in -3i32..=3) {
            let a = a as f64;
            let lhs = poisson_bracket(&(&f.scale(a) + &g), &h);
            let rhs = &poisson_bracket(&f, &h).scale(a) + &poisson_bracket(&g, &h);
            prop_assert!(lhs.approx_eq(&rhs, 1e-12));
        }

        #[test]
        fn display_round_trips(f in small_poly(2)) {
            let back = PhasePolynomial::parse_with_dof(&f.to_string(), 2).unwrap();
            prop_assert!(back.approx_eq(&f, 1e-12));
        }

        #[test]
        fn classification_ignores_rescaling(s1 in 0.1f64..10.0, s2 in 0.1f64..10.0, neg in any::<bool>()) {
            let tol = Tolerances::default();
            let s1 = if neg { -s1 } else { s1 };
            for (h, phis) in [
                ("0.5*p1^2 + 0.5*q1^2", vec!["p1", "q1"]),
                ("0.5*p1^2 + 0.5*p2^2", vec!["p1", "p2"]),
            ] {
                let base = ConstraintSystem::new(poly(h), phis.iter().map(|s| poly(s)).collect());
                let scaled = ConstraintSystem::new(
                    poly(h),
                    vec![base.phis()[0].scale(s1), base.phis()[1].scale(s2)],
                );
                let samples = surface_samples(base.phis(), 20, 3, &tol).unwrap();
                let a = classify(&base, &samples, 1e-8, 1e-6).unwrap();
                let b = classify(&scaled, &samples, 1e-8, 1e-6).unwrap();
                prop_assert_eq!(a.verdict, b.verdict);
            }
        }

        #[test]
        fn multipliers_cancel_drift(p in -2.0f64..2.0, q in -2.0f64..2.0, c in -3i32..=3) {
            let tol = Tolerances::default();
            let h = &poly("0.5*p1^2 + 0.5*q1^2 + q1^3") + &PhasePolynomial::parse("p1*q1").unwrap().scale(c as f64);
            let sys = ConstraintSystem::new(h, vec![poly("p1 + q1^2"), poly("q1")]);
            let l = solve_multipliers(&sys, &[p, q], &tol).unwrap();
            prop_assert!(multiplier_residual(&sys, &[p, q], &l) <= 1e-9);
        }
    }
}
