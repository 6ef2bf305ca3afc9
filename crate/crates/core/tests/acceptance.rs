//! Acceptance suite: one line per criterion, non-zero exit on any failure.

use std::f64::consts::TAU;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use projq_core::classical::{
    self, poisson_bracket, ConstraintSystem, MultiplierSource, PhasePolynomial, Verdict,
};
use projq_core::dynamics;
use projq_core::fock::{
    canonical_pair, coherent::overlap_formula, coupled_rotation_generators, CoherentFamily, CoherentLabel, HilbertSpace,
    OperatorMatrix, StateVector,
};
use projq_core::lattice::{self, LatticeOptions, PhaseGrid};
use projq_core::projection::{self, ConstraintSet, DeltaPolicy, GammaQuadrature};
use projq_core::{linalg, Tolerances, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn tol() -> Tolerances {
    Tolerances::default()
}

fn ensure(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn fock(d: usize) -> HilbertSpace {
    HilbertSpace::fock(d).unwrap()
}

fn pq_set(space: &HilbertSpace) -> ConstraintSet {
    let (p, q) = canonical_pair(space).unwrap();
    ConstraintSet::new(vec![p, q], &tol()).unwrap()
}

/// Common null vector of the generators, found without the projector.
fn common_null_vector(ops: &[OperatorMatrix]) -> StateVector {
    let n = ops[0].dim();
    let mut stacked = DMatrix::<C64>::zeros(ops.len() * n, n);
    for (i, o) in ops.iter().enumerate() {
        stacked.view_mut((i * n, 0), (n, n)).copy_from(o.entries());
    }
    let svd = stacked.svd(false, true);
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let v = svd.v_t.unwrap().row(idx).adjoint();
    StateVector::new(ops[0].space().clone(), v).unwrap()
}

fn rotation_group() -> Outcome {
    let gens = coupled_rotation_generators(&[0.5, 0.5]).map_err(fail)?;
    let x = projection::sum_of_squares(&ConstraintSet::new(gens.to_vec(), &tol()).map_err(fail)?);
    let e = projection::spectral_projector(&x, 0.5, &tol()).map_err(fail)?;
    let singlet = common_null_vector(&gens);
    let f = e.matrix().matrix_element(&singlet, &singlet).map_err(fail)?.re;
    let single = coupled_rotation_generators(&[0.5]).map_err(fail)?;
    let x1 = projection::sum_of_squares(&ConstraintSet::new(single.to_vec(), &tol()).map_err(fail)?);
    let r1 = projection::spectral_projector(&x1, 0.5, &tol()).map_err(fail)?.rank();
    ensure(
        e.rank() == 1 && f >= 1.0 - 1e-10 && r1 == 0,
        format!("two spins: rank {} singlet fidelity 1-{:.1e}; one spin: rank {r1}", e.rank(), 1.0 - f),
    )
}

fn second_class() -> Outcome {
    let space = fock(30);
    let x = projection::sum_of_squares(&pq_set(&space));
    let d = projection::choose_delta(&x, DeltaPolicy::GapMidpoint, &tol()).map_err(fail)?;
    let e = projection::spectral_projector(&x, d, &tol()).map_err(fail)?;
    let vac = StateVector::basis(&space, 0).map_err(fail)?;
    let f = e.matrix().matrix_element(&vac, &vac).map_err(fail)?.re;
    ensure(
        e.rank() == 1 && f >= 1.0 - 1e-10 && (d - 2.0).abs() < 1e-9,
        format!("δ² = {d:.6}, rank {}, ground-state fidelity 1-{:.1e}", e.rank(), 1.0 - f),
    )
}

fn germ() -> Outcome {
    let schedule = [0.4, 0.2, 0.1, 0.05];
    let l = |pb: f64, qb: f64, pk: f64, qk: f64| {
        projection::germ_limit(
            CoherentLabel::new(pb, qb).unwrap(),
            CoherentLabel::new(pk, qk).unwrap(),
            &schedule,
        )
        .map(|g| g.limit)
    };
    let base = l(1.0, 0.0, 0.0, 0.0).map_err(fail)?;
    let err = (base - C64::new((-0.5f64).exp(), 0.0)).norm();
    let mut spread: f64 = 0.0;
    for qb in [-1.0, 0.0, 1.0] {
        for qk in [-1.0, 0.0, 1.0] {
            spread = spread.max((l(1.0, qb, 0.0, qk).map_err(fail)? - base).norm());
        }
    }
    ensure(
        err <= 1e-4 && spread <= 1e-4,
        format!("|limit - e^(-1/2)| = {err:.1e}, q spread {spread:.1e}"),
    )
}

fn chernoff() -> Outcome {
    let space = fock(30);
    let (p, q) = canonical_pair(&space).unwrap();
    let x = projection::sum_of_squares(&pq_set(&space));
    let e = projection::spectral_projector(&x, 2.0, &tol()).map_err(fail)?;
    let ladder: Vec<usize> = (6..=12).map(|k| 1usize << k).collect();
    let h = (&q * &q).into_hermitian(1e-12).map_err(fail)?;
    let r = dynamics::chernoff_convergence(&h, &e, 1.0, &ladder).map_err(fail)?;
    let order = r.fitted_order.unwrap_or(f64::NAN);
    let obs = (&(&p * &p) + &(&q * &q)).into_hermitian(1e-12).map_err(fail)?;
    let ro = dynamics::chernoff_convergence(&obs, &e, 1.0, &ladder).map_err(fail)?;
    let worst = ro.errors.iter().cloned().fold(0.0, f64::max);
    ensure(
        (order - 1.0).abs() <= 0.3 && worst <= 1e-10,
        format!("H=Q² fitted order {order:.3}; observable max error {worst:.1e}"),
    )
}

fn gamma_ladder(x: &OperatorMatrix, delta_sq: f64) -> Result<Vec<f64>, String> {
    [8.0, 16.0, 32.0, 64.0]
        .iter()
        .map(|k| {
            let g = projection::gamma_integral_projector(x, delta_sq, &GammaQuadrature::new(TAU * k), 1.0)
                .map_err(fail)?;
            Ok(g.max_entry_error())
        })
        .collect()
}

fn gamma() -> Outcome {
    let gens = coupled_rotation_generators(&[0.5, 0.5]).map_err(fail)?;
    let j2 = projection::sum_of_squares(&ConstraintSet::new(gens.to_vec(), &tol()).map_err(fail)?);
    let osc = projection::sum_of_squares(&pq_set(&fock(30)));
    let mut worst_ratio = f64::INFINITY;
    for (x, d) in [(&j2, 1.0), (&osc, 2.0)] {
        let errs = gamma_ladder(x, d)?;
        for w in errs.windows(2) {
            worst_ratio = worst_ratio.min(w[0] / w[1]);
        }
    }
    let space = fock(12);
    let zero = OperatorMatrix::zeros(&space);
    let g = projection::gamma_integral_projector(&zero, 1.0, &GammaQuadrature::new(TAU * 64.0), 1.0)
        .map_err(fail)?;
    let dev = linalg::max_abs(&(g.operator.entries() - linalg::identity(space.dim())));
    let bound = g.predicted_entry_error(0.0) + 1e-9;
    ensure(
        worst_ratio >= 1.8 && dev <= bound,
        format!("min error ratio per Γ doubling {worst_ratio:.3}; identity deviation {dev:.2e} <= {bound:.2e}"),
    )
}

fn geometry() -> Outcome {
    let f40 = CoherentFamily::new(&fock(40), &tol()).map_err(fail)?;
    let mut labels = Vec::new();
    for i in -4..=4 {
        for j in -4..=4 {
            let (p, q) = (0.5 * i as f64, 0.5 * j as f64);
            if p.hypot(q) <= 2.0 {
                labels.push(CoherentLabel::new(p, q).unwrap());
            }
        }
    }
    let states: Vec<_> = labels.iter().map(|&l| f40.state(l).unwrap()).collect();
    let mut overlap_err: f64 = 0.0;
    for (a, sa) in labels.iter().zip(&states) {
        for (b, sb) in labels.iter().zip(&states) {
            let v = sa.inner(sb).map_err(fail)?;
            overlap_err = overlap_err.max((v - overlap_formula(*a, *b)).norm());
        }
    }
    let f60 = CoherentFamily::new(&fock(60), &tol()).map_err(fail)?;
    let mut metric_err: f64 = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            let l = CoherentLabel::new(-1.0 + 0.5 * i as f64, -1.0 + 0.5 * j as f64).unwrap();
            let g = f60.fubini_study_metric(l, 1e-4).map_err(fail)?;
            metric_err = metric_err
                .max((g[0][0] - 1.0).abs())
                .max(g[0][1].abs())
                .max(g[1][0].abs())
                .max((g[1][1] - 1.0).abs());
        }
    }
    let grid = PhaseGrid::disk(6.5, 0.25).map_err(fail)?;
    let residual = lattice::resolution_residual(&f60, &grid, 2).map_err(fail)?;
    ensure(
        overlap_err <= 1e-7 && metric_err <= 1e-5 && residual <= 1e-6,
        format!(
            "overlap {overlap_err:.1e} ({} labels); metric {metric_err:.1e}; resolution residual {residual:.1e}",
            labels.len()
        ),
    )
}

fn lattice_criterion() -> Outcome {
    let space60 = fock(60);
    let f60 = CoherentFamily::new(&space60, &tol()).map_err(fail)?;
    let grid = PhaseGrid::disk(6.0, 0.25).map_err(fail)?;
    let opts = LatticeOptions::default();
    let zero = OperatorMatrix::zeros(&space60);
    let (a, b) = (CoherentLabel::new(0.5, 0.2).unwrap(), CoherentLabel::new(-0.3, 0.6).unwrap());
    let mut telescope_ok = true;
    for n in [2usize, 8] {
        let r = lattice::lattice_propagator(&f60, &zero, a, b, 1.0, n, &grid, &opts).map_err(fail)?;
        let bound = n as f64 * r.resolution_residual.max(1e-13);
        telescope_ok &= (r.value - overlap_formula(b, a)).norm() <= bound;
    }

    let (p, q) = canonical_pair(&space60).unwrap();
    let h = (&(&p * &p) + &(&q * &q)).scale(0.5).into_hermitian(1e-12).unwrap();
    let (o, one) = (CoherentLabel::ORIGIN, CoherentLabel::new(1.0, 0.0).unwrap());
    let r64 = lattice::lattice_propagator(&f60, &h, o, one, 1.0, 64, &grid, &opts).map_err(fail)?;
    let r128 = lattice::lattice_propagator(&f60, &h, o, one, 1.0, 128, &grid, &opts).map_err(fail)?;
    let rate = (r64.deviation / r128.deviation).log2();

    let space40 = fock(40);
    let f40 = CoherentFamily::new(&space40, &tol()).map_err(fail)?;
    let (p, q) = canonical_pair(&space40).unwrap();
    let h40 = (&(&p * &p) + &(&q * &q)).scale(0.5).into_hermitian(1e-12).unwrap();
    let set = pq_set(&space40);
    let copts = LatticeOptions {
        probe_level: 0,
        residual_tolerance: 1e-4,
    };
    let t = 0.5;
    let mut devs = Vec::new();
    for (h_step, n, k) in [(0.6, 4usize, 16.0), (0.45, 8, 64.0), (0.3, 16, 256.0)] {
        let g = PhaseGrid::disk(4.8, h_step).map_err(fail)?;
        let quad = GammaQuadrature::new(TAU * k * n as f64 / t)
            .with_rule(projq_core::quadrature::PanelRule::GaussLegendre { order: 12 });
        let r = lattice::constrained_lattice_propagator(&f40, &h40, &set, 2.0, o, one, t, n, &g, &quad, &copts)
            .map_err(fail)?;
        devs.push(r.deviation);
    }
    let monotone = devs.windows(2).all(|w| w[1] <= w[0]);
    ensure(
        telescope_ok
            && r64.deviation <= 5e-3
            && (rate - 1.0).abs() <= 0.3
            && monotone
            && *devs.last().unwrap() <= 5e-3,
        format!(
            "telescope {}; oscillator deviation {:.2e} at N=64, rate {rate:.2}; constrained schedule {:.2e} -> {:.2e} -> {:.2e}",
            if telescope_ok { "exact" } else { "off" },
            r64.deviation,
            devs[0],
            devs[1],
            devs[2]
        ),
    )
}

fn second_order() -> Outcome {
    let set = pq_set(&fock(20));
    let ladder: Vec<f64> = (0..5).map(|k| 1e-3 * 2f64.powi(k)).collect();
    let r = lattice::first_order_insufficiency_demo(&set, 1.0, &ladder).map_err(fail)?;
    let s1 = r.first_order_slope.unwrap_or(f64::NAN);
    let s2 = r.second_order_slope.unwrap_or(f64::NAN);
    ensure(
        (s1 - 1.0).abs() <= 0.3 && (s2 - 2.0).abs() <= 0.3,
        format!("first-order slope {s1:.3}, second-order slope {s2:.3}"),
    )
}

fn random_poly(rng: &mut ChaCha8Rng, dof: usize) -> PhasePolynomial {
    let terms = (0..rng.random_range(1..=4)).map(|_| {
        let mut e = vec![0u32; 2 * dof];
        for _ in 0..rng.random_range(0..=4) {
            e[rng.random_range(0..2 * dof)] += 1;
        }
        (e, rng.random_range(-3i32..=3) as f64)
    });
    PhasePolynomial::from_terms(dof, terms.collect::<Vec<_>>())
}

fn classical_engine() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut identity_failures = 0;
    for _ in 0..200 {
        let dof = rng.random_range(1..=3);
        let (f, g, h) = (random_poly(&mut rng, dof), random_poly(&mut rng, dof), random_poly(&mut rng, dof));
        let small = |p: &PhasePolynomial| p.max_abs_coeff() <= 1e-12;
        let anti = &poisson_bracket(&f, &g) + &poisson_bracket(&g, &f);
        let leibniz = &poisson_bracket(&f, &(&g * &h))
            - &(&(&poisson_bracket(&f, &g) * &h) + &(&g * &poisson_bracket(&f, &h)));
        let jacobi = &(&poisson_bracket(&f, &poisson_bracket(&g, &h)) + &poisson_bracket(&g, &poisson_bracket(&h, &f)))
            + &poisson_bracket(&h, &poisson_bracket(&f, &g));
        if !(small(&anti) && small(&leibniz) && small(&jacobi)) {
            identity_failures += 1;
        }
    }

    let t = tol();
    let parse3 = |s: &str| PhasePolynomial::parse_with_dof(s, 3).unwrap();
    let l = vec![parse3("q2*p3 - q3*p2"), parse3("q3*p1 - q1*p3"), parse3("q1*p2 - q2*p1")];
    let rot = ConstraintSystem::new(parse3("0.5*p1^2 + 0.5*p2^2 + 0.5*p3^2"), l);
    let samples = classical::surface_samples(rot.phis(), 40, 1, &t).map_err(fail)?;
    let v_rot = classical::classify(&rot, &samples, 1e-8, 1e-6).map_err(fail)?.verdict;

    let pq = ConstraintSystem::new(
        PhasePolynomial::parse("0.5*p1^2 + 0.5*q1^2").unwrap(),
        vec![PhasePolynomial::p(1, 0), PhasePolynomial::q(1, 0)],
    );
    let samples = classical::surface_samples(pq.phis(), 20, 1, &t).map_err(fail)?;
    let v_pq = classical::classify(&pq, &samples, 1e-8, 1e-6).map_err(fail)?.verdict;

    let pendulum = ConstraintSystem::new(
        PhasePolynomial::parse("0.5*p1^2 + 0.5*p2^2 + q2").unwrap(),
        vec![
            PhasePolynomial::parse("q1^2 + q2^2 - 1").unwrap(),
            PhasePolynomial::parse("q1*p1 + q2*p2").unwrap(),
        ],
    );
    let mut worst_residual: f64 = 0.0;
    for _ in 0..50 {
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.5..1.5)).collect();
        if x[2].hypot(x[3]) < 0.2 {
            continue;
        }
        for sys in [&pq, &pendulum] {
            let pt = &x[..2 * sys.dof()];
            let lam = classical::solve_multipliers(sys, pt, &t).map_err(fail)?;
            worst_residual = worst_residual.max(classical::multiplier_residual(sys, pt, &lam));
        }
    }

    let x0 = [0.0, 0.0, 0.4f64.sin(), -0.4f64.cos()];
    let mut drifts = Vec::new();
    for steps in [100usize, 200, 400] {
        let tr = classical::integrate_constrained(
            &pendulum,
            MultiplierSource::AutoSecondClass,
            &x0,
            4.0 / steps as f64,
            steps,
            &t,
        )
        .map_err(fail)?;
        drifts.push(tr.max_drift());
    }
    let order = drifts.windows(2).map(|w| (w[0] / w[1]).log2()).fold(f64::INFINITY, f64::min);
    ensure(
        identity_failures == 0
            && v_rot == Verdict::FirstClassClosed
            && v_pq == Verdict::SecondClass
            && worst_residual <= 1e-9
            && order >= 3.5,
        format!(
            "bracket identities failed on {identity_failures}/200 triples; L_k {v_rot}; (p,q) {v_pq}; \
             multiplier residual {worst_residual:.1e}; drift order {order:.2}"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("rotation group projector", rotation_group),
        ("second-class oscillator projector", second_class),
        ("germ limit", germ),
        ("Chernoff convergence", chernoff),
        ("γ representation", gamma),
        ("coherent-state geometry", geometry),
        ("lattice path integral", lattice_criterion),
        ("second-order necessity", second_order),
        ("classical engine", classical_engine),
    ];
    let start = Instant::now();
    let mut failures = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS {} {name}: {msg} [{secs:.1}s]", k + 1),
            Err(msg) => {
                failures += 1;
                println!("FAIL {} {name}: {msg} [{secs:.1}s]", k + 1)
            }
        }
    }
    println!(
        "acceptance: {}/9 passed in {:.1}s",
        9 - failures,
        start.elapsed().as_secs_f64()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
