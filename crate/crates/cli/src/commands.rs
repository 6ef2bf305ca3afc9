//! Module pipelines driven by a scenario.

use projq_core::classical::{self, MultiplierSource, Verdict};
use projq_core::dynamics::{self, EXACT_AGREEMENT};
use projq_core::fock::{CoherentFamily, CoherentLabel, HilbertSpace, OperatorMatrix, StateVector};
use projq_core::lattice::{self, PhaseGrid};
use projq_core::linalg;
use projq_core::projection::{self, ConstraintSet, DeltaPolicy, GammaQuadrature, Projector};
use projq_core::{Error, Result, Tolerances, C64};
use serde::Serialize;

use crate::output::{num, Artifacts};
use crate::scenario::{self, GermBlock, Model, MultiplierSpec, Scenario, PRESET_P_AND_Q};

pub struct Ctx<'a> {
    pub scenario: &'a Scenario,
    pub seed: Option<u64>,
}

impl Ctx<'_> {
    fn tol(&self) -> &Tolerances {
        &self.scenario.tolerances
    }
}

pub const FIDELITY_FLOOR: f64 = 1.0 - 1e-10;

fn label(l: [f64; 2]) -> Result<CoherentLabel> {
    CoherentLabel::new(l[0], l[1])
}

fn require_hamiltonian(model: &Model) -> Result<&OperatorMatrix> {
    model
        .hamiltonian
        .as_ref()
        .ok_or_else(|| Error::invalid("scenario has no hamiltonian"))
}

struct Physical {
    x: OperatorMatrix,
    projector: Projector,
}

fn physical(ctx: &Ctx, model: &Model) -> Result<Physical> {
    let set = ConstraintSet::new(model.constraints.clone(), ctx.tol())?;
    let x = projection::sum_of_squares(&set);
    let delta_sq = projection::choose_delta(&x, ctx.scenario.delta, ctx.tol())?;
    let projector = projection::spectral_projector(&x, delta_sq, ctx.tol())?;
    Ok(Physical { x, projector })
}

fn reference(ctx: &Ctx, model: &Model) -> Option<StateVector> {
    match model.space {
        HilbertSpace::Fock { .. } if ctx.scenario.constraints != [PRESET_P_AND_Q] => None,
        _ => scenario::reference_state(model),
    }
}

pub fn project(ctx: &Ctx, art: &mut Artifacts) -> Result<()> {
    let model = scenario::build_model(ctx.scenario)?;
    if model.constraints.is_empty() {
        if ctx.scenario.gamma.is_some() {
            art.timed("gamma", |art| identity_check(ctx, &model, art))?;
        }
    } else if model.germ_only {
        let block = ctx.scenario.germ.clone().unwrap_or_default();
        art.timed("germ", |art| germ(&block, art))?;
    } else {
        art.timed("projector", |art| projector(ctx, &model, art))?;
    }
    if let Some(g) = &ctx.scenario.geometry {
        art.timed("geometry", |art| geometry(ctx, &model, g, art))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SpectrumRow {
    index: usize,
    eigenvalue: f64,
    retained: bool,
}

fn projector(ctx: &Ctx, model: &Model, art: &mut Artifacts) -> Result<()> {
    let ph = physical(ctx, model)?;
    let e = &ph.projector;
    let trace = e.matrix().trace().re;
    let idem = e.idempotence_defect();
    let herm = linalg::hermitian_deviation(e.entries());
    let fidelity = match reference(ctx, model) {
        Some(r) if e.rank() > 0 => Some(e.matrix().matrix_element(&r, &r)?.re),
        _ => None,
    };
    let eigen = linalg::HermitianEigen::new(ph.x.entries());
    let rows: Vec<SpectrumRow> = eigen
        .values
        .iter()
        .enumerate()
        .map(|(index, &eigenvalue)| SpectrumRow {
            index,
            eigenvalue,
            retained: eigenvalue <= e.delta_sq(),
        })
        .collect();
    art.csv(
        "spectrum",
        &["index", "eigenvalue", "retained"],
        rows.iter()
            .map(|r| vec![r.index.to_string(), num(r.eigenvalue), r.retained.to_string()])
            .collect(),
    );
    art.csv(
        "projector",
        &["delta_sq", "rank", "trace", "idempotence_defect", "reference_fidelity"],
        vec![vec![
            num(e.delta_sq()),
            e.rank().to_string(),
            num(trace),
            num(idem),
            fidelity.map(num).unwrap_or_default(),
        ]],
    );
    art.output(
        "projector",
        &serde_json::json!({
            "delta_sq": e.delta_sq(),
            "rank": e.rank(),
            "trace": trace,
            "idempotence_defect": idem,
            "hermiticity_defect": herm,
            "reference_fidelity": fidelity,
        }),
    );
    let tol = ctx.tol();
    art.check("projector idempotence", idem <= tol.idempotence, Some(idem), Some(tol.idempotence), "‖E² − E‖");
    art.check("projector hermiticity", herm <= tol.hermitian, Some(herm), Some(tol.hermitian), "max |E − E†|");
    let rank_gap = (e.rank() as f64 - trace).abs();
    art.check("projector rank equals trace", rank_gap <= tol.rank_trace, Some(rank_gap), Some(tol.rank_trace), "|rank − tr E|");
    if let Some(expected) = ctx.scenario.expect_rank {
        art.check(
            "projector rank",
            e.rank() == expected,
            Some(e.rank() as f64),
            Some(expected as f64),
            format!("expected rank {expected}"),
        );
        if expected == 1 {
            if let Some(f) = fidelity {
                art.check("reference state fidelity", f >= FIDELITY_FLOOR, Some(f), Some(FIDELITY_FLOOR), "⟨ref|E|ref⟩");
            }
        }
    }
    if ctx.scenario.gamma.is_some() {
        gamma_ladder(ctx, &ph.x, e.delta_sq(), art)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct GammaRow {
    gamma_eps: f64,
    max_entry_error: f64,
    ratio: Option<f64>,
    nodes: usize,
    flagged: usize,
}

fn gamma_rows(ctx: &Ctx, x: &OperatorMatrix, delta_sq: f64, mut deviation: impl FnMut(&projection::GammaProjection) -> f64) -> Result<Vec<GammaRow>> {
    let block = ctx.scenario.gamma.as_ref().expect("gamma block present");
    let mut rows: Vec<GammaRow> = Vec::new();
    for &ge in &block.gamma_eps {
        let mut quad = GammaQuadrature::new(ge / block.eps).with_rule(block.rule);
        if let Some(p) = block.panels {
            quad = quad.with_panels(p);
        }
        let g = projection::gamma_integral_projector(x, delta_sq, &quad, block.eps)?;
        let err = deviation(&g);
        let ratio = rows.last().map(|prev| prev.max_entry_error / err);
        rows.push(GammaRow {
            gamma_eps: ge,
            max_entry_error: err,
            ratio,
            nodes: g.node_count,
            flagged: g.flagged.len(),
        });
    }
    Ok(rows)
}

fn emit_gamma(art: &mut Artifacts, rows: &[GammaRow]) {
    art.csv(
        "gamma",
        &["gamma_eps", "max_entry_error", "ratio", "nodes", "flagged"],
        rows.iter()
            .map(|r| {
                vec![
                    num(r.gamma_eps),
                    num(r.max_entry_error),
                    r.ratio.map(num).unwrap_or_default(),
                    r.nodes.to_string(),
                    r.flagged.to_string(),
                ]
            })
            .collect(),
    );
    art.plot("gamma", &rows);
    art.output("gamma", &rows);
}

fn gamma_ladder(ctx: &Ctx, x: &OperatorMatrix, delta_sq: f64, art: &mut Artifacts) -> Result<()> {
    let rows = gamma_rows(ctx, x, delta_sq, |g| g.max_entry_error())?;
    let min_ratio = ctx.scenario.gamma.as_ref().unwrap().min_ratio;
    for w in rows.windows(2) {
        if (w[1].gamma_eps / w[0].gamma_eps - 2.0).abs() < 1e-12 {
            let ratio = w[1].ratio.unwrap();
            art.check(
                &format!("gamma error ratio at {}", num(w[1].gamma_eps)),
                ratio >= min_ratio,
                Some(ratio),
                Some(min_ratio),
                "error(Γ)/error(2Γ)",
            );
        }
    }
    emit_gamma(art, &rows);
    Ok(())
}

/// With no constraints the γ integral must reproduce the identity.
fn identity_check(ctx: &Ctx, model: &Model, art: &mut Artifacts) -> Result<()> {
    let x = OperatorMatrix::zeros(&model.space);
    let delta_sq = match ctx.scenario.delta {
        DeltaPolicy::Fixed(v) => v,
        DeltaPolicy::GapMidpoint => 1.0,
    };
    let id = linalg::identity(model.space.dim());
    let mut bounds = Vec::new();
    let rows = gamma_rows(ctx, &x, delta_sq, |g| {
        bounds.push(g.predicted_entry_error(0.0) + 1e-9);
        linalg::max_abs(&(g.operator.entries() - &id))
    })?;
    for (r, bound) in rows.iter().zip(bounds) {
        art.check(
            &format!("1 = ∫𝒟R(λ) at Γε = {}", num(r.gamma_eps)),
            r.max_entry_error <= bound,
            Some(r.max_entry_error),
            Some(bound),
            "max |G − 1| against the sine-integral tail",
        );
    }
    let all = rows.iter().map(|r| num(r.gamma_eps)).collect::<Vec<_>>().join(", ");
    let reproduced = art.checks.iter().rev().take(rows.len()).all(|c| c.passed);
    let line = format!(
        "1 = ∫𝒟R(λ): identity {} at Γε = {all}",
        if reproduced { "reproduced" } else { "NOT reproduced" }
    );
    art.output("identity", &line);
    emit_gamma(art, &rows);
    Ok(())
}

#[derive(Serialize)]
struct GermRow {
    delta: f64,
    re: f64,
    im: f64,
}

#[derive(Serialize)]
struct GermScanRow {
    q_bra: f64,
    q_ket: f64,
    re: f64,
    im: f64,
    deviation: f64,
}

fn germ_expected(bra: CoherentLabel, ket: CoherentLabel) -> f64 {
    (-(bra.p * bra.p + ket.p * ket.p) / 2.0).exp()
}

fn germ(block: &GermBlock, art: &mut Artifacts) -> Result<()> {
    let (bra, ket) = (label(block.bra)?, label(block.ket)?);
    let g = projection::germ_limit(bra, ket, &block.schedule)?;
    let expected = germ_expected(bra, ket);
    let rows: Vec<GermRow> = g
        .schedule
        .iter()
        .zip(&g.values)
        .map(|(&delta, v)| GermRow { delta, re: v.re, im: v.im })
        .collect();
    art.csv(
        "germ",
        &["delta", "re", "im"],
        rows.iter().map(|r| vec![num(r.delta), num(r.re), num(r.im)]).collect(),
    );
    let mut scan = Vec::new();
    for &qb in &block.q_grid {
        for &qk in &block.q_grid {
            let l = projection::germ_limit(
                CoherentLabel::new(bra.p, qb)?,
                CoherentLabel::new(ket.p, qk)?,
                &block.schedule,
            )?
            .limit;
            scan.push(GermScanRow {
                q_bra: qb,
                q_ket: qk,
                re: l.re,
                im: l.im,
                deviation: (l - C64::new(expected, 0.0)).norm(),
            });
        }
    }
    art.csv(
        "germ_q",
        &["q_bra", "q_ket", "re", "im", "deviation"],
        scan.iter()
            .map(|r| vec![num(r.q_bra), num(r.q_ket), num(r.re), num(r.im), num(r.deviation)])
            .collect(),
    );
    art.plot("germ", &serde_json::json!({ "schedule": rows, "q_scan": scan }));
    let err = (g.limit - C64::new(expected, 0.0)).norm();
    let spread = scan.iter().map(|r| r.deviation).fold(0.0, f64::max);
    art.output(
        "germ",
        &serde_json::json!({
            "limit": [g.limit.re, g.limit.im],
            "expected": expected,
            "error_estimate": g.error_estimate,
            "q_spread": spread,
        }),
    );
    art.check("germ limit", err <= block.tolerance, Some(err), Some(block.tolerance), "|limit − e^{−(p″²+p′²)/2}|");
    art.check("germ q-independence", spread <= block.tolerance, Some(spread), Some(block.tolerance), "max over the q grid");
    Ok(())
}

#[derive(Serialize)]
struct MetricRow {
    p: f64,
    q: f64,
    g_pp: f64,
    g_pq: f64,
    g_qq: f64,
    deviation: f64,
}

fn geometry(ctx: &Ctx, model: &Model, block: &scenario::GeometryBlock, art: &mut Artifacts) -> Result<()> {
    let family = CoherentFamily::new(&model.space, ctx.tol())?;
    let n = block.points;
    let coord = |k: usize| {
        if n == 1 {
            0.0
        } else {
            -block.extent + 2.0 * block.extent * k as f64 / (n - 1) as f64
        }
    };
    let mut rows = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let l = CoherentLabel::new(coord(i), coord(j))?;
            let g = family.fubini_study_metric(l, ctx.tol().fd_step)?;
            let deviation = [(g[0][0] - 1.0).abs(), g[0][1].abs(), g[1][0].abs(), (g[1][1] - 1.0).abs()]
                .into_iter()
                .fold(0.0, f64::max);
            rows.push(MetricRow {
                p: l.p,
                q: l.q,
                g_pp: g[0][0],
                g_pq: g[0][1],
                g_qq: g[1][1],
                deviation,
            });
        }
    }
    art.csv(
        "metric",
        &["p", "q", "g_pp", "g_pq", "g_qq", "deviation"],
        rows.iter()
            .map(|r| vec![num(r.p), num(r.q), num(r.g_pp), num(r.g_pq), num(r.g_qq), num(r.deviation)])
            .collect(),
    );
    art.plot("metric", &rows);
    let worst = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    art.output("metric_max_deviation", &worst);
    art.check("metric is flat", worst <= block.tolerance, Some(worst), Some(block.tolerance), "max |g − 1|");
    Ok(())
}

#[derive(Serialize)]
struct ChernoffRow {
    n: usize,
    error: f64,
    fitted_order_so_far: Option<f64>,
}

pub fn evolve(ctx: &Ctx, art: &mut Artifacts) -> Result<()> {
    let block = ctx
        .scenario
        .evolution
        .as_ref()
        .ok_or_else(|| Error::invalid("scenario has no evolution block"))?;
    let model = scenario::build_model(ctx.scenario)?;
    if model.germ_only {
        return Err(Error::invalid("evolution needs constraints with a discrete physical subspace"));
    }
    let h = require_hamiltonian(&model)?;
    let ph = physical(ctx, &model)?;
    let (observable, commutator) = projection::is_observable(h, &ph.projector, ctx.tol())?;
    let report = art.timed("chernoff", |_| {
        dynamics::chernoff_convergence(h, &ph.projector, block.t, &block.n_ladder)
    })?;
    let ns: Vec<f64> = report.n_values.iter().map(|&n| n as f64).collect();
    let rows: Vec<ChernoffRow> = (0..ns.len())
        .map(|k| {
            let exact = report.errors[..=k].iter().all(|&e| e <= EXACT_AGREEMENT);
            let fitted = (k > 0 && !exact).then(|| -linalg::log_log_slope(&ns[..=k], &report.errors[..=k]));
            ChernoffRow {
                n: report.n_values[k],
                error: report.errors[k],
                fitted_order_so_far: fitted,
            }
        })
        .collect();
    art.csv(
        "chernoff",
        &["N", "error", "fitted_order_so_far"],
        rows.iter()
            .map(|r| vec![r.n.to_string(), num(r.error), r.fitted_order_so_far.map(num).unwrap_or_default()])
            .collect(),
    );
    art.plot("chernoff", &rows);
    art.output(
        "evolution",
        &serde_json::json!({
            "observable": observable,
            "commutator_norm": commutator,
            "fitted_order": report.fitted_order,
            "max_error": report.errors.iter().cloned().fold(0.0, f64::max),
        }),
    );
    if observable {
        let worst = report.errors.iter().cloned().fold(0.0, f64::max);
        art.check(
            "observable branch is exact",
            worst <= EXACT_AGREEMENT,
            Some(worst),
            Some(EXACT_AGREEMENT),
            "max Chernoff error for [H, E] = 0",
        );
    } else {
        let [lo, hi] = block.order_band;
        let order = report.fitted_order.unwrap_or(f64::NAN);
        art.check(
            "Chernoff order",
            order >= lo && order <= hi,
            Some(order),
            Some(hi),
            format!("fitted order within [{lo}, {hi}]"),
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct LatticeRow {
    stage: usize,
    spacing: f64,
    slices: usize,
    gamma_eps: Option<f64>,
    nodes: usize,
    value: [f64; 2],
    reference: [f64; 2],
    deviation: f64,
    resolution_residual: f64,
    quadrature_dominated: bool,
}

pub fn pathint(ctx: &Ctx, art: &mut Artifacts) -> Result<()> {
    let block = ctx
        .scenario
        .lattice
        .as_ref()
        .ok_or_else(|| Error::invalid("scenario has no lattice block"))?;
    let model = scenario::build_model(ctx.scenario)?;
    let family = CoherentFamily::new(&model.space, ctx.tol())?;
    let zero = OperatorMatrix::zeros(&model.space);
    let h = model.hamiltonian.as_ref().unwrap_or(&zero);
    let (from, to) = (label(block.from)?, label(block.to)?);
    let constrained = if model.constraints.is_empty() {
        None
    } else if model.germ_only {
        return Err(Error::invalid("lattice evaluation needs constraints with a discrete physical subspace"));
    } else {
        let set = ConstraintSet::new(model.constraints.clone(), ctx.tol())?;
        let delta_sq = projection::choose_delta(&projection::sum_of_squares(&set), ctx.scenario.delta, ctx.tol())?;
        Some((set, delta_sq))
    };
    let mut rows = Vec::new();
    for (k, stage) in block.stages.iter().enumerate() {
        let grid = PhaseGrid::new(block.shape, block.radius, stage.spacing)?;
        let r = art.timed(&format!("lattice stage {k}"), |_| match &constrained {
            None => lattice::lattice_propagator(&family, h, from, to, block.t, stage.slices, &grid, &block.options),
            Some((set, delta_sq)) => {
                let ge = stage
                    .gamma_eps
                    .ok_or_else(|| Error::invalid(format!("lattice stage {k} needs gamma_eps")))?;
                let eps = block.t / stage.slices as f64;
                let quad = GammaQuadrature::new(ge / eps).with_rule(block.rule);
                lattice::constrained_lattice_propagator(
                    &family, h, set, *delta_sq, from, to, block.t, stage.slices, &grid, &quad, &block.options,
                )
            }
        })?;
        rows.push(LatticeRow {
            stage: k,
            spacing: stage.spacing,
            slices: stage.slices,
            gamma_eps: constrained.as_ref().and(stage.gamma_eps),
            nodes: grid.len(),
            value: [r.value.re, r.value.im],
            reference: [r.reference.re, r.reference.im],
            deviation: r.deviation,
            resolution_residual: r.resolution_residual,
            quadrature_dominated: r.quadrature_dominated,
        });
    }
    art.csv(
        "lattice",
        &[
            "stage", "spacing", "slices", "gamma_eps", "nodes", "value_re", "value_im", "reference_re",
            "reference_im", "deviation", "resolution_residual", "quadrature_dominated",
        ],
        rows.iter()
            .map(|r| {
                vec![
                    r.stage.to_string(),
                    num(r.spacing),
                    r.slices.to_string(),
                    r.gamma_eps.map(num).unwrap_or_default(),
                    r.nodes.to_string(),
                    num(r.value[0]),
                    num(r.value[1]),
                    num(r.reference[0]),
                    num(r.reference[1]),
                    num(r.deviation),
                    num(r.resolution_residual),
                    r.quadrature_dominated.to_string(),
                ]
            })
            .collect(),
    );
    art.plot("lattice", &rows);
    let rates: Vec<Option<f64>> = rows
        .windows(2)
        .map(|w| (w[1].slices == 2 * w[0].slices).then(|| (w[0].deviation / w[1].deviation).log2()))
        .collect();
    art.output("lattice", &serde_json::json!({ "stages": rows, "rates_in_n": rates }));
    let last = rows.last().expect("at least one stage");
    art.check(
        "lattice final deviation",
        last.deviation <= block.max_deviation,
        Some(last.deviation),
        Some(block.max_deviation),
        "|lattice − reference| at the last stage",
    );
    if rows.len() > 1 {
        let monotone = rows.windows(2).all(|w| w[1].deviation <= w[0].deviation);
        art.check("lattice refinement is monotone", monotone, None, None, "deviation never grows between stages");
    }
    Ok(())
}

#[derive(Serialize)]
struct TrajectoryRow {
    t: f64,
    drift: f64,
    point: Vec<f64>,
}

pub fn classify(ctx: &Ctx, art: &mut Artifacts) -> Result<()> {
    let block = ctx
        .scenario
        .classical
        .as_ref()
        .ok_or_else(|| Error::invalid("scenario has no classical block"))?;
    let system = scenario::classical_system(ctx.scenario, block)?;
    let seed = ctx.seed.unwrap_or(block.seed);
    let samples = art.timed("surface", |_| classical::surface_samples(system.phis(), block.seeds, seed, ctx.tol()))?;
    let report = classical::classify(&system, &samples, block.tol_first, block.tol_second)?;
    let a = system.constraint_count();
    let mut rows = Vec::new();
    for i in 0..a {
        for j in 0..a {
            rows.push(vec!["bracket".into(), i.to_string(), j.to_string(), num(report.on_surface_bracket_residuals[i][j])]);
        }
    }
    for (i, r) in report.h_bracket_residuals.iter().enumerate() {
        rows.push(vec!["hamiltonian".into(), i.to_string(), String::new(), num(*r)]);
    }
    art.csv("classify", &["kind", "alpha", "beta", "residual"], rows);
    art.output("classification", &report);
    art.output(
        "classical_system",
        &serde_json::json!({
            "hamiltonian": system.h().to_string(),
            "constraints": system.phis().iter().map(|p| p.to_string()).collect::<Vec<_>>(),
        }),
    );
    if let Some(expected) = block.expect_verdict {
        art.check(
            "classification verdict",
            report.verdict == expected,
            None,
            None,
            format!("got {}, expected {expected}", report.verdict),
        );
    }
    if let Some(t) = &block.trajectory {
        if report.verdict == Verdict::SecondClass {
            let l = classical::solve_multipliers(&system, &t.x0, ctx.tol())?;
            let res = classical::multiplier_residual(&system, &t.x0, &l);
            art.output("multipliers_at_x0", &l);
            art.check("multiplier residual", res <= 1e-9, Some(res), Some(1e-9), "|{φ,H} + λ{φ,φ}| at x0");
        }
        let constant;
        let source = match &t.multipliers {
            MultiplierSpec::Auto => MultiplierSource::AutoSecondClass,
            MultiplierSpec::Constant(v) => {
                let v = v.clone();
                constant = move |_t: f64| v.clone();
                MultiplierSource::Schedule(&constant)
            }
        };
        let traj = art.timed("trajectory", |_| {
            classical::integrate_constrained(&system, source, &t.x0, t.dt, t.steps, ctx.tol())
        })?;
        let stride = (t.steps / 2000).max(1);
        let rows: Vec<TrajectoryRow> = (0..traj.times.len())
            .filter(|k| k % stride == 0 || *k == traj.times.len() - 1)
            .map(|k| TrajectoryRow {
                t: traj.times[k],
                drift: traj.drift[k],
                point: traj.points[k].clone(),
            })
            .collect();
        let j = system.dof();
        let mut header: Vec<String> = vec!["t".into(), "drift".into()];
        header.extend((1..=j).map(|i| format!("p{i}")));
        header.extend((1..=j).map(|i| format!("q{i}")));
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        art.csv(
            "trajectory",
            &header_refs,
            rows.iter()
                .map(|r| {
                    let mut v = vec![num(r.t), num(r.drift)];
                    v.extend(r.point.iter().map(|x| num(*x)));
                    v
                })
                .collect(),
        );
        art.plot("trajectory", &rows);
        art.output(
            "trajectory",
            &serde_json::json!({
                "max_drift": traj.max_drift(),
                "local_error_estimate": traj.local_error_estimate,
                "final_point": traj.last(),
            }),
        );
    }
    Ok(())
}

pub fn verify(ctx: &Ctx, art: &mut Artifacts) -> Result<()> {
    let s = ctx.scenario;
    for ex in &s.worked_examples {
        art.timed("worked examples", |art| worked_example(ctx, *ex, art))?;
    }
    let has_quantum = !s.constraints.is_empty() || s.gamma.is_some() || s.geometry.is_some();
    if has_quantum {
        project(ctx, art)?;
    }
    if s.evolution.is_some() {
        evolve(ctx, art)?;
    }
    if s.lattice.is_some() {
        pathint(ctx, art)?;
    }
    if s.classical.is_some() {
        classify(ctx, art)?;
    }
    if art.checks.is_empty() {
        art.check("scenario has checks", false, None, None, "nothing to verify");
    }
    Ok(())
}

fn worked_example(ctx: &Ctx, ex: scenario::WorkedExample, art: &mut Artifacts) -> Result<()> {
    use scenario::WorkedExample::*;
    let tol = ctx.tol();
    match ex {
        RotationGroup => {
            let generators = projq_core::fock::coupled_rotation_generators(&[0.5, 0.5])?;
            let model = Model {
                space: generators[0].space().clone(),
                hamiltonian: None,
                constraints: generators.to_vec(),
                germ_only: false,
            };
            let singlet = scenario::reference_state(&model)
                .ok_or_else(|| Error::invalid("two spin-½ generators have no common null vector"))?;
            let x = projection::sum_of_squares(&ConstraintSet::new(model.constraints.clone(), tol)?);
            let e = projection::spectral_projector(&x, 0.5, tol)?;
            let f = e.matrix().matrix_element(&singlet, &singlet)?.re;
            let single = projq_core::fock::coupled_rotation_generators(&[0.5])?;
            let x1 = projection::sum_of_squares(&ConstraintSet::new(single.to_vec(), tol)?);
            let rank_single = projection::spectral_projector(&x1, 0.5, tol)?.rank();
            art.check(
                "rotation group: two spin-½ rank",
                e.rank() == 1,
                Some(e.rank() as f64),
                Some(1.0),
                "J² ≤ ½ keeps only j = 0",
            );
            art.check("rotation group: singlet fidelity", f >= FIDELITY_FLOOR, Some(f), Some(FIDELITY_FLOOR), "⟨singlet|E|singlet⟩");
            art.check(
                "rotation group: single spin-½ rank",
                rank_single == 0,
                Some(rank_single as f64),
                Some(0.0),
                "no j = 0 state",
            );
        }
        SecondClassOscillator => {
            let d = match ctx.scenario.space {
                scenario::SpaceSpec::Fock(d) => d,
                _ => 30,
            };
            let space = HilbertSpace::fock(d)?;
            let (p, q) = projq_core::fock::canonical_pair(&space)?;
            let x = projection::sum_of_squares(&ConstraintSet::new(vec![p, q], tol)?);
            let delta_sq = projection::choose_delta(&x, DeltaPolicy::GapMidpoint, tol)?;
            let e = projection::spectral_projector(&x, delta_sq, tol)?;
            let vac = StateVector::basis(&space, 0)?;
            let f = e.matrix().matrix_element(&vac, &vac)?.re;
            art.check(
                "second class: rank",
                e.rank() == 1,
                Some(e.rank() as f64),
                Some(1.0),
                format!("P² + Q² ≤ {delta_sq} at D = {d}"),
            );
            art.check("second class: ground-state fidelity", f >= FIDELITY_FLOOR, Some(f), Some(FIDELITY_FLOOR), "⟨0|E|0⟩");
        }
        GermLimit => {
            let block = GermBlock::default();
            let (bra, ket) = (label(block.bra)?, label(block.ket)?);
            let g = projection::germ_limit(bra, ket, &block.schedule)?;
            let err = (g.limit - C64::new((-0.5f64).exp(), 0.0)).norm();
            let mut spread: f64 = 0.0;
            for &qb in &block.q_grid {
                for &qk in &block.q_grid {
                    let l = projection::germ_limit(
                        CoherentLabel::new(bra.p, qb)?,
                        CoherentLabel::new(ket.p, qk)?,
                        &block.schedule,
                    )?
                    .limit;
                    spread = spread.max((l - g.limit).norm());
                }
            }
            art.check("germ: limit at (1, 0)", err <= block.tolerance, Some(err), Some(block.tolerance), "|limit − e^{−1/2}|");
            art.check("germ: q-dependence", spread <= block.tolerance, Some(spread), Some(block.tolerance), "3×3 q grid");
        }
    }
    Ok(())
}
