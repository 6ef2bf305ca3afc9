//! Versioned scenario schema, range checks and model construction.

use nalgebra::DMatrix;
use projq_core::classical::{self, PhasePolynomial, Verdict};
use projq_core::fock::{canonical_pair, coupled_rotation_generators, HilbertSpace, OperatorMatrix, StateVector};
use projq_core::lattice::{GridShape, LatticeOptions};
use projq_core::projection::DeltaPolicy;
use projq_core::quadrature::PanelRule;
use projq_core::{Tolerances, C64};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

pub const PRESET_ROTATION: &str = "rotation-generators";
pub const PRESET_P_AND_Q: &str = "P-and-Q";
pub const PRESET_P_GERM: &str = "P-only-germ";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub space: SpaceSpec,
    /// Polynomial text, or `zero`, `J1`, `J2`, `J3` on spin spaces.
    #[serde(default)]
    pub hamiltonian: Option<String>,
    /// Polynomial texts or presets.
    #[serde(default)]
    pub constraints: Vec<String>,
    #[serde(default)]
    pub delta: DeltaPolicy,
    #[serde(default)]
    pub expect_rank: Option<usize>,
    #[serde(default)]
    pub worked_examples: Vec<WorkedExample>,
    #[serde(default)]
    pub evolution: Option<EvolutionBlock>,
    #[serde(default)]
    pub gamma: Option<GammaBlock>,
    #[serde(default)]
    pub germ: Option<GermBlock>,
    #[serde(default)]
    pub geometry: Option<GeometryBlock>,
    #[serde(default)]
    pub lattice: Option<LatticeBlock>,
    #[serde(default)]
    pub classical: Option<ClassicalBlock>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpaceSpec {
    Fock(usize),
    Spins(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkedExample {
    RotationGroup,
    SecondClassOscillator,
    GermLimit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionBlock {
    pub t: f64,
    pub n_ladder: Vec<usize>,
    /// Accepted band for the fitted order when H is not observable.
    #[serde(default = "default_order_band")]
    pub order_band: [f64; 2],
}

fn default_order_band() -> [f64; 2] {
    [0.7, 1.3]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaBlock {
    /// Values of the product Γε.
    pub gamma_eps: Vec<f64>,
    #[serde(default = "one")]
    pub eps: f64,
    #[serde(default = "default_gamma_rule")]
    pub rule: PanelRule,
    #[serde(default)]
    pub panels: Option<usize>,
    /// Smallest error ratio demanded per doubling of Γ.
    #[serde(default = "default_min_ratio")]
    pub min_ratio: f64,
}

fn one() -> f64 {
    1.0
}

fn default_gamma_rule() -> PanelRule {
    PanelRule::TanhSinh { level: 3 }
}

fn default_min_ratio() -> f64 {
    1.8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GermBlock {
    /// `[p, q]` labels.
    pub bra: [f64; 2],
    pub ket: [f64; 2],
    #[serde(default = "default_germ_schedule")]
    pub schedule: Vec<f64>,
    /// Positions used for both `q″` and `q′` in the q-dependence scan.
    #[serde(default = "default_q_grid")]
    pub q_grid: Vec<f64>,
    #[serde(default = "default_germ_tolerance")]
    pub tolerance: f64,
}

pub fn default_germ_schedule() -> Vec<f64> {
    vec![0.4, 0.2, 0.1, 0.05]
}

pub fn default_q_grid() -> Vec<f64> {
    vec![-1.0, 0.0, 1.0]
}

fn default_germ_tolerance() -> f64 {
    1e-4
}

impl Default for GermBlock {
    fn default() -> Self {
        Self {
            bra: [1.0, 0.0],
            ket: [0.0, 0.0],
            schedule: default_germ_schedule(),
            q_grid: default_q_grid(),
            tolerance: default_germ_tolerance(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryBlock {
    /// Metric grid covers `[−extent, extent]²`.
    pub extent: f64,
    pub points: usize,
    #[serde(default = "default_metric_tolerance")]
    pub tolerance: f64,
}

fn default_metric_tolerance() -> f64 {
    1e-5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeBlock {
    #[serde(default = "default_shape")]
    pub shape: GridShape,
    pub radius: f64,
    pub t: f64,
    pub from: [f64; 2],
    pub to: [f64; 2],
    pub stages: Vec<LatticeStage>,
    #[serde(default = "default_lattice_rule")]
    pub rule: PanelRule,
    #[serde(default)]
    pub options: LatticeOptions,
    /// Deviation the final stage must reach.
    #[serde(default = "default_max_deviation")]
    pub max_deviation: f64,
}

fn default_shape() -> GridShape {
    GridShape::Disk
}

fn default_lattice_rule() -> PanelRule {
    PanelRule::GaussLegendre { order: 12 }
}

fn default_max_deviation() -> f64 {
    5e-3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeStage {
    pub spacing: f64,
    pub slices: usize,
    /// Γε for the constraint factor; ignored without constraints.
    #[serde(default)]
    pub gamma_eps: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalBlock {
    /// Defaults to the classical twin of the scenario Hamiltonian.
    #[serde(default)]
    pub hamiltonian: Option<String>,
    /// Defaults to the classical twins of the scenario constraints.
    #[serde(default)]
    pub constraints: Option<Vec<String>>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol_first")]
    pub tol_first: f64,
    #[serde(default = "default_tol_second")]
    pub tol_second: f64,
    #[serde(default)]
    pub expect_verdict: Option<Verdict>,
    #[serde(default)]
    pub trajectory: Option<TrajectoryBlock>,
}

fn default_seeds() -> usize {
    40
}

fn default_tol_first() -> f64 {
    1e-8
}

fn default_tol_second() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryBlock {
    pub x0: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
    #[serde(default = "default_multipliers")]
    pub multipliers: MultiplierSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiplierSpec {
    Auto,
    Constant(Vec<f64>),
}

fn default_multipliers() -> MultiplierSpec {
    MultiplierSpec::Auto
}

/// Collects every range violation instead of stopping at the first.
struct Checker(Vec<String>);

impl Checker {
    fn require(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.0.push(msg());
        }
    }

    fn range(&mut self, field: &str, v: f64, lo: f64, hi: f64) {
        self.require(v.is_finite() && v > lo && v <= hi, || {
            format!("{field} = {v} is outside ({lo}, {hi}]")
        });
    }

    fn count(&mut self, field: &str, v: usize, lo: usize, hi: usize) {
        self.require((lo..=hi).contains(&v), || format!("{field} = {v} is outside [{lo}, {hi}]"));
    }

    fn rule(&mut self, field: &str, r: &PanelRule) {
        match *r {
            PanelRule::TanhSinh { level } => self.count(&format!("{field}.level"), level as usize, 1, 6),
            PanelRule::GaussLegendre { order } => self.count(&format!("{field}.order"), order, 2, 64),
        }
    }

    fn label(&mut self, field: &str, l: &[f64]) {
        for (k, v) in l.iter().enumerate() {
            self.require(v.is_finite() && v.abs() <= 10.0, || format!("{field}[{k}] = {v} must lie in [-10, 10]"));
        }
    }
}

pub const MAX_GRID_NODES: f64 = 61.0 * 61.0;

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, String> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| e.to_string())?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut c = Checker(Vec::new());
        c.require(self.schema_version == SCHEMA_VERSION, || {
            format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version)
        });
        c.require(!self.name.trim().is_empty() && self.name.len() <= 128, || {
            "name must be non-empty and at most 128 bytes".into()
        });
        match &self.space {
            SpaceSpec::Fock(d) => c.count("space.fock", *d, 2, 120),
            SpaceSpec::Spins(js) => {
                c.count("space.spins length", js.len(), 1, 6);
                for j in js {
                    c.require(j.is_finite() && *j > 0.0 && *j <= 4.0 && (2.0 * j).fract() == 0.0, || {
                        format!("spin {j} must be a positive half-integer at most 4")
                    });
                }
                let dim: f64 = js.iter().map(|j| 2.0 * j + 1.0).product();
                c.require(dim <= 1024.0, || format!("spin product dimension {dim} exceeds 1024"));
            }
        }
        if let DeltaPolicy::Fixed(v) = self.delta {
            c.range("delta.fixed", v, 0.0, 1e6);
        }
        c.count("constraints length", self.constraints.len(), 0, 8);
        if let Some(e) = &self.evolution {
            c.range("evolution.t", e.t, 0.0, 1e3);
            c.count("evolution.n_ladder length", e.n_ladder.len(), 1, 24);
            for n in &e.n_ladder {
                c.count("evolution.n_ladder entry", *n, 1, 1 << 20);
            }
            c.require(e.order_band[0] < e.order_band[1], || "evolution.order_band must be increasing".into());
        }
        if let Some(g) = &self.gamma {
            c.count("gamma.gamma_eps length", g.gamma_eps.len(), 1, 16);
            for v in &g.gamma_eps {
                c.range("gamma.gamma_eps entry", *v, 0.0, 1e6);
            }
            c.range("gamma.eps", g.eps, 0.0, 10.0);
            c.rule("gamma.rule", &g.rule);
            if let Some(p) = g.panels {
                c.count("gamma.panels", p, 1, 100_000);
            }
            c.range("gamma.min_ratio", g.min_ratio, 0.0, 100.0);
        }
        if let Some(g) = &self.germ {
            c.label("germ.bra", &g.bra);
            c.label("germ.ket", &g.ket);
            c.count("germ.schedule length", g.schedule.len(), 1, 12);
            for d in &g.schedule {
                c.range("germ.schedule entry", *d, 0.0, 2.0);
            }
            c.count("germ.q_grid length", g.q_grid.len(), 1, 9);
            c.label("germ.q_grid", &g.q_grid);
            c.range("germ.tolerance", g.tolerance, 0.0, 1.0);
        }
        if let Some(g) = &self.geometry {
            c.range("geometry.extent", g.extent, 0.0, 4.0);
            c.count("geometry.points", g.points, 1, 21);
            c.range("geometry.tolerance", g.tolerance, 0.0, 1.0);
        }
        if let Some(l) = &self.lattice {
            c.range("lattice.radius", l.radius, 0.0, 8.0);
            c.range("lattice.t", l.t, 0.0, 100.0);
            c.label("lattice.from", &l.from);
            c.label("lattice.to", &l.to);
            c.count("lattice.stages length", l.stages.len(), 1, 8);
            for s in &l.stages {
                c.range("lattice.stages.spacing", s.spacing, 0.0, 2.0);
                let per_axis = 2.0 * l.radius / s.spacing + 1.0;
                c.require(per_axis * per_axis <= MAX_GRID_NODES, || {
                    format!("lattice stage with spacing {} exceeds 61x61 grid nodes", s.spacing)
                });
                c.count("lattice.stages.slices", s.slices, 1, 4096);
                if let Some(g) = s.gamma_eps {
                    c.range("lattice.stages.gamma_eps", g, 0.0, 1e6);
                }
            }
            c.rule("lattice.rule", &l.rule);
            c.count("lattice.options.probe_level", l.options.probe_level, 0, 40);
            c.range("lattice.options.residual_tolerance", l.options.residual_tolerance, 0.0, 1.0);
            c.range("lattice.max_deviation", l.max_deviation, 0.0, 10.0);
        }
        if let Some(k) = &self.classical {
            c.count("classical.seeds", k.seeds, classical::MIN_CLASSIFY_SAMPLES, 10_000);
            c.range("classical.tol_first", k.tol_first, 0.0, 1.0);
            c.range("classical.tol_second", k.tol_second, 0.0, 1e3);
            if let Some(t) = &k.trajectory {
                c.range("classical.trajectory.dt", t.dt, 0.0, 1.0);
                c.count("classical.trajectory.steps", t.steps, 1, 1_000_000);
                c.count("classical.trajectory.x0 length", t.x0.len(), 2, 12);
                c.label("classical.trajectory.x0", &t.x0);
                if let MultiplierSpec::Constant(v) = &t.multipliers {
                    c.label("classical.trajectory.multipliers", v);
                }
            }
        }
        let t = &self.tolerances;
        for (field, v) in [
            ("hermitian", t.hermitian),
            ("normalization", t.normalization),
            ("trust_deficit", t.trust_deficit),
            ("eigen_residual", t.eigen_residual),
            ("idempotence", t.idempotence),
            ("rank_trace", t.rank_trace),
            ("boundary", t.boundary),
            ("cluster_rel_gap", t.cluster_rel_gap),
            ("observable", t.observable),
            ("fd_step", t.fd_step),
            ("surface", t.surface),
            ("first_class", t.first_class),
            ("second_class", t.second_class),
            ("multiplier_min_sv", t.multiplier_min_sv),
            ("drift_limit", t.drift_limit),
        ] {
            c.range(&format!("tolerances.{field}"), v, 0.0, 1.0);
        }
        c.range("tolerances.newton_failure_rate", t.newton_failure_rate, 0.0, 1.0);
        if c.0.is_empty() {
            Ok(())
        } else {
            Err(c.0.join("; "))
        }
    }
}

/// Quantum objects assembled from a scenario.
pub struct Model {
    pub space: HilbertSpace,
    pub hamiltonian: Option<OperatorMatrix>,
    pub constraints: Vec<OperatorMatrix>,
    /// Constraints with continuous spectrum; handled by the germ limit.
    pub germ_only: bool,
}

pub fn build_model(s: &Scenario) -> projq_core::Result<Model> {
    use projq_core::Error;
    let space = match &s.space {
        SpaceSpec::Fock(d) => HilbertSpace::fock(*d)?,
        SpaceSpec::Spins(js) => coupled_rotation_generators(js)?[0].space().clone(),
    };
    let spin_generators = || match &s.space {
        SpaceSpec::Spins(js) => coupled_rotation_generators(js),
        SpaceSpec::Fock(_) => Err(Error::SpaceKind {
            expected: "spin",
            found: space.to_string(),
        }),
    };
    let hamiltonian = match s.hamiltonian.as_deref() {
        None => None,
        Some("zero") => Some(OperatorMatrix::zeros(&space)),
        Some(name @ ("J1" | "J2" | "J3")) => {
            let k = name[1..].parse::<usize>().unwrap() - 1;
            Some(spin_generators()?[k].clone())
        }
        Some(text) => Some(classical::symmetric_quantization(&PhasePolynomial::parse(text)?, &space)?),
    };
    let mut constraints = Vec::new();
    let mut germ_only = false;
    for entry in &s.constraints {
        match entry.as_str() {
            PRESET_ROTATION => constraints.extend(spin_generators()?),
            PRESET_P_AND_Q => {
                let (p, q) = canonical_pair(&space)?;
                constraints.extend([p, q]);
            }
            PRESET_P_GERM => {
                let (p, _) = canonical_pair(&space)?;
                constraints.push(p);
                germ_only = true;
            }
            text => {
                if !matches!(space, HilbertSpace::Fock { .. }) {
                    return Err(Error::SpaceKind {
                        expected: "Fock",
                        found: space.to_string(),
                    });
                }
                constraints.push(classical::symmetric_quantization(&PhasePolynomial::parse(text)?, &space)?);
            }
        }
    }
    Ok(Model {
        space,
        hamiltonian,
        constraints,
        germ_only,
    })
}

/// Classical counterpart of a preset or quantum Hamiltonian name.
fn classical_twin_h(name: &str) -> projq_core::Result<PhasePolynomial> {
    Ok(match name {
        "zero" => PhasePolynomial::zero(1),
        "J1" => PhasePolynomial::parse_with_dof("q2*p3 - q3*p2", 3)?,
        "J2" => PhasePolynomial::parse_with_dof("q3*p1 - q1*p3", 3)?,
        "J3" => PhasePolynomial::parse_with_dof("q1*p2 - q2*p1", 3)?,
        text => PhasePolynomial::parse(text)?,
    })
}

fn classical_twin_constraints(entry: &str) -> projq_core::Result<Vec<PhasePolynomial>> {
    Ok(match entry {
        PRESET_ROTATION => ["J1", "J2", "J3"]
            .iter()
            .map(|n| classical_twin_h(n))
            .collect::<projq_core::Result<_>>()?,
        PRESET_P_AND_Q => vec![PhasePolynomial::p(1, 0), PhasePolynomial::q(1, 0)],
        PRESET_P_GERM => vec![PhasePolynomial::p(1, 0)],
        text => vec![PhasePolynomial::parse(text)?],
    })
}

pub fn classical_system(s: &Scenario, block: &ClassicalBlock) -> projq_core::Result<classical::ConstraintSystem> {
    let h_text = block
        .hamiltonian
        .clone()
        .or_else(|| s.hamiltonian.clone())
        .unwrap_or_else(|| "zero".into());
    let h = classical_twin_h(&h_text)?;
    let entries = block.constraints.clone().unwrap_or_else(|| s.constraints.clone());
    let mut phis = Vec::new();
    for e in &entries {
        phis.extend(classical_twin_constraints(e)?);
    }
    Ok(classical::ConstraintSystem::new(h, phis))
}

/// Independent reference state for the physical subspace: the vacuum on a
/// Fock space, or the common null vector of the constraints on a spin space.
pub fn reference_state(model: &Model) -> Option<StateVector> {
    match model.space {
        HilbertSpace::Fock { .. } => StateVector::basis(&model.space, 0).ok(),
        _ => {
            let n = model.space.dim();
            let k = model.constraints.len();
            if k == 0 {
                return None;
            }
            let mut stacked = DMatrix::<C64>::zeros(k * n, n);
            for (i, c) in model.constraints.iter().enumerate() {
                stacked.view_mut((i * n, 0), (n, n)).copy_from(c.entries());
            }
            let svd = stacked.svd(false, true);
            let v_t = svd.v_t?;
            let (idx, &smallest) = svd
                .singular_values
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))?;
            let null_count = svd.singular_values.iter().filter(|&&s| s <= 1e-10).count();
            if smallest > 1e-10 || null_count != 1 {
                return None;
            }
            let v = v_t.row(idx).adjoint();
            StateVector::new(model.space.clone(), v).ok()
        }
    }
}
