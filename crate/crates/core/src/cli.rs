//! Scenario runner behind the `spectral-crossed` binary: versioned configs,
//! report rows for every checked invariant, and the JSON/CSV outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::algebra::{ci_triple, default_schedule, matrix_from_rows, AlgState, Entry, Filtration, StateSpec};
use crate::crossed::{
    commuting_action_bound, coordinate_action, crossed_seminorms, cutdown, direct_ld_triple, group_triple, iterate_zd,
    CrossedElement, CrossedTriple,
};
use crate::dynamics::{
    epsilon_chain_partition, equicont_constant, isometry_check, ActionModel, Certificate, EquicontOptions,
    FiniteMetricAction, OdometerSpec,
};
use crate::error::{Error, Result};
use crate::groupgeo::{LatticeWindow, LengthFunction};
use crate::matops::{self, c, CMatrix, CVector, C64};
use crate::qmetric::{
    connes_distance, connes_distance_bruteforce, effective_metric, lip_stabilization_report, ConnesOptions,
    StabilizationScenario,
};
use crate::random::{self, SeededRng};
use crate::triple::{circle_triple, spectrum_csv, tensor_even, SpectralTriple};

pub const SCHEMA_VERSION: u32 = 1;
/// Largest commutator map (entries) built for kernel-dimension checks.
const KERNEL_CHECK_LIMIT: usize = 6_000_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    pub scenario: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: Value,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub isometry: f64,
    pub equicont: f64,
    pub spectral: f64,
    pub zd_spectral: f64,
    pub commutator: f64,
    pub envelope: f64,
    pub fourier: f64,
    pub oracle_relative: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            isometry: 1e-9,
            equicont: 1e-9,
            spectral: 1e-10,
            zd_spectral: 1e-9,
            commutator: 1e-12,
            envelope: 1e-10,
            fourier: 1e-12,
            oracle_relative: 1e-3,
        }
    }
}

fn default_window() -> usize {
    8
}
fn default_support() -> usize {
    1
}
fn default_s() -> f64 {
    1.5
}
fn default_samples() -> usize {
    10
}
fn default_restarts() -> usize {
    40
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BunceDeddens {
    pub moduli: Vec<usize>,
    pub level: usize,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_support")]
    pub support: usize,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default = "iota")]
    pub length: LengthFunction,
    #[serde(default = "trace")]
    pub state: StateSpec,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn iota() -> LengthFunction {
    LengthFunction::Iota
}
fn trace() -> StateSpec {
    StateSpec::Trace
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UhfProduct {
    pub unitaries: Vec<Vec<Vec<Entry>>>,
    #[serde(default)]
    pub fault_injection: Option<f64>,
    #[serde(default = "two")]
    pub window: usize,
    #[serde(default = "default_support")]
    pub support: usize,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rotation {
    pub theta: f64,
    #[serde(default = "default_window")]
    pub fourier_window: usize,
    #[serde(default = "four")]
    pub window: usize,
    #[serde(default = "default_support")]
    pub support: usize,
    #[serde(default = "stabilization_windows")]
    pub stabilization_windows: Vec<usize>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn four() -> usize {
    4
}
fn stabilization_windows() -> Vec<usize> {
    vec![4, 8, 16]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZdOdometer {
    /// Odometer moduli for each coordinate of `ℤ^d`.
    pub moduli: Vec<Vec<usize>>,
    #[serde(default = "four")]
    pub window: usize,
    #[serde(default = "default_support")]
    pub support: usize,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default = "two")]
    pub bound_window: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shortcut {
    pub x: usize,
    pub y: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subodometer {
    pub moduli: Vec<usize>,
    pub level: usize,
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub perturbation: Option<Shortcut>,
}

#[derive(Debug, Clone)]
pub enum Scenario {
    BunceDeddens(BunceDeddens),
    UhfProduct(UhfProduct),
    Rotation(Rotation),
    ZdOdometer(ZdOdometer),
    Subodometer(Subodometer),
}

fn params<T: for<'de> Deserialize<'de>>(v: &Value) -> Result<T> {
    serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("params: {e}")))
}

impl ScenarioConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema {} (expected {SCHEMA_VERSION})",
                cfg.schema
            )));
        }
        cfg.parsed()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn parsed(&self) -> Result<Scenario> {
        Ok(match self.scenario.as_str() {
            "bunce-deddens" => Scenario::BunceDeddens(params(&self.params)?),
            "uhf-product" => Scenario::UhfProduct(params(&self.params)?),
            "rotation" => Scenario::Rotation(params(&self.params)?),
            "zd-odometer" => Scenario::ZdOdometer(params(&self.params)?),
            "subodometer" => Scenario::Subodometer(params(&self.params)?),
            other => return Err(Error::Config(format!("unknown scenario '{other}'"))),
        })
    }
}

/// Which parts of a scenario to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Full,
    Spectrum,
    Distance,
    Cutdown,
}

impl Mode {
    fn invariants(self) -> bool {
        self == Mode::Full
    }
    fn spectra(self) -> bool {
        matches!(self, Mode::Full | Mode::Spectrum)
    }
    fn distances(self) -> bool {
        matches!(self, Mode::Full | Mode::Distance)
    }
    fn cutdowns(self) -> bool {
        matches!(self, Mode::Full | Mode::Cutdown)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Row {
    pub name: String,
    pub module: String,
    pub anchor: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SpectrumSummary {
    pub triple: String,
    pub dimension: usize,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DistanceRow {
    pub pair: String,
    pub provenance: String,
    pub value: f64,
    pub oracle: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CertificateRow {
    pub context: String,
    pub element: Option<usize>,
    pub certificate: Certificate,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CutdownRow {
    pub sample: usize,
    pub n_cut: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub schema: u32,
    pub scenario: String,
    pub seed: u64,
    pub rows: Vec<Row>,
    pub failures: Vec<String>,
    pub spectra: Vec<SpectrumSummary>,
    pub distances: Vec<DistanceRow>,
    pub diagnostics: Value,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Report,
    pub spectra: Vec<(String, Vec<f64>)>,
    pub certificates: Vec<CertificateRow>,
    pub cutdowns: Vec<CutdownRow>,
}

impl RunOutput {
    pub fn passed(&self) -> bool {
        self.report.failures.is_empty()
    }
}

struct Ctx {
    mode: Mode,
    seed: u64,
    tol: Tolerances,
    rng: SeededRng,
    rows: Vec<Row>,
    spectra: Vec<(String, Vec<f64>)>,
    distances: Vec<DistanceRow>,
    certificates: Vec<CertificateRow>,
    cutdowns: Vec<CutdownRow>,
    diagnostics: serde_json::Map<String, Value>,
}

impl Ctx {
    #[allow(clippy::too_many_arguments)]
    fn row(
        &mut self,
        name: &str,
        module: &str,
        anchor: &str,
        passed: bool,
        value: f64,
        tolerance: f64,
        detail: String,
    ) {
        self.rows.push(Row {
            name: name.into(),
            module: module.into(),
            anchor: anchor.into(),
            passed,
            value,
            tolerance,
            detail,
        });
    }

    /// Row passing iff `value ≤ tolerance`.
    fn below(&mut self, name: &str, module: &str, anchor: &str, value: f64, tolerance: f64, detail: String) {
        self.row(name, module, anchor, value <= tolerance, value, tolerance, detail);
    }

    fn spectrum(&mut self, name: &str, t: &SpectralTriple) -> Result<()> {
        let eigs = t.spectrum()?;
        self.spectra.push((name.into(), eigs));
        Ok(())
    }

    fn connes(&self, restarts: usize) -> ConnesOptions {
        ConnesOptions {
            restarts,
            seed: self.seed,
            ..Default::default()
        }
    }
}

pub fn run_config(cfg: &ScenarioConfig, seed: Option<u64>, mode: Mode) -> Result<RunOutput> {
    let scenario = cfg.parsed()?;
    let seed = seed.unwrap_or(cfg.seed);
    let mut ctx = Ctx {
        mode,
        seed,
        tol: cfg.tolerances.clone(),
        rng: random::rng(seed),
        rows: Vec::new(),
        spectra: Vec::new(),
        distances: Vec::new(),
        certificates: Vec::new(),
        cutdowns: Vec::new(),
        diagnostics: serde_json::Map::new(),
    };
    match &scenario {
        Scenario::BunceDeddens(p) => bunce_deddens(p, &mut ctx)?,
        Scenario::UhfProduct(p) => uhf_product(p, &mut ctx)?,
        Scenario::Rotation(p) => rotation(p, &mut ctx)?,
        Scenario::ZdOdometer(p) => zd_odometer(p, &mut ctx)?,
        Scenario::Subodometer(p) => subodometer(p, &mut ctx)?,
    }
    let failures = ctx.rows.iter().filter(|r| !r.passed).map(|r| r.name.clone()).collect();
    let spectra = ctx
        .spectra
        .iter()
        .map(|(name, e)| SpectrumSummary {
            triple: name.clone(),
            dimension: e.len(),
            min: e.first().copied().unwrap_or(0.0),
            max: e.last().copied().unwrap_or(0.0),
        })
        .collect();
    Ok(RunOutput {
        report: Report {
            schema: SCHEMA_VERSION,
            scenario: cfg.scenario.clone(),
            seed,
            rows: ctx.rows,
            failures,
            spectra,
            distances: ctx.distances,
            diagnostics: Value::Object(ctx.diagnostics),
        },
        spectra: ctx.spectra,
        certificates: ctx.certificates,
        cutdowns: ctx.cutdowns,
    })
}

fn random_element(rng: &mut SeededRng, n: usize) -> CVector {
    CVector::from_vec(random::complex_vec(rng, n))
}

fn kernel_check_fits(ct: &CrossedTriple) -> bool {
    let h = ct.triple.hilbert_dim();
    h * h * ct.triple.algebra_dim() <= KERNEL_CHECK_LIMIT
}

/// Checks shared by the crossed scenarios on `ℤ`.
fn crossed_checks(
    ctx: &mut Ctx,
    t: &SpectralTriple,
    action: &ActionModel,
    ct: &CrossedTriple,
    samples: usize,
) -> Result<()> {
    let n_a = t.algebra_dim();
    let support = ct.rep.support.radius;
    let tol = ctx.tol.clone();
    if kernel_check_fits(ct) {
        let k = ct.kernel_dim();
        ctx.row(
            "crossed kernel is the scalars",
            "crossed",
            "dim ker(b -> [D, b ⊕ b]) = 1 on the truncated crossed basis",
            k == 1,
            k as f64,
            1.0,
            format!("window radius {}, support {support}", ct.rep.window.radius),
        );
    }
    let a = random_element(&mut ctx.rng, n_a);
    let cov = ct.rep.covariance_defect(&a, &[1]);
    ctx.below(
        "covariance on interior vectors",
        "crossed",
        "λ_h π̃(a) λ_h* = π̃(α_h(a)) on vectors within N - |h|",
        cov,
        tol.commutator * (1.0 + t.represent(&a).norm()),
        "h = 1".into(),
    );
    if ct.output_parity() == crate::triple::Parity::Even && ct.length.is_scalar() {
        let trivial = ActionModel::new(None, None, vec![matops::identity(n_a)], "trivial")?;
        let reduced = CrossedTriple::even(t, &trivial, &ct.length, ct.rep.window, support)?;
        let g = group_triple(&ct.length, ct.rep.window, support)?;
        let te = tensor_even(t, &g)?;
        let dev = matops::spectral_deviation(&reduced.triple.spectrum()?, &te.spectrum()?);
        ctx.below(
            "trivial action reduces to the tensor product",
            "crossed",
            "spec D(trivial α) = spec(D_A ⊗ 1 - i ⊗ M_l block form)",
            dev,
            tol.spectral,
            String::new(),
        );
    }
    let mut envelope = 0;
    let mut fc = 0;
    let mut coef = 0;
    let mut fourier: f64 = 0.0;
    for _ in 0..samples {
        let x = CrossedElement::random(&mut ctx.rng, 1, support, n_a);
        let s = crossed_seminorms(ct, &x)?;
        if !s.envelope_ok {
            envelope += 1;
        }
        let m = ct.rep.element(&x)?;
        for (k, xk) in &x.terms {
            if t.seminorm(xk)? > s.horizontal + tol.envelope {
                fc += 1;
            }
            let bound = k[0].unsigned_abs() as f64 * matops::opnorm(&t.represent(xk))?;
            if bound > s.vertical + tol.envelope {
                coef += 1;
            }
            let back = ct.rep.fourier_coefficient(&m, k)?;
            fourier = fourier.max((back - xk).norm());
        }
    }
    ctx.row(
        "seminorm envelope",
        "crossed",
        "max(‖[x, D_A⊗1]‖, ‖[x, 1⊗M_l]‖) ≤ ‖[D, x⊕x]‖ ≤ sum",
        envelope == 0,
        envelope as f64,
        0.0,
        format!("{samples} random elements"),
    );
    ctx.row(
        "coefficient commutator bound",
        "crossed",
        "‖[π(x_n), D_A]‖ ≤ ‖[x, D_A⊗1]‖",
        fc == 0,
        fc as f64,
        0.0,
        format!("{samples} random elements"),
    );
    if ct.length == LengthFunction::Iota {
        ctx.row(
            "coefficient decay bound",
            "crossed",
            "|n| ‖x_n‖ ≤ ‖[x, 1⊗M_ι]‖",
            coef == 0,
            coef as f64,
            0.0,
            format!("{samples} random elements"),
        );
    }
    ctx.below(
        "Fourier round trip",
        "crossed",
        "x_k = E(x λ_{-k}) read at the origin fiber",
        fourier,
        tol.fourier,
        String::new(),
    );
    let _ = action;
    Ok(())
}

fn cutdown_checks(ctx: &mut Ctx, ct: &CrossedTriple, samples: usize) -> Result<()> {
    let n_a = ct.base.algebra_dim();
    let support = ct.rep.support.radius;
    let mut monotone_failures = 0;
    let mut band: f64 = 0.0;
    let mut at_support: f64 = 0.0;
    for sample in 0..samples {
        let x = CrossedElement::random(&mut ctx.rng, 1, support, n_a);
        let (_, l, _) = ct.interior_parts(&ct.rep.element(&x)?);
        let x = x.scaled(c(1.0 / l));
        let mut prev = f64::INFINITY;
        for n in 0..=support {
            let cd = cutdown(&ct.rep, &x, n)?;
            band = band.max(cd.band_defect);
            if cd.residual > prev * (1.0 + 1e-12) {
                monotone_failures += 1;
            }
            prev = cd.residual;
            if n == support {
                at_support = at_support.max(cd.residual);
            }
            ctx.cutdowns.push(CutdownRow {
                sample,
                n_cut: n,
                residual: cd.residual,
            });
        }
    }
    let tol = ctx.tol.clone();
    ctx.below(
        "cut-down equals band projection",
        "crossed",
        "Σ_{|k|≤N} x_k λ_k = Σ_{|k|≤N} Σ_m P_m x P_{m+k}",
        band,
        tol.fourier,
        String::new(),
    );
    ctx.row(
        "cut-down residual non-increasing",
        "crossed",
        "‖x - Σ_{|k|≤N} x_k λ_k‖ non-increasing in N for ‖[x, 1⊗M_ι]‖ = 1",
        monotone_failures == 0,
        monotone_failures as f64,
        0.0,
        format!("{samples} random elements"),
    );
    ctx.row(
        "cut-down exact at the support radius",
        "crossed",
        "residual = 0 for N ≥ support",
        at_support == 0.0,
        at_support,
        0.0,
        String::new(),
    );
    Ok(())
}

fn bunce_deddens(p: &BunceDeddens, ctx: &mut Ctx) -> Result<()> {
    let spec = OdometerSpec::new(p.moduli.clone(), p.level)?;
    let f = Filtration::odometer(spec.active_moduli())?;
    let state = p.state.build(f.top())?;
    let schedule = default_schedule(&f, p.s)?;
    let t = ci_triple(&f, &state, &schedule)?;
    let action = ActionModel::odometer_dual(&spec)?;
    let window = LatticeWindow::new(1, p.window)?;
    let ct = CrossedTriple::even(&t, &action, &p.length, window, p.support)?;
    let basis = f.top().basis();
    let tol = ctx.tol.clone();
    if ctx.mode.spectra() {
        ctx.spectrum("ci", &t)?;
        ctx.spectrum("crossed-even", &ct.triple)?;
    }
    if ctx.mode.invariants() {
        let nd = t.nondegenerate_on_basis();
        ctx.row(
            "CI triple non-degenerate",
            "algebra",
            "π faithful and [D, π(a)] = 0 only for scalars",
            nd.nondegenerate,
            nd.kernel_dim as f64,
            1.0,
            format!("faithful = {}", nd.faithful),
        );
        let iso = isometry_check(&t, &action, &basis, p.window)?;
        ctx.row(
            "odometer action is isometric",
            "dynamics",
            "|L(θ^g f) - L(f)| ≤ tol over one period, all basis functions",
            iso.isometric,
            iso.max_deviation,
            tol.isometry,
            match &iso.witness {
                Some(w) => format!("witness element {} at g = {:?}", w.element, w.g),
                None => String::new(),
            },
        );
        for (i, cert) in iso.certificates.iter().enumerate() {
            ctx.certificates.push(CertificateRow {
                context: "isometry".into(),
                element: Some(i),
                certificate: cert.clone(),
            });
        }
        let ec = equicont_constant(
            &t,
            &action,
            &basis,
            &EquicontOptions {
                seed: ctx.seed,
                range: p.window,
                ..Default::default()
            },
        )?;
        ctx.below(
            "equicontinuity constant is one",
            "dynamics",
            "L ≤ L_Γ ≤ C L with C = 1 for isometric actions",
            (ec.constant - 1.0).abs(),
            tol.equicont,
            format!(
                "C = {}, validation violations {}",
                ec.constant, ec.validation_violations
            ),
        );
        ctx.certificates.push(CertificateRow {
            context: "equicontinuity constant".into(),
            element: None,
            certificate: ec.certificate,
        });
        crossed_checks(ctx, &t, &action, &ct, p.samples)?;
    }
    if ctx.mode.distances() {
        let n = f.top().dim();
        let opts = ctx.connes(p.restarts);
        let m1 = spec.moduli[0];
        let cylinder = |digit: usize| {
            let w = CVector::from_fn(n, |x, _| if x % m1 == digit { c(1.0) } else { c(0.0) });
            let total: f64 = w.iter().map(|z| z.re).sum();
            w / c(total)
        };
        let state_fn = state.functional(f.top());
        let mut point = CVector::zeros(n);
        point[0] = c(1.0);
        for (label, a, b) in [
            ("cylinder[0] vs cylinder[1]", cylinder(0), cylinder(1)),
            ("state vs point[0]", state_fn.clone(), point.clone()),
        ] {
            let d = connes_distance(&t, &a, &b, &opts)?;
            let oracle = if n <= 5 {
                Some(connes_distance_bruteforce(&t, &a, &b, 1e-2)?.value)
            } else {
                None
            };
            ctx.distances.push(DistanceRow {
                pair: label.into(),
                provenance: if oracle.is_some() { "solver+oracle" } else { "solver" }.into(),
                value: d.value,
                oracle,
            });
        }
        if n <= 8 {
            let em = effective_metric(&t, &opts)?;
            for x in 0..n {
                for y in x + 1..n {
                    ctx.distances.push(DistanceRow {
                        pair: format!("point[{x}] vs point[{y}]"),
                        provenance: "solver".into(),
                        value: em.dist[x][y],
                        oracle: None,
                    });
                }
            }
            if ctx.mode.invariants() {
                let mut shift_dev: f64 = 0.0;
                for x in 0..n {
                    for y in 0..n {
                        shift_dev = shift_dev.max((em.dist[x][y] - em.dist[(x + 1) % n][(y + 1) % n]).abs());
                    }
                }
                ctx.row(
                    "effective metric is a metric",
                    "qmetric",
                    "d_D(x, z) ≤ d_D(x, y) + d_D(y, z)",
                    em.metric_ok,
                    em.unbounded.len() as f64,
                    0.0,
                    String::new(),
                );
                ctx.below(
                    "odometer preserves point distances",
                    "qmetric",
                    "d(φ∘α_g, ψ∘α_g) = d(φ, ψ)",
                    shift_dev,
                    1e-8,
                    String::new(),
                );
            }
        }
        if p.level >= 2 && ctx.mode.invariants() {
            let rows = lip_stabilization_report(
                &StabilizationScenario::Odometer {
                    moduli: spec.active_moduli().to_vec(),
                    levels: (1..=p.level).collect(),
                    s: p.s,
                },
                &opts,
            )?;
            ctx.diagnostics
                .insert("stabilization".into(), serde_json::to_value(rows)?);
        }
    }
    if ctx.mode.cutdowns() && p.length == LengthFunction::Iota {
        cutdown_checks(ctx, &ct, p.samples)?;
    }
    Ok(())
}

/// `exp(iεH)` for Hermitian `H`.
fn unitary_exp(h: &CMatrix, eps: f64) -> Result<CMatrix> {
    let (vals, vecs) = matops::herm_eig(h)?;
    let phases = CVector::from_iterator(vals.len(), vals.iter().map(|v| C64::from_polar(1.0, eps * v)));
    Ok(&vecs * CMatrix::from_diagonal(&phases) * vecs.adjoint())
}

fn uhf_product(p: &UhfProduct, ctx: &mut Ctx) -> Result<()> {
    let us = p
        .unitaries
        .iter()
        .map(|rows| matrix_from_rows(rows))
        .collect::<Result<Vec<_>>>()?;
    let sizes: Vec<usize> = us.iter().map(|u| u.nrows()).collect();
    let f = Filtration::uhf(&sizes)?;
    let schedule = default_schedule(&f, p.s)?;
    let t = ci_triple(&f, &AlgState::normalized_trace(f.top()), &schedule)?;
    let action = match p.fault_injection {
        None => ActionModel::product_automorphism(&us)?,
        Some(eps) => {
            let mut w = matops::identity(1);
            for u in &us {
                w = matops::kron(&w, u)?;
            }
            let h = random::random_hermitian(&mut ctx.rng, w.nrows());
            let perturbed = unitary_exp(&h, eps)? * w;
            ActionModel::inner(&perturbed, Some(f.clone()))?
        }
    };
    let window = LatticeWindow::new(1, p.window)?;
    let ct = CrossedTriple::even(&t, &action, &LengthFunction::Iota, window, p.support)?;
    let tol = ctx.tol.clone();
    if ctx.mode.spectra() {
        ctx.spectrum("ci", &t)?;
        ctx.spectrum("crossed-even", &ct.triple)?;
    }
    if ctx.mode.invariants() {
        let level1: Vec<CVector> = f.levels[1].basis().iter().map(|e| f.embed(1, e)).collect();
        let mut sample = level1.clone();
        for _ in 0..p.samples {
            sample.push(random_element(&mut ctx.rng, f.top().dim()));
        }
        let iso = isometry_check(&t, &action, &sample, p.window)?;
        ctx.row(
            "product-type action is isometric",
            "dynamics",
            "|L(α_g a) - L(a)| ≤ tol for Ad(⊗U_k)",
            iso.isometric,
            iso.max_deviation,
            tol.isometry,
            match &iso.witness {
                Some(w) => format!(
                    "witness element {} at g = {:?}: L = {}, L(α_g) = {}",
                    w.element, w.g, w.seminorm, w.moved_seminorm
                ),
                None => String::new(),
            },
        );
        for (i, cert) in iso.certificates.iter().enumerate() {
            ctx.certificates.push(CertificateRow {
                context: "isometry".into(),
                element: Some(i),
                certificate: cert.clone(),
            });
        }
        let w = AlgState::normalized_trace(f.top()).functional(f.top());
        let moved = action.pullback_functional(&w, &[1]);
        ctx.below(
            "trace is invariant",
            "dynamics",
            "τ ∘ α = τ",
            (moved - &w).camax(),
            tol.isometry,
            String::new(),
        );
        let nd = t.nondegenerate_on_basis();
        ctx.row(
            "CI triple non-degenerate",
            "algebra",
            "π faithful and [D, π(a)] = 0 only for scalars",
            nd.nondegenerate,
            nd.kernel_dim as f64,
            1.0,
            String::new(),
        );
        crossed_checks(ctx, &t, &action, &ct, p.samples)?;
    }
    if ctx.mode.distances() {
        let opts = ctx.connes(p.restarts);
        let trace_fn = AlgState::normalized_trace(f.top()).functional(f.top());
        let k = sizes.iter().product::<usize>();
        let mut rho = CMatrix::zeros(k, k);
        rho[(0, 0)] = c(1.0);
        let vector = AlgState::new(f.top(), vec![rho])?;
        let d = connes_distance(&t, &trace_fn, &vector.functional(f.top()), &opts)?;
        ctx.distances.push(DistanceRow {
            pair: "trace vs vector state e_0".into(),
            provenance: "solver".into(),
            value: d.value,
            oracle: None,
        });
    }
    if ctx.mode.cutdowns() {
        cutdown_checks(ctx, &ct, p.samples)?;
    }
    Ok(())
}

fn rotation(p: &Rotation, ctx: &mut Ctx) -> Result<()> {
    let t = circle_triple(p.fourier_window, 2 * p.fourier_window)?;
    let action = ActionModel::rotation(p.fourier_window, p.theta)?;
    let window = LatticeWindow::new(1, p.window)?;
    let ct = CrossedTriple::even(&t, &action, &LengthFunction::Iota, window, p.support)?;
    let basis: Vec<CVector> = (0..t.algebra_dim()).map(|k| t.rep.basis_element(k)).collect();
    let tol = ctx.tol.clone();
    if ctx.mode.spectra() {
        ctx.spectrum("circle", &t)?;
        ctx.spectrum("crossed-even", &ct.triple)?;
    }
    if ctx.mode.invariants() {
        let iso = isometry_check(&t, &action, &basis, p.window)?;
        ctx.row(
            "rotation is isometric",
            "dynamics",
            "M_ι commutes with the rotation phases",
            iso.isometric,
            iso.max_deviation,
            tol.isometry,
            String::new(),
        );
        for (i, cert) in iso.certificates.iter().enumerate() {
            ctx.certificates.push(CertificateRow {
                context: "isometry".into(),
                element: Some(i),
                certificate: cert.clone(),
            });
        }
        let ec = equicont_constant(
            &t,
            &action,
            &basis,
            &EquicontOptions {
                seed: ctx.seed,
                range: p.window,
                restarts: 4,
                samples: 20,
                validation: 50,
            },
        )?;
        let flat = ec.ratios.iter().map(|r| (r.1 - 1.0).abs()).fold(0.0, f64::max);
        ctx.below(
            "equicontinuity table is flat",
            "dynamics",
            "sup_g L(α_g a) / L(a) = 1 for every scanned g",
            flat,
            tol.equicont,
            format!(
                "{} group elements, certificate exact = {}",
                ec.ratios.len(),
                ec.certificate.is_exact()
            ),
        );
        ctx.certificates.push(CertificateRow {
            context: "equicontinuity constant".into(),
            element: None,
            certificate: ec.certificate,
        });
        crossed_checks(ctx, &t, &action, &ct, p.samples)?;
    }
    if ctx.mode.distances() {
        let opts = ctx.connes(p.restarts);
        let dim = t.algebra_dim();
        let mut haar = CVector::zeros(dim);
        haar[p.fourier_window] = c(1.0);
        let point = CVector::from_element(dim, c(1.0));
        let d = connes_distance(&t, &haar, &point, &opts)?;
        ctx.distances.push(DistanceRow {
            pair: "haar vs point(0)".into(),
            provenance: "window distance".into(),
            value: d.value,
            oracle: None,
        });
        if ctx.mode.invariants() && !p.stabilization_windows.is_empty() {
            let rows = lip_stabilization_report(
                &StabilizationScenario::Rotation {
                    windows: p.stabilization_windows.clone(),
                },
                &opts,
            )?;
            ctx.diagnostics
                .insert("stabilization".into(), serde_json::to_value(rows)?);
        }
    }
    if ctx.mode.cutdowns() {
        cutdown_checks(ctx, &ct, p.samples)?;
    }
    Ok(())
}

fn zd_odometer(p: &ZdOdometer, ctx: &mut Ctx) -> Result<()> {
    let action = ActionModel::product_odometer(&p.moduli)?;
    let f = action
        .filtration
        .clone()
        .expect("product odometer carries a filtration");
    let schedule = default_schedule(&f, p.s)?;
    let t = ci_triple(&f, &AlgState::normalized_trace(f.top()), &schedule)?;
    let d = action.rank();
    let tol = ctx.tol.clone();
    let forward: Vec<usize> = (0..d).collect();
    let backward: Vec<usize> = (0..d).rev().collect();
    let ab = iterate_zd(&t, &action, p.window, p.support, &forward)?;
    if ctx.mode.spectra() {
        ctx.spectrum("iterate-forward", &ab)?;
    }
    if ctx.mode.invariants() {
        let expected = if d % 2 == 0 {
            crate::triple::Parity::Odd
        } else {
            crate::triple::Parity::Even
        };
        ctx.row(
            "iterated parity",
            "crossed",
            "odd iff d is even",
            ab.parity() == expected,
            d as f64,
            0.0,
            format!("{:?}", ab.parity()),
        );
        let ba = iterate_zd(&t, &action, p.window, p.support, &backward)?;
        let e_ab = ab.spectrum()?;
        let dev = matops::spectral_deviation(&e_ab, &ba.spectrum()?);
        ctx.below(
            "iteration order independence",
            "crossed",
            "spec D(α_1, …, α_d) = spec D(α_d, …, α_1)",
            dev,
            tol.zd_spectral,
            String::new(),
        );
        if d <= 2 {
            let direct = direct_ld_triple(&t, &action, p.window, p.support)?;
            let dev = matops::spectral_deviation(&e_ab, &direct.spectrum()?);
            ctx.below(
                "iteration matches matrix-valued length",
                "crossed",
                "spec D_iterated = spec(D_A⊗1⊗σ_x + 1⊗M_{l^(d)})",
                dev,
                tol.zd_spectral,
                String::new(),
            );
        }
        if d >= 2 {
            let a0 = coordinate_action(&action, 0)?;
            let a1 = coordinate_action(&action, 1)?;
            let small = LatticeWindow::new(1, p.bound_window)?;
            let ct = CrossedTriple::even(&t, &a0, &LengthFunction::Iota, small, p.support.min(p.bound_window))?;
            let rows = commuting_action_bound(&ct, &a1, p.bound_window)?;
            let worst = rows.iter().map(|r| r.sup).fold(0.0, f64::max);
            let exact = rows.iter().all(|r| r.certificate.is_exact());
            ctx.row(
                "commuting action bound is finite",
                "crossed",
                "sup_g' ‖[D, β̃_g'(b)]‖ < ∞ per crossed basis element",
                worst.is_finite() && exact,
                worst,
                f64::INFINITY,
                format!("{} basis elements, exact by period = {exact}", rows.len()),
            );
            for r in rows {
                ctx.certificates.push(CertificateRow {
                    context: "commuting action bound".into(),
                    element: Some(r.index),
                    certificate: r.certificate,
                });
            }
        }
    }
    Ok(())
}

fn subodometer(p: &Subodometer, ctx: &mut Ctx) -> Result<()> {
    let spec = OdometerSpec::new(p.moduli.clone(), p.level)?;
    let m = FiniteMetricAction::odometer(&spec)?;
    if !ctx.mode.invariants() {
        return Ok(());
    }
    let mut partitions = Vec::new();
    for &eps in &p.epsilons {
        let part = epsilon_chain_partition(&m, eps)?;
        let digits = ((1.0 / eps).floor() as usize).min(p.level);
        let expected: usize = spec.active_moduli()[..digits].iter().product();
        ctx.row(
            &format!("ε-chain index at ε = {eps}"),
            "dynamics",
            "classes are cylinders; stabilizer index m_1 ⋯ m_j",
            part.index == expected && part.classes.len() == expected,
            part.index as f64,
            expected as f64,
            format!("{} classes", part.classes.len()),
        );
        partitions.push(json!({"epsilon": eps, "classes": part.classes, "index": part.index}));
    }
    ctx.diagnostics.insert("partitions".into(), Value::Array(partitions));
    if let Some(sc) = &p.perturbation {
        let bad = m.with_shortcut(sc.x, sc.y, sc.value)?;
        let eps = p.epsilons.iter().copied().fold(f64::INFINITY, f64::min);
        let eps = if eps.is_finite() { eps } else { 0.5 };
        let outcome = epsilon_chain_partition(&bad, eps);
        let detail = match &outcome {
            Err(e) => e.to_string(),
            Ok(part) => format!("no invariance error; index {}", part.index),
        };
        ctx.row(
            "perturbed metric is rejected",
            "dynamics",
            "non-invariant metric triggers the invariance error",
            matches!(outcome, Err(Error::Invariance { .. })),
            0.0,
            0.0,
            detail,
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "both" => Ok(Format::Both),
            other => Err(Error::Config(format!("unknown format '{other}'"))),
        }
    }
}

pub fn spectra_csv(spectra: &[(String, Vec<f64>)]) -> String {
    let mut out = String::from("triple,index,eigenvalue,multiplicity\n");
    for (name, eigs) in spectra {
        for line in spectrum_csv(eigs).lines().skip(1) {
            let _ = writeln!(out, "{name},{line}");
        }
    }
    out
}

pub fn distances_csv(rows: &[DistanceRow]) -> String {
    let mut out = String::from("pair,provenance,value,oracle\n");
    for r in rows {
        let oracle = r.oracle.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", r.pair, r.provenance, r.value, oracle);
    }
    out
}

pub fn cutdown_csv(rows: &[CutdownRow]) -> String {
    let mut out = String::from("sample,n_cut,residual\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.sample, r.n_cut, r.residual);
    }
    out
}

/// Writes the outputs of one run; returns the written file names.
pub fn write_outputs(out: &RunOutput, dir: &Path, format: Format, mode: Mode) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        fs::write(dir.join(name), body)?;
        written.push(name.to_string());
        Ok(())
    };
    if matches!(format, Format::Json | Format::Both) {
        put("report.json", serde_json::to_string_pretty(&out.report)? + "\n")?;
        put(
            "certificates.json",
            serde_json::to_string_pretty(&out.certificates)? + "\n",
        )?;
    }
    if matches!(format, Format::Csv | Format::Both) {
        put("spectra.csv", spectra_csv(&out.spectra))?;
        put("distances.csv", distances_csv(&out.report.distances))?;
        if mode == Mode::Cutdown {
            put("cutdown.csv", cutdown_csv(&out.cutdowns))?;
        }
    }
    Ok(written)
}
