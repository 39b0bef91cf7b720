//! Python bindings: triples, actions, crossed products, distances.

use std::collections::HashMap;

use pyo3::exceptions::{PyMemoryError, PyValueError};
use pyo3::prelude::*;

use spectral_crossed::algebra::{ci_triple, default_schedule, Filtration, StateSpec};
use spectral_crossed::cli::{self, Mode, ScenarioConfig};
use spectral_crossed::crossed::{self, CrossedElement, CrossedTriple};
use spectral_crossed::dynamics::{self, ActionModel, EquicontOptions, FiniteMetricAction, OdometerSpec};
use spectral_crossed::groupgeo::{LatticeWindow, LengthFunction};
use spectral_crossed::matops::{self, CMatrix, CVector, C64};
use spectral_crossed::qmetric::{self, ConnesOptions};
use spectral_crossed::triple::{self, Parity, SpectralTriple};
use spectral_crossed::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::Capacity { .. } => PyMemoryError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_matrix(rows: Vec<Vec<C64>>) -> PyResult<CMatrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(CMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn from_matrix(m: &CMatrix) -> Vec<Vec<C64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn element(terms: Vec<(Vec<i64>, Vec<C64>)>) -> CrossedElement {
    let mut x = CrossedElement::new();
    for (k, a) in terms {
        x.add_term(k, CVector::from_vec(a));
    }
    x
}

#[pyclass(name = "SpectralTriple", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTriple {
    inner: SpectralTriple,
}

#[pymethods]
impl PyTriple {
    /// Two points with Dirac operator `[[0, λ], [λ, 0]]`.
    #[staticmethod]
    fn two_point(lam: f64) -> Self {
        Self {
            inner: triple::two_point_triple(lam),
        }
    }

    /// Truncated circle: Fourier modes up to `fourier_radius` acting on `mode_radius`.
    #[staticmethod]
    fn circle(fourier_radius: usize, mode_radius: usize) -> PyResult<Self> {
        let inner = triple::circle_triple(fourier_radius, mode_radius).map_err(err)?;
        Ok(Self { inner })
    }

    /// Odometer algebra `C(ℤ/m_1 × ... × ℤ/m_level)` with the trace state.
    #[staticmethod]
    #[pyo3(signature = (moduli, level, s = 1.5))]
    fn odometer(moduli: Vec<usize>, level: usize, s: f64) -> PyResult<Self> {
        let spec = OdometerSpec::new(moduli, level).map_err(err)?;
        let f = Filtration::odometer(spec.active_moduli()).map_err(err)?;
        Self::from_filtration(&f, s)
    }

    /// UHF tower `M_{n_1} ⊗ ... ⊗ M_{n_k}` with the trace state.
    #[staticmethod]
    #[pyo3(signature = (sizes, s = 1.5))]
    fn uhf(sizes: Vec<usize>, s: f64) -> PyResult<Self> {
        let f = Filtration::uhf(&sizes).map_err(err)?;
        Self::from_filtration(&f, s)
    }

    /// Commutative triple whose distance recovers the metric `d`.
    #[staticmethod]
    fn from_metric(d: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: qmetric::pair_triple(&d).map_err(err)?,
        })
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label.clone()
    }

    #[getter]
    fn parity(&self) -> &'static str {
        match self.inner.parity() {
            Parity::Odd => "odd",
            Parity::Even => "even",
        }
    }

    #[getter]
    fn hilbert_dim(&self) -> usize {
        self.inner.hilbert_dim()
    }

    #[getter]
    fn algebra_dim(&self) -> usize {
        self.inner.algebra_dim()
    }

    fn dirac(&self) -> Vec<Vec<C64>> {
        from_matrix(&self.inner.dirac)
    }

    fn spectrum(&self) -> PyResult<Vec<f64>> {
        self.inner.spectrum().map_err(err)
    }

    fn represent(&self, a: Vec<C64>) -> PyResult<Vec<Vec<C64>>> {
        self.check_len(&a)?;
        Ok(from_matrix(&self.inner.represent(&CVector::from_vec(a))))
    }

    /// `‖[D, π(a)]‖`.
    fn seminorm(&self, a: Vec<C64>) -> PyResult<f64> {
        self.check_len(&a)?;
        self.inner.seminorm(&CVector::from_vec(a)).map_err(err)
    }

    fn nondegenerate(&self) -> bool {
        self.inner.nondegenerate_on_basis().nondegenerate
    }

    fn scaled(&self, t: f64) -> Self {
        Self {
            inner: self.inner.with_scaled_dirac(t),
        }
    }

    /// State `a ↦ ⟨ξ, π(a) ξ⟩` as a functional on algebra coordinates.
    fn vector_state(&self, xi: Vec<C64>) -> PyResult<Vec<C64>> {
        let w = qmetric::vector_state(&*self.inner.rep, &CVector::from_vec(xi)).map_err(err)?;
        Ok(w.iter().copied().collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "SpectralTriple('{}', {}, hilbert_dim={})",
            self.inner.label,
            self.parity(),
            self.inner.hilbert_dim()
        )
    }
}

impl PyTriple {
    fn from_filtration(f: &Filtration, s: f64) -> PyResult<Self> {
        let state = StateSpec::Trace.build(f.top()).map_err(err)?;
        let schedule = default_schedule(f, s).map_err(err)?;
        Ok(Self {
            inner: ci_triple(f, &state, &schedule).map_err(err)?,
        })
    }

    fn check_len(&self, a: &[C64]) -> PyResult<()> {
        if a.len() != self.inner.algebra_dim() {
            return Err(PyValueError::new_err(format!(
                "expected {} algebra coordinates, got {}",
                self.inner.algebra_dim(),
                a.len()
            )));
        }
        Ok(())
    }
}

#[pyclass(name = "Action", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyAction {
    inner: ActionModel,
}

#[pymethods]
impl PyAction {
    /// Dual odometer action of `ℤ` on the level-`level` algebra.
    #[staticmethod]
    fn odometer(moduli: Vec<usize>, level: usize) -> PyResult<Self> {
        let spec = OdometerSpec::new(moduli, level).map_err(err)?;
        Ok(Self {
            inner: ActionModel::odometer_dual(&spec).map_err(err)?,
        })
    }

    /// `ℤ^d` acting by independent odometers on a product algebra.
    #[staticmethod]
    fn product_odometer(moduli: Vec<Vec<usize>>) -> PyResult<Self> {
        Ok(Self {
            inner: ActionModel::product_odometer(&moduli).map_err(err)?,
        })
    }

    /// `Ad(U_1 ⊗ ... ⊗ U_k)` on the UHF tower.
    #[staticmethod]
    fn product_automorphism(unitaries: Vec<Vec<Vec<C64>>>) -> PyResult<Self> {
        let us = unitaries.into_iter().map(to_matrix).collect::<PyResult<Vec<_>>>()?;
        Ok(Self {
            inner: ActionModel::product_automorphism(&us).map_err(err)?,
        })
    }

    /// `Ad(v)` on a full matrix algebra.
    #[staticmethod]
    fn inner(v: Vec<Vec<C64>>) -> PyResult<Self> {
        Ok(Self {
            inner: ActionModel::inner(&to_matrix(v)?, None).map_err(err)?,
        })
    }

    /// Rotation by `θ` on truncated Fourier coordinates.
    #[staticmethod]
    fn rotation(fourier_radius: usize, theta: f64) -> PyResult<Self> {
        Ok(Self {
            inner: ActionModel::rotation(fourier_radius, theta).map_err(err)?,
        })
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label.clone()
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank()
    }

    fn act(&self, g: Vec<i64>, a: Vec<C64>) -> PyResult<Vec<C64>> {
        if g.len() != self.inner.rank() {
            return Err(PyValueError::new_err("group element has the wrong rank"));
        }
        if a.len() != self.inner.algebra_dim {
            return Err(PyValueError::new_err("wrong number of algebra coordinates"));
        }
        Ok(self.inner.act(&g, &CVector::from_vec(a)).iter().copied().collect())
    }

    fn __repr__(&self) -> String {
        format!("Action('{}', rank={})", self.inner.label, self.inner.rank())
    }
}

#[pyclass(name = "CrossedTriple", frozen)]
struct PyCrossed {
    inner: CrossedTriple,
}

fn length_function(generators: Option<Vec<i64>>) -> PyResult<LengthFunction> {
    match generators {
        None => Ok(LengthFunction::Iota),
        Some(g) => LengthFunction::word_length(g).map_err(err),
    }
}

#[pymethods]
impl PyCrossed {
    /// Even crossed triple from an odd base triple.  `generators` selects a
    /// word length on `ℤ`; the default is `n ↦ n`.
    #[staticmethod]
    #[pyo3(signature = (base, action, radius, support = 1, generators = None))]
    fn even(
        base: &PyTriple,
        action: &PyAction,
        radius: usize,
        support: usize,
        generators: Option<Vec<i64>>,
    ) -> PyResult<Self> {
        let window = LatticeWindow::new(action.inner.rank(), radius).map_err(err)?;
        let l = length_function(generators)?;
        let inner = CrossedTriple::even(&base.inner, &action.inner, &l, window, support).map_err(err)?;
        Ok(Self { inner })
    }

    /// Odd crossed triple from an even base triple.
    #[staticmethod]
    #[pyo3(signature = (base, action, radius, support = 1, generators = None))]
    fn odd(
        base: &PyTriple,
        action: &PyAction,
        radius: usize,
        support: usize,
        generators: Option<Vec<i64>>,
    ) -> PyResult<Self> {
        let window = LatticeWindow::new(action.inner.rank(), radius).map_err(err)?;
        let l = length_function(generators)?;
        let inner = CrossedTriple::odd(&base.inner, &action.inner, &l, window, support).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn triple(&self) -> PyTriple {
        PyTriple {
            inner: self.inner.triple.clone(),
        }
    }

    /// Horizontal, vertical and full seminorms of `Σ a_k u^k`, given as
    /// `[(k, a_k), ...]`.
    fn seminorms(&self, terms: Vec<(Vec<i64>, Vec<C64>)>) -> PyResult<HashMap<String, f64>> {
        let s = crossed::crossed_seminorms(&self.inner, &element(terms)).map_err(err)?;
        let mut out = HashMap::from([
            ("horizontal".to_string(), s.horizontal),
            ("vertical".to_string(), s.vertical),
            ("full".to_string(), s.full),
        ]);
        if let Some((a, l, f)) = s.exact {
            out.insert("exact_horizontal".into(), a);
            out.insert("exact_vertical".into(), l);
            out.insert("exact_full".into(), f);
        }
        Ok(out)
    }

    /// Interior norm of what the Fourier truncation at `n_cut` discards.
    fn cutdown_residual(&self, terms: Vec<(Vec<i64>, Vec<C64>)>, n_cut: usize) -> PyResult<f64> {
        Ok(crossed::cutdown(&self.inner.rep, &element(terms), n_cut)
            .map_err(err)?
            .residual)
    }
}

fn coordinate_basis(action: &ActionModel) -> Vec<CVector> {
    let n = action.algebra_dim;
    (0..n)
        .map(|k| CVector::from_fn(n, |i, _| C64::new(f64::from(u8::from(i == k)), 0.0)))
        .collect()
}

#[pyfunction]
fn tensor_even(a: &PyTriple, b: &PyTriple) -> PyResult<PyTriple> {
    Ok(PyTriple {
        inner: triple::tensor_even(&a.inner, &b.inner).map_err(err)?,
    })
}

#[pyfunction]
fn product_odd(a: &PyTriple, b: &PyTriple) -> PyResult<PyTriple> {
    Ok(PyTriple {
        inner: triple::product_odd(&a.inner, &b.inner).map_err(err)?,
    })
}

/// Connes distance between two states given as functionals on algebra
/// coordinates.  Returns `inf` when the states differ on the kernel.
#[pyfunction]
#[pyo3(signature = (t, phi, psi, restarts = 40, seed = 0))]
fn connes_distance(t: &PyTriple, phi: Vec<C64>, psi: Vec<C64>, restarts: usize, seed: u64) -> PyResult<f64> {
    let opts = ConnesOptions {
        restarts,
        seed,
        ..ConnesOptions::default()
    };
    let d = qmetric::connes_distance(&t.inner, &CVector::from_vec(phi), &CVector::from_vec(psi), &opts).map_err(err)?;
    Ok(if d.unbounded { f64::INFINITY } else { d.value })
}

/// Earth mover's distance between two probability vectors, solved exactly.
#[pyfunction]
fn wasserstein(d: Vec<Vec<f64>>, mu: Vec<f64>, nu: Vec<f64>) -> PyResult<f64> {
    Ok(qmetric::wasserstein_lp(&d, &mu, &nu).map_err(err)?.primal)
}

/// Best constant in `L(α_g a) ≤ C L(a)` over group elements in the range.
#[pyfunction]
#[pyo3(signature = (t, action, range = 8, restarts = 20, seed = 0))]
fn equicont_constant(t: &PyTriple, action: &PyAction, range: usize, restarts: usize, seed: u64) -> PyResult<f64> {
    let opts = EquicontOptions {
        restarts,
        seed,
        range,
        ..EquicontOptions::default()
    };
    let basis = coordinate_basis(&action.inner);
    Ok(dynamics::equicont_constant(&t.inner, &action.inner, &basis, &opts)
        .map_err(err)?
        .constant)
}

/// Largest `|L(α_g a) - L(a)|` over basis elements.
#[pyfunction]
#[pyo3(signature = (t, action, range = 8))]
fn isometry_defect(t: &PyTriple, action: &PyAction, range: usize) -> PyResult<f64> {
    let basis = coordinate_basis(&action.inner);
    Ok(dynamics::isometry_check(&t.inner, &action.inner, &basis, range)
        .map_err(err)?
        .max_deviation)
}

/// ε-chain classes of an odometer level and the stabilizer index.
#[pyfunction]
fn chain_partition(moduli: Vec<usize>, level: usize, epsilon: f64) -> PyResult<(Vec<Vec<usize>>, usize)> {
    let spec = OdometerSpec::new(moduli, level).map_err(err)?;
    let m = FiniteMetricAction::odometer(&spec).map_err(err)?;
    let p = dynamics::epsilon_chain_partition(&m, epsilon).map_err(err)?;
    Ok((p.classes, p.index))
}

#[pyfunction]
fn opnorm(m: Vec<Vec<C64>>) -> PyResult<f64> {
    matops::opnorm(&to_matrix(m)?).map_err(err)
}

/// Runs a scenario config given as JSON text and returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (config, seed = None, mode = "full"))]
fn run_scenario(py: Python<'_>, config: &str, seed: Option<u64>, mode: &str) -> PyResult<String> {
    let cfg = ScenarioConfig::from_json(config).map_err(err)?;
    let mode = match mode {
        "full" => Mode::Full,
        "spectrum" => Mode::Spectrum,
        "distance" => Mode::Distance,
        "cutdown" => Mode::Cutdown,
        other => return Err(PyValueError::new_err(format!("unknown mode '{other}'"))),
    };
    let out = py.detach(|| cli::run_config(&cfg, seed, mode)).map_err(err)?;
    serde_json::to_string(&out.report).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn spectral_crossed_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTriple>()?;
    m.add_class::<PyAction>()?;
    m.add_class::<PyCrossed>()?;
    m.add_function(wrap_pyfunction!(tensor_even, m)?)?;
    m.add_function(wrap_pyfunction!(product_odd, m)?)?;
    m.add_function(wrap_pyfunction!(connes_distance, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein, m)?)?;
    m.add_function(wrap_pyfunction!(equicont_constant, m)?)?;
    m.add_function(wrap_pyfunction!(isometry_defect, m)?)?;
    m.add_function(wrap_pyfunction!(chain_partition, m)?)?;
    m.add_function(wrap_pyfunction!(opnorm, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
