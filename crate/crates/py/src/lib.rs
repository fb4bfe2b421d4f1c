//! Python bindings for the ramancomb solvers. Exposes comb construction,
//! span description and the two solvers; powers cross the boundary in dBm.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ramancomb::accuracy::select_order_prepared;
use ramancomb::coupling::CouplingMatrix;
use ramancomb::fiber::{
    FiberGeometry, FiberSpan, GainConvention, LossModel, LossModelParams, LossProfile,
    RamanGainTable,
};
use ramancomb::numerical::{integrate_prepared, NumericalSettings, PowerEvolution, Scheme};
use ramancomb::perturbative::{
    build_quadrature_grid, truncated_power_profile, PerturbativeOrders, TruncatedSolution,
};
use ramancomb::spectrum::{build_comb, Band, LaunchSpec, WdmComb};
use ramancomb::units::w_to_dbm;

fn err(e: ramancomb::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A WDM channel comb with per-channel launch powers.
#[pyclass]
#[derive(Clone)]
struct Comb {
    inner: WdmComb,
}

#[pymethods]
impl Comb {
    /// Build a flat-launch comb over standard bands (by name: U, L, C, S, E).
    #[new]
    #[pyo3(signature = (bands, power_dbm=-1.0, slot_width_ghz=75.0))]
    fn new(bands: Vec<String>, power_dbm: f64, slot_width_ghz: f64) -> PyResult<Self> {
        let bands: Vec<Band> = bands
            .iter()
            .map(|n| Band::standard(n))
            .collect::<Result<_, _>>()
            .map_err(err)?;
        let inner = build_comb(&bands, slot_width_ghz * 1e9, &LaunchSpec::Flat { power_dbm })
            .map_err(err)?;
        Ok(Comb { inner })
    }

    fn channel_count(&self) -> usize {
        self.inner.channel_count()
    }

    fn frequencies_thz(&self) -> Vec<f64> {
        self.inner.frequencies_hz().iter().map(|f| f / 1e12).collect()
    }

    fn powers_dbm(&self) -> Vec<f64> {
        self.inner.powers_w().iter().map(|&p| w_to_dbm(p)).collect()
    }

    fn total_power_dbm(&self) -> f64 {
        self.inner.total_power_dbm()
    }

    /// Keep only channels within `bandwidth_thz` of the lowest frequency.
    fn truncated(&self, bandwidth_thz: f64) -> PyResult<Comb> {
        Ok(Comb {
            inner: self.inner.truncate_to_bandwidth(bandwidth_thz * 1e12).map_err(err)?,
        })
    }

    /// Same comb with every launch power multiplied by `factor`.
    fn scaled(&self, factor: f64) -> Comb {
        Comb {
            inner: self.inner.scaled_powers(factor),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.channel_count()
    }

    fn __repr__(&self) -> String {
        format!(
            "Comb({} channels, {:.2} dBm total)",
            self.inner.channel_count(),
            self.inner.total_power_dbm()
        )
    }
}

/// A fiber span: length, attenuation model and Raman gain data.
#[pyclass]
struct Span {
    inner: FiberSpan,
    convention: GainConvention,
}

#[pymethods]
impl Span {
    /// `parametric_loss` switches from flat attenuation to the built-in
    /// wavelength-dependent model; `symmetric_gain` drops the photon-energy
    /// asymmetry so total power is conserved when attenuation is zero.
    #[new]
    #[pyo3(signature = (length_km=70.0, alpha_db_km=0.2, parametric_loss=false, symmetric_gain=false))]
    fn new(
        length_km: f64,
        alpha_db_km: f64,
        parametric_loss: bool,
        symmetric_gain: bool,
    ) -> PyResult<Self> {
        let loss = if parametric_loss {
            LossModel::Parametric {
                params: LossModelParams::default(),
            }
        } else {
            LossModel::Flat { alpha_db_km }
        };
        let inner = FiberSpan::new(
            length_km * 1e3,
            loss,
            FiberGeometry::default(),
            RamanGainTable::bundled(),
        )
        .map_err(err)?;
        let convention = if symmetric_gain {
            GainConvention::Symmetrized
        } else {
            GainConvention::Tabulated
        };
        Ok(Span { inner, convention })
    }

    fn length_km(&self) -> f64 {
        self.inner.length_m / 1e3
    }

    fn __repr__(&self) -> String {
        format!("Span({:.1} km)", self.inner.length_m / 1e3)
    }
}

fn profiles_dbm(powers: &[Vec<f64>]) -> Vec<Vec<f64>> {
    powers
        .iter()
        .map(|row| row.iter().map(|&p| w_to_dbm(p)).collect())
        .collect()
}

/// Channel powers on a recorded z grid.
#[pyclass]
struct Evolution {
    inner: PowerEvolution,
}

#[pymethods]
impl Evolution {
    fn z_m(&self) -> Vec<f64> {
        self.inner.z_grid_m.clone()
    }

    /// Per-channel powers at the span end, dBm.
    fn final_dbm(&self) -> Vec<f64> {
        self.inner.final_profile().iter().map(|&p| w_to_dbm(p)).collect()
    }

    /// One list of per-channel dBm powers per recorded z sample.
    fn profiles_dbm(&self) -> Vec<Vec<f64>> {
        let rows: Vec<Vec<f64>> = (0..self.inner.z_grid_m.len())
            .map(|zi| self.inner.powers_at(zi).to_vec())
            .collect();
        profiles_dbm(&rows)
    }

    fn total_dbm_at(&self, zi: usize) -> PyResult<f64> {
        if zi >= self.inner.z_grid_m.len() {
            return Err(PyValueError::new_err(format!("z index {zi} out of range")));
        }
        Ok(w_to_dbm(self.inner.total_power_at(zi)))
    }
}

/// A truncated-series solution on the quadrature grid.
#[pyclass]
struct SeriesSolution {
    inner: TruncatedSolution,
}

#[pymethods]
impl SeriesSolution {
    fn z_m(&self) -> Vec<f64> {
        self.inner.z_grid_m.clone()
    }

    fn final_dbm(&self) -> Vec<f64> {
        self.inner.final_profile().iter().map(|&p| w_to_dbm(p)).collect()
    }
}

/// Outcome of automatic truncation-order selection.
#[pyclass]
struct Selection {
    #[pyo3(get)]
    order: usize,
    #[pyo3(get)]
    theta: Vec<f64>,
    #[pyo3(get)]
    bound_db: Vec<f64>,
}

#[pymethods]
impl Selection {
    fn __repr__(&self) -> String {
        format!("Selection(order={}, bound={:.4} dB)", self.order, self.bound_db.last().unwrap_or(&f64::NAN))
    }
}

fn prepare(comb: &Comb, span: &Span) -> PyResult<(LossProfile, CouplingMatrix)> {
    let loss =
        LossProfile::evaluate(&span.inner.loss, &comb.inner.frequencies_hz()).map_err(err)?;
    let coupling =
        CouplingMatrix::from_span(&comb.inner, &span.inner, span.convention).map_err(err)?;
    Ok((loss, coupling))
}

/// Integrate the coupled power equations along the span.
#[pyfunction]
#[pyo3(signature = (comb, span, dz_m=0.8, record_dz_m=None, scheme="rk4-log"))]
fn solve_numerical(
    comb: &Comb,
    span: &Span,
    dz_m: f64,
    record_dz_m: Option<f64>,
    scheme: &str,
) -> PyResult<Evolution> {
    let scheme = match scheme {
        "rk4-log" => Scheme::Rk4Log,
        "euler-log" => Scheme::EulerLog,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown scheme `{other}`; use rk4-log or euler-log"
            )))
        }
    };
    let (loss, coupling) = prepare(comb, span)?;
    let settings = NumericalSettings {
        dz_m,
        scheme,
        record_dz_m,
    };
    let inner = integrate_prepared(&comb.inner, &loss, &coupling, span.inner.length_m, &settings)
        .map_err(err)?;
    Ok(Evolution { inner })
}

/// Evaluate the regular-perturbation solution truncated at `order`.
#[pyfunction]
#[pyo3(signature = (comb, span, order=4, quadrature_step_m=1000.0))]
fn solve_perturbative(
    comb: &Comb,
    span: &Span,
    order: usize,
    quadrature_step_m: f64,
) -> PyResult<SeriesSolution> {
    let (loss, coupling) = prepare(comb, span)?;
    let grid = build_quadrature_grid(span.inner.length_m, quadrature_step_m).map_err(err)?;
    let mut orders =
        PerturbativeOrders::first_order(&comb.inner, &loss.alpha_per_m, &coupling, &grid)
            .map_err(err)?;
    orders.extend_to(&coupling, order).map_err(err)?;
    let inner = truncated_power_profile(&orders, order).map_err(err)?;
    Ok(SeriesSolution { inner })
}

/// Pick the lowest truncation order whose remainder bound meets
/// `tolerance_db`; returns the selection diagnostics and the solution.
#[pyfunction]
#[pyo3(signature = (comb, span, tolerance_db=0.1, quadrature_step_m=1000.0, max_order=10))]
fn select_order(
    comb: &Comb,
    span: &Span,
    tolerance_db: f64,
    quadrature_step_m: f64,
    max_order: usize,
) -> PyResult<(Selection, SeriesSolution)> {
    let (loss, coupling) = prepare(comb, span)?;
    let (sel, solution) = select_order_prepared(
        &comb.inner,
        &loss.alpha_per_m,
        &coupling,
        span.inner.length_m,
        quadrature_step_m,
        tolerance_db,
        max_order,
    )
    .map_err(err)?;
    Ok((
        Selection {
            order: sel.selected_order,
            theta: sel.theta,
            bound_db: sel.bound_db,
        },
        SeriesSolution { inner: solution },
    ))
}

/// max |a − b| over two equal-length dB profiles.
#[pyfunction]
fn max_difference_db(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    if a.len() != b.len() {
        return Err(PyValueError::new_err(format!(
            "profile lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

#[pymodule]
fn _ramancomb(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Comb>()?;
    m.add_class::<Span>()?;
    m.add_class::<Evolution>()?;
    m.add_class::<SeriesSolution>()?;
    m.add_class::<Selection>()?;
    m.add_function(wrap_pyfunction!(solve_numerical, m)?)?;
    m.add_function(wrap_pyfunction!(solve_perturbative, m)?)?;
    m.add_function(wrap_pyfunction!(select_order, m)?)?;
    m.add_function(wrap_pyfunction!(max_difference_db, m)?)?;
    Ok(())
}
