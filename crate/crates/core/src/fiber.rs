//! Fiber description: spectral attenuation, transverse geometry, and the
//! Raman gain data that couples the channels.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{db_km_to_per_m, frequency_to_wavelength_um, thz_to_hz};

/// Wavelength range (µm) over which the parametric loss model is accepted.
pub const LOSS_MODEL_WAVELENGTH_UM: (f64, f64) = (1.2, 1.7);

/// Fitted Rayleigh scattering strength, dB·µm⁴/km.
pub const DEFAULT_RAYLEIGH_A_DB_UM4_KM: f64 = 0.9192;
/// Fitted wavelength-independent scattering floor, dB/km.
pub const DEFAULT_RAYLEIGH_B_DB_KM: f64 = 0.0147;
/// Fitted ultraviolet edge strength, dB/km.
pub const DEFAULT_UV_K_DB_KM: f64 = 1.4655e-16;
/// Ultraviolet edge decay constant, µm (literature value for Ge-doped silica).
pub const DEFAULT_UV_C_UM: f64 = 4.63;
/// Fitted infrared multiphonon edge strength, dB/km.
pub const DEFAULT_IR_K_DB_KM: f64 = 5.0e11;
/// Infrared edge decay constant, µm (literature value for silica).
pub const DEFAULT_IR_C_UM: f64 = 48.48;
/// Fitted amplitude scale of the hydroxyl/phosphorus absorption peaks, dB/km.
/// The measured fiber is low-water-peak, hence the tiny value.
pub const DEFAULT_PEAK_SCALE_DB_KM: f64 = 0.0043e-3;

/// One Gaussian absorption line: `amplitude · exp(−(λ−center)²/(2σ²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianPeak {
    pub amplitude_db_km: f64,
    pub center_um: f64,
    pub sigma_um: f64,
}

/// Parametric attenuation model: Rayleigh scattering + UV and IR absorption
/// edges + a list of Gaussian absorption peaks.
///
/// α(λ) = A·λ⁻⁴ + B + K_uv·e^(C_uv/λ) + K_ir·e^(−C_ir/λ) + Σᵢ peakᵢ(λ),
/// with λ in µm and every term in dB/km.
///
/// Defaults are the fitted values for a low-water-peak standard single-mode
/// fiber; the edge constants and peak positions not covered by the fit carry
/// literature values and can all be overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossModelParams {
    pub rayleigh_a_db_um4_km: f64,
    pub rayleigh_b_db_km: f64,
    pub uv_k_db_km: f64,
    pub uv_c_um: f64,
    pub ir_k_db_km: f64,
    pub ir_c_um: f64,
    pub peaks: Vec<GaussianPeak>,
}

/// Hydroxyl overtone lines around 1.38 µm and 1.25 µm plus the P-OH line near
/// 1.60 µm, with amplitudes expressed as ratios of the fitted scale.
fn default_peaks() -> Vec<GaussianPeak> {
    const RATIOS: [(f64, f64, f64); 6] = [
        (1.000, 1.3830, 0.0070),
        (0.474, 1.3625, 0.0125),
        (0.244, 1.4070, 0.0085),
        (0.134, 1.2460, 0.0070),
        (0.066, 1.2620, 0.0110),
        (0.0365, 1.6000, 0.0160),
    ];
    RATIOS
        .iter()
        .map(|&(r, c, s)| GaussianPeak {
            amplitude_db_km: r * DEFAULT_PEAK_SCALE_DB_KM,
            center_um: c,
            sigma_um: s,
        })
        .collect()
}

impl Default for LossModelParams {
    fn default() -> Self {
        LossModelParams {
            rayleigh_a_db_um4_km: DEFAULT_RAYLEIGH_A_DB_UM4_KM,
            rayleigh_b_db_km: DEFAULT_RAYLEIGH_B_DB_KM,
            uv_k_db_km: DEFAULT_UV_K_DB_KM,
            uv_c_um: DEFAULT_UV_C_UM,
            ir_k_db_km: DEFAULT_IR_K_DB_KM,
            ir_c_um: DEFAULT_IR_C_UM,
            peaks: default_peaks(),
        }
    }
}

/// Evaluate the parametric loss model at a vacuum wavelength in µm.
///
/// Returns dB/km. Wavelengths outside [`LOSS_MODEL_WAVELENGTH_UM`] are a
/// domain error: the fit is meaningless there.
pub fn loss_coefficient(params: &LossModelParams, wavelength_um: f64) -> Result<f64> {
    let (lo, hi) = LOSS_MODEL_WAVELENGTH_UM;
    if !wavelength_um.is_finite() || wavelength_um < lo || wavelength_um > hi {
        return Err(Error::Domain(format!(
            "wavelength {wavelength_um} um outside the supported range [{lo}, {hi}] um"
        )));
    }
    let l = wavelength_um;
    let mut alpha = params.rayleigh_a_db_um4_km / (l * l * l * l) + params.rayleigh_b_db_km;
    alpha += params.uv_k_db_km * (params.uv_c_um / l).exp();
    alpha += params.ir_k_db_km * (-params.ir_c_um / l).exp();
    for p in &params.peaks {
        let d = l - p.center_um;
        alpha += p.amplitude_db_km * (-d * d / (2.0 * p.sigma_um * p.sigma_um)).exp();
    }
    Ok(alpha)
}

/// Step-index geometry of the fiber, enough to derive the mode size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiberGeometry {
    pub core_radius_um: f64,
    pub cladding_index: f64,
    /// Relative index step Δ = (n₁ − n_cl)/n₁.
    pub relative_index_step: f64,
    pub nonlinear_index_m2_w: f64,
}

impl Default for FiberGeometry {
    fn default() -> Self {
        // Standard single-mode fiber.
        FiberGeometry {
            core_radius_um: 4.2,
            cladding_index: 1.45,
            relative_index_step: 0.0031,
            nonlinear_index_m2_w: 2.6e-20,
        }
    }
}

impl FiberGeometry {
    /// Core index implied by the cladding index and the relative step.
    pub fn core_index(&self) -> f64 {
        self.cladding_index / (1.0 - self.relative_index_step)
    }

    /// Normalized frequency V = (2π/λ)·a·n₁·√(2Δ) at a vacuum wavelength in µm.
    pub fn v_parameter(&self, wavelength_um: f64) -> f64 {
        (2.0 * std::f64::consts::PI / wavelength_um)
            * self.core_radius_um
            * self.core_index()
            * (2.0 * self.relative_index_step).sqrt()
    }

    /// Gaussian-approximation effective area in µm² at a frequency in Hz:
    /// A_eff = π·(a/√(ln V))².
    ///
    /// V ≤ 1 (mode no longer guided in this approximation) is a domain error.
    pub fn effective_area_um2(&self, f_hz: f64) -> Result<f64> {
        let lambda = frequency_to_wavelength_um(f_hz);
        let v = self.v_parameter(lambda);
        if !(v > 1.0) {
            return Err(Error::Domain(format!(
                "V = {v:.4} <= 1 at {lambda:.4} um; effective-area model not applicable"
            )));
        }
        let w = self.core_radius_um / v.ln().sqrt();
        Ok(std::f64::consts::PI * w * w)
    }
}

/// Tabulated Raman gain coefficient g₀(Δf) at a reference pump frequency, in
/// 1/(W·m), with Δf the interferer-minus-channel frequency shift.
///
/// Positive shifts (interferer above the channel) carry positive gain; the
/// negative half is the depletion side and is part of the data. Outside the
/// tabulated range the coupling is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamanGainTable {
    pub reference_frequency_hz: f64,
    /// Strictly ascending shifts in Hz; must bracket and include zero.
    pub shifts_hz: Vec<f64>,
    pub g0_per_w_m: Vec<f64>,
    /// Polarization averaging factor k_pol applied on evaluation.
    pub polarization_factor: f64,
}

/// The dataset bundled with the crate (also shipped as
/// `data/raman_gain_fused_silica.txt`).
const BUNDLED_TABLE: &str = include_str!("../data/raman_gain_fused_silica.txt");
/// Reference pump frequency of the bundled dataset, Hz.
pub const BUNDLED_TABLE_REFERENCE_HZ: f64 = 206.185e12;

impl RamanGainTable {
    /// Build from explicit columns (shifts in THz).
    pub fn from_columns(
        shifts_thz: Vec<f64>,
        g0_per_w_m: Vec<f64>,
        reference_frequency_hz: f64,
    ) -> Result<Self> {
        let table = RamanGainTable {
            reference_frequency_hz,
            shifts_hz: shifts_thz.into_iter().map(thz_to_hz).collect(),
            g0_per_w_m,
            polarization_factor: 1.0,
        };
        table.validate("<columns>")?;
        Ok(table)
    }

    /// Parse the two-column text format: `shift_THz g0_per_W_m` per line,
    /// `#` comments and blank lines ignored.
    pub fn from_text(text: &str, path_label: &str, reference_frequency_hz: f64) -> Result<Self> {
        let mut shifts = Vec::new();
        let mut gains = Vec::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split_whitespace();
            let parse = |tok: Option<&str>, what: &str| -> Result<f64> {
                tok.and_then(|t| t.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        path: path_label.to_string(),
                        line: idx + 1,
                        message: format!("expected {what} (two numeric columns)"),
                    })
            };
            shifts.push(parse(cols.next(), "frequency shift in THz")?);
            gains.push(parse(cols.next(), "gain in 1/(W m)")?);
            if cols.next().is_some() {
                return Err(Error::Parse {
                    path: path_label.to_string(),
                    line: idx + 1,
                    message: "more than two columns".into(),
                });
            }
        }
        let table = RamanGainTable {
            reference_frequency_hz,
            shifts_hz: shifts.into_iter().map(thz_to_hz).collect(),
            g0_per_w_m: gains,
            polarization_factor: 1.0,
        };
        table.validate(path_label)?;
        Ok(table)
    }

    pub fn from_file(path: &Path, reference_frequency_hz: f64) -> Result<Self> {
        let label = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(label.clone(), e))?;
        Self::from_text(&text, &label, reference_frequency_hz)
    }

    /// The fused-silica dataset compiled into the crate.
    pub fn bundled() -> Self {
        Self::from_text(BUNDLED_TABLE, "<bundled>", BUNDLED_TABLE_REFERENCE_HZ)
            .expect("bundled Raman table is valid")
    }

    fn validate(&self, label: &str) -> Result<()> {
        let err = |line: usize, message: String| Error::Parse {
            path: label.to_string(),
            line,
            message,
        };
        if self.shifts_hz.len() != self.g0_per_w_m.len() {
            return Err(err(0, "shift and gain columns differ in length".into()));
        }
        if self.shifts_hz.len() < 3 {
            return Err(err(0, "need at least 3 samples".into()));
        }
        for (i, w) in self.shifts_hz.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(err(i + 2, format!("shifts not strictly ascending near {} THz", w[0] * 1e-12)));
            }
        }
        let zero = self
            .shifts_hz
            .iter()
            .position(|&s| s.abs() < 1e3) // 1 kHz of zero
            .ok_or_else(|| err(0, "no sample at zero shift; the Delta-f = 0 neighborhood is required".into()))?;
        if self.g0_per_w_m[zero] != 0.0 {
            return Err(err(zero + 1, "gain at zero shift must be exactly 0".into()));
        }
        if zero == 0 || zero + 1 == self.shifts_hz.len() {
            return Err(err(0, "table must cover both sides of zero shift".into()));
        }
        if !(self.reference_frequency_hz > 0.0) {
            return Err(err(0, "reference frequency must be positive".into()));
        }
        Ok(())
    }

    /// Linear interpolation of g₀ at a signed shift in Hz; zero outside the
    /// tabulated range.
    pub fn g0_at(&self, shift_hz: f64) -> f64 {
        let s = &self.shifts_hz;
        if shift_hz < s[0] || shift_hz > s[s.len() - 1] {
            return 0.0;
        }
        let i = match s.binary_search_by(|x| x.partial_cmp(&shift_hz).unwrap()) {
            Ok(i) => return self.g0_per_w_m[i],
            Err(i) => i, // first index with s[i] > shift
        };
        let (s0, s1) = (s[i - 1], s[i]);
        let t = (shift_hz - s0) / (s1 - s0);
        self.g0_per_w_m[i - 1] * (1.0 - t) + self.g0_per_w_m[i] * t
    }

    /// The gain with the negative half replaced by the exact mirror of the
    /// positive half. Used by conservation checks, where the coupling must be
    /// strictly antisymmetric.
    pub fn g0_symmetrized_at(&self, shift_hz: f64) -> f64 {
        if shift_hz < 0.0 {
            -self.g0_at(-shift_hz)
        } else {
            self.g0_at(shift_hz)
        }
    }

    pub fn max_shift_hz(&self) -> f64 {
        *self.shifts_hz.last().unwrap()
    }
}

/// How far `raman_gain` scales the tabulated curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainConvention {
    /// Use the table as data on both halves (physical default).
    Tabulated,
    /// Mirror the positive half onto the negative one (conservation tests).
    Symmetrized,
}

/// Pair gain g_R(f, f′) in 1/(W·m): the rate at which the channel at `f_hz`
/// is pumped (positive) or depleted (negative) by one interferer at
/// `f_prime_hz`, per watt of interferer power.
///
/// The tabulated reference curve is carried to the actual pump frequency
/// f_p = max(f, f′) by the photon-energy factor f_p/f_ref and the ratio of
/// the effective-area overlaps at the reference and actual pump, where the
/// overlap is the arithmetic mean of the pump and Stokes effective areas.
pub fn raman_gain(
    table: &RamanGainTable,
    geometry: &FiberGeometry,
    f_hz: f64,
    f_prime_hz: f64,
    convention: GainConvention,
) -> Result<f64> {
    let shift = f_prime_hz - f_hz;
    let g0 = match convention {
        GainConvention::Tabulated => table.g0_at(shift),
        GainConvention::Symmetrized => table.g0_symmetrized_at(shift),
    };
    if g0 == 0.0 {
        return Ok(0.0);
    }
    let f_pump = f_hz.max(f_prime_hz);
    let s_abs = shift.abs();
    let overlap = |pump_hz: f64| -> Result<f64> {
        let a_pump = geometry.effective_area_um2(pump_hz)?;
        let a_stokes = geometry.effective_area_um2(pump_hz - s_abs)?;
        Ok(0.5 * (a_pump + a_stokes))
    };
    let a_ref = overlap(table.reference_frequency_hz)?;
    let a_pump = overlap(f_pump)?;
    Ok(table.polarization_factor * g0 * (f_pump / table.reference_frequency_hz) * (a_ref / a_pump))
}

/// Spectral attenuation: ideal flat or the parametric model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossModel {
    Flat {
        alpha_db_km: f64,
    },
    Parametric {
        #[serde(default)]
        params: LossModelParams,
    },
}

impl LossModel {
    /// Attenuation rate in 1/m at a frequency in Hz.
    pub fn alpha_per_m(&self, f_hz: f64) -> Result<f64> {
        match self {
            LossModel::Flat { alpha_db_km } => Ok(db_km_to_per_m(*alpha_db_km)),
            LossModel::Parametric { params } => {
                let lambda = frequency_to_wavelength_um(f_hz);
                Ok(db_km_to_per_m(loss_coefficient(params, lambda)?))
            }
        }
    }
}

/// Attenuation evaluated over a set of channel frequencies, in 1/m, in
/// channel order. This is what the solvers consume.
#[derive(Debug, Clone, PartialEq)]
pub struct LossProfile {
    pub alpha_per_m: Vec<f64>,
}

impl LossProfile {
    pub fn evaluate(model: &LossModel, frequencies_hz: &[f64]) -> Result<Self> {
        let alpha_per_m = frequencies_hz
            .iter()
            .map(|&f| model.alpha_per_m(f))
            .collect::<Result<Vec<_>>>()?;
        Ok(LossProfile { alpha_per_m })
    }
}

/// One fiber span: length, attenuation, geometry and Raman data.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberSpan {
    pub length_m: f64,
    pub loss: LossModel,
    pub geometry: FiberGeometry,
    pub raman: RamanGainTable,
}

impl FiberSpan {
    pub fn new(length_m: f64, loss: LossModel, geometry: FiberGeometry, raman: RamanGainTable) -> Result<Self> {
        if !(length_m >= 0.0) || !length_m.is_finite() {
            return Err(Error::InvalidInput(format!(
                "span length must be finite and non-negative, got {length_m} m"
            )));
        }
        Ok(FiberSpan {
            length_m,
            loss,
            geometry,
            raman,
        })
    }
}
