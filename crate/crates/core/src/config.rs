//! Scenario configuration: JSON documents with defaults for every field,
//! dotted-path command-line overrides, validation with field-path
//! diagnostics, and resolution into ready-to-run comb/span objects.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fiber::{FiberGeometry, FiberSpan, GainConvention, LossModel, RamanGainTable};
use crate::numerical::Scheme;
use crate::spectrum::{build_comb, Band, LaunchSpec, WdmComb};
use crate::units::{km_to_m, thz_to_hz};

fn cfg_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

/// A band either by standard name ("U".."E") or with explicit bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BandSpec {
    Named(String),
    Custom {
        name: String,
        lowest_thz: f64,
        highest_thz: f64,
    },
}

impl BandSpec {
    fn resolve(&self, path: &str) -> Result<Band> {
        match self {
            BandSpec::Named(name) => {
                Band::standard(name).map_err(|e| cfg_err(path, e.to_string()))
            }
            BandSpec::Custom {
                name,
                lowest_thz,
                highest_thz,
            } => Band::new(name.clone(), thz_to_hz(*lowest_thz), thz_to_hz(*highest_thz))
                .map_err(|e| cfg_err(path, e.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiberConfig {
    pub span_length_km: f64,
    pub loss: LossModel,
    /// Two-column Raman table file; the bundled dataset when absent.
    pub raman_table: Option<PathBuf>,
    /// Pump frequency the table was measured at; required with `raman_table`.
    pub reference_frequency_thz: Option<f64>,
    pub polarization_factor: f64,
    /// Mirror the gain table antisymmetrically (drops the phonon-loss
    /// asymmetry so that pairwise transfer conserves photon-count-weighted
    /// power; used in conservation studies).
    pub symmetric_gain: bool,
    pub geometry: FiberGeometry,
}

impl Default for FiberConfig {
    fn default() -> Self {
        FiberConfig {
            span_length_km: 70.0,
            loss: LossModel::Flat { alpha_db_km: 0.2 },
            raman_table: None,
            reference_frequency_thz: None,
            polarization_factor: 1.0,
            symmetric_gain: false,
            geometry: FiberGeometry::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub bands: Vec<BandSpec>,
    pub slot_width_ghz: f64,
    pub symbol_bandwidth_ghz: f64,
    pub launch: LaunchSpec,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            bands: ["U", "L", "C", "S", "E"]
                .iter()
                .map(|n| BandSpec::Named(n.to_string()))
                .collect(),
            slot_width_ghz: 75.0,
            symbol_bandwidth_ghz: 64.0,
            launch: LaunchSpec::Flat { power_dbm: -1.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    Numerical,
    Perturbative,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub mode: SolverMode,
    pub scheme: Scheme,
    /// Reference-integrator step, m.
    pub dz_m: f64,
    /// Spacing of recorded z samples, m (None: ~128 samples).
    pub record_dz_m: Option<f64>,
    /// Perturbative quadrature step, m.
    pub quadrature_step_m: f64,
    /// Order-selection target, dB.
    pub tolerance_db: f64,
    pub max_order: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mode: SolverMode::Both,
            scheme: Scheme::Rk4Log,
            dz_m: 0.8,
            record_dz_m: None,
            quadrature_step_m: 1000.0,
            tolerance_db: 0.1,
            max_order: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub write_profiles: bool,
    pub plots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("out"),
            write_profiles: true,
            plots: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub fiber: FiberConfig,
    pub spectrum: SpectrumConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

/// The config materialized into solver inputs.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Fully resolved config: defaults filled in, input paths (launch
    /// profile, gain table) absolutized against the config's directory.
    /// The output directory is kept as written — it belongs to the
    /// invocation, not the scenario.
    pub config: ScenarioConfig,
    pub comb: WdmComb,
    pub span: FiberSpan,
    pub convention: GainConvention,
}

impl ScenarioConfig {
    /// Parse a JSON document; unknown or ill-typed fields are reported with
    /// serde's field diagnostics.
    pub fn from_document(doc: Value) -> Result<Self> {
        serde_json::from_value(doc).map_err(|e| cfg_err("<document>", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let doc: Value =
            serde_json::from_str(&text).map_err(|e| cfg_err(&path.display().to_string(), e.to_string()))?;
        let cfg = Self::from_document(doc)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load, apply `key.path=value` overrides, re-validate.
    pub fn load_with_overrides(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut doc: Value =
            serde_json::from_str(&text).map_err(|e| cfg_err(&path.display().to_string(), e.to_string()))?;
        apply_overrides(&mut doc, overrides)?;
        let cfg = Self::from_document(doc)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.fiber;
        if !(f.span_length_km.is_finite() && f.span_length_km >= 0.0) {
            return Err(cfg_err(
                "fiber.span_length_km",
                format!("must be a finite non-negative length, got {}", f.span_length_km),
            ));
        }
        if let LossModel::Flat { alpha_db_km } = f.loss {
            if !(alpha_db_km.is_finite() && alpha_db_km >= 0.0) {
                return Err(cfg_err(
                    "fiber.loss.alpha_db_km",
                    format!("must be finite and non-negative, got {alpha_db_km}"),
                ));
            }
        }
        if !(f.polarization_factor > 0.0 && f.polarization_factor <= 1.0) {
            return Err(cfg_err(
                "fiber.polarization_factor",
                format!("must lie in (0, 1], got {}", f.polarization_factor),
            ));
        }
        if f.raman_table.is_some() {
            match f.reference_frequency_thz {
                Some(v) if v > 0.0 && v.is_finite() => {}
                Some(v) => {
                    return Err(cfg_err(
                        "fiber.reference_frequency_thz",
                        format!("must be a positive frequency, got {v}"),
                    ))
                }
                None => {
                    return Err(cfg_err(
                        "fiber.reference_frequency_thz",
                        "required when fiber.raman_table is set",
                    ))
                }
            }
        }
        let g = &f.geometry;
        if !(g.core_radius_um > 0.0) {
            return Err(cfg_err("fiber.geometry.core_radius_um", "must be positive"));
        }
        if !(g.cladding_index > 1.0) {
            return Err(cfg_err("fiber.geometry.cladding_index", "must exceed 1"));
        }
        if !(g.relative_index_step > 0.0 && g.relative_index_step < 1.0) {
            return Err(cfg_err("fiber.geometry.relative_index_step", "must lie in (0, 1)"));
        }

        let s = &self.spectrum;
        if s.bands.is_empty() {
            return Err(cfg_err("spectrum.bands", "at least one band is required"));
        }
        for (i, b) in s.bands.iter().enumerate() {
            b.resolve(&format!("spectrum.bands.{i}"))?;
        }
        if !(s.slot_width_ghz > 0.0 && s.slot_width_ghz.is_finite()) {
            return Err(cfg_err("spectrum.slot_width_ghz", "must be positive"));
        }
        if !(s.symbol_bandwidth_ghz > 0.0 && s.symbol_bandwidth_ghz <= s.slot_width_ghz) {
            return Err(cfg_err(
                "spectrum.symbol_bandwidth_ghz",
                format!(
                    "must be positive and fit the {} GHz slot, got {}",
                    s.slot_width_ghz, s.symbol_bandwidth_ghz
                ),
            ));
        }
        match &s.launch {
            LaunchSpec::Flat { power_dbm } => {
                if !power_dbm.is_finite() {
                    return Err(cfg_err("spectrum.launch.power_dbm", "must be finite"));
                }
            }
            LaunchSpec::Profile { path } => {
                if path.as_os_str().is_empty() {
                    return Err(cfg_err("spectrum.launch.path", "must not be empty"));
                }
            }
        }

        let sv = &self.solver;
        if !(sv.dz_m > 0.0 && sv.dz_m.is_finite()) {
            return Err(cfg_err("solver.dz_m", format!("must be positive, got {}", sv.dz_m)));
        }
        if let Some(r) = sv.record_dz_m {
            if !(r > 0.0 && r.is_finite()) {
                return Err(cfg_err("solver.record_dz_m", format!("must be positive, got {r}")));
            }
        }
        if !(sv.quadrature_step_m > 0.0 && sv.quadrature_step_m.is_finite()) {
            return Err(cfg_err(
                "solver.quadrature_step_m",
                format!("must be positive, got {}", sv.quadrature_step_m),
            ));
        }
        if !(sv.tolerance_db > 0.0 && sv.tolerance_db.is_finite()) {
            return Err(cfg_err(
                "solver.tolerance_db",
                format!("must be positive, got {}", sv.tolerance_db),
            ));
        }
        if sv.max_order < 1 {
            return Err(cfg_err("solver.max_order", "must be at least 1"));
        }

        if self.output.directory.as_os_str().is_empty() {
            return Err(cfg_err("output.directory", "must not be empty"));
        }
        Ok(())
    }

    /// Build the comb and span. Relative paths (Raman table, launch profile)
    /// are taken from `base_dir`, typically the config file's directory; the
    /// returned copy of the config carries them absolutized so that a report
    /// embedding it reproduces the identical run from anywhere.
    pub fn resolve(&self, base_dir: &Path) -> Result<Scenario> {
        self.validate()?;
        let mut resolved = self.clone();
        let absolutize = |p: &Path| -> PathBuf {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base_dir.join(p)
            }
        };

        let bands = self
            .spectrum
            .bands
            .iter()
            .enumerate()
            .map(|(i, b)| b.resolve(&format!("spectrum.bands.{i}")))
            .collect::<Result<Vec<Band>>>()?;
        let launch = match &self.spectrum.launch {
            LaunchSpec::Flat { power_dbm } => LaunchSpec::Flat { power_dbm: *power_dbm },
            LaunchSpec::Profile { path } => LaunchSpec::Profile { path: absolutize(path) },
        };
        resolved.spectrum.launch = launch.clone();
        let comb = build_comb(&bands, self.spectrum.slot_width_ghz * 1e9, &launch)?
            .with_symbol_bandwidth(self.spectrum.symbol_bandwidth_ghz * 1e9)?;

        let mut table = match &self.fiber.raman_table {
            Some(path) => {
                let abs = absolutize(path);
                resolved.fiber.raman_table = Some(abs.clone());
                let reference_hz = thz_to_hz(self.fiber.reference_frequency_thz.unwrap());
                RamanGainTable::from_file(&abs, reference_hz)?
            }
            None => RamanGainTable::bundled(),
        };
        table.polarization_factor = self.fiber.polarization_factor;

        let span = FiberSpan::new(
            km_to_m(self.fiber.span_length_km),
            self.fiber.loss.clone(),
            self.fiber.geometry,
            table,
        )?;
        let convention = if self.fiber.symmetric_gain {
            GainConvention::Symmetrized
        } else {
            GainConvention::Tabulated
        };
        Ok(Scenario {
            config: resolved,
            comb,
            span,
            convention,
        })
    }
}

/// Apply `key.path=value` assignments to a JSON document. Values parse as
/// JSON with a fallback to plain strings, so `solver.dz_m=0.4` and
/// `spectrum.bands=["C","L"]` and `solver.scheme=rk4-log` all work.
/// Numeric segments index into arrays.
pub fn apply_overrides(doc: &mut Value, overrides: &[String]) -> Result<()> {
    for ov in overrides {
        let (key, raw) = ov
            .split_once('=')
            .ok_or_else(|| cfg_err(ov, "override must look like key.path=value"))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(cfg_err(ov, "override key is empty"));
        }
        let value: Value = serde_json::from_str(raw.trim())
            .unwrap_or_else(|_| Value::String(raw.trim().to_string()));
        let segments: Vec<&str> = key.split('.').collect();
        let mut cursor = &mut *doc;
        for (i, seg) in segments.iter().enumerate() {
            let here = segments[..=i].join(".");
            let last = i + 1 == segments.len();
            let node = cursor;
            if let Ok(idx) = seg.parse::<usize>() {
                let arr = match node {
                    Value::Array(arr) => arr,
                    _ => return Err(cfg_err(&here, "parent is not an array")),
                };
                if idx >= arr.len() {
                    return Err(cfg_err(&here, format!("index {idx} out of bounds (len {})", arr.len())));
                }
                if last {
                    arr[idx] = value.clone();
                    break;
                }
                cursor = &mut arr[idx];
            } else {
                let obj = match node {
                    Value::Object(obj) => obj,
                    _ => return Err(cfg_err(&here, "parent is not an object")),
                };
                if last {
                    obj.insert(seg.to_string(), value.clone());
                    break;
                }
                cursor = obj
                    .entry(seg.to_string())
                    .or_insert_with(|| Value::Object(Default::default()));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::write_launch_profile;
    use serde_json::json;

    #[test]
    fn default_config_validates_and_round_trips() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn empty_document_fills_defaults() {
        let cfg = ScenarioConfig::from_document(json!({})).unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        let cfg = ScenarioConfig::from_document(json!({"solver": {"dz_m": 0.4}})).unwrap();
        assert_eq!(cfg.solver.dz_m, 0.4);
        assert_eq!(cfg.solver.max_order, 10);
    }

    #[test]
    fn unknown_fields_are_rejected_by_name() {
        let err = ScenarioConfig::from_document(json!({"solver": {"dzm": 0.4}})).unwrap_err();
        assert!(err.to_string().contains("dzm"), "{err}");
    }

    #[test]
    fn overrides_reach_nested_fields_and_arrays() {
        let mut doc = json!({});
        apply_overrides(
            &mut doc,
            &[
                "solver.dz_m=0.4".to_string(),
                "spectrum.bands=[\"C\",\"L\"]".to_string(),
                "spectrum.launch.mode=flat".to_string(),
                "spectrum.launch.power_dbm=2".to_string(),
                "output.plots=false".to_string(),
            ],
        )
        .unwrap();
        apply_overrides(&mut doc, &["spectrum.bands.1=\"S\"".to_string()]).unwrap();
        let cfg = ScenarioConfig::from_document(doc).unwrap();
        assert_eq!(cfg.solver.dz_m, 0.4);
        assert_eq!(
            cfg.spectrum.bands,
            vec![BandSpec::Named("C".into()), BandSpec::Named("S".into())]
        );
        assert_eq!(cfg.spectrum.launch, LaunchSpec::Flat { power_dbm: 2.0 });
        assert!(!cfg.output.plots);
    }

    #[test]
    fn override_diagnostics_name_the_failing_path() {
        let mut doc = json!({});
        let err = apply_overrides(&mut doc, &["solver.dz_m".to_string()]).unwrap_err();
        assert!(err.to_string().contains("key.path=value"), "{err}");
        let mut doc = json!({"spectrum": {"bands": ["C"]}});
        let err = apply_overrides(&mut doc, &["spectrum.bands.7=\"L\"".to_string()]).unwrap_err();
        assert!(err.to_string().contains("spectrum.bands.7"), "{err}");
    }

    #[test]
    fn validation_errors_carry_dotted_paths() {
        let mut cfg = ScenarioConfig::default();
        cfg.solver.dz_m = -1.0;
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("solver.dz_m"), "{err}");

        let mut cfg = ScenarioConfig::default();
        cfg.fiber.raman_table = Some(PathBuf::from("table.txt"));
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("fiber.reference_frequency_thz"), "{err}");

        let mut cfg = ScenarioConfig::default();
        cfg.spectrum.bands = vec![BandSpec::Named("Q".into())];
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("spectrum.bands.0"), "{err}");

        let mut cfg = ScenarioConfig::default();
        cfg.spectrum.symbol_bandwidth_ghz = 80.0; // wider than the slot
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn resolve_builds_the_full_plan() {
        let scenario = ScenarioConfig::default().resolve(Path::new(".")).unwrap();
        assert_eq!(scenario.comb.channel_count(), 517);
        assert_eq!(scenario.span.length_m, 70_000.0);
        assert_eq!(scenario.convention, GainConvention::Tabulated);
        assert_eq!(scenario.comb.channels[0].symbol_bandwidth_hz, 64e9);
    }

    #[test]
    fn resolve_honors_custom_bands_and_symbol_bandwidth() {
        let mut cfg = ScenarioConfig::default();
        cfg.spectrum.bands = vec![BandSpec::Custom {
            name: "probe".into(),
            lowest_thz: 192.0,
            highest_thz: 192.3,
        }];
        cfg.spectrum.symbol_bandwidth_ghz = 32.0;
        cfg.fiber.symmetric_gain = true;
        let scenario = cfg.resolve(Path::new(".")).unwrap();
        assert_eq!(scenario.comb.channel_count(), 5);
        assert_eq!(scenario.comb.channels[0].symbol_bandwidth_hz, 32e9);
        assert_eq!(scenario.convention, GainConvention::Symmetrized);
    }

    #[test]
    fn resolve_reads_launch_profiles_relative_to_base_dir() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ScenarioConfig::default();
        cfg.spectrum.bands = vec![BandSpec::Named("C".into())];

        // write a profile from a flat comb, then load it via the config
        let flat = cfg.resolve(dir.path()).unwrap();
        write_launch_profile(&flat.comb, &dir.path().join("launch.csv")).unwrap();
        cfg.spectrum.launch = LaunchSpec::Profile {
            path: PathBuf::from("launch.csv"),
        };
        let scenario = cfg.resolve(dir.path()).unwrap();
        assert_eq!(scenario.comb.powers_w(), flat.comb.powers_w());
        // the resolved copy carries the absolute path
        match &scenario.config.spectrum.launch {
            LaunchSpec::Profile { path } => assert!(path.is_absolute()),
            other => panic!("unexpected launch {other:?}"),
        }
    }

    #[test]
    fn polarization_factor_scales_the_table() {
        let mut cfg = ScenarioConfig::default();
        cfg.fiber.polarization_factor = 0.5;
        let scenario = cfg.resolve(Path::new(".")).unwrap();
        assert_eq!(scenario.span.raman.polarization_factor, 0.5);
    }
}
