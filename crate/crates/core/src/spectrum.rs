//! WDM comb construction over the multi-band U/L/C/S/E plan.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{dbm_to_w, hz_to_thz, thz_to_hz, w_to_dbm};

/// Standard slot width of the fixed grid, Hz.
pub const DEFAULT_SLOT_WIDTH_HZ: f64 = 75e9;
/// Symbol bandwidth carried by each channel (64 GBaud), Hz.
pub const DEFAULT_SYMBOL_BANDWIDTH_HZ: f64 = 64e9;

/// Central-frequency bounds of the standard bands, THz.
pub const STANDARD_BANDS_THZ: [(&str, f64, f64); 5] = [
    ("U", 180.710, 185.510),
    ("L", 186.010, 190.810),
    ("C", 191.310, 196.110),
    ("S", 196.610, 206.210),
    ("E", 206.810, 221.210),
];

/// One transmission band: a named range of central frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub name: String,
    pub lowest_hz: f64,
    pub highest_hz: f64,
}

impl Band {
    /// A degenerate band (lowest == highest) holds exactly one channel.
    pub fn new(name: impl Into<String>, lowest_hz: f64, highest_hz: f64) -> Result<Self> {
        if !(lowest_hz > 0.0) || !(highest_hz >= lowest_hz) {
            return Err(Error::InvalidInput(format!(
                "band bounds must satisfy 0 < lowest <= highest, got [{lowest_hz}, {highest_hz}] Hz"
            )));
        }
        Ok(Band {
            name: name.into(),
            lowest_hz,
            highest_hz,
        })
    }

    /// Look up one of the standard bands (U, L, C, S, E) by name.
    pub fn standard(name: &str) -> Result<Self> {
        STANDARD_BANDS_THZ
            .iter()
            .find(|(n, _, _)| n.eq_ignore_ascii_case(name))
            .map(|&(n, lo, hi)| Band {
                name: n.to_string(),
                lowest_hz: thz_to_hz(lo),
                highest_hz: thz_to_hz(hi),
            })
            .ok_or_else(|| Error::InvalidInput(format!("unknown band `{name}` (expected U, L, C, S or E)")))
    }

    /// All five standard bands, ascending in frequency.
    pub fn standard_plan() -> Vec<Band> {
        STANDARD_BANDS_THZ
            .iter()
            .map(|&(n, _, _)| Band::standard(n).unwrap())
            .collect()
    }
}

/// One WDM channel. `band` indexes into the comb's band list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub index: usize,
    pub frequency_hz: f64,
    pub symbol_bandwidth_hz: f64,
    pub power_w: f64,
    pub band: usize,
}

/// An ordered channel comb over one or more bands.
#[derive(Debug, Clone, PartialEq)]
pub struct WdmComb {
    pub bands: Vec<Band>,
    pub channels: Vec<Channel>,
    pub slot_width_hz: f64,
    total_power_w: f64,
}

/// How launch powers are assigned when building a comb.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LaunchSpec {
    /// Equal power per channel, dBm.
    Flat { power_dbm: f64 },
    /// Per-channel powers from a `frequency_THz,power_dBm` CSV file.
    Profile { path: std::path::PathBuf },
}

/// Lay channels on the slot grid of each band and apply the launch spec.
///
/// Channels sit at `lowest + k·slot` up to `highest` inclusive, so each band
/// carries `(highest − lowest)/slot + 1` channels; bounds that are not an
/// integer number of slots apart are rejected.
pub fn build_comb(bands: &[Band], slot_width_hz: f64, launch: &LaunchSpec) -> Result<WdmComb> {
    let comb = build_grid(bands, slot_width_hz)?;
    match launch {
        LaunchSpec::Flat { power_dbm } => Ok(flat_launch(&comb, *power_dbm)),
        LaunchSpec::Profile { path } => load_launch_profile(&comb, path),
    }
}

fn build_grid(bands: &[Band], slot_width_hz: f64) -> Result<WdmComb> {
    if bands.is_empty() {
        return Err(Error::InvalidInput("no bands given".into()));
    }
    if !(slot_width_hz > 0.0) {
        return Err(Error::InvalidInput(format!(
            "slot width must be positive, got {slot_width_hz} Hz"
        )));
    }
    // order-independent w.r.t. the caller's band ordering
    let mut sorted: Vec<Band> = bands.to_vec();
    sorted.sort_by(|a, b| a.lowest_hz.partial_cmp(&b.lowest_hz).unwrap());
    for w in sorted.windows(2) {
        let gap = w[1].lowest_hz - w[0].highest_hz;
        if gap <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "bands `{}` and `{}` overlap",
                w[0].name, w[1].name
            )));
        }
        if gap < slot_width_hz * (1.0 - 1e-9) {
            return Err(Error::InvalidInput(format!(
                "gap between bands `{}` and `{}` is narrower than one slot",
                w[0].name, w[1].name
            )));
        }
    }
    let mut channels = Vec::new();
    for (bi, band) in sorted.iter().enumerate() {
        let span = band.highest_hz - band.lowest_hz;
        let n_slots = span / slot_width_hz;
        let count = n_slots.round();
        if (n_slots - count).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "band `{}` width {span} Hz is not an integer number of {slot_width_hz} Hz slots",
                band.name
            )));
        }
        for k in 0..=(count as usize) {
            channels.push(Channel {
                index: channels.len(),
                frequency_hz: band.lowest_hz + k as f64 * slot_width_hz,
                symbol_bandwidth_hz: DEFAULT_SYMBOL_BANDWIDTH_HZ,
                power_w: 0.0,
                band: bi,
            });
        }
    }
    Ok(WdmComb {
        bands: sorted,
        channels,
        slot_width_hz,
        total_power_w: 0.0,
    })
}

/// Same comb with every channel at `10^(p_dbm/10)` mW.
pub fn flat_launch(comb: &WdmComb, power_dbm: f64) -> WdmComb {
    let mut out = comb.clone();
    let p = dbm_to_w(power_dbm);
    for ch in &mut out.channels {
        ch.power_w = p;
    }
    out.refresh_total();
    out
}

/// Same comb with powers taken from a `frequency_THz,power_dBm` CSV.
///
/// Every comb channel must be matched by exactly one row (within half a
/// slot); rows matching no channel, duplicate matches and unmatched channels
/// are all reported together.
pub fn load_launch_profile(comb: &WdmComb, path: &Path) -> Result<WdmComb> {
    let label = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::ProfileMismatch(format!("{label}: {e}")))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| Error::ProfileMismatch(format!("{label}: {e}")))?;
        let got: Vec<&str> = headers.iter().collect();
        if got != ["frequency_THz", "power_dBm"] {
            return Err(Error::ProfileMismatch(format!(
                "{label}: header must be `frequency_THz,power_dBm`, got `{}`",
                got.join(",")
            )));
        }
    }
    let mut out = comb.clone();
    let mut matched = vec![false; out.channels.len()];
    let mut problems: Vec<String> = Vec::new();
    for (ri, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::ProfileMismatch(format!("{label}: {e}")))?;
        let parse = |i: usize, what: &str| -> Result<f64> {
            record
                .get(i)
                .and_then(|t| t.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::ProfileMismatch(format!("{label} row {}: bad {what}", ri + 2)))
        };
        let f_hz = thz_to_hz(parse(0, "frequency")?);
        let p_dbm = parse(1, "power")?;
        let half_slot = 0.5 * out.slot_width_hz;
        let hit = out
            .channels
            .iter()
            .position(|c| (c.frequency_hz - f_hz).abs() <= half_slot);
        match hit {
            Some(i) if matched[i] => {
                problems.push(format!("duplicate row for channel at {} THz", hz_to_thz(out.channels[i].frequency_hz)));
            }
            Some(i) => {
                matched[i] = true;
                out.channels[i].power_w = dbm_to_w(p_dbm);
            }
            None => problems.push(format!("row at {} THz matches no channel", hz_to_thz(f_hz))),
        }
    }
    for (i, m) in matched.iter().enumerate() {
        if !m {
            problems.push(format!(
                "channel at {} THz has no profile entry",
                hz_to_thz(out.channels[i].frequency_hz)
            ));
        }
    }
    if !problems.is_empty() {
        return Err(Error::ProfileMismatch(format!("{label}: {}", problems.join("; "))));
    }
    out.refresh_total();
    Ok(out)
}

/// Write the comb's launch powers in the profile CSV format.
///
/// The dBm column is nudged by ulps until the dBm→W conversion inverts it,
/// so [`load_launch_profile`] recovers the stored powers bit-exactly
/// whenever an exact preimage exists (else within 1 ulp, and a second
/// write/load cycle is then a fixed point).
pub fn write_launch_profile(comb: &WdmComb, path: &Path) -> Result<()> {
    let label = path.display().to_string();
    let mut buf = String::from("frequency_THz,power_dBm\n");
    for ch in &comb.channels {
        let dbm = invertible_dbm(ch.power_w);
        buf.push_str(&format!("{},{}\n", hz_to_thz(ch.frequency_hz), dbm));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(label.clone(), e))?;
    f.write_all(buf.as_bytes()).map_err(|e| Error::io(label, e))?;
    Ok(())
}

/// A dBm float whose conversion back to watts reproduces `power_w` exactly.
fn invertible_dbm(power_w: f64) -> f64 {
    let nominal = w_to_dbm(power_w);
    if dbm_to_w(nominal) == power_w {
        return nominal;
    }
    let mut up = nominal;
    let mut down = nominal;
    for _ in 0..64 {
        up = next_after_up(up);
        if dbm_to_w(up) == power_w {
            return up;
        }
        down = next_after_down(down);
        if dbm_to_w(down) == power_w {
            return down;
        }
    }
    // zero/subnormal powers have no finite preimage; fall back to nominal
    nominal
}

fn next_after_up(x: f64) -> f64 {
    f64::from_bits(if x >= 0.0 { x.to_bits() + 1 } else { x.to_bits() - 1 })
}

fn next_after_down(x: f64) -> f64 {
    f64::from_bits(if x > 0.0 { x.to_bits() - 1 } else { x.to_bits() + 1 })
}

impl WdmComb {
    pub(crate) fn refresh_total(&mut self) {
        self.total_power_w = self.channels.iter().map(|c| c.power_w).sum();
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn total_power_w(&self) -> f64 {
        self.total_power_w
    }

    pub fn total_power_dbm(&self) -> f64 {
        w_to_dbm(self.total_power_w)
    }

    pub fn frequencies_hz(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.frequency_hz).collect()
    }

    pub fn powers_w(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.power_w).collect()
    }

    pub fn band_name(&self, ch: &Channel) -> &str {
        &self.bands[ch.band].name
    }

    /// Keep only the channels within `bandwidth_hz` of the lowest channel
    /// (used by the bandwidth sweep). Band list is preserved; indices are
    /// re-assigned.
    pub fn truncate_to_bandwidth(&self, bandwidth_hz: f64) -> Result<WdmComb> {
        let f0 = self
            .channels
            .first()
            .map(|c| c.frequency_hz)
            .ok_or_else(|| Error::InvalidInput("empty comb".into()))?;
        let mut out = self.clone();
        out.channels.retain(|c| c.frequency_hz - f0 <= bandwidth_hz * (1.0 + 1e-12));
        for (i, ch) in out.channels.iter_mut().enumerate() {
            ch.index = i;
        }
        if out.channels.is_empty() {
            return Err(Error::InvalidInput("bandwidth keeps no channels".into()));
        }
        out.refresh_total();
        Ok(out)
    }

    /// Same comb with every launch power multiplied by `scale`.
    pub fn scaled_powers(&self, scale: f64) -> WdmComb {
        let mut out = self.clone();
        for ch in &mut out.channels {
            ch.power_w *= scale;
        }
        out.refresh_total();
        out
    }

    /// Same comb with every channel carrying the given symbol bandwidth.
    pub fn with_symbol_bandwidth(&self, symbol_bandwidth_hz: f64) -> Result<WdmComb> {
        if !(symbol_bandwidth_hz > 0.0 && symbol_bandwidth_hz.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "symbol bandwidth must be positive, got {symbol_bandwidth_hz} Hz"
            )));
        }
        let mut out = self.clone();
        for ch in &mut out.channels {
            ch.symbol_bandwidth_hz = symbol_bandwidth_hz;
        }
        Ok(out)
    }

    /// Validate the structural invariants (ascending, spaced, positive).
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::InvalidInput("comb has no channels".into()));
        }
        for w in self.channels.windows(2) {
            if w[1].frequency_hz - w[0].frequency_hz < self.slot_width_hz * (1.0 - 1e-9) {
                return Err(Error::InvalidInput(format!(
                    "channels at {} and {} THz closer than the slot width",
                    hz_to_thz(w[0].frequency_hz),
                    hz_to_thz(w[1].frequency_hz)
                )));
            }
        }
        for c in &self.channels {
            if !(c.power_w >= 0.0) || !c.power_w.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "channel {} has invalid power {}",
                    c.index, c.power_w
                )));
            }
            if !(c.symbol_bandwidth_hz > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "channel {} has non-positive symbol bandwidth",
                    c.index
                )));
            }
        }
        let sum: f64 = self.channels.iter().map(|c| c.power_w).sum();
        if sum > 0.0 && ((sum - self.total_power_w) / sum).abs() > 1e-12 {
            return Err(Error::InvalidInput("cached total power out of date".into()));
        }
        Ok(())
    }
}
