//! Unit conventions and conversions.
//!
//! Everything internal runs in SI: frequencies in Hz, lengths in m, powers in
//! W, attenuation in 1/m (field-intensity rate, i.e. P(z) = P(0)·e^(−αz)).
//! Decibel and THz/km forms appear only at I/O boundaries (config files, CSV,
//! reports), and the conversions live here so every boundary agrees.

pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// 10·log10(e), the dB-per-neper scale factor.
pub const DB_PER_NEPER: f64 = 4.342944819032518;

#[inline]
pub fn thz_to_hz(f_thz: f64) -> f64 {
    f_thz * 1e12
}

#[inline]
pub fn hz_to_thz(f_hz: f64) -> f64 {
    f_hz * 1e-12
}

#[inline]
pub fn km_to_m(z_km: f64) -> f64 {
    z_km * 1e3
}

#[inline]
pub fn m_to_km(z_m: f64) -> f64 {
    z_m * 1e-3
}

/// Vacuum wavelength in µm for a frequency in Hz.
#[inline]
pub fn frequency_to_wavelength_um(f_hz: f64) -> f64 {
    SPEED_OF_LIGHT_M_S / f_hz * 1e6
}

/// Attenuation in dB/km to the intensity rate in 1/m.
#[inline]
pub fn db_km_to_per_m(alpha_db_km: f64) -> f64 {
    alpha_db_km / DB_PER_NEPER * 1e-3
}

/// Intensity attenuation rate in 1/m to dB/km.
#[inline]
pub fn per_m_to_db_km(alpha_per_m: f64) -> f64 {
    alpha_per_m * DB_PER_NEPER * 1e3
}

#[inline]
pub fn dbm_to_w(p_dbm: f64) -> f64 {
    1e-3 * 10f64.powf(p_dbm / 10.0)
}

#[inline]
pub fn w_to_dbm(p_w: f64) -> f64 {
    10.0 * (p_w * 1e3).log10()
}

#[inline]
pub fn db_to_linear(x_db: f64) -> f64 {
    10f64.powf(x_db / 10.0)
}

#[inline]
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn db_per_neper_matches_definition() {
        assert_relative_eq!(DB_PER_NEPER, 10.0 * std::f64::consts::E.log10(), epsilon = 1e-15);
    }

    #[test]
    fn flat_loss_conversion_is_exact() {
        // 0.2 dB/km, the ideal-fiber setting used throughout.
        assert_relative_eq!(db_km_to_per_m(0.2), 4.605170185988092e-5, epsilon = 1e-19);
        assert_relative_eq!(per_m_to_db_km(db_km_to_per_m(0.2)), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn power_round_trip() {
        for p in [-40.0, -4.0, -1.0, 0.0, 2.0, 20.0] {
            assert_relative_eq!(w_to_dbm(dbm_to_w(p)), p, epsilon = 1e-12);
        }
        assert_relative_eq!(dbm_to_w(0.0), 1e-3, epsilon = 1e-18);
        assert_relative_eq!(dbm_to_w(-1.0), 0.7943282347242815e-3, epsilon = 1e-15);
    }

    #[test]
    fn wavelength_of_reference_frequency() {
        assert_relative_eq!(
            frequency_to_wavelength_um(206.185e12),
            1.4539974197929044,
            epsilon = 1e-12
        );
        assert_relative_eq!(frequency_to_wavelength_um(thz_to_hz(193.414489)), 1.55, epsilon = 1e-6);
    }
}
