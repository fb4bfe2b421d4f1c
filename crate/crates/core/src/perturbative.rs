//! Perturbative solution of the SRS coupled equations.
//!
//! The power of channel ch is written P_ch·e^(−α_ch z)·exp(Σ_k Γ⁽ᵏ⁾_ch(z)),
//! where the orders obey the recursion
//!
//!   Γ⁽ᵏ⁾_ch(z) = ∫₀^z dz′ Σ_ch′ g_R(f_ch,f_ch′)·P_ch′ e^(−α_ch′ z′)
//!                 · Σ_{partitions of k−1} Π_j (1/n_j!)·(Γ^(k_j)_ch′(z′))^(n_j)
//!
//! Order 1 has a closed form in the effective length; order 2 has a
//! closed-form z-kernel; higher orders are integrated on a coarse uniform
//! quadrature grid (the integrand is smooth on the scale of tens of km).

use std::path::Path;

use crate::coupling::CouplingMatrix;
use crate::error::{Error, Result};
use crate::fiber::{FiberSpan, GainConvention, LossProfile};
use crate::numerical::{evolution_from_columns, interp_log_power, PowerEvolution};
use crate::spectrum::WdmComb;
use crate::units::{hz_to_thz, m_to_km, w_to_dbm};

/// Λ(z; α) = ∫₀^z e^(−αu) du. A series branch below α·z = 1e−6 keeps the
/// α → 0 limit (Λ = z) free of cancellation.
pub fn effective_length(alpha_per_m: f64, z_m: f64) -> f64 {
    let x = alpha_per_m * z_m;
    if x.abs() < 1e-6 {
        z_m * (1.0 - 0.5 * x + x * x / 6.0)
    } else {
        -f64::exp_m1(-x) / alpha_per_m
    }
}

/// Λ(z; α_ch) per grid point and channel; layout `[zi·n + ch]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveLengthProfile {
    pub z_grid_m: Vec<f64>,
    pub lambda_m: Vec<f64>,
    n_ch: usize,
}

impl EffectiveLengthProfile {
    pub fn evaluate(alpha_per_m: &[f64], z_grid_m: &[f64]) -> Self {
        let n = alpha_per_m.len();
        let mut lambda_m = Vec::with_capacity(n * z_grid_m.len());
        for &z in z_grid_m {
            for &a in alpha_per_m {
                lambda_m.push(effective_length(a, z));
            }
        }
        EffectiveLengthProfile {
            z_grid_m: z_grid_m.to_vec(),
            lambda_m,
            n_ch: n,
        }
    }

    pub fn at(&self, zi: usize) -> &[f64] {
        &self.lambda_m[zi * self.n_ch..(zi + 1) * self.n_ch]
    }
}

/// Uniform grid 0 = z_0 < … < z_N = length with spacing ≤ `step_m`.
pub fn build_quadrature_grid(length_m: f64, step_m: f64) -> Result<Vec<f64>> {
    if !(length_m > 0.0) || !(step_m > 0.0) {
        return Err(Error::InvalidInput(format!(
            "quadrature needs positive span and step, got {length_m} m / {step_m} m"
        )));
    }
    let intervals = (length_m / step_m - 1e-9).ceil().max(1.0) as usize;
    if intervals < 2 {
        return Err(Error::QuadratureTooCoarse {
            points: intervals + 1,
            span_m: length_m,
            required: 3,
        });
    }
    let h = length_m / intervals as f64;
    let mut grid: Vec<f64> = (0..intervals).map(|i| i as f64 * h).collect();
    grid.push(length_m);
    Ok(grid)
}

/// All computed orders Γ⁽ᵏ⁾_ch(z) on a shared z grid; each order is stored
/// `[zi·n + ch]`. Γ⁽ᵏ⁾(0) = 0 for every order by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbativeOrders {
    pub comb: WdmComb,
    pub z_grid_m: Vec<f64>,
    pub alpha_per_m: Vec<f64>,
    orders: Vec<Vec<f64>>,
}

impl PerturbativeOrders {
    /// Seed with the closed-form first order
    /// Γ⁽¹⁾_ch(z) = Σ_ch′ g(ch,ch′)·P_ch′·Λ(z; α_ch′).
    pub fn first_order(
        comb: &WdmComb,
        alpha_per_m: &[f64],
        coupling: &CouplingMatrix,
        z_grid_m: &[f64],
    ) -> Result<Self> {
        let n = comb.channel_count();
        if alpha_per_m.len() != n || coupling.n() != n {
            return Err(Error::CombMismatch(format!(
                "comb has {n} channels but loss/coupling carry {}/{}",
                alpha_per_m.len(),
                coupling.n()
            )));
        }
        if z_grid_m.is_empty() || z_grid_m[0] != 0.0 {
            return Err(Error::InvalidInput("z grid must start at 0".into()));
        }
        for w in z_grid_m.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidInput("z grid must be strictly ascending".into()));
            }
        }
        let launch = comb.powers_w();
        let mut gamma1 = vec![0.0; n * z_grid_m.len()];
        let mut q = vec![0.0; n];
        for (zi, &z) in z_grid_m.iter().enumerate() {
            for ch in 0..n {
                q[ch] = launch[ch] * effective_length(alpha_per_m[ch], z);
            }
            coupling.accumulate(&q, &mut gamma1[zi * n..(zi + 1) * n]);
        }
        let out = PerturbativeOrders {
            comb: comb.clone(),
            z_grid_m: z_grid_m.to_vec(),
            alpha_per_m: alpha_per_m.to_vec(),
            orders: vec![gamma1],
        };
        out.check_finite(1)?;
        Ok(out)
    }

    pub fn max_order(&self) -> usize {
        self.orders.len()
    }

    pub fn channel_count(&self) -> usize {
        self.comb.channel_count()
    }

    /// Γ⁽ᵏ⁾ over the whole grid, layout `[zi·n + ch]`; `k` is 1-based.
    pub fn gamma(&self, k: usize) -> &[f64] {
        assert!(k >= 1 && k <= self.orders.len(), "order {k} not computed");
        &self.orders[k - 1]
    }

    /// Γ⁽ᵏ⁾ for all channels at grid index `zi`.
    pub fn gamma_at(&self, k: usize, zi: usize) -> &[f64] {
        let n = self.channel_count();
        &self.gamma(k)[zi * n..(zi + 1) * n]
    }

    /// max over channels and grid points of |Γ⁽ᵏ⁾|.
    pub fn max_abs_gamma(&self, k: usize) -> f64 {
        self.gamma(k).iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Per-order max |Γ⁽ᵏ⁾| for k = 1…max_order (report material).
    pub fn per_order_max_abs(&self) -> Vec<f64> {
        (1..=self.max_order()).map(|k| self.max_abs_gamma(k)).collect()
    }

    /// Compute order k = max_order + 1 by composite trapezoid over the grid.
    pub fn push_next_order(&mut self, coupling: &CouplingMatrix) -> Result<()> {
        let n = self.channel_count();
        let nz = self.z_grid_m.len();
        if coupling.n() != n {
            return Err(Error::CombMismatch(format!(
                "coupling carries {} channels, orders carry {n}",
                coupling.n()
            )));
        }
        if nz < 3 {
            return Err(Error::QuadratureTooCoarse {
                points: nz,
                span_m: *self.z_grid_m.last().unwrap_or(&0.0),
                required: 3,
            });
        }
        let k = self.max_order() + 1;
        let parts = integer_partitions(k - 1);
        let coeffs: Vec<f64> = parts
            .iter()
            .map(|p| p.iter().map(|&(_, m)| 1.0 / factorial(m)).product())
            .collect();
        let launch = self.comb.powers_w();

        let mut gamma_k = vec![0.0; n * nz];
        let mut w = vec![0.0; n];
        let mut q = vec![0.0; n];
        let mut integrand = vec![0.0; n];
        let mut prev = vec![0.0; n];
        for zi in 0..nz {
            let z = self.z_grid_m[zi];
            w.fill(0.0);
            for (pi, part) in parts.iter().enumerate() {
                if part.is_empty() {
                    for v in w.iter_mut() {
                        *v += coeffs[pi];
                    }
                    continue;
                }
                for ch in 0..n {
                    let mut t = coeffs[pi];
                    for &(order, mult) in part {
                        t *= self.orders[order - 1][zi * n + ch].powi(mult as i32);
                    }
                    w[ch] += t;
                }
            }
            for ch in 0..n {
                q[ch] = launch[ch] * (-self.alpha_per_m[ch] * z).exp() * w[ch];
            }
            coupling.accumulate(&q, &mut integrand);
            if zi > 0 {
                let h = 0.5 * (z - self.z_grid_m[zi - 1]);
                for ch in 0..n {
                    gamma_k[zi * n + ch] = gamma_k[(zi - 1) * n + ch] + h * (prev[ch] + integrand[ch]);
                }
            }
            std::mem::swap(&mut prev, &mut integrand);
        }
        self.orders.push(gamma_k);
        self.check_finite(k)
    }

    /// Extend until `k_max` orders are available.
    pub fn extend_to(&mut self, coupling: &CouplingMatrix, k_max: usize) -> Result<()> {
        while self.max_order() < k_max {
            self.push_next_order(coupling)?;
        }
        Ok(())
    }

    fn check_finite(&self, k: usize) -> Result<()> {
        let n = self.channel_count();
        if let Some(bad) = self.gamma(k).iter().position(|v| !v.is_finite()) {
            let ch = bad % n;
            return Err(Error::NonFinite {
                channel: ch,
                frequency_thz: hz_to_thz(self.comb.channels[ch].frequency_hz),
                z_m: self.z_grid_m[bad / n],
            });
        }
        Ok(())
    }
}

/// Closed-form first order over a span (physical gain convention).
pub fn gamma_first_order(comb: &WdmComb, span: &FiberSpan, z_grid_m: &[f64]) -> Result<PerturbativeOrders> {
    let loss = LossProfile::evaluate(&span.loss, &comb.frequencies_hz())?;
    let coupling = CouplingMatrix::from_span(comb, span, GainConvention::Tabulated)?;
    PerturbativeOrders::first_order(comb, &loss.alpha_per_m, &coupling, z_grid_m)
}

/// One more order on top of `previous` (physical gain convention).
pub fn gamma_next_order(previous: PerturbativeOrders, span: &FiberSpan) -> Result<PerturbativeOrders> {
    let coupling = CouplingMatrix::from_span(&previous.comb, span, GainConvention::Tabulated)?;
    let mut orders = previous;
    orders.push_next_order(&coupling)?;
    Ok(orders)
}

/// Partitions of `m` as (part, multiplicity) pairs, parts descending;
/// `m = 0` yields the single empty partition.
pub(crate) fn integer_partitions(m: usize) -> Vec<Vec<(usize, usize)>> {
    fn rec(remaining: usize, max_part: usize, current: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if remaining == 0 {
            out.push(current.clone());
            return;
        }
        for part in (1..=remaining.min(max_part)).rev() {
            for mult in 1..=remaining / part {
                current.push((part, mult));
                rec(remaining - part * mult, part - 1, current, out);
                current.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(m, m, &mut Vec::new(), &mut out);
    out
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// ∫₀^z u·e^(−au) du with a series branch for small a·z.
fn int_u_exp(z: f64, a: f64) -> f64 {
    let x = a * z;
    if x.abs() < 1e-3 {
        z * z * 0.5 * (1.0 - 2.0 * x / 3.0 + x * x / 4.0 - x * x * x / 15.0 + x * x * x * x / 72.0)
    } else {
        (1.0 - (1.0 + x) * (-x).exp()) / (a * a)
    }
}

/// ∫₀^z u²·e^(−au) du with a series branch for small a·z.
fn int_u2_exp(z: f64, a: f64) -> f64 {
    let x = a * z;
    if x.abs() < 1e-2 {
        z * z * z / 3.0 * (1.0 - 3.0 * x / 4.0 + 3.0 * x * x / 10.0 - x * x * x / 12.0 + x * x * x * x / 56.0)
    } else {
        (2.0 - (2.0 + 2.0 * x + x * x) * (-x).exp()) / (a * a * a)
    }
}

/// Second-order z-kernel M(z; α′, α″) = ∫₀^z e^(−α′u)·Λ(u; α″) du.
///
/// For α″·z away from zero this reduces to (Λ(z;α′) − Λ(z;α′+α″))/α″; the
/// small-α″ branch expands Λ(u;α″) ≈ u − α″u²/2 to avoid the 0/0.
pub fn second_order_kernel(z_m: f64, alpha1_per_m: f64, alpha2_per_m: f64) -> f64 {
    if (alpha2_per_m * z_m).abs() < 1e-6 {
        int_u_exp(z_m, alpha1_per_m) - 0.5 * alpha2_per_m * int_u2_exp(z_m, alpha1_per_m)
    } else {
        (effective_length(alpha1_per_m, z_m) - effective_length(alpha1_per_m + alpha2_per_m, z_m)) / alpha2_per_m
    }
}

/// Closed-form Γ⁽²⁾ for all channels at a single z:
/// Σ_ch′ g(ch,ch′) P_ch′ Σ_ch″ g(ch′,ch″) P_ch″ · M(z; α_ch′, α_ch″).
pub fn second_order_analytic_prepared(
    comb: &WdmComb,
    alpha_per_m: &[f64],
    coupling: &CouplingMatrix,
    z_m: f64,
) -> Vec<f64> {
    let n = comb.channel_count();
    let p = comb.powers_w();
    let mut q = vec![0.0; n];
    for chp in 0..n {
        let row = coupling.row(chp);
        let mut s = 0.0;
        for chpp in 0..n {
            let g = row[chpp];
            if g != 0.0 {
                s += g * p[chpp] * second_order_kernel(z_m, alpha_per_m[chp], alpha_per_m[chpp]);
            }
        }
        q[chp] = p[chp] * s;
    }
    let mut out = vec![0.0; n];
    coupling.accumulate(&q, &mut out);
    out
}

/// Span-level wrapper for the analytic second order.
pub fn gamma_second_order_analytic(comb: &WdmComb, span: &FiberSpan, z_m: f64) -> Result<Vec<f64>> {
    let loss = LossProfile::evaluate(&span.loss, &comb.frequencies_hz())?;
    let coupling = CouplingMatrix::from_span(comb, span, GainConvention::Tabulated)?;
    Ok(second_order_analytic_prepared(comb, &loss.alpha_per_m, &coupling, z_m))
}

/// Power profile of the order-k truncation on the orders' z grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSolution {
    pub comb: WdmComb,
    pub z_grid_m: Vec<f64>,
    pub order: usize,
    powers_w: Vec<f64>,
}

impl TruncatedSolution {
    pub fn channel_count(&self) -> usize {
        self.comb.channel_count()
    }

    pub fn powers_at(&self, zi: usize) -> &[f64] {
        let n = self.channel_count();
        &self.powers_w[zi * n..(zi + 1) * n]
    }

    pub fn final_profile(&self) -> &[f64] {
        self.powers_at(self.z_grid_m.len() - 1)
    }

    /// ln P_ch interpolated at an arbitrary z within the grid range.
    pub fn log_power_at(&self, ch: usize, z_m: f64) -> Result<f64> {
        interp_log_power(&self.z_grid_m, &self.powers_w, self.channel_count(), ch, z_m)
    }

    /// Same schema as the numerical evolution CSV plus an `order` column.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut buf = String::from("channel_index,frequency_THz,z_km,power_dBm,order\n");
        for (ci, ch) in self.comb.channels.iter().enumerate() {
            for (zi, &z) in self.z_grid_m.iter().enumerate() {
                buf.push_str(&format!(
                    "{},{},{},{},{}\n",
                    ci,
                    hz_to_thz(ch.frequency_hz),
                    m_to_km(z),
                    w_to_dbm(self.powers_at(zi)[ci]),
                    self.order
                ));
            }
        }
        crate::report::write_atomic(path, buf.as_bytes())
    }
}

/// P⁽ᵏ⁾_ch(z) = P_ch·e^(−α_ch z)·exp(Σ_{j=1..k} Γ⁽ʲ⁾_ch(z)).
pub fn truncated_power_profile(orders: &PerturbativeOrders, k: usize) -> Result<TruncatedSolution> {
    if k < 1 || k > orders.max_order() {
        return Err(Error::InvalidInput(format!(
            "truncation order {k} outside computed range 1..={}",
            orders.max_order()
        )));
    }
    let n = orders.channel_count();
    let launch = orders.comb.powers_w();
    let mut powers_w = vec![0.0; n * orders.z_grid_m.len()];
    for (zi, &z) in orders.z_grid_m.iter().enumerate() {
        for ch in 0..n {
            let mut s = -orders.alpha_per_m[ch] * z;
            for j in 1..=k {
                s += orders.orders[j - 1][zi * n + ch];
            }
            powers_w[zi * n + ch] = launch[ch] * s.exp();
        }
    }
    Ok(TruncatedSolution {
        comb: orders.comb.clone(),
        z_grid_m: orders.z_grid_m.clone(),
        order: k,
        powers_w,
    })
}

/// Exact solution for flat loss and triangular gain g(f,f′) = (f′−f)·K_R:
/// P_ch(z) = P_ch·e^(−αz)·χ_ch with
/// χ_ch = P_tot·e^(−f_ch K_R P_tot Λ) / Σ_ch′ P_ch′·e^(−f_ch′ K_R P_tot Λ).
///
/// χ is invariant under a common frequency shift, so frequencies are
/// centred on the power-weighted mean before exponentiating.
pub fn closed_form_flat_triangular(comb: &WdmComb, alpha_per_m: f64, k_r: f64, z_m: f64) -> Vec<f64> {
    let p = comb.powers_w();
    let f = comb.frequencies_hz();
    let p_tot: f64 = p.iter().sum();
    let f_mean = f.iter().zip(&p).map(|(fi, pi)| fi * pi).sum::<f64>() / p_tot;
    let lambda = effective_length(alpha_per_m, z_m);
    let decay = (-alpha_per_m * z_m).exp();
    let weights: Vec<f64> = f
        .iter()
        .map(|fi| (-(fi - f_mean) * k_r * p_tot * lambda).exp())
        .collect();
    let denom: f64 = weights.iter().zip(&p).map(|(w, pi)| w * pi).sum();
    p.iter()
        .zip(&weights)
        .map(|(pi, w)| pi * decay * p_tot * w / denom)
        .collect()
}

/// The closed-form solution evaluated on a whole z grid.
pub fn closed_form_evolution(comb: &WdmComb, alpha_per_m: f64, k_r: f64, z_grid_m: &[f64]) -> Result<PowerEvolution> {
    let columns: Vec<Vec<f64>> = z_grid_m
        .iter()
        .map(|&z| closed_form_flat_triangular(comb, alpha_per_m, k_r, z))
        .collect();
    evolution_from_columns(comb, z_grid_m.to_vec(), columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::{FiberGeometry, LossModel, RamanGainTable};
    use crate::numerical::{integrate_prepared, NumericalSettings, Scheme};
    use crate::spectrum::{build_comb, Band, LaunchSpec, DEFAULT_SLOT_WIDTH_HZ};
    use crate::units::{db_km_to_per_m, DB_PER_NEPER};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const KM: f64 = 1000.0;

    fn small_comb(n: usize, power_dbm: f64) -> WdmComb {
        let hi = 192.0e12 + (n - 1) as f64 * DEFAULT_SLOT_WIDTH_HZ;
        build_comb(
            &[Band::new("t", 192.0e12, hi).unwrap()],
            DEFAULT_SLOT_WIDTH_HZ,
            &LaunchSpec::Flat { power_dbm },
        )
        .unwrap()
    }

    fn default_span(length_m: f64, alpha_db_km: f64) -> FiberSpan {
        FiberSpan::new(
            length_m,
            LossModel::Flat { alpha_db_km },
            FiberGeometry::default(),
            RamanGainTable::bundled(),
        )
        .unwrap()
    }

    #[test]
    fn effective_length_limits_and_frozen_values() {
        assert_eq!(effective_length(0.0, 70_000.0), 70_000.0);
        let a = db_km_to_per_m(0.2);
        assert_relative_eq!(effective_length(a, 1.0e12), 1.0 / a, max_relative = 1e-15);
        // half-decay point: α·z = ln 2 → Λ = 0.5/α
        assert_relative_eq!(effective_length(a, std::f64::consts::LN_2 / a), 0.5 / a, max_relative = 1e-14);
        assert_relative_eq!(effective_length(a, 1.0 * KM), 977.3235767812813, max_relative = 1e-13);
        assert_relative_eq!(effective_length(a, 70.0 * KM), 20850.245358275086, max_relative = 1e-13);
        // series/exact agreement across the branch point
        for z in [0.9e-6 / a, 1.1e-6 / a] {
            let exact = -f64::exp_m1(-a * z) / a;
            assert_relative_eq!(effective_length(a, z), exact, max_relative = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn effective_length_profile_invariants(alpha_db_km in 0.0f64..0.5, steps in 2usize..40) {
            let a = db_km_to_per_m(alpha_db_km);
            let grid: Vec<f64> = (0..=steps).map(|i| i as f64 * 2.5 * KM).collect();
            let prof = EffectiveLengthProfile::evaluate(&[a], &grid);
            prop_assert_eq!(prof.at(0)[0], 0.0);
            let mut prev = 0.0;
            for (zi, &z) in grid.iter().enumerate() {
                let l = prof.at(zi)[0];
                prop_assert!(l >= prev);
                prop_assert!(l <= z * (1.0 + 1e-12));
                if a > 0.0 {
                    prop_assert!(l <= (1.0 / a) * (1.0 + 1e-12));
                }
                prev = l;
            }
        }
    }

    #[test]
    fn quadrature_grid_shape() {
        let g = build_quadrature_grid(70.0 * KM, 1.0 * KM).unwrap();
        assert_eq!(g.len(), 71);
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 70.0 * KM);
        for w in g.windows(2) {
            assert_relative_eq!(w[1] - w[0], 1.0 * KM, max_relative = 1e-9);
        }
        // non-divisible step still lands exactly on the span end
        let g = build_quadrature_grid(10.0 * KM, 3.0 * KM).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(*g.last().unwrap(), 10.0 * KM);
        assert!(matches!(
            build_quadrature_grid(10.0 * KM, 20.0 * KM),
            Err(Error::QuadratureTooCoarse { points: 2, .. })
        ));
    }

    #[test]
    fn partition_enumeration_matches_hand_forms() {
        assert_eq!(integer_partitions(0), vec![vec![]]);
        assert_eq!(integer_partitions(1), vec![vec![(1, 1)]]);
        // counts follow the partition function: p(5)=7, p(7)=15
        assert_eq!(integer_partitions(5).len(), 7);
        assert_eq!(integer_partitions(7).len(), 15);

        // weighted sums reduce to the hand-written low-order combinations
        let eval = |m: usize, g: &[f64]| -> f64 {
            integer_partitions(m)
                .iter()
                .map(|parts| {
                    parts
                        .iter()
                        .map(|&(k, mult)| g[k - 1].powi(mult as i32) / factorial(mult))
                        .product::<f64>()
                })
                .sum()
        };
        let g = [0.3, 0.07, 0.011];
        assert_relative_eq!(eval(1, &g), g[0], max_relative = 1e-15);
        assert_relative_eq!(eval(2, &g), g[1] + 0.5 * g[0] * g[0], max_relative = 1e-15);
        assert_relative_eq!(
            eval(3, &g),
            g[2] + g[0] * g[1] + g[0] * g[0] * g[0] / 6.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn first_order_toy_matches_closed_form() {
        // one interferer with g = 1.2e-4 1/(W·m), P′ = 2 mW, α′ = 4.6e-5 1/m:
        // Γ⁽¹⁾(70 km) = g·P′·Λ = 5.00893013081398e-3 (independent arithmetic)
        let comb = {
            let mut c = small_comb(2, 0.0);
            c.channels[0].power_w = 2e-3;
            c.channels[1].power_w = 2e-3;
            c.refresh_total();
            c
        };
        let g = 1.2e-4;
        let coupling = CouplingMatrix::from_rows(2, vec![0.0, g, -g, 0.0]).unwrap();
        let alpha = [4.6e-5, 4.6e-5];
        let grid = [0.0, 35.0 * KM, 70.0 * KM];
        let orders = PerturbativeOrders::first_order(&comb, &alpha, &coupling, &grid).unwrap();
        let end = orders.gamma_at(1, 2);
        assert_relative_eq!(end[0], 0.00500893013081398, max_relative = 1e-13);
        assert_relative_eq!(end[1], -0.00500893013081398, max_relative = 1e-13);
        assert_eq!(orders.gamma_at(1, 0), &[0.0, 0.0]);
    }

    #[test]
    fn first_order_full_comb_matches_simpson_quadrature() {
        // Closed form vs direct Simpson quadrature of Σ g·P′·e^(−α′z′) on the
        // full five-band comb with the parametric loss model.
        let comb = build_comb(&Band::standard_plan(), DEFAULT_SLOT_WIDTH_HZ, &LaunchSpec::Flat { power_dbm: -1.0 }).unwrap();
        let span = default_span(70.0 * KM, 0.2);
        let span = FiberSpan::new(
            span.length_m,
            LossModel::Parametric {
                params: Default::default(),
            },
            span.geometry,
            span.raman,
        )
        .unwrap();
        let grid = [0.0, 70.0 * KM];
        let orders = gamma_first_order(&comb, &span, &grid).unwrap();
        let closed = orders.gamma_at(1, 1);

        let loss = LossProfile::evaluate(&span.loss, &comb.frequencies_hz()).unwrap();
        let coupling = CouplingMatrix::from_span(&comb, &span, GainConvention::Tabulated).unwrap();
        let n = comb.channel_count();
        let intervals = 4000usize;
        let h = 70.0 * KM / intervals as f64;
        // per-interferer Simpson integral of e^(−α′z), then one matvec
        let mut lam = vec![0.0; n];
        for i in 0..=intervals {
            let z = i as f64 * h;
            let w = if i == 0 || i == intervals {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            for ch in 0..n {
                lam[ch] += w * (-loss.alpha_per_m[ch] * z).exp();
            }
        }
        let launch = comb.powers_w();
        let mut q = vec![0.0; n];
        for ch in 0..n {
            q[ch] = launch[ch] * lam[ch] * h / 3.0;
        }
        let mut simpson = vec![0.0; n];
        coupling.accumulate(&q, &mut simpson);

        let scale = closed.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(scale > 1e-3, "first order unexpectedly small: {scale}");
        for ch in 0..n {
            let diff = (closed[ch] - simpson[ch]).abs();
            assert!(
                diff <= 1e-10 * simpson[ch].abs() + 1e-12,
                "channel {ch}: closed {} vs simpson {}",
                closed[ch],
                simpson[ch]
            );
        }
    }

    #[test]
    fn second_order_kernel_frozen_values() {
        // independent Simpson oracle values
        assert_relative_eq!(second_order_kernel(1.0, 1.0, 2.0), 0.1576914574755895, max_relative = 1e-12);
        assert_relative_eq!(
            second_order_kernel(70_000.0, 4.6e-5, 5.2e-5),
            205330072.73973104,
            max_relative = 1e-12
        );
        // flat-loss reduction M(z; α, α) = ½Λ(z; α)²
        let l = effective_length(1.0, 1.0);
        assert_relative_eq!(second_order_kernel(1.0, 1.0, 1.0), 0.5 * l * l, max_relative = 1e-13);
        // α″ → 0 limit and both-zero limit
        assert_eq!(second_order_kernel(3.0, 0.0, 0.0), 4.5);
        // branch seam: the two formulas agree just either side of the cut
        // (α″ probes this close differ by < 1e-9 in the kernel itself)
        let a = 4.6e-5;
        let near = 1.0e-6 / 70_000.0;
        let below = second_order_kernel(70_000.0, a, near * 0.999);
        let above = second_order_kernel(70_000.0, a, near * 1.001);
        assert_relative_eq!(below, above, max_relative = 2e-8);
    }

    #[test]
    fn second_order_quadrature_matches_hand_kernel_toy() {
        // two channels, g(0,1) = g(1,0) = 1, P = 1 W, α = [2, 1] (1/length):
        // Γ⁽²⁾_0(1) = M(1; α_1, α_0) by direct substitution of Γ⁽¹⁾_1.
        let comb = {
            let mut c = small_comb(2, 0.0);
            c.channels[0].power_w = 1.0;
            c.channels[1].power_w = 1.0;
            c.refresh_total();
            c
        };
        let coupling = CouplingMatrix::from_rows(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let alpha = [2.0, 1.0];
        let grid: Vec<f64> = (0..=4000).map(|i| i as f64 * 2.5e-4).collect();
        let mut orders = PerturbativeOrders::first_order(&comb, &alpha, &coupling, &grid).unwrap();
        orders.push_next_order(&coupling).unwrap();
        let got = orders.gamma_at(2, 4000);
        assert_relative_eq!(got[0], second_order_kernel(1.0, alpha[1], alpha[0]), max_relative = 1e-6);
        assert_relative_eq!(got[1], second_order_kernel(1.0, alpha[0], alpha[1]), max_relative = 1e-6);
    }

    #[test]
    fn second_order_analytic_matches_quadrature_on_a_comb() {
        // C+L+S comb, flat −1 dBm: dual-route agreement within 1e-4 dB.
        let bands = [
            Band::standard("L").unwrap(),
            Band::standard("C").unwrap(),
            Band::standard("S").unwrap(),
        ];
        let comb = build_comb(&bands, DEFAULT_SLOT_WIDTH_HZ, &LaunchSpec::Flat { power_dbm: -1.0 }).unwrap();
        let span = default_span(70.0 * KM, 0.2);
        let loss = LossProfile::evaluate(&span.loss, &comb.frequencies_hz()).unwrap();
        let coupling = CouplingMatrix::from_span(&comb, &span, GainConvention::Tabulated).unwrap();
        let grid = build_quadrature_grid(70.0 * KM, 250.0).unwrap();
        let mut orders = PerturbativeOrders::first_order(&comb, &loss.alpha_per_m, &coupling, &grid).unwrap();
        orders.push_next_order(&coupling).unwrap();
        let quad = orders.gamma_at(2, grid.len() - 1);
        let analytic = second_order_analytic_prepared(&comb, &loss.alpha_per_m, &coupling, 70.0 * KM);
        let span_route = gamma_second_order_analytic(&comb, &span, 70.0 * KM).unwrap();
        let mut worst = 0.0f64;
        for ch in 0..comb.channel_count() {
            assert_eq!(analytic[ch], span_route[ch]);
            worst = worst.max(DB_PER_NEPER * (quad[ch] - analytic[ch]).abs());
        }
        assert!(worst < 1e-4, "dual-route disagreement {worst} dB");
        assert!(orders.max_abs_gamma(2) > 1e-5, "second order unexpectedly small");
    }

    #[test]
    fn zero_coupling_gives_zero_orders_and_pure_loss() {
        let comb = small_comb(4, -1.0);
        let coupling = CouplingMatrix::triangular(&comb, 0.0);
        let alpha = vec![db_km_to_per_m(0.2); 4];
        let grid = build_quadrature_grid(50.0 * KM, 5.0 * KM).unwrap();
        let mut orders = PerturbativeOrders::first_order(&comb, &alpha, &coupling, &grid).unwrap();
        orders.extend_to(&coupling, 3).unwrap();
        for k in 1..=3 {
            assert_eq!(orders.max_abs_gamma(k), 0.0);
        }
        let sol = truncated_power_profile(&orders, 3).unwrap();
        for (zi, &z) in grid.iter().enumerate() {
            for ch in 0..4 {
                assert_relative_eq!(
                    sol.powers_at(zi)[ch],
                    comb.powers_w()[ch] * (-alpha[ch] * z).exp(),
                    max_relative = 1e-15
                );
            }
        }
    }

    #[test]
    fn truncation_is_exact_at_launch_and_positive() {
        let comb = small_comb(8, 2.0);
        let span = default_span(70.0 * KM, 0.2);
        let grid = build_quadrature_grid(70.0 * KM, 1.0 * KM).unwrap();
        let mut orders = gamma_first_order(&comb, &span, &grid).unwrap();
        orders = gamma_next_order(orders, &span).unwrap();
        let sol = truncated_power_profile(&orders, 2).unwrap();
        assert_eq!(sol.order, 2);
        for (a, b) in sol.powers_at(0).iter().zip(comb.powers_w()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(sol.powers_w.iter().all(|&p| p > 0.0));
        assert!(truncated_power_profile(&orders, 3).is_err());
        assert!(truncated_power_profile(&orders, 0).is_err());
    }

    #[test]
    fn order_scaling_is_exact_for_power_of_two_launch_scaling() {
        // Scaling every launch power by s multiplies Γ⁽ᵏ⁾ by exactly s^k;
        // with s = 2 the f64 arithmetic reproduces this bitwise.
        let comb = small_comb(5, -1.0);
        let scaled = comb.scaled_powers(2.0);
        let span = default_span(70.0 * KM, 0.2);
        let loss = LossProfile::evaluate(&span.loss, &comb.frequencies_hz()).unwrap();
        let coupling = CouplingMatrix::from_span(&comb, &span, GainConvention::Tabulated).unwrap();
        let grid = build_quadrature_grid(70.0 * KM, 2.0 * KM).unwrap();
        let mut base = PerturbativeOrders::first_order(&comb, &loss.alpha_per_m, &coupling, &grid).unwrap();
        let mut big = PerturbativeOrders::first_order(&scaled, &loss.alpha_per_m, &coupling, &grid).unwrap();
        base.extend_to(&coupling, 4).unwrap();
        big.extend_to(&coupling, 4).unwrap();
        for k in 1..=4 {
            let s = (2.0f64).powi(k as i32);
            for (a, b) in base.gamma(k).iter().zip(big.gamma(k)) {
                assert_eq!((a * s).to_bits(), b.to_bits(), "order {k}");
            }
        }
    }

    #[test]
    fn truncated_accuracy_improves_with_order() {
        // C-band comb: max |E⁽ᵏ⁾| at span end non-increasing in k, and
        // k = 4 lands within 0.1 dB of the reference.
        let comb = build_comb(
            &[Band::standard("C").unwrap()],
            DEFAULT_SLOT_WIDTH_HZ,
            &LaunchSpec::Flat { power_dbm: 2.0 },
        )
        .unwrap();
        let span = default_span(70.0 * KM, 0.2);
        let loss = LossProfile::evaluate(&span.loss, &comb.frequencies_hz()).unwrap();
        let coupling = CouplingMatrix::from_span(&comb, &span, GainConvention::Tabulated).unwrap();
        let reference = integrate_prepared(
            &comb,
            &loss,
            &coupling,
            70.0 * KM,
            &NumericalSettings {
                dz_m: 25.0,
                scheme: Scheme::Rk4Log,
                record_dz_m: Some(70.0 * KM),
            },
        )
        .unwrap();
        let grid = build_quadrature_grid(70.0 * KM, 500.0).unwrap();
        let mut orders = PerturbativeOrders::first_order(&comb, &loss.alpha_per_m, &coupling, &grid).unwrap();
        orders.extend_to(&coupling, 4).unwrap();
        let ref_end = reference.final_profile();
        let mut last = f64::INFINITY;
        for k in 1..=4 {
            let sol = truncated_power_profile(&orders, k).unwrap();
            let end = sol.final_profile();
            let max_err = (0..comb.channel_count())
                .map(|ch| (10.0 * (ref_end[ch] / end[ch]).log10()).abs())
                .fold(0.0f64, f64::max);
            assert!(
                max_err <= last * (1.0 + 1e-9),
                "error grew from {last} to {max_err} dB at order {k}"
            );
            last = max_err;
        }
        assert!(last < 0.1, "order-4 error {last} dB");
    }

    #[test]
    fn remainder_has_next_order_frequency_shape() {
        // E⁽ᵏ⁾ ≈ (10/ln10)·Γ⁽ᵏ⁺¹⁾ at span end, within the order-(k+1) error.
        let comb = build_comb(
            &[Band::standard("C").unwrap()],
            DEFAULT_SLOT_WIDTH_HZ,
            &LaunchSpec::Flat { power_dbm: 2.0 },
        )
        .unwrap();
        let span = default_span(70.0 * KM, 0.2);
        let loss = LossProfile::evaluate(&span.loss, &comb.frequencies_hz()).unwrap();
        let coupling = CouplingMatrix::from_span(&comb, &span, GainConvention::Tabulated).unwrap();
        let reference = integrate_prepared(
            &comb,
            &loss,
            &coupling,
            70.0 * KM,
            &NumericalSettings {
                dz_m: 25.0,
                scheme: Scheme::Rk4Log,
                record_dz_m: Some(70.0 * KM),
            },
        )
        .unwrap();
        let grid = build_quadrature_grid(70.0 * KM, 250.0).unwrap();
        let mut orders = PerturbativeOrders::first_order(&comb, &loss.alpha_per_m, &coupling, &grid).unwrap();
        orders.extend_to(&coupling, 3).unwrap();
        let ref_end = reference.final_profile();
        let n = comb.channel_count();
        let last_zi = grid.len() - 1;
        let err_at = |k: usize| -> Vec<f64> {
            let end = truncated_power_profile(&orders, k).unwrap();
            (0..n)
                .map(|ch| 10.0 * (ref_end[ch] / end.final_profile()[ch]).log10())
                .collect()
        };
        let e2 = err_at(2);
        let e3 = err_at(3);
        let e3_max = e3.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let g3 = orders.gamma_at(3, last_zi);
        for ch in 0..n {
            let defect = (e2[ch] - DB_PER_NEPER * g3[ch]).abs();
            assert!(
                defect <= e3_max + 2e-3,
                "channel {ch}: defect {defect} dB vs next-order error {e3_max} dB"
            );
        }
    }

    #[test]
    fn closed_form_matches_frozen_two_channel_oracle() {
        let comb = build_comb(
            &[Band::new("pair", 193.0e12, 193.1e12).unwrap()],
            100e9,
            &LaunchSpec::Flat { power_dbm: 0.0 },
        )
        .unwrap();
        let a = db_km_to_per_m(0.2);
        let p = closed_form_flat_triangular(&comb, a, 3e-17, 50.0 * KM);
        assert_relative_eq!(p[0], 1.0000586297549897e-4, max_relative = 1e-13);
        assert_relative_eq!(p[1], 0.9999413702450099e-4, max_relative = 1e-13);
    }

    #[test]
    fn closed_form_conserves_pre_loss_power_and_handles_kr_zero() {
        let comb = small_comb(21, -1.0);
        let a = db_km_to_per_m(0.2);
        for &z in &[0.0, 10.0 * KM, 70.0 * KM] {
            let p = closed_form_flat_triangular(&comb, a, 3e-17, z);
            let undone: f64 = p.iter().map(|v| v * (a * z).exp()).sum();
            assert_relative_eq!(undone, comb.total_power_w(), max_relative = 1e-12);
        }
        let p = closed_form_flat_triangular(&comb, a, 0.0, 50.0 * KM);
        for (ch, &v) in p.iter().enumerate() {
            assert_relative_eq!(v, comb.powers_w()[ch] * (-a * 50.0 * KM).exp(), max_relative = 1e-15);
        }
        // symmetric pair: transfer antisymmetric about the mean frequency
        let pair = small_comb(2, 0.0);
        let p = closed_form_flat_triangular(&pair, a, 3e-17, 50.0 * KM);
        let decay = (-a * 50.0 * KM).exp();
        let d0 = p[0] / decay - pair.powers_w()[0];
        let d1 = p[1] / decay - pair.powers_w()[1];
        assert_relative_eq!(d0, -d1, max_relative = 1e-9);
        assert!(d0 > 0.0, "lower channel should gain");
    }

    #[test]
    fn closed_form_evolution_matches_reference_integrator() {
        // Independent cross-check of both routes on a 9-channel comb.
        let comb = small_comb(9, 0.0);
        let a = db_km_to_per_m(0.2);
        let k_r = 2e-17;
        let loss = LossProfile {
            alpha_per_m: vec![a; 9],
        };
        let coupling = CouplingMatrix::triangular(&comb, k_r);
        let settings = NumericalSettings {
            dz_m: 1.0,
            scheme: Scheme::Rk4Log,
            record_dz_m: Some(70.0 * KM),
        };
        let numerical = integrate_prepared(&comb, &loss, &coupling, 70.0 * KM, &settings).unwrap();
        let closed = closed_form_evolution(&comb, a, k_r, &[0.0, 70.0 * KM]).unwrap();
        for ch in 0..9 {
            let db = 10.0 * (numerical.final_profile()[ch] / closed.final_profile()[ch]).log10();
            assert!(db.abs() < 1e-9, "channel {ch}: {db} dB");
        }
    }

    #[test]
    fn coarse_grid_is_rejected_for_higher_orders() {
        let comb = small_comb(2, -1.0);
        let coupling = CouplingMatrix::triangular(&comb, 1e-17);
        let alpha = [1e-5, 1e-5];
        let mut orders = PerturbativeOrders::first_order(&comb, &alpha, &coupling, &[0.0, 70.0 * KM]).unwrap();
        assert!(matches!(
            orders.push_next_order(&coupling),
            Err(Error::QuadratureTooCoarse { points: 2, .. })
        ));
    }
}
