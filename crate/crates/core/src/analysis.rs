//! NMSE, model approximation error and the LoS window's DFT-subspace power.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{exact_los_channel, ArrayGeometry, ChannelMatrix, Scene};
use crate::linalg::{frob_norm, signed_index, singular_values, C64, ONE};
use crate::model::{approx_los_channel, los_params, vandermonde_window, PathParams};

/// Reported in place of `-inf` for an exact estimate.
pub const NMSE_FLOOR_DB: f64 = -300.0;

/// `10 log10(||h_est - h_true||^2 / ||h_true||^2)`, floored at [`NMSE_FLOOR_DB`].
pub fn nmse(h_est: &ChannelMatrix, h_true: &ChannelMatrix) -> Result<f64> {
    if h_est.dim() != h_true.dim() {
        return Err(Error::Dimension(format!("estimate {:?} vs truth {:?}", h_est.dim(), h_true.dim())));
    }
    let den = frob_norm(&h_true.view()).powi(2);
    if den == 0.0 {
        return Err(Error::Domain("true channel is zero".into()));
    }
    let num = frob_norm(&(h_est - h_true).view()).powi(2);
    if num == 0.0 {
        return Ok(NMSE_FLOOR_DB);
    }
    Ok((10.0 * (num / den).log10()).max(NMSE_FLOOR_DB))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelErrorPoint {
    pub r0_m: f64,
    pub nmse_farfield_db: f64,
    pub nmse_polar_db: f64,
    pub nmse_generalized_db: f64,
}

/// NMSE of `model` against `exact` after a least-squares scalar gain fit.
fn fitted_nmse(model: &PathParams, exact: &ChannelMatrix) -> Result<f64> {
    let (n_rx, n_tx) = exact.dim();
    let h = approx_los_channel(&model.with_beta(ONE), n_rx, n_tx)?;
    let num: C64 = h.iter().zip(exact.iter()).map(|(a, b)| a.conj() * b).sum();
    let beta = num / frob_norm(&h.view()).powi(2);
    nmse(&h.mapv(|x| x * beta), exact)
}

/// Far-field, polar and generalized LoS model error against the exact
/// spherical-wave channel, one point per distance.
pub fn model_error_curve(geom_template: &ArrayGeometry, r0_list: &[f64]) -> Result<Vec<ModelErrorPoint>> {
    if r0_list.is_empty() {
        return Err(Error::config("r0 list is empty"));
    }
    crate::par_map(r0_list, |&r0| {
        let geometry = geom_template.with_r0(r0)?;
        let exact = exact_los_channel(&Scene { geometry, los_gain: ONE, scatterers: Vec::new() })?;
        let p = los_params(&geometry, ONE)?;
        Ok(ModelErrorPoint {
            r0_m: r0,
            nmse_farfield_db: fitted_nmse(&p.far_field(), &exact)?,
            nmse_polar_db: fitted_nmse(&p.polar(), &exact)?,
            nmse_generalized_db: fitted_nmse(&p, &exact)?,
        })
    })
    .into_iter()
    .collect()
}

/// Number of DFT beams the window occupies, `ceil(|omega| N_T N_R)` capped at `N_R`.
pub fn beam_count(n_rx: usize, n_tx: usize, omega: f64) -> usize {
    let raw = (omega.abs() * (n_rx * n_tx) as f64 - 1e-9).ceil().max(0.0) as usize;
    raw.min(n_rx)
}

/// Fraction of `||V(omega)||_F^2` captured by the DFT beams spanning the
/// window's column frequencies.
///
/// Column `n1` of `V` is a tone at `omega * n1` cycles per element. The beams
/// are spaced `1 / N_R` apart starting at the lowest column frequency.
pub fn subspace_power_fraction(n_rx: usize, n_tx: usize, omega: f64) -> Result<f64> {
    if omega == 0.0 || !omega.is_finite() {
        return Err(Error::Domain(format!("omega must be finite and nonzero, got {omega}")));
    }
    let count = beam_count(n_rx, n_tx, omega);
    if (omega.abs() * (n_rx * n_tx) as f64).round() < 1.0 {
        return Err(Error::Domain(format!("omega N_T N_R rounds to zero for omega = {omega}")));
    }
    let v = vandermonde_window(n_rx, n_tx, omega)?.values;
    let lo = signed_index(0, n_tx) as f64;
    let hi = signed_index(n_tx - 1, n_tx) as f64;
    let f_low = (omega * lo).min(omega * hi);
    let beams = dft_beams(n_rx, f_low, count);
    let proj = beams.t().mapv(|x| x.conj()).dot(&v);
    let captured = frob_norm(&proj.view()).powi(2);
    Ok((captured / (n_rx * n_tx) as f64).clamp(0.0, 1.0))
}

/// `count` orthonormal tones `exp(j 2 pi (f_low + i / n) m) / sqrt(n)` as columns.
fn dft_beams(n: usize, f_low: f64, count: usize) -> Array2<C64> {
    let scale = 1.0 / (n as f64).sqrt();
    Array2::from_shape_fn((n, count), |(p, i)| {
        let m = signed_index(p, n) as f64;
        let f = f_low + i as f64 / n as f64;
        crate::linalg::cis_cycles_neg(f * m).conj() * scale
    })
}

/// Smallest `k` whose top-`k` squared singular values hold at least `energy`
/// of the total; zero for a zero matrix.
pub fn effective_rank(channel: &ChannelMatrix, energy: f64) -> Result<usize> {
    if !(energy > 0.0 && energy < 1.0) {
        return Err(Error::Domain(format!("energy must lie in (0, 1), got {energy}")));
    }
    let sv = singular_values(&channel.view());
    let total: f64 = sv.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return Ok(0);
    }
    let mut acc = 0.0;
    for (k, s) in sv.iter().enumerate() {
        acc += s * s;
        if acc >= energy * total * (1.0 - 1e-12) {
            return Ok(k + 1);
        }
    }
    Ok(sv.len())
}

/// Share of squared singular-value energy in the top `k` values.
pub fn top_k_energy(channel: &ChannelMatrix, k: usize) -> f64 {
    let sv = singular_values(&channel.view());
    let total: f64 = sv.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 0.0;
    }
    sv.iter().take(k).map(|s| s * s).sum::<f64>() / total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{exact_nlos_channel, Scatterer};
    use crate::model::approx_nlos_channel;
    use std::f64::consts::PI;

    fn randomish(n: usize) -> ChannelMatrix {
        Array2::from_shape_fn((n, n + 2), |(i, j)| C64::new((i as f64 * 1.3 + j as f64).sin(), (i * j) as f64 * 0.1))
    }

    #[test]
    fn nmse_examples() {
        let h = randomish(6);
        assert_eq!(nmse(&h, &h).unwrap(), NMSE_FLOOR_DB);
        assert!(nmse(&Array2::zeros(h.dim()), &h).unwrap().abs() < 1e-12);
        assert!(nmse(&h.mapv(|x| x * 2.0), &h).unwrap().abs() < 1e-12);
        for a in [0.5f64, 3.0] {
            let got = nmse(&h.mapv(|x| x * a), &h).unwrap();
            assert!((got - 20.0 * (a - 1.0).abs().log10()).abs() < 1e-10);
        }
        assert!(matches!(nmse(&h, &Array2::zeros(h.dim())), Err(Error::Domain(_))));
        assert!(matches!(nmse(&randomish(4), &h), Err(Error::Dimension(_))));
    }

    #[test]
    fn model_error_ordering_and_far_field_limit() {
        let g = ArrayGeometry::new(64, 64, 100e9, 35.0, 0.4, -0.3, 0.7).unwrap();
        let pts = model_error_curve(&g, &[10.0, 20.0, 35.0, 50.0, 100.0, 1e4]).unwrap();
        for p in &pts[..5] {
            assert!(p.nmse_generalized_db <= p.nmse_polar_db, "{p:?}");
            assert!(p.nmse_polar_db <= p.nmse_farfield_db, "{p:?}");
        }
        let far = pts.last().unwrap();
        assert!(far.nmse_farfield_db < -40.0 && far.nmse_polar_db < -40.0 && far.nmse_generalized_db < -40.0);
        assert!(matches!(model_error_curve(&g, &[]), Err(Error::Config(_))));
    }

    #[test]
    fn orthogonal_tilt_makes_polar_and_generalized_agree() {
        let g = ArrayGeometry::new(64, 64, 100e9, 35.0, 0.4, -0.3, PI / 2.0).unwrap();
        let p = &model_error_curve(&g, &[20.0, 35.0]).unwrap();
        for pt in p {
            assert!((pt.nmse_polar_db - pt.nmse_generalized_db).abs() < 1e-10);
        }
    }

    #[test]
    fn full_dft_projection_keeps_all_power() {
        for (n, omega) in [(8usize, 0.3), (16, 1.0 / 16.0), (32, -0.05)] {
            let v = vandermonde_window(n, n, omega).unwrap().values;
            let beams = dft_beams(n, 0.17, n);
            let proj = beams.t().mapv(|x| x.conj()).dot(&v);
            let p = frob_norm(&proj.view()).powi(2);
            assert!((p - (n * n) as f64).abs() < 1e-10 * (n * n) as f64);
        }
        assert_eq!(subspace_power_fraction(16, 16, 1.0 / 16.0).unwrap(), 1.0);
    }

    #[test]
    fn power_fraction_bounds_and_svd_oracle() {
        assert!(matches!(subspace_power_fraction(16, 16, 0.0), Err(Error::Domain(_))));
        assert!(matches!(subspace_power_fraction(16, 16, 1e-6), Err(Error::Domain(_))));
        let n = 128usize;
        for m in [4.0, 8.0, 16.0, 64.0] {
            let omega = m / (n * n) as f64;
            let f = subspace_power_fraction(n, n, omega).unwrap();
            assert!((0.0..=1.0).contains(&f));
            let v = vandermonde_window(n, n, omega).unwrap().values;
            let svd = top_k_energy(&v, beam_count(n, n, omega));
            assert!(svd >= f - 1e-9, "svd {svd} vs dft {f}");
            if m >= 8.0 {
                assert!(svd - f < 0.05, "omega N^2 = {m}: svd {svd} vs dft {f}");
            }
            let fneg = subspace_power_fraction(n, n, -omega).unwrap();
            assert!((fneg - f).abs() < 1e-9);
        }
    }

    #[test]
    fn power_fraction_reference_values() {
        // Independent dense evaluation (numpy) of the same beam set.
        let cases = [
            (128usize, 4.0, 0.830584),
            (256, 4.0, 0.828600),
            (512, 4.0, 0.827616),
            (256, 8.0, 0.906479),
            (256, 16.0, 0.949853),
            (512, 256.0, 0.996811),
        ];
        for (n, m, expect) in cases {
            let f = subspace_power_fraction(n, n, m / (n * n) as f64).unwrap();
            assert!((f - expect).abs() < 2e-6, "N={n} omega N^2={m}: {f}");
        }
        assert_eq!(subspace_power_fraction(128, 128, 256.0 / (128.0 * 128.0)).unwrap(), 1.0);
    }

    #[test]
    fn effective_rank_examples() {
        let g = ArrayGeometry::new(32, 32, 100e9, 35.0, 0.2, 0.1, 0.0).unwrap();
        let s = Scatterer { r_tx_m: 12.0, r_rx_m: 9.0, theta_tx: 0.3, theta_rx: -0.5, gain: ONE };
        let h = exact_nlos_channel(&g, &s).unwrap();
        assert_eq!(effective_rank(&h, 0.99).unwrap(), 1);
        let p = PathParams { b_tx: 0.1, k_tx: 1e-3, b_rx: -0.4, k_rx: 2e-3, omega: 0.0, beta: ONE };
        let h = approx_nlos_channel(&p, 32, 32).unwrap();
        assert_eq!(effective_rank(&h, 0.5).unwrap(), 1);
        assert_eq!(effective_rank(&Array2::zeros((4, 4)), 0.9).unwrap(), 0);
        assert!(effective_rank(&h, 1.0).is_err());

        let h = randomish(10);
        let mut last = 0;
        for e in [0.1, 0.3, 0.5, 0.7, 0.9, 0.99] {
            let r = effective_rank(&h, e).unwrap();
            assert!(r >= last);
            last = r;
        }
    }
}
