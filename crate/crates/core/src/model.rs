//! Closed-form second-order channel models.
//!
//! Every path is described by five index-unit coefficients: the per-side
//! linear and quadratic phase slopes `(b, k)` and the Tx/Rx coupling `omega`.
//! A path's channel is `beta * (b_rx b_tx^H) ⊙ V(omega)`, where `b_N(b, k)` has
//! entries `exp(-j pi (b n + k n^2))` and `V(omega)` has entries
//! `exp(j 2 pi omega n1 n2)`. NLoS paths always have `omega = 0`.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, ChannelMatrix, Scatterer};
use crate::linalg::{cis_cycles_neg, signed_index, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub b_tx: f64,
    pub k_tx: f64,
    pub b_rx: f64,
    pub k_rx: f64,
    pub omega: f64,
    pub beta: C64,
}

impl PathParams {
    /// Drops the coupling term, keeping per-side near-field curvature.
    pub fn polar(&self) -> Self {
        Self { omega: 0.0, ..*self }
    }

    /// First-order (planar wavefront) truncation.
    pub fn far_field(&self) -> Self {
        Self { k_tx: 0.0, k_rx: 0.0, omega: 0.0, ..*self }
    }

    pub fn with_beta(self, beta: C64) -> Self {
        Self { beta, ..self }
    }
}

/// Unit-modulus coupling window `V(omega)`, `n_rx x n_tx`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowMatrix {
    pub values: Array2<C64>,
    pub omega: f64,
}

fn check_even(n: usize, what: &str) -> Result<()> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::Contract(format!("{what} must be even and >= 2, got {n}")));
    }
    Ok(())
}

/// Near-field steering vector `[exp(-j pi (b m + k m^2))]`, `m = -n/2+1 ..= n/2`.
pub fn steering_vector(n: usize, b: f64, k: f64) -> Array1<C64> {
    Array1::from_shape_fn(n, |i| {
        let m = signed_index(i, n) as f64;
        cis_cycles_neg(0.5 * (b * m + k * m * m))
    })
}

/// Second-order coefficients of the LoS path, with spacing and wavelength
/// folded into index units. `beta = g e^{-j 2 pi r0 / lambda} / r0`.
pub fn los_params(geom: &ArrayGeometry, los_gain: C64) -> Result<PathParams> {
    if geom.r0_m.is_nan() || geom.r0_m <= 0.0 {
        return Err(Error::Domain(format!("r0 must be positive, got {}", geom.r0_m)));
    }
    let lambda = geom.wavelength_m();
    let d = geom.spacing_m;
    let r0 = geom.r0_m;
    let (st, ct) = geom.theta_tx.sin_cos();
    let (sr, cr) = geom.theta_rx.sin_cos();
    let cphi = geom.phi_rx.cos();
    let quad = d * d / (lambda * r0);
    Ok(PathParams {
        b_tx: 2.0 * d * st / lambda,
        k_tx: -quad * ct * ct,
        b_rx: 2.0 * d * sr * cphi / lambda,
        k_rx: quad * (1.0 - sr * sr * cphi * cphi),
        omega: quad * ct * cr * cphi,
        beta: los_gain * cis_cycles_neg(r0 / lambda) / r0,
    })
}

/// Second-order coefficients of one scatterer path (`omega = 0`).
pub fn nlos_params(geom: &ArrayGeometry, s: &Scatterer) -> Result<PathParams> {
    s.validate()?;
    let lambda = geom.wavelength_m();
    let d = geom.spacing_m;
    let (st, ct) = s.theta_tx.sin_cos();
    let (sr, cr) = s.theta_rx.sin_cos();
    Ok(PathParams {
        b_tx: 2.0 * d * st / lambda,
        k_tx: -d * d * ct * ct / (lambda * s.r_tx_m),
        b_rx: 2.0 * d * sr / lambda,
        k_rx: d * d * cr * cr / (lambda * s.r_rx_m),
        omega: 0.0,
        beta: s.gain * cis_cycles_neg((s.r_tx_m + s.r_rx_m) / lambda) / (s.r_tx_m * s.r_rx_m),
    })
}

pub fn vandermonde_window(n_rx: usize, n_tx: usize, omega: f64) -> Result<WindowMatrix> {
    check_even(n_rx, "n_rx")?;
    check_even(n_tx, "n_tx")?;
    let values = Array2::from_shape_fn((n_rx, n_tx), |(i2, i1)| {
        let p = (signed_index(i1, n_tx) * signed_index(i2, n_rx)) as f64;
        cis_cycles_neg(omega * p).conj()
    });
    Ok(WindowMatrix { values, omega })
}

/// `beta * (b_rx b_tx^H) ⊙ V(omega)`.
pub fn approx_los_channel(p: &PathParams, n_rx: usize, n_tx: usize) -> Result<ChannelMatrix> {
    check_even(n_rx, "n_rx")?;
    check_even(n_tx, "n_tx")?;
    let brx = steering_vector(n_rx, p.b_rx, p.k_rx);
    let btx = steering_vector(n_tx, p.b_tx, p.k_tx);
    let mut h = Array2::from_shape_fn((n_rx, n_tx), |(i2, i1)| p.beta * brx[i2] * btx[i1].conj());
    if p.omega != 0.0 {
        h *= &vandermonde_window(n_rx, n_tx, p.omega)?.values;
    }
    Ok(h)
}

/// Same channel written as `beta * diag(b_rx) V diag(b_tx^H)`.
pub fn approx_los_channel_diag_form(p: &PathParams, n_rx: usize, n_tx: usize) -> Result<ChannelMatrix> {
    let brx = steering_vector(n_rx, p.b_rx, p.k_rx);
    let btx = steering_vector(n_tx, p.b_tx, p.k_tx);
    let v = vandermonde_window(n_rx, n_tx, p.omega)?.values;
    let left = Array2::from_diag(&brx);
    let right = Array2::from_diag(&btx.mapv(|x| x.conj()));
    Ok(left.dot(&v).dot(&right).mapv(|x| x * p.beta))
}

/// Rank-one `beta * b_rx b_tx^H`; rejects a nonzero coupling coefficient.
pub fn approx_nlos_channel(p: &PathParams, n_rx: usize, n_tx: usize) -> Result<ChannelMatrix> {
    if p.omega != 0.0 {
        return Err(Error::Contract(format!("NLoS path must have omega = 0, got {}", p.omega)));
    }
    approx_los_channel(p, n_rx, n_tx)
}

/// Sum over paths; `paths[0]` is the LoS path and the only one allowed a
/// nonzero coupling coefficient.
pub fn unified_channel(paths: &[PathParams], n_rx: usize, n_tx: usize) -> Result<ChannelMatrix> {
    check_even(n_rx, "n_rx")?;
    check_even(n_tx, "n_tx")?;
    let mut h = Array2::zeros((n_rx, n_tx));
    for (l, p) in paths.iter().enumerate() {
        if l > 0 && p.omega != 0.0 {
            return Err(Error::Contract(format!("NLoS path {l} has omega = {}", p.omega)));
        }
        h += &approx_los_channel(p, n_rx, n_tx)?;
    }
    Ok(h)
}
