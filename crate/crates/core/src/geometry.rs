//! Physical scene description and exact spherical-wavefront channels.
//!
//! The Tx array lies on the x axis centred at the origin. The Rx array centre
//! sits at distance `r0` along the LoS departure direction, and the Rx array
//! axis is rotated in-plane by `theta_rx - theta_tx` and tilted out of the
//! plane by `phi_rx`. Element indices are signed, `n ∈ {-N/2+1, ..., N/2}`.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, TAU};

use crate::error::{Error, Result};
use crate::linalg::{cis_cycles_neg, signed_index, C64};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub type Point3 = [f64; 3];

/// Complex `N_R x N_T` channel, rows indexed by Rx element, columns by Tx element.
pub type ChannelMatrix = Array2<C64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub n_tx: usize,
    pub n_rx: usize,
    pub carrier_hz: f64,
    pub spacing_m: f64,
    pub r0_m: f64,
    pub theta_tx: f64,
    pub theta_rx: f64,
    pub phi_rx: f64,
}

impl ArrayGeometry {
    /// Half-wavelength spaced geometry.
    pub fn new(
        n_tx: usize,
        n_rx: usize,
        carrier_hz: f64,
        r0_m: f64,
        theta_tx: f64,
        theta_rx: f64,
        phi_rx: f64,
    ) -> Result<Self> {
        let geom = Self {
            n_tx,
            n_rx,
            carrier_hz,
            spacing_m: SPEED_OF_LIGHT / carrier_hz / 2.0,
            r0_m,
            theta_tx,
            theta_rx,
            phi_rx,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn with_spacing(mut self, spacing_m: f64) -> Result<Self> {
        self.spacing_m = spacing_m;
        self.validate()?;
        Ok(self)
    }

    pub fn with_r0(mut self, r0_m: f64) -> Result<Self> {
        self.r0_m = r0_m;
        self.validate()?;
        Ok(self)
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n_tx == 0 || !self.n_tx.is_multiple_of(2) {
            errs.push(format!("n_tx must be a positive even count, got {}", self.n_tx));
        }
        if self.n_rx == 0 || !self.n_rx.is_multiple_of(2) {
            errs.push(format!("n_rx must be a positive even count, got {}", self.n_rx));
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            errs.push(format!("carrier_hz must be > 0, got {}", self.carrier_hz));
        }
        if !(self.spacing_m > 0.0 && self.spacing_m.is_finite()) {
            errs.push(format!("spacing_m must be > 0, got {}", self.spacing_m));
        }
        if !(self.r0_m > 0.0 && self.r0_m.is_finite()) {
            errs.push(format!("r0_m must be > 0, got {}", self.r0_m));
        }
        for (name, v) in [("theta_tx", self.theta_tx), ("theta_rx", self.theta_rx)] {
            if v.is_nan() || v.abs() >= FRAC_PI_2 {
                errs.push(format!("{name} must lie in (-pi/2, pi/2), got {v}"));
            }
        }
        if self.phi_rx.is_nan() || self.phi_rx.abs() > FRAC_PI_2 {
            errs.push(format!("phi_rx must lie in [-pi/2, pi/2], got {}", self.phi_rx));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

fn check_index(idx: i64, n: usize) -> Result<()> {
    let lo = -(n as i64) / 2 + 1;
    let hi = n as i64 / 2;
    if idx < lo || idx > hi {
        return Err(Error::IndexOutOfRange { index: idx, lo, hi });
    }
    Ok(())
}

pub fn tx_element_position(n1: i64, geom: &ArrayGeometry) -> Result<Point3> {
    check_index(n1, geom.n_tx)?;
    Ok([geom.spacing_m * n1 as f64, 0.0, 0.0])
}

/// Unit vector along the Rx array axis.
fn rx_axis(geom: &ArrayGeometry) -> Point3 {
    let in_plane = FRAC_PI_2 - geom.theta_rx + geom.theta_tx;
    let (sp, cp) = geom.phi_rx.sin_cos();
    [in_plane.sin() * cp, in_plane.cos() * cp, sp]
}

fn rx_center(geom: &ArrayGeometry) -> Point3 {
    let (s, c) = geom.theta_tx.sin_cos();
    [geom.r0_m * s, geom.r0_m * c, 0.0]
}

pub fn rx_element_position(n2: i64, geom: &ArrayGeometry) -> Result<Point3> {
    check_index(n2, geom.n_rx)?;
    let c = rx_center(geom);
    let u = rx_axis(geom);
    let off = geom.spacing_m * n2 as f64;
    Ok([c[0] + off * u[0], c[1] + off * u[1], c[2] + off * u[2]])
}

fn dist(a: Point3, b: Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

pub fn exact_distance(n1: i64, n2: i64, geom: &ArrayGeometry) -> Result<f64> {
    Ok(dist(rx_element_position(n2, geom)?, tx_element_position(n1, geom)?))
}

/// A point scatterer seen from both arrays.
///
/// On the Tx side the scatterer sits at polar position `(r_tx_m, theta_tx)`
/// from the Tx centre in the Tx array's own frame; on the Rx side it is placed
/// at the mirrored position `-(r_rx_m sin theta_rx, r_rx_m cos theta_rx)` in
/// the Rx array frame, the same relative arrangement the Tx centre has when
/// seen from the Rx array. This keeps the NLoS channel exactly separable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub r_tx_m: f64,
    pub r_rx_m: f64,
    pub theta_tx: f64,
    pub theta_rx: f64,
    pub gain: C64,
}

impl Scatterer {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_tx_m > 0.0 && self.r_rx_m > 0.0) {
            return Err(Error::Domain(format!(
                "scatterer ranges must be positive, got r_tx={} r_rx={}",
                self.r_tx_m, self.r_rx_m
            )));
        }
        Ok(())
    }

    /// Distance from Tx element `n1` to the scatterer.
    pub fn tx_distance(&self, n1: i64, geom: &ArrayGeometry) -> Result<f64> {
        let (s, c) = self.theta_tx.sin_cos();
        let p = [self.r_tx_m * s, self.r_tx_m * c, 0.0];
        Ok(dist(p, tx_element_position(n1, geom)?))
    }

    /// Distance from the scatterer to Rx element `n2`.
    pub fn rx_distance(&self, n2: i64, geom: &ArrayGeometry) -> Result<f64> {
        check_index(n2, geom.n_rx)?;
        let (s, c) = self.theta_rx.sin_cos();
        let p = [-self.r_rx_m * s, -self.r_rx_m * c, 0.0];
        Ok(dist(p, [geom.spacing_m * n2 as f64, 0.0, 0.0]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub geometry: ArrayGeometry,
    pub los_gain: C64,
    #[serde(default)]
    pub scatterers: Vec<Scatterer>,
}

pub fn exact_los_channel(scene: &Scene) -> Result<ChannelMatrix> {
    let g = &scene.geometry;
    let lambda = g.wavelength_m();
    let mut h = Array2::zeros((g.n_rx, g.n_tx));
    for ((i2, i1), v) in h.indexed_iter_mut() {
        let r = exact_distance(signed_index(i1, g.n_tx), signed_index(i2, g.n_rx), g)?;
        *v = scene.los_gain * cis_cycles_neg(r / lambda) / r;
    }
    Ok(h)
}

pub fn exact_nlos_channel(geom: &ArrayGeometry, scatterer: &Scatterer) -> Result<ChannelMatrix> {
    scatterer.validate()?;
    let lambda = geom.wavelength_m();
    let guard = 1e-9 * geom.spacing_m;
    let tx: Vec<f64> = (0..geom.n_tx)
        .map(|i| scatterer.tx_distance(signed_index(i, geom.n_tx), geom))
        .collect::<Result<_>>()?;
    let rx: Vec<f64> = (0..geom.n_rx)
        .map(|i| scatterer.rx_distance(signed_index(i, geom.n_rx), geom))
        .collect::<Result<_>>()?;
    if tx.iter().chain(rx.iter()).any(|&r| r < guard) {
        return Err(Error::Domain("scatterer collocated with an array element".into()));
    }
    let tx_f: Vec<C64> = tx.iter().map(|&r| cis_cycles_neg(r / lambda) / r).collect();
    let rx_f: Vec<C64> = rx.iter().map(|&r| cis_cycles_neg(r / lambda) / r).collect();
    Ok(Array2::from_shape_fn((geom.n_rx, geom.n_tx), |(i2, i1)| {
        scatterer.gain * rx_f[i2] * tx_f[i1]
    }))
}

/// LoS plus every NLoS component.
pub fn exact_channel(scene: &Scene) -> Result<ChannelMatrix> {
    let mut h = exact_los_channel(scene)?;
    for s in &scene.scatterers {
        h += &exact_nlos_channel(&scene.geometry, s)?;
    }
    Ok(h)
}

/// Random-scene parameters. Angles in radians, distances in metres, losses in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub carrier_hz: f64,
    /// Element spacing; half a wavelength when absent.
    pub spacing_m: Option<f64>,
    pub r0_m: f64,
    pub los_angle_range: [f64; 2],
    pub tilt_range: [f64; 2],
    pub num_nlos: usize,
    pub loss_db_range: [f64; 2],
    pub nlos_angle_range: [f64; 2],
    pub scatterer_range_m: [f64; 2],
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n_tx: 256,
            n_rx: 256,
            carrier_hz: 100e9,
            spacing_m: None,
            r0_m: 35.0,
            los_angle_range: [-FRAC_PI_3, FRAC_PI_3],
            tilt_range: [-FRAC_PI_2, FRAC_PI_2],
            num_nlos: 3,
            loss_db_range: [-25.0, -20.0],
            nlos_angle_range: [-FRAC_PI_3, FRAC_PI_3],
            scatterer_range_m: [17.5, 52.5],
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let range_ok = |r: &[f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        for (name, r, bound) in [
            ("los_angle_range", &self.los_angle_range, FRAC_PI_2),
            ("nlos_angle_range", &self.nlos_angle_range, FRAC_PI_2),
        ] {
            if !range_ok(r) || r[0] <= -bound || r[1] >= bound {
                errs.push(format!("{name} must be an ordered sub-range of (-pi/2, pi/2), got {r:?}"));
            }
        }
        if !range_ok(&self.tilt_range) || self.tilt_range[0] < -FRAC_PI_2 || self.tilt_range[1] > FRAC_PI_2 {
            errs.push(format!("tilt_range must be an ordered sub-range of [-pi/2, pi/2], got {:?}", self.tilt_range));
        }
        if !range_ok(&self.loss_db_range) {
            errs.push(format!("loss_db_range must be ordered and finite, got {:?}", self.loss_db_range));
        }
        if !range_ok(&self.scatterer_range_m) || self.scatterer_range_m[0] <= 0.0 {
            errs.push(format!("scatterer_range_m must be an ordered positive range, got {:?}", self.scatterer_range_m));
        }
        let probe = ArrayGeometry {
            n_tx: self.n_tx,
            n_rx: self.n_rx,
            carrier_hz: self.carrier_hz,
            spacing_m: self.spacing_m.unwrap_or(SPEED_OF_LIGHT / self.carrier_hz / 2.0),
            r0_m: self.r0_m,
            theta_tx: 0.0,
            theta_rx: 0.0,
            phi_rx: 0.0,
        };
        if let Err(Error::Config(more)) = probe.validate() {
            errs.extend(more);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Draws a random scene; the same `(config, seed)` always yields the same scene.
///
/// The LoS gain has unit magnitude and uniform phase. Each NLoS gain is scaled
/// so that its centre-element power sits `loss_db` below the LoS centre power.
pub fn synthesize_scene(config: &SceneConfig, seed: u64) -> Result<Scene> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut geometry = ArrayGeometry {
        n_tx: config.n_tx,
        n_rx: config.n_rx,
        carrier_hz: config.carrier_hz,
        spacing_m: config.spacing_m.unwrap_or(SPEED_OF_LIGHT / config.carrier_hz / 2.0),
        r0_m: config.r0_m,
        theta_tx: uniform(&mut rng, config.los_angle_range),
        theta_rx: uniform(&mut rng, config.los_angle_range),
        phi_rx: uniform(&mut rng, config.tilt_range),
    };
    // Open interval at the ends of the tilt range is not representable in a draw; clamp.
    geometry.phi_rx = geometry.phi_rx.clamp(-FRAC_PI_2, FRAC_PI_2);
    geometry.validate()?;
    let los_gain = C64::from_polar(1.0, rng.random_range(0.0..TAU));
    let scatterers = (0..config.num_nlos)
        .map(|_| {
            let theta_tx = uniform(&mut rng, config.nlos_angle_range);
            let theta_rx = uniform(&mut rng, config.nlos_angle_range);
            let r_tx_m = uniform(&mut rng, config.scatterer_range_m);
            let r_rx_m = uniform(&mut rng, config.scatterer_range_m);
            let loss_db = uniform(&mut rng, config.loss_db_range);
            let phase = rng.random_range(0.0..TAU);
            let amp = 10f64.powf(loss_db / 20.0) * r_tx_m * r_rx_m / config.r0_m;
            Scatterer { r_tx_m, r_rx_m, theta_tx, theta_rx, gain: C64::from_polar(amp, phase) }
        })
        .collect();
    Ok(Scene { geometry, los_gain, scatterers })
}
