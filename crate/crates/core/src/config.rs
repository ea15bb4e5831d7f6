//! Experiment configuration.
//!
//! Configs are TOML documents layered over a scale preset: keys present in
//! the file replace the preset's, absent keys keep it. Units are SI unless a
//! field name says otherwise (`_db`, `_hz`, `_m`); angles are radians.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dictionary::{linspace, Grid, LosGrids, DEFAULT_ENTRY_BUDGET};
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, SceneConfig, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    XlUomp,
    PolarOmp,
    FarfieldOmp,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::XlUomp, Method::PolarOmp, Method::FarfieldOmp];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::XlUomp => "xl-uomp",
            Method::PolarOmp => "polar-omp",
            Method::FarfieldOmp => "farfield-omp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown method {s:?}; expected xl-uomp, polar-omp or farfield-omp")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scale {
    /// 64-element arrays at a distance that keeps the paper-scale coupling.
    #[default]
    Desk,
    /// 256-element arrays at 35 m.
    Paper,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err(Error::config(format!("unknown scale {s:?}; expected desk or paper"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub carrier_hz: f64,
    /// Defaults to half a wavelength.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing_m: Option<f64>,
    /// Tx-to-Rx centre distance.
    pub r0_m: f64,
    /// LoS departure and arrival angles are drawn uniformly from this range.
    pub los_angle_range: [f64; 2],
    /// Rx tilt out of the common plane.
    pub tilt_range: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub num_nlos: usize,
    /// Per-path power below the LoS path.
    pub loss_db_range: [f64; 2],
    pub nlos_angle_range: [f64; 2],
    /// Scatterer distance from either array; `[0.5, 1.5] * r0_m` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scatterer_range_m: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Directions per side; the array size when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_b: Option<usize>,
    pub n_k: usize,
    pub n_omega: usize,
    /// Closest range the curvature and coupling grids must cover.
    pub r_min_m: f64,
    /// Overrides the curvature span derived from `r_min_m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<f64>,
    /// Overrides the coupling span derived from `r_min_m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_max: Option<f64>,
    /// Extra DFT bins kept on each side of the coarse LoS direction.
    pub sector_width: usize,
    /// Largest LoS dictionary, in complex entries.
    pub entry_budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub n_iter: usize,
    pub stop_tol: f64,
    pub methods: Vec<String>,
    /// RF chains per side. Recorded only; pilots are fully digital.
    pub n_rf: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub snr_db: Vec<f64>,
    pub pilot_len: Vec<usize>,
    pub trials: usize,
    pub seed_base: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoremConfig {
    pub n: usize,
    /// Coupling values expressed as `omega * N_T * N_R`.
    pub omega_products: Vec<f64>,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelErrorConfig {
    pub r0_m: Vec<f64>,
    pub theta_tx: f64,
    pub theta_rx: f64,
    pub phi_rx: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    /// `error`, `warn`, `info`, `debug` or `trace`.
    pub verbosity: String,
    /// Write measured wall time into `runtime_ms`; otherwise the column is 0
    /// and the CSV is reproducible byte for byte.
    pub record_runtime: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub paths: PathsConfig,
    pub grids: GridConfig,
    pub estimator: EstimatorConfig,
    pub sweep: SweepConfig,
    pub theorem: TheoremConfig,
    pub model_error: ModelErrorConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(Scale::Desk)
    }
}

const PAPER_N: usize = 256;
const PAPER_R0_M: f64 = 35.0;
const PAPER_R_MIN_M: f64 = 10.0;

impl ExperimentConfig {
    pub fn preset(scale: Scale) -> Self {
        let (n, t) = match scale {
            Scale::Desk => (64, 16),
            Scale::Paper => (PAPER_N, 25),
        };
        // Distances shrink with the aperture squared so that omega * N_T * N_R
        // and the per-side curvature phase match the 256-element link.
        let shrink = ((n as f64) / PAPER_N as f64).powi(2);
        let third = std::f64::consts::FRAC_PI_3;
        let half = std::f64::consts::FRAC_PI_2;
        Self {
            geometry: GeometryConfig {
                n_tx: n,
                n_rx: n,
                carrier_hz: 100e9,
                spacing_m: None,
                r0_m: PAPER_R0_M * shrink,
                los_angle_range: [-third, third],
                tilt_range: [-half, half],
            },
            paths: PathsConfig {
                num_nlos: 3,
                loss_db_range: [-25.0, -20.0],
                nlos_angle_range: [-third, third],
                scatterer_range_m: None,
            },
            grids: GridConfig {
                n_b: None,
                n_k: 4,
                n_omega: 8,
                r_min_m: PAPER_R_MIN_M * shrink,
                k_max: None,
                omega_max: None,
                sector_width: 2,
                entry_budget: match scale {
                    Scale::Desk => DEFAULT_ENTRY_BUDGET,
                    Scale::Paper => 1 << 28,
                },
            },
            estimator: EstimatorConfig {
                n_iter: 8,
                stop_tol: 1e-8,
                methods: Method::ALL.iter().map(|m| m.to_string()).collect(),
                n_rf: 5,
            },
            sweep: SweepConfig {
                snr_db: vec![-10.0, 0.0, 10.0, 20.0, 30.0],
                pilot_len: vec![t],
                trials: 20,
                seed_base: 0,
            },
            theorem: TheoremConfig {
                n: PAPER_N,
                omega_products: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0],
                energy: 0.9,
            },
            model_error: ModelErrorConfig {
                r0_m: vec![10.0, 20.0, 35.0, 50.0, 100.0],
                theta_tx: 0.4,
                theta_rx: -0.3,
                phi_rx: 0.6,
            },
            output: OutputConfig { csv: None, verbosity: "info".into(), record_runtime: false },
        }
    }

    /// Parses `text` over `base`, then validates.
    pub fn from_toml(text: &str, base: &ExperimentConfig) -> Result<Self> {
        let overlay: toml::Table = toml::from_str(text)?;
        let mut merged = toml::Table::try_from(base).map_err(|e| Error::Format(e.to_string()))?;
        merge_tables(&mut merged, overlay);
        let cfg: ExperimentConfig = toml::Value::Table(merged).try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.geometry.carrier_hz
    }

    pub fn spacing_m(&self) -> f64 {
        self.geometry.spacing_m.unwrap_or(self.wavelength_m() / 2.0)
    }

    pub fn scene_config(&self) -> SceneConfig {
        let g = &self.geometry;
        SceneConfig {
            n_tx: g.n_tx,
            n_rx: g.n_rx,
            carrier_hz: g.carrier_hz,
            spacing_m: g.spacing_m,
            r0_m: g.r0_m,
            los_angle_range: g.los_angle_range,
            tilt_range: g.tilt_range,
            num_nlos: self.paths.num_nlos,
            loss_db_range: self.paths.loss_db_range,
            nlos_angle_range: self.paths.nlos_angle_range,
            scatterer_range_m: self.paths.scatterer_range_m.unwrap_or([0.5 * g.r0_m, 1.5 * g.r0_m]),
        }
    }

    /// Largest `|k|` and `omega` of any path whose range is at least `r_min_m`.
    fn default_span(&self) -> f64 {
        let d = self.spacing_m();
        d * d / (self.wavelength_m() * self.grids.r_min_m)
    }

    pub fn k_max(&self) -> f64 {
        self.grids.k_max.unwrap_or_else(|| self.default_span())
    }

    pub fn omega_max(&self) -> f64 {
        self.grids.omega_max.unwrap_or_else(|| self.default_span())
    }

    /// Tx curvature is non-positive, Rx non-negative.
    pub fn tx_grid(&self) -> Grid {
        let n_b = self.grids.n_b.unwrap_or(self.geometry.n_tx);
        Grid::uniform(n_b, -self.k_max(), 0.0, self.grids.n_k)
    }

    pub fn rx_grid(&self) -> Grid {
        let n_b = self.grids.n_b.unwrap_or(self.geometry.n_rx);
        Grid::uniform(n_b, 0.0, self.k_max(), self.grids.n_k)
    }

    pub fn los_grids(&self) -> LosGrids {
        LosGrids {
            tx: self.tx_grid(),
            rx: self.rx_grid(),
            omega_values: linspace(0.0, self.omega_max(), self.grids.n_omega),
        }
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        self.estimator.methods.iter().map(|m| m.parse()).collect()
    }

    /// Geometry used by the model-error command at distance `r0_m`.
    pub fn model_error_geometry(&self) -> Result<ArrayGeometry> {
        let g = &self.geometry;
        let me = &self.model_error;
        let mut geom = ArrayGeometry::new(g.n_tx, g.n_rx, g.carrier_hz, g.r0_m, me.theta_tx, me.theta_rx, me.phi_rx)?;
        if let Some(d) = g.spacing_m {
            geom = geom.with_spacing(d)?;
        }
        Ok(geom)
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if let Err(Error::Config(more)) = self.scene_config().validate() {
            errs.extend(more.into_iter().map(|m| format!("geometry/paths: {m}")));
        }
        let gr = &self.grids;
        if gr.n_b == Some(0) {
            errs.push("grids.n_b must be at least 1".into());
        }
        if gr.n_k == 0 {
            errs.push("grids.n_k must be at least 1".into());
        }
        if gr.n_omega == 0 {
            errs.push("grids.n_omega must be at least 1".into());
        }
        if !(gr.r_min_m > 0.0 && gr.r_min_m.is_finite()) {
            errs.push(format!("grids.r_min_m must be positive, got {}", gr.r_min_m));
        }
        for (name, v) in [("grids.k_max", gr.k_max), ("grids.omega_max", gr.omega_max)] {
            if let Some(x) = v {
                if !(x >= 0.0 && x.is_finite()) {
                    errs.push(format!("{name} must be finite and non-negative, got {x}"));
                }
            }
        }
        if gr.entry_budget == 0 {
            errs.push("grids.entry_budget must be positive".into());
        }

        let est = &self.estimator;
        if est.n_iter == 0 {
            errs.push("estimator.n_iter must be at least 1".into());
        }
        if !(est.stop_tol >= 0.0 && est.stop_tol.is_finite()) {
            errs.push(format!("estimator.stop_tol must be finite and non-negative, got {}", est.stop_tol));
        }
        if est.methods.is_empty() {
            errs.push("estimator.methods must name at least one method".into());
        }
        for (i, m) in est.methods.iter().enumerate() {
            if m.parse::<Method>().is_err() {
                errs.push(format!("estimator.methods[{i}]: unknown method {m:?}"));
            } else if est.methods[..i].contains(m) {
                errs.push(format!("estimator.methods[{i}]: {m} listed twice"));
            }
        }

        let sw = &self.sweep;
        if sw.trials == 0 {
            errs.push("sweep.trials must be at least 1".into());
        }
        if sw.snr_db.is_empty() {
            errs.push("sweep.snr_db must not be empty".into());
        }
        if sw.snr_db.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            errs.push("sweep.snr_db entries must be numbers (inf means noiseless)".into());
        }
        if sw.pilot_len.is_empty() {
            errs.push("sweep.pilot_len must not be empty".into());
        }
        let n_min = self.geometry.n_tx.min(self.geometry.n_rx);
        for &t in &sw.pilot_len {
            if t == 0 || t > n_min {
                errs.push(format!("sweep.pilot_len entry {t} must lie in 1..={n_min}"));
            }
        }

        let th = &self.theorem;
        if th.n < 2 || !th.n.is_multiple_of(2) {
            errs.push(format!("theorem.n must be even and at least 2, got {}", th.n));
        }
        if th.omega_products.iter().any(|p| !(p.is_finite() && p.round() >= 1.0)) {
            errs.push("theorem.omega_products entries must round to at least 1".into());
        }
        if !(th.energy > 0.0 && th.energy < 1.0) {
            errs.push(format!("theorem.energy must lie in (0, 1), got {}", th.energy));
        }

        let me = &self.model_error;
        if me.r0_m.is_empty() {
            errs.push("model_error.r0_m must not be empty".into());
        }
        if me.r0_m.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            errs.push("model_error.r0_m entries must be positive".into());
        }
        if !(me.theta_tx.abs() < std::f64::consts::FRAC_PI_2 && me.theta_rx.abs() < std::f64::consts::FRAC_PI_2) {
            errs.push("model_error angles must lie in (-pi/2, pi/2)".into());
        }
        if me.phi_rx.abs() > std::f64::consts::FRAC_PI_2 {
            errs.push("model_error.phi_rx must lie in [-pi/2, pi/2]".into());
        }

        if !["error", "warn", "info", "debug", "trace"].contains(&self.output.verbosity.as_str()) {
            errs.push(format!("output.verbosity: unknown level {:?}", self.output.verbosity));
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

fn merge_tables(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}
