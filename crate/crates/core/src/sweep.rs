//! Monte-Carlo sweeps and the CSV files they produce.
//!
//! Every random draw in a sweep derives from `seed_base` and the sweep point:
//! `seed = seed_base ^ point_hash(snr_db, pilot_len, trial)`. The scene uses
//! `seed`, the pilots and noise use fixed salts of it.

use std::io::Write;
use std::time::Instant;

use crate::analysis::{effective_rank, model_error_curve, nmse, subspace_power_fraction, beam_count, ModelErrorPoint};
use crate::config::{ExperimentConfig, Method};
use crate::dictionary::{coarse_sector, los_subdictionary, polar_dictionary, Dictionary};
use crate::error::Result;
use crate::estimator::{baseline_farfield_omp, baseline_polar_omp, xl_uomp, EstimateResult};
use crate::geometry::{exact_channel, synthesize_scene, ChannelMatrix};
use crate::model::vandermonde_window;
use crate::sensing::{measure, Measurement, PilotSet};

pub const CSV_HEADER: &str = "# xlmimo-sparse v1";

const PILOT_SALT: u64 = 0x5049_4c4f_5453_0001;
const NOISE_SALT: u64 = 0x4e4f_4953_4500_0002;

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub n_tx: usize,
    pub n_rx: usize,
    pub snr_db: f64,
    pub pilot_len: usize,
    pub trial: usize,
    pub seed: u64,
    pub nmse_db: f64,
    pub runtime_ms: f64,
    pub iterations: usize,
    pub warnings: usize,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable hash of a sweep point.
pub fn point_hash(snr_db: f64, pilot_len: usize, trial: usize) -> u64 {
    [snr_db.to_bits(), pilot_len as u64, trial as u64]
        .into_iter()
        .fold(0u64, |h, x| splitmix64(h ^ x))
}

pub fn point_seed(seed_base: u64, snr_db: f64, pilot_len: usize, trial: usize) -> u64 {
    seed_base ^ point_hash(snr_db, pilot_len, trial)
}

/// Shared read-only inputs for every trial of a sweep.
pub struct SweepContext<'a> {
    pub config: &'a ExperimentConfig,
    pub methods: Vec<Method>,
    pub p_tx: Dictionary,
    pub p_rx: Dictionary,
}

impl<'a> SweepContext<'a> {
    pub fn new(config: &'a ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let g = &config.geometry;
        Ok(Self {
            config,
            methods: config.methods()?,
            p_tx: polar_dictionary(g.n_tx, &config.tx_grid())?,
            p_rx: polar_dictionary(g.n_rx, &config.rx_grid())?,
        })
    }

    pub fn run_method(&self, method: Method, m: &Measurement, pilots: &PilotSet) -> Result<EstimateResult> {
        let est = &self.config.estimator;
        match method {
            Method::XlUomp => {
                let g = &self.config.geometry;
                let sector = coarse_sector(&m.y, pilots, self.config.grids.sector_width)?;
                let g_sub = los_subdictionary(
                    &self.config.los_grids(),
                    &sector,
                    g.n_tx,
                    g.n_rx,
                    self.config.grids.entry_budget,
                )?;
                xl_uomp(&m.y, pilots, &g_sub, &self.p_tx, &self.p_rx, est.n_iter, est.stop_tol)
            }
            Method::PolarOmp => baseline_polar_omp(&m.y, pilots, &self.p_tx, &self.p_rx, est.n_iter),
            Method::FarfieldOmp => baseline_farfield_omp(&m.y, pilots, est.n_iter),
        }
    }

    /// Draws the scene, pilots and observation for one sweep point.
    pub fn trial_inputs(&self, seed: u64, snr_db: f64, pilot_len: usize) -> Result<(ChannelMatrix, PilotSet, Measurement)> {
        let g = &self.config.geometry;
        let scene = synthesize_scene(&self.config.scene_config(), seed)?;
        let h = exact_channel(&scene)?;
        let pilots = PilotSet::random(g.n_tx, g.n_rx, pilot_len, seed ^ PILOT_SALT);
        let m = measure(&h, &pilots, snr_db, seed ^ NOISE_SALT)?;
        Ok((h, pilots, m))
    }

    pub fn run_trial(&self, snr_db: f64, pilot_len: usize, trial: usize) -> Result<Vec<ResultRow>> {
        let seed = point_seed(self.config.sweep.seed_base, snr_db, pilot_len, trial);
        let (h, pilots, m) = self.trial_inputs(seed, snr_db, pilot_len)?;
        let g = &self.config.geometry;
        self.methods
            .iter()
            .map(|&method| {
                let start = Instant::now();
                let est = self.run_method(method, &m, &pilots)?;
                let elapsed = start.elapsed().as_secs_f64() * 1e3;
                Ok(ResultRow {
                    method,
                    n_tx: g.n_tx,
                    n_rx: g.n_rx,
                    snr_db,
                    pilot_len,
                    trial,
                    seed,
                    nmse_db: nmse(&est.channel, &h)?,
                    runtime_ms: if self.config.output.record_runtime { elapsed } else { 0.0 },
                    iterations: est.iterations_run,
                    warnings: est.warnings(),
                })
            })
            .collect()
    }
}

/// All `(snr, pilot_len, trial)` points in output order.
pub fn sweep_points(config: &ExperimentConfig) -> Vec<(f64, usize, usize)> {
    let sw = &config.sweep;
    let mut pts = Vec::new();
    for &snr in &sw.snr_db {
        for &t in &sw.pilot_len {
            for trial in 0..sw.trials {
                pts.push((snr, t, trial));
            }
        }
    }
    pts
}

/// One row per (method, point, trial); order is independent of scheduling.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let ctx = SweepContext::new(config)?;
    let pts = sweep_points(config);
    log::info!("sweep: {} points x {} methods", pts.len(), ctx.methods.len());
    let rows = crate::par_map(&pts, |&(snr, t, trial)| ctx.run_trial(snr, t, trial));
    let mut out = Vec::with_capacity(pts.len() * ctx.methods.len());
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

/// `%g`-style formatting with six significant digits.
pub fn fmt_sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mant.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn write_results_csv<W: Write>(rows: &[ResultRow], mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    writeln!(w, "method,n_tx,n_rx,snr_db,pilot_len,trial,seed,nmse_db,runtime_ms,iterations,warnings")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.n_tx,
            r.n_rx,
            fmt_sig6(r.snr_db),
            r.pilot_len,
            r.trial,
            r.seed,
            fmt_sig6(r.nmse_db),
            fmt_sig6(r.runtime_ms),
            r.iterations,
            r.warnings
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremRow {
    pub omega: f64,
    pub beam_count: usize,
    pub power_fraction: f64,
    pub effective_rank: usize,
}

/// Power fraction and effective rank of the coupling window over the
/// configured `omega * N_T * N_R` values at `theorem.n`.
pub fn verify_theorem1(config: &ExperimentConfig) -> Result<Vec<TheoremRow>> {
    config.validate()?;
    let th = &config.theorem;
    let n = th.n;
    crate::par_map(&th.omega_products, |&p| {
        let omega = p / (n * n) as f64;
        let v = vandermonde_window(n, n, omega)?.values;
        Ok(TheoremRow {
            omega,
            beam_count: beam_count(n, n, omega),
            power_fraction: subspace_power_fraction(n, n, omega)?,
            effective_rank: effective_rank(&v, th.energy)?,
        })
    })
    .into_iter()
    .collect()
}

pub fn write_theorem_csv<W: Write>(rows: &[TheoremRow], n: usize, mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    writeln!(w, "n,omega,omega_ntnr,beam_count,power_fraction,effective_rank")?;
    for r in rows {
        writeln!(
            w,
            "{n},{},{},{},{},{}",
            fmt_sig6(r.omega),
            fmt_sig6(r.omega * (n * n) as f64),
            r.beam_count,
            fmt_sig6(r.power_fraction),
            r.effective_rank
        )?;
    }
    Ok(())
}

pub fn model_error_command(config: &ExperimentConfig) -> Result<Vec<ModelErrorPoint>> {
    config.validate()?;
    model_error_curve(&config.model_error_geometry()?, &config.model_error.r0_m)
}

pub fn write_model_error_csv<W: Write>(rows: &[ModelErrorPoint], mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    writeln!(w, "r0_m,nmse_farfield_db,nmse_polar_db,nmse_generalized_db")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_sig6(r.r0_m),
            fmt_sig6(r.nmse_farfield_db),
            fmt_sig6(r.nmse_polar_db),
            fmt_sig6(r.nmse_generalized_db)
        )?;
    }
    Ok(())
}
