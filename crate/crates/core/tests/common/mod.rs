#![allow(dead_code)]

use ndarray::Array1;
use xlmimo_sparse::dictionary::{
    coarse_sector, los_subdictionary, polar_dictionary, AtomMeta, Dictionary, Grid, LosDictionary, LosGrids,
    DEFAULT_ENTRY_BUDGET,
};
use xlmimo_sparse::geometry::ChannelMatrix;
use xlmimo_sparse::model::{approx_los_channel, PathParams};
use xlmimo_sparse::sensing::{sense_matrix, PilotSet};
use xlmimo_sparse::C64;

pub const N: usize = 32;
pub const T: usize = 12;
pub const K_MAX: f64 = 0.01;
pub const OMEGA_MAX: f64 = 0.004;
/// A chirp with curvature `K_MAX` spreads over `K_MAX * N^2 / 2` DFT bins each way.
pub const SECTOR_WIDTH: usize = 6;

/// Grids for the on-grid recovery problems.
pub fn grids() -> LosGrids {
    let omega_values = (0..8).map(|i| OMEGA_MAX * i as f64 / 7.0).collect();
    LosGrids { tx: Grid::uniform(N, -K_MAX, 0.0, 4), rx: Grid::uniform(N, 0.0, K_MAX, 4), omega_values }
}

pub struct Problem {
    pub grids: LosGrids,
    pub pilots: PilotSet,
    pub p_tx: Dictionary,
    pub p_rx: Dictionary,
    pub h: ChannelMatrix,
    pub y: Array1<C64>,
}

impl Problem {
    pub fn new(paths: &[PathParams], pilot_seed: u64) -> Self {
        let grids = grids();
        let pilots = PilotSet::random(N, N, T, pilot_seed);
        let mut h = ChannelMatrix::zeros((N, N));
        for p in paths {
            h += &approx_los_channel(p, N, N).unwrap();
        }
        let y = sense_matrix(&h, &pilots);
        Self {
            p_tx: polar_dictionary(N, &grids.tx).unwrap(),
            p_rx: polar_dictionary(N, &grids.rx).unwrap(),
            grids,
            pilots,
            h,
            y,
        }
    }

    pub fn sub_dictionary(&self) -> LosDictionary {
        let sector = coarse_sector(&self.y, &self.pilots, SECTOR_WIDTH).unwrap();
        los_subdictionary(&self.grids, &sector, N, N, DEFAULT_ENTRY_BUDGET).unwrap()
    }
}

/// Path with every coefficient taken from the grids by index.
pub fn on_grid_path(g: &LosGrids, tx: (usize, usize), rx: (usize, usize), w: usize, beta: C64) -> PathParams {
    PathParams {
        b_tx: g.tx.b_values[tx.0],
        k_tx: g.tx.k_values[tx.1],
        b_rx: g.rx.b_values[rx.0],
        k_rx: g.rx.k_values[rx.1],
        omega: g.omega_values[w],
        beta,
    }
}

/// Column of `dict` generated by `p`, if any.
pub fn column_of(dict: &LosDictionary, p: &PathParams) -> Option<usize> {
    (0..dict.cols()).find(|&j| match dict.meta(j) {
        AtomMeta::Generalized { b_tx, k_tx, b_rx, k_rx, omega, .. } => {
            b_tx == p.b_tx && k_tx == p.k_tx && b_rx == p.b_rx && k_rx == p.k_rx && omega == p.omega
        }
        _ => false,
    })
}

/// Polar-dictionary column of `(b, k)`.
pub fn polar_column(d: &Dictionary, b: f64, k: f64) -> usize {
    (0..d.cols()).find(|&j| d.steering_params(j) == Some((b, k))).expect("on-grid atom")
}
