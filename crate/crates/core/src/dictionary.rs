//! Quantized parameter grids and the atom dictionaries built from them.
//!
//! Two kinds of dictionary exist. Per-side polar dictionaries hold steering
//! vectors `b_N(b_q, k_q)` and are always materialized. The generalized LoS
//! dictionary holds one vectorized channel atom per five-parameter tuple; it
//! can be very large, so [`LosDictionary`] stores only the tuples and produces
//! columns on demand.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{signed_index, vec_col_major, C64};
use crate::model::{steering_vector, vandermonde_window};
use crate::sensing::{nlos_correlation, PilotSet, SensedSide};

/// Default cap on `rows x columns` for any LoS dictionary, in complex entries.
pub const DEFAULT_ENTRY_BUDGET: usize = 1 << 26;

/// One side's quantized `(b, k)` values, plus the coupling values for LoS use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub b_values: Vec<f64>,
    pub k_values: Vec<f64>,
    #[serde(default)]
    pub omega_values: Vec<f64>,
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl Grid {
    /// `n_b` critically spaced directions `b_q = -1 + 2q / n_b` and `n_k`
    /// curvature points spread uniformly over `[k_lo, k_hi]`.
    pub fn uniform(n_b: usize, k_lo: f64, k_hi: f64, n_k: usize) -> Self {
        let b_values = (0..n_b).map(|q| -1.0 + 2.0 * q as f64 / n_b as f64).collect();
        let k_values = if n_k == 1 { vec![0.0f64.clamp(k_lo, k_hi)] } else { linspace(k_lo, k_hi, n_k) };
        Self { b_values, k_values, omega_values: Vec::new() }
    }

    /// Far-field DFT beamspace: `n` directions, no curvature.
    pub fn dft(n: usize) -> Self {
        Self::uniform(n, 0.0, 0.0, 1)
    }

    pub fn with_omega(mut self, omega_max: f64, n_omega: usize) -> Self {
        self.omega_values = linspace(0.0, omega_max, n_omega);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.b_values.is_empty() || !strictly_increasing(&self.b_values) {
            errs.push("b grid must be nonempty and strictly increasing".to_string());
        }
        if self.b_values.iter().any(|b| b.abs() > 1.0) {
            errs.push("b grid values must lie in [-1, 1]".to_string());
        }
        if self.k_values.is_empty() || !strictly_increasing(&self.k_values) {
            errs.push("k grid must be nonempty and strictly increasing".to_string());
        }
        if !strictly_increasing(&self.omega_values) {
            errs.push("omega grid must be strictly increasing".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn n_b(&self) -> usize {
        self.b_values.len()
    }

    pub fn n_k(&self) -> usize {
        self.k_values.len()
    }

    pub fn n_omega(&self) -> usize {
        self.omega_values.len()
    }
}

/// Grids for the generalized LoS dictionary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosGrids {
    pub tx: Grid,
    pub rx: Grid,
    pub omega_values: Vec<f64>,
}

impl LosGrids {
    pub fn validate(&self) -> Result<()> {
        self.tx.validate()?;
        self.rx.validate()?;
        if self.omega_values.is_empty() || !strictly_increasing(&self.omega_values) {
            return Err(Error::config("LoS omega grid must be nonempty and strictly increasing"));
        }
        Ok(())
    }

    pub fn column_count(&self) -> usize {
        self.tx.n_b() * self.tx.n_k() * self.rx.n_b() * self.rx.n_k() * self.omega_values.len()
    }
}

/// Generating parameters of a dictionary column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AtomMeta {
    Steering { n: usize, b: f64, k: f64 },
    Generalized { n_tx: usize, n_rx: usize, b_tx: f64, k_tx: f64, b_rx: f64, k_rx: f64, omega: f64 },
}

impl AtomMeta {
    pub fn column(&self) -> Array1<C64> {
        match *self {
            AtomMeta::Steering { n, b, k } => steering_vector(n, b, k),
            AtomMeta::Generalized { n_tx, n_rx, b_tx, k_tx, b_rx, k_rx, omega } => {
                generalized_atom(b_tx, k_tx, b_rx, k_rx, omega, n_tx, n_rx)
            }
        }
    }
}

/// Materialized atom matrix with the tuple behind every column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub atoms: Array2<C64>,
    pub meta: Vec<AtomMeta>,
}

impl Dictionary {
    pub fn rows(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn cols(&self) -> usize {
        self.atoms.ncols()
    }

    /// Per-column `(b, k)` of a steering dictionary.
    pub fn steering_params(&self, j: usize) -> Option<(f64, f64)> {
        match self.meta[j] {
            AtomMeta::Steering { b, k, .. } => Some((b, k)),
            AtomMeta::Generalized { .. } => None,
        }
    }

    /// Writes the binary cache: `u64` rows, `u64` cols, column-major
    /// interleaved re/im `f64` entries, all little-endian, then the column
    /// metadata as TOML text.
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&(self.rows() as u64).to_le_bytes())?;
        w.write_all(&(self.cols() as u64).to_le_bytes())?;
        for col in self.atoms.columns() {
            for x in col {
                w.write_all(&x.re.to_le_bytes())?;
                w.write_all(&x.im.to_le_bytes())?;
            }
        }
        #[derive(Serialize)]
        struct MetaDoc<'a> {
            meta: &'a [AtomMeta],
        }
        let text = toml::to_string(&MetaDoc { meta: &self.meta })
            .map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(text.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let rows = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let cols = u64::from_le_bytes(word) as usize;
        let mut atoms = Array2::zeros((rows, cols));
        for j in 0..cols {
            for i in 0..rows {
                r.read_exact(&mut word)?;
                let re = f64::from_le_bytes(word);
                r.read_exact(&mut word)?;
                let im = f64::from_le_bytes(word);
                atoms[[i, j]] = C64::new(re, im);
            }
        }
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        #[derive(Deserialize)]
        struct MetaDoc {
            meta: Vec<AtomMeta>,
        }
        let doc: MetaDoc = toml::from_str(&text)?;
        if doc.meta.len() != cols {
            return Err(Error::Format(format!("{} metadata entries for {cols} columns", doc.meta.len())));
        }
        Ok(Self { atoms, meta: doc.meta })
    }
}

/// Steering vectors over the Cartesian `b x k` grid, `b` outer.
pub fn polar_dictionary(n: usize, grid: &Grid) -> Result<Dictionary> {
    grid.validate()?;
    let meta: Vec<AtomMeta> = grid
        .b_values
        .iter()
        .flat_map(|&b| grid.k_values.iter().map(move |&k| AtomMeta::Steering { n, b, k }))
        .collect();
    let mut atoms = Array2::zeros((n, meta.len()));
    for (j, m) in meta.iter().enumerate() {
        atoms.column_mut(j).assign(&m.column());
    }
    Ok(Dictionary { atoms, meta })
}

/// `conj(b_tx) ⊗ b_rx ⊙ vec(V(omega))`, i.e. the column-major vectorization
/// of `(b_rx b_tx^H) ⊙ V(omega)`.
pub fn generalized_atom(
    b_tx: f64,
    k_tx: f64,
    b_rx: f64,
    k_rx: f64,
    omega: f64,
    n_tx: usize,
    n_rx: usize,
) -> Array1<C64> {
    let btx = steering_vector(n_tx, b_tx, k_tx);
    let brx = steering_vector(n_rx, b_rx, k_rx);
    let mut out = Array1::zeros(n_tx * n_rx);
    for i1 in 0..n_tx {
        let n1 = signed_index(i1, n_tx) as f64;
        let ct = btx[i1].conj();
        for i2 in 0..n_rx {
            let mut v = ct * brx[i2];
            if omega != 0.0 {
                let n2 = signed_index(i2, n_rx) as f64;
                v *= crate::linalg::cis_cycles_neg(omega * n1 * n2).conj();
            }
            out[i1 * n_rx + i2] = v;
        }
    }
    out
}

/// Generalized LoS dictionary stored as its parameter tuples.
///
/// Column order: `omega` outermost, then Tx `(b, k)`, then Rx `(b, k)`
/// innermost, `b` before `k` on each side.
#[derive(Debug, Clone, PartialEq)]
pub struct LosDictionary {
    pub n_tx: usize,
    pub n_rx: usize,
    pub tx_atoms: Vec<(f64, f64)>,
    pub rx_atoms: Vec<(f64, f64)>,
    pub omega_values: Vec<f64>,
}

impl LosDictionary {
    pub fn rows(&self) -> usize {
        self.n_tx * self.n_rx
    }

    pub fn cols(&self) -> usize {
        self.tx_atoms.len() * self.rx_atoms.len() * self.omega_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols() == 0
    }

    pub fn meta(&self, j: usize) -> AtomMeta {
        let nr = self.rx_atoms.len();
        let nt = self.tx_atoms.len();
        let (b_rx, k_rx) = self.rx_atoms[j % nr];
        let (b_tx, k_tx) = self.tx_atoms[(j / nr) % nt];
        let omega = self.omega_values[j / (nr * nt)];
        AtomMeta::Generalized { n_tx: self.n_tx, n_rx: self.n_rx, b_tx, k_tx, b_rx, k_rx, omega }
    }

    pub fn column(&self, j: usize) -> Array1<C64> {
        self.meta(j).column()
    }

    /// Materializes every column; refuses when over `budget` entries.
    pub fn materialize(&self, budget: usize) -> Result<Dictionary> {
        check_budget(self.rows(), self.cols(), budget)?;
        let meta: Vec<AtomMeta> = (0..self.cols()).map(|j| self.meta(j)).collect();
        let mut atoms = Array2::zeros((self.rows(), self.cols()));
        for (j, m) in meta.iter().enumerate() {
            atoms.column_mut(j).assign(&m.column());
        }
        Ok(Dictionary { atoms, meta })
    }

    /// Sensed atoms `Ψ g_j` for every column, without forming `Ψ` or the
    /// atoms: each atom is `diag(b_rx) V diag(b_tx^*)`, so its sensed image is
    /// `(Ψrx^H diag(b_rx)) V (diag(b_tx^*) Ψtx)`.
    pub fn sense(&self, pilots: &PilotSet) -> Result<Array2<C64>> {
        if pilots.n_tx() != self.n_tx || pilots.n_rx() != self.n_rx {
            return Err(Error::Dimension(format!(
                "pilots are {}x{} arrays, dictionary expects {}x{}",
                pilots.n_tx(),
                pilots.n_rx(),
                self.n_tx,
                self.n_rx
            )));
        }
        let t = pilots.pilot_len();
        let mut out = Array2::zeros((t * t, self.cols()));
        let psi_rx_h = pilots.psi_rx.t().mapv(|x| x.conj());
        let rx_left: Vec<Array2<C64>> = self
            .rx_atoms
            .iter()
            .map(|&(b, k)| {
                let s = steering_vector(self.n_rx, b, k);
                let mut m = psi_rx_h.clone();
                for (mut col, sv) in m.columns_mut().into_iter().zip(s.iter()) {
                    col.mapv_inplace(|x| x * sv);
                }
                m
            })
            .collect();
        let tx_right: Vec<Array2<C64>> = self
            .tx_atoms
            .iter()
            .map(|&(b, k)| {
                let s = steering_vector(self.n_tx, b, k);
                let mut m = pilots.psi_tx.clone();
                for (mut row, sv) in m.rows_mut().into_iter().zip(s.iter()) {
                    let c = sv.conj();
                    row.mapv_inplace(|x| x * c);
                }
                m
            })
            .collect();
        let (nt, nr) = (self.tx_atoms.len(), self.rx_atoms.len());
        for (w, &omega) in self.omega_values.iter().enumerate() {
            let v = vandermonde_window(self.n_rx, self.n_tx, omega)?.values;
            for (jt, right) in tx_right.iter().enumerate() {
                let vr = v.dot(right);
                for (jr, left) in rx_left.iter().enumerate() {
                    let s = left.dot(&vr);
                    let j = (w * nt + jt) * nr + jr;
                    out.column_mut(j).assign(&vec_col_major(&s.view()));
                }
            }
        }
        Ok(out)
    }
}

fn check_budget(rows: usize, cols: usize, budget: usize) -> Result<()> {
    if rows.saturating_mul(cols) > budget {
        return Err(Error::DictionaryTooLarge { rows, cols, budget });
    }
    Ok(())
}

fn side_atoms(grid: &Grid, b_keep: impl Fn(f64) -> bool) -> Vec<(f64, f64)> {
    grid.b_values
        .iter()
        .filter(|&&b| b_keep(b))
        .flat_map(|&b| grid.k_values.iter().map(move |&k| (b, k)))
        .collect()
}

/// Full generalized LoS dictionary over all five grids.
pub fn los_dictionary(grids: &LosGrids, n_tx: usize, n_rx: usize, budget: usize) -> Result<LosDictionary> {
    grids.validate()?;
    check_budget(n_tx * n_rx, grids.column_count(), budget)?;
    Ok(LosDictionary {
        n_tx,
        n_rx,
        tx_atoms: side_atoms(&grids.tx, |_| true),
        rx_atoms: side_atoms(&grids.rx, |_| true),
        omega_values: grids.omega_values.clone(),
    })
}

/// Coarse LoS direction window on each side, in DFT-grid indices and in `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sector {
    /// Inclusive DFT-grid index windows.
    pub tx_window: (usize, usize),
    pub rx_window: (usize, usize),
    /// The corresponding inclusive `b` intervals.
    pub tx_b: (f64, f64),
    pub rx_b: (f64, f64),
}

impl Sector {
    /// A sector spanning everything.
    pub fn full() -> Self {
        Self { tx_window: (0, usize::MAX), rx_window: (0, usize::MAX), tx_b: (-1.0, 1.0), rx_b: (-1.0, 1.0) }
    }
}

/// One far-field 2D matching pass over DFT grids on both sides; the strongest
/// `(tx, rx)` direction pair is widened by `width` grid points per side and
/// clipped at the grid edges.
pub fn coarse_sector(y: &Array1<C64>, pilots: &PilotSet, width: usize) -> Result<Sector> {
    if y.iter().all(|x| x.norm_sqr() == 0.0) {
        return Err(Error::NoDominantDirection);
    }
    let (n_tx, n_rx) = (pilots.n_tx(), pilots.n_rx());
    let tx = SensedSide::tx(pilots, &polar_dictionary(n_tx, &Grid::dft(n_tx))?)?;
    let rx = SensedSide::rx(pilots, &polar_dictionary(n_rx, &Grid::dft(n_rx))?)?;
    let (_, m, n) = nlos_correlation(y, pilots, &rx, &tx, &[])?;
    let window = |c: usize, len: usize| (c.saturating_sub(width), (c + width).min(len - 1));
    let tx_window = window(n, n_tx);
    let rx_window = window(m, n_rx);
    let b_of = |i: usize, len: usize| -1.0 + 2.0 * i as f64 / len as f64;
    Ok(Sector {
        tx_window,
        rx_window,
        tx_b: (b_of(tx_window.0, n_tx), b_of(tx_window.1, n_tx)),
        rx_b: (b_of(rx_window.0, n_rx), b_of(rx_window.1, n_rx)),
    })
}

/// LoS dictionary restricted to the `b` values inside the sector on each side.
pub fn los_subdictionary(
    grids: &LosGrids,
    sector: &Sector,
    n_tx: usize,
    n_rx: usize,
    budget: usize,
) -> Result<LosDictionary> {
    grids.validate()?;
    let eps = 1e-12;
    let inside = |r: (f64, f64)| move |b: f64| b >= r.0 - eps && b <= r.1 + eps;
    let tx_atoms = side_atoms(&grids.tx, inside(sector.tx_b));
    let rx_atoms = side_atoms(&grids.rx, inside(sector.rx_b));
    if tx_atoms.is_empty() || rx_atoms.is_empty() {
        return Err(Error::Empty("sector contains no grid directions".into()));
    }
    let dict = LosDictionary { n_tx, n_rx, tx_atoms, rx_atoms, omega_values: grids.omega_values.clone() };
    check_budget(dict.rows(), dict.cols(), budget)?;
    Ok(dict)
}
