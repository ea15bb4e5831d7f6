//! Pilots, the Kronecker-structured sensing operator and noisy observations.
//!
//! With Tx pilots `Ψtx` (`N_T x T`) and Rx combiners `Ψrx` (`N_R x T`) the
//! observation of a channel `H` is `y = (Ψtx^T ⊗ Ψrx^H) vec(H)`, which equals
//! `vec(Ψrx^H H Ψtx)`. Only the second form is ever evaluated.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::geometry::ChannelMatrix;
use crate::linalg::{herm, kron, norm_sqr, unvec_col_major, vec_col_major, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct PilotSet {
    pub psi_tx: Array2<C64>,
    pub psi_rx: Array2<C64>,
}

impl PilotSet {
    pub fn new(psi_tx: Array2<C64>, psi_rx: Array2<C64>) -> Result<Self> {
        if psi_tx.ncols() != psi_rx.ncols() || psi_tx.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "pilot lengths differ or are zero: tx {} rx {}",
                psi_tx.ncols(),
                psi_rx.ncols()
            )));
        }
        Ok(Self { psi_tx, psi_rx })
    }

    /// Independent random sign pilots on both sides from one seed.
    pub fn random(n_tx: usize, n_rx: usize, t: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi_tx = sign_matrix(&mut rng, n_tx, t);
        let psi_rx = sign_matrix(&mut rng, n_rx, t);
        Self { psi_tx, psi_rx }
    }

    pub fn n_tx(&self) -> usize {
        self.psi_tx.nrows()
    }

    pub fn n_rx(&self) -> usize {
        self.psi_rx.nrows()
    }

    pub fn pilot_len(&self) -> usize {
        self.psi_tx.ncols()
    }
}

fn sign_matrix(rng: &mut ChaCha8Rng, n: usize, t: usize) -> Array2<C64> {
    let a = 1.0 / (n as f64).sqrt();
    // Column by column so that growing `t` keeps the leading columns.
    let mut m = Array2::zeros((n, t));
    for j in 0..t {
        for i in 0..n {
            m[[i, j]] = C64::new(if rng.random::<bool>() { a } else { -a }, 0.0);
        }
    }
    m
}

/// `n x t` matrix of equiprobable `±1/sqrt(n)` entries.
pub fn random_pilot_matrix(n: usize, t: usize, seed: u64) -> Array2<C64> {
    sign_matrix(&mut ChaCha8Rng::seed_from_u64(seed), n, t)
}

/// `y = vec(Ψrx^H unvec(h) Ψtx)`, never forming the `T^2 x N_T N_R` operator.
pub fn apply_sensing(h_vec: &Array1<C64>, pilots: &PilotSet) -> Result<Array1<C64>> {
    let (n_tx, n_rx) = (pilots.n_tx(), pilots.n_rx());
    if h_vec.len() != n_tx * n_rx {
        return Err(Error::Dimension(format!(
            "channel vector has {} entries, pilots expect {}",
            h_vec.len(),
            n_tx * n_rx
        )));
    }
    let h = unvec_col_major(&h_vec.view(), n_rx, n_tx);
    Ok(sense_matrix(&h, pilots))
}

/// Sensing applied directly to an `N_R x N_T` matrix.
pub fn sense_matrix(h: &ChannelMatrix, pilots: &PilotSet) -> Array1<C64> {
    let s = herm(&pilots.psi_rx.view()).dot(h).dot(&pilots.psi_tx);
    vec_col_major(&s.view())
}

/// The explicit `Ψtx^T ⊗ Ψrx^H` operator. Only for small cross-checks.
pub fn dense_sensing_matrix(pilots: &PilotSet) -> Array2<C64> {
    kron(&pilots.psi_tx.t(), &herm(&pilots.psi_rx.view()).view())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub y: Array1<C64>,
    /// Noise variance per complex entry; zero for a noiseless observation.
    pub noise_var: f64,
    pub seed: u64,
}

/// Senses `channel` and adds circular Gaussian noise so that
/// `||y_clean||^2 / (T^2 sigma^2)` equals `snr_db`. An infinite SNR gives the
/// noiseless observation.
pub fn measure(channel: &ChannelMatrix, pilots: &PilotSet, snr_db: f64, seed: u64) -> Result<Measurement> {
    if channel.dim() != (pilots.n_rx(), pilots.n_tx()) {
        return Err(Error::Dimension(format!(
            "channel is {:?}, pilots expect ({}, {})",
            channel.dim(),
            pilots.n_rx(),
            pilots.n_tx()
        )));
    }
    if channel.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return Err(Error::Domain("channel has non-finite entries".into()));
    }
    let mut y = sense_matrix(channel, pilots);
    if snr_db == f64::INFINITY {
        return Ok(Measurement { y, noise_var: 0.0, seed });
    }
    let power = norm_sqr(y.iter().copied());
    if power == 0.0 {
        return Err(Error::Domain("SNR undefined for a zero observation".into()));
    }
    let noise_var = power / (y.len() as f64 * 10f64.powf(snr_db / 10.0));
    let sd = (noise_var / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in y.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *v += C64::new(sd * re, sd * im);
    }
    Ok(Measurement { y, noise_var, seed })
}

/// One side's dictionary seen through its pilots, `Ψ^H P` (`T x M`), with
/// column norms cached for matching.
#[derive(Debug, Clone)]
pub struct SensedSide {
    pub sensed: Array2<C64>,
    pub norms: Vec<f64>,
}

impl SensedSide {
    fn build(psi: &Array2<C64>, dict: &Dictionary) -> Result<Self> {
        if psi.nrows() != dict.rows() {
            return Err(Error::Dimension(format!(
                "pilot matrix has {} rows, dictionary {}",
                psi.nrows(),
                dict.rows()
            )));
        }
        let sensed = herm(&psi.view()).dot(&dict.atoms);
        let norms = sensed.columns().into_iter().map(|c| norm_sqr(c.iter().copied()).sqrt()).collect();
        Ok(Self { sensed, norms })
    }

    pub fn tx(pilots: &PilotSet, dict: &Dictionary) -> Result<Self> {
        Self::build(&pilots.psi_tx, dict)
    }

    pub fn rx(pilots: &PilotSet, dict: &Dictionary) -> Result<Self> {
        Self::build(&pilots.psi_rx, dict)
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }
}

/// 2D matching of a residual against separable (rank-one) atoms.
///
/// `G = (Ψrx^H P_rx)^H Z (Ψtx^H P_tx)` with `Z = unvec(z)`; entry `(m, n)` is
/// normalized by the sensed-atom norms. Returns the largest normalized
/// magnitude and its `(rx, tx)` indices, skipping pairs in `exclude`. Ties go
/// to the lowest row-major flat index.
pub fn nlos_correlation(
    z: &Array1<C64>,
    pilots: &PilotSet,
    rx: &SensedSide,
    tx: &SensedSide,
    exclude: &[(usize, usize)],
) -> Result<(f64, usize, usize)> {
    let t = pilots.pilot_len();
    if z.len() != t * t {
        return Err(Error::Dimension(format!("residual has {} entries, expected {}", z.len(), t * t)));
    }
    let zm = unvec_col_major(&z.view(), t, t);
    let g = herm(&rx.sensed.view()).dot(&zm).dot(&tx.sensed);
    let mut best = (0.0, 0usize, 0usize);
    let mut found = false;
    for ((m, n), v) in g.indexed_iter() {
        let denom = rx.norms[m] * tx.norms[n];
        if denom == 0.0 || exclude.contains(&(m, n)) {
            continue;
        }
        let score = v.norm() / denom;
        if !found || score > best.0 {
            best = (score, m, n);
            found = true;
        }
    }
    Ok(best)
}
