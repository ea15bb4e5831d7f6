//! Unified LoS/NLoS orthogonal matching pursuit and its two baselines.
//!
//! Each iteration matches the residual against the sensed LoS sub-dictionary
//! and, separately, against every separable `(rx, tx)` pair of the per-side
//! polar dictionaries. The stronger normalized match (LoS on ties) joins the
//! support, all gains are refit by least squares over the whole support, and
//! the residual is the part of `y` outside the span of the sensed support.

use ndarray::{Array1, Array2};

use crate::dictionary::{polar_dictionary, Dictionary, Grid, LosDictionary};
use crate::error::{Error, Result};
use crate::geometry::ChannelMatrix;
use crate::linalg::{inner, kron_vec, least_squares, norm_sqr, unvec_col_major, C64};
use crate::sensing::{apply_sensing, nlos_correlation, PilotSet, SensedSide};

/// Relative residual below which pursuit stops early.
pub const DEFAULT_STOP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SupportSets {
    pub los: Vec<usize>,
    /// Paired with `nlos_rx` by position.
    pub nlos_tx: Vec<usize>,
    pub nlos_rx: Vec<usize>,
}

impl SupportSets {
    pub fn len(&self) -> usize {
        self.los.len() + self.nlos_tx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn has_pair(&self, rx: usize, tx: usize) -> bool {
        self.nlos_rx.iter().zip(&self.nlos_tx).any(|(&r, &t)| r == rx && t == tx)
    }
}

/// One support extension, in selection order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pick {
    Los(usize),
    Nlos { tx: usize, rx: usize },
}

#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub channel: ChannelMatrix,
    /// LoS gains first, then NLoS gains, each in selection order.
    pub gains: Array1<C64>,
    pub support: SupportSets,
    pub picks: Vec<Pick>,
    /// `||z||` after each iteration's refit.
    pub residual_norms: Vec<f64>,
    pub iterations_run: usize,
    /// Selections skipped because the index was already in the support.
    pub duplicate_skips: usize,
    /// Some refit needed ridge regularization.
    pub regularized: bool,
}

impl EstimateResult {
    pub fn warnings(&self) -> usize {
        self.duplicate_skips + usize::from(self.regularized)
    }
}

/// Sensed LoS sub-dictionary `Ψ Ĝ_sub` with cached column norms.
#[derive(Debug, Clone)]
pub struct SensedLos {
    pub sensed: Array2<C64>,
    pub norms: Vec<f64>,
}

impl SensedLos {
    pub fn new(g_sub: &LosDictionary, pilots: &PilotSet) -> Result<Self> {
        if g_sub.is_empty() {
            return Err(Error::Empty("LoS dictionary has no columns".into()));
        }
        let sensed = g_sub.sense(pilots)?;
        let norms = sensed.columns().into_iter().map(|c| norm_sqr(c.iter().copied()).sqrt()).collect();
        Ok(Self { sensed, norms })
    }
}

/// Largest normalized correlation `|<Ψ g_j, z>| / ||Ψ g_j||` and its column.
/// Ties go to the lowest index; `exclude` columns are skipped.
pub fn los_match(residual: &Array1<C64>, los: &SensedLos, exclude: &[usize]) -> Result<(f64, usize)> {
    if residual.len() != los.sensed.nrows() {
        return Err(Error::Dimension(format!(
            "residual has {} entries, sensed LoS atoms {}",
            residual.len(),
            los.sensed.nrows()
        )));
    }
    let corr = los.sensed.t().mapv(|x| x.conj()).dot(residual);
    let mut best = (0.0, 0usize);
    let mut found = false;
    for (j, (c, &nrm)) in corr.iter().zip(&los.norms).enumerate() {
        if nrm == 0.0 || exclude.contains(&j) {
            continue;
        }
        let score = c.norm() / nrm;
        if !found || score > best.0 {
            best = (score, j);
            found = true;
        }
    }
    Ok(best)
}

/// Normalized 2D match over separable `(rx, tx)` atom pairs; returns
/// `(gain, tx_index, rx_index)`.
pub fn nlos_match(
    residual: &Array1<C64>,
    pilots: &PilotSet,
    tx: &SensedSide,
    rx: &SensedSide,
    exclude: &[(usize, usize)],
) -> Result<(f64, usize, usize)> {
    let (g, m, n) = nlos_correlation(residual, pilots, rx, tx, exclude)?;
    Ok((g, n, m))
}

/// `[Ĝ_sub(:, Ω_L), conj(P_tx(:, Ω_tx)) ⊗ P_rx(:, Ω_rx)]`, LoS block first.
pub fn build_active_dictionary(
    support: &SupportSets,
    g_sub: Option<&LosDictionary>,
    p_tx: &Dictionary,
    p_rx: &Dictionary,
) -> Result<Array2<C64>> {
    if support.is_empty() {
        return Err(Error::Empty("support is empty".into()));
    }
    let rows = p_tx.rows() * p_rx.rows();
    let mut g = Array2::zeros((rows, support.len()));
    for (c, &j) in support.los.iter().enumerate() {
        let d = g_sub.ok_or_else(|| Error::Contract("LoS support without a LoS dictionary".into()))?;
        g.column_mut(c).assign(&d.column(j));
    }
    let off = support.los.len();
    for (c, (&t, &r)) in support.nlos_tx.iter().zip(&support.nlos_rx).enumerate() {
        let tx_conj = p_tx.atoms.column(t).mapv(|x| x.conj());
        g.column_mut(off + c).assign(&kron_vec(&tx_conj.view(), &p_rx.atoms.column(r)));
    }
    Ok(g)
}

/// Least-squares gains `β = (Ψ G)^† y` and the fitted observation `Ψ G β`.
pub fn least_squares_gains(
    y: &Array1<C64>,
    pilots: &PilotSet,
    active: &Array2<C64>,
) -> Result<(Array1<C64>, Array1<C64>, bool)> {
    let t2 = pilots.pilot_len().pow(2);
    if y.len() != t2 {
        return Err(Error::Dimension(format!("y has {} entries, expected {t2}", y.len())));
    }
    let mut sensed = Array2::zeros((t2, active.ncols()));
    for (j, col) in active.columns().into_iter().enumerate() {
        sensed.column_mut(j).assign(&apply_sensing(&col.to_owned(), pilots)?);
    }
    let sol = least_squares(&sensed.view(), &y.view());
    let fit = sensed.dot(&sol.coeffs);
    Ok((sol.coeffs, fit, sol.regularized))
}

/// Pre-sensed dictionaries for one pilot set, reusable across observations.
pub struct Pursuit<'a> {
    pilots: &'a PilotSet,
    g_sub: Option<&'a LosDictionary>,
    los: Option<SensedLos>,
    p_tx: &'a Dictionary,
    p_rx: &'a Dictionary,
    tx: SensedSide,
    rx: SensedSide,
}

impl<'a> Pursuit<'a> {
    /// `g_sub = None` disables the LoS branch.
    pub fn new(
        pilots: &'a PilotSet,
        g_sub: Option<&'a LosDictionary>,
        p_tx: &'a Dictionary,
        p_rx: &'a Dictionary,
    ) -> Result<Self> {
        let los = g_sub.map(|g| SensedLos::new(g, pilots)).transpose()?;
        Ok(Self {
            pilots,
            g_sub,
            los,
            p_tx,
            p_rx,
            tx: SensedSide::tx(pilots, p_tx)?,
            rx: SensedSide::rx(pilots, p_rx)?,
        })
    }

    /// `Ψ G` for `support`, assembled from the cached sensed atoms.
    pub fn sensed_active(&self, support: &SupportSets) -> Array2<C64> {
        let t = self.pilots.pilot_len();
        let mut a = Array2::zeros((t * t, support.len()));
        if let Some(los) = &self.los {
            for (c, &j) in support.los.iter().enumerate() {
                a.column_mut(c).assign(&los.sensed.column(j));
            }
        }
        let off = support.los.len();
        for (c, (&n, &m)) in support.nlos_tx.iter().zip(&support.nlos_rx).enumerate() {
            let left = self.rx.sensed.column(m);
            let right = self.tx.sensed.column(n);
            let mut col = a.column_mut(off + c);
            for t1 in 0..t {
                let r = right[t1].conj();
                for t2 in 0..t {
                    col[t1 * t + t2] = left[t2] * r;
                }
            }
        }
        a
    }

    pub fn run(&self, y: &Array1<C64>, n_iter: usize, stop_tol: f64) -> Result<EstimateResult> {
        if n_iter == 0 {
            return Err(Error::Contract("n_iter must be at least 1".into()));
        }
        let t = self.pilots.pilot_len();
        if y.len() != t * t {
            return Err(Error::Dimension(format!("y has {} entries, expected {}", y.len(), t * t)));
        }
        let (n_rx, n_tx) = (self.p_rx.rows(), self.p_tx.rows());
        let y_norm = norm_sqr(y.iter().copied()).sqrt();
        let mut result = EstimateResult {
            channel: Array2::zeros((n_rx, n_tx)),
            gains: Array1::zeros(0),
            support: SupportSets::default(),
            picks: Vec::new(),
            residual_norms: Vec::new(),
            iterations_run: 0,
            duplicate_skips: 0,
            regularized: false,
        };
        if y_norm == 0.0 {
            return Ok(result);
        }
        let mut z = y.clone();
        let mut skip_los: Vec<usize> = Vec::new();
        let mut skip_pairs: Vec<(usize, usize)> = Vec::new();
        let mut attempts = 0;
        while result.iterations_run < n_iter && attempts < 3 * n_iter {
            attempts += 1;
            let los_pick = match &self.los {
                Some(los) => Some(los_match(&z, los, &skip_los)?),
                None => None,
            };
            let (g_nl, jt, jr) = nlos_match(&z, self.pilots, &self.tx, &self.rx, &skip_pairs)?;
            let support = &mut result.support;
            match los_pick {
                Some((g_l, j)) if g_l >= g_nl => {
                    if support.los.contains(&j) {
                        log::warn!("duplicate LoS selection {j}; skipping");
                        result.duplicate_skips += 1;
                        skip_los.push(j);
                        continue;
                    }
                    support.los.push(j);
                    result.picks.push(Pick::Los(j));
                }
                _ => {
                    if support.has_pair(jr, jt) {
                        log::warn!("duplicate NLoS selection ({jr}, {jt}); skipping");
                        result.duplicate_skips += 1;
                        skip_pairs.push((jr, jt));
                        continue;
                    }
                    support.nlos_tx.push(jt);
                    support.nlos_rx.push(jr);
                    result.picks.push(Pick::Nlos { tx: jt, rx: jr });
                }
            }
            result.iterations_run += 1;
            let a = self.sensed_active(&result.support);
            let sol = least_squares(&a.view(), &y.view());
            result.regularized |= sol.regularized;
            z = y - &a.dot(&sol.coeffs);
            result.gains = sol.coeffs;
            let z_norm = norm_sqr(z.iter().copied()).sqrt();
            result.residual_norms.push(z_norm);
            if z_norm < stop_tol * y_norm {
                break;
            }
        }
        if !result.support.is_empty() {
            let g = build_active_dictionary(&result.support, self.g_sub, self.p_tx, self.p_rx)?;
            result.channel = unvec_col_major(&g.dot(&result.gains).view(), n_rx, n_tx);
        }
        Ok(result)
    }
}

/// Unified LoS/NLoS OMP over `g_sub` (LoS) and the per-side polar dictionaries.
pub fn xl_uomp(
    y: &Array1<C64>,
    pilots: &PilotSet,
    g_sub: &LosDictionary,
    p_tx: &Dictionary,
    p_rx: &Dictionary,
    n_iter: usize,
    stop_tol: f64,
) -> Result<EstimateResult> {
    Pursuit::new(pilots, Some(g_sub), p_tx, p_rx)?.run(y, n_iter, stop_tol)
}

/// 2D OMP over per-side polar dictionaries only (no coupling term).
pub fn baseline_polar_omp(
    y: &Array1<C64>,
    pilots: &PilotSet,
    p_tx: &Dictionary,
    p_rx: &Dictionary,
    n_iter: usize,
) -> Result<EstimateResult> {
    Pursuit::new(pilots, None, p_tx, p_rx)?.run(y, n_iter, DEFAULT_STOP_TOL)
}

/// 2D OMP over far-field DFT beamspace dictionaries on both sides.
pub fn baseline_farfield_omp(y: &Array1<C64>, pilots: &PilotSet, n_iter: usize) -> Result<EstimateResult> {
    let p_tx = polar_dictionary(pilots.n_tx(), &Grid::dft(pilots.n_tx()))?;
    let p_rx = polar_dictionary(pilots.n_rx(), &Grid::dft(pilots.n_rx()))?;
    baseline_polar_omp(y, pilots, &p_tx, &p_rx, n_iter)
}

/// Largest `|<a_j, z>| / (||a_j|| ||z||)` over the columns of `a`; zero for a
/// zero residual.
pub fn max_residual_coherence(a: &Array2<C64>, z: &Array1<C64>) -> f64 {
    let zn = norm_sqr(z.iter().copied()).sqrt();
    if zn == 0.0 {
        return 0.0;
    }
    a.columns()
        .into_iter()
        .map(|c| {
            let cn = norm_sqr(c.iter().copied()).sqrt();
            if cn == 0.0 {
                0.0
            } else {
                inner(&c, &z.view()).norm() / (cn * zn)
            }
        })
        .fold(0.0, f64::max)
}
