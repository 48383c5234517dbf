//! Chain Hamiltonian specification and its free-fermion mode structure.
//!
//! The Hamiltonian is
//!
//! ```text
//! H = 1/2 sum_n J_n ((1+g) XX + (1-g) YY)_{n,n+1}
//!   - 1/2 sum_n B_n Z_n - 1/2 D sum_{n>=2} Z_n
//! ```
//!
//! with open boundaries. At `g = 0` the Jordan-Wigner picture is a free
//! hopping problem: an `N x N` symmetric tridiagonal matrix with off-diagonal
//! `J_n` and diagonal `-B_n` (`-B_n - D` on sites 2..N), plus a tracked scalar
//! constant. The "interface convention" `J_1 = B_1 = 0` decouples site 1 so
//! that `b_1 = a_1` is an exact zero mode kept as workspace.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used to recognize the engineered regular ladder.
const LADDER_DETECT_TOL: f64 = 1e-6;

/// Physical description of the chain. All energies in units with hbar = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    /// Number of sites, N >= 2.
    pub n_sites: usize,
    /// Couplings J_1..J_{N-1} between neighboring sites.
    pub couplings: Vec<f64>,
    /// Local fields B_1..B_N.
    pub fields: Vec<f64>,
    /// Anisotropy of the XX/YY balance.
    pub gamma: f64,
    /// Uniform diagonal shift applied to sites 2..N, breaking +/- lambda
    /// degeneracies while keeping the site-1 mode at zero.
    pub offset: f64,
}

impl ChainSpec {
    pub fn new(couplings: Vec<f64>, fields: Vec<f64>, gamma: f64, offset: f64) -> Result<Self> {
        let n_sites = fields.len();
        if n_sites < 2 {
            return Err(Error::InvalidSize {
                min: 2,
                got: n_sites,
            });
        }
        if couplings.len() != n_sites - 1 {
            return Err(Error::Parse {
                file: String::new(),
                line: 0,
                field: "couplings".into(),
                message: format!(
                    "expected {} couplings for {} sites, got {}",
                    n_sites - 1,
                    n_sites,
                    couplings.len()
                ),
            });
        }
        let spec = Self {
            n_sites,
            couplings,
            fields,
            gamma,
            offset,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if !self.couplings.iter().all(|j| j.is_finite()) {
            return Err(Error::NonFinite("couplings"));
        }
        if !self.fields.iter().all(|b| b.is_finite()) {
            return Err(Error::NonFinite("fields"));
        }
        if !self.gamma.is_finite() {
            return Err(Error::NonFinite("gamma"));
        }
        if !self.offset.is_finite() {
            return Err(Error::NonFinite("offset"));
        }
        Ok(())
    }

    /// Chain with the engineered couplings of [`engineered_couplings`],
    /// zero fields and the given spectral offset.
    pub fn engineered(n_sites: usize, offset: f64) -> Result<Self> {
        let j = engineered_couplings(n_sites)?;
        let mut couplings = vec![0.0];
        couplings.extend(j);
        Ok(Self {
            n_sites,
            couplings,
            fields: vec![0.0; n_sites],
            gamma: 0.0,
            offset,
        })
    }

    /// Interface-convention chain with J_2..J_{N-1} = 1 and zero fields.
    pub fn uniform_interface(n_sites: usize, offset: f64) -> Result<Self> {
        if n_sites < 3 {
            return Err(Error::InvalidSize {
                min: 3,
                got: n_sites,
            });
        }
        let mut couplings = vec![1.0; n_sites - 1];
        couplings[0] = 0.0;
        Ok(Self {
            n_sites,
            couplings,
            fields: vec![0.0; n_sites],
            gamma: 0.0,
            offset,
        })
    }

    /// Fully uniform chain (J_n = 1 everywhere, no decoupled site).
    pub fn uniform(n_sites: usize) -> Result<Self> {
        if n_sites < 2 {
            return Err(Error::InvalidSize {
                min: 2,
                got: n_sites,
            });
        }
        Ok(Self {
            n_sites,
            couplings: vec![1.0; n_sites - 1],
            fields: vec![0.0; n_sites],
            gamma: 0.0,
            offset: 0.0,
        })
    }

    /// True when J_1 = 0 and B_1 = 0, so b_1 = a_1 and lambda_1 = 0.
    pub fn interface_convention(&self) -> bool {
        self.couplings[0] == 0.0 && self.fields[0] == 0.0
    }

    pub fn require_interface_convention(&self) -> Result<()> {
        if self.interface_convention() {
            Ok(())
        } else {
            Err(Error::InterfaceConvention {
                j1: self.couplings[0],
                b1: self.fields[0],
            })
        }
    }

    /// Number of logical qubits hosted by the pair encoding.
    pub fn n_logical(&self) -> usize {
        (self.n_sites - 1) / 2
    }
}

/// Engineered couplings J_2..J_{N-1}:
///
/// ```text
/// J_{n+1}^2 = n^2 ((N-1)^2 - n^2) / ((N-2)^2 (2n-1)(2n+1)),  n = 1..N-2
/// ```
///
/// normalized so the coupled block of sites 2..N has eigenvalues exactly on
/// the regular ladder `-1 + 2k/(N-2)`, k = 0..N-2 (spacing `2/(N-2)`, range
/// `[-1, 1]`), with every eigenvector overlapping site 2 by `1/sqrt(N-1)`.
/// J_1 = 0 is implied by the interface convention and not returned.
pub fn engineered_couplings(n_sites: usize) -> Result<Vec<f64>> {
    if n_sites < 3 {
        return Err(Error::InvalidSize {
            min: 3,
            got: n_sites,
        });
    }
    let nf = n_sites as f64;
    Ok((1..=n_sites - 2)
        .map(|n| {
            let x = n as f64;
            let num = x * x * ((nf - 1.0) * (nf - 1.0) - x * x);
            let den = (nf - 2.0) * (nf - 2.0) * (2.0 * x - 1.0) * (2.0 * x + 1.0);
            (num / den).sqrt()
        })
        .collect())
}

/// Single-particle hopping matrix plus the scalar term dropped from the spin
/// Hamiltonian when passing to fermions.
#[derive(Debug, Clone)]
pub struct SingleParticle {
    /// N x N real symmetric tridiagonal matrix: off-diagonal (n, n+1) = J_n,
    /// diagonal -B_n (site 1) and -B_n + D (sites 2..N), so positive D shifts
    /// all coupled-block eigenvalues up while the site-1 mode stays at zero.
    pub matrix: DMatrix<f64>,
    /// Tracked constant: (1/2) sum B_n - (1/2) D (N-1).
    pub constant: f64,
}

/// Build the single-particle matrix. Requires `gamma = 0`.
pub fn single_particle_matrix(spec: &ChainSpec) -> Result<SingleParticle> {
    if spec.gamma != 0.0 {
        return Err(Error::AnisotropyUnsupported(spec.gamma));
    }
    Ok(SingleParticle {
        matrix: hopping_matrix(spec),
        constant: tracked_constant(spec),
    })
}

pub(crate) fn hopping_matrix(spec: &ChainSpec) -> DMatrix<f64> {
    let n = spec.n_sites;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = -spec.fields[i] + if i >= 1 { spec.offset } else { 0.0 };
    }
    for i in 0..n - 1 {
        m[(i, i + 1)] = spec.couplings[i];
        m[(i + 1, i)] = spec.couplings[i];
    }
    m
}

pub(crate) fn tracked_constant(spec: &ChainSpec) -> f64 {
    0.5 * spec.fields.iter().sum::<f64>() - 0.5 * spec.offset * (spec.n_sites as f64 - 1.0)
}

/// Antisymmetric pairing matrix with entries gamma * J_n at (n, n+1).
pub(crate) fn pairing_matrix(spec: &ChainSpec) -> DMatrix<f64> {
    let n = spec.n_sites;
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        let v = spec.gamma * spec.couplings[i];
        b[(i, i + 1)] = v;
        b[(i + 1, i)] = -v;
    }
    b
}

/// Bogoliubov-de Gennes matrix `[[A, B], [-B, -A]]` with `A` the hopping
/// matrix and `B` the antisymmetric pairing block. Real symmetric; its
/// spectrum comes in +/- pairs and the positive branch defines the mode
/// energies for any anisotropy.
pub fn bdg_matrix(spec: &ChainSpec) -> DMatrix<f64> {
    let n = spec.n_sites;
    let a = hopping_matrix(spec);
    let b = pairing_matrix(spec);
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = a[(i, j)];
            m[(i, j + n)] = b[(i, j)];
            m[(i + n, j)] = -b[(i, j)];
            m[(i + n, j + n)] = -a[(i, j)];
        }
    }
    m
}

/// Positive branch of the BdG spectrum, ascending.
pub fn bdg_positive_branch(spec: &ChainSpec) -> Vec<f64> {
    let m = bdg_matrix(spec);
    let mut evals: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    evals.sort_by(f64::total_cmp);
    // +/- pairs: the upper half is the positive branch.
    evals.split_off(spec.n_sites)
}

/// How eigenvalues were associated with mode indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairLabeling {
    /// Regular-ladder association: mode 2n takes rung n, mode 2n+1 takes rung
    /// n + (N-1)/2, giving every qubit pair the same gap 1 + 1/(N-2).
    RegularLadder,
    /// Ascending eigenvalues assigned to modes 2..N in order; qubit n gets
    /// adjacent rungs (2n-1, 2n).
    SortedInterleaving,
}

/// Diagonalized chain: eigenvalues and eigenvectors indexed by mode number,
/// site-2 overlaps, and the pairing of modes into logical qubits.
#[derive(Debug, Clone)]
pub struct ModeSpectrum {
    pub n_sites: usize,
    /// Eigenvalue of mode n at index n-1; `eigenvalues[0] = 0` exactly.
    pub eigenvalues: Vec<f64>,
    /// Orthogonal matrix whose column n-1 is the site-space eigenvector of
    /// mode n. Column 0 is exactly e_1.
    pub mode_matrix: DMatrix<f64>,
    /// Overlaps alpha_n = <0| b_1 h_2 b_n^dag |0> for n = 2..N, stored at
    /// index n-2. Gauge-fixed positive.
    pub alphas: Vec<f64>,
    /// Which association produced the mode numbering.
    pub labeling: PairLabeling,
    /// Spectral offset the spectrum was built with.
    pub offset: f64,
}

impl ModeSpectrum {
    pub fn n_logical(&self) -> usize {
        (self.n_sites - 1) / 2
    }

    /// Eigenvalue of 1-based mode index.
    pub fn lambda(&self, mode: usize) -> f64 {
        self.eigenvalues[mode - 1]
    }

    /// Overlap alpha for mode n >= 2.
    pub fn alpha(&self, mode: usize) -> f64 {
        self.alphas[mode - 2]
    }

    /// Mode pair (2n, 2n+1) encoding logical qubit n (1-based).
    pub fn pair(&self, qubit: usize) -> (usize, usize) {
        (2 * qubit, 2 * qubit + 1)
    }

    /// Drive frequency |lambda_{2n} - lambda_{2n+1}| of the qubit-n pair.
    pub fn pair_gap(&self, qubit: usize) -> f64 {
        let (p, q) = self.pair(qubit);
        (self.lambda(q) - self.lambda(p)).abs()
    }

    pub fn check_logical_index(&self, qubit: usize) -> Result<()> {
        if qubit >= 1 && qubit <= self.n_logical() {
            Ok(())
        } else {
            Err(Error::LogicalIndex {
                index: qubit,
                max: self.n_logical(),
            })
        }
    }

    pub fn check_mode_index(&self, mode: usize) -> Result<()> {
        if mode >= 2 && mode <= self.n_sites {
            Ok(())
        } else {
            Err(Error::ModeIndex {
                index: mode,
                max: self.n_sites,
            })
        }
    }

    /// Mode index (>= 2) with the smallest eigenvalue.
    pub fn minimum_mode(&self) -> usize {
        let mut best = 2;
        for m in 2..=self.n_sites {
            if self.lambda(m) < self.lambda(best) {
                best = m;
            }
        }
        best
    }

    /// Largest |lambda| over all modes.
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |a, x| a.max(x.abs()))
    }
}

/// Diagonalize an interface-convention chain (`gamma = 0`) into its mode
/// spectrum. Site 1 is the exact zero mode; the block of sites 2..N is
/// diagonalized separately so the zero mode never mixes numerically.
pub fn diagonalize(spec: &ChainSpec) -> Result<ModeSpectrum> {
    spec.require_interface_convention()?;
    if spec.gamma != 0.0 {
        return Err(Error::AnisotropyUnsupported(spec.gamma));
    }
    let n = spec.n_sites;
    let full = hopping_matrix(spec);
    let block = full.view((1, 1), (n - 1, n - 1)).into_owned();
    let eig = block.symmetric_eigen();

    // Ascending rungs of the coupled block.
    let mut order: Vec<usize> = (0..n - 1).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let rung_values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();

    let labeling = if is_regular_ladder(&rung_values, spec.offset, n) && (n - 1) % 2 == 0 {
        PairLabeling::RegularLadder
    } else {
        PairLabeling::SortedInterleaving
    };

    // mode_for_rung[r] = mode index (2-based) that rung r (0-based ascending)
    // is assigned to.
    let n_rungs = n - 1;
    let mut rung_for_mode: Vec<usize> = vec![0; n_rungs];
    match labeling {
        PairLabeling::RegularLadder => {
            // lambda_{2m} = -1 + 2(m-1)/(N-2) -> rung m-1
            // lambda_{2m+1} = (2m-1)/(N-2)    -> rung m-1 + (N-1)/2
            let half = (n - 1) / 2;
            for m in 1..=half {
                rung_for_mode[2 * m - 2] = m - 1;
                if 2 * m + 1 <= n {
                    rung_for_mode[2 * m - 1] = m - 1 + half;
                }
            }
        }
        PairLabeling::SortedInterleaving => {
            for (i, slot) in rung_for_mode.iter_mut().enumerate() {
                *slot = i;
            }
        }
    }

    let mut eigenvalues = vec![0.0; n];
    let mut mode_matrix = DMatrix::zeros(n, n);
    mode_matrix[(0, 0)] = 1.0;
    let mut alphas = vec![0.0; n - 1];
    for mode in 2..=n {
        let rung = rung_for_mode[mode - 2];
        let col = order[rung];
        eigenvalues[mode - 1] = eig.eigenvalues[col];
        // Gauge: component on site 2 positive, so alpha_n > 0.
        let head = eig.eigenvectors[(0, col)];
        let sign = if head < 0.0 { -1.0 } else { 1.0 };
        for row in 0..n - 1 {
            mode_matrix[(row + 1, mode - 1)] = sign * eig.eigenvectors[(row, col)];
        }
        alphas[mode - 2] = mode_matrix[(1, mode - 1)];
    }

    Ok(ModeSpectrum {
        n_sites: n,
        eigenvalues,
        mode_matrix,
        alphas,
        labeling,
        offset: spec.offset,
    })
}

fn is_regular_ladder(rungs: &[f64], offset: f64, n_sites: usize) -> bool {
    if n_sites < 4 {
        return false;
    }
    let spacing = 2.0 / (n_sites as f64 - 2.0);
    rungs.iter().enumerate().all(|(k, &v)| {
        let expect = -1.0 + spacing * k as f64 + offset;
        (v - expect).abs() < LADDER_DETECT_TOL
    })
}

/// Degeneracy and margin report for a spectrum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapReport {
    /// Minimum |lambda_m - lambda_n| over distinct modes m, n >= 2
    /// (+infinity when fewer than two such modes exist).
    pub min_gap: f64,
    /// Minimum |lambda_n| over modes n >= 2.
    pub min_abs_eigenvalue: f64,
    /// Minimum |alpha_n|.
    pub min_alpha: f64,
    /// Mode pairs (1-based) whose |lambda| values collide within tolerance;
    /// such pairs cannot be addressed separately by a cosine drive.
    pub degenerate_pairs: Vec<(usize, usize)>,
}

/// Scan the spectrum for degenerate |lambda| values and report margins.
pub fn gap_report(spectrum: &ModeSpectrum, tol: f64) -> GapReport {
    let n = spectrum.n_sites;
    let mut min_gap = f64::INFINITY;
    for m in 2..=n {
        for k in m + 1..=n {
            min_gap = min_gap.min((spectrum.lambda(m) - spectrum.lambda(k)).abs());
        }
    }
    let min_abs_eigenvalue = (2..=n)
        .map(|m| spectrum.lambda(m).abs())
        .fold(f64::INFINITY, f64::min);
    let min_alpha = spectrum
        .alphas
        .iter()
        .map(|a| a.abs())
        .fold(f64::INFINITY, f64::min);
    let mut degenerate_pairs = Vec::new();
    for m in 1..=n {
        for k in m + 1..=n {
            if (spectrum.lambda(m).abs() - spectrum.lambda(k).abs()).abs() <= tol {
                degenerate_pairs.push((m, k));
            }
        }
    }
    GapReport {
        min_gap,
        min_abs_eigenvalue,
        min_alpha,
        degenerate_pairs,
    }
}

/// Default degeneracy tolerance: 1e-9 in units of the spectral radius.
pub fn default_gap_tol(spectrum: &ModeSpectrum) -> f64 {
    1e-9 * spectrum.spectral_radius().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_spec(rng: &mut ChaCha8Rng, n: usize, gamma: f64) -> ChainSpec {
        let couplings = (0..n - 1).map(|_| rng.gen_range(0.3..1.5)).collect();
        let fields = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
        ChainSpec::new(couplings, fields, gamma, 0.0).unwrap()
    }

    #[test]
    fn engineered_small_sizes() {
        assert_relative_eq!(engineered_couplings(3).unwrap()[0], 1.0, epsilon = 1e-15);
        let j4 = engineered_couplings(4).unwrap();
        assert_relative_eq!(j4[0], (2.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(j4[1], (1.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        let j5 = engineered_couplings(5).unwrap();
        assert_relative_eq!(j5[0], (5.0f64 / 9.0).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(j5[1], (16.0f64 / 45.0).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(j5[2], (1.0f64 / 5.0).sqrt(), epsilon = 1e-15);
        assert!(matches!(
            engineered_couplings(2),
            Err(Error::InvalidSize { .. })
        ));
    }

    #[test]
    fn engineered_n5_eigenvalues() {
        let spec = ChainSpec::engineered(5, 0.0).unwrap();
        let sp = single_particle_matrix(&spec).unwrap();
        let mut ev: Vec<f64> = sp.matrix.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let expect = [-1.0, -1.0 / 3.0, 0.0, 1.0 / 3.0, 1.0];
        for (a, b) in ev.iter().zip(expect.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_site_eigenvalues() {
        let spec = ChainSpec::new(vec![0.7], vec![0.0, 0.0], 0.0, 0.0).unwrap();
        let sp = single_particle_matrix(&spec).unwrap();
        let mut ev: Vec<f64> = sp.matrix.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert_relative_eq!(ev[0], -0.7, epsilon = 1e-14);
        assert_relative_eq!(ev[1], 0.7, epsilon = 1e-14);
    }

    #[test]
    fn uniform_chain_min_gap_order() {
        let spec = ChainSpec::uniform(101).unwrap();
        let sp = single_particle_matrix(&spec).unwrap();
        let mut ev: Vec<f64> = sp.matrix.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let min_gap = ev.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        // 2 cos(k pi / 102): edge gap = 3 pi^2 / 102^2 to leading order
        let n2 = 101.0f64 * 101.0;
        assert!(min_gap < 50.0 / n2 && min_gap > 0.1 / n2, "min_gap = {min_gap}");
    }

    #[test]
    fn spectral_identities_for_ladder_sizes() {
        for n in [5usize, 9, 21, 101] {
            let spec = ChainSpec::engineered(n, 0.0).unwrap();
            let spectrum = diagonalize(&spec).unwrap();
            assert_eq!(spectrum.labeling, PairLabeling::RegularLadder);
            let mut rungs: Vec<f64> = spectrum.eigenvalues[1..].to_vec();
            rungs.sort_by(f64::total_cmp);
            let spacing = 2.0 / (n as f64 - 2.0);
            for w in rungs.windows(2) {
                assert!((w[1] - w[0] - spacing).abs() < 1e-9, "N={n}");
            }
            let a = 1.0 / ((n as f64 - 1.0)).sqrt();
            for alpha in &spectrum.alphas {
                assert!((alpha.abs() - a).abs() < 1e-9, "N={n} alpha={alpha}");
            }
        }
    }

    #[test]
    fn pair_labels_n5() {
        let spec = ChainSpec::engineered(5, 0.0).unwrap();
        let s = diagonalize(&spec).unwrap();
        assert_relative_eq!(s.lambda(2), -1.0, epsilon = 1e-12);
        assert_relative_eq!(s.lambda(3), 1.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(s.lambda(4), -1.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(s.lambda(5), 1.0, epsilon = 1e-12);
        // shared pair gap 1 + 1/(N-2)
        assert_relative_eq!(s.pair_gap(1), 4.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(s.pair_gap(2), 4.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn offset_shifts_all_but_zero_mode() {
        let d = std::f64::consts::SQRT_2;
        let base = diagonalize(&ChainSpec::engineered(101, 0.0).unwrap()).unwrap();
        let shifted = diagonalize(&ChainSpec::engineered(101, d).unwrap()).unwrap();
        assert_eq!(shifted.eigenvalues[0], 0.0);
        for m in 2..=101 {
            assert_relative_eq!(shifted.lambda(m), base.lambda(m) + d, epsilon = 1e-12);
        }
    }

    #[test]
    fn mode_matrix_orthonormal() {
        let spec = ChainSpec::engineered(21, 0.3).unwrap();
        let s = diagonalize(&spec).unwrap();
        let gram = s.mode_matrix.transpose() * &s.mode_matrix;
        let resid = (&gram - DMatrix::<f64>::identity(21, 21)).abs().max();
        assert!(resid < 1e-12, "residual {resid}");
        // Columns actually diagonalize the hopping matrix.
        let h = hopping_matrix(&spec);
        let d = s.mode_matrix.transpose() * h * &s.mode_matrix;
        for i in 0..21 {
            assert_relative_eq!(d[(i, i)], s.eigenvalues[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn interface_convention_zero_mode() {
        let spec = ChainSpec::engineered(9, 0.7).unwrap();
        let sp = single_particle_matrix(&spec).unwrap();
        for k in 1..9 {
            assert_eq!(sp.matrix[(0, k)], 0.0);
            assert_eq!(sp.matrix[(k, 0)], 0.0);
        }
        assert_eq!(sp.matrix[(0, 0)], 0.0);
        let s = diagonalize(&spec).unwrap();
        assert_eq!(s.eigenvalues[0], 0.0);
        assert_eq!(s.mode_matrix[(0, 0)], 1.0);
    }

    #[test]
    fn bdg_consistent_with_single_particle_at_gamma_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = rng.gen_range(2..9);
            let spec = random_spec(&mut rng, n, 0.0);
            let sp = single_particle_matrix(&spec).unwrap();
            let mut direct: Vec<f64> =
                sp.matrix.symmetric_eigen().eigenvalues.iter().map(|x| x.abs()).collect();
            direct.sort_by(f64::total_cmp);
            let branch = bdg_positive_branch(&spec);
            for (a, b) in branch.iter().zip(direct.iter()) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn bdg_transverse_ising_pair_symmetric() {
        let spec = ChainSpec::new(vec![0.9], vec![0.0, 0.0], 1.0, 0.0).unwrap();
        let m = bdg_matrix(&spec);
        let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for i in 0..ev.len() / 2 {
            assert_relative_eq!(ev[i], -ev[ev.len() - 1 - i], epsilon = 1e-12);
        }
    }

    #[test]
    fn gap_report_ladder() {
        let flat = diagonalize(&ChainSpec::engineered(101, 0.0).unwrap()).unwrap();
        let report = gap_report(&flat, default_gap_tol(&flat));
        assert!(!report.degenerate_pairs.is_empty(), "+/- pairs must collide at zero offset");

        let shifted = diagonalize(&ChainSpec::engineered(101, std::f64::consts::SQRT_2).unwrap()).unwrap();
        let report = gap_report(&shifted, default_gap_tol(&shifted));
        assert!(report.degenerate_pairs.is_empty());
        assert_relative_eq!(report.min_gap, 2.0 / 99.0, epsilon = 1e-9);
        assert_relative_eq!(
            report.min_alpha,
            0.1,
            epsilon = 1e-9
        );
    }

    #[test]
    fn gap_report_single_mode_sentinel() {
        let spec = ChainSpec::new(vec![0.0], vec![0.0, 0.4], 0.0, 0.0).unwrap();
        let s = diagonalize(&spec).unwrap();
        let report = gap_report(&s, 1e-9);
        assert!(report.min_gap.is_infinite());
    }

    #[test]
    fn sorted_interleaving_for_generic_chain() {
        let mut couplings = vec![0.0, 0.8, 1.1, 0.6];
        let fields = vec![0.0, 0.1, -0.2, 0.05, 0.0];
        let spec = ChainSpec::new(std::mem::take(&mut couplings), fields, 0.0, 0.0).unwrap();
        let s = diagonalize(&spec).unwrap();
        assert_eq!(s.labeling, PairLabeling::SortedInterleaving);
        let v: Vec<f64> = s.eigenvalues[1..].to_vec();
        for w in v.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }
}
