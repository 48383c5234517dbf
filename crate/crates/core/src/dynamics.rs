//! Time-dependent Schrödinger propagation at three tiers: the N-dimensional
//! single-excitation block, a fixed particle-number sector, and the full 2^N
//! space. All tiers integrate the same physical Hamiltonian
//! `H(t) = H_chain + sum_k f_k(t) h_k` (including the tracked scalar
//! constant), so their amplitudes are directly comparable on shared blocks.
//!
//! States are complex vectors over either the site basis or the eigenmode
//! basis; operators are built per tier from the single-particle data, with
//! the full-space spin construction available as the independent reference.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::chain::{self, ChainSpec, ModeSpectrum};
use crate::error::{Error, Result};
use crate::oracle::{self, Control, FockBasis, FockLabel, HermitianOp};
use crate::pulse::{PulseProgram, PulseSequence, PulseStep};
use crate::C64;

/// Simulation tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    /// One fermion: dimension N.
    SingleExcitation,
    /// Fixed particle number k: dimension C(N, k).
    NumberSector(usize),
    /// Full Hilbert space: dimension 2^N (guarded).
    Full,
}

impl Tier {
    pub fn name(&self) -> &'static str {
        match self {
            Tier::SingleExcitation => "single-excitation",
            Tier::NumberSector(_) => "number-sector",
            Tier::Full => "full",
        }
    }
}

/// Which single-particle basis the amplitudes refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateBasis {
    Site,
    Mode,
}

/// Complex state vector in one tier.
#[derive(Debug, Clone)]
pub struct SimState {
    pub tier: Tier,
    pub basis: StateBasis,
    pub amplitudes: Vec<C64>,
    pub time: f64,
}

impl SimState {
    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Single-excitation state with the given 1-based mode occupied
    /// (mode basis).
    pub fn mode_excitation(n_sites: usize, mode: usize) -> Self {
        let mut amplitudes = vec![C64::new(0.0, 0.0); n_sites];
        amplitudes[mode - 1] = C64::new(1.0, 0.0);
        Self {
            tier: Tier::SingleExcitation,
            basis: StateBasis::Mode,
            amplitudes,
            time: 0.0,
        }
    }

    /// Single-excitation state with the given 1-based site occupied
    /// (site basis).
    pub fn site_excitation(n_sites: usize, site: usize) -> Self {
        let mut amplitudes = vec![C64::new(0.0, 0.0); n_sites];
        amplitudes[site - 1] = C64::new(1.0, 0.0);
        Self {
            tier: Tier::SingleExcitation,
            basis: StateBasis::Site,
            amplitudes,
            time: 0.0,
        }
    }

    /// Basis state of a Fock label in the matching tier.
    pub fn from_fock(label: &FockLabel, tier: Tier) -> Result<Self> {
        let basis = match label.basis {
            FockBasis::Site => StateBasis::Site,
            FockBasis::Mode => StateBasis::Mode,
        };
        let (dim, index) = match tier {
            Tier::SingleExcitation => {
                if label.particle_number() != 1 {
                    return Err(Error::TierIncompatible {
                        operator: "state",
                        tier: tier.name(),
                        reason: "single-excitation tier needs exactly one fermion",
                    });
                }
                (label.n, label.mask.trailing_zeros() as usize)
            }
            Tier::NumberSector(k) => {
                if label.particle_number() != k {
                    return Err(Error::TierIncompatible {
                        operator: "state",
                        tier: tier.name(),
                        reason: "particle number does not match sector",
                    });
                }
                let basis_masks = oracle::sector_basis(label.n, k);
                let idx = oracle::sector_index(&basis_masks, label.mask).expect("mask in sector");
                (basis_masks.len(), idx)
            }
            Tier::Full => (1usize << label.n, label.mask as usize),
        };
        let mut amplitudes = vec![C64::new(0.0, 0.0); dim];
        amplitudes[index] = C64::new(1.0, 0.0);
        Ok(Self {
            tier,
            basis,
            amplitudes,
            time: 0.0,
        })
    }

    pub fn tier_tag(&self) -> String {
        format!("{}/{:?}", self.tier.name(), self.basis)
    }
}

/// Integration method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Classical fixed-step 4th order Runge-Kutta.
    FixedStep4,
    /// Step-doubling adaptive RK4 controlled by the local tolerance.
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorConfig {
    pub method: Method,
    pub local_tolerance: f64,
    pub max_step: f64,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        Self {
            method: Method::FixedStep4,
            local_tolerance: 1e-10,
            max_step: f64::INFINITY,
        }
    }
}

/// Hamiltonian term, dense or diagonal.
#[derive(Debug, Clone)]
enum Term {
    Dense(HermitianOp),
    Diagonal(DVector<f64>),
}

impl Term {
    /// Gershgorin-style bound on the spectral radius.
    fn norm_bound(&self) -> f64 {
        match self {
            Term::Dense(h) => {
                let n = h.dim();
                let mut best: f64 = 0.0;
                for i in 0..n {
                    let mut row = 0.0;
                    for j in 0..n {
                        row += h.re[(i, j)].abs()
                            + h.im.as_ref().map_or(0.0, |m| m[(i, j)].abs());
                    }
                    best = best.max(row);
                }
                best
            }
            Term::Diagonal(d) => d.iter().fold(0.0f64, |a, x| a.max(x.abs())),
        }
    }

    /// Accumulate `alpha * (-i H y)` into (out_re, out_im), where
    /// `H = re + i im`, `y = yre + i yim`:
    /// out_re += alpha (re yim + im yre), out_im += alpha (-re yre + im yim).
    fn accumulate(
        &self,
        alpha: f64,
        yre: &DMatrix<f64>,
        yim: &DMatrix<f64>,
        out_re: &mut DMatrix<f64>,
        out_im: &mut DMatrix<f64>,
    ) {
        match self {
            Term::Dense(h) => {
                out_re.gemm(alpha, &h.re, yim, 1.0);
                out_im.gemm(-alpha, &h.re, yre, 1.0);
                if let Some(im) = &h.im {
                    out_re.gemm(alpha, im, yre, 1.0);
                    out_im.gemm(alpha, im, yim, 1.0);
                }
            }
            Term::Diagonal(d) => {
                let (rows, cols) = (yre.nrows(), yre.ncols());
                for c in 0..cols {
                    for r in 0..rows {
                        out_re[(r, c)] += alpha * d[r] * yim[(r, c)];
                        out_im[(r, c)] -= alpha * d[r] * yre[(r, c)];
                    }
                }
            }
        }
    }
}

/// Per-tier, per-basis realization of the chain and control operators.
pub struct TierSystem {
    pub spec: ChainSpec,
    pub tier: Tier,
    pub basis: StateBasis,
    pub dim: usize,
    /// Sector basis masks (number sector only).
    pub sector: Option<Vec<u64>>,
    spectrum: Option<ModeSpectrum>,
    h0: Term,
    controls: Vec<(Control, Term)>,
}

impl TierSystem {
    pub fn new(spec: &ChainSpec, tier: Tier, basis: StateBasis) -> Result<Self> {
        let n = spec.n_sites;
        let needs_modes = basis == StateBasis::Mode;
        let spectrum = if needs_modes {
            Some(chain::diagonalize(spec)?)
        } else {
            None
        };
        if spec.gamma != 0.0 && tier != Tier::Full {
            return Err(Error::TierIncompatible {
                operator: "H",
                tier: tier.name(),
                reason: "anisotropy breaks particle number; use the full tier",
            });
        }

        let (dim, sector) = match tier {
            Tier::SingleExcitation => (n, None),
            Tier::NumberSector(k) => {
                let b = oracle::sector_basis(n, k);
                (b.len(), Some(b))
            }
            Tier::Full => {
                if n > oracle::MANY_BODY_MAX_SITES {
                    return Err(Error::ResourceGuard {
                        max: oracle::MANY_BODY_MAX_SITES,
                        got: n,
                    });
                }
                (1usize << n, None)
            }
        };

        let mut sys = Self {
            spec: spec.clone(),
            tier,
            basis,
            dim,
            sector,
            spectrum,
            h0: Term::Diagonal(DVector::zeros(dim)),
            controls: Vec::new(),
        };
        sys.h0 = sys.build_h0()?;
        Ok(sys)
    }

    pub fn spectrum(&self) -> Option<&ModeSpectrum> {
        self.spectrum.as_ref()
    }

    /// One-particle matrix of a control operator in the active basis,
    /// as (symmetric, antisymmetric-imaginary) parts.
    fn one_particle_control(&self, c: Control) -> Result<(DMatrix<f64>, Option<DMatrix<f64>>)> {
        let n = self.spec.n_sites;
        let mut re = DMatrix::zeros(n, n);
        let mut im = None;
        match c {
            Control::H2 => {
                re[(0, 1)] = 1.0;
                re[(1, 0)] = 1.0;
            }
            Control::H2Quadrature => {
                let mut a = DMatrix::zeros(n, n);
                a[(0, 1)] = 1.0;
                a[(1, 0)] = -1.0;
                im = Some(a);
            }
            _ => unreachable!("one-particle form only for h2 and its quadrature"),
        }
        if self.basis == StateBasis::Mode {
            let o = &self.spectrum.as_ref().unwrap().mode_matrix;
            re = o.transpose() * re * o;
            im = im.map(|a| o.transpose() * a * o);
        }
        Ok((re, im))
    }

    fn build_h0(&self) -> Result<Term> {
        let spec = &self.spec;
        let n = spec.n_sites;
        match (self.tier, self.basis) {
            (Tier::Full, StateBasis::Site) => {
                let h = oracle::many_body_hamiltonian(spec)?;
                Ok(Term::Dense(h.op))
            }
            (Tier::Full, StateBasis::Mode) | (Tier::NumberSector(_), StateBasis::Mode) => {
                let s = self.spectrum.as_ref().unwrap();
                let c = chain::tracked_constant(spec);
                let basis: Vec<u64> = match &self.sector {
                    Some(b) => b.clone(),
                    None => (0..1u64 << n).collect(),
                };
                let d = DVector::from_fn(basis.len(), |i, _| {
                    let mut e = c;
                    for p in 0..n {
                        if basis[i] >> p & 1 == 1 {
                            e += s.eigenvalues[p];
                        }
                    }
                    e
                });
                Ok(Term::Diagonal(d))
            }
            (Tier::NumberSector(_), StateBasis::Site) => {
                let sp = chain::single_particle_matrix(spec)?;
                let basis = self.sector.as_ref().unwrap();
                let mut q = oracle::quadratic_operator(&sp.matrix, None, basis);
                for i in 0..q.re.nrows() {
                    q.re[(i, i)] += sp.constant;
                }
                Ok(Term::Dense(q))
            }
            (Tier::SingleExcitation, StateBasis::Site) => {
                let sp = chain::single_particle_matrix(spec)?;
                let mut m = sp.matrix;
                for i in 0..n {
                    m[(i, i)] += sp.constant;
                }
                Ok(Term::Dense(HermitianOp::real(m)))
            }
            (Tier::SingleExcitation, StateBasis::Mode) => {
                let s = self.spectrum.as_ref().unwrap();
                let c = chain::tracked_constant(spec);
                Ok(Term::Diagonal(DVector::from_fn(n, |i, _| {
                    s.eigenvalues[i] + c
                })))
            }
        }
    }

    fn build_control(&self, c: Control) -> Result<Term> {
        let spec = &self.spec;
        let n = spec.n_sites;
        match c {
            Control::H1 => {
                if self.tier != Tier::Full {
                    return Err(Error::TierIncompatible {
                        operator: "h1",
                        tier: self.tier.name(),
                        reason: "X_1 changes particle number",
                    });
                }
                // flip of the first site/mode occupation; in the mode basis
                // this is b_1 + b_1^dag = a_1 + a_1^dag under the interface
                // convention.
                if self.basis == StateBasis::Mode {
                    self.spec.require_interface_convention()?;
                }
                let dim = 1usize << n;
                let mut m = DMatrix::zeros(dim, dim);
                for s in 0..dim {
                    m[(s ^ 1, s)] += 1.0;
                }
                Ok(Term::Dense(HermitianOp::real(m)))
            }
            Control::H2 | Control::H2Quadrature => {
                if self.spec.gamma != 0.0 && self.tier == Tier::Full && self.basis == StateBasis::Site {
                    let op = oracle::control_operator(c, spec)?;
                    return Ok(Term::Dense(op.op));
                }
                let (re, im) = self.one_particle_control(c)?;
                match self.tier {
                    Tier::SingleExcitation => Ok(Term::Dense(HermitianOp { re, im })),
                    Tier::NumberSector(_) | Tier::Full => {
                        let basis: Vec<u64> = match &self.sector {
                            Some(b) => b.clone(),
                            None => (0..1u64 << n).collect(),
                        };
                        Ok(Term::Dense(oracle::quadratic_operator(
                            &re,
                            im.as_ref(),
                            &basis,
                        )))
                    }
                }
            }
            Control::H3 => match self.basis {
                StateBasis::Site => {
                    let basis: Vec<u64> = match self.tier {
                        Tier::SingleExcitation => {
                            return Ok(Term::Diagonal(DVector::from_fn(n, |i, _| {
                                let n1 = if i == 0 { 1.0 } else { -1.0 };
                                let n2 = if i == 1 { 1.0 } else { -1.0 };
                                n1 * n2
                            })));
                        }
                        Tier::NumberSector(_) => self.sector.clone().unwrap(),
                        Tier::Full => (0..1u64 << n).collect(),
                    };
                    Ok(Term::Diagonal(DVector::from_fn(basis.len(), |i, _| {
                        let m = basis[i];
                        let z1 = if m & 1 == 1 { 1.0 } else { -1.0 };
                        let z2 = if m & 2 == 2 { 1.0 } else { -1.0 };
                        z1 * z2
                    })))
                }
                StateBasis::Mode => {
                    // (2 n_1 - 1)(2 a_2^dag a_2 - 1) with a_2 = sum alpha_k b_k
                    let s = self.spectrum.as_ref().unwrap();
                    self.spec.require_interface_convention()?;
                    let basis: Vec<u64> = match self.tier {
                        Tier::SingleExcitation => {
                            let mut m = DMatrix::zeros(n, n);
                            for j in 1..n {
                                for k in 1..n {
                                    m[(j, k)] = 2.0 * s.alphas[j - 1] * s.alphas[k - 1];
                                }
                            }
                            // single-particle rep of (2 n1 - 1)(2 a2'a2 - 1):
                            // on one-fermion states equals
                            // 2 n1 + 2 a2'a2 - 1 - 4 n1 a2'a2; the cross term
                            // vanishes except on mode-1 (alpha has no mode-1
                            // component), so: diag(2 n1) + 2 a2'a2 - 1.
                            let mut re = m;
                            for i in 0..n {
                                re[(i, i)] -= 1.0;
                            }
                            re[(0, 0)] += 2.0;
                            return Ok(Term::Dense(HermitianOp::real(re)));
                        }
                        Tier::NumberSector(_) => self.sector.clone().unwrap(),
                        Tier::Full => (0..1u64 << n).collect(),
                    };
                    let mut a2 = DMatrix::zeros(n, n);
                    for j in 1..n {
                        for k in 1..n {
                            a2[(j, k)] = s.alphas[j - 1] * s.alphas[k - 1];
                        }
                    }
                    let q = oracle::quadratic_operator(&a2, None, &basis);
                    let dim = basis.len();
                    // (2 n1 - 1)(2 q - 1); the factors commute since a_2 has
                    // no mode-1 component.
                    let mut m = q.re * 2.0;
                    for i in 0..dim {
                        m[(i, i)] -= 1.0;
                    }
                    for (col, &mask) in basis.iter().enumerate() {
                        if mask & 1 == 0 {
                            for row in 0..dim {
                                m[(row, col)] = -m[(row, col)];
                            }
                        }
                    }
                    // restore exact symmetry lost to sign flips on rows/cols
                    let sym = (&m + m.transpose()) * 0.5;
                    Ok(Term::Dense(HermitianOp::real(sym)))
                }
            },
        }
    }

    fn control_term(&mut self, c: Control) -> Result<usize> {
        if let Some(i) = self.controls.iter().position(|(k, _)| *k == c) {
            return Ok(i);
        }
        let t = self.build_control(c)?;
        self.controls.push((c, t));
        Ok(self.controls.len() - 1)
    }

    /// Basis-change matrix from mode amplitudes to site amplitudes for this
    /// tier (orthogonal).
    pub fn mode_to_site(&self, spectrum: &ModeSpectrum) -> Result<DMatrix<f64>> {
        match self.tier {
            Tier::SingleExcitation => Ok(spectrum.mode_matrix.clone()),
            Tier::Full => oracle::mode_basis_transform(spectrum),
            Tier::NumberSector(_) => {
                let full = oracle::mode_basis_transform(spectrum)?;
                let basis = self.sector.as_ref().unwrap();
                let dim = basis.len();
                Ok(DMatrix::from_fn(dim, dim, |i, j| {
                    full[(basis[i] as usize, basis[j] as usize)]
                }))
            }
        }
    }

}

/// y += alpha * x over the contiguous storage.
fn maxpy(alpha: f64, x: &DMatrix<f64>, y: &mut DMatrix<f64>) {
    let xs = x.as_slice();
    let ys = y.as_mut_slice();
    for (yi, xi) in ys.iter_mut().zip(xs.iter()) {
        *yi += alpha * xi;
    }
}

/// Work buffers for batched RK4.
struct Rk4Buffers {
    k1re: DMatrix<f64>,
    k1im: DMatrix<f64>,
    k2re: DMatrix<f64>,
    k2im: DMatrix<f64>,
    k3re: DMatrix<f64>,
    k3im: DMatrix<f64>,
    k4re: DMatrix<f64>,
    k4im: DMatrix<f64>,
    tre: DMatrix<f64>,
    tim: DMatrix<f64>,
}

impl Rk4Buffers {
    fn new(rows: usize, cols: usize) -> Self {
        let z = || DMatrix::zeros(rows, cols);
        Self {
            k1re: z(),
            k1im: z(),
            k2re: z(),
            k2im: z(),
            k3re: z(),
            k3im: z(),
            k4re: z(),
            k4im: z(),
            tre: z(),
            tim: z(),
        }
    }
}

/// A pulse bound to the tier's operator terms.
struct BoundPulse<'a> {
    pulse: &'a PulseProgram,
    /// (channel index into `terms`, control) pairs.
    channels: Vec<(usize, Control)>,
}

fn derivative(
    h0: &Term,
    terms: &[(Control, Term)],
    bound: Option<&BoundPulse>,
    t_local: f64,
    yre: &DMatrix<f64>,
    yim: &DMatrix<f64>,
    out_re: &mut DMatrix<f64>,
    out_im: &mut DMatrix<f64>,
) {
    out_re.fill(0.0);
    out_im.fill(0.0);
    h0.accumulate(1.0, yre, yim, out_re, out_im);
    if let Some(b) = bound {
        for (c, v) in b.pulse.channel_values(t_local) {
            if v == 0.0 {
                continue;
            }
            let idx = b
                .channels
                .iter()
                .find(|(_, k)| *k == c)
                .expect("channel bound")
                .0;
            terms[idx].1.accumulate(v, yre, yim, out_re, out_im);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn rk4_segment(
    h0: &Term,
    terms: &[(Control, Term)],
    bound: Option<&BoundPulse>,
    duration: f64,
    h_step: f64,
    yre: &mut DMatrix<f64>,
    yim: &mut DMatrix<f64>,
    buf: &mut Rk4Buffers,
) {
    if duration <= 0.0 {
        return;
    }
    let n_steps = (duration / h_step).ceil().max(1.0) as usize;
    let h = duration / n_steps as f64;
    for step in 0..n_steps {
        let t0 = step as f64 * h;
        derivative(h0, terms, bound, t0, yre, yim, &mut buf.k1re, &mut buf.k1im);

        buf.tre.copy_from(yre);
        buf.tim.copy_from(yim);
        maxpy(0.5 * h, &buf.k1re, &mut buf.tre);
        maxpy(0.5 * h, &buf.k1im, &mut buf.tim);
        derivative(h0, terms, bound, t0 + 0.5 * h, &buf.tre, &buf.tim, &mut buf.k2re, &mut buf.k2im);

        buf.tre.copy_from(yre);
        buf.tim.copy_from(yim);
        maxpy(0.5 * h, &buf.k2re, &mut buf.tre);
        maxpy(0.5 * h, &buf.k2im, &mut buf.tim);
        derivative(h0, terms, bound, t0 + 0.5 * h, &buf.tre, &buf.tim, &mut buf.k3re, &mut buf.k3im);

        buf.tre.copy_from(yre);
        buf.tim.copy_from(yim);
        maxpy(h, &buf.k3re, &mut buf.tre);
        maxpy(h, &buf.k3im, &mut buf.tim);
        derivative(h0, terms, bound, t0 + h, &buf.tre, &buf.tim, &mut buf.k4re, &mut buf.k4im);

        let w = h / 6.0;
        maxpy(w, &buf.k1re, yre);
        maxpy(2.0 * w, &buf.k2re, yre);
        maxpy(2.0 * w, &buf.k3re, yre);
        maxpy(w, &buf.k4re, yre);
        maxpy(w, &buf.k1im, yim);
        maxpy(2.0 * w, &buf.k2im, yim);
        maxpy(2.0 * w, &buf.k3im, yim);
        maxpy(w, &buf.k4im, yim);
    }
}

/// Adaptive step-doubling RK4 on one segment.
#[allow(clippy::too_many_arguments)]
fn rk4_adaptive_segment(
    h0: &Term,
    terms: &[(Control, Term)],
    bound: Option<&BoundPulse>,
    duration: f64,
    h_init: f64,
    tol: f64,
    yre: &mut DMatrix<f64>,
    yim: &mut DMatrix<f64>,
    buf: &mut Rk4Buffers,
) {
    let mut t = 0.0;
    let mut h = h_init.min(duration);
    let rows = yre.nrows();
    let cols = yre.ncols();
    let mut full_re = DMatrix::zeros(rows, cols);
    let mut full_im = DMatrix::zeros(rows, cols);
    let mut half_re = DMatrix::zeros(rows, cols);
    let mut half_im = DMatrix::zeros(rows, cols);
    while t < duration - 1e-15 * duration.max(1.0) {
        h = h.min(duration - t);
        // one full step
        full_re.copy_from(yre);
        full_im.copy_from(yim);
        rk4_shifted(h0, terms, bound, t, h, h, &mut full_re, &mut full_im, buf);
        // two half steps
        half_re.copy_from(yre);
        half_im.copy_from(yim);
        rk4_shifted(h0, terms, bound, t, h / 2.0, h / 2.0, &mut half_re, &mut half_im, buf);
        rk4_shifted(h0, terms, bound, t + h / 2.0, h / 2.0, h / 2.0, &mut half_re, &mut half_im, buf);
        let mut err: f64 = 0.0;
        for c in 0..cols {
            for r in 0..rows {
                err = err
                    .max((full_re[(r, c)] - half_re[(r, c)]).abs())
                    .max((full_im[(r, c)] - half_im[(r, c)]).abs());
            }
        }
        if err <= tol || h <= 1e-12 {
            yre.copy_from(&half_re);
            yim.copy_from(&half_im);
            t += h;
            let grow = if err > 0.0 {
                0.9 * (tol / err).powf(0.2)
            } else {
                2.0
            };
            h *= grow.clamp(0.2, 2.0);
        } else {
            h *= (0.9 * (tol / err).powf(0.2)).clamp(0.1, 0.9);
        }
    }
}

/// Fixed-step RK4 over [t_start, t_start + span] with pulse-local times.
#[allow(clippy::too_many_arguments)]
fn rk4_shifted(
    h0: &Term,
    terms: &[(Control, Term)],
    bound: Option<&BoundPulse>,
    t_start: f64,
    span: f64,
    h_step: f64,
    yre: &mut DMatrix<f64>,
    yim: &mut DMatrix<f64>,
    buf: &mut Rk4Buffers,
) {
    let n_steps = (span / h_step).ceil().max(1.0) as usize;
    let h = span / n_steps as f64;
    for step in 0..n_steps {
        let t0 = t_start + step as f64 * h;
        derivative(h0, terms, bound, t0, yre, yim, &mut buf.k1re, &mut buf.k1im);
        buf.tre.copy_from(yre);
        buf.tim.copy_from(yim);
        maxpy(0.5 * h, &buf.k1re, &mut buf.tre);
        maxpy(0.5 * h, &buf.k1im, &mut buf.tim);
        derivative(h0, terms, bound, t0 + 0.5 * h, &buf.tre, &buf.tim, &mut buf.k2re, &mut buf.k2im);
        buf.tre.copy_from(yre);
        buf.tim.copy_from(yim);
        maxpy(0.5 * h, &buf.k2re, &mut buf.tre);
        maxpy(0.5 * h, &buf.k2im, &mut buf.tim);
        derivative(h0, terms, bound, t0 + 0.5 * h, &buf.tre, &buf.tim, &mut buf.k3re, &mut buf.k3im);
        buf.tre.copy_from(yre);
        buf.tim.copy_from(yim);
        maxpy(h, &buf.k3re, &mut buf.tre);
        maxpy(h, &buf.k3im, &mut buf.tim);
        derivative(h0, terms, bound, t0 + h, &buf.tre, &buf.tim, &mut buf.k4re, &mut buf.k4im);
        let w = h / 6.0;
        maxpy(w, &buf.k1re, yre);
        maxpy(2.0 * w, &buf.k2re, yre);
        maxpy(2.0 * w, &buf.k3re, yre);
        maxpy(w, &buf.k4re, yre);
        maxpy(w, &buf.k1im, yim);
        maxpy(2.0 * w, &buf.k2im, yim);
        maxpy(2.0 * w, &buf.k3im, yim);
        maxpy(w, &buf.k4im, yim);
    }
}

fn split_columns(states: &[&SimState], dim: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let cols = states.len();
    let mut re = DMatrix::zeros(dim, cols);
    let mut im = DMatrix::zeros(dim, cols);
    for (c, s) in states.iter().enumerate() {
        for (r, a) in s.amplitudes.iter().enumerate() {
            re[(r, c)] = a.re;
            im[(r, c)] = a.im;
        }
    }
    (re, im)
}

/// Propagator over one tier; reusable across sequences.
pub struct Propagator {
    sys: TierSystem,
    config: PropagatorConfig,
}

impl Propagator {
    pub fn new(spec: &ChainSpec, tier: Tier, basis: StateBasis, config: PropagatorConfig) -> Result<Self> {
        Ok(Self {
            sys: TierSystem::new(spec, tier, basis)?,
            config,
        })
    }

    pub fn system(&self) -> &TierSystem {
        &self.sys
    }

    fn bind_sequence(&mut self, sequence: &PulseSequence) -> Result<Vec<Option<Vec<(usize, Control)>>>> {
        let mut bindings = Vec::with_capacity(sequence.steps.len());
        for step in &sequence.steps {
            match step {
                PulseStep::Wait(_) => bindings.push(None),
                PulseStep::Pulse(p) => {
                    p.validate()?;
                    let mut controls: Vec<Control> =
                        p.channel_values(0.0).iter().map(|(c, _)| *c).collect();
                    // circular tones may evaluate to zero on one channel at
                    // t = 0; collect from the tone structure instead
                    for tone in &p.tones {
                        if let crate::pulse::Quadrature::Circular { .. } = tone.quadrature {
                            if !controls.contains(&Control::H2Quadrature) {
                                controls.push(Control::H2Quadrature);
                            }
                        }
                    }
                    if !controls.contains(&p.target) {
                        controls.push(p.target);
                    }
                    let mut chans = Vec::new();
                    for c in controls {
                        let idx = self.sys.control_term(c)?;
                        chans.push((idx, c));
                    }
                    bindings.push(Some(chans));
                }
            }
        }
        Ok(bindings)
    }

    /// Conservative step size for a sequence: 1/(150 * spectral bound),
    /// also capped by duration/1000 and the configured max step.
    fn step_size(&self, sequence: &PulseSequence) -> f64 {
        let mut scale = self.sys.h0.norm_bound();
        for step in &sequence.steps {
            if let PulseStep::Pulse(p) = step {
                let amp = p.amplitude_bound();
                // per-channel norm bounds are O(1) for the controls
                let cb: f64 = self
                    .sys
                    .controls
                    .iter()
                    .map(|(_, t)| t.norm_bound())
                    .fold(2.0, f64::max);
                scale += amp * cb;
            }
        }
        let total = sequence.total_duration();
        let mut h = 1.0 / (150.0 * scale.max(1e-12));
        if total > 0.0 {
            h = h.min(total / 1000.0);
        }
        h.min(self.config.max_step)
    }

    /// Evolve a batch of states (same tier/basis) through a pulse sequence.
    pub fn evolve_batch(&mut self, sequence: &PulseSequence, states: &mut [SimState]) -> Result<()> {
        if states.is_empty() {
            return Ok(());
        }
        for s in states.iter() {
            if s.tier != self.sys.tier || s.basis != self.sys.basis {
                return Err(Error::TierMismatch {
                    a: s.tier_tag(),
                    b: format!("{}/{:?}", self.sys.tier.name(), self.sys.basis),
                });
            }
            if s.amplitudes.len() != self.sys.dim {
                return Err(Error::TierMismatch {
                    a: format!("dim {}", s.amplitudes.len()),
                    b: format!("dim {}", self.sys.dim),
                });
            }
        }
        let bindings = self.bind_sequence(sequence)?;
        let h_step = self.step_size(sequence);
        let refs: Vec<&SimState> = states.iter().map(|s| &*s).collect();
        let (mut yre, mut yim) = split_columns(&refs, self.sys.dim);
        let mut buf = Rk4Buffers::new(self.sys.dim, states.len());

        for (step, binding) in sequence.steps.iter().zip(bindings.iter()) {
            match (step, binding) {
                (PulseStep::Wait(d), _) => {
                    if *d <= 0.0 {
                        continue;
                    }
                    if let Term::Diagonal(energies) = &self.sys.h0 {
                        // exact free propagator in the diagonal basis
                        for r in 0..self.sys.dim {
                            let phase = -energies[r] * d;
                            let (s, c) = phase.sin_cos();
                            for col in 0..states.len() {
                                let re = yre[(r, col)];
                                let im = yim[(r, col)];
                                yre[(r, col)] = re * c - im * s;
                                yim[(r, col)] = re * s + im * c;
                            }
                        }
                    } else {
                        match self.config.method {
                            Method::FixedStep4 => rk4_segment(
                                &self.sys.h0,
                                &self.sys.controls,
                                None,
                                *d,
                                h_step,
                                &mut yre,
                                &mut yim,
                                &mut buf,
                            ),
                            Method::Adaptive => rk4_adaptive_segment(
                                &self.sys.h0,
                                &self.sys.controls,
                                None,
                                *d,
                                h_step,
                                self.config.local_tolerance,
                                &mut yre,
                                &mut yim,
                                &mut buf,
                            ),
                        }
                    }
                }
                (PulseStep::Pulse(p), Some(chans)) => {
                    let bound = BoundPulse {
                        pulse: p,
                        channels: chans.clone(),
                    };
                    match self.config.method {
                        Method::FixedStep4 => rk4_segment(
                            &self.sys.h0,
                            &self.sys.controls,
                            Some(&bound),
                            p.duration,
                            h_step,
                            &mut yre,
                            &mut yim,
                            &mut buf,
                        ),
                        Method::Adaptive => rk4_adaptive_segment(
                            &self.sys.h0,
                            &self.sys.controls,
                            Some(&bound),
                            p.duration,
                            h_step,
                            self.config.local_tolerance,
                            &mut yre,
                            &mut yim,
                            &mut buf,
                        ),
                    }
                }
                _ => unreachable!(),
            }
        }

        let dt = sequence.total_duration();
        for (c, s) in states.iter_mut().enumerate() {
            for r in 0..self.sys.dim {
                s.amplitudes[r] = C64::new(yre[(r, c)], yim[(r, c)]);
            }
            s.time += dt;
        }
        Ok(())
    }

    /// Apply an instantaneous diagonal phase `exp(i theta)` on every basis
    /// state where the given 1-based mode is occupied (mode basis).
    pub fn apply_mode_phase(&self, state: &mut SimState, mode: usize, theta: f64) -> Result<()> {
        if self.sys.basis != StateBasis::Mode {
            return Err(Error::TierIncompatible {
                operator: "mode phase",
                tier: self.sys.tier.name(),
                reason: "requires the mode basis",
            });
        }
        let (s, c) = theta.sin_cos();
        let rot = C64::new(c, s);
        match self.sys.tier {
            Tier::SingleExcitation => {
                state.amplitudes[mode - 1] *= rot;
            }
            Tier::NumberSector(_) | Tier::Full => {
                let masks: Vec<u64> = match &self.sys.sector {
                    Some(b) => b.clone(),
                    None => (0..1u64 << self.sys.spec.n_sites).collect(),
                };
                for (i, m) in masks.iter().enumerate() {
                    if m >> (mode - 1) & 1 == 1 {
                        state.amplitudes[i] *= rot;
                    }
                }
            }
        }
        Ok(())
    }

    /// Projective measurement of the site-1 occupation (equals the mode-1
    /// occupation under the interface convention). Returns the outcome and
    /// collapses the state.
    pub fn measure_site1<R: Rng>(&self, state: &mut SimState, rng: &mut R) -> Result<bool> {
        let occupied_idx: Vec<usize> = match (self.sys.tier, &self.sys.sector) {
            (Tier::SingleExcitation, _) => vec![0],
            (Tier::NumberSector(_), Some(b)) => (0..b.len()).filter(|&i| b[i] & 1 == 1).collect(),
            (Tier::Full, _) => (0..self.sys.dim).filter(|i| i & 1 == 1).collect(),
            _ => unreachable!(),
        };
        let mut p_occ = 0.0;
        for &i in &occupied_idx {
            p_occ += state.amplitudes[i].norm_sqr();
        }
        let total: f64 = state.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        let p_occ = (p_occ / total).clamp(0.0, 1.0);
        let outcome = rng.gen::<f64>() < p_occ;
        let keep: Vec<bool> = {
            let mut k = vec![!outcome; self.sys.dim];
            for &i in &occupied_idx {
                k[i] = outcome;
            }
            k
        };
        let mut norm2 = 0.0;
        for (i, a) in state.amplitudes.iter_mut().enumerate() {
            if !keep[i] {
                *a = C64::new(0.0, 0.0);
            } else {
                norm2 += a.norm_sqr();
            }
        }
        let scale = 1.0 / norm2.sqrt();
        for a in state.amplitudes.iter_mut() {
            *a *= scale;
        }
        Ok(outcome)
    }

    /// Exact site-1 flip `exp(-i (pi/2) X_1) = -i X_1`, valid as a standalone
    /// instantaneous operation because X_1 commutes with the chain
    /// Hamiltonian under the interface convention. Full tier only.
    pub fn flip_site1(&self, state: &mut SimState) -> Result<()> {
        if self.sys.tier != Tier::Full {
            return Err(Error::TierIncompatible {
                operator: "h1",
                tier: self.sys.tier.name(),
                reason: "X_1 changes particle number",
            });
        }
        self.sys.spec.require_interface_convention()?;
        let minus_i = C64::new(0.0, -1.0);
        let dim = self.sys.dim;
        for s in 0..dim / 2 {
            let a = 2 * s;
            let b = a ^ 1;
            let va = state.amplitudes[a];
            let vb = state.amplitudes[b];
            state.amplitudes[a] = minus_i * vb;
            state.amplitudes[b] = minus_i * va;
        }
        Ok(())
    }
}

/// Evolve one state through a sequence (convenience wrapper).
pub fn evolve(
    spec: &ChainSpec,
    sequence: &PulseSequence,
    state: &SimState,
    config: &PropagatorConfig,
) -> Result<SimState> {
    let mut prop = Propagator::new(spec, state.tier, state.basis, *config)?;
    let mut s = state.clone();
    prop.evolve_batch(sequence, std::slice::from_mut(&mut s))?;
    Ok(s)
}

/// Multiply the amplitude of every mode-m component by `exp(+i lambda_m t)`,
/// removing the free dynamical phases (mode basis).
pub fn rotating_frame(state: &SimState, spectrum: &ModeSpectrum, t: f64) -> Result<SimState> {
    if state.basis != StateBasis::Mode {
        return Err(Error::TierIncompatible {
            operator: "rotating_frame",
            tier: state.tier.name(),
            reason: "requires the mode basis",
        });
    }
    let mut out = state.clone();
    let energies: Vec<f64> = match state.tier {
        Tier::SingleExcitation => spectrum.eigenvalues.clone(),
        Tier::NumberSector(k) => {
            let basis = oracle::sector_basis(spectrum.n_sites, k);
            basis
                .iter()
                .map(|m| {
                    (0..spectrum.n_sites)
                        .filter(|p| m >> p & 1 == 1)
                        .map(|p| spectrum.eigenvalues[p])
                        .sum()
                })
                .collect()
        }
        Tier::Full => (0..1u64 << spectrum.n_sites)
            .map(|m| {
                (0..spectrum.n_sites)
                    .filter(|p| m >> p & 1 == 1)
                    .map(|p| spectrum.eigenvalues[p])
                    .sum()
            })
            .collect(),
    };
    for (a, e) in out.amplitudes.iter_mut().zip(energies.iter()) {
        let (s, c) = (e * t).sin_cos();
        *a *= C64::new(c, s);
    }
    Ok(out)
}

/// Overlap-based fidelity between two states of the same tier and basis.
#[derive(Debug, Clone)]
pub struct FidelityReport {
    pub fidelity: f64,
    pub infidelity: f64,
    /// Population outside the designated subspace, when one was given.
    pub leakage: Option<f64>,
    /// arg(<b_i|a>) for designated basis indices, when given.
    pub phases: Option<Vec<f64>>,
}

pub fn fidelity(a: &SimState, b: &SimState) -> Result<FidelityReport> {
    if a.tier != b.tier || a.basis != b.basis || a.amplitudes.len() != b.amplitudes.len() {
        return Err(Error::TierMismatch {
            a: a.tier_tag(),
            b: b.tier_tag(),
        });
    }
    let mut ov = C64::new(0.0, 0.0);
    for (x, y) in a.amplitudes.iter().zip(b.amplitudes.iter()) {
        ov += y.conj() * x;
    }
    let f = ov.norm_sqr();
    Ok(FidelityReport {
        fidelity: f,
        infidelity: 1.0 - f,
        leakage: None,
        phases: None,
    })
}

/// Fidelity against one target basis index plus leakage out of a subspace of
/// basis indices.
pub fn subspace_fidelity(state: &SimState, target_index: usize, subspace: &[usize]) -> FidelityReport {
    let f = state.amplitudes[target_index].norm_sqr();
    let inside: f64 = subspace.iter().map(|&i| state.amplitudes[i].norm_sqr()).sum();
    let phases = subspace
        .iter()
        .map(|&i| state.amplitudes[i].arg())
        .collect();
    FidelityReport {
        fidelity: f,
        infidelity: 1.0 - f,
        leakage: Some(1.0 - inside),
        phases: Some(phases),
    }
}

/// RWA prediction for a single resonant tone.
#[derive(Debug, Clone)]
pub enum RwaEffective {
    /// No drive.
    Zero,
    /// Resonant transfer between mode 1 and `mode`:
    /// `rabi_rate (e^{i phase} b_1^dag b_n + h.c.)`.
    TwoMode {
        mode: usize,
        rabi_rate: f64,
        rotation_angle: f64,
        full_period: f64,
    },
    /// Conditional pair rotation via h3, sign set by the mode-1 occupation.
    Conditional {
        qubits: Vec<usize>,
        branch_rate: f64,
        conditional_angle: f64,
    },
}

/// Predict the effective generator of a single-tone resonant pulse:
/// the Rabi rate, the implemented rotation angle at the pulse duration, and
/// the full population-oscillation period.
pub fn effective_rwa_generator(spectrum: &ModeSpectrum, pulse: &PulseProgram) -> Result<RwaEffective> {
    if pulse.tones.iter().all(|t| t.amplitude == 0.0) {
        return Ok(RwaEffective::Zero);
    }
    let tone = pulse.tones[0];
    let freq = tone.angular_frequency;
    let tol = 1e-6 * spectrum.spectral_radius().max(1.0);
    match pulse.target {
        Control::H2 | Control::H2Quadrature => {
            let mut matches: Vec<usize> = (2..=spectrum.n_sites)
                .filter(|&m| (spectrum.lambda(m).abs() - freq).abs() <= tol)
                .collect();
            if matches.len() != 1 {
                let mut nearest: Vec<(usize, f64)> = (2..=spectrum.n_sites)
                    .map(|m| (m, spectrum.lambda(m).abs()))
                    .collect();
                nearest.sort_by(|a, b| {
                    (a.1 - freq).abs().total_cmp(&(b.1 - freq).abs())
                });
                nearest.truncate(3);
                return Err(Error::OffResonant {
                    frequency: freq,
                    nearest,
                });
            }
            let mode = matches.pop().unwrap();
            let rabi_rate = 0.5 * tone.amplitude * spectrum.alpha(mode);
            Ok(RwaEffective::TwoMode {
                mode,
                rabi_rate,
                rotation_angle: rabi_rate * pulse.duration,
                full_period: 2.0 * std::f64::consts::PI / (2.0 * rabi_rate),
            })
        }
        Control::H3 => {
            let qubits: Vec<usize> = (1..=spectrum.n_logical())
                .filter(|&q| (spectrum.pair_gap(q) - freq).abs() <= tol)
                .collect();
            if qubits.is_empty() {
                let mut nearest: Vec<(usize, f64)> = (1..=spectrum.n_logical())
                    .map(|q| (q, spectrum.pair_gap(q)))
                    .collect();
                nearest.sort_by(|a, b| (a.1 - freq).abs().total_cmp(&(b.1 - freq).abs()));
                nearest.truncate(3);
                return Err(Error::OffResonant {
                    frequency: freq,
                    nearest,
                });
            }
            let q0 = qubits[0];
            let (p, q) = spectrum.pair(q0);
            let aa = (spectrum.alpha(p) * spectrum.alpha(q)).abs();
            // pair hop coefficient in h3 is 2 alpha_p alpha_q; the slow part
            // of an amplitude-A cosine is A/2, so each branch rotates at
            // A alpha_p alpha_q.
            let branch_rate = tone.amplitude * aa;
            Ok(RwaEffective::Conditional {
                qubits,
                branch_rate,
                conditional_angle: 2.0 * branch_rate * pulse.duration,
            })
        }
        Control::H1 => Ok(RwaEffective::Zero),
    }
}

/// Second-order estimate of the swap error from off-resonant modes, plus the
/// closed-form harmonic bound available for the regular ladder.
#[derive(Debug, Clone)]
pub struct EliminationEstimate {
    /// `B^2/4 sum_{m != n, m >= 2} alpha_m^2 / (lambda_m - lambda_n)^2`.
    pub sum_estimate: f64,
    /// `(N-2)/2 * H_{N-1}` (harmonic number), bounding
    /// `|sum 1/(lambda_m - lambda_n)|` on the ladder.
    pub harmonic_bound: f64,
    /// Order-of-magnitude scaling form `B^2 N ln^2 N`.
    pub scaling_form: f64,
    /// True when a degenerate gap made the estimate diverge.
    pub degenerate: bool,
}

pub fn adiabatic_elimination_error(
    spectrum: &ModeSpectrum,
    n: usize,
    b: f64,
) -> Result<EliminationEstimate> {
    spectrum.check_mode_index(n)?;
    let nn = spectrum.n_sites as f64;
    let mut sum = 0.0;
    let mut degenerate = false;
    for m in 2..=spectrum.n_sites {
        if m == n {
            continue;
        }
        let gap = spectrum.lambda(m) - spectrum.lambda(n);
        if gap.abs() < 1e-12 {
            degenerate = true;
            sum = f64::INFINITY;
            break;
        }
        let a = spectrum.alpha(m);
        sum += a * a / (gap * gap);
    }
    let harmonic: f64 = (1..spectrum.n_sites).map(|m| 1.0 / m as f64).sum();
    Ok(EliminationEstimate {
        sum_estimate: 0.25 * b * b * sum,
        harmonic_bound: (nn - 2.0) / 2.0 * harmonic,
        scaling_form: b * b * nn * nn.ln() * nn.ln(),
        degenerate,
    })
}

/// Per-mode amplitude history over a pulse (single-excitation mode basis).
#[derive(Debug, Clone)]
pub struct LeakageProfile {
    pub times: Vec<f64>,
    /// |amplitude|^2 per mode per sampled time; `series[k][m]` is mode m+1 at
    /// time k.
    pub series: Vec<Vec<f64>>,
    /// Maximum |amplitude|^2 reached by each mode over the pulse.
    pub per_mode_max: Vec<f64>,
    /// Sum of spectator maxima (modes other than 1 and the driven one).
    pub spectator_leakage: f64,
    pub driven_mode: usize,
}

/// Track mode populations through a swap-type pulse starting from the driven
/// mode, sampling ~400 points.
pub fn leakage_profile(
    spec: &ChainSpec,
    pulse: &PulseProgram,
    config: &PropagatorConfig,
) -> Result<LeakageProfile> {
    let spectrum = chain::diagonalize(spec)?;
    let driven = match effective_rwa_generator(&spectrum, pulse)? {
        RwaEffective::TwoMode { mode, .. } => mode,
        RwaEffective::Zero => spectrum.minimum_mode(),
        RwaEffective::Conditional { .. } => {
            return Err(Error::TierIncompatible {
                operator: "h3",
                tier: "single-excitation",
                reason: "leakage profile tracks h2-type swaps",
            })
        }
    };
    let n_samples = 400usize;
    let dt = pulse.duration / n_samples as f64;
    let mut prop = Propagator::new(spec, Tier::SingleExcitation, StateBasis::Mode, *config)?;
    let mut state = SimState::mode_excitation(spec.n_sites, driven);
    let mut times = Vec::with_capacity(n_samples + 1);
    let mut series = Vec::with_capacity(n_samples + 1);
    let mut per_mode_max = vec![0.0f64; spec.n_sites];
    let record = |state: &SimState, t: f64, times: &mut Vec<f64>, series: &mut Vec<Vec<f64>>, mx: &mut Vec<f64>| {
        let pops: Vec<f64> = state.amplitudes.iter().map(|a| a.norm_sqr()).collect();
        for (m, &p) in pops.iter().enumerate() {
            mx[m] = mx[m].max(p);
        }
        times.push(t);
        series.push(pops);
    };
    record(&state, 0.0, &mut times, &mut series, &mut per_mode_max);
    for k in 1..=n_samples {
        let mut chunk = pulse.clone();
        chunk.duration = dt;
        // keep the carrier aligned with absolute pulse time
        for tone in &mut chunk.tones {
            tone.phase += tone.angular_frequency * dt * (k as f64 - 1.0);
        }
        let seq = PulseSequence::new(vec![PulseStep::Pulse(chunk)]);
        prop.evolve_batch(&seq, std::slice::from_mut(&mut state))?;
        record(&state, dt * k as f64, &mut times, &mut series, &mut per_mode_max);
    }
    let spectator_leakage = (0..spec.n_sites)
        .filter(|&m| m != 0 && m != driven - 1)
        .map(|m| per_mode_max[m])
        .sum();
    Ok(LeakageProfile {
        times,
        series,
        per_mode_max,
        spectator_leakage,
        driven_mode: driven,
    })
}

/// Change a state between the site and mode bases of its tier.
pub fn transform_basis(state: &SimState, spectrum: &ModeSpectrum) -> Result<SimState> {
    let sys = TierSystem::new(
        &chain_from_spectrum(spectrum)?,
        state.tier,
        state.basis,
    )?;
    let u = sys.mode_to_site(spectrum)?;
    let dim = state.amplitudes.len();
    let mut out = state.clone();
    match state.basis {
        StateBasis::Mode => {
            // site = U * mode
            for r in 0..dim {
                let mut acc = C64::new(0.0, 0.0);
                for c in 0..dim {
                    acc += u[(r, c)] * state.amplitudes[c];
                }
                out.amplitudes[r] = acc;
            }
            out.basis = StateBasis::Site;
        }
        StateBasis::Site => {
            for r in 0..dim {
                let mut acc = C64::new(0.0, 0.0);
                for c in 0..dim {
                    acc += u[(c, r)] * state.amplitudes[c];
                }
                out.amplitudes[r] = acc;
            }
            out.basis = StateBasis::Mode;
        }
    }
    Ok(out)
}

// The basis change needs the chain only through its spectrum; reconstruct a
// minimal spec carrying the right size. Used by `transform_basis` only.
fn chain_from_spectrum(spectrum: &ModeSpectrum) -> Result<ChainSpec> {
    let n = spectrum.n_sites;
    let mut couplings = vec![0.0; n - 1];
    if n >= 2 {
        couplings[0] = 0.0;
    }
    ChainSpec::new(couplings, vec![0.0; n], 0.0, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::diagonalize;
    use crate::pulse::{swap_pulse, two_quadrature_swap, PulseStep};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_interface_spec(rng: &mut ChaCha8Rng, n: usize) -> ChainSpec {
        let mut couplings: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(0.4..1.3)).collect();
        couplings[0] = 0.0;
        let mut fields: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect();
        fields[0] = 0.0;
        ChainSpec::new(couplings, fields, 0.0, 0.0).unwrap()
    }

    fn random_tones(rng: &mut ChaCha8Rng, scale: f64) -> PulseProgram {
        let tones = (0..2)
            .map(|_| crate::pulse::Tone::cosine(
                rng.gen_range(0.05..0.3),
                rng.gen_range(0.0..2.0) * scale,
                rng.gen_range(0.0..6.28),
            ))
            .collect();
        PulseProgram {
            target: Control::H2,
            tones,
            duration: rng.gen_range(4.0..12.0),
            annotation: crate::pulse::Intent::Custom("random drive".into()),
        }
    }

    #[test]
    fn zero_duration_sequence_is_identity() {
        let spec = ChainSpec::engineered(5, 0.2).unwrap();
        let state = SimState::mode_excitation(5, 3);
        let out = evolve(&spec, &PulseSequence::default(), &state, &PropagatorConfig::default()).unwrap();
        for (a, b) in out.amplitudes.iter().zip(state.amplitudes.iter()) {
            assert_relative_eq!(a.re, b.re, epsilon = 1e-15);
            assert_relative_eq!(a.im, b.im, epsilon = 1e-15);
        }
    }

    #[test]
    fn cross_tier_single_excitation_vs_full() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for n in [4usize, 6] {
            let spec = random_interface_spec(&mut rng, n);
            let pulse = random_tones(&mut rng, 1.0);
            let seq = PulseSequence::new(vec![PulseStep::Pulse(pulse)]);
            let config = PropagatorConfig {
                max_step: 0.002,
                ..Default::default()
            };
            // random single-excitation site-basis state
            let mut amps: Vec<C64> = (0..n)
                .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            amps.iter_mut().for_each(|a| *a /= norm);

            let s1 = SimState {
                tier: Tier::SingleExcitation,
                basis: StateBasis::Site,
                amplitudes: amps.clone(),
                time: 0.0,
            };
            let mut full_amps = vec![C64::new(0.0, 0.0); 1 << n];
            for (k, a) in amps.iter().enumerate() {
                full_amps[1 << k] = *a;
            }
            let sf = SimState {
                tier: Tier::Full,
                basis: StateBasis::Site,
                amplitudes: full_amps,
                time: 0.0,
            };
            let o1 = evolve(&spec, &seq, &s1, &config).unwrap();
            let of = evolve(&spec, &seq, &sf, &config).unwrap();
            let mut max_dev: f64 = 0.0;
            for k in 0..n {
                let d = (o1.amplitudes[k] - of.amplitudes[1 << k]).norm();
                max_dev = max_dev.max(d);
            }
            assert!(max_dev < 1e-8, "n={n} dev={max_dev}");
            assert!((o1.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn swap_transfers_population() {
        let spec = ChainSpec::engineered(9, std::f64::consts::SQRT_2).unwrap();
        let s = diagonalize(&spec).unwrap();
        let mode = s.minimum_mode();
        let b = 0.05;
        let pulse = swap_pulse(&s, mode, b).unwrap();
        let seq = PulseSequence::new(vec![PulseStep::Pulse(pulse)]);
        let state = SimState::mode_excitation(9, mode);
        let out = evolve(&spec, &seq, &state, &PropagatorConfig::default()).unwrap();
        let p1 = out.amplitudes[0].norm_sqr();
        assert!(p1 > 0.99, "transfer {p1}");
        assert!((out.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_quadrature_beats_cosine() {
        let spec = ChainSpec::engineered(8, 1.3).unwrap();
        let s = diagonalize(&spec).unwrap();
        let mode = s.minimum_mode();
        let b = 0.05;
        let run = |p: PulseProgram| {
            let seq = PulseSequence::new(vec![PulseStep::Pulse(p)]);
            let state = SimState::mode_excitation(8, mode);
            let out = evolve(&spec, &seq, &state, &PropagatorConfig::default()).unwrap();
            1.0 - out.amplitudes[0].norm_sqr()
        };
        let eps_cos = run(swap_pulse(&s, mode, b).unwrap());
        let eps_circ = run(two_quadrature_swap(&s, mode, b).unwrap());
        assert!(
            eps_circ < eps_cos,
            "circular {eps_circ} should beat cosine {eps_cos}"
        );
    }

    #[test]
    fn rotating_frame_roundtrip() {
        let spec = ChainSpec::engineered(7, 0.4).unwrap();
        let s = diagonalize(&spec).unwrap();
        let mut state = SimState::mode_excitation(7, 3);
        state.amplitudes[0] = C64::new(0.6, 0.0);
        state.amplitudes[2] = C64::new(0.0, 0.8);
        let t = 3.7;
        let fwd = rotating_frame(&state, &s, t).unwrap();
        // lambda_1 = 0 component untouched
        assert_relative_eq!(fwd.amplitudes[0].re, 0.6, epsilon = 1e-15);
        let back = rotating_frame(&fwd, &s, -t).unwrap();
        for (a, b) in back.amplitudes.iter().zip(state.amplitudes.iter()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn integrator_convergence_under_step_halving() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = random_interface_spec(&mut rng, 6);
        let pulse = random_tones(&mut rng, 1.0);
        let seq = PulseSequence::new(vec![PulseStep::Pulse(pulse)]);
        let state = SimState::site_excitation(6, 2);
        let coarse = evolve(&spec, &seq, &state, &PropagatorConfig::default()).unwrap();
        let fine = evolve(
            &spec,
            &seq,
            &state,
            &PropagatorConfig {
                max_step: 0.5 / (150.0 * 4.0),
                ..Default::default()
            },
        )
        .unwrap();
        let dev: f64 = coarse
            .amplitudes
            .iter()
            .zip(fine.amplitudes.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-9, "dev {dev}");
    }

    #[test]
    fn adaptive_agrees_with_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = random_interface_spec(&mut rng, 5);
        let pulse = random_tones(&mut rng, 1.0);
        let seq = PulseSequence::new(vec![PulseStep::Pulse(pulse)]);
        let state = SimState::site_excitation(5, 3);
        let fixed = evolve(&spec, &seq, &state, &PropagatorConfig::default()).unwrap();
        let adaptive = evolve(
            &spec,
            &seq,
            &state,
            &PropagatorConfig {
                method: Method::Adaptive,
                local_tolerance: 1e-12,
                ..Default::default()
            },
        )
        .unwrap();
        let dev: f64 = fixed
            .amplitudes
            .iter()
            .zip(adaptive.amplitudes.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-8, "dev {dev}");
    }

    #[test]
    fn h1_rejected_outside_full_tier() {
        let spec = ChainSpec::engineered(5, 0.0).unwrap();
        let pulse = PulseProgram {
            target: Control::H1,
            tones: vec![crate::pulse::Tone::cosine(0.3, 0.0, 0.0)],
            duration: 1.0,
            annotation: crate::pulse::Intent::Flip,
        };
        let seq = PulseSequence::new(vec![PulseStep::Pulse(pulse)]);
        let state = SimState::mode_excitation(5, 2);
        let err = evolve(&spec, &seq, &state, &PropagatorConfig::default());
        assert!(matches!(err, Err(Error::TierIncompatible { operator: "h1", .. })));
    }

    #[test]
    fn rwa_generator_predictions() {
        let spec = ChainSpec::engineered(21, 0.9).unwrap();
        let s = diagonalize(&spec).unwrap();
        let b = 0.04;
        let p = swap_pulse(&s, 5, b).unwrap();
        match effective_rwa_generator(&s, &p).unwrap() {
            RwaEffective::TwoMode { mode, rabi_rate, rotation_angle, .. } => {
                assert_eq!(mode, 5);
                assert_relative_eq!(rabi_rate, 0.5 * b / 20.0f64.sqrt(), epsilon = 1e-12);
                assert_relative_eq!(rotation_angle, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        let e = crate::pulse::entangling_pulse(&s, 2, 0.8, 0.03).unwrap();
        match effective_rwa_generator(&s, &e).unwrap() {
            RwaEffective::Conditional { qubits, conditional_angle, .. } => {
                assert_eq!(qubits.len(), s.n_logical());
                assert_relative_eq!(conditional_angle, 0.8, epsilon = 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        let mut zero = p.clone();
        zero.tones[0].amplitude = 0.0;
        assert!(matches!(
            effective_rwa_generator(&s, &zero).unwrap(),
            RwaEffective::Zero
        ));
        let mut off = p.clone();
        off.tones[0].angular_frequency += 0.31;
        assert!(matches!(
            effective_rwa_generator(&s, &off),
            Err(Error::OffResonant { .. })
        ));
    }

    #[test]
    fn measurement_projects_and_repeats() {
        let spec = ChainSpec::engineered(5, 0.8).unwrap();
        let prop = Propagator::new(&spec, Tier::SingleExcitation, StateBasis::Mode, PropagatorConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // equal superposition of mode 1 and mode 3
        let mut state = SimState::mode_excitation(5, 1);
        state.amplitudes[0] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        state.amplitudes[2] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let mut occupied = 0;
        for seed in 0..60 {
            let mut rng2 = ChaCha8Rng::seed_from_u64(seed);
            let mut s = state.clone();
            let o1 = prop.measure_site1(&mut s, &mut rng2).unwrap();
            let o2 = prop.measure_site1(&mut s, &mut rng2).unwrap();
            assert_eq!(o1, o2, "projection idempotence");
            if o1 {
                occupied += 1;
            }
        }
        assert!((10..=50).contains(&occupied), "Born statistics: {occupied}/60");
        let _ = rng;
    }

    #[test]
    fn mode_energy_wait_matches_integration() {
        let spec = ChainSpec::engineered(5, 0.4).unwrap();
        let seq = PulseSequence::new(vec![PulseStep::Wait(7.3)]);
        let mut site_state = SimState::site_excitation(5, 2);
        site_state.amplitudes[2] = C64::new(0.5, 0.1);
        let norm = site_state.norm();
        site_state.amplitudes.iter_mut().for_each(|a| *a /= norm);
        let s = diagonalize(&spec).unwrap();
        let mode_state = transform_basis(&site_state, &s).unwrap();
        let out_site = evolve(&spec, &seq, &site_state, &PropagatorConfig::default()).unwrap();
        let out_mode = evolve(&spec, &seq, &mode_state, &PropagatorConfig::default()).unwrap();
        let back = transform_basis(&out_mode, &s).unwrap();
        for (a, b) in back.amplitudes.iter().zip(out_site.amplitudes.iter()) {
            assert!((a - b).norm() < 1e-9, "{a} vs {b}");
        }
    }
}
