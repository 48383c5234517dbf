//! Toy-scale generic controllability: driving an arbitrary N-qubit
//! Hamiltonian through a single control operator by putting one cosine tone
//! on every eigenstate transition. Exponential in every respect (tone count,
//! 1/B, refocusing length), which is the point being illustrated.

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::oracle::HermitianOp;
use crate::pulse::{Intent, PulseProgram, Tone};
use crate::C64;

/// Eigenstructure of an arbitrary N-qubit Hamiltonian with each eigenvector
/// labeled by a logical bitstring.
#[derive(Debug, Clone)]
pub struct EigenLabeling {
    pub n_qubits: usize,
    /// Eigenvalue of the eigenvector labeled x (ascending in x).
    pub eigenvalues: Vec<f64>,
    /// Column x is the eigenvector labeled x.
    pub eigenvectors: DMatrix<f64>,
    /// Matrix elements <lambda_y| h_1 |lambda_x>.
    pub h1_elements: DMatrix<f64>,
    /// min over pairs of | |gap| - |gap'| | (uniqueness margin of the
    /// transition frequencies).
    pub gap_margin: f64,
    /// min |lambda_x - lambda_y| over distinct pairs.
    pub min_gap: f64,
}

/// X_1 on N qubits as a dense real matrix.
fn x1_matrix(n_qubits: usize) -> DMatrix<f64> {
    let dim = 1usize << n_qubits;
    let mut m = DMatrix::zeros(dim, dim);
    for s in 0..dim {
        m[(s ^ 1, s)] = 1.0;
    }
    m
}

/// Label the eigenstructure of `h` (ascending eigenvalues map to bitstrings
/// in counting order) and tabulate the control matrix elements.
pub fn label_eigenstructure(h: &DMatrix<f64>) -> Result<EigenLabeling> {
    let dim = h.nrows();
    let n_qubits = dim.trailing_zeros() as usize;
    if 1usize << n_qubits != dim {
        return Err(Error::InvalidSize {
            min: 2,
            got: dim,
        });
    }
    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut eigenvectors = DMatrix::zeros(dim, dim);
    for (x, &k) in order.iter().enumerate() {
        for r in 0..dim {
            eigenvectors[(r, x)] = eig.eigenvectors[(r, k)];
        }
    }
    let h1 = x1_matrix(n_qubits);
    let h1_elements = eigenvectors.transpose() * h1 * &eigenvectors;

    let mut gaps: Vec<f64> = Vec::new();
    let mut min_gap = f64::INFINITY;
    for x in 0..dim {
        for y in x + 1..dim {
            let g = (eigenvalues[y] - eigenvalues[x]).abs();
            min_gap = min_gap.min(g);
            gaps.push(g);
        }
    }
    gaps.sort_by(f64::total_cmp);
    let mut gap_margin = f64::INFINITY;
    for w in gaps.windows(2) {
        gap_margin = gap_margin.min(w[1] - w[0]);
    }
    Ok(EigenLabeling {
        n_qubits,
        eigenvalues,
        eigenvectors,
        h1_elements,
        gap_margin,
        min_gap,
    })
}

/// Draw random real symmetric Hamiltonians until the transition frequencies
/// are unique with margin at least `margin_floor` and every flip matrix
/// element exceeds `element_floor`.
pub fn sample_generic_hamiltonian(
    n_qubits: usize,
    seed: u64,
    margin_floor: f64,
    element_floor: f64,
) -> Result<(DMatrix<f64>, EigenLabeling)> {
    let dim = 1usize << n_qubits;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..10_000 {
        let mut h = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let v = rng.gen_range(-1.0..1.0);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let lab = label_eigenstructure(&h)?;
        if lab.gap_margin < margin_floor {
            continue;
        }
        let mut ok = true;
        'outer: for n in 1..=n_qubits {
            for x in 0..dim {
                if x >> (n - 1) & 1 == 0 {
                    let y = x ^ (1 << (n - 1));
                    if lab.h1_elements[(y, x)].abs() < element_floor {
                        ok = false;
                        break 'outer;
                    }
                }
            }
        }
        if ok {
            return Ok((h, lab));
        }
    }
    Err(Error::ScheduleTiming(
        "rejection sampling failed to find a generic Hamiltonian".into(),
    ))
}

/// Multi-tone field implementing a logical X rotation on qubit n: one cosine
/// per bitstring with x_n = 0, at the (x, x XOR n) transition frequency, with
/// amplitude B / <lambda_{x XOR n}|h_1|lambda_x>. The effective generator is
/// (B/2) sum (|x><x XOR n| + h.c.), so a full bit flip takes time pi / B.
pub fn generic_x_field(labeling: &EigenLabeling, n: usize, b: f64) -> Result<PulseProgram> {
    build_field(labeling, n, None, b)
}

/// As [`generic_x_field`] but summing only over strings with the control bit
/// m set: the target flips conditionally on m.
pub fn generic_cnot_field(
    labeling: &EigenLabeling,
    control: usize,
    target: usize,
    b: f64,
) -> Result<PulseProgram> {
    if control == target {
        return Err(Error::LogicalIndex {
            index: target,
            max: labeling.n_qubits,
        });
    }
    build_field(labeling, target, Some(control), b)
}

fn build_field(
    labeling: &EigenLabeling,
    n: usize,
    control: Option<usize>,
    b: f64,
) -> Result<PulseProgram> {
    if n < 1 || n > labeling.n_qubits {
        return Err(Error::LogicalIndex {
            index: n,
            max: labeling.n_qubits,
        });
    }
    if !(b > 0.0) {
        return Err(Error::NonPositiveAmplitude(b));
    }
    let dim = 1usize << labeling.n_qubits;
    let bit = 1usize << (n - 1);
    let mut tones = Vec::new();
    for x in 0..dim {
        if x & bit != 0 {
            continue;
        }
        if let Some(m) = control {
            if x >> (m - 1) & 1 == 0 {
                continue;
            }
        }
        let y = x ^ bit;
        let elem = labeling.h1_elements[(y, x)];
        if elem.abs() < 1e-12 {
            return Err(Error::VanishingMatrixElement { x, y });
        }
        let freq = (labeling.eigenvalues[x] - labeling.eigenvalues[y]).abs();
        tones.push(Tone::cosine(b / elem, freq, 0.0));
    }
    Ok(PulseProgram {
        target: crate::oracle::Control::H1,
        tones,
        duration: std::f64::consts::PI / b,
        annotation: Intent::Custom(match control {
            None => format!("generic logical X on qubit {n}"),
            Some(m) => format!("generic cNOT control {m} target {n}"),
        }),
    })
}

/// Cost figures exposing the exponential overhead of the generic scheme.
#[derive(Debug, Clone)]
pub struct GenericCost {
    pub tone_count: usize,
    /// Largest drive amplitude B honoring the RWA against the gap margin
    /// (one tenth of the uniqueness margin).
    pub max_amplitude: f64,
    /// Bit-flip duration pi / B at that amplitude.
    pub flip_duration: f64,
}

pub fn cost_report(labeling: &EigenLabeling) -> GenericCost {
    let tone_count = 1usize << (labeling.n_qubits - 1);
    let max_amplitude = labeling.gap_margin / 10.0;
    GenericCost {
        tone_count,
        max_amplitude,
        flip_duration: std::f64::consts::PI / max_amplitude,
    }
}

/// Diagonal phases accumulated by interleaving the ideal cyclic permutation
/// `sum_x |lambda_{x+1}><lambda_x|` with free evolutions of the given
/// durations (applied permutation-first after each wait). Entry x is the
/// phase acquired by the eigenvector labeled x after the full cycle.
pub fn cyclic_refocus(labeling: &EigenLabeling, waits: &[f64]) -> Result<Vec<f64>> {
    let dim = 1usize << labeling.n_qubits;
    if waits.len() != dim {
        return Err(Error::InvalidSize {
            min: dim,
            got: waits.len(),
        });
    }
    let mut phases = vec![0.0; dim];
    for x in 0..dim {
        let mut acc = 0.0;
        for (k, w) in waits.iter().enumerate() {
            let idx = (x + k) % dim;
            acc -= labeling.eigenvalues[idx] * w;
        }
        phases[x] = acc;
    }
    Ok(phases)
}

/// Ideal cyclic permutation unitary in the computational basis.
pub fn cyclic_permutation_matrix(labeling: &EigenLabeling) -> DMatrix<f64> {
    let dim = 1usize << labeling.n_qubits;
    // sum_x |lambda_{x+1}><lambda_x| = V P V^T with P the basis cycle
    let v = &labeling.eigenvectors;
    let mut p = DMatrix::zeros(dim, dim);
    for x in 0..dim {
        p[((x + 1) % dim, x)] = 1.0;
    }
    v * p * v.transpose()
}

/// Fixed-step RK4 for the driven toy system `H + f(t) h_1`; dense complex,
/// dimensions <= 16.
pub fn evolve_driven(
    h: &DMatrix<f64>,
    pulse: &PulseProgram,
    state: &[C64],
    steps_per_unit_time: f64,
) -> Vec<C64> {
    let dim = h.nrows();
    let hop = HermitianOp::real(x1_matrix(dim.trailing_zeros() as usize));
    let duration = pulse.duration;
    let n_steps = (duration * steps_per_unit_time).ceil().max(1.0) as usize;
    let dt = duration / n_steps as f64;
    let f = |t: f64| -> f64 {
        pulse
            .tones
            .iter()
            .map(|tone| tone.amplitude * (tone.angular_frequency * t + tone.phase).cos())
            .sum()
    };
    let deriv = |t: f64, y: &[C64], out: &mut [C64]| {
        let ft = f(t);
        for r in 0..dim {
            let mut acc = C64::new(0.0, 0.0);
            for c in 0..dim {
                let hrc = h[(r, c)] + ft * hop.re[(r, c)];
                if hrc != 0.0 {
                    acc += hrc * y[c];
                }
            }
            out[r] = C64::new(0.0, -1.0) * acc;
        }
    };
    let mut y = state.to_vec();
    let mut k1 = vec![C64::new(0.0, 0.0); dim];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut tmp = k1.clone();
    for s in 0..n_steps {
        let t0 = s as f64 * dt;
        deriv(t0, &y, &mut k1);
        for r in 0..dim {
            tmp[r] = y[r] + 0.5 * dt * k1[r];
        }
        deriv(t0 + 0.5 * dt, &tmp, &mut k2);
        for r in 0..dim {
            tmp[r] = y[r] + 0.5 * dt * k2[r];
        }
        deriv(t0 + 0.5 * dt, &tmp, &mut k3);
        for r in 0..dim {
            tmp[r] = y[r] + dt * k3[r];
        }
        deriv(t0 + dt, &tmp, &mut k4);
        for r in 0..dim {
            y[r] += dt / 6.0 * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r]);
        }
    }
    y
}

/// Fidelity of the driven flip against the ideal logical X on bit n,
/// averaged over all eigenvector columns (interaction picture, phase
/// quotient per column).
pub fn x_gate_fidelity(
    h: &DMatrix<f64>,
    labeling: &EigenLabeling,
    n: usize,
    b: f64,
) -> Result<f64> {
    let pulse = generic_x_field(labeling, n, b)?;
    let dim = 1usize << labeling.n_qubits;
    let steps = (50.0 * spectral_bound(h, &pulse)).max(200.0);
    let bit = 1usize << (n - 1);
    let mut worst: f64 = 1.0;
    for x in 0..dim {
        let col: Vec<C64> = (0..dim)
            .map(|r| C64::new(labeling.eigenvectors[(r, x)], 0.0))
            .collect();
        let out = evolve_driven(h, &pulse, &col, steps);
        // overlap with the flipped eigenvector
        let y = x ^ bit;
        let mut ov = C64::new(0.0, 0.0);
        for r in 0..dim {
            ov += C64::new(labeling.eigenvectors[(r, y)], 0.0).conj() * out[r];
        }
        worst = worst.min(ov.norm_sqr());
    }
    Ok(worst)
}

/// As [`x_gate_fidelity`] for the conditional field: flipped columns for
/// control = 1, preserved columns for control = 0.
pub fn cnot_gate_fidelity(
    h: &DMatrix<f64>,
    labeling: &EigenLabeling,
    control: usize,
    target: usize,
    b: f64,
) -> Result<f64> {
    let pulse = generic_cnot_field(labeling, control, target, b)?;
    let dim = 1usize << labeling.n_qubits;
    let steps = (50.0 * spectral_bound(h, &pulse)).max(200.0);
    let tb = 1usize << (target - 1);
    let cb = 1usize << (control - 1);
    let mut worst: f64 = 1.0;
    for x in 0..dim {
        let col: Vec<C64> = (0..dim)
            .map(|r| C64::new(labeling.eigenvectors[(r, x)], 0.0))
            .collect();
        let out = evolve_driven(h, &pulse, &col, steps);
        let y = if x & cb != 0 { x ^ tb } else { x };
        let mut ov = C64::new(0.0, 0.0);
        for r in 0..dim {
            ov += C64::new(labeling.eigenvectors[(r, y)], 0.0).conj() * out[r];
        }
        worst = worst.min(ov.norm_sqr());
    }
    Ok(worst)
}

fn spectral_bound(h: &DMatrix<f64>, pulse: &PulseProgram) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..h.nrows() {
        let row: f64 = (0..h.ncols()).map(|j| h[(i, j)].abs()).sum();
        best = best.max(row);
    }
    best + pulse.amplitude_bound() + pulse.max_frequency()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn two_level_rabi_reduction() {
        // H = w Z / 2 labeled so that the single tone sits at w
        let w = 1.3;
        let h = DMatrix::from_row_slice(2, 2, &[-w / 2.0, 0.0, 0.0, w / 2.0]);
        let lab = label_eigenstructure(&h).unwrap();
        let p = generic_x_field(&lab, 1, 0.01).unwrap();
        assert_eq!(p.tones.len(), 1);
        assert_relative_eq!(p.tones[0].angular_frequency, w, epsilon = 1e-12);
    }

    #[test]
    fn tone_counts() {
        let (_, lab) = sample_generic_hamiltonian(3, 5, 1e-3, 1e-3).unwrap();
        let p = generic_x_field(&lab, 2, 0.001).unwrap();
        assert_eq!(p.tones.len(), 4); // 2^(N-1)
        let c = cost_report(&lab);
        assert_eq!(c.tone_count, 4);
        let cn = generic_cnot_field(&lab, 1, 2, 0.001).unwrap();
        assert_eq!(cn.tones.len(), 2); // strings with x_1 = 1, x_2 = 0
    }

    #[test]
    fn n2_cnot_single_tone() {
        let (_, lab) = sample_generic_hamiltonian(2, 3, 1e-3, 1e-3).unwrap();
        let cn = generic_cnot_field(&lab, 1, 2, 0.001).unwrap();
        assert_eq!(cn.tones.len(), 1);
    }

    #[test]
    fn x_gate_high_fidelity_at_small_b() {
        let (h, lab) = sample_generic_hamiltonian(2, 11, 5e-2, 5e-2).unwrap();
        let b = 0.01 * lab.min_gap;
        let f = x_gate_fidelity(&h, &lab, 1, b).unwrap();
        assert!(f > 0.99, "fidelity {f}");
    }

    #[test]
    fn rwa_improves_as_b_shrinks() {
        let (h, lab) = sample_generic_hamiltonian(2, 11, 5e-2, 5e-2).unwrap();
        let b1 = 0.05 * lab.min_gap;
        let b2 = 0.005 * lab.min_gap;
        let f1 = x_gate_fidelity(&h, &lab, 1, b1).unwrap();
        let f2 = x_gate_fidelity(&h, &lab, 1, b2).unwrap();
        assert!(f2 > f1, "fidelity should improve: {f1} -> {f2}");
    }

    #[test]
    fn refocus_equal_waits_uniform_phase() {
        let (h, lab) = sample_generic_hamiltonian(2, 7, 1e-3, 1e-3).unwrap();
        let t = 0.9;
        let phases = cyclic_refocus(&lab, &[t; 4]).unwrap();
        let trace: f64 = lab.eigenvalues.iter().sum();
        for p in &phases {
            assert_relative_eq!(*p, -t * trace, epsilon = 1e-12);
        }
        let _ = h;
    }

    #[test]
    fn refocus_two_level_closed_form() {
        let h = DMatrix::from_row_slice(2, 2, &[-0.4, 0.0, 0.0, 0.7]);
        let lab = label_eigenstructure(&h).unwrap();
        let (t, d) = (1.1, 0.3);
        let phases = cyclic_refocus(&lab, &[t, t + d]).unwrap();
        // relative phase = d (lambda_1 - lambda_0)
        let rel = phases[1] - phases[0];
        assert_relative_eq!(
            rel,
            d * (lab.eigenvalues[1] - lab.eigenvalues[0]),
            epsilon = 1e-12
        );
        let zero = cyclic_refocus(&lab, &[0.0, 0.0]).unwrap();
        assert!(zero.iter().all(|p| *p == 0.0));
    }

    #[test]
    fn refocus_identity_on_superpositions() {
        // ideal permutation unitaries interleaved with equal free evolutions
        let (h, lab) = sample_generic_hamiltonian(2, 13, 1e-3, 1e-3).unwrap();
        let dim = 4;
        let perm = cyclic_permutation_matrix(&lab);
        let t = 0.37;
        // U = (P e^{-iHt})^4
        let eig = h.clone().symmetric_eigen();
        let expm = |tau: f64| -> DMatrix<C64> {
            let mut m = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
            for r in 0..dim {
                for c in 0..dim {
                    let mut acc = C64::new(0.0, 0.0);
                    for k in 0..dim {
                        let ph = C64::from_polar(1.0, -eig.eigenvalues[k] * tau);
                        acc += eig.eigenvectors[(r, k)] * ph * eig.eigenvectors[(c, k)];
                    }
                    m[(r, c)] = acc;
                }
            }
            m
        };
        let pc = DMatrix::from_fn(dim, dim, |i, j| C64::new(perm[(i, j)], 0.0));
        let step = &pc * expm(t);
        let mut u = DMatrix::from_fn(dim, dim, |i, j| {
            if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
        });
        for _ in 0..dim {
            u = &step * u;
        }
        // should be the identity up to a global phase
        let g = u[(0, 0)] / u[(0, 0)].norm();
        let mut dev: f64 = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                let want = if i == j { g } else { C64::new(0.0, 0.0) };
                dev = dev.max((u[(i, j)] - want).norm());
            }
        }
        assert!(dev < 1e-6, "deviation {dev}");
    }
}
