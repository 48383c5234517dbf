//! Symbolic control waveforms: every drive is a time-limited sum of cosine
//! tones applied to one control operator, evaluated analytically by the
//! integrators (never sampled).

use serde::{Deserialize, Serialize};

use crate::chain::ModeSpectrum;
use crate::error::{Error, Result};
use crate::oracle::Control;

/// Longest pulse accepted before the overlap is considered unphysically
/// small.
pub const MAX_PULSE_DURATION: f64 = 1e9;

/// Tone shape on its control operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Quadrature {
    /// amplitude * cos(w (t - t0) + phase) on the target operator.
    Cosine,
    /// Paired cos/sin components realizing a pure rotating drive
    /// `(A/2)(e^{i s w t} a_1^dag a_2 + h.c.)`: `(A/2) cos` on h2 plus
    /// `s (A/2) sin` on the XY-YX quadrature. Same resonant Rabi rate as the
    /// cosine form at equal amplitude, no counter-rotating term.
    Circular { sense: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub amplitude: f64,
    pub angular_frequency: f64,
    pub phase: f64,
    pub quadrature: Quadrature,
}

impl Tone {
    pub fn cosine(amplitude: f64, angular_frequency: f64, phase: f64) -> Self {
        Self {
            amplitude,
            angular_frequency,
            phase,
            quadrature: Quadrature::Cosine,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() {
            return Err(Error::NonFinite("tone amplitude"));
        }
        if !(self.angular_frequency >= 0.0) {
            return Err(Error::NonFinite("tone frequency"));
        }
        Ok(())
    }
}

/// What a pulse is meant to do; used for resonance bookkeeping and display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Intent {
    /// Full population swap between mode 1 and the named mode.
    Swap { mode: usize },
    /// Partial rotation between mode 1 and the named mode.
    Rotate { mode: usize, angle: f64 },
    /// Conditional rotation of the qubit-n pair via h3.
    Entangle { qubit: usize, angle: f64 },
    /// DC pi-flip of site 1 via h1.
    Flip,
    /// Square-wave switching of the target.
    SquareWave,
    Custom(String),
}

impl std::fmt::Display for Intent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Intent::Swap { mode } => write!(f, "swap mode {mode} <-> mode 1"),
            Intent::Rotate { mode, angle } => {
                write!(f, "rotate mode {mode} <-> mode 1 by {angle}")
            }
            Intent::Entangle { qubit, angle } => {
                write!(f, "conditional rotation of qubit {qubit} by {angle}")
            }
            Intent::Flip => write!(f, "flip site 1"),
            Intent::SquareWave => write!(f, "square-wave switching"),
            Intent::Custom(s) => write!(f, "{s}"),
        }
    }
}

/// A time-limited multi-tone drive on one control operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseProgram {
    pub target: Control,
    pub tones: Vec<Tone>,
    pub duration: f64,
    pub annotation: Intent,
}

impl PulseProgram {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) {
            return Err(Error::ZeroDuration("pulse duration must be positive"));
        }
        if self.tones.is_empty() {
            return Err(Error::ZeroDuration("pulse must carry at least one tone"));
        }
        for t in &self.tones {
            t.validate()?;
        }
        Ok(())
    }

    /// Instantaneous drive coefficients at local time `t` since pulse start,
    /// as (control operator, value) pairs.
    pub fn channel_values(&self, t: f64) -> Vec<(Control, f64)> {
        let mut out: Vec<(Control, f64)> = Vec::with_capacity(2);
        let mut add = |c: Control, v: f64| {
            if let Some(slot) = out.iter_mut().find(|(k, _)| *k == c) {
                slot.1 += v;
            } else {
                out.push((c, v));
            }
        };
        for tone in &self.tones {
            let arg = tone.angular_frequency * t + tone.phase;
            match tone.quadrature {
                Quadrature::Cosine => add(self.target, tone.amplitude * arg.cos()),
                Quadrature::Circular { sense } => {
                    add(self.target, 0.5 * tone.amplitude * arg.cos());
                    add(
                        Control::H2Quadrature,
                        0.5 * sense * tone.amplitude * arg.sin(),
                    );
                }
            }
        }
        out
    }

    /// Upper bound on the summed |amplitude| per channel, for step control.
    pub fn amplitude_bound(&self) -> f64 {
        self.tones.iter().map(|t| t.amplitude.abs()).sum()
    }

    /// Largest drive frequency present.
    pub fn max_frequency(&self) -> f64 {
        self.tones
            .iter()
            .map(|t| t.angular_frequency)
            .fold(0.0, f64::max)
    }
}

/// One element of a pulse sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PulseStep {
    Pulse(PulseProgram),
    Wait(f64),
}

impl PulseStep {
    pub fn duration(&self) -> f64 {
        match self {
            PulseStep::Pulse(p) => p.duration,
            PulseStep::Wait(d) => *d,
        }
    }
}

/// Ordered pulses and waits.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PulseSequence {
    pub steps: Vec<PulseStep>,
}

impl PulseSequence {
    pub fn new(steps: Vec<PulseStep>) -> Self {
        Self { steps }
    }

    pub fn total_duration(&self) -> f64 {
        self.steps.iter().map(|s| s.duration()).sum()
    }

    pub fn push_pulse(&mut self, p: PulseProgram) {
        self.steps.push(PulseStep::Pulse(p));
    }

    pub fn push_wait(&mut self, d: f64) {
        if d > 0.0 {
            self.steps.push(PulseStep::Wait(d));
        }
    }
}

fn check_amplitude(b: f64) -> Result<()> {
    if b > 0.0 && b.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveAmplitude(b))
    }
}

fn swap_like(spectrum: &ModeSpectrum, n: usize, b: f64, duration: f64, intent: Intent) -> Result<PulseProgram> {
    spectrum.check_mode_index(n)?;
    check_amplitude(b)?;
    let alpha = spectrum.alpha(n);
    if duration > MAX_PULSE_DURATION {
        return Err(Error::PulseTooLong {
            required: duration,
            limit: MAX_PULSE_DURATION,
            alpha,
        });
    }
    Ok(PulseProgram {
        target: Control::H2,
        tones: vec![Tone::cosine(b, spectrum.lambda(n).abs(), 0.0)],
        duration,
        annotation: intent,
    })
}

/// Resonant cosine drive `B cos(lambda_n t) h_2` for the time of a full
/// mode-1 <-> mode-n swap, `pi / (B alpha_n)`.
pub fn swap_pulse(spectrum: &ModeSpectrum, n: usize, b: f64) -> Result<PulseProgram> {
    spectrum.check_mode_index(n)?;
    check_amplitude(b)?;
    let duration = std::f64::consts::PI / (b * spectrum.alpha(n));
    swap_like(spectrum, n, b, duration, Intent::Swap { mode: n })
}

/// Partial-rotation variant: duration `2 theta / (B alpha_n)`, realizing the
/// interaction-picture rotation R(theta) between mode 1 and mode n. Negative
/// angles flip the tone phase by pi.
pub fn rotation_pulse(spectrum: &ModeSpectrum, n: usize, theta: f64, b: f64) -> Result<PulseProgram> {
    spectrum.check_mode_index(n)?;
    check_amplitude(b)?;
    if theta == 0.0 {
        return Err(Error::ZeroDuration("rotation angle is zero"));
    }
    let duration = 2.0 * theta.abs() / (b * spectrum.alpha(n));
    let mut p = swap_like(
        spectrum,
        n,
        b,
        duration,
        Intent::Rotate { mode: n, angle: theta },
    )?;
    if theta < 0.0 {
        p.tones[0].phase = std::f64::consts::PI;
    }
    Ok(p)
}

/// Three-pulse logical X rotation on qubit n: swap mode 2n down to the
/// workspace, rotate against mode 2n+1, swap back. With theta = 0 the middle
/// pulse is omitted and the sequence is swap-and-return.
pub fn x_rotation_sequence(
    spectrum: &ModeSpectrum,
    qubit: usize,
    theta: f64,
    b: f64,
) -> Result<PulseSequence> {
    spectrum.check_logical_index(qubit)?;
    let (p, q) = spectrum.pair(qubit);
    let mut seq = PulseSequence::default();
    seq.push_pulse(swap_pulse(spectrum, p, b)?);
    if theta != 0.0 {
        seq.push_pulse(rotation_pulse(spectrum, q, theta, b)?);
    }
    seq.push_pulse(swap_pulse(spectrum, p, b)?);
    Ok(seq)
}

/// Conditional drive `2B' cos((lambda_{2n}-lambda_{2n+1}) t) h_3` for a
/// conditional rotation of angle theta on the qubit-n pair: the two control
/// branches rotate R(+theta/2) and R(-theta/2). The duration carries a
/// `1/(2 alpha_{2n} alpha_{2n+1})` factor relative to the bare theta/(2B')
/// because the pair hop in h_3 enters with coefficient 2 alpha_p alpha_q.
pub fn entangling_pulse(
    spectrum: &ModeSpectrum,
    qubit: usize,
    theta: f64,
    b_prime: f64,
) -> Result<PulseProgram> {
    spectrum.check_logical_index(qubit)?;
    check_amplitude(b_prime)?;
    if theta == 0.0 {
        return Err(Error::ZeroDuration("conditional rotation angle is zero"));
    }
    let gap = spectrum.pair_gap(qubit);
    if spectrum.labeling != crate::chain::PairLabeling::RegularLadder {
        let tol = 1e-9 * spectrum.spectral_radius().max(1.0);
        let collisions: Vec<(usize, usize)> = (1..=spectrum.n_logical())
            .filter(|&k| k != qubit && (spectrum.pair_gap(k) - gap).abs() <= tol)
            .map(|k| spectrum.pair(k))
            .collect();
        if !collisions.is_empty() {
            return Err(Error::AmbiguousGap { qubit, collisions });
        }
    }
    let (p, q) = spectrum.pair(qubit);
    let aa = (spectrum.alpha(p) * spectrum.alpha(q)).abs();
    let duration = theta.abs() / (4.0 * b_prime * aa);
    if duration > MAX_PULSE_DURATION {
        return Err(Error::PulseTooLong {
            required: duration,
            limit: MAX_PULSE_DURATION,
            alpha: aa,
        });
    }
    let phase = if theta < 0.0 { std::f64::consts::PI } else { 0.0 };
    Ok(PulseProgram {
        target: Control::H3,
        tones: vec![Tone::cosine(2.0 * b_prime, gap, phase)],
        duration,
        annotation: Intent::Entangle { qubit, angle: theta },
    })
}

/// Swap drive with the counter-rotating term removed: paired cos/sin
/// quadratures on h2 and the XY-YX operator. Same frequency and duration as
/// [`swap_pulse`], differing only in the quadrature tag.
pub fn two_quadrature_swap(spectrum: &ModeSpectrum, n: usize, b: f64) -> Result<PulseProgram> {
    let mut p = swap_pulse(spectrum, n, b)?;
    let sense = if spectrum.lambda(n) >= 0.0 { 1.0 } else { -1.0 };
    p.tones[0].quadrature = Quadrature::Circular { sense };
    Ok(p)
}

/// Partial-rotation variant of [`two_quadrature_swap`].
pub fn two_quadrature_rotation(
    spectrum: &ModeSpectrum,
    n: usize,
    theta: f64,
    b: f64,
) -> Result<PulseProgram> {
    let mut p = rotation_pulse(spectrum, n, theta, b)?;
    let sense = if spectrum.lambda(n) >= 0.0 { 1.0 } else { -1.0 };
    p.tones[0].quadrature = Quadrature::Circular { sense };
    Ok(p)
}

/// Odd-harmonic Fourier tones of a unit on/off square switching with the
/// given period: DC 1/2 plus `(2/(k pi)) sin(2 pi k t / T)` for odd k,
/// truncated to `n_harmonics` oscillating terms. An infinite period collapses
/// to the DC component alone.
pub fn square_wave_tones(period: f64, n_harmonics: usize) -> Result<Vec<Tone>> {
    if !(period > 0.0) {
        return Err(Error::NonFinite("square-wave period"));
    }
    if n_harmonics < 1 {
        return Err(Error::ZeroDuration("need at least one harmonic"));
    }
    let mut tones = vec![Tone::cosine(0.5, 0.0, 0.0)];
    if period.is_infinite() {
        return Ok(tones);
    }
    let w0 = 2.0 * std::f64::consts::PI / period;
    let mut k = 1usize;
    for _ in 0..n_harmonics {
        // sin(k w0 t) = cos(k w0 t - pi/2)
        tones.push(Tone::cosine(
            2.0 / (k as f64 * std::f64::consts::PI),
            k as f64 * w0,
            -std::f64::consts::FRAC_PI_2,
        ));
        k += 2;
    }
    Ok(tones)
}

/// Scale all tone amplitudes by (1 + amplitude_error) and shift all
/// frequencies by `detuning`; duration unchanged.
pub fn perturb(pulse: &PulseProgram, amplitude_error: f64, detuning: f64) -> PulseProgram {
    let mut p = pulse.clone();
    for t in &mut p.tones {
        t.amplitude *= 1.0 + amplitude_error;
        t.angular_frequency += detuning;
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{diagonalize, ChainSpec};
    use approx::assert_relative_eq;

    fn ladder(n: usize, offset: f64) -> ModeSpectrum {
        diagonalize(&ChainSpec::engineered(n, offset).unwrap()).unwrap()
    }

    #[test]
    fn swap_duration_identity() {
        for n in [5usize, 9, 21] {
            let s = ladder(n, 0.4);
            for mode in 2..=n {
                let p = swap_pulse(&s, mode, 0.05).unwrap();
                let product = p.duration * p.tones[0].amplitude * s.alpha(mode);
                assert_relative_eq!(product, std::f64::consts::PI, epsilon = 1e-12);
                assert_relative_eq!(
                    p.tones[0].angular_frequency,
                    s.lambda(mode).abs(),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn ladder_swap_duration_closed_form() {
        let n = 21;
        let s = ladder(n, 0.0);
        let b = 0.05;
        let p = swap_pulse(&s, 7, b).unwrap();
        let expect = std::f64::consts::PI * ((n - 1) as f64).sqrt() / b;
        assert_relative_eq!(p.duration, expect, epsilon = 1e-9);
    }

    #[test]
    fn fig1_input_frequency() {
        let s = ladder(101, std::f64::consts::SQRT_2);
        let m = s.minimum_mode();
        let p = swap_pulse(&s, m, 0.02).unwrap();
        assert_relative_eq!(
            p.tones[0].angular_frequency,
            std::f64::consts::SQRT_2 - 1.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn zero_angle_guards() {
        let s = ladder(5, 0.3);
        assert!(matches!(
            rotation_pulse(&s, 3, 0.0, 0.05),
            Err(Error::ZeroDuration(_))
        ));
        assert!(matches!(
            entangling_pulse(&s, 1, 0.0, 0.05),
            Err(Error::ZeroDuration(_))
        ));
        let seq = x_rotation_sequence(&s, 1, 0.0, 0.05).unwrap();
        assert_eq!(seq.steps.len(), 2);
    }

    #[test]
    fn x_rotation_structure() {
        let s = ladder(5, 0.3);
        let seq = x_rotation_sequence(&s, 1, 1.1, 0.05).unwrap();
        assert_eq!(seq.steps.len(), 3);
        let durs: Vec<f64> = seq.steps.iter().map(|p| p.duration()).collect();
        let b = 0.05;
        assert_relative_eq!(durs[0], std::f64::consts::PI / (b * s.alpha(2)), epsilon = 1e-12);
        assert_relative_eq!(durs[1], 2.0 * 1.1 / (b * s.alpha(3)), epsilon = 1e-12);
        assert_relative_eq!(durs[2], durs[0], epsilon = 1e-15);
    }

    #[test]
    fn entangling_shared_gap() {
        for n in [5usize, 9] {
            let s = ladder(n, 0.0);
            let gap = 1.0 + 1.0 / (n as f64 - 2.0);
            for q in 1..=s.n_logical() {
                let p = entangling_pulse(&s, q, 0.7, 0.05).unwrap();
                assert_relative_eq!(p.tones[0].angular_frequency, gap, epsilon = 1e-9);
                assert_relative_eq!(p.tones[0].amplitude, 0.1, epsilon = 1e-15);
                // duration theta / (4 B' alpha^2) with alpha^2 = 1/(N-1)
                let expect = 0.7 * (n as f64 - 1.0) / (4.0 * 0.05);
                assert_relative_eq!(p.duration, expect, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn ambiguous_gap_for_generic_chain() {
        // Two qubit pairs with identical gaps but no ladder labeling: fields
        // chosen so sorted-interleaved pairs have equal gaps.
        let spec = ChainSpec::new(
            vec![0.0, 0.0, 0.0, 0.0],
            vec![0.0, 4.0, 3.0, 2.0, 1.0],
            0.0,
            0.0,
        )
        .unwrap();
        let s = diagonalize(&spec).unwrap();
        assert!(matches!(
            entangling_pulse(&s, 1, 0.5, 0.05),
            Err(Error::AmbiguousGap { .. })
        ));
    }

    #[test]
    fn two_quadrature_same_shape() {
        let s = ladder(9, 1.5);
        let a = swap_pulse(&s, 4, 0.05).unwrap();
        let b = two_quadrature_swap(&s, 4, 0.05).unwrap();
        assert_eq!(a.duration, b.duration);
        assert_eq!(a.tones[0].angular_frequency, b.tones[0].angular_frequency);
        assert!(matches!(b.tones[0].quadrature, Quadrature::Circular { sense } if sense == 1.0));
        // negative eigenvalue at zero offset
        let s0 = ladder(9, 0.0);
        let c = two_quadrature_swap(&s0, 2, 0.05).unwrap();
        assert!(matches!(c.tones[0].quadrature, Quadrature::Circular { sense } if sense == -1.0));
    }

    #[test]
    fn perturb_identity_and_inverse() {
        let s = ladder(5, 0.2);
        let p = swap_pulse(&s, 3, 0.05).unwrap();
        let same = perturb(&p, 0.0, 0.0);
        assert_eq!(p, same);
        let fwd = perturb(&p, 0.01, 0.003);
        let back = perturb(&fwd, -0.01 / 1.01, -0.003);
        assert_relative_eq!(back.tones[0].amplitude, p.tones[0].amplitude, epsilon = 1e-12);
        assert_relative_eq!(
            back.tones[0].angular_frequency,
            p.tones[0].angular_frequency,
            epsilon = 1e-12
        );
        assert_eq!(back.duration, p.duration);
    }

    #[test]
    fn square_wave_first_terms() {
        let tones = square_wave_tones(2.0 * std::f64::consts::PI, 1).unwrap();
        assert_eq!(tones.len(), 2);
        assert_relative_eq!(tones[0].amplitude, 0.5, epsilon = 1e-15);
        assert_eq!(tones[0].angular_frequency, 0.0);
        assert_relative_eq!(tones[1].amplitude, 2.0 / std::f64::consts::PI, epsilon = 1e-15);
        assert_relative_eq!(tones[1].angular_frequency, 1.0, epsilon = 1e-15);

        let dc = square_wave_tones(f64::INFINITY, 3).unwrap();
        assert_eq!(dc.len(), 1);
        assert_eq!(dc[0].angular_frequency, 0.0);
    }

    #[test]
    fn square_wave_l2_convergence() {
        let period = 1.0;
        let square = |t: f64| {
            let phase = t.rem_euclid(period) / period;
            if phase < 0.5 {
                1.0
            } else {
                0.0
            }
        };
        let l2_err2 = |n_harm: usize| {
            let tones = square_wave_tones(period, n_harm).unwrap();
            let samples = 20000;
            let mut acc = 0.0;
            for i in 0..samples {
                let t = (i as f64 + 0.5) / samples as f64 * period;
                let s: f64 = tones
                    .iter()
                    .map(|tone| tone.amplitude * (tone.angular_frequency * t + tone.phase).cos())
                    .sum();
                let d = s - square(t);
                acc += d * d;
            }
            acc / samples as f64
        };
        let e8 = l2_err2(8);
        let e16 = l2_err2(16);
        let e32 = l2_err2(32);
        assert!(e16 < e8 && e32 < e16);
        // squared L2 error of the truncation falls off like 1/n
        assert!((e8 / e16 - 2.0).abs() < 0.3, "ratio {}", e8 / e16);
        assert!((e16 / e32 - 2.0).abs() < 0.3, "ratio {}", e16 / e32);
    }

    #[test]
    fn channel_values_circular() {
        let s = ladder(5, 0.5);
        let p = two_quadrature_swap(&s, 3, 0.04).unwrap();
        let w = p.tones[0].angular_frequency;
        let t = 0.37;
        let ch = p.channel_values(t);
        assert_eq!(ch.len(), 2);
        let h2 = ch.iter().find(|(c, _)| *c == Control::H2).unwrap().1;
        let h2q = ch.iter().find(|(c, _)| *c == Control::H2Quadrature).unwrap().1;
        assert_relative_eq!(h2, 0.02 * (w * t).cos(), epsilon = 1e-15);
        assert_relative_eq!(h2q, 0.02 * (w * t).sin(), epsilon = 1e-15);
    }

    #[test]
    fn amplitude_must_be_positive() {
        let s = ladder(5, 0.2);
        assert!(matches!(
            swap_pulse(&s, 2, 0.0),
            Err(Error::NonPositiveAmplitude(_))
        ));
        assert!(matches!(
            swap_pulse(&s, 2, -0.1),
            Err(Error::NonPositiveAmplitude(_))
        ));
    }
}
