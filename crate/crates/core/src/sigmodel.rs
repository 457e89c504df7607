//! Signal model: ambient source, multipath channels and the received
//! superposition at the access point.
//!
//! A codeword spans `K` slots of `L` samples. Every channel is a short FIR
//! response applied slot by slot as a pair of Toeplitz operators: the
//! lower-triangular forward part acting on the current slot and the
//! upper-triangular backward part carrying the spill of the previous slot.
//! The first slot of every trial sees an all-zero previous slot, so trials
//! are independent.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

/// Samples of one slot; always `L` long.
pub type SlotSignal = Vec<Complex64>;

/// Scale between the sample-summed incident energy and the harvesting
/// threshold. The incident energy is the sum of per-sample received powers
/// over the `K·L` samples of a codeword and is compared against the
/// threshold power directly, so the constant is unity.
pub const THRESHOLD_SCALE: f64 = 1.0;

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts a ratio in dB to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Physical and coding parameters of one simulated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    /// Ambient transmit power σ_s² (W).
    pub tx_power: f64,
    /// Receiver noise power σ_n² (W).
    pub noise_power: f64,
    /// Sample period T_s (s).
    pub sample_period: f64,
    /// Samples per slot, `L`.
    pub samples_per_slot: usize,
    /// Slots per codeword, `K`.
    pub slots: usize,
    /// Non-zero slots per codeword, `K1`. Fixed at 2.
    pub active_slots: usize,
    /// Modulation order `M`.
    pub order: usize,
    /// Forward multipath count `L+`.
    pub paths: usize,
    /// Reflected-to-incident power ratio α.
    pub alpha: f64,
    /// Harvesting efficiency η.
    pub efficiency: f64,
    /// Circuit energy per backscatter symbol σ_c² (J).
    pub energy_per_symbol: f64,
    /// Access-point antenna gain G_s (linear).
    pub antenna_gain: f64,
    /// Effective aperture of the tag antenna A_e (m²).
    pub aperture: f64,
    /// Tag distance from the access point (m).
    pub distance: f64,
    /// Detector iterations `N_I`.
    pub iterations: usize,
    /// Leakage (self-interference) channel length `L0`; 0 means `L+`.
    pub leakage_paths: usize,
    /// Leakage channel power σ_h0².
    pub leakage_power: f64,
    /// Residual self-interference power left after cancellation (W).
    pub residual_si_power: f64,
    /// Variance of the additive error on the composite channel fed to the
    /// forward-tap recovery; 0 gives the exact composite channel.
    pub composite_error_power: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            tx_power: dbm_to_watts(20.0),
            noise_power: dbm_to_watts(-90.0),
            sample_period: 50e-9,
            samples_per_slot: 8,
            slots: 4,
            active_slots: 2,
            order: 2,
            paths: 3,
            alpha: 1.0,
            efficiency: 0.25,
            energy_per_symbol: 0.58e-12,
            antenna_gain: db_to_linear(3.0),
            aperture: 0.0012,
            distance: 5.0,
            iterations: 3,
            leakage_paths: 0,
            leakage_power: 1.0,
            residual_si_power: 0.0,
            composite_error_power: 0.0,
        }
    }
}

impl SimParams {
    /// Composite (self-convolved) channel length `L* = 2·L+ − 1`.
    pub fn composite_paths(&self) -> usize {
        2 * self.paths - 1
    }

    /// Number of samples at the start of a slot hit by the previous slot.
    pub fn isi_depth(&self) -> usize {
        self.paths - 1
    }

    /// Backscatter symbol rate `R_s = 1/(L·T_s)`.
    pub fn symbol_rate(&self) -> f64 {
        1.0 / (self.samples_per_slot as f64 * self.sample_period)
    }

    /// Circuit power `P_c = R_s·σ_c²`.
    pub fn circuit_power(&self) -> f64 {
        self.symbol_rate() * self.energy_per_symbol
    }

    /// Tags supported by the sparse code, `C(K, K1)`.
    pub fn tags(&self) -> usize {
        binomial(self.slots, self.active_slots)
    }

    /// Overloading factor `λ = N/K`.
    pub fn overloading(&self) -> f64 {
        self.tags() as f64 / self.slots as f64
    }

    /// Bits per codeword, `log2 M`.
    pub fn bits_per_symbol(&self) -> usize {
        self.order.trailing_zeros() as usize
    }

    /// Per-tag bit rate `R_b = R_s/K·log2 M`.
    pub fn bit_rate(&self) -> f64 {
        self.symbol_rate() / self.slots as f64 * self.bits_per_symbol() as f64
    }

    /// Expected total forward-channel power `σ_f² = G_s·A_e/(4π d²)`.
    pub fn forward_power(&self) -> f64 {
        self.antenna_gain * self.aperture / (4.0 * PI * self.distance * self.distance)
    }

    /// Effective leakage channel length.
    pub fn leakage_len(&self) -> usize {
        if self.leakage_paths == 0 {
            self.paths
        } else {
            self.leakage_paths
        }
    }

    /// Checks every parameter domain, naming the first offending key.
    pub fn validate(&self) -> Result<()> {
        fn positive(key: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(key, v, "must be finite and > 0"))
            }
        }
        fn non_negative(key: &str, v: f64) -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(key, v, "must be finite and >= 0"))
            }
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config("alpha", self.alpha, "alpha must be in (0,1]"));
        }
        if !matches!(self.order, 2 | 4 | 8) {
            return Err(Error::config("M", self.order, "M must be one of {2, 4, 8}"));
        }
        if self.active_slots != 2 {
            return Err(Error::config("K1", self.active_slots, "K1 must be 2"));
        }
        if self.slots < 2 {
            return Err(Error::config("K", self.slots, "K must be >= 2"));
        }
        if self.samples_per_slot < 1 {
            return Err(Error::config("L", self.samples_per_slot, "L must be >= 1"));
        }
        if self.paths < 1 {
            return Err(Error::config("L_plus", self.paths, "L_plus must be >= 1"));
        }
        if self.composite_paths() > self.samples_per_slot {
            return Err(Error::config(
                "L_plus",
                self.paths,
                "2*L_plus - 1 must not exceed L",
            ));
        }
        if self.iterations < 1 {
            return Err(Error::config("N_I", self.iterations, "N_I must be >= 1"));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::config(
                "eta",
                self.efficiency,
                "eta must be in (0,1]",
            ));
        }
        non_negative("sigma_s2", self.tx_power)?;
        non_negative("sigma_n2", self.noise_power)?;
        positive("T_s", self.sample_period)?;
        non_negative("sigma_c2", self.energy_per_symbol)?;
        positive("G_s", self.antenna_gain)?;
        positive("A_e", self.aperture)?;
        positive("d", self.distance)?;
        non_negative("sigma_h0_2", self.leakage_power)?;
        non_negative("residual_si_power", self.residual_si_power)?;
        non_negative("composite_error_power", self.composite_error_power)?;
        Ok(())
    }
}

/// `C(n, k)` for small arguments.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Complex impulse response of one link.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTaps {
    pub taps: Vec<Complex64>,
    /// Variance each tap was drawn with (0 for deterministic taps).
    pub variance_per_tap: f64,
}

impl ChannelTaps {
    pub fn new(taps: Vec<Complex64>) -> Self {
        Self {
            taps,
            variance_per_tap: 0.0,
        }
    }

    pub fn from_real(taps: &[f64]) -> Self {
        Self::new(taps.iter().map(|&t| Complex64::new(t, 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// `Σ |tap|²`.
    pub fn power(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }

    pub fn negated(&self) -> Self {
        Self {
            taps: self.taps.iter().map(|t| -t).collect(),
            variance_per_tap: self.variance_per_tap,
        }
    }
}

/// Per-tag activation and data.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TagState {
    pub active: bool,
    pub incident_energy: f64,
    pub data_bits: Vec<bool>,
    /// Zero-based codeword index selected by `data_bits`.
    pub codeword_index: usize,
}

/// Draws one circular complex Gaussian sample with the given variance; real
/// and imaginary parts are each `N(0, variance/2)`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * scale, im * scale)
}

fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, len: usize, variance: f64) -> Vec<Complex64> {
    (0..len).map(|_| complex_gaussian(rng, variance)).collect()
}

/// Draws `slot_count` slots of the ambient Gaussian source.
pub fn draw_ambient<R: Rng + ?Sized>(
    params: &SimParams,
    slot_count: usize,
    rng: &mut R,
) -> Vec<SlotSignal> {
    (0..slot_count)
        .map(|_| gaussian_vec(rng, params.samples_per_slot, params.tx_power))
        .collect()
}

/// Draws a forward channel with `L+` taps of variance `σ_f²/L+` each.
pub fn draw_forward_channel<R: Rng + ?Sized>(params: &SimParams, rng: &mut R) -> ChannelTaps {
    let variance = params.forward_power() / params.paths as f64;
    ChannelTaps {
        taps: gaussian_vec(rng, params.paths, variance),
        variance_per_tap: variance,
    }
}

/// Draws the access point's leakage channel, `L0` taps of variance `σ_h0²/L0`.
pub fn draw_leakage_channel<R: Rng + ?Sized>(params: &SimParams, rng: &mut R) -> ChannelTaps {
    let len = params.leakage_len();
    let variance = params.leakage_power / len as f64;
    ChannelTaps {
        taps: gaussian_vec(rng, len, variance),
        variance_per_tap: variance,
    }
}

fn check_taps(taps: &ChannelTaps, len: usize) -> Result<()> {
    if taps.len() > len {
        Err(Error::Dimension(format!(
            "{} taps exceed the slot length {}",
            taps.len(),
            len
        )))
    } else {
        Ok(())
    }
}

/// Applies the lower-triangular Toeplitz operator of `taps` to the current
/// slot: `out[l] = Σ_j taps[j]·x[l − j]`.
pub fn toeplitz_apply_forward(taps: &ChannelTaps, x: &[Complex64]) -> Result<SlotSignal> {
    check_taps(taps, x.len())?;
    let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
    for (l, o) in out.iter_mut().enumerate() {
        for (j, t) in taps.taps.iter().enumerate().take(l + 1) {
            *o += t * x[l - j];
        }
    }
    Ok(out)
}

/// Applies the upper-triangular Toeplitz operator of `taps` to the previous
/// slot, producing only the spill into the current one:
/// `out[l] = Σ_{j > l} taps[j]·x_prev[L + l − j]`.
pub fn toeplitz_apply_backward(taps: &ChannelTaps, x_prev: &[Complex64]) -> Result<SlotSignal> {
    let len = x_prev.len();
    check_taps(taps, len)?;
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    for (l, o) in out.iter_mut().enumerate() {
        for j in (l + 1)..taps.len() {
            *o += taps.taps[j] * x_prev[len + l - j];
        }
    }
    Ok(out)
}

/// Full convolution of one slot, including the previous slot's spill.
pub fn convolve_slot(
    taps: &ChannelTaps,
    current: &[Complex64],
    previous: &[Complex64],
) -> Result<SlotSignal> {
    if current.len() != previous.len() {
        return Err(Error::Dimension(format!(
            "slot lengths differ: {} vs {}",
            current.len(),
            previous.len()
        )));
    }
    let mut y = toeplitz_apply_forward(taps, current)?;
    for (a, b) in y.iter_mut().zip(toeplitz_apply_backward(taps, previous)?) {
        *a += b;
    }
    Ok(y)
}

/// Signal incident on a tag in one slot, `F⁺s_k + F⁻s_{k−1}`.
pub fn tag_receive(f: &ChannelTaps, s_k: &[Complex64], s_prev: &[Complex64]) -> Result<SlotSignal> {
    convolve_slot(f, s_k, s_prev)
}

/// Expected incident energy over one codeword given the channel,
/// `K·σ_s²·(‖F⁺‖²_F + ‖F⁻‖²_F)`, evaluated in closed form.
pub fn incident_energy(f: &ChannelTaps, params: &SimParams) -> f64 {
    let len = params.samples_per_slot;
    let frob: f64 = f
        .taps
        .iter()
        .enumerate()
        .take(len)
        .map(|(j, t)| {
            // tap j appears L − j times in F⁺ and j times in F⁻
            t.norm_sqr() * ((len - j) + j) as f64
        })
        .sum();
    params.slots as f64 * params.tx_power * frob
}

/// Harvesting threshold `θ = P_c/(η·(1 − β))`.
pub fn eh_threshold(params: &SimParams, beta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Domain(format!("beta = {beta} must be in [0, 1)")));
    }
    Ok(params.circuit_power() / (params.efficiency * (1.0 - beta)))
}

/// Marks a tag active when its incident energy reaches the threshold.
pub fn activate_tags(energies: &[f64], theta: f64) -> Vec<TagState> {
    energies
        .iter()
        .map(|&e| TagState {
            active: e >= theta * THRESHOLD_SCALE,
            incident_energy: e,
            ..TagState::default()
        })
        .collect()
}

/// Fraction of active tags.
pub fn harvesting_probability(states: &[TagState]) -> f64 {
    if states.is_empty() {
        return 0.0;
    }
    states.iter().filter(|s| s.active).count() as f64 / states.len() as f64
}

/// One backscattering tag as seen by the access point.
#[derive(Debug, Clone, Copy)]
pub struct TagLink<'a> {
    /// Forward channel; the backward channel equals it by reciprocity.
    pub forward: &'a ChannelTaps,
    /// Reflection coefficient per slot (zero for idle tags).
    pub reflection: &'a [Complex64],
}

fn zero_slot(len: usize) -> SlotSignal {
    vec![Complex64::new(0.0, 0.0); len]
}

fn previous<'a>(slots: &'a [SlotSignal], k: usize, zero: &'a SlotSignal) -> &'a SlotSignal {
    if k == 0 {
        zero
    } else {
        &slots[k - 1]
    }
}

/// Self-interference reaching the access point, `H0⁺s_k + H0⁻s_{k−1}`.
pub fn self_interference(leakage: &ChannelTaps, ambient: &[SlotSignal]) -> Result<Vec<SlotSignal>> {
    let len = ambient.first().map_or(0, Vec::len);
    let zero = zero_slot(len);
    (0..ambient.len())
        .map(|k| convolve_slot(leakage, &ambient[k], previous(ambient, k, &zero)))
        .collect()
}

/// Received signal at the access point for every slot of one codeword.
///
/// Each tag reflects `Γ_{k,n}·y_{k,n}` and the reflection travels back over
/// the same channel; the leakage of the access point's own transmission and
/// white noise `CN(0, σ_n²)` are added. Slot 0 of the previous codeword is
/// taken as silent.
pub fn ap_receive<R: Rng + ?Sized>(
    tags: &[TagLink<'_>],
    ambient: &[SlotSignal],
    leakage: &ChannelTaps,
    params: &SimParams,
    rng: &mut R,
) -> Result<Vec<SlotSignal>> {
    if params.composite_paths() > params.samples_per_slot {
        return Err(Error::config(
            "L_plus",
            params.paths,
            "2*L_plus - 1 must not exceed L",
        ));
    }
    let len = params.samples_per_slot;
    if ambient.iter().any(|s| s.len() != len) {
        return Err(Error::Dimension(
            "ambient slot length differs from L".into(),
        ));
    }
    let slots = ambient.len();
    let zero = zero_slot(len);
    let mut received = self_interference(leakage, ambient)?;

    for tag in tags {
        if tag.reflection.len() != slots {
            return Err(Error::Dimension(format!(
                "{} reflection coefficients for {} slots",
                tag.reflection.len(),
                slots
            )));
        }
        if tag
            .reflection
            .iter()
            .all(|g| *g == Complex64::new(0.0, 0.0))
        {
            continue;
        }
        let mut reflected: Vec<SlotSignal> = Vec::with_capacity(slots);
        for k in 0..slots {
            let y = tag_receive(tag.forward, &ambient[k], previous(ambient, k, &zero))?;
            reflected.push(y.into_iter().map(|v| v * tag.reflection[k]).collect());
        }
        for k in 0..slots {
            let back = convolve_slot(tag.forward, &reflected[k], previous(&reflected, k, &zero))?;
            for (r, b) in received[k].iter_mut().zip(back) {
                *r += b;
            }
        }
    }

    if params.noise_power > 0.0 {
        for slot in received.iter_mut() {
            for r in slot.iter_mut() {
                *r += complex_gaussian(rng, params.noise_power);
            }
        }
    }
    Ok(received)
}

/// Self-interference cancellation: subtracts the reconstructed leakage term
/// and, when `residual_power > 0`, leaves a `CN(0, residual_power)` residue.
pub fn sic<R: Rng + ?Sized>(
    received: &[SlotSignal],
    leakage: &ChannelTaps,
    ambient: &[SlotSignal],
    residual_power: f64,
    rng: &mut R,
) -> Result<Vec<SlotSignal>> {
    let si = self_interference(leakage, ambient)?;
    if si.len() != received.len() {
        return Err(Error::Dimension(
            "ambient and received slot counts differ".into(),
        ));
    }
    Ok(received
        .iter()
        .zip(si)
        .map(|(r, s)| {
            r.iter()
                .zip(s)
                .map(|(a, b)| {
                    let mut t = a - b;
                    if residual_power > 0.0 {
                        t += complex_gaussian(rng, residual_power);
                    }
                    t
                })
                .collect()
        })
        .collect())
}
