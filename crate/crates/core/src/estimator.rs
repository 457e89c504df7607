//! Forward-channel recovery from the composite round-trip channel.
//!
//! With reciprocal links the access point observes `h = f ∗ f` (linear
//! self-convolution, `2·L+ − 1` taps). The forward taps follow from the
//! first `L+` convolution equations by a triangular recursion anchored at
//! `f(1) = √h(1)`. The sign of the square root is arbitrary: every dyadic
//! channel built from the estimate is quadratic in it, so `±f` give the same
//! detector inputs.

use crate::error::{Error, Result};
use crate::sigmodel::{
    toeplitz_apply_backward, toeplitz_apply_forward, ChannelTaps, SimParams, SlotSignal,
};
use num_complex::Complex64;

/// Linear self-convolution `h(l) = Σ_i f(i)·f(l − i + 1)`.
pub fn self_convolve(f: &ChannelTaps) -> ChannelTaps {
    let n = f.len();
    if n == 0 {
        return ChannelTaps::new(Vec::new());
    }
    let mut h = vec![Complex64::new(0.0, 0.0); 2 * n - 1];
    for (i, a) in f.taps.iter().enumerate() {
        for (j, b) in f.taps.iter().enumerate() {
            h[i + j] += a * b;
        }
    }
    ChannelTaps::new(h)
}

/// Degeneracy threshold on `|h(1)|`: `10⁻⁶` of the expected lead-tap power.
pub fn degeneracy_epsilon(params: &SimParams) -> f64 {
    1e-6 * params.forward_power() / params.paths as f64
}

/// Recovers `f` (up to a global sign) from `h = f ∗ f`.
///
/// Only the first `(len(h) + 1)/2` taps of `h` are used; the remaining
/// equations are implied when `h` is an exact self-convolution.
pub fn dcea_recover(h: &ChannelTaps, epsilon: f64) -> Result<ChannelTaps> {
    if h.is_empty() || h.len().is_multiple_of(2) {
        return Err(Error::Dimension(format!(
            "composite channel length {} is not 2·L+ − 1",
            h.len()
        )));
    }
    let lead = h.taps[0];
    if lead.norm() < epsilon {
        return Err(Error::DegenerateLeadTap {
            magnitude: lead.norm(),
            epsilon,
        });
    }
    let paths = h.len().div_ceil(2);
    let mut f = Vec::with_capacity(paths);
    f.push(lead.sqrt());
    let twice_lead = 2.0 * f[0];
    for l in 1..paths {
        // h[l] = 2·f[0]·f[l] + Σ_{i=1}^{l−1} f[i]·f[l−i]
        let cross: Complex64 = (1..l).map(|i| f[i] * f[l - i]).sum();
        f.push((h.taps[l] - cross) / twice_lead);
    }
    Ok(ChannelTaps::new(f))
}

/// Dyadic channel vectors of every tag, indexed `[tag][slot][sample]`.
///
/// `forward[n][k]` multiplies tag `n`'s reflection in slot `k`;
/// `backward[n][k]` multiplies its reflection in slot `k − 1` and is non-zero
/// only on the first `L+ − 1` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicChannels {
    pub forward: Vec<Vec<SlotSignal>>,
    pub backward: Vec<Vec<SlotSignal>>,
}

impl DyadicChannels {
    pub fn tags(&self) -> usize {
        self.forward.len()
    }

    /// Channels of the `tags` tags with every entry zero.
    pub fn zeros(tags: usize, slots: usize, len: usize) -> Self {
        let z = vec![vec![vec![Complex64::new(0.0, 0.0); len]; slots]; tags];
        Self {
            forward: z.clone(),
            backward: z,
        }
    }
}

/// Dyadic forward and backward channels of one tag.
///
/// `h⁺_k = F̂⁺F̂⁺s_k + F̂⁺F̂⁻s_{k−1}` and `h⁻_k = F̂⁻F̂⁺s_{k−1}`; the
/// `F̂⁻F̂⁻s_{k−2}` term vanishes whenever `2·L+ − 1 ≤ L`.
pub fn assemble_tag(
    f_hat: &ChannelTaps,
    ambient: &[SlotSignal],
    params: &SimParams,
) -> Result<(Vec<SlotSignal>, Vec<SlotSignal>)> {
    if 2 * f_hat.len() - 1 > params.samples_per_slot {
        return Err(Error::config(
            "L_plus",
            f_hat.len(),
            "2*L_plus - 1 must not exceed L",
        ));
    }
    let len = params.samples_per_slot;
    let zero = vec![Complex64::new(0.0, 0.0); len];
    let mut fwd = Vec::with_capacity(ambient.len());
    let mut bwd = Vec::with_capacity(ambient.len());
    for k in 0..ambient.len() {
        let prev = if k == 0 { &zero } else { &ambient[k - 1] };
        let mut y = toeplitz_apply_forward(f_hat, &ambient[k])?;
        for (a, b) in y.iter_mut().zip(toeplitz_apply_backward(f_hat, prev)?) {
            *a += b;
        }
        fwd.push(toeplitz_apply_forward(f_hat, &y)?);
        let prev_fwd = toeplitz_apply_forward(f_hat, prev)?;
        bwd.push(toeplitz_apply_backward(f_hat, &prev_fwd)?);
    }
    Ok((fwd, bwd))
}

/// Assembles the dyadic channels of all tags; tags without an estimate get
/// all-zero channels.
pub fn assemble_dyadic(
    estimates: &[Option<ChannelTaps>],
    ambient: &[SlotSignal],
    params: &SimParams,
) -> Result<DyadicChannels> {
    let mut out = DyadicChannels::zeros(estimates.len(), ambient.len(), params.samples_per_slot);
    for (n, est) in estimates.iter().enumerate() {
        if let Some(f) = est {
            let (fwd, bwd) = assemble_tag(f, ambient, params)?;
            out.forward[n] = fwd;
            out.backward[n] = bwd;
        }
    }
    Ok(out)
}
