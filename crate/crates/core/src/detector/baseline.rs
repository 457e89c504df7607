//! Time-division receiver used as the reference scheme.
//!
//! Tag `n` owns slot `n` and reflects one Gray-coded PSK symbol there. The
//! receiver models the slot as `H⁺s_k` with the composite channel
//! `h = f̂ ⊛ f̂`, drops the first `L+ − 1` samples where the previous slot
//! leaks in and picks the PSK point closest to what remains.

use crate::codec::{gray_bits, psk_point};
use crate::error::{Error, Result};
use crate::estimator::self_convolve;
use crate::sigmodel::{ChannelTaps, SimParams, SlotSignal};
use num_complex::Complex64;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TdDecision {
    pub bits: Vec<bool>,
    /// Set when no sample survived the discard and the bits are a coin flip.
    pub degenerate: bool,
}

/// `H⁺s` truncated to the slot: `v(l) = Σ_j h(j)·s(l − j)`.
pub fn composite_model(f_hat: &ChannelTaps, ambient_slot: &[Complex64]) -> SlotSignal {
    let h = self_convolve(f_hat);
    (0..ambient_slot.len())
        .map(|l| {
            h.taps
                .iter()
                .take(l + 1)
                .enumerate()
                .map(|(j, t)| t * ambient_slot[l - j])
                .sum()
        })
        .collect()
}

/// Samples per slot that survive discarding the first `L+ − 1`.
pub fn retained_samples(params: &SimParams) -> usize {
    params
        .samples_per_slot
        .saturating_sub(params.paths.saturating_sub(1))
}

/// Energy left in a slot after dropping its first `discard` samples,
/// relative to a full slot of steady-state samples.
///
/// `steady_power` is the mean power of one sample that sees the whole
/// composite channel, `σ_s²·‖f ⊛ f‖²` for a unit reflection.
pub fn retained_energy_fraction(own_slot: &[Complex64], discard: usize, steady_power: f64) -> f64 {
    if own_slot.is_empty() || steady_power <= 0.0 {
        return 0.0;
    }
    own_slot
        .iter()
        .skip(discard)
        .map(|v| v.norm_sqr())
        .sum::<f64>()
        / (own_slot.len() as f64 * steady_power)
}

/// Decides the PSK symbol of every active tag from its own slot.
pub fn detect_td_baseline<R: Rng + ?Sized>(
    received: &[SlotSignal],
    estimates: &[Option<ChannelTaps>],
    ambient: &[SlotSignal],
    active: &[bool],
    params: &SimParams,
    rng: &mut R,
) -> Result<Vec<Option<TdDecision>>> {
    let slots = received.len();
    if estimates.len() > slots || active.len() != estimates.len() || ambient.len() != slots {
        return Err(Error::Dimension(format!(
            "{} tags, {} slots, {} ambient slots",
            estimates.len(),
            slots,
            ambient.len()
        )));
    }
    let order = params.order;
    let bits = params.bits_per_symbol();
    let discard = params.paths.saturating_sub(1);
    let points: Vec<Complex64> = (0..order)
        .map(|i| psk_point(i, order, params.alpha))
        .collect();

    let mut out = Vec::with_capacity(active.len());
    for (n, est) in estimates.iter().enumerate() {
        if !active[n] {
            out.push(None);
            continue;
        }
        let f_hat = est
            .as_ref()
            .ok_or_else(|| Error::Dimension(format!("active tag {n} has no channel estimate")))?;
        let model = composite_model(f_hat, &ambient[n]);
        let r = &received[n];
        if discard >= r.len() {
            let i = rng.gen_range(0..order);
            out.push(Some(TdDecision {
                bits: gray_bits(i, bits),
                degenerate: true,
            }));
            continue;
        }
        let mut best = (f64::INFINITY, 0);
        for (i, p) in points.iter().enumerate() {
            let d: f64 = (discard..r.len())
                .map(|l| (r[l] - p * model[l]).norm_sqr())
                .sum();
            if d < best.0 {
                best = (d, i);
            }
        }
        out.push(Some(TdDecision {
            bits: gray_bits(best.1, bits),
            degenerate: false,
        }));
    }
    Ok(out)
}
