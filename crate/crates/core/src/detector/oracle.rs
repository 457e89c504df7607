//! Exhaustive joint maximum-likelihood detection for small instances.

use crate::codec::Codebook;
use crate::error::{Error, Result};
use crate::estimator::DyadicChannels;
use crate::sigmodel::SlotSignal;
use num_complex::Complex64;

/// Largest number of codeword combinations the oracle will enumerate.
pub const ORACLE_LIMIT: u128 = 1 << 20;

/// Codeword index of every active tag minimizing
/// `Σ |y − Σ_n (h⁺B⁺(m_n) + h⁻B⁻(m_n))|²` over all samples.
///
/// Uniform priors make this the MAP rule. Combinations are visited with the
/// first active tag most significant and only a strictly better metric
/// replaces the incumbent, so ties go to the lowest combined index.
pub fn map_oracle(
    received: &[SlotSignal],
    channels: &DyadicChannels,
    codebook: &Codebook,
    active: &[bool],
) -> Result<Vec<Option<usize>>> {
    let order = codebook.mapping.order;
    let tags: Vec<usize> = (0..active.len()).filter(|&n| active[n]).collect();
    let combos = (order as u128)
        .checked_pow(tags.len() as u32)
        .unwrap_or(u128::MAX);
    if combos > ORACLE_LIMIT {
        return Err(Error::OracleTooLarge {
            combinations: combos,
            limit: ORACLE_LIMIT,
        });
    }
    let y: Vec<Complex64> = received.iter().flatten().copied().collect();
    let len = received.first().map_or(0, Vec::len);
    if len == 0 || codebook.forward[0].nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "{} received samples for a {}-row codebook",
            y.len(),
            codebook.forward[0].nrows()
        )));
    }

    let contrib: Vec<Vec<Vec<Complex64>>> = tags
        .iter()
        .map(|&n| {
            (0..order)
                .map(|m| {
                    (0..y.len())
                        .map(|row| {
                            let (k, l) = (row / len, row % len);
                            channels.forward[n][k][l] * codebook.forward[m][[row, n]]
                                + channels.backward[n][k][l] * codebook.backward[m][[row, n]]
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let d = tags.len();
    let mut digits = vec![0usize; d];
    let mut best = (f64::INFINITY, vec![0usize; d]);
    for _ in 0..combos {
        let mut metric = 0.0;
        for (row, &yv) in y.iter().enumerate() {
            let mut r = yv;
            for (j, &m) in digits.iter().enumerate() {
                r -= contrib[j][m][row];
            }
            metric += r.norm_sqr();
        }
        if metric < best.0 {
            best = (metric, digits.clone());
        }
        for j in (0..d).rev() {
            digits[j] += 1;
            if digits[j] < order {
                break;
            }
            digits[j] = 0;
        }
    }

    let mut out = vec![None; active.len()];
    for (j, &n) in tags.iter().enumerate() {
        out[n] = Some(best.1[j]);
    }
    Ok(out)
}

/// Number of joint hypotheses for `active` tags at modulation order `order`.
pub fn oracle_combinations(order: usize, active: usize) -> u128 {
    (order as u128)
        .checked_pow(active as u32)
        .unwrap_or(u128::MAX)
}
