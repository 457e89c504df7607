//! Sparse backscatter codebooks and factor graphs.
//!
//! A tag maps `log2 M` bits onto a pair of reflection levels drawn from
//! `{+√α, 0, −√α}` and places the pair on two of the `K` slots. Tags are
//! numbered by enumerating slot pairs `(n1, n1 + n2)` in nested order, which
//! gives `N = C(K, 2)` tags. The slot-level codebook is spread over the `L`
//! samples of each slot (forward codebook) and shifted by one slot and
//! truncated to the first `L̃` samples (backward codebook), which models the
//! spill of each symbol into the following slot.

use crate::error::{Error, Result};
use ndarray::Array2;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Bits-to-level mapping for one modulation order.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingTable {
    pub order: usize,
    pub alpha: f64,
    /// `points[m]` is the level pair of codeword `m`; the bit pattern of `m`
    /// is its binary expansion, most significant bit first.
    pub points: Vec<[f64; 2]>,
}

impl MappingTable {
    pub fn bits_per_symbol(&self) -> usize {
        self.order.trailing_zeros() as usize
    }

    /// Average per-slot symbol power `σ_b² = E[‖b‖²/2]`.
    pub fn symbol_power(&self) -> f64 {
        self.points
            .iter()
            .map(|p| (p[0] * p[0] + p[1] * p[1]) / 2.0)
            .sum::<f64>()
            / self.order as f64
    }

    /// Distinct levels used in the alphabet, in descending order.
    pub fn levels(&self) -> Vec<f64> {
        let a = self.alpha.sqrt();
        if self.order == 2 {
            vec![a, -a]
        } else {
            vec![a, 0.0, -a]
        }
    }
}

/// Bit pattern of codeword `m`, most significant bit first.
pub fn codeword_bits(m: usize, bits: usize) -> Vec<bool> {
    (0..bits).rev().map(|b| (m >> b) & 1 == 1).collect()
}

/// Codeword index selected by a bit pattern.
pub fn bits_to_codeword(bits: &[bool]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

/// Builds the mapping for `M ∈ {2, 4, 8}`.
pub fn build_mapping(order: usize, alpha: f64) -> Result<MappingTable> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::config("alpha", alpha, "alpha must be in (0,1]"));
    }
    let unit: &[[f64; 2]] = match order {
        2 => &[[1.0, -1.0], [-1.0, 1.0]],
        4 => &[[1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [-1.0, 0.0]],
        8 => &[
            [1.0, 1.0],
            [1.0, 0.0],
            [0.0, -1.0],
            [1.0, -1.0],
            [0.0, 1.0],
            [-1.0, 1.0],
            [-1.0, -1.0],
            [-1.0, 0.0],
        ],
        _ => return Err(Error::config("M", order, "M must be one of {2, 4, 8}")),
    };
    let scale = alpha.sqrt();
    Ok(MappingTable {
        order,
        alpha,
        points: unit.iter().map(|p| [p[0] * scale, p[1] * scale]).collect(),
    })
}

/// Slot-level and sample-level codebooks, one matrix per codeword index.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub mapping: MappingTable,
    /// `K × N` per codeword.
    pub one_way: Vec<Array2<f64>>,
    /// `KL × N` per codeword: each slot value repeated `L` times.
    pub forward: Vec<Array2<f64>>,
    /// `KL × N` per codeword: previous slot's value on the first `L̃` samples.
    pub backward: Vec<Array2<f64>>,
}

/// Binary adjacency between samples (rows) and tags (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    pub slots: usize,
    pub samples_per_slot: usize,
    pub isi_depth: usize,
    /// `K × N`.
    pub one_way: Array2<bool>,
    /// `KL × N`.
    pub forward: Array2<bool>,
    /// `KL × N`.
    pub backward: Array2<bool>,
    /// Element-wise OR of forward and backward.
    pub dyadic: Array2<bool>,
}

impl FactorGraph {
    pub fn tags(&self) -> usize {
        self.one_way.ncols()
    }

    pub fn function_nodes(&self) -> usize {
        self.dyadic.nrows()
    }

    /// Degree of every function node (sample) in the dyadic graph.
    pub fn fn_degrees(&self) -> Vec<usize> {
        self.dyadic
            .rows()
            .into_iter()
            .map(|r| r.iter().filter(|&&b| b).count())
            .collect()
    }

    /// Degree of every variable node (tag) in the dyadic graph.
    pub fn vn_degrees(&self) -> Vec<usize> {
        self.dyadic
            .columns()
            .into_iter()
            .map(|c| c.iter().filter(|&&b| b).count())
            .collect()
    }

    /// Slot-position indicator: 1 when sample `row` lies in the first
    /// non-zero slot of `tag`, 2 when it lies in the second.
    pub fn slot_position(&self, row: usize, tag: usize) -> usize {
        let seen = (0..=row).filter(|&i| self.forward[[i, tag]]).count();
        debug_assert!(seen > 0, "sample {row} precedes tag {tag}'s first slot");
        (seen.saturating_sub(1)) / self.samples_per_slot + 1
    }
}

/// Slot pairs `(first, second)` of every tag in construction order.
pub fn slot_pairs(slots: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for n1 in 1..slots {
        for n2 in 1..=(slots - n1) {
            pairs.push((n1 - 1, n1 + n2 - 1));
        }
    }
    pairs
}

fn spread<T: Copy + Default>(one_way: &Array2<T>, len: usize) -> Array2<T> {
    let (k, n) = one_way.dim();
    Array2::from_shape_fn((k * len, n), |(r, c)| one_way[[r / len, c]])
}

fn spill<T: Copy + Default>(one_way: &Array2<T>, len: usize, depth: usize) -> Array2<T> {
    let (k, n) = one_way.dim();
    Array2::from_shape_fn((k * len, n), |(r, c)| {
        let (slot, sample) = (r / len, r % len);
        if sample < depth {
            // circular one-slot shift: slot k takes slot k − 1, slot 0 takes slot K − 1
            one_way[[(slot + k - 1) % k, c]]
        } else {
            T::default()
        }
    })
}

/// Builds the sparse codebooks and factor graphs for `K` slots of `L`
/// samples with `L̃` samples of inter-slot spill.
pub fn build_codebook(
    slots: usize,
    samples_per_slot: usize,
    isi_depth: usize,
    mapping: &MappingTable,
) -> Result<(Codebook, FactorGraph)> {
    if slots < 2 {
        return Err(Error::config("K", slots, "K must be >= 2"));
    }
    if isi_depth >= samples_per_slot {
        return Err(Error::config(
            "L_tilde",
            isi_depth,
            "L_tilde must be smaller than L",
        ));
    }
    let pairs = slot_pairs(slots);
    let tags = pairs.len();

    let mut graph = Array2::from_elem((slots, tags), false);
    for (n, &(a, b)) in pairs.iter().enumerate() {
        graph[[a, n]] = true;
        graph[[b, n]] = true;
    }
    let one_way: Vec<Array2<f64>> = mapping
        .points
        .iter()
        .map(|pt| {
            let mut b = Array2::zeros((slots, tags));
            for (n, &(a, c)) in pairs.iter().enumerate() {
                b[[a, n]] = pt[0];
                b[[c, n]] = pt[1];
            }
            b
        })
        .collect();

    let forward_graph = spread(&graph, samples_per_slot);
    let backward_graph = spill(&graph, samples_per_slot, isi_depth);
    let dyadic = Array2::from_shape_fn(forward_graph.dim(), |ix| {
        forward_graph[ix] || backward_graph[ix]
    });

    let codebook = Codebook {
        mapping: mapping.clone(),
        forward: one_way
            .iter()
            .map(|b| spread(b, samples_per_slot))
            .collect(),
        backward: one_way
            .iter()
            .map(|b| spill(b, samples_per_slot, isi_depth))
            .collect(),
        one_way,
    };
    let graph = FactorGraph {
        slots,
        samples_per_slot,
        isi_depth,
        one_way: graph,
        forward: forward_graph,
        backward: backward_graph,
        dyadic,
    };
    Ok((codebook, graph))
}

/// Reflection coefficients of one tag over the `K` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub codeword: usize,
    pub reflection: Vec<Complex64>,
}

/// Maps a tag's bits onto its per-slot reflection coefficients.
pub fn encode(tag: usize, data_bits: &[bool], codebook: &Codebook) -> Result<Encoded> {
    let bits = codebook.mapping.bits_per_symbol();
    if data_bits.len() != bits {
        return Err(Error::Encoding {
            expected: bits,
            got: data_bits.len(),
        });
    }
    let table = &codebook.one_way[0];
    if tag >= table.ncols() {
        return Err(Error::Assignment {
            tag,
            slots: table.nrows(),
        });
    }
    let m = bits_to_codeword(data_bits);
    Ok(Encoded {
        codeword: m,
        reflection: codebook.one_way[m]
            .column(tag)
            .iter()
            .map(|&b| Complex64::new(b, 0.0))
            .collect(),
    })
}

/// Reflection sequence of an idle tag.
pub fn idle_reflection(slots: usize) -> Vec<Complex64> {
    vec![Complex64::new(0.0, 0.0); slots]
}

/// Phase index carrying a Gray-coded bit pattern.
pub fn gray_phase_index(bits: &[bool]) -> usize {
    let mut g = bits_to_codeword(bits);
    let mut i = g;
    while g > 0 {
        g >>= 1;
        i ^= g;
    }
    i
}

/// Bit pattern carried by phase index `i` under Gray coding.
pub fn gray_bits(i: usize, bits: usize) -> Vec<bool> {
    codeword_bits(i ^ (i >> 1), bits)
}

/// M-PSK point `√α·exp(j2πi/M)`.
pub fn psk_point(index: usize, order: usize, alpha: f64) -> Complex64 {
    Complex64::from_polar(alpha.sqrt(), 2.0 * PI * index as f64 / order as f64)
}

/// Time-division baseline: tag `n` sends one Gray-coded M-PSK symbol in slot
/// `n` and stays silent elsewhere.
pub fn encode_td_baseline(
    tag: usize,
    data_bits: &[bool],
    slots: usize,
    order: usize,
    alpha: f64,
) -> Result<Vec<Complex64>> {
    if tag >= slots {
        return Err(Error::Assignment { tag, slots });
    }
    let bits = order.trailing_zeros() as usize;
    if data_bits.len() != bits {
        return Err(Error::Encoding {
            expected: bits,
            got: data_bits.len(),
        });
    }
    let mut out = idle_reflection(slots);
    out[tag] = psk_point(gray_phase_index(data_bits), order, alpha);
    Ok(out)
}

/// Normalized energy per backscatter symbol `β = D·σ_b²` of the sparse code.
pub fn sparse_beta(slots: usize, mapping: &MappingTable) -> f64 {
    2.0 / slots as f64 * mapping.symbol_power()
}

/// Normalized energy per backscatter symbol of the time-division baseline,
/// `α/K` for every order.
pub fn td_beta(slots: usize, alpha: f64) -> f64 {
    alpha / slots as f64
}
