//! Log-domain message passing on the dyadic factor graph.

use super::maxstar::{max_star, max_star_all};
use super::projection::Projection;
use crate::codec::{codeword_bits, Codebook, FactorGraph};
use crate::estimator::DyadicChannels;
use crate::sigmodel::SlotSignal;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Smallest noise variance used when scoring residuals, so a noiseless run
/// still produces finite information.
const NOISE_FLOOR: f64 = 1e-200;

/// Variable-node update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VnUpdate {
    /// `ln ap(m) + I_{k→n}(m) − max*` of all other incoming entries.
    Paper,
    /// `ln ap(m) + Σ` of the incoming messages from all other function nodes.
    #[default]
    SumProduct,
}

impl std::str::FromStr for VnUpdate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(VnUpdate::Paper),
            "sum_product" => Ok(VnUpdate::SumProduct),
            other => Err(format!("unknown vn_update '{other}' (paper|sum_product)")),
        }
    }
}

impl std::fmt::Display for VnUpdate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VnUpdate::Paper => "paper",
            VnUpdate::SumProduct => "sum_product",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub iterations: usize,
    pub vn_update: VnUpdate,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            iterations: 3,
            vn_update: VnUpdate::default(),
        }
    }
}

/// Initial information of one function node.
#[derive(Debug, Clone, PartialEq)]
pub struct FnTable {
    pub row: usize,
    /// Active tags connected to the node.
    pub tags: Vec<usize>,
    /// Whether an active tag reaches the node through its backward edge.
    pub isi: bool,
    /// Per connected tag: `None` for the full codeword domain, otherwise the
    /// projection onto the symbols of one slot position.
    pub alphabets: Vec<Option<Projection>>,
    pub sizes: Vec<usize>,
    /// Information per index combination, first tag most significant.
    pub values: Vec<f64>,
    /// Largest entry of `values`.
    pub peak: f64,
}

impl FnTable {
    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    fn project(&self, i: usize, msg: &[f64]) -> Vec<f64> {
        match &self.alphabets[i] {
            Some(p) => p.project(msg),
            None => msg.to_vec(),
        }
    }

    fn expand(&self, i: usize, msg: Vec<f64>) -> Vec<f64> {
        match &self.alphabets[i] {
            Some(p) => p.expand(&msg),
            None => msg,
        }
    }
}

/// Advances a mixed-radix counter (last digit fastest) and returns the
/// most significant digit that changed.
#[inline]
fn advance(digits: &mut [usize], sizes: &[usize]) -> usize {
    let mut i = digits.len();
    while i > 0 {
        i -= 1;
        digits[i] += 1;
        if digits[i] < sizes[i] {
            return i;
        }
        digits[i] = 0;
    }
    0
}

/// Builds the information table of function node `row`.
pub fn fn_initial_info(
    row: usize,
    sample: Complex64,
    channels: &DyadicChannels,
    codebook: &Codebook,
    graph: &FactorGraph,
    active: &[bool],
    noise_var: f64,
) -> FnTable {
    let len = graph.samples_per_slot;
    let (slot, pos) = (row / len, row % len);
    let order = codebook.mapping.order;
    let tags: Vec<usize> = (0..graph.tags())
        .filter(|&n| active[n] && graph.dyadic[[row, n]])
        .collect();
    let isi = tags.iter().any(|&n| graph.backward[[row, n]]);

    let mut alphabets = Vec::with_capacity(tags.len());
    let mut contrib: Vec<Vec<Complex64>> = Vec::with_capacity(tags.len());
    for &n in &tags {
        let hf = channels.forward[n][slot][pos];
        if isi {
            let hb = channels.backward[n][slot][pos];
            contrib.push(
                (0..order)
                    .map(|m| {
                        hf * codebook.forward[m][[row, n]] + hb * codebook.backward[m][[row, n]]
                    })
                    .collect(),
            );
            alphabets.push(None);
        } else {
            let p = Projection::new(order, graph.slot_position(row, n))
                .expect("order validated by the codebook");
            contrib.push(
                p.groups
                    .iter()
                    .map(|g| hf * codebook.forward[g[0]][[row, n]])
                    .collect(),
            );
            alphabets.push(Some(p));
        }
    }
    let sizes: Vec<usize> = contrib.iter().map(Vec::len).collect();

    let mut values = Vec::new();
    if !tags.is_empty() {
        let scale = 1.0 / (2.0 * noise_var.max(NOISE_FLOOR));
        let d = tags.len();
        let total: usize = sizes.iter().product();
        values.reserve(total);
        let mut digits = vec![0; d];
        let mut residual = vec![sample; d + 1];
        for j in 0..d {
            residual[j + 1] = residual[j] - contrib[j][0];
        }
        for _ in 0..total {
            values.push(-residual[d].norm_sqr() * scale);
            let from = advance(&mut digits, &sizes);
            for j in from..d {
                residual[j + 1] = residual[j] - contrib[j][digits[j]];
            }
        }
    }
    let peak = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    FnTable {
        row,
        tags,
        isi,
        alphabets,
        sizes,
        values,
        peak,
    }
}

/// Messages on every edge between active tags and function nodes.
///
/// Both directions are stored over the full codeword domain; function nodes
/// that work on projected symbols project on read and expand on write.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageState {
    pub order: usize,
    /// `(table index, tag)` per edge.
    pub edges: Vec<(usize, usize)>,
    pub fn_to_vn: Vec<Vec<f64>>,
    pub vn_to_fn: Vec<Vec<f64>>,
    /// `ln ap_n(m)` per tag.
    pub priors: Vec<Vec<f64>>,
    table_offsets: Vec<usize>,
    tag_edges: Vec<Vec<usize>>,
}

impl MessageState {
    /// Edges of `tables`, VN→FN messages set to the uniform prior.
    pub fn new(tables: &[FnTable], tags: usize, order: usize) -> Self {
        let prior = vec![-(order as f64).ln(); order];
        let mut edges = Vec::new();
        let mut table_offsets = Vec::with_capacity(tables.len());
        let mut tag_edges = vec![Vec::new(); tags];
        for (t, table) in tables.iter().enumerate() {
            table_offsets.push(edges.len());
            for &n in &table.tags {
                tag_edges[n].push(edges.len());
                edges.push((t, n));
            }
        }
        let e = edges.len();
        Self {
            order,
            fn_to_vn: vec![vec![0.0; order]; e],
            vn_to_fn: vec![prior.clone(); e],
            priors: vec![prior; tags],
            edges,
            table_offsets,
            tag_edges,
        }
    }

    /// Edge ids attached to `tag`.
    pub fn tag_edges(&self, tag: usize) -> &[usize] {
        &self.tag_edges[tag]
    }

    /// `Q_n(m) = ln ap_n(m) + Σ` incoming FN→VN messages.
    pub fn belief(&self, tag: usize) -> Vec<f64> {
        let mut q = self.priors[tag].clone();
        for &e in &self.tag_edges[tag] {
            for (a, b) in q.iter_mut().zip(&self.fn_to_vn[e]) {
                *a += b;
            }
        }
        q
    }

    pub fn all_finite(&self) -> bool {
        self.fn_to_vn
            .iter()
            .chain(&self.vn_to_fn)
            .all(|m| m.iter().all(|v| v.is_finite()))
    }
}

/// Adds `msg[u]` to every entry whose digit `j` equals `u`.
fn add_along(data: &mut [f64], sizes: &[usize], j: usize, msg: &[f64]) {
    let inner: usize = sizes[j + 1..].iter().product();
    let s = sizes[j];
    if inner == 1 {
        for chunk in data.chunks_mut(s) {
            chunk.iter_mut().zip(msg).for_each(|(x, m)| *x += m);
        }
        return;
    }
    for chunk in data.chunks_mut(inner * s) {
        for (run, m) in chunk.chunks_mut(inner).zip(msg) {
            run.iter_mut().for_each(|x| *x += m);
        }
    }
}

/// Sums the entries whose digit `j` equals `u`, for every `u`.
fn sum_along(data: &[f64], sizes: &[usize], j: usize) -> Vec<f64> {
    let inner: usize = sizes[j + 1..].iter().product();
    let s = sizes[j];
    let mut sums = vec![0.0; s];
    if inner == 1 {
        for chunk in data.chunks(s) {
            sums.iter_mut().zip(chunk).for_each(|(acc, x)| *acc += x);
        }
        return sums;
    }
    for chunk in data.chunks(inner * s) {
        for (acc, run) in sums.iter_mut().zip(chunk.chunks(inner)) {
            *acc += run.iter().sum::<f64>();
        }
    }
    sums
}

/// Entries whose digit `j` equals `u`.
fn bucket<'a>(
    data: &'a [f64],
    sizes: &[usize],
    j: usize,
    u: usize,
) -> impl Iterator<Item = f64> + 'a {
    let inner: usize = sizes[j + 1..].iter().product();
    data.chunks(inner * sizes[j])
        .flat_map(move |chunk| chunk[u * inner..(u + 1) * inner].iter().cloned())
}

/// Scratch buffers reused across tables.
#[derive(Default)]
struct Scratch {
    logs: Vec<f64>,
    terms: Vec<f64>,
}

/// Per-index `max*` marginal of `table + Σ incoming` with each tag's own
/// incoming message removed again.
///
/// Terms are shifted by the largest entry and exponentiated once each;
/// buckets whose terms all underflow are recomputed exactly.
fn marginalize(table: &FnTable, incoming: &[Vec<f64>], scratch: &mut Scratch) -> Vec<Vec<f64>> {
    let sizes = &table.sizes;
    let logs = &mut scratch.logs;
    logs.clear();
    logs.extend_from_slice(&table.values);
    for (j, msg) in incoming.iter().enumerate() {
        add_along(logs, sizes, j, msg);
    }
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let terms = &mut scratch.terms;
    terms.clear();
    terms.extend(logs.iter().map(|&x| {
        let z = x - top;
        if z > -745.0 {
            z.exp()
        } else {
            0.0
        }
    }));

    (0..table.tags.len())
        .map(|j| {
            sum_along(terms, sizes, j)
                .into_iter()
                .enumerate()
                .map(|(u, sum)| {
                    let lse = if sum > 1e-250 {
                        top + sum.ln()
                    } else {
                        let m = bucket(logs, sizes, j, u).fold(f64::NEG_INFINITY, f64::max);
                        if m == f64::NEG_INFINITY {
                            m
                        } else {
                            m + bucket(logs, sizes, j, u)
                                .map(|t| (t - m).exp())
                                .sum::<f64>()
                                .ln()
                        }
                    };
                    lse - incoming[j][u]
                })
                .collect()
        })
        .collect()
}

/// Function-node half-iteration: every FN→VN message from the current
/// VN→FN messages.
pub fn fn_to_vn_update(state: &mut MessageState, tables: &[FnTable]) {
    let mut scratch = Scratch::default();
    for (t, table) in tables.iter().enumerate() {
        if table.is_empty() {
            continue;
        }
        let offset = state.table_offsets[t];
        let incoming: Vec<Vec<f64>> = (0..table.tags.len())
            .map(|i| table.project(i, &state.vn_to_fn[offset + i]))
            .collect();
        let out = marginalize(table, &incoming, &mut scratch);
        for (i, msg) in out.into_iter().enumerate() {
            state.fn_to_vn[offset + i] = table.expand(i, msg);
        }
    }
}

fn normalize(msg: &mut [f64]) {
    let m = msg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m.is_finite() {
        msg.iter_mut().for_each(|v| *v -= m);
    }
}

/// Variable-node half-iteration.
pub fn vn_to_fn_update(state: &mut MessageState, rule: VnUpdate) {
    for n in 0..state.tag_edges.len() {
        let edges = &state.tag_edges[n];
        for &e in edges {
            let mut msg = state.priors[n].clone();
            match rule {
                VnUpdate::Paper => {
                    let others: Vec<f64> = edges
                        .iter()
                        .filter(|&&o| o != e)
                        .flat_map(|&o| state.fn_to_vn[o].iter().copied())
                        .collect();
                    let norm = if others.is_empty() {
                        0.0
                    } else {
                        max_star_all(&others)
                    };
                    for (a, b) in msg.iter_mut().zip(&state.fn_to_vn[e]) {
                        *a += b - norm;
                    }
                }
                VnUpdate::SumProduct => {
                    for &o in edges.iter().filter(|&&o| o != e) {
                        for (a, b) in msg.iter_mut().zip(&state.fn_to_vn[o]) {
                            *a += b;
                        }
                    }
                }
            }
            normalize(&mut msg);
            state.vn_to_fn[e] = msg;
        }
    }
}

/// Soft and hard output for one active tag.
#[derive(Debug, Clone, PartialEq)]
pub struct TagDecision {
    /// `Q_n(m)` per codeword.
    pub belief: Vec<f64>,
    /// `Θ` per bit, most significant first.
    pub llr: Vec<f64>,
    pub bits: Vec<bool>,
}

impl TagDecision {
    fn from_belief(belief: Vec<f64>) -> Self {
        let order = belief.len();
        let bits_per = order.trailing_zeros() as usize;
        let mut llr = Vec::with_capacity(bits_per);
        for b in 0..bits_per {
            let mut zero = f64::NEG_INFINITY;
            let mut one = f64::NEG_INFINITY;
            for (m, &q) in belief.iter().enumerate() {
                if codeword_bits(m, bits_per)[b] {
                    one = max_star(one, q);
                } else {
                    zero = max_star(zero, q);
                }
            }
            llr.push(zero - one);
        }
        let bits = llr.iter().map(|&t| t <= 0.0).collect();
        Self { belief, llr, bits }
    }

    /// Codeword whose bits were decided.
    pub fn codeword(&self) -> usize {
        crate::codec::bits_to_codeword(&self.bits)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// `None` for idle tags.
    pub decisions: Vec<Option<TagDecision>>,
    pub iterations_used: usize,
}

impl DetectionResult {
    /// True when no tag was decoded.
    pub fn is_empty(&self) -> bool {
        self.decisions.iter().all(Option::is_none)
    }
}

/// Detector state for one received codeword.
#[derive(Debug, Clone)]
pub struct MpaDetector {
    pub tables: Vec<FnTable>,
    pub state: MessageState,
    pub active: Vec<bool>,
    pub config: DetectorConfig,
}

impl MpaDetector {
    pub fn new(
        received: &[SlotSignal],
        channels: &DyadicChannels,
        codebook: &Codebook,
        graph: &FactorGraph,
        active: &[bool],
        noise_var: f64,
        config: DetectorConfig,
    ) -> Self {
        let len = graph.samples_per_slot;
        let tables: Vec<FnTable> = (0..graph.function_nodes())
            .map(|row| {
                fn_initial_info(
                    row,
                    received[row / len][row % len],
                    channels,
                    codebook,
                    graph,
                    active,
                    noise_var,
                )
            })
            .collect();
        let state = MessageState::new(&tables, graph.tags(), codebook.mapping.order);
        Self {
            tables,
            state,
            active: active.to_vec(),
            config,
        }
    }

    /// Runs the configured number of iterations and decides every active tag.
    pub fn run(&mut self, mut trace: Option<&mut dyn Write>) -> std::io::Result<DetectionResult> {
        for it in 0..self.config.iterations {
            fn_to_vn_update(&mut self.state, &self.tables);
            if let Some(w) = trace.as_deref_mut() {
                self.dump(w, it, "fn_to_vn", &self.state.fn_to_vn)?;
            }
            vn_to_fn_update(&mut self.state, self.config.vn_update);
            if let Some(w) = trace.as_deref_mut() {
                self.dump(w, it, "vn_to_fn", &self.state.vn_to_fn)?;
            }
        }
        Ok(self.decide())
    }

    fn dump(
        &self,
        w: &mut dyn Write,
        it: usize,
        dir: &str,
        msgs: &[Vec<f64>],
    ) -> std::io::Result<()> {
        for (e, &(t, n)) in self.state.edges.iter().enumerate() {
            let vals: Vec<String> = msgs[e].iter().map(|v| format!("{v:.6e}")).collect();
            writeln!(
                w,
                "iter={} dir={} fn={} tag={} msg={}",
                it + 1,
                dir,
                self.tables[t].row,
                n,
                vals.join(",")
            )?;
        }
        Ok(())
    }

    pub fn decide(&self) -> DetectionResult {
        let decisions = self
            .active
            .iter()
            .enumerate()
            .map(|(n, &a)| a.then(|| TagDecision::from_belief(self.state.belief(n))))
            .collect();
        DetectionResult {
            decisions,
            iterations_used: self.config.iterations,
        }
    }
}

/// Runs the full detector on one SIC-cleaned codeword.
pub fn detect(
    received: &[SlotSignal],
    channels: &DyadicChannels,
    codebook: &Codebook,
    graph: &FactorGraph,
    active: &[bool],
    noise_var: f64,
    config: DetectorConfig,
) -> DetectionResult {
    MpaDetector::new(
        received, channels, codebook, graph, active, noise_var, config,
    )
    .run(None)
    .expect("no trace writer")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::oracle::{map_oracle, oracle_combinations};
    use crate::detector::testutil::instance;
    use crate::sigmodel::SimParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tables_of(
        inst: &crate::detector::testutil::Instance,
        active: &[bool],
        noise: f64,
    ) -> Vec<FnTable> {
        let len = inst.graph.samples_per_slot;
        (0..inst.graph.function_nodes())
            .map(|row| {
                fn_initial_info(
                    row,
                    inst.received[row / len][row % len],
                    &inst.channels,
                    &inst.codebook,
                    &inst.graph,
                    active,
                    noise,
                )
            })
            .collect()
    }

    fn params(slots: usize, len: usize, paths: usize, order: usize) -> SimParams {
        SimParams {
            slots,
            samples_per_slot: len,
            paths,
            order,
            ..SimParams::default()
        }
    }

    #[test]
    fn table_sizes_follow_lemma_1() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (k, l, paths, m, small, big) in [(4, 3, 2, 2, 8, 32), (4, 8, 3, 4, 27, 1024)] {
            let p = params(k, l, paths, m);
            let active = vec![true; p.tags()];
            let inst = instance(&p, &active, p.isi_depth(), &mut rng);
            let tables = tables_of(&inst, &active, p.noise_power);
            let isi: Vec<usize> = tables
                .iter()
                .filter(|t| t.isi)
                .map(|t| t.values.len())
                .collect();
            let plain: Vec<usize> = tables
                .iter()
                .filter(|t| !t.isi)
                .map(|t| t.values.len())
                .collect();
            assert_eq!(isi.len(), k * (paths - 1));
            assert_eq!(plain.len(), k * (l - paths + 1));
            assert!(isi.iter().all(|&s| s == big), "{isi:?}");
            assert!(plain.iter().all(|&s| s == small), "{plain:?}");
        }
    }

    #[test]
    fn noiseless_table_peaks_at_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = SimParams {
            noise_power: 0.0,
            order: 4,
            ..SimParams::default()
        };
        let mut active = vec![false; p.tags()];
        active[3] = true;
        let inst = instance(&p, &active, p.isi_depth(), &mut rng);
        let m = inst.sent[3].unwrap();
        for t in tables_of(&inst, &active, 0.0)
            .iter()
            .filter(|t| !t.is_empty())
        {
            assert_eq!(t.tags, vec![3]);
            let truth = match &t.alphabets[0] {
                Some(proj) => proj.index_of[m],
                None => m,
            };
            assert_eq!(t.values[truth], 0.0);
            for (u, &v) in t.values.iter().enumerate() {
                assert!(v <= 0.0 && v.is_finite());
                // projected symbols are distinct; full-domain candidates may
                // coincide on this one sample
                if u != truth && !t.isi {
                    assert!(v < 0.0);
                }
            }
        }
    }

    #[test]
    fn idle_nodes_have_empty_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = SimParams::default();
        let active = vec![false; p.tags()];
        let inst = instance(&p, &active, p.isi_depth(), &mut rng);
        assert!(tables_of(&inst, &active, p.noise_power)
            .iter()
            .all(|t| t.is_empty() && t.values.is_empty()));
        let res = detect(
            &inst.received,
            &inst.channels,
            &inst.codebook,
            &inst.graph,
            &active,
            p.noise_power,
            DetectorConfig::default(),
        );
        assert!(res.is_empty());
    }

    #[test]
    fn single_edge_message_is_the_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = params(4, 8, 3, 8);
        let mut active = vec![false; p.tags()];
        active[0] = true;
        let inst = instance(&p, &active, p.isi_depth(), &mut rng);
        let tables = tables_of(&inst, &active, p.noise_power);
        let mut st = MessageState::new(&tables, p.tags(), 8);
        assert!(st
            .vn_to_fn
            .iter()
            .all(|m| m.iter().all(|&v| v == -(8f64).ln())));
        fn_to_vn_update(&mut st, &tables);
        for (e, &(t, _)) in st.edges.iter().enumerate() {
            let expected = tables[t].expand(0, tables[t].values.clone());
            for (a, b) in st.fn_to_vn[e].iter().zip(&expected) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    fn lse(v: &[f64]) -> f64 {
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
    }

    #[test]
    fn one_iteration_matches_exhaustive_sum_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // moderate SNR keeps the log-likelihood spread small enough to compare
        let p = SimParams {
            noise_power: 2e-12,
            ..params(3, 2, 1, 2)
        };
        for _ in 0..20 {
            let active = vec![true; 3];
            let inst = instance(&p, &active, 0, &mut rng);
            let tables = tables_of(&inst, &active, p.noise_power);
            for rule in [VnUpdate::Paper, VnUpdate::SumProduct] {
                let mut st = MessageState::new(&tables, 3, 2);
                fn_to_vn_update(&mut st, &tables);
                vn_to_fn_update(&mut st, rule);
                assert!(st.all_finite());

                // independent oracle: per sample, probability-domain sum over
                // the other tag's hypotheses with uniform priors
                let len = p.samples_per_slot;
                let scale = 1.0 / (2.0 * p.noise_power);
                for n in 0..3 {
                    let mut q = [(0.5f64).ln(); 2];
                    for row in 0..inst.graph.function_nodes() {
                        let here: Vec<usize> =
                            (0..3).filter(|&i| inst.graph.dyadic[[row, i]]).collect();
                        if !here.contains(&n) {
                            continue;
                        }
                        let y = inst.received[row / len][row % len];
                        let other = *here.iter().find(|&&i| i != n).unwrap();
                        for (m, qm) in q.iter_mut().enumerate() {
                            let terms: Vec<f64> = (0..2)
                                .map(|mo| {
                                    let s = inst.channels.forward[n][row / len][row % len]
                                        * inst.codebook.forward[m][[row, n]]
                                        + inst.channels.forward[other][row / len][row % len]
                                            * inst.codebook.forward[mo][[row, other]];
                                    0.5f64.ln() - (y - s).norm_sqr() * scale
                                })
                                .collect();
                            *qm += lse(&terms);
                        }
                    }
                    let got = st.belief(n);
                    let (dg, dq) = (got[0] - got[1], q[0] - q[1]);
                    assert!((dg - dq).abs() <= 0.05, "tag {n}: {dg} vs {dq}");
                }
            }
        }
    }

    #[test]
    fn noiseless_single_tag_recovers_every_pattern() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for order in [2usize, 4, 8] {
            for paths in [1usize, 2, 3] {
                let p = SimParams {
                    noise_power: 0.0,
                    ..params(4, 8, paths, order)
                };
                for tag in 0..p.tags() {
                    let mut active = vec![false; p.tags()];
                    active[tag] = true;
                    for _ in 0..2 * order {
                        let inst = instance(&p, &active, p.isi_depth(), &mut rng);
                        let res = detect(
                            &inst.received,
                            &inst.channels,
                            &inst.codebook,
                            &inst.graph,
                            &active,
                            0.0,
                            DetectorConfig::default(),
                        );
                        let d = res.decisions[tag].as_ref().unwrap();
                        assert_eq!(
                            Some(d.codeword()),
                            inst.sent[tag],
                            "M={order} L+={paths} tag {tag}"
                        );
                    }
                }
            }
        }
    }

    use proptest::prelude::*;

    fn rule_strategy() -> impl Strategy<Value = VnUpdate> {
        prop::sample::select(vec![VnUpdate::Paper, VnUpdate::SumProduct])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn constant_offset_keeps_decisions(
            seed in any::<u64>(),
            order in prop::sample::select(vec![2usize, 4]),
            offset in -1e3..1e3f64,
            rule in rule_strategy(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = SimParams {
                order,
                noise_power: 3e-12,
                ..SimParams::default()
            };
            let active: Vec<bool> = (0..p.tags()).map(|_| rng.gen_bool(0.7)).collect();
            let inst = instance(&p, &active, p.isi_depth(), &mut rng);
            let config = DetectorConfig {
                iterations: 3,
                vn_update: rule,
            };
            let mut a = MpaDetector::new(
                &inst.received,
                &inst.channels,
                &inst.codebook,
                &inst.graph,
                &active,
                p.noise_power,
                config,
            );
            let mut b = a.clone();
            for t in b.tables.iter_mut() {
                t.values.iter_mut().for_each(|v| *v += offset);
                t.peak += offset;
            }
            let ra = a.run(None).unwrap();
            let rb = b.run(None).unwrap();
            for (x, y) in ra.decisions.iter().zip(&rb.decisions) {
                prop_assert_eq!(x.as_ref().map(|d| &d.bits), y.as_ref().map(|d| &d.bits));
            }
        }

        #[test]
        fn messages_stay_finite(
            seed in any::<u64>(),
            order in prop::sample::select(vec![2usize, 4, 8]),
            noise in prop::sample::select(vec![0.0, 1e-12, 1e-9]),
            paths in 1usize..=3,
            rule in rule_strategy(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = SimParams {
                order,
                paths,
                noise_power: noise,
                ..SimParams::default()
            };
            let active: Vec<bool> = (0..p.tags()).map(|_| rng.gen_bool(0.8)).collect();
            let inst = instance(&p, &active, p.isi_depth(), &mut rng);
            let tables = tables_of(&inst, &active, noise);
            let mut st = MessageState::new(&tables, p.tags(), order);
            for _ in 0..3 {
                fn_to_vn_update(&mut st, &tables);
                prop_assert!(st.all_finite());
                vn_to_fn_update(&mut st, rule);
                prop_assert!(st.all_finite());
            }
        }
    }

    #[test]
    fn llr_boundary_decodes_to_one() {
        let d = TagDecision::from_belief(vec![0.0, -1.0, 0.0, -1.0]);
        assert_eq!(d.llr[0], 0.0);
        assert!(d.bits[0]);
        assert!(d.llr[1] > 0.0);
        assert!(!d.bits[1]);
    }

    #[test]
    fn agrees_with_map_at_high_snr() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // per-sample SNR of a unit-gain tag is about 38 dB here
        let p = SimParams {
            noise_power: 1e-16,
            ..params(4, 4, 1, 2)
        };
        let mut agree = 0;
        let runs = 100;
        for _ in 0..runs {
            let active: Vec<bool> = (0..p.tags()).map(|_| rng.gen_bool(0.8)).collect();
            let inst = instance(&p, &active, 0, &mut rng);
            let res = detect(
                &inst.received,
                &inst.channels,
                &inst.codebook,
                &inst.graph,
                &active,
                p.noise_power,
                DetectorConfig::default(),
            );
            let map = map_oracle(&inst.received, &inst.channels, &inst.codebook, &active).unwrap();
            let mpa: Vec<Option<usize>> = res
                .decisions
                .iter()
                .map(|d| d.as_ref().map(TagDecision::codeword))
                .collect();
            agree += (mpa == map) as usize;
        }
        assert!(agree >= 95, "{agree}/{runs}");
    }

    #[test]
    fn oracle_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        assert_eq!(oracle_combinations(2, 2), 4);
        let p = SimParams {
            noise_power: 0.0,
            order: 4,
            ..SimParams::default()
        };
        let active = vec![true; p.tags()];
        let inst = instance(&p, &active, p.isi_depth(), &mut rng);
        let map = map_oracle(&inst.received, &inst.channels, &inst.codebook, &active).unwrap();
        assert_eq!(map, inst.sent);

        let p8 = SimParams {
            order: 8,
            slots: 5,
            ..SimParams::default()
        };
        let active = vec![true; p8.tags()];
        let inst = instance(&p8, &active, p8.isi_depth(), &mut rng);
        assert!(matches!(
            map_oracle(&inst.received, &inst.channels, &inst.codebook, &active),
            Err(crate::Error::OracleTooLarge { .. })
        ));
    }
}
