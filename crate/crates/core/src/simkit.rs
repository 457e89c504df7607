//! Monte-Carlo trials, aggregation and parameter sweeps.

use crate::codec::{
    build_codebook, build_mapping, codeword_bits, encode, encode_td_baseline, gray_bits,
    idle_reflection, sparse_beta, td_beta, Codebook, FactorGraph,
};
use crate::detector::{detect, detect_td_baseline, DetectorConfig, VnUpdate};
use crate::error::{Error, Result};
use crate::estimator::{assemble_dyadic, dcea_recover, degeneracy_epsilon, self_convolve};
use crate::sigmodel::{
    ap_receive, complex_gaussian, draw_ambient, draw_forward_channel, draw_leakage_channel,
    eh_threshold, incident_energy, sic, ChannelTaps, SimParams, TagLink,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "AMBSCATTER_THREADS";

/// Transmission and detection scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Sparse code, message passing on the dyadic graph.
    #[serde(rename = "D-MPA")]
    DMpa,
    /// Sparse code, message passing on the one-way graph (spill ignored).
    #[serde(rename = "plain-MPA")]
    PlainMpa,
    /// One tag per slot, PSK, spill samples discarded.
    #[serde(rename = "TD-baseline")]
    TdBaseline,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::DMpa, Variant::PlainMpa, Variant::TdBaseline];

    pub fn is_sparse(self) -> bool {
        !matches!(self, Variant::TdBaseline)
    }

    /// Tags served in a frame of `K` slots.
    pub fn tags(self, params: &SimParams) -> usize {
        if self.is_sparse() {
            params.tags()
        } else {
            params.slots
        }
    }

    /// Normalized reflected energy per symbol.
    pub fn beta(self, params: &SimParams) -> Result<f64> {
        Ok(if self.is_sparse() {
            sparse_beta(params.slots, &build_mapping(params.order, params.alpha)?)
        } else {
            td_beta(params.slots, params.alpha)
        })
    }

    pub fn overloading(self, params: &SimParams) -> f64 {
        self.tags(params) as f64 / params.slots as f64
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::DMpa => "D-MPA",
            Variant::PlainMpa => "plain-MPA",
            Variant::TdBaseline => "TD-baseline",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "d-mpa" | "dmpa" => Ok(Variant::DMpa),
            "plain-mpa" | "plain" | "mpa" => Ok(Variant::PlainMpa),
            "td-baseline" | "td" => Ok(Variant::TdBaseline),
            _ => Err(Error::config(
                "variant",
                s,
                "one of D-MPA, plain-MPA, TD-baseline",
            )),
        }
    }
}

/// Per-trial knobs that are not physical parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialOptions {
    pub vn_update: VnUpdate,
    /// Overrides energy-harvesting activation when set.
    pub forced_activation: Option<Vec<bool>>,
}

/// Bit tallies of one codeword period.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrialOutcome {
    pub tags: usize,
    pub active: usize,
    /// Bits sent by active tags.
    pub bits: usize,
    pub bit_errors: usize,
    /// Bits of tags whose channel could not be recovered; they are guessed
    /// and included in `bits` and `bit_errors`.
    pub erased_bits: usize,
    /// Tags whose channel could not be recovered.
    pub degenerate: usize,
}

/// Codebook and graphs shared by all trials at one parameter point.
#[derive(Debug, Clone)]
pub struct Frame {
    pub codebook: Codebook,
    /// Graph with the true spill depth.
    pub graph: FactorGraph,
    /// Codebook and graph with the spill ignored.
    pub one_way: (Codebook, FactorGraph),
}

impl Frame {
    pub fn new(params: &SimParams) -> Result<Self> {
        let mapping = build_mapping(params.order, params.alpha)?;
        let (codebook, graph) = build_codebook(
            params.slots,
            params.samples_per_slot,
            params.isi_depth(),
            &mapping,
        )?;
        let one_way = build_codebook(params.slots, params.samples_per_slot, 0, &mapping)?;
        Ok(Self {
            codebook,
            graph,
            one_way,
        })
    }
}

/// Random stream of trial `trial` under master seed `seed`.
///
/// Every variant and sweep point uses the same stream for the same trial
/// index, so comparisons share channel draws.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn random_bits<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<bool> {
    (0..n).map(|_| rng.gen()).collect()
}

/// Runs one codeword period end to end.
pub fn run_trial<R: Rng + ?Sized>(
    params: &SimParams,
    frame: &Frame,
    variant: Variant,
    options: &TrialOptions,
    rng: &mut R,
) -> Result<TrialOutcome> {
    let tags = variant.tags(params);
    let bits_per = params.bits_per_symbol();

    let channels: Vec<ChannelTaps> = (0..tags)
        .map(|_| draw_forward_channel(params, rng))
        .collect();
    let ambient = draw_ambient(params, params.slots, rng);
    let leakage = draw_leakage_channel(params, rng);

    let active: Vec<bool> = match &options.forced_activation {
        Some(a) if a.len() == tags => a.clone(),
        Some(a) => {
            return Err(Error::Dimension(format!(
                "{} forced activations for {tags} tags",
                a.len()
            )))
        }
        None => {
            let theta = eh_threshold(params, variant.beta(params)?)?;
            channels
                .iter()
                .map(|f| incident_energy(f, params) >= theta * crate::sigmodel::THRESHOLD_SCALE)
                .collect()
        }
    };

    let data: Vec<Vec<bool>> = active
        .iter()
        .map(|&a| {
            if a {
                random_bits(rng, bits_per)
            } else {
                Vec::new()
            }
        })
        .collect();
    let reflections: Vec<Vec<_>> = (0..tags)
        .map(|n| {
            if !active[n] {
                Ok(idle_reflection(params.slots))
            } else if variant.is_sparse() {
                Ok(encode(n, &data[n], &frame.codebook)?.reflection)
            } else {
                encode_td_baseline(n, &data[n], params.slots, params.order, params.alpha)
            }
        })
        .collect::<Result<_>>()?;

    let links: Vec<TagLink<'_>> = channels
        .iter()
        .zip(&reflections)
        .map(|(f, r)| TagLink {
            forward: f,
            reflection: r,
        })
        .collect();
    let received = ap_receive(&links, &ambient, &leakage, params, rng)?;
    let cleaned = sic(&received, &leakage, &ambient, params.residual_si_power, rng)?;

    let epsilon = degeneracy_epsilon(params);
    let mut estimates: Vec<Option<ChannelTaps>> = Vec::with_capacity(tags);
    let mut degenerate = vec![false; tags];
    for n in 0..tags {
        if !active[n] {
            estimates.push(None);
            continue;
        }
        let mut h = self_convolve(&channels[n]);
        if params.composite_error_power > 0.0 {
            for t in h.taps.iter_mut() {
                *t += complex_gaussian(rng, params.composite_error_power);
            }
        }
        match dcea_recover(&h, epsilon) {
            Ok(f) => estimates.push(Some(f)),
            Err(Error::DegenerateLeadTap { .. }) => {
                degenerate[n] = true;
                estimates.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let decodable: Vec<bool> = (0..tags).map(|n| active[n] && !degenerate[n]).collect();
    let noise_var = params.noise_power + params.residual_si_power;

    let decided: Vec<Option<Vec<bool>>> = match variant {
        Variant::DMpa | Variant::PlainMpa => {
            let dyadic = assemble_dyadic(&estimates, &ambient, params)?;
            let (codebook, graph) = if variant == Variant::DMpa {
                (&frame.codebook, &frame.graph)
            } else {
                (&frame.one_way.0, &frame.one_way.1)
            };
            let config = DetectorConfig {
                iterations: params.iterations,
                vn_update: options.vn_update,
            };
            detect(
                &cleaned, &dyadic, codebook, graph, &decodable, noise_var, config,
            )
            .decisions
            .into_iter()
            .map(|d| d.map(|d| d.bits))
            .collect()
        }
        Variant::TdBaseline => {
            detect_td_baseline(&cleaned, &estimates, &ambient, &decodable, params, rng)?
                .into_iter()
                .map(|d| d.map(|d| d.bits))
                .collect()
        }
    };

    let mut out = TrialOutcome {
        tags,
        ..TrialOutcome::default()
    };
    for n in 0..tags {
        if !active[n] {
            continue;
        }
        out.active += 1;
        out.bits += bits_per;
        let guess = if degenerate[n] {
            out.degenerate += 1;
            out.erased_bits += bits_per;
            let m = rng.gen_range(0..params.order);
            if variant.is_sparse() {
                codeword_bits(m, bits_per)
            } else {
                gray_bits(m, bits_per)
            }
        } else {
            decided[n].clone().expect("decodable tag has a decision")
        };
        out.bit_errors += guess.iter().zip(&data[n]).filter(|(a, b)| a != b).count();
    }
    Ok(out)
}

/// Aggregated metrics of one (parameter point, variant) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    /// Swept parameter names and values, outermost first.
    pub point: Vec<(String, f64)>,
    pub variant: Variant,
    pub order: usize,
    pub slots: usize,
    pub paths: usize,
    pub alpha: f64,
    pub beta: f64,
    pub overloading: f64,
    pub p_harvest: f64,
    /// `None` when no active tag sent a bit.
    pub ber: Option<f64>,
    pub throughput_bps: f64,
    pub se_p_harvest: f64,
    pub se_ber: Option<f64>,
    pub se_throughput: f64,
    pub trials: usize,
    pub bits: usize,
    pub bit_errors: usize,
    pub degenerate_count: usize,
}

fn mean_and_se(xs: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = xs.clone().sum::<f64>() / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

/// Folds per-trial outcomes, in trial order, into one record.
pub fn aggregate(
    outcomes: &[TrialOutcome],
    params: &SimParams,
    variant: Variant,
) -> Result<MetricsRecord> {
    let n = outcomes.len();
    if n == 0 {
        return Err(Error::Domain("aggregate needs at least one trial".into()));
    }
    let tags: usize = outcomes.iter().map(|o| o.tags).sum();
    let active: usize = outcomes.iter().map(|o| o.active).sum();
    let bits: usize = outcomes.iter().map(|o| o.bits).sum();
    let errors: usize = outcomes.iter().map(|o| o.bit_errors).sum();
    let degenerate: usize = outcomes.iter().map(|o| o.degenerate).sum();

    let p_harvest = if tags == 0 {
        0.0
    } else {
        active as f64 / tags as f64
    };
    let (_, se_p) = mean_and_se(
        outcomes
            .iter()
            .map(|o| o.active as f64 / o.tags.max(1) as f64),
        n,
    );

    let ceiling = variant.overloading(params) * params.bit_rate();
    let (ber, se_ber, throughput) = if bits == 0 {
        (None, None, 0.0)
    } else {
        let ber = errors as f64 / bits as f64;
        // ratio estimator: linearized variance of Σe/Σb
        let mean_bits = bits as f64 / n as f64;
        let se = if n < 2 {
            0.0
        } else {
            let ss: f64 = outcomes
                .iter()
                .map(|o| {
                    let r = o.bit_errors as f64 - ber * o.bits as f64;
                    r * r
                })
                .sum();
            (ss / ((n - 1) as f64 * n as f64)).sqrt() / mean_bits
        };
        (Some(ber), Some(se), ceiling * (1.0 - ber) * p_harvest)
    };
    let bits_per = params.bits_per_symbol() as f64;
    let (_, se_success) = mean_and_se(
        outcomes
            .iter()
            .map(|o| (o.bits - o.bit_errors) as f64 / (bits_per * o.tags.max(1) as f64)),
        n,
    );

    Ok(MetricsRecord {
        point: Vec::new(),
        variant,
        order: params.order,
        slots: params.slots,
        paths: params.paths,
        alpha: params.alpha,
        beta: variant.beta(params)?,
        overloading: variant.overloading(params),
        p_harvest,
        ber,
        throughput_bps: throughput,
        se_p_harvest: se_p,
        se_ber,
        se_throughput: ceiling * se_success,
        trials: n,
        bits,
        bit_errors: errors,
        degenerate_count: degenerate,
    })
}

/// Parameter that a sweep axis varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVariable {
    #[serde(rename = "alpha")]
    Alpha,
    #[serde(rename = "M")]
    Order,
    #[serde(rename = "K")]
    Slots,
    #[serde(rename = "L_plus")]
    Paths,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Alpha => "alpha",
            SweepVariable::Order => "M",
            SweepVariable::Slots => "K",
            SweepVariable::Paths => "L_plus",
        }
    }

    /// Copy of `params` with this variable set to `value`.
    pub fn apply(self, params: &SimParams, value: f64) -> Result<SimParams> {
        let mut p = params.clone();
        let as_count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::config(
                    self.name(),
                    v,
                    "must be a non-negative integer",
                ))
            }
        };
        match self {
            SweepVariable::Alpha => p.alpha = value,
            SweepVariable::Order => p.order = as_count(value)?,
            SweepVariable::Slots => p.slots = as_count(value)?,
            SweepVariable::Paths => p.paths = as_count(value)?,
        }
        p.validate()?;
        Ok(p)
    }
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(SweepVariable::Alpha),
            "M" => Ok(SweepVariable::Order),
            "K" => Ok(SweepVariable::Slots),
            "L_plus" => Ok(SweepVariable::Paths),
            _ => Err(Error::config(
                "sweep_variable",
                s,
                "one of alpha, M, K, L_plus",
            )),
        }
    }
}

/// One swept parameter and its values.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

/// Swept parameter names and values of one point, outermost first.
pub type Coordinates = Vec<(String, f64)>;

/// A family of parameter points, each run for every listed variant.
///
/// `axes` are combined as a Cartesian product, the first axis outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub axes: Vec<SweepAxis>,
    pub fixed: SimParams,
    pub trials: usize,
    pub seed: u64,
    pub variants: Vec<Variant>,
    pub vn_update: VnUpdate,
}

impl Scenario {
    /// Every parameter point with its coordinates, after validation.
    pub fn points(&self) -> Result<Vec<(Coordinates, SimParams)>> {
        if self.trials == 0 {
            return Err(Error::config("trials", 0, "trials must be >= 1"));
        }
        if self.variants.is_empty() {
            return Err(Error::config("variants", "[]", "at least one variant"));
        }
        let mut points = vec![(Vec::new(), self.fixed.clone())];
        for axis in &self.axes {
            if axis.values.is_empty() {
                return Err(Error::config(
                    axis.variable.name(),
                    "[]",
                    "sweep values must not be empty",
                ));
            }
            let mut next = Vec::with_capacity(points.len() * axis.values.len());
            for (coords, params) in &points {
                for &v in &axis.values {
                    let mut c: Vec<(String, f64)> = coords.clone();
                    c.push((axis.variable.name().to_string(), v));
                    next.push((c, axis.variable.apply(params, v)?));
                }
            }
            points = next;
        }
        self.fixed.validate()?;
        Ok(points)
    }
}

/// Worker pool sized by [`THREADS_ENV`] when set.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::config(THREADS_ENV, &v, "a positive integer"))?;
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))
}

/// Runs `trials` independent trials and aggregates them in trial order.
pub fn run_point(
    params: &SimParams,
    variant: Variant,
    trials: usize,
    seed: u64,
    options: &TrialOptions,
    pool: &rayon::ThreadPool,
) -> Result<MetricsRecord> {
    let frame = Frame::new(params)?;
    let outcomes: Vec<TrialOutcome> = pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|t| {
                run_trial(
                    params,
                    &frame,
                    variant,
                    options,
                    &mut trial_rng(seed, t as u64),
                )
            })
            .collect::<Result<Vec<_>>>()
    })?;
    aggregate(&outcomes, params, variant)
}

/// Runs every (point, variant) pair; `progress` sees each finished record
/// with its position and the total count.
pub fn run_sweep_with_progress(
    scenario: &Scenario,
    mut progress: impl FnMut(usize, usize, &MetricsRecord),
) -> Result<Vec<MetricsRecord>> {
    let points = scenario.points()?;
    let pool = worker_pool()?;
    let options = TrialOptions {
        vn_update: scenario.vn_update,
        forced_activation: None,
    };
    let total = points.len() * scenario.variants.len();
    let mut records = Vec::with_capacity(total);
    for (coords, params) in &points {
        for &variant in &scenario.variants {
            let mut rec = run_point(
                params,
                variant,
                scenario.trials,
                scenario.seed,
                &options,
                &pool,
            )?;
            rec.point = coords.clone();
            records.push(rec);
            progress(records.len(), total, records.last().expect("just pushed"));
        }
    }
    Ok(records)
}

pub fn run_sweep(scenario: &Scenario) -> Result<Vec<MetricsRecord>> {
    run_sweep_with_progress(scenario, |_, _, _| {})
}
