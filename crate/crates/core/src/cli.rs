//! Command-line front end: configuration files, scenario presets, CSV
//! output and debug dumps.

use crate::codec::encode;
use crate::codec::{build_codebook, build_mapping};
use crate::detector::{DetectorConfig, MpaDetector, VnUpdate};
use crate::error::{Error, Result};
use crate::estimator::{assemble_dyadic, dcea_recover, degeneracy_epsilon, self_convolve};
use crate::sigmodel::{
    ap_receive, dbm_to_watts, draw_ambient, draw_forward_channel, draw_leakage_channel, sic,
    SimParams, TagLink,
};
use crate::simkit::{
    run_sweep_with_progress, trial_rng, MetricsRecord, Scenario, SweepAxis, SweepVariable, Variant,
};
use clap::Parser;
use rand::Rng;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use toml::{Table, Value};

/// Reflection-coefficient grid used by the α sweeps.
pub const ALPHA_GRID: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

const DEFAULT_TRIALS: usize = 20_000;
const DEFAULT_SEED: u64 = 2023;

#[derive(Debug, Parser)]
#[command(
    name = "ambscatter",
    version,
    about = "Sparse-coded ambient backscatter simulator"
)]
pub struct Cli {
    /// TOML configuration file; missing keys take the built-in defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// mod-order, multipath, timeslots, throughput or custom.
    #[arg(long)]
    pub scenario: Option<String>,
    /// CSV output path.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Comma-separated list of D-MPA, plain-MPA, TD-baseline.
    #[arg(long)]
    pub variant: Option<String>,
    /// Variable-node rule: sum_product (default) or paper.
    #[arg(long = "vn-update")]
    pub vn_update: Option<String>,
    /// codebook, factor-graph or trace; prints and exits.
    #[arg(long)]
    pub debug: Option<String>,
}

/// Scenario family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// BER and harvesting probability against α for M = 2, 4, 8.
    ModOrder,
    /// BER against L+ for the three detectors.
    Multipath,
    /// Harvesting probability and BER against K.
    Timeslots,
    /// Sum throughput against α.
    Throughput,
    /// Axes taken from the configuration file.
    Custom,
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mod-order" => Ok(ScenarioKind::ModOrder),
            "multipath" => Ok(ScenarioKind::Multipath),
            "timeslots" => Ok(ScenarioKind::Timeslots),
            "throughput" => Ok(ScenarioKind::Throughput),
            "custom" => Ok(ScenarioKind::Custom),
            _ => Err(Error::config(
                "scenario",
                s,
                "one of mod-order, multipath, timeslots, throughput, custom",
            )),
        }
    }
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::ModOrder => "mod-order",
            ScenarioKind::Multipath => "multipath",
            ScenarioKind::Timeslots => "timeslots",
            ScenarioKind::Throughput => "throughput",
            ScenarioKind::Custom => "custom",
        }
    }
}

/// Everything a run needs after defaults and overrides are applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kind: ScenarioKind,
    pub scenario: Scenario,
    pub output: PathBuf,
    /// `trace = true` in the file; only honored through `--debug trace`.
    pub trace_requested: bool,
}

const PARAM_KEYS: &[&str] = &[
    "sigma_s2_dbm",
    "sigma_n2_dbm",
    "T_s",
    "L",
    "K",
    "K1",
    "M",
    "L_plus",
    "alpha",
    "eta",
    "sigma_c2",
    "G_s",
    "A_e",
    "d",
    "N_I",
    "leakage_paths",
    "sigma_h0_2",
    "residual_si_power",
    "composite_error_power",
];

const RUN_KEYS: &[&str] = &[
    "scenario",
    "sweep_variable",
    "sweep_values",
    "series_variable",
    "series_values",
    "trials",
    "seed",
    "variants",
    "vn_update",
    "output",
    "trace",
];

fn get_f64(t: &Table, key: &str) -> Result<Option<f64>> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::Float(f)) => Ok(Some(*f)),
        Some(Value::Integer(i)) => Ok(Some(*i as f64)),
        Some(v) => Err(Error::config(key, v, "expected a number")),
    }
}

fn get_usize(t: &Table, key: &str) -> Result<Option<usize>> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
        Some(v) => Err(Error::config(key, v, "expected a non-negative integer")),
    }
}

fn get_str<'a>(t: &'a Table, key: &str) -> Result<Option<&'a str>> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(v) => Err(Error::config(key, v, "expected a string")),
    }
}

fn get_numbers(t: &Table, key: &str) -> Result<Option<Vec<f64>>> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::Array(a)) => a
            .iter()
            .map(|v| match v {
                Value::Float(f) => Ok(*f),
                Value::Integer(i) => Ok(*i as f64),
                other => Err(Error::config(key, other, "expected an array of numbers")),
            })
            .collect::<Result<Vec<_>>>()
            .map(Some),
        Some(v) => Err(Error::config(key, v, "expected an array of numbers")),
    }
}

/// Parsed configuration file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FileConfig {
    pub params: SimParams,
    pub scenario: Option<String>,
    pub sweep: Option<SweepAxis>,
    pub series: Option<SweepAxis>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub variants: Option<Vec<Variant>>,
    pub vn_update: Option<VnUpdate>,
    pub output: Option<PathBuf>,
    pub trace: bool,
}

fn axis(t: &Table, var_key: &str, values_key: &str) -> Result<Option<SweepAxis>> {
    match (get_str(t, var_key)?, get_numbers(t, values_key)?) {
        (None, None) => Ok(None),
        (Some(v), Some(values)) => Ok(Some(SweepAxis {
            variable: v.parse()?,
            values,
        })),
        (Some(_), None) => Err(Error::config(
            values_key,
            "<missing>",
            "required with the variable",
        )),
        (None, Some(_)) => Err(Error::config(
            var_key,
            "<missing>",
            "required with the values",
        )),
    }
}

fn parse_variants(s: &str) -> Result<Vec<Variant>> {
    s.split(',').map(str::parse).collect()
}

/// Reads a flat TOML configuration. Unknown keys are rejected; missing
/// physical parameters keep their defaults.
pub fn parse_config(text: &str) -> Result<FileConfig> {
    let t: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config("config", e.message(), "valid TOML"))?;
    for key in t.keys() {
        if !PARAM_KEYS.contains(&key.as_str()) && !RUN_KEYS.contains(&key.as_str()) {
            return Err(Error::config(key, "<present>", "unknown key"));
        }
    }

    let mut p = SimParams::default();
    if let Some(v) = get_f64(&t, "sigma_s2_dbm")? {
        p.tx_power = dbm_to_watts(v);
    }
    if let Some(v) = get_f64(&t, "sigma_n2_dbm")? {
        p.noise_power = dbm_to_watts(v);
    }
    let floats: [(&str, &mut f64); 9] = [
        ("T_s", &mut p.sample_period),
        ("alpha", &mut p.alpha),
        ("eta", &mut p.efficiency),
        ("sigma_c2", &mut p.energy_per_symbol),
        ("G_s", &mut p.antenna_gain),
        ("A_e", &mut p.aperture),
        ("d", &mut p.distance),
        ("sigma_h0_2", &mut p.leakage_power),
        ("residual_si_power", &mut p.residual_si_power),
    ];
    for (key, slot) in floats {
        if let Some(v) = get_f64(&t, key)? {
            *slot = v;
        }
    }
    if let Some(v) = get_f64(&t, "composite_error_power")? {
        p.composite_error_power = v;
    }
    let counts: [(&str, &mut usize); 7] = [
        ("L", &mut p.samples_per_slot),
        ("K", &mut p.slots),
        ("K1", &mut p.active_slots),
        ("M", &mut p.order),
        ("L_plus", &mut p.paths),
        ("N_I", &mut p.iterations),
        ("leakage_paths", &mut p.leakage_paths),
    ];
    for (key, slot) in counts {
        if let Some(v) = get_usize(&t, key)? {
            *slot = v;
        }
    }
    p.validate()?;

    let seed = match t.get("seed") {
        None => None,
        Some(Value::Integer(i)) if *i >= 0 => Some(*i as u64),
        Some(v) => return Err(Error::config("seed", v, "expected a non-negative integer")),
    };
    let variants = match t.get("variants") {
        None => None,
        Some(Value::Array(a)) => Some(
            a.iter()
                .map(|v| match v {
                    Value::String(s) => s.parse(),
                    other => Err(Error::config("variants", other, "expected variant names")),
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        Some(Value::String(s)) => Some(parse_variants(s)?),
        Some(v) => return Err(Error::config("variants", v, "expected variant names")),
    };
    let vn_update = get_str(&t, "vn_update")?
        .map(|s| {
            s.parse()
                .map_err(|_| Error::config("vn_update", s, "paper or sum_product"))
        })
        .transpose()?;
    let trace = match t.get("trace") {
        None => false,
        Some(Value::Boolean(b)) => *b,
        Some(v) => return Err(Error::config("trace", v, "expected true or false")),
    };

    Ok(FileConfig {
        params: p,
        scenario: get_str(&t, "scenario")?.map(String::from),
        sweep: axis(&t, "sweep_variable", "sweep_values")?,
        series: axis(&t, "series_variable", "series_values")?,
        trials: get_usize(&t, "trials")?,
        seed,
        variants,
        vn_update,
        output: get_str(&t, "output")?.map(PathBuf::from),
        trace,
    })
}

/// Preset axes, fixed-parameter adjustments and variants of a scenario.
pub fn preset(kind: ScenarioKind, params: &SimParams) -> (SimParams, Vec<SweepAxis>, Vec<Variant>) {
    let mut p = params.clone();
    let alpha = || SweepAxis {
        variable: SweepVariable::Alpha,
        values: ALPHA_GRID.to_vec(),
    };
    match kind {
        ScenarioKind::ModOrder => {
            p.slots = 4;
            p.paths = 3;
            (
                p,
                vec![
                    SweepAxis {
                        variable: SweepVariable::Order,
                        values: vec![2.0, 4.0, 8.0],
                    },
                    alpha(),
                ],
                vec![Variant::DMpa, Variant::TdBaseline],
            )
        }
        ScenarioKind::Multipath => {
            p.order = 4;
            p.slots = 4;
            (
                p,
                vec![SweepAxis {
                    variable: SweepVariable::Paths,
                    values: vec![1.0, 2.0, 3.0],
                }],
                Variant::ALL.to_vec(),
            )
        }
        ScenarioKind::Timeslots => {
            p.order = 2;
            (
                p,
                vec![SweepAxis {
                    variable: SweepVariable::Slots,
                    values: vec![4.0, 6.0, 8.0],
                }],
                vec![Variant::DMpa, Variant::TdBaseline],
            )
        }
        ScenarioKind::Throughput => {
            p.order = 4;
            p.slots = 4;
            p.paths = 3;
            (p, vec![alpha()], vec![Variant::DMpa, Variant::TdBaseline])
        }
        ScenarioKind::Custom => (p, Vec::new(), Variant::ALL.to_vec()),
    }
}

/// Combines file contents and command-line overrides into a run.
pub fn resolve(cli: &Cli, file: FileConfig) -> Result<RunConfig> {
    let name = cli
        .scenario
        .clone()
        .or_else(|| file.scenario.clone())
        .unwrap_or_else(|| "custom".into());
    let kind: ScenarioKind = name.parse()?;
    let (fixed, mut axes, mut variants) = preset(kind, &file.params);
    if kind == ScenarioKind::Custom {
        axes = file.series.iter().chain(&file.sweep).cloned().collect();
        if axes.is_empty() {
            return Err(Error::config(
                "sweep_variable",
                "<missing>",
                "custom scenarios need sweep_variable and sweep_values",
            ));
        }
    } else {
        // explicit values replace the preset values of the same variable
        for ax in file.series.iter().chain(&file.sweep) {
            match axes.iter_mut().find(|a| a.variable == ax.variable) {
                Some(a) => a.values = ax.values.clone(),
                None => axes.push(ax.clone()),
            }
        }
    }
    if let Some(v) = &file.variants {
        variants = v.clone();
    }
    if let Some(v) = &cli.variant {
        variants = parse_variants(v)?;
    }
    let vn_update = match &cli.vn_update {
        Some(s) => s
            .parse()
            .map_err(|_| Error::config("vn-update", s, "paper or sum_product"))?,
        None => file.vn_update.unwrap_or_default(),
    };
    let scenario = Scenario {
        name: kind.name().to_string(),
        axes,
        fixed,
        trials: cli.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS),
        seed: cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        variants,
        vn_update,
    };
    scenario.points()?;
    Ok(RunConfig {
        kind,
        scenario,
        output: cli
            .output
            .clone()
            .or(file.output)
            .unwrap_or_else(|| PathBuf::from(format!("{}.csv", kind.name()))),
        trace_requested: file.trace,
    })
}

/// Decimal rendering with nine significant digits and no exponent.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x == 0.0 {
            "0".into()
        } else {
            x.to_string()
        };
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (8 - mag).max(0) as usize;
    let mut s = format!("{:.*}", decimals, x);
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

pub const CSV_HEADER: &str = "scenario,variant,M,K,L_plus,alpha,beta,lambda,p_harvest,ber,throughput_bps,se_p_harvest,se_ber,se_throughput,trials,bits,bit_errors,degenerate_count";

/// CSV text of `records`: header plus one line per record.
pub fn csv_text(scenario: &str, records: &[MetricsRecord]) -> String {
    let mut s = String::new();
    s.push_str(CSV_HEADER);
    s.push('\n');
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), format_sig9);
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            scenario,
            r.variant,
            r.order,
            r.slots,
            r.paths,
            format_sig9(r.alpha),
            format_sig9(r.beta),
            format_sig9(r.overloading),
            format_sig9(r.p_harvest),
            opt(r.ber),
            format_sig9(r.throughput_bps),
            format_sig9(r.se_p_harvest),
            opt(r.se_ber),
            format_sig9(r.se_throughput),
            r.trials,
            r.bits,
            r.bit_errors,
            r.degenerate_count
        );
    }
    s
}

/// Writes the CSV file.
pub fn emit_csv(scenario: &str, records: &[MetricsRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Domain("no records to write".into()));
    }
    std::fs::write(path, csv_text(scenario, records))
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Effective configuration of a run as TOML.
pub fn effective_config(run: &RunConfig) -> String {
    let p = &run.scenario.fixed;
    let mut t: BTreeMap<&str, Value> = BTreeMap::new();
    t.insert("scenario", Value::String(run.scenario.name.clone()));
    t.insert(
        "sigma_s2_dbm",
        Value::Float(10.0 * (p.tx_power * 1e3).log10()),
    );
    t.insert(
        "sigma_n2_dbm",
        Value::Float(10.0 * (p.noise_power * 1e3).log10()),
    );
    t.insert("T_s", Value::Float(p.sample_period));
    t.insert("L", Value::Integer(p.samples_per_slot as i64));
    t.insert("K", Value::Integer(p.slots as i64));
    t.insert("K1", Value::Integer(p.active_slots as i64));
    t.insert("M", Value::Integer(p.order as i64));
    t.insert("L_plus", Value::Integer(p.paths as i64));
    t.insert("alpha", Value::Float(p.alpha));
    t.insert("eta", Value::Float(p.efficiency));
    t.insert("sigma_c2", Value::Float(p.energy_per_symbol));
    t.insert("G_s", Value::Float(p.antenna_gain));
    t.insert("A_e", Value::Float(p.aperture));
    t.insert("d", Value::Float(p.distance));
    t.insert("N_I", Value::Integer(p.iterations as i64));
    t.insert("leakage_paths", Value::Integer(p.leakage_paths as i64));
    t.insert("sigma_h0_2", Value::Float(p.leakage_power));
    t.insert("residual_si_power", Value::Float(p.residual_si_power));
    t.insert(
        "composite_error_power",
        Value::Float(p.composite_error_power),
    );
    t.insert("trials", Value::Integer(run.scenario.trials as i64));
    t.insert("seed", Value::Integer(run.scenario.seed as i64));
    t.insert(
        "vn_update",
        Value::String(run.scenario.vn_update.to_string()),
    );
    t.insert(
        "variants",
        Value::Array(
            run.scenario
                .variants
                .iter()
                .map(|v| Value::String(v.to_string()))
                .collect(),
        ),
    );
    let axis_values =
        |ax: &SweepAxis| Value::Array(ax.values.iter().map(|&v| Value::Float(v)).collect());
    let keys = match run.scenario.axes.len() {
        1 => vec![("sweep_variable", "sweep_values")],
        _ => vec![
            ("series_variable", "series_values"),
            ("sweep_variable", "sweep_values"),
        ],
    };
    for (ax, (var, vals)) in run.scenario.axes.iter().zip(keys) {
        t.insert(var, Value::String(ax.variable.name().to_string()));
        t.insert(vals, axis_values(ax));
    }
    let mut out = toml::to_string(&t).expect("flat table serializes");
    for ax in run.scenario.axes.iter().skip(2) {
        let _ = writeln!(
            out,
            "# further axis: {} = {:?}",
            ax.variable.name(),
            ax.values
        );
    }
    out
}

/// Path of the configuration echo written next to the CSV.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".config.toml");
    PathBuf::from(s)
}

/// Debug output kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpKind {
    Codebook,
    FactorGraph,
    Trace,
}

impl std::str::FromStr for DumpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "codebook" => Ok(DumpKind::Codebook),
            "factor-graph" => Ok(DumpKind::FactorGraph),
            "trace" => Ok(DumpKind::Trace),
            _ => Err(Error::config(
                "debug",
                s,
                "one of codebook, factor-graph, trace",
            )),
        }
    }
}

fn histogram(values: &[usize]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for &v in values {
        *h.entry(v).or_insert(0) += 1;
    }
    h
}

fn format_histogram(h: &BTreeMap<usize, usize>) -> String {
    let parts: Vec<String> = h.iter().map(|(d, c)| format!("{d}:{c}")).collect();
    format!("{{{}}}", parts.join(", "))
}

/// Human-readable dump of the codebook, the factor graph, or one traced
/// detector run.
pub fn debug_dump(
    kind: DumpKind,
    params: &SimParams,
    seed: u64,
    vn_update: VnUpdate,
    out: &mut dyn Write,
) -> Result<()> {
    params.validate()?;
    let mapping = build_mapping(params.order, params.alpha)?;
    let (codebook, graph) = build_codebook(
        params.slots,
        params.samples_per_slot,
        params.isi_depth(),
        &mapping,
    )?;
    match kind {
        DumpKind::Codebook => {
            writeln!(
                out,
                "codebook: M={} K={} N={} alpha={}",
                params.order,
                params.slots,
                graph.tags(),
                params.alpha
            )?;
            for (m, b) in codebook.one_way.iter().enumerate() {
                writeln!(
                    out,
                    "codeword {} (bits {})",
                    m + 1,
                    bits_label(m, mapping.bits_per_symbol())
                )?;
                for n in 0..graph.tags() {
                    let row: Vec<String> = b.column(n).iter().map(|v| format!("{v:+.4}")).collect();
                    writeln!(out, "  tag {:>2}: {}", n + 1, row.join(" "))?;
                }
            }
        }
        DumpKind::FactorGraph => {
            let fn_deg = graph.fn_degrees();
            let vn_deg = graph.vn_degrees();
            writeln!(
                out,
                "factor graph: K={} L={} L_tilde={} N={} FNs={}",
                params.slots,
                params.samples_per_slot,
                graph.isi_depth,
                graph.tags(),
                graph.function_nodes()
            )?;
            for (row, d) in fn_deg.iter().enumerate() {
                let tags: Vec<String> = (0..graph.tags())
                    .filter(|&n| graph.dyadic[[row, n]])
                    .map(|n| {
                        let mark = if graph.backward[[row, n]] && !graph.forward[[row, n]] {
                            "-"
                        } else {
                            ""
                        };
                        format!("{}{}", n + 1, mark)
                    })
                    .collect();
                writeln!(
                    out,
                    "  FN {:>3}: degree {} tags [{}]",
                    row + 1,
                    d,
                    tags.join(" ")
                )?;
            }
            for (n, d) in vn_deg.iter().enumerate() {
                writeln!(out, "  VN {:>3}: degree {}", n + 1, d)?;
            }
            writeln!(
                out,
                "FN degree histogram: {}",
                format_histogram(&histogram(&fn_deg))
            )?;
            writeln!(
                out,
                "VN degree histogram: {}",
                format_histogram(&histogram(&vn_deg))
            )?;
        }
        DumpKind::Trace => {
            let mut rng = trial_rng(seed, 0);
            let tags = graph.tags();
            let channels: Vec<_> = (0..tags)
                .map(|_| draw_forward_channel(params, &mut rng))
                .collect();
            let ambient = draw_ambient(params, params.slots, &mut rng);
            let leakage = draw_leakage_channel(params, &mut rng);
            let active = vec![true; tags];
            let bits: Vec<Vec<bool>> = (0..tags)
                .map(|_| (0..mapping.bits_per_symbol()).map(|_| rng.gen()).collect())
                .collect();
            let refl: Vec<_> = (0..tags)
                .map(|n| encode(n, &bits[n], &codebook).map(|e| e.reflection))
                .collect::<Result<_>>()?;
            let links: Vec<TagLink<'_>> = channels
                .iter()
                .zip(&refl)
                .map(|(f, r)| TagLink {
                    forward: f,
                    reflection: r,
                })
                .collect();
            let rx = ap_receive(&links, &ambient, &leakage, params, &mut rng)?;
            let cleaned = sic(&rx, &leakage, &ambient, params.residual_si_power, &mut rng)?;
            let eps = degeneracy_epsilon(params);
            let est = channels
                .iter()
                .map(|f| dcea_recover(&self_convolve(f), eps).map(Some))
                .collect::<Result<Vec<_>>>()?;
            let dyadic = assemble_dyadic(&est, &ambient, params)?;
            let config = DetectorConfig {
                iterations: params.iterations,
                vn_update,
            };
            writeln!(out, "trace: all {tags} tags active, vn_update={vn_update}")?;
            let mut det = MpaDetector::new(
                &cleaned,
                &dyadic,
                &codebook,
                &graph,
                &active,
                params.noise_power + params.residual_si_power,
                config,
            );
            let result = det.run(Some(out))?;
            for (n, d) in result.decisions.iter().enumerate() {
                if let Some(d) = d {
                    writeln!(
                        out,
                        "tag {} sent {} decided {}",
                        n + 1,
                        bits_string(&bits[n]),
                        bits_string(&d.bits)
                    )?;
                }
            }
        }
    }
    Ok(())
}

fn bits_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn bits_label(m: usize, bits: usize) -> String {
    bits_string(&crate::codec::codeword_bits(m, bits))
}

/// Startup line echoed to standard error.
pub fn banner(run: &RunConfig) -> String {
    let p = &run.scenario.fixed;
    let axes: Vec<String> = run
        .scenario
        .axes
        .iter()
        .map(|a| format!("{} x{}", a.variable.name(), a.values.len()))
        .collect();
    format!(
        "ambscatter {}: K={} N={} M={} L={} L_plus={} alpha={} trials={} seed={} sweep [{}]",
        run.scenario.name,
        p.slots,
        p.tags(),
        p.order,
        p.samples_per_slot,
        p.paths,
        p.alpha,
        run.scenario.trials,
        run.scenario.seed,
        axes.join(", ")
    )
}

/// Process exit code for an error: 1 for configuration problems, 2 for
/// failures during simulation.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => 1,
        _ => 2,
    }
}

fn load(cli: &Cli) -> Result<FileConfig> {
    match &cli.config {
        None => Ok(FileConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::config("config", path.display(), &format!("readable file ({e})"))
            })?;
            parse_config(&text)
        }
    }
}

/// Runs the command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let file = load(cli)?;
    let stdout = std::io::stdout();
    if let Some(kind) = &cli.debug {
        let kind: DumpKind = kind.parse()?;
        let vn = match &cli.vn_update {
            Some(s) => s
                .parse()
                .map_err(|_| Error::config("vn-update", s, "paper or sum_product"))?,
            None => file.vn_update.unwrap_or_default(),
        };
        let seed = cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
        return debug_dump(kind, &file.params, seed, vn, &mut stdout.lock());
    }
    if file.trace {
        return Err(Error::config(
            "trace",
            true,
            "message traces are only written by `--debug trace`",
        ));
    }
    let run = resolve(cli, file)?;
    eprintln!("{}", banner(&run));
    let records = run_sweep_with_progress(&run.scenario, |done, total, rec| {
        let coords: Vec<String> = rec
            .point
            .iter()
            .map(|(k, v)| format!("{k}={}", format_sig9(*v)))
            .collect();
        eprintln!("[{done}/{total}] {} {}", rec.variant, coords.join(" "));
    })?;
    emit_csv(&run.scenario.name, &records, &run.output)?;
    let side = sidecar_path(&run.output);
    std::fs::write(&side, effective_config(&run))
        .map_err(|e| Error::Io(format!("{}: {e}", side.display())))?;
    Ok(())
}
