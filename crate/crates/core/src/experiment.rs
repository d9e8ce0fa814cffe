//! Declarative experiments: a TOML file describes the system, the channel
//! and correlation sources, the interference and the sweep. Running it
//! produces a table with one row per grid point and statistic.

use std::collections::{BTreeMap, HashSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    estimate_correlation, generate_set, read_channel_set, BandPlan, ChannelCorrelation, ChannelRealization,
    SvParams,
};
use crate::code::{enumerate_error_vectors, Bit, CodeSpec, EnumerationOptions, WeightMeasure};
use crate::error::{Error, Result};
use crate::interference::{average_sir_db, calibrate_sir, phase_grid, tones_to_freq, Fading, FreqInterference, InterferenceSpec, ToneInterferer};
use crate::method1::{ber_realization, outage_ber};
use crate::method2::{
    average_ber_method2, average_ber_method2_shadowed, Abscissa, Interferer, OperatingPoint, QuadratureConfig,
};
use crate::modem::{Interleaver, Modulation, QamConstellation};
use crate::simulator::{genie_erase, simulate_point, Link, StopRule};
use crate::system::{erase_terms, ErrorTerm, System};

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum CodeChoice {
    Preset(String),
    Inline(CodeSpec),
}

impl CodeChoice {
    pub fn spec(&self) -> Result<CodeSpec> {
        match self {
            CodeChoice::Preset(name) => CodeSpec::preset(name),
            CodeChoice::Inline(spec) => Ok(spec.clone()),
        }
    }
}

/// `"mb-ofdm"`, `"identity"`, `{ block = [rows, cols] }` or `{ file = "perm.txt" }`.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum InterleaverChoice {
    Named(String),
    Block { block: [usize; 2] },
    File { file: PathBuf },
}

impl Default for InterleaverChoice {
    fn default() -> Self {
        InterleaverChoice::Named("mb-ofdm".into())
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default)]
    pub label: Option<String>,
    pub code: CodeChoice,
    pub modulation: Modulation,
    #[serde(default)]
    pub interleaver: InterleaverChoice,
    #[serde(default = "one")]
    pub es: f64,
}

fn one() -> f64 {
    1.0
}

impl SystemConfig {
    pub fn label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        let code = match &self.code {
            CodeChoice::Preset(name) => name.clone(),
            CodeChoice::Inline(spec) => spec.generators.join("/"),
        };
        let m = match self.modulation {
            Modulation::Qam4 => "4qam",
            Modulation::Qam16 => "16qam",
        };
        format!("{code} {m}")
    }

    /// Builds the chain over the data tones of `plan`; relative interleaver
    /// files are resolved against `base`.
    pub fn build(&self, plan: &BandPlan, base: &Path) -> Result<System> {
        let code = self.code.spec()?.build()?;
        let constellation = QamConstellation::new(self.modulation, self.es)?;
        let n = plan.n_data();
        let lc = n * constellation.bits_per_symbol();
        let interleaver = match &self.interleaver {
            InterleaverChoice::Named(name) => match name.as_str() {
                "mb-ofdm" => Interleaver::mb_ofdm(lc / plan.bands(), plan.bands())?,
                "identity" => Interleaver::identity(lc),
                other => return Err(Error::config(format!("unknown interleaver '{other}'"))),
            },
            InterleaverChoice::Block { block } => Interleaver::block(block[0], block[1])?,
            InterleaverChoice::File { file } => Interleaver::from_file(resolve(base, file))?,
        };
        System::new(code, interleaver, constellation, n)
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ChannelModel {
    Preset(String),
    Inline(SvParams),
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel::Preset("cm1".into())
    }
}

impl ChannelModel {
    pub fn params(&self) -> Result<SvParams> {
        let p = match self {
            ChannelModel::Preset(name) if name == "cm1" => SvParams::cm1(),
            ChannelModel::Preset(name) => return Err(Error::config(format!("unknown channel model '{name}'"))),
            ChannelModel::Inline(p) => p.clone(),
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnumerationConfig {
    pub w_max: usize,
    #[serde(default)]
    pub measure: WeightMeasure,
    #[serde(default = "default_length_cap")]
    pub length_cap: usize,
}

fn default_length_cap() -> usize {
    2048
}

impl EnumerationConfig {
    pub fn options(&self) -> EnumerationOptions {
        EnumerationOptions {
            w_max: self.w_max,
            measure: self.measure,
            length_cap: self.length_cap,
        }
    }
}

/// Either `file`, or `seed` together with `count`.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSource {
    pub file: Option<PathBuf>,
    pub seed: Option<u64>,
    pub count: Option<usize>,
}

impl ChannelSource {
    fn validate(&self, what: &str) -> Result<()> {
        match (&self.file, self.seed, self.count) {
            (Some(_), None, None) | (None, Some(_), Some(_)) => Ok(()),
            _ => Err(Error::config(format!("{what} needs either a file or a seed and a count"))),
        }
    }

    pub fn load(&self, model: &SvParams, plan: &BandPlan, base: &Path) -> Result<Vec<ChannelRealization>> {
        self.validate("channel source")?;
        let set = match (&self.file, self.seed, self.count) {
            (Some(f), _, _) => read_channel_set(resolve(base, f))?,
            (None, Some(seed), Some(count)) => generate_set(model, plan, seed, count)?,
            _ => unreachable!(),
        };
        if set.is_empty() {
            return Err(Error::config("channel set is empty"));
        }
        if let Some(r) = set.iter().find(|r| r.len() != plan.n_data()) {
            return Err(Error::LengthMismatch {
                expected: plan.n_data(),
                actual: r.len(),
            });
        }
        Ok(set)
    }
}

/// `file`, `from_channels = true`, or `seed` with `count`.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationSource {
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub from_channels: bool,
    pub seed: Option<u64>,
    pub count: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferenceConfig {
    #[serde(default)]
    pub tones: Vec<ToneInterferer>,
    #[serde(default)]
    pub all_bands: bool,
    /// Phases averaged over for non-faded tones (Method I and simulation).
    #[serde(default = "default_phases")]
    pub phases: usize,
}

fn default_phases() -> usize {
    32
}

impl Default for InterferenceConfig {
    fn default() -> Self {
        InterferenceConfig {
            tones: Vec::new(),
            all_bands: false,
            phases: default_phases(),
        }
    }
}

/// Sweep axes. `sir_db` and `positions` apply to the tones (positions to
/// the first tone); omitted axes keep the configured values.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub ebn0_db: Vec<f64>,
    pub sir_db: Option<Vec<f64>>,
    pub positions: Option<Vec<f64>>,
    pub erasures: Option<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "1", alias = "method1")]
    One,
    #[serde(rename = "2", alias = "method2")]
    Two,
    #[serde(rename = "sim")]
    Sim,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::One => "1",
            Method::Two => "2",
            Method::Sim => "sim",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "1" | "method1" => Ok(Method::One),
            "2" | "method2" => Ok(Method::Two),
            "sim" => Ok(Method::Sim),
            _ => Err(Error::config(format!("unknown method '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

impl Format {
    pub fn parse(s: &str) -> Result<Format> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" | "json" => Ok(Format::Jsonl),
            _ => Err(Error::config(format!("unknown format '{s}'"))),
        }
    }

    /// Guesses from the extension; CSV unless it ends in `.jsonl`/`.json`.
    pub fn from_path(p: &Path) -> Format {
        match p.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => Format::Jsonl,
            _ => Format::Csv,
        }
    }
}

/// `E_b` reference: the ensemble mean received energy, or unit channel power.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnrReference {
    #[default]
    Ensemble,
    Normalized,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSettings {
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    /// Fix `c` at this fraction of the pole instead of the saddle point.
    pub pole_fraction: Option<f64>,
    #[serde(default)]
    pub verify: bool,
}

fn default_nodes() -> usize {
    64
}
fn default_max_nodes() -> usize {
    1 << 14
}
fn default_rel_tol() -> f64 {
    1e-9
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings {
            nodes: default_nodes(),
            max_nodes: default_max_nodes(),
            rel_tol: default_rel_tol(),
            pole_fraction: None,
            verify: false,
        }
    }
}

impl QuadratureSettings {
    pub fn config(&self) -> QuadratureConfig {
        QuadratureConfig {
            nodes: self.nodes,
            max_nodes: self.max_nodes,
            rel_tol: self.rel_tol,
            abscissa: self.pole_fraction.map_or(Abscissa::Saddle, Abscissa::PoleFraction),
            verify: self.verify,
            ..QuadratureConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_min_errors")]
    pub min_errors: u64,
    #[serde(default = "default_max_packets")]
    pub max_packets: u64,
    #[serde(default)]
    pub uncoded: bool,
}

fn default_min_errors() -> u64 {
    StopRule::default().min_errors
}
fn default_max_packets() -> u64 {
    StopRule::default().max_packets
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            seed: 0,
            min_errors: default_min_errors(),
            max_packets: default_max_packets(),
            uncoded: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    #[serde(default = "default_outage")]
    pub outage_percent: f64,
    /// Also emit one row per channel realization.
    #[serde(default)]
    pub per_channel: bool,
    /// Average Method I over the phase grid; otherwise one row set per phase.
    #[serde(default = "yes")]
    pub average_phases: bool,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    /// Skip grid points already present in `output`.
    #[serde(default)]
    pub resume: bool,
    /// Seed of the random reference codeword (16-QAM only).
    #[serde(default)]
    pub codeword_seed: u64,
    #[serde(default)]
    pub snr_reference: SnrReference,
    /// Average Method II over the lognormal shadowing.
    #[serde(default = "yes")]
    pub shadowing: bool,
    #[serde(default = "default_shadow_nodes")]
    pub shadow_nodes: usize,
    #[serde(default)]
    pub quadrature: QuadratureSettings,
    #[serde(default)]
    pub sim: SimSettings,
}

fn default_outage() -> f64 {
    10.0
}
fn yes() -> bool {
    true
}
fn default_shadow_nodes() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: OneOrMany<SystemConfig>,
    #[serde(default = "BandPlan::mb_ofdm")]
    band_plan: BandPlan,
    #[serde(default)]
    channel_model: ChannelModel,
    enumeration: EnumerationConfig,
    channel: Option<ChannelSource>,
    correlation: Option<CorrelationSource>,
    #[serde(default)]
    interference: InterferenceConfig,
    sweep: Sweep,
    run: RunConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub systems: Vec<SystemConfig>,
    pub band_plan: BandPlan,
    pub channel_model: ChannelModel,
    pub enumeration: EnumerationConfig,
    pub channel: Option<ChannelSource>,
    pub correlation: Option<CorrelationSource>,
    pub interference: InterferenceConfig,
    pub sweep: Sweep,
    pub run: RunConfig,
    /// Directory that relative paths are resolved against.
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        let cfg = ExperimentConfig {
            systems: raw.system.into_vec(),
            band_plan: raw.band_plan,
            channel_model: raw.channel_model,
            enumeration: raw.enumeration,
            channel: raw.channel,
            correlation: raw.correlation,
            interference: raw.interference,
            sweep: raw.sweep,
            run: raw.run,
            base_dir: base_dir.into(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.systems.is_empty() {
            return Err(Error::config("no system configured"));
        }
        self.band_plan.validate()?;
        self.channel_model.params()?;
        let s = &self.sweep;
        if s.ebn0_db.is_empty() {
            return Err(Error::config("sweep axis ebn0_db is empty"));
        }
        for (name, empty) in [
            ("sir_db", s.sir_db.as_ref().is_some_and(Vec::is_empty)),
            ("positions", s.positions.as_ref().is_some_and(Vec::is_empty)),
            ("erasures", s.erasures.as_ref().is_some_and(Vec::is_empty)),
        ] {
            if empty {
                return Err(Error::config(format!("sweep axis {name} is empty")));
            }
        }
        let tones = &self.interference.tones;
        if tones.is_empty() && (s.sir_db.is_some() || s.positions.is_some()) {
            return Err(Error::config("SIR or position sweep without interferer tones"));
        }
        if self.interference.phases == 0 {
            return Err(Error::config("at least one interferer phase is required"));
        }
        let fading = InterferenceSpec {
            tones: tones.clone(),
            ..InterferenceSpec::default()
        }
        .fading()?;
        let r = &self.run;
        if !(0.0..100.0).contains(&r.outage_percent) {
            return Err(Error::config("outage_percent must be in [0, 100)"));
        }
        match r.method {
            Method::One | Method::Sim => {
                let src = self
                    .channel
                    .as_ref()
                    .ok_or_else(|| Error::config("this method needs a [channel] source"))?;
                src.validate("channel source")?;
                if r.method == Method::One && fading == Fading::Rayleigh {
                    return Err(Error::config(
                        "Method I evaluates fixed interference; use method 2 or sim for Rayleigh tones",
                    ));
                }
            }
            Method::Two => {
                let c = self
                    .correlation
                    .as_ref()
                    .ok_or_else(|| Error::config("method 2 needs a [correlation] source"))?;
                let ok = match (&c.file, c.from_channels, c.seed, c.count) {
                    (Some(_), false, None, None) | (None, false, Some(_), Some(_)) => true,
                    (None, true, None, None) => self.channel.is_some(),
                    _ => false,
                };
                if !ok {
                    return Err(Error::config(
                        "correlation source needs exactly one of file, from_channels (with [channel]) or seed and count",
                    ));
                }
                if r.shadowing && r.shadow_nodes == 0 {
                    return Err(Error::config("shadow_nodes must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn output_format(&self) -> Format {
        self.run
            .format
            .or_else(|| self.run.output.as_deref().map(Format::from_path))
            .unwrap_or_default()
    }

    pub fn output_path(&self) -> Option<PathBuf> {
        self.run.output.as_ref().map(|p| resolve(&self.base_dir, p))
    }

    fn correlation_matrix(&self, model: &SvParams, channels: Option<&[ChannelRealization]>) -> Result<ChannelCorrelation> {
        let c = self
            .correlation
            .as_ref()
            .ok_or_else(|| Error::config("method 2 needs a [correlation] source"))?;
        let sigma = if let Some(f) = &c.file {
            ChannelCorrelation::read(resolve(&self.base_dir, f))?
        } else if c.from_channels {
            estimate_correlation(channels.ok_or_else(|| Error::config("from_channels needs a [channel] source"))?)?
        } else {
            let (Some(seed), Some(count)) = (c.seed, c.count) else {
                return Err(Error::config("correlation source needs a seed and a count"));
            };
            estimate_correlation(&generate_set(model, &self.band_plan, seed, count)?)?
        };
        if sigma.dim() != self.band_plan.n_data() {
            return Err(Error::LengthMismatch {
                expected: self.band_plan.n_data(),
                actual: sigma.dim(),
            });
        }
        Ok(sigma)
    }
}

/// One output line. `statistic` is `average`, `outage` or `channel`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub system: String,
    pub method: String,
    pub statistic: String,
    pub channel: Option<u64>,
    pub ebn0_db: f64,
    /// `None` when there is no interference.
    pub sir_db: Option<f64>,
    pub position: Option<f64>,
    pub phase: Option<f64>,
    pub erasures: usize,
    pub ber: f64,
    pub errors: Option<u64>,
    pub bits: Option<u64>,
    pub packets: Option<u64>,
    pub flagged: Option<bool>,
}

type PointKey = (String, String, u64, Option<u64>, Option<u64>, Option<u64>, usize);

impl ResultRow {
    fn new(system: &str, method: Method, statistic: &str, point: &PointInfo) -> Self {
        ResultRow {
            system: system.to_string(),
            method: method.name().to_string(),
            statistic: statistic.to_string(),
            channel: None,
            ebn0_db: point.ebn0_db,
            sir_db: point.sir_db,
            position: point.position,
            phase: None,
            erasures: point.erasures,
            ber: 0.0,
            errors: None,
            bits: None,
            packets: None,
            flagged: None,
        }
    }

    /// Identity of the grid point the row belongs to.
    fn point_key(&self) -> PointKey {
        (
            self.system.clone(),
            self.method.clone(),
            self.ebn0_db.to_bits(),
            self.sir_db.map(f64::to_bits),
            self.position.map(f64::to_bits),
            self.phase.map(f64::to_bits),
            self.erasures,
        )
    }
}

pub const CSV_HEADER: [&str; 14] = [
    "system", "method", "statistic", "channel", "ebn0_db", "sir_db", "position", "phase", "erasures", "ber",
    "errors", "bits", "packets", "flagged",
];

/// Floats are written with 17 significant digits.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt<T>(x: Option<T>, f: impl Fn(T) -> String) -> String {
    x.map(f).unwrap_or_default()
}

fn csv_record(r: &ResultRow) -> [String; 14] {
    [
        r.system.clone(),
        r.method.clone(),
        r.statistic.clone(),
        opt(r.channel, |c| c.to_string()),
        fmt_f64(r.ebn0_db),
        opt(r.sir_db, fmt_f64),
        opt(r.position, fmt_f64),
        opt(r.phase, fmt_f64),
        r.erasures.to_string(),
        fmt_f64(r.ber),
        opt(r.errors, |c| c.to_string()),
        opt(r.bits, |c| c.to_string()),
        opt(r.packets, |c| c.to_string()),
        opt(r.flagged, |c| c.to_string()),
    ]
}

fn parse_csv_record(rec: &csv::StringRecord) -> Result<ResultRow> {
    if rec.len() != CSV_HEADER.len() {
        return Err(Error::Parse(format!("expected {} columns, got {}", CSV_HEADER.len(), rec.len())));
    }
    fn req<T: std::str::FromStr>(s: &str, col: &str) -> Result<T> {
        s.parse().map_err(|_| Error::Parse(format!("bad value '{s}' in column {col}")))
    }
    fn maybe<T: std::str::FromStr>(s: &str, col: &str) -> Result<Option<T>> {
        if s.is_empty() {
            Ok(None)
        } else {
            req(s, col).map(Some)
        }
    }
    Ok(ResultRow {
        system: rec[0].to_string(),
        method: rec[1].to_string(),
        statistic: rec[2].to_string(),
        channel: maybe(&rec[3], "channel")?,
        ebn0_db: req(&rec[4], "ebn0_db")?,
        sir_db: maybe(&rec[5], "sir_db")?,
        position: maybe(&rec[6], "position")?,
        phase: maybe(&rec[7], "phase")?,
        erasures: req(&rec[8], "erasures")?,
        ber: req(&rec[9], "ber")?,
        errors: maybe(&rec[10], "errors")?,
        bits: maybe(&rec[11], "bits")?,
        packets: maybe(&rec[12], "packets")?,
        flagged: maybe(&rec[13], "flagged")?,
    })
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Serializes rows, with a header line for CSV.
pub fn format_rows(rows: &[ResultRow], format: Format, header: bool) -> Result<String> {
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            if header {
                w.write_record(CSV_HEADER).map_err(csv_error)?;
            }
            for r in rows {
                w.write_record(csv_record(r)).map_err(csv_error)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
        }
        Format::Jsonl => {
            let mut out = String::new();
            for r in rows {
                out.push_str(&serde_json::to_string(r).map_err(|e| Error::Parse(e.to_string()))?);
                out.push('\n');
            }
            Ok(out)
        }
    }
}

pub fn parse_rows(text: &str, format: Format) -> Result<Vec<ResultRow>> {
    match format {
        Format::Csv => {
            let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
            let headers = rd.headers().map_err(csv_error)?.clone();
            if headers.iter().ne(CSV_HEADER.iter().copied()) {
                return Err(Error::Parse("unexpected CSV header".into()));
            }
            rd.records().map(|r| parse_csv_record(&r.map_err(csv_error)?)).collect()
        }
        Format::Jsonl => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::Parse(e.to_string())))
            .collect(),
    }
}

/// Writes a non-empty table to `path`.
pub fn export_results(rows: &[ResultRow], path: impl AsRef<Path>, format: Format) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::invalid("nothing to export"));
    }
    let text = format_rows(rows, format, true)?;
    std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
}

pub fn import_results(path: impl AsRef<Path>, format: Format) -> Result<Vec<ResultRow>> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    parse_rows(&text, format)
}

/// Appends rows to the output file as each grid point completes.
struct Sink {
    path: PathBuf,
    format: Format,
    header_pending: bool,
}

impl Sink {
    fn write(&mut self, rows: &[ResultRow]) -> Result<()> {
        let text = format_rows(rows, self.format, self.header_pending)?;
        self.header_pending = false;
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(&self.path, e))
    }
}

struct Recorder {
    sink: Option<Sink>,
    done: HashSet<PointKey>,
    rows: Vec<ResultRow>,
}

impl Recorder {
    fn is_done(&self, key: &PointKey) -> bool {
        self.done.contains(key)
    }

    fn emit(&mut self, rows: Vec<ResultRow>) -> Result<()> {
        if let Some(s) = self.sink.as_mut() {
            s.write(&rows)?;
        }
        self.rows.extend(rows);
        Ok(())
    }
}

/// Sweep coordinates of one grid point.
#[derive(Clone, Debug)]
struct Point {
    ebn0_db: f64,
    sir_db: Option<f64>,
    position: Option<f64>,
    erasures: usize,
}

/// A grid point resolved against the system: noise, interference and erasures.
struct PointInfo {
    ebn0_db: f64,
    sir_db: Option<f64>,
    position: Option<f64>,
    erasures: usize,
    n0: f64,
    spec: Option<InterferenceSpec>,
    freq: FreqInterference,
    erased: Vec<usize>,
}

impl PointInfo {
    fn key(&self, system: &str, method: Method, phase: Option<f64>) -> PointKey {
        let mut r = ResultRow::new(system, method, "", self);
        r.phase = phase;
        r.point_key()
    }

    /// Interference at each grid phase, offsetting every tone's phase.
    fn phases(&self, plan: &BandPlan, n_phases: usize) -> Result<Vec<(f64, FreqInterference)>> {
        match &self.spec {
            Some(spec) if self.freq.fading == Fading::None => phase_grid(n_phases)
                .into_iter()
                .map(|ph| {
                    let mut s = spec.clone();
                    s.tones.iter_mut().for_each(|t| t.phase += ph);
                    Ok((ph, tones_to_freq(&s, plan)?))
                })
                .collect(),
            _ => Ok(vec![(0.0, self.freq.clone())]),
        }
    }
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    model: SvParams,
    /// Mean channel power entering `E_b` and the SIR.
    channel_power: f64,
}

impl Context<'_> {
    fn grid(&self) -> Vec<Point> {
        let s = &self.cfg.sweep;
        let sirs: Vec<Option<f64>> = s.sir_db.as_ref().map_or(vec![None], |v| v.iter().map(|&x| Some(x)).collect());
        let positions: Vec<Option<f64>> =
            s.positions.as_ref().map_or(vec![None], |v| v.iter().map(|&x| Some(x)).collect());
        let erasures = s.erasures.clone().unwrap_or_else(|| vec![0]);
        let mut out = Vec::new();
        for &e in &erasures {
            for &sir in &sirs {
                for &pos in &positions {
                    for &ebn0 in &s.ebn0_db {
                        out.push(Point {
                            ebn0_db: ebn0,
                            sir_db: sir,
                            position: pos,
                            erasures: e,
                        });
                    }
                }
            }
        }
        out
    }

    fn resolve(&self, sys: &System, p: &Point) -> Result<PointInfo> {
        let cfg = self.cfg;
        let plan = &cfg.band_plan;
        let n0 = sys.n0_for(p.ebn0_db, self.channel_power);
        let tones = &cfg.interference.tones;
        let active = !tones.is_empty() && p.sir_db != Some(f64::INFINITY);
        let (spec, sir_db, position) = if active {
            let mut spec = InterferenceSpec {
                tones: tones.clone(),
                target_sir: p.sir_db,
                all_bands: cfg.interference.all_bands,
            };
            if let Some(pos) = p.position {
                spec = spec.with_position(0, pos);
            }
            let signal = sys.es() * self.channel_power;
            if spec.target_sir.is_some() {
                spec = calibrate_sir(&spec, plan, signal)?;
            }
            let sir = average_sir_db(&spec, plan, signal);
            let pos = spec.tones[0].position;
            (Some(spec), Some(sir), Some(pos))
        } else {
            (None, None, p.position)
        };
        let freq = match &spec {
            Some(s) => tones_to_freq(s, plan)?,
            None => FreqInterference::zero(plan.n_data()),
        };
        let erased = genie_erase(&freq.mean_powers(), p.erasures)?;
        Ok(PointInfo {
            ebn0_db: p.ebn0_db,
            // Report the swept value itself when one was given.
            sir_db: p.sir_db.filter(|s| s.is_finite() && active).or(sir_db),
            position,
            erasures: p.erasures,
            n0,
            spec,
            freq,
            erased,
        })
    }
}

/// Reference codeword: all zero for 4-QAM, seeded random otherwise.
pub fn reference_codeword(sys: &System, seed: u64) -> Result<Vec<Bit>> {
    if sys.constellation.modulation() == Modulation::Qam4 {
        return Ok(vec![0; sys.codeword_len()]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let payload: Vec<Bit> = (0..sys.payload_len()).map(|_| rng.random::<bool>() as Bit).collect();
    sys.encode(&payload)
}

/// Mixes the run seed with grid coordinates into a per-point seed.
pub fn point_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut x = seed;
    for &p in parts {
        x = splitmix(x ^ splitmix(p.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    x
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs every system over the sweep grid and returns the table. Rows
/// already in the output file are kept and their points skipped when
/// `resume` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let model = cfg.channel_model.params()?;
    let channel_power = match cfg.run.snr_reference {
        SnrReference::Ensemble => model.mean_shadow_power(),
        SnrReference::Normalized => 1.0,
    };
    let ctx = Context {
        cfg,
        model,
        channel_power,
    };

    let format = cfg.output_format();
    let mut rec = Recorder {
        sink: None,
        done: HashSet::new(),
        rows: Vec::new(),
    };
    if let Some(path) = cfg.output_path() {
        let existing = if cfg.run.resume && path.exists() {
            import_results(&path, format)?
        } else {
            if path.exists() {
                std::fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
            }
            Vec::new()
        };
        rec.done = existing.iter().map(ResultRow::point_key).collect();
        rec.sink = Some(Sink {
            path,
            format,
            header_pending: existing.is_empty(),
        });
        rec.rows = existing;
    }

    let channels = match (&cfg.channel, cfg.run.method) {
        (Some(src), Method::One | Method::Sim) => Some(src.load(&ctx.model, &cfg.band_plan, &cfg.base_dir)?),
        (Some(src), Method::Two) if cfg.correlation.as_ref().is_some_and(|c| c.from_channels) => {
            Some(src.load(&ctx.model, &cfg.band_plan, &cfg.base_dir)?)
        }
        _ => None,
    };
    let sigma = match cfg.run.method {
        Method::Two => Some(cfg.correlation_matrix(&ctx.model, channels.as_deref())?),
        _ => None,
    };

    for sc in &cfg.systems {
        let sys = sc.build(&cfg.band_plan, &cfg.base_dir)?;
        let label = sc.label();
        let points = ctx
            .grid()
            .iter()
            .map(|p| ctx.resolve(&sys, p))
            .collect::<Result<Vec<_>>>()?;
        match cfg.run.method {
            Method::One => run_method1(&ctx, &sys, &label, &points, channels.as_deref().unwrap_or_default(), &mut rec)?,
            Method::Two => run_method2(&ctx, &sys, &label, &points, sigma.as_ref().expect("loaded above"), &mut rec)?,
            Method::Sim => run_sim(&ctx, &sys, &label, &points, channels.as_deref().unwrap_or_default(), &mut rec)?,
        }
    }
    Ok(rec.rows)
}

fn error_terms(ctx: &Context<'_>, sys: &System) -> Result<Vec<Vec<ErrorTerm>>> {
    let set = enumerate_error_vectors(&sys.code, ctx.cfg.enumeration.options())?;
    let c = reference_codeword(sys, ctx.cfg.run.codeword_seed)?;
    sys.error_terms(&set, &c)
}

fn run_method1(
    ctx: &Context<'_>,
    sys: &System,
    label: &str,
    points: &[PointInfo],
    channels: &[ChannelRealization],
    rec: &mut Recorder,
) -> Result<()> {
    let run = &ctx.cfg.run;
    let method = Method::One;
    let average = run.average_phases;
    let mut terms = None;
    for p in points {
        let key_phase = |ph: f64| (!average && p.spec.is_some()).then_some(ph);
        let phases = p.phases(&ctx.cfg.band_plan, ctx.cfg.interference.phases)?;
        if phases.iter().all(|(ph, _)| rec.is_done(&p.key(label, method, key_phase(*ph)))) {
            continue;
        }
        let terms = match &terms {
            Some(t) => t,
            None => terms.insert(error_terms(ctx, sys)?),
        };
        let erased = erase_terms(terms, &p.erased);
        // values[phase][channel]
        let values: Vec<Vec<f64>> = phases
            .iter()
            .map(|(_, fi)| {
                channels
                    .par_iter()
                    .map(|ch| ber_realization(&erased, &ch.h, &fi.j, p.n0, false).value)
                    .collect()
            })
            .collect();
        let mut rows = Vec::new();
        let mut push_stats = |per_channel: Vec<f64>, outage: f64, phase: Option<f64>| {
            let base = ResultRow {
                phase,
                ..ResultRow::new(label, method, "average", p)
            };
            rows.push(ResultRow {
                ber: per_channel.iter().sum::<f64>() / per_channel.len() as f64,
                ..base.clone()
            });
            rows.push(ResultRow {
                statistic: "outage".into(),
                ber: outage,
                ..base.clone()
            });
            if run.per_channel {
                for (ch, v) in channels.iter().zip(per_channel) {
                    rows.push(ResultRow {
                        statistic: "channel".into(),
                        channel: Some(ch.index),
                        ber: v,
                        ..base.clone()
                    });
                }
            }
        };
        if average || p.spec.is_none() {
            let n_ph = values.len() as f64;
            let per_channel: Vec<f64> = (0..channels.len())
                .map(|c| values.iter().map(|v| v[c]).sum::<f64>() / n_ph)
                .collect();
            let mut outage = 0.0;
            for v in &values {
                outage += outage_ber(v, run.outage_percent)?.outage_ber;
            }
            push_stats(per_channel, outage / n_ph, None);
        } else {
            for ((ph, _), v) in phases.iter().zip(values) {
                let outage = outage_ber(&v, run.outage_percent)?.outage_ber;
                push_stats(v, outage, Some(*ph));
            }
        }
        rec.emit(rows)?;
    }
    Ok(())
}

fn run_method2(
    ctx: &Context<'_>,
    sys: &System,
    label: &str,
    points: &[PointInfo],
    sigma: &ChannelCorrelation,
    rec: &mut Recorder,
) -> Result<()> {
    let run = &ctx.cfg.run;
    let quad = run.quadrature.config();
    // Points sharing an erasure set share the eigen-decompositions.
    let mut groups: BTreeMap<Vec<usize>, Vec<&PointInfo>> = BTreeMap::new();
    for p in points {
        if !rec.is_done(&p.key(label, Method::Two, None)) {
            groups.entry(p.erased.clone()).or_default().push(p);
        }
    }
    if groups.is_empty() {
        return Ok(());
    }
    let terms = error_terms(ctx, sys)?;
    for (erased, pts) in groups {
        let terms = erase_terms(&terms, &erased);
        let ops: Vec<OperatingPoint> = pts
            .iter()
            .map(|p| OperatingPoint {
                n0: p.n0,
                interferer: match (&p.spec, p.freq.fading) {
                    (None, _) => Interferer::None,
                    (Some(_), Fading::None) => Interferer::Fixed(p.freq.j.clone()),
                    (Some(_), Fading::Rayleigh) => Interferer::Rayleigh {
                        leakage: p.freq.leakage.clone(),
                        mean_square: p.freq.mean_square.clone(),
                    },
                },
            })
            .collect();
        let bers = if run.shadowing {
            average_ber_method2_shadowed(&terms, sigma, &ops, ctx.model.shadow_std, run.shadow_nodes, &quad)?
        } else {
            average_ber_method2(&terms, sigma, &ops, &quad)?
        };
        let rows = pts
            .iter()
            .zip(bers)
            .map(|(p, ber)| ResultRow {
                ber,
                ..ResultRow::new(label, Method::Two, "average", p)
            })
            .collect();
        rec.emit(rows)?;
    }
    Ok(())
}

fn run_sim(
    ctx: &Context<'_>,
    sys: &System,
    label: &str,
    points: &[PointInfo],
    channels: &[ChannelRealization],
    rec: &mut Recorder,
) -> Result<()> {
    let run = &ctx.cfg.run;
    let method = Method::Sim;
    for (pi, p) in points.iter().enumerate() {
        if rec.is_done(&p.key(label, method, None)) {
            continue;
        }
        let phases = p.phases(&ctx.cfg.band_plan, ctx.cfg.interference.phases)?;
        let stop = StopRule {
            min_errors: run.sim.min_errors.div_ceil(phases.len() as u64),
            max_packets: run.sim.max_packets,
        };
        // Channels run in parallel; every packet seed is fixed by its indices.
        let counts = channels
            .par_iter()
            .enumerate()
            .map(|(ci, ch)| {
                let (mut errors, mut bits, mut packets, mut flagged) = (0, 0, 0, false);
                for (k, (_, fi)) in phases.iter().enumerate() {
                    let link = Link {
                        system: sys,
                        h: &ch.h,
                        interference: fi,
                        n0: p.n0,
                        erased: &p.erased,
                        uncoded: run.sim.uncoded,
                    };
                    let seed = point_seed(run.sim.seed, &[pi as u64, ci as u64, k as u64]);
                    let r = simulate_point(&link, seed, stop)?;
                    errors += r.errors;
                    bits += r.bits;
                    packets += r.packets;
                    flagged |= r.flagged;
                }
                Ok((errors, bits, packets, flagged))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut per_channel = Vec::with_capacity(channels.len());
        let mut rows = Vec::new();
        for (ch, (errors, bits, packets, flagged)) in channels.iter().zip(counts) {
            let ber = errors as f64 / bits as f64;
            per_channel.push(ber);
            if run.per_channel {
                rows.push(ResultRow {
                    statistic: "channel".into(),
                    channel: Some(ch.index),
                    ber,
                    errors: Some(errors),
                    bits: Some(bits),
                    packets: Some(packets),
                    flagged: Some(flagged),
                    ..ResultRow::new(label, method, "channel", p)
                });
            }
        }
        let mut head = vec![
            ResultRow {
                ber: per_channel.iter().sum::<f64>() / per_channel.len() as f64,
                ..ResultRow::new(label, method, "average", p)
            },
            ResultRow {
                ber: outage_ber(&per_channel, run.outage_percent)?.outage_ber,
                ..ResultRow::new(label, method, "outage", p)
            },
        ];
        head.extend(rows);
        rec.emit(head)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
[system]
code = "mb-ofdm-1/2"
modulation = "4qam"

[enumeration]
w_max = 11

[channel]
seed = 3
count = 4

[sweep]
ebn0_db = [10.0, 14.0]

[run]
method = "1"
"#;

    #[test]
    fn parses_and_runs_small_config() {
        let cfg = ExperimentConfig::from_toml(SMALL, ".").unwrap();
        assert_eq!(cfg.systems.len(), 1);
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.sir_db.is_none()));
        assert!(rows[0].ber > rows[2].ber);
    }

    #[test]
    fn empty_axis_is_rejected() {
        let text = SMALL.replace("ebn0_db = [10.0, 14.0]", "ebn0_db = []");
        assert!(matches!(ExperimentConfig::from_toml(&text, "."), Err(Error::Config(_))));
        let text = SMALL.replace("ebn0_db = [10.0, 14.0]", "ebn0_db = [1.0]\nerasures = []");
        assert!(ExperimentConfig::from_toml(&text, ".").is_err());
    }

    #[test]
    fn method2_requires_correlation() {
        let text = SMALL.replace(r#"method = "1""#, r#"method = "2""#);
        assert!(ExperimentConfig::from_toml(&text, ".").is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let point = PointInfo {
            ebn0_db: 17.0,
            sir_db: Some(21.0),
            position: Some(52.5),
            erasures: 1,
            n0: 0.1,
            spec: None,
            freq: FreqInterference::zero(1),
            erased: vec![],
        };
        let mut row = ResultRow::new("a, b", Method::Sim, "channel", &point);
        row.ber = 1.0 / 3.0;
        row.errors = Some(7);
        row.flagged = Some(true);
        for f in [Format::Csv, Format::Jsonl] {
            let text = format_rows(std::slice::from_ref(&row), f, true).unwrap();
            assert_eq!(parse_rows(&text, f).unwrap(), vec![row.clone()]);
        }
    }

    #[test]
    fn point_seeds_differ() {
        assert_ne!(point_seed(1, &[0, 0]), point_seed(1, &[0, 1]));
        assert_ne!(point_seed(1, &[0, 1]), point_seed(1, &[1, 0]));
        assert_eq!(point_seed(5, &[2, 3]), point_seed(5, &[2, 3]));
    }
}
