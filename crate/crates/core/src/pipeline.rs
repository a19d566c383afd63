//! File-level commands: feature extraction, calibration, synthetic
//! instances, report aggregation and hyperparameter sweeps.
//!
//! Every output is written atomically (temporary file, then rename) and is a
//! deterministic function of the inputs and configuration.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibrator::{
    fit_ets, fit_global_ts_in, read_labels, read_logits_csv, scale_logits, temperatures,
    train_wats, write_labels, write_logits_csv, CalibratorParams, EtsModel, LogitSet, Split,
    TrainConfig, TS_LOWER, TS_UPPER,
};
use crate::error::{Result, WatsError};
use crate::exec::Exec;
use crate::graph::{load_edge_list, spectral_radius_upper_bound, sym_normalized_laplacian, Graph};
use crate::metrics::{CalibrationReport, DEFAULT_DEGREE_EDGES};
use crate::synth::{generate, SyntheticInstance, SyntheticSpec};
use crate::wavelet::{CoeffScheme, WaveletConfig, WaveletFeatures, WaveletTerms};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Wats,
    Ts,
    Ets,
    Uncalibrated,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Wats => "WATS",
            Method::Ts => "TS",
            Method::Ets => "ETS",
            Method::Uncalibrated => "Uncalibrated",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = WatsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wats" => Ok(Method::Wats),
            "ts" => Ok(Method::Ts),
            "ets" => Ok(Method::Ets),
            "uncalibrated" | "none" => Ok(Method::Uncalibrated),
            other => Err(WatsError::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveletSettings {
    pub k: usize,
    pub s: f64,
    pub scheme: CoeffScheme,
    pub lambda_max: f64,
    /// Replace `lambda_max` with a power-iteration bound.
    pub auto_lambda_max: bool,
}

impl Default for WaveletSettings {
    fn default() -> Self {
        WaveletSettings {
            k: 3,
            s: 0.8,
            scheme: CoeffScheme::ExpIndex,
            lambda_max: 2.0,
            auto_lambda_max: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpSettings {
    pub hidden_dim: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for MlpSettings {
    fn default() -> Self {
        MlpSettings {
            hidden_dim: 32,
            dropout: 0.4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub edges: Option<PathBuf>,
    pub num_nodes: Option<usize>,
    pub logits: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub wavelet: WaveletSettings,
    pub train: TrainConfig,
    pub mlp: MlpSettings,
    pub num_bins: usize,
    pub method: Method,
    pub degree_edges: Vec<usize>,
    /// Search interval for global temperature scaling.
    pub ts_interval: (f64, f64),
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            edges: None,
            num_nodes: None,
            logits: None,
            labels: None,
            split: None,
            output_dir: PathBuf::from("out"),
            wavelet: WaveletSettings::default(),
            train: TrainConfig::default(),
            mlp: MlpSettings::default(),
            num_bins: 10,
            method: Method::Wats,
            degree_edges: DEFAULT_DEGREE_EDGES.to_vec(),
            ts_interval: (TS_LOWER, TS_UPPER),
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| WatsError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| WatsError::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    fn require(path: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
        let p = path
            .clone()
            .ok_or_else(|| WatsError::InvalidInput(format!("missing required input: {what}")))?;
        if !p.exists() {
            return Err(WatsError::io(
                &p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
            ));
        }
        Ok(p)
    }

    pub fn wavelet_config(&self, g: &Graph) -> WaveletConfig {
        let lambda_max = if self.wavelet.auto_lambda_max {
            spectral_radius_upper_bound(&sym_normalized_laplacian(g)).value
        } else {
            self.wavelet.lambda_max
        };
        WaveletConfig {
            order_k: self.wavelet.k,
            scale_s: self.wavelet.s,
            coeff_scheme: self.wavelet.scheme,
            lambda_max,
            ..Default::default()
        }
    }
}

/// Write `bytes` to `path` via a sibling temporary file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| WatsError::io(dir, e))?;
    }
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| WatsError::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| WatsError::io(&tmp, e))?;
        f.sync_all().map_err(|e| WatsError::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| WatsError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| WatsError::io(path, e))
}

pub fn read_graph(path: &Path, num_nodes: Option<usize>) -> Result<Graph> {
    load_edge_list(open(path)?, num_nodes).map_err(|e| e.in_file(path))
}

pub fn read_split(path: &Path) -> Result<Split> {
    let text = fs::read_to_string(path).map_err(|e| WatsError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| WatsError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

#[derive(Debug, Clone)]
pub struct FeaturesOutcome {
    pub features: WaveletFeatures,
    pub config: WaveletConfig,
    pub num_edges: usize,
}

/// Compute wavelet features for the configured graph and write them as CSV.
pub fn run_features(cfg: &RunConfig, output: &Path, exec: Exec) -> Result<FeaturesOutcome> {
    let edges = RunConfig::require(&cfg.edges, "edges")?;
    let g = read_graph(&edges, cfg.num_nodes)?;
    let wcfg = cfg.wavelet_config(&g);
    let features = crate::wavelet::wavelet_features_with(&g, &wcfg, exec)?;
    let mut buf = Vec::new();
    features
        .write_csv(&mut buf)
        .map_err(|e| WatsError::io(output, e))?;
    write_atomic(output, &buf)?;
    Ok(FeaturesOutcome {
        features,
        config: wcfg,
        num_edges: g.num_edges(),
    })
}

/// Loaded inputs for calibration.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub graph: Graph,
    pub data: LogitSet,
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let edges = RunConfig::require(&cfg.edges, "edges")?;
    let logits_path = RunConfig::require(&cfg.logits, "logits")?;
    let labels_path = RunConfig::require(&cfg.labels, "labels")?;
    let split_path = RunConfig::require(&cfg.split, "split")?;

    let logits = read_logits_csv(open(&logits_path)?).map_err(|e| e.in_file(&logits_path))?;
    let labels = read_labels(open(&labels_path)?).map_err(|e| e.in_file(&labels_path))?;
    let split = read_split(&split_path)?;
    let n = cfg.num_nodes.unwrap_or(logits.len());
    let graph = read_graph(&edges, Some(n))?;
    if graph.num_nodes() != logits.len() {
        return Err(WatsError::DimensionMismatch {
            expected: graph.num_nodes(),
            actual: logits.len(),
        });
    }
    let data = LogitSet::new(logits, labels, split)?;
    Ok(Inputs { graph, data })
}

/// Serialized form of a trained node-wise calibrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WatsModelFile {
    pub hidden_dim: usize,
    pub dropout: f64,
    /// `hidden_dim × (k + 1)`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub wavelet: WaveletSpecFile,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletSpecFile {
    pub k: usize,
    pub s: f64,
    pub scheme: CoeffScheme,
}

impl WatsModelFile {
    pub fn new(params: &CalibratorParams, w: &WaveletConfig) -> Self {
        WatsModelFile {
            hidden_dim: params.hidden_dim,
            dropout: params.dropout,
            w1: params.w1.clone(),
            b1: params.b1.clone(),
            w2: params.w2.clone(),
            b2: params.b2,
            wavelet: WaveletSpecFile {
                k: w.order_k,
                s: w.scale_s,
                scheme: w.coeff_scheme,
            },
            seed: params.seed,
        }
    }

    pub fn params(&self) -> Result<CalibratorParams> {
        let p = CalibratorParams {
            input_dim: self.wavelet.k + 1,
            hidden_dim: self.hidden_dim,
            dropout: self.dropout,
            seed: self.seed,
            w1: self.w1.clone(),
            b1: self.b1.clone(),
            w2: self.w2.clone(),
            b2: self.b2,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CalibratorFile {
    Wats(WatsModelFile),
    Ts { temperature: f64 },
    Ets(EtsModel),
    Uncalibrated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub initial_val_nll: f64,
    pub best_val_nll: f64,
    pub epochs_run: usize,
}

/// Report file written by `calibrate`: calibrated and uncalibrated test
/// reports side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub seed: u64,
    pub calibrated: CalibrationReport,
    pub uncalibrated: CalibrationReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingSummary>,
}

#[derive(Debug, Clone)]
pub struct CalibrateOutcome {
    pub report: RunReport,
    pub calibrator: CalibratorFile,
    /// Test accuracy before and after calibration.
    pub accuracy_before: f64,
    pub accuracy_after: f64,
}

/// Calibrate in memory: fit `cfg.method` on the validation split and evaluate
/// on the test split.
pub fn calibrate(cfg: &RunConfig, inputs: &Inputs, exec: Exec) -> Result<CalibrateOutcome> {
    calibrate_with_terms(cfg, inputs, None, exec)
}

fn calibrate_with_terms(
    cfg: &RunConfig,
    inputs: &Inputs,
    terms: Option<&WaveletTerms>,
    exec: Exec,
) -> Result<CalibrateOutcome> {
    let Inputs { graph, data } = inputs;
    data.require_val()?;
    let test = &data.split.test;
    if test.is_empty() {
        return Err(WatsError::InvalidInput("test split required".into()));
    }
    let edges = &cfg.degree_edges;
    let mut echo = serde_json::to_value(cfg)?;
    if let Some(obj) = echo.as_object_mut() {
        obj.remove("output_dir");
    }
    let mut uncalibrated = CalibrationReport::from_logits(
        Method::Uncalibrated.tag(),
        graph,
        &data.logits,
        &data.labels,
        test,
        cfg.num_bins,
        edges,
    )?;
    uncalibrated.config_echo = echo.clone();

    let tag = cfg.method.tag();
    let (mut calibrated, calibrator, training) = match cfg.method {
        Method::Uncalibrated => {
            let mut r = uncalibrated.clone();
            r.method_tag = tag.into();
            (r, CalibratorFile::Uncalibrated, None)
        }
        Method::Ts => {
            let (lo, hi) = cfg.ts_interval;
            let tau = fit_global_ts_in(data, lo, hi)?;
            let scaled = scale_logits(&data.logits, &vec![tau; data.num_nodes()])?;
            let r = CalibrationReport::from_logits(
                tag, graph, &scaled, &data.labels, test, cfg.num_bins, edges,
            )?;
            (r, CalibratorFile::Ts { temperature: tau }, None)
        }
        Method::Ets => {
            let model = fit_ets(data)?;
            let probs: Vec<Vec<f64>> = data.logits.iter().map(|z| model.probabilities(z)).collect();
            let r = CalibrationReport::from_probs(
                tag, graph, &probs, &data.labels, test, cfg.num_bins, edges,
            )?;
            (r, CalibratorFile::Ets(model), None)
        }
        Method::Wats => {
            let wcfg = cfg.wavelet_config(graph);
            let owned;
            let terms = match terms {
                Some(t) => t,
                None => {
                    owned = WaveletTerms::compute(graph, &wcfg, exec)?;
                    &owned
                }
            };
            let h = terms.features_for(wcfg.coeff_scheme, wcfg.scale_s);
            let p0 = CalibratorParams::init(
                h.width(),
                cfg.mlp.hidden_dim,
                cfg.mlp.dropout,
                cfg.mlp.seed,
            )?;
            let out = train_wats(&h, data, &p0, &cfg.train)?;
            let tau = temperatures(&out.params, &h, false)?;
            let scaled = scale_logits(&data.logits, &tau)?;
            let r = CalibrationReport::from_logits(
                tag, graph, &scaled, &data.labels, test, cfg.num_bins, edges,
            )?;
            let summary = TrainingSummary {
                initial_val_nll: out.initial_val_nll,
                best_val_nll: out.best_val_nll,
                epochs_run: out.epochs_run,
            };
            (
                r,
                CalibratorFile::Wats(WatsModelFile::new(&out.params, &wcfg)),
                Some(summary),
            )
        }
    };
    calibrated.config_echo = echo;
    let accuracy_before = uncalibrated.accuracy;
    let accuracy_after = calibrated.accuracy;
    Ok(CalibrateOutcome {
        report: RunReport {
            method: tag.into(),
            seed: cfg.mlp.seed,
            calibrated,
            uncalibrated,
            training,
        },
        calibrator,
        accuracy_before,
        accuracy_after,
    })
}

/// `calibrate` subcommand: load inputs, calibrate, write
/// `calibrator.json`, `report.json`, `reliability.csv` and `degree_bins.csv`
/// into the output directory.
pub fn run_calibrate(cfg: &RunConfig, exec: Exec) -> Result<CalibrateOutcome> {
    let inputs = load_inputs(cfg)?;
    let out = calibrate(cfg, &inputs, exec)?;
    let dir = &cfg.output_dir;
    write_atomic(&dir.join("calibrator.json"), &to_json(&out.calibrator)?)?;
    write_atomic(&dir.join("report.json"), &to_json(&out.report)?)?;
    write_atomic(
        &dir.join("reliability.csv"),
        out.report.calibrated.reliability_csv().as_bytes(),
    )?;
    write_atomic(
        &dir.join("degree_bins.csv"),
        out.report.calibrated.degree_csv().as_bytes(),
    )?;
    Ok(out)
}

/// Paths written by [`write_synthetic`].
#[derive(Debug, Clone)]
pub struct SyntheticFiles {
    pub edges: PathBuf,
    pub logits: PathBuf,
    pub labels: PathBuf,
    pub split: PathBuf,
    pub planted: PathBuf,
}

impl SyntheticFiles {
    pub fn in_dir(dir: &Path) -> Self {
        SyntheticFiles {
            edges: dir.join("edges.tsv"),
            logits: dir.join("logits.csv"),
            labels: dir.join("labels.txt"),
            split: dir.join("split.json"),
            planted: dir.join("planted_temperatures.txt"),
        }
    }

    /// A run configuration pointing at these files.
    pub fn run_config(&self, output_dir: &Path) -> RunConfig {
        RunConfig {
            edges: Some(self.edges.clone()),
            logits: Some(self.logits.clone()),
            labels: Some(self.labels.clone()),
            split: Some(self.split.clone()),
            output_dir: output_dir.to_path_buf(),
            ..Default::default()
        }
    }
}

pub fn write_synthetic(inst: &SyntheticInstance, dir: &Path) -> Result<SyntheticFiles> {
    let files = SyntheticFiles::in_dir(dir);
    let mut buf = Vec::new();
    inst.graph
        .write_edge_list(&mut buf)
        .map_err(|e| WatsError::io(&files.edges, e))?;
    write_atomic(&files.edges, &buf)?;

    buf.clear();
    write_logits_csv(&mut buf, &inst.logits).map_err(|e| WatsError::io(&files.logits, e))?;
    write_atomic(&files.logits, &buf)?;

    buf.clear();
    write_labels(&mut buf, &inst.labels).map_err(|e| WatsError::io(&files.labels, e))?;
    write_atomic(&files.labels, &buf)?;

    write_atomic(&files.split, &to_json(&inst.split)?)?;

    let planted: String = inst
        .planted_temperatures
        .iter()
        .map(|t| format!("{t}\n"))
        .collect();
    write_atomic(&files.planted, planted.as_bytes())?;
    Ok(files)
}

/// `synth` subcommand.
pub fn run_synth(spec: &SyntheticSpec, dir: &Path) -> Result<(SyntheticInstance, SyntheticFiles)> {
    let inst = generate(spec)?;
    let files = write_synthetic(&inst, dir)?;
    Ok((inst, files))
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub runs: usize,
    pub ece_mean: f64,
    pub ece_std: f64,
    pub nll_mean: f64,
    pub nll_std: f64,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
}

#[derive(Debug, Clone)]
pub struct ReportSummary {
    pub rows: Vec<SummaryRow>,
    /// Pooled reliability bins and degree bins per method.
    pub pooled: BTreeMap<String, CalibrationReport>,
}

impl ReportSummary {
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<14} {:>4}  {:>19}  {:>19}  {:>19}\n",
            "method", "runs", "ECE", "NLL", "accuracy"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<14} {:>4}  {:>8.5} ± {:>8.5}  {:>8.5} ± {:>8.5}  {:>8.5} ± {:>8.5}\n",
                r.method,
                r.runs,
                r.ece_mean,
                r.ece_std,
                r.nll_mean,
                r.nll_std,
                r.accuracy_mean,
                r.accuracy_std
            ));
        }
        out
    }

    pub fn csv(&self) -> String {
        let mut out =
            String::from("method,runs,ece_mean,ece_std,nll_mean,nll_std,accuracy_mean,accuracy_std\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.method,
                r.runs,
                r.ece_mean,
                r.ece_std,
                r.nll_mean,
                r.nll_std,
                r.accuracy_mean,
                r.accuracy_std
            ));
        }
        out
    }
}

/// Aggregate run reports by method tag. Identical uncalibrated reports
/// (same evaluation repeated across methods) are counted once.
pub fn aggregate_reports(reports: &[RunReport]) -> Result<ReportSummary> {
    if reports.is_empty() {
        return Err(WatsError::InvalidInput("no reports given".into()));
    }
    let num_bins = reports[0].calibrated.num_bins;
    let mut groups: BTreeMap<String, Vec<&CalibrationReport>> = BTreeMap::new();
    for r in reports {
        for rep in [&r.calibrated, &r.uncalibrated] {
            if rep.num_bins != num_bins || rep.bins.len() != num_bins {
                return Err(WatsError::IncompatibleReports(format!(
                    "num_bins {} vs {}",
                    num_bins, rep.num_bins
                )));
            }
        }
        // The uncalibrated baseline rides along in every report; count each
        // distinct evaluation once, whichever block it came from.
        let baseline = Method::Uncalibrated.tag();
        for rep in [&r.calibrated, &r.uncalibrated] {
            let entry = groups.entry(rep.method_tag.clone()).or_default();
            let dup = rep.method_tag == baseline
                && entry
                    .iter()
                    .any(|e| e.ece == rep.ece && e.nll == rep.nll && e.bins == rep.bins);
            if !dup {
                entry.push(rep);
            }
        }
    }

    let mut rows = Vec::new();
    let mut pooled = BTreeMap::new();
    for (tag, reps) in &groups {
        let col = |f: fn(&CalibrationReport) -> f64| -> Vec<f64> { reps.iter().map(|r| f(r)).collect() };
        let (ece_mean, ece_std) = mean_std(&col(|r| r.ece));
        let (nll_mean, nll_std) = mean_std(&col(|r| r.nll));
        let (accuracy_mean, accuracy_std) = mean_std(&col(|r| r.accuracy));
        rows.push(SummaryRow {
            method: tag.clone(),
            runs: reps.len(),
            ece_mean,
            ece_std,
            nll_mean,
            nll_std,
            accuracy_mean,
            accuracy_std,
        });
        pooled.insert(tag.clone(), pool(reps)?);
    }
    Ok(ReportSummary { rows, pooled })
}

/// Merge bins across runs by count-weighted averaging.
fn pool(reps: &[&CalibrationReport]) -> Result<CalibrationReport> {
    let mut out = reps[0].clone();
    out.config_echo = serde_json::Value::Null;
    for (b, bin) in out.bins.iter_mut().enumerate() {
        let count: usize = reps.iter().map(|r| r.bins[b].count).sum();
        let weighted = |f: fn(&crate::metrics::BinStats) -> f64| {
            if count == 0 {
                0.0
            } else {
                reps.iter()
                    .map(|r| f(&r.bins[b]) * r.bins[b].count as f64)
                    .sum::<f64>()
                    / count as f64
            }
        };
        bin.accuracy = weighted(|s| s.accuracy);
        bin.confidence = weighted(|s| s.confidence);
        bin.count = count;
    }
    let same_degree_layout = reps.iter().all(|r| {
        r.degree_bins.len() == out.degree_bins.len()
            && r.degree_bins
                .iter()
                .zip(&out.degree_bins)
                .all(|(a, b)| a.degree_lo == b.degree_lo && a.degree_hi == b.degree_hi)
    });
    if !same_degree_layout {
        return Err(WatsError::IncompatibleReports("degree bin edges differ".into()));
    }
    for (b, bin) in out.degree_bins.iter_mut().enumerate() {
        let count: usize = reps.iter().map(|r| r.degree_bins[b].count).sum();
        let weighted = |f: fn(&crate::metrics::DegreeBinStats) -> f64| {
            if count == 0 {
                0.0
            } else {
                reps.iter()
                    .map(|r| f(&r.degree_bins[b]) * r.degree_bins[b].count as f64)
                    .sum::<f64>()
                    / count as f64
            }
        };
        bin.accuracy = weighted(|s| s.accuracy);
        bin.confidence = weighted(|s| s.confidence);
        bin.ece = weighted(|s| s.ece);
        bin.count = count;
    }
    out.num_nodes = reps.iter().map(|r| r.num_nodes).sum();
    out.ece = crate::metrics::ece_from_bins(&out.bins);
    Ok(out)
}

pub fn read_run_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).map_err(|e| WatsError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| WatsError::File {
        path: path.to_path_buf(),
        message: format!("malformed report: {e}"),
    })
}

fn file_tag(tag: &str) -> String {
    tag.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

/// `report` subcommand: aggregate, then write `summary.csv`,
/// `summary.txt` and per-method reliability / degree-bin CSVs.
pub fn run_report(paths: &[PathBuf], output_dir: &Path) -> Result<ReportSummary> {
    let reports = paths
        .iter()
        .map(|p| read_run_report(p))
        .collect::<Result<Vec<_>>>()?;
    let summary = aggregate_reports(&reports)?;
    write_atomic(&output_dir.join("summary.csv"), summary.csv().as_bytes())?;
    write_atomic(&output_dir.join("summary.txt"), summary.table().as_bytes())?;
    for (tag, rep) in &summary.pooled {
        let t = file_tag(tag);
        write_atomic(
            &output_dir.join(format!("reliability_{t}.csv")),
            rep.reliability_csv().as_bytes(),
        )?;
        write_atomic(
            &output_dir.join(format!("degree_{t}.csv")),
            rep.degree_csv().as_bytes(),
        )?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub k: usize,
    pub s: f64,
    /// `NaN` when the cell failed.
    pub ece_mean: f64,
    pub ece_std: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    pub warnings: usize,
    pub best: Option<(usize, f64, f64)>,
    /// Whether the minimum-ECE cell has `k ∈ {3, 4}`.
    pub best_in_k3_k4: Option<bool>,
}

impl SweepResult {
    pub fn csv(&self) -> String {
        let mut out = String::from("k,s,ece_mean,ece_std\n");
        for c in &self.cells {
            let fmt = |v: f64| if v.is_finite() { v.to_string() } else { "nan".into() };
            out.push_str(&format!("{},{},{},{}\n", c.k, c.s, fmt(c.ece_mean), fmt(c.ece_std)));
        }
        out
    }
}

/// Grid search over Chebyshev order and scale. Each cell trains WATS once
/// per seed and records the mean and standard deviation of test ECE.
/// Chebyshev terms are computed once per order and shared across scales.
pub fn sweep(
    cfg: &RunConfig,
    inputs: &Inputs,
    k_list: &[usize],
    s_list: &[f64],
    seeds: &[u64],
    exec: Exec,
) -> Result<SweepResult> {
    if k_list.is_empty() || s_list.is_empty() || seeds.is_empty() {
        return Err(WatsError::InvalidParameter(
            "k list, s list and seed list must be non-empty".into(),
        ));
    }
    sweep_with(k_list, s_list, |k, s, terms| {
        let terms = terms.map_err(|e| WatsError::InvalidInput(e.to_string()))?;
        let mut eces = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut c = cfg.clone();
            c.method = Method::Wats;
            c.wavelet.k = k;
            c.wavelet.s = s;
            c.mlp.seed = seed;
            c.wavelet_config(&inputs.graph).validate()?;
            let out = calibrate_with_terms(&c, inputs, Some(terms), exec)?;
            eces.push(out.report.calibrated.ece);
        }
        Ok(mean_std(&eces))
    }, |k| {
        let mut c = cfg.clone();
        c.wavelet.k = k;
        let w = WaveletConfig {
            scale_s: 1.0,
            ..c.wavelet_config(&inputs.graph)
        };
        WaveletTerms::compute(&inputs.graph, &w, exec)
    })
}

/// Sweep driver with pluggable cell evaluation. Failed cells become `NaN`
/// rows and count as warnings; the sweep continues.
pub fn sweep_with<F, T>(k_list: &[usize], s_list: &[f64], mut cell: F, mut terms_for: T) -> Result<SweepResult>
where
    F: FnMut(usize, f64, std::result::Result<&WaveletTerms, &WatsError>) -> Result<(f64, f64)>,
    T: FnMut(usize) -> Result<WaveletTerms>,
{
    let mut cells = Vec::with_capacity(k_list.len() * s_list.len());
    let mut warnings = 0;
    for &k in k_list {
        let terms = terms_for(k);
        for &s in s_list {
            let outcome = cell(k, s, terms.as_ref()).and_then(|(m, sd)| {
                if m.is_finite() {
                    Ok((m, sd))
                } else {
                    Err(WatsError::InvalidInput("non-finite ECE".into()))
                }
            });
            match outcome {
                Ok((ece_mean, ece_std)) => cells.push(SweepCell {
                    k,
                    s,
                    ece_mean,
                    ece_std,
                    error: None,
                }),
                Err(e) => {
                    warnings += 1;
                    cells.push(SweepCell {
                        k,
                        s,
                        ece_mean: f64::NAN,
                        ece_std: f64::NAN,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
    }
    let best = cells
        .iter()
        .filter(|c| c.ece_mean.is_finite())
        .min_by(|a, b| a.ece_mean.total_cmp(&b.ece_mean))
        .map(|c| (c.k, c.s, c.ece_mean));
    Ok(SweepResult {
        best_in_k3_k4: best.map(|(k, _, _)| k == 3 || k == 4),
        cells,
        warnings,
        best,
    })
}

/// `sweep` subcommand: writes `sweep.csv` and `sweep_summary.json`.
pub fn run_sweep(
    cfg: &RunConfig,
    k_list: &[usize],
    s_list: &[f64],
    seeds: &[u64],
    exec: Exec,
) -> Result<SweepResult> {
    let inputs = load_inputs(cfg)?;
    let result = sweep(cfg, &inputs, k_list, s_list, seeds, exec)?;
    write_atomic(&cfg.output_dir.join("sweep.csv"), result.csv().as_bytes())?;
    let summary = serde_json::json!({
        "best_k": result.best.map(|b| b.0),
        "best_s": result.best.map(|b| b.1),
        "best_ece": result.best.map(|b| b.2),
        "best_in_k3_k4": result.best_in_k3_k4,
        "warnings": result.warnings,
        "errors": result.cells.iter().filter_map(|c| c.error.as_ref().map(|e| {
            serde_json::json!({"k": c.k, "s": c.s, "error": e})
        })).collect::<Vec<_>>(),
    });
    write_atomic(&cfg.output_dir.join("sweep_summary.json"), &to_json(&summary)?)?;
    Ok(result)
}
