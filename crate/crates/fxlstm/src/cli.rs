//! The `fxlstm` command.
//!
//! Every command writes its main artifact to `--out` (or stdout) and a
//! summary to stdout (or stderr when the artifact went to stdout). With
//! `--format json` the summary is one JSON object.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fxlstm_core::activation::{approx_real, grid, reference_activation, ActivationKind, ActivationUnit};
use fxlstm_core::dse::{self, Benchmark, Confusion, ExecPath};
use fxlstm_core::fxp::{quantize, ACT_FORMAT};
use fxlstm_core::net::{
    gen_fixture_model, Dims, FixtureSpec, FloatNet, GaitWindow, ModelParams, QuantizedNet,
};
use fxlstm_core::sim::{pack_sram, AccelState, SramImage, TimingReport};
use fxlstm_core::{BitWidthConfig, FcInput, FxpFormat, RoundingMode};
use serde_json::{json, Value};

use crate::error::{exit, Error, Result};
use crate::reports::GoldenRow;
use crate::synth::{Abnormality, SynthSpec};
use crate::{dataset, model_io, parallel, reports, synth};

#[derive(Debug, Parser)]
#[command(name = "fxlstm", version, about = "Fixed-point LSTM gait classifier and accelerator model")]
pub struct Cli {
    /// Seed for fixture models and synthetic data.
    #[arg(long, global = true, env = "FXLSTM_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Destination of the command's main artifact (stdout when omitted).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Summary format.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
    /// Worker threads for sweep and validate.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset CSV and its rescale sidecar.
    GenData(GenDataArgs),
    /// Write a seeded fixture model.
    GenModel(GenModelArgs),
    /// Quantize a model and report storage sizes.
    Quantize(QuantizeArgs),
    /// Classify every window with the software model.
    Infer(InferArgs),
    /// Classify every window on the cycle-level simulator.
    Simulate(SimulateArgs),
    /// Explore parameter/operation formats.
    Sweep(SweepArgs),
    /// Compare two execution paths component by component.
    Validate(ValidateArgs),
    /// Per-cycle trace of one window.
    Trace(TraceArgs),
    /// Tabulate an activation approximation.
    ActTable(ActTableArgs),
}

fn parse_format(s: &str) -> std::result::Result<FxpFormat, String> {
    s.parse::<FxpFormat>().map_err(|e| e.to_string())
}

fn parse_rounding(s: &str) -> std::result::Result<RoundingMode, String> {
    s.parse::<RoundingMode>().map_err(|e| e.to_string())
}

fn parse_fc_input(s: &str) -> std::result::Result<FcInput, String> {
    s.parse::<FcInput>()
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Preset 1..=7 (the default is 1 unless --param/--op are given).
    #[arg(long)]
    pub preset: Option<u8>,
    /// Parameter format, e.g. "FxP(10,8)" or "10,8".
    #[arg(long, value_parser = parse_format)]
    pub param: Option<FxpFormat>,
    /// Operation format.
    #[arg(long, value_parser = parse_format)]
    pub op: Option<FxpFormat>,
    /// nearest | epsilon
    #[arg(long, value_parser = parse_rounding, default_value = "nearest")]
    pub rounding: RoundingMode,
    /// FC input: c (cell state) or h (hidden state).
    #[arg(long, value_parser = parse_fc_input, default_value = "c")]
    pub fc_input: FcInput,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<BitWidthConfig> {
        let cfg = match (self.preset, self.param, self.op) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(Error::Usage("give either --preset or --param/--op, not both".into()))
            }
            (None, Some(p), Some(o)) => BitWidthConfig::new(p, o),
            (None, Some(_), None) | (None, None, Some(_)) => {
                return Err(Error::Usage("--param and --op must be given together".into()))
            }
            (Some(n), None, None) => {
                BitWidthConfig::preset(n).ok_or_else(|| Error::Usage(format!("preset must be 1..=7, got {n}")))?
            }
            (None, None, None) => BitWidthConfig::preset(1).expect("preset 1"),
        };
        Ok(cfg.with_rounding(self.rounding).with_fc_input(self.fc_input))
    }
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Model JSON; a fixture model from --seed when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dataset CSV; synthetic data from --seed when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Window stride in samples.
    #[arg(long, default_value_t = fxlstm_core::net::DEFAULT_STRIDE)]
    pub stride: usize,
    /// Use at most this many windows.
    #[arg(long)]
    pub max_windows: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = SynthSpec::default().subjects)]
    pub subjects: usize,
    #[arg(long, default_value_t = SynthSpec::default().steps_per_subject)]
    pub steps: usize,
    #[arg(long, default_value_t = SynthSpec::default().min_len)]
    pub min_len: usize,
    #[arg(long, default_value_t = SynthSpec::default().max_len)]
    pub max_len: usize,
    #[arg(long, value_enum, default_value_t = Abnormality::Tremor)]
    pub kind: Abnormality,
    #[arg(long, default_value_t = SynthSpec::default().abnormal_fraction)]
    pub abnormal_fraction: f64,
    /// Standard deviation of the additive noise.
    #[arg(long, default_value_t = SynthSpec::default().noise)]
    pub noise: f64,
}

#[derive(Debug, Clone, Args)]
pub struct GenModelArgs {
    #[arg(long, default_value_t = 20)]
    pub cells: usize,
    #[arg(long, default_value_t = 4)]
    pub channels: usize,
    #[arg(long, default_value_t = 96)]
    pub timesteps: usize,
    /// Larger weights, so pre-activations leave the narrow formats' ranges.
    #[arg(long)]
    pub saturating: bool,
}

#[derive(Debug, Clone, Args)]
pub struct QuantizeArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Also write the SRAM image as hex.
    #[arg(long)]
    pub sram: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Run the real-valued network instead of the fixed-point one.
    #[arg(long)]
    pub full_precision: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long, default_value_t = 10.0)]
    pub clock_mhz: f64,
    #[arg(long, default_value_t = fxlstm_core::sim::timing::DEFAULT_BUDGET_MS)]
    pub budget_ms: f64,
    /// Fail (exit 6) when any class differs from the software model.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// `model.json:data.csv` pair; repeatable. A fixture model with
    /// synthetic data is used when omitted.
    #[arg(long = "bench")]
    pub benches: Vec<String>,
    /// Parameter formats, `;` separated, e.g. "FxP(10,8);FxP(9,7)".
    #[arg(long, value_delimiter = ';', value_parser = parse_format)]
    pub params: Vec<FxpFormat>,
    /// Operation formats, `;` separated.
    #[arg(long, value_delimiter = ';', value_parser = parse_format)]
    pub ops: Vec<FxpFormat>,
    #[arg(long, default_value_t = 0.01)]
    pub threshold: f64,
    /// Also write a markdown table.
    #[arg(long)]
    pub markdown: Option<PathBuf>,
    #[arg(long, default_value_t = fxlstm_core::net::DEFAULT_STRIDE)]
    pub stride: usize,
    #[arg(long)]
    pub max_windows: Option<usize>,
    /// Use the saturating fixture when no bench is given.
    #[arg(long)]
    pub saturating: bool,
    #[arg(long, value_parser = parse_rounding, default_value = "nearest")]
    pub rounding: RoundingMode,
    #[arg(long, value_parser = parse_fc_input, default_value = "c")]
    pub fc_input: FcInput,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Two paths out of fp, sw, sim.
    #[arg(long, value_delimiter = ',', default_value = "sw,sim")]
    pub paths: Vec<String>,
    /// Golden pack CSV to compare full-precision logits against.
    #[arg(long)]
    pub golden: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Window index in dataset order.
    #[arg(long, default_value_t = 0)]
    pub window: usize,
    /// Also dump the SRAM image.
    #[arg(long)]
    pub sram: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ActTableArgs {
    #[arg(long, default_value = "sigmoid")]
    pub kind: String,
    #[arg(long, default_value_t = -8.0, allow_hyphen_values = true)]
    pub lo: f64,
    #[arg(long, default_value_t = 8.0, allow_hyphen_values = true)]
    pub hi: f64,
    #[arg(long, default_value_t = 0.25)]
    pub step: f64,
    /// Format of the quantized input and output.
    #[arg(long, value_parser = parse_format, default_value = "FxP(18,13)")]
    pub fmt: FxpFormat,
    #[arg(long, value_parser = parse_rounding, default_value = "nearest")]
    pub rounding: RoundingMode,
}

/// Where the summary and artifact of one invocation go.
struct Output<'a> {
    cli: &'a Cli,
}

impl Output<'_> {
    fn artifact(&self, bytes: &[u8]) -> Result<()> {
        match &self.cli.out {
            Some(p) => crate::write_file(p, bytes),
            None => std::io::stdout()
                .write_all(bytes)
                .map_err(|e| Error::io("<stdout>", e)),
        }
    }

    fn summary(&self, v: &Value) -> Result<()> {
        let text = match self.cli.format {
            OutputFormat::Json => format!("{v}\n"),
            OutputFormat::Text => text_summary(v),
        };
        let res = if self.cli.out.is_some() {
            std::io::stdout().write_all(text.as_bytes())
        } else {
            std::io::stderr().write_all(text.as_bytes())
        };
        res.map_err(|e| Error::io("<stdout>", e))
    }
}

fn text_summary(v: &Value) -> String {
    match v {
        Value::Object(m) => m
            .iter()
            .map(|(k, v)| match v {
                Value::String(s) => format!("{k}: {s}\n"),
                other => format!("{k}: {other}\n"),
            })
            .collect(),
        other => format!("{other}\n"),
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| Error::io("<buffer>", std::io::Error::other(e)))?;
    Ok(buf)
}

fn load_params(model: &Option<PathBuf>, seed: u64) -> Result<ModelParams> {
    match model {
        Some(p) => Ok(model_io::load_model(p)?.params),
        None => Ok(gen_fixture_model(seed)),
    }
}

fn load_steps(data: &Option<PathBuf>, seed: u64) -> Result<Vec<fxlstm_core::net::GaitStep>> {
    match data {
        Some(p) => dataset::load_steps(p),
        None => Ok(synth::generate(&SynthSpec {
            seed,
            ..Default::default()
        })?
        .0),
    }
}

fn load_inputs(input: &InputArgs, seed: u64, rounding: RoundingMode) -> Result<(ModelParams, Vec<GaitWindow>)> {
    if input.stride == 0 {
        return Err(Error::Usage("stride must be positive".into()));
    }
    let params = load_params(&input.model, seed)?;
    let steps = load_steps(&input.data, seed)?;
    let mut windows = dataset::windows(&steps, params.dims.timesteps, input.stride, rounding)?;
    if let Some(n) = input.max_windows {
        windows.truncate(n);
    }
    if let Some(w) = windows.first() {
        if w.channels() != params.dims.input_channels {
            return Err(Error::schema(
                input.data.clone().unwrap_or_default(),
                None,
                format!(
                    "dataset has {} channels, model expects {}",
                    w.channels(),
                    params.dims.input_channels
                ),
            ));
        }
    }
    Ok((params, windows))
}

fn metrics_json(c: &Confusion) -> Value {
    json!({
        "windows": c.total(),
        "accuracy": c.accuracy(),
        "f1": c.f1(),
        "tp": c.tp, "fp": c.fp, "tn": c.tn, "fn": c.fn_,
    })
}

fn cmd_gen_data(cli: &Cli, a: &GenDataArgs) -> Result<()> {
    let spec = SynthSpec {
        seed: cli.seed,
        subjects: a.subjects,
        steps_per_subject: a.steps,
        min_len: a.min_len,
        max_len: a.max_len,
        kind: a.kind,
        abnormal_fraction: a.abnormal_fraction,
        noise: a.noise,
    };
    let (steps, meta) = synth::generate(&spec)?;
    let out = Output { cli };
    out.artifact(&csv_bytes(|b| dataset::write_steps(b, &steps))?)?;
    let meta_file = cli.out.as_deref().map(synth::meta_path);
    if let Some(p) = &meta_file {
        synth::save_meta(p, &meta)?;
    }
    let abnormal = steps.iter().filter(|s| s.label == fxlstm_core::net::Label::Abnormal).count();
    out.summary(&json!({
        "steps": steps.len(),
        "abnormal_steps": abnormal,
        "samples": steps.iter().map(|s| s.len()).sum::<usize>(),
        "meta": meta_file.map(|p| p.display().to_string()),
    }))
}

fn cmd_gen_model(cli: &Cli, a: &GenModelArgs) -> Result<()> {
    let dims = Dims {
        num_cells: a.cells,
        input_channels: a.channels,
        timesteps: a.timesteps,
    };
    let spec = if a.saturating {
        FixtureSpec {
            dims,
            ..FixtureSpec::saturating()
        }
    } else {
        FixtureSpec { dims, ..Default::default() }
    };
    let params = spec.generate(cli.seed);
    params.validate()?;
    let mut text = serde_json::to_string_pretty(&model_io::to_json(&params, &Default::default())).expect("json");
    text.push('\n');
    let out = Output { cli };
    out.artifact(text.as_bytes())?;
    out.summary(&json!({ "parameters": params.param_count(), "seed": cli.seed }))
}

fn cmd_quantize(cli: &Cli, a: &QuantizeArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let params = load_params(&a.model, cli.seed)?;
    params.check_finite()?;
    let (q, saturated) = params
        .quantize(cfg.param_fmt, cfg.rounding)
        .map_err(|e| Error::schema("<model>", None, e))?;
    let real = q.to_real();
    let mut meta = serde_json::Map::new();
    meta.insert("param_format".into(), json!(cfg.param_fmt.to_string()));
    meta.insert("rounding".into(), json!(cfg.rounding.to_string()));
    let mut text = serde_json::to_string_pretty(&model_io::to_json(&real, &meta)).expect("json");
    text.push('\n');
    let out = Output { cli };
    out.artifact(text.as_bytes())?;
    let mut summary = json!({
        "config": cfg.to_string(),
        "parameters": q.param_count(),
        "parameter_bits": SramImage::parameter_bits(q.dims, cfg.param_fmt),
        "saturated_parameters": saturated,
    });
    if let Some(p) = &a.sram {
        let img = pack_sram(&q)?;
        crate::write_file(p, reports::sram_hex(&img).as_bytes())?;
        summary["sram_bits"] = json!(img.word_bits() * img.words().len());
        summary["sram_word_bits"] = json!(img.word_bits());
    }
    out.summary(&summary)
}

#[derive(serde::Serialize)]
struct PredRow {
    window_id: usize,
    step_id: u64,
    offset: usize,
    label: &'static str,
    cls: &'static str,
    logit_normal: f64,
    logit_abnormal: f64,
}

fn cmd_infer(cli: &Cli, a: &InferArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let (params, windows) = load_inputs(&a.input, cli.seed, cfg.rounding)?;
    let mut rows = Vec::with_capacity(windows.len());
    let mut conf = Confusion::default();
    let mut overflow = fxlstm_core::net::OverflowStats::default();
    let quantized;
    let qnet;
    let fnet;
    let classify: Box<dyn Fn(&GaitWindow) -> Result<fxlstm_core::net::Classification>> = if a.full_precision {
        fnet = FloatNet::new(&params)?.with_fc_input(cfg.fc_input);
        Box::new(|w| Ok(fnet.classify(w)?))
    } else {
        params.check_finite()?;
        quantized = params.quantize(cfg.param_fmt, cfg.rounding).expect("finite").0;
        qnet = QuantizedNet::new(&quantized, cfg)?;
        Box::new(|w| Ok(qnet.classify(w)?))
    };
    for (i, w) in windows.iter().enumerate() {
        let r = classify(w)?;
        conf.record(r.label, w.label);
        overflow.merge(&r.overflow);
        rows.push(PredRow {
            window_id: i,
            step_id: w.step_id,
            offset: w.offset,
            label: w.label.name(),
            cls: r.label.name(),
            logit_normal: r.logits[0],
            logit_abnormal: r.logits[1],
        });
    }
    let out = Output { cli };
    out.artifact(&csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    })?)?;
    let mut s = metrics_json(&conf);
    s["mode"] = json!(if a.full_precision { "full-precision".to_string() } else { cfg.to_string() });
    s["saturation_events"] = json!(overflow.total());
    out.summary(&s)
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    if !(a.clock_mhz > 0.0) {
        return Err(Error::Usage("clock must be positive".into()));
    }
    let (params, windows) = load_inputs(&a.input, cli.seed, cfg.rounding)?;
    params.check_finite()?;
    let (q, _) = params.quantize(cfg.param_fmt, cfg.rounding).expect("finite");
    let mut accel = AccelState::new(q.dims, cfg)?;
    accel.load_params(&pack_sram(&q)?)?;
    let sw = QuantizedNet::new(&q, cfg)?;
    let mut conf = Confusion::default();
    let mut mismatches = 0usize;
    let mut rows = Vec::with_capacity(windows.len());
    for (i, w) in windows.iter().enumerate() {
        let r = accel.run_inference(w, false)?;
        if a.check && sw.classify(w)?.label != r.cls {
            mismatches += 1;
        }
        conf.record(r.cls, w.label);
        rows.push((i, w.step_id, w.offset, w.label.name(), r.cls.name(), r.cycles_used));
    }
    let cycles = accel.schedule().total_cycles();
    let timing = TimingReport::new(cycles, a.clock_mhz * 1e6, a.budget_ms);
    let out = Output { cli };
    out.artifact(&csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["window_id", "step_id", "offset", "label", "cls", "cycles"])?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    })?)?;
    let mut s = metrics_json(&conf);
    s["config"] = json!(cfg.to_string());
    s["timing"] = reports::timing_json(&timing);
    if cli.format == OutputFormat::Text {
        s["timing"] = json!(reports::timing_text(&timing).trim_end().replace('\n', "; "));
    }
    if a.check {
        s["mismatches"] = json!(mismatches);
    }
    out.summary(&s)?;
    if mismatches > 0 {
        return Err(Error::Mismatch(format!("{mismatches} windows differ from the software model")));
    }
    Ok(())
}

fn parse_bench(spec: &str, stride: usize, max_windows: Option<usize>) -> Result<Benchmark> {
    let (m, d) = spec
        .split_once(':')
        .ok_or_else(|| Error::Usage(format!("--bench expects model.json:data.csv, got {spec:?}")))?;
    let params = model_io::load_model(Path::new(m))?.params;
    let steps = dataset::load_steps(Path::new(d))?;
    let mut windows = dataset::windows(&steps, params.dims.timesteps, stride, RoundingMode::NearestTiesAway)?;
    if let Some(n) = max_windows {
        windows.truncate(n);
    }
    Ok(Benchmark {
        name: spec.to_string(),
        model: params,
        windows,
    })
}

fn cmd_sweep(cli: &Cli, a: &SweepArgs) -> Result<()> {
    if a.stride == 0 {
        return Err(Error::Usage("stride must be positive".into()));
    }
    let benches = if a.benches.is_empty() {
        let spec = if a.saturating { FixtureSpec::saturating() } else { FixtureSpec::default() };
        let steps = synth::generate(&SynthSpec {
            seed: cli.seed,
            ..Default::default()
        })?
        .0;
        let mut windows = dataset::windows(&steps, spec.dims.timesteps, a.stride, a.rounding)?;
        if let Some(n) = a.max_windows {
            windows.truncate(n);
        }
        vec![Benchmark {
            name: format!("fixture-{}", cli.seed),
            model: spec.generate(cli.seed),
            windows,
        }]
    } else {
        a.benches
            .iter()
            .map(|b| parse_bench(b, a.stride, a.max_windows))
            .collect::<Result<Vec<_>>>()?
    };
    let params = if a.params.is_empty() { dse::default_param_formats() } else { a.params.clone() };
    let ops = if a.ops.is_empty() { dse::default_op_formats() } else { a.ops.clone() };
    let pool = parallel::pool(cli.workers);
    let grid = parallel::sweep(&pool, &benches, &params, &ops, a.rounding, a.fc_input)?;
    let out = Output { cli };
    out.artifact(&csv_bytes(|b| reports::write_grid_csv(b, &grid, a.threshold))?)?;
    if let Some(p) = &a.markdown {
        crate::write_file(p, reports::grid_markdown(&grid, a.threshold).as_bytes())?;
    }
    let selected = dse::select_configs(&grid, a.threshold);
    out.summary(&json!({
        "benchmarks": benches.len(),
        "windows": benches.iter().map(|b| b.windows.len()).sum::<usize>(),
        "grid": format!("{}x{}", params.len(), ops.len()),
        "threshold": a.threshold,
        "selected": selected.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
    }))
}

fn golden_check(params: &ModelParams, windows: &[GaitWindow], fc_input: FcInput, path: &Path, tol: f64) -> Result<Value> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let rows: Vec<GoldenRow> = reports::read_golden(f, path)?;
    let net = FloatNet::new(params)?.with_fc_input(fc_input);
    let mut max_gap: f64 = 0.0;
    let mut cls_mismatch = 0usize;
    for r in &rows {
        let w = windows.get(r.window_id).ok_or_else(|| {
            Error::schema(path, None, format!("window_id {} beyond the {} windows", r.window_id, windows.len()))
        })?;
        let c = net.classify(w)?;
        max_gap = max_gap
            .max((c.logits[0] - r.logit_normal).abs())
            .max((c.logits[1] - r.logit_abnormal).abs());
        if r.label().map_err(|e| Error::schema(path, None, e))? != c.label {
            cls_mismatch += 1;
        }
    }
    Ok(json!({
        "golden_windows": rows.len(),
        "golden_max_logit_gap": max_gap,
        "golden_cls_mismatches": cls_mismatch,
        "golden_ok": max_gap <= tol && cls_mismatch == 0,
    }))
}

fn cmd_validate(cli: &Cli, a: &ValidateArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let [pa, pb]: [ExecPath; 2] = a
        .paths
        .iter()
        .map(|p| p.parse::<ExecPath>().map_err(Error::Usage))
        .collect::<Result<Vec<_>>>()?
        .try_into()
        .map_err(|_| Error::Usage("--paths takes exactly two of fp, sw, sim".into()))?;
    let (params, windows) = load_inputs(&a.input, cli.seed, cfg.rounding)?;
    let pool = parallel::pool(cli.workers);
    let report = parallel::validate(&pool, &params, &windows, cfg, pa, pb)?;
    let out = Output { cli };
    out.artifact(&csv_bytes(|b| reports::write_validation_csv(b, &report))?)?;
    let mut s = json!({
        "config": cfg.to_string(),
        "paths": format!("{},{}", pa.name(), pb.name()),
        "windows": windows.len(),
        "exact": report.is_exact(),
        "accuracy_delta": report.accuracy_delta(),
        "f1_delta": report.f1_delta(),
    });
    let mut failure = None;
    let equivalence = matches!(
        (pa, pb),
        (ExecPath::QuantizedSoftware, ExecPath::Simulator) | (ExecPath::Simulator, ExecPath::QuantizedSoftware)
    );
    if equivalence && !report.is_exact() {
        failure = Some("simulator and software model disagree".to_string());
    }
    if let Some(g) = &a.golden {
        let gs = golden_check(&params, &windows, cfg.fc_input, g, a.tolerance)?;
        if gs["golden_ok"] != json!(true) {
            failure = Some(format!("golden pack differs beyond {}", a.tolerance));
        }
        for (k, v) in gs.as_object().expect("object") {
            s[k] = v.clone();
        }
    }
    out.summary(&s)?;
    match failure {
        Some(m) => Err(Error::Mismatch(m)),
        None => Ok(()),
    }
}

fn cmd_trace(cli: &Cli, a: &TraceArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let (params, windows) = load_inputs(&a.input, cli.seed, cfg.rounding)?;
    let w = windows
        .get(a.window)
        .ok_or_else(|| Error::Usage(format!("window {} out of range ({} windows)", a.window, windows.len())))?;
    params.check_finite()?;
    let (q, _) = params.quantize(cfg.param_fmt, cfg.rounding).expect("finite");
    let img = pack_sram(&q)?;
    let mut accel = AccelState::new(q.dims, cfg)?;
    accel.load_params(&img)?;
    let r = accel.run_inference(w, true)?;
    if let Some(p) = &a.sram {
        crate::write_file(p, reports::sram_hex(&img).as_bytes())?;
    }
    let out = Output { cli };
    out.artifact(&csv_bytes(|b| reports::write_trace(b, &r.trace))?)?;
    out.summary(&json!({
        "config": cfg.to_string(),
        "window": a.window,
        "cls": r.cls.name(),
        "cycles": r.cycles_used,
        "sram_reads": r.sram_reads,
        "saturation_events": r.overflow.total(),
    }))
}

fn cmd_act_table(cli: &Cli, a: &ActTableArgs) -> Result<()> {
    let kind: ActivationKind = a.kind.parse().map_err(Error::Usage)?;
    if !(a.lo < a.hi && a.step > 0.0) {
        return Err(Error::Usage("need lo < hi and a positive step".into()));
    }
    let unit = ActivationUnit::new(a.rounding);
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for x in grid(a.lo, a.hi, a.step) {
        let xq = quantize(x, a.fmt, a.rounding).map_err(|e| Error::Usage(e.to_string()))?.value;
        let q = match kind {
            ActivationKind::Relu => fxlstm_core::activation::relu(xq),
            _ => unit.eval(kind, xq, a.fmt, &mut 0).expect("table"),
        };
        let approx = approx_real(kind, x);
        let exact = reference_activation(kind, x);
        worst = worst.max((approx - exact).abs());
        rows.push((x, approx, q.to_real(), exact, (approx - exact).abs()));
    }
    let out = Output { cli };
    out.artifact(&csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["x", "approx", "quantized", "exact", "abs_error"])?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    })?)?;
    out.summary(&json!({
        "kind": kind.to_string(),
        "points": rows.len(),
        "format": a.fmt.to_string(),
        "max_abs_error": worst,
        "activation_format": ACT_FORMAT.to_string(),
    }))
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => cmd_gen_data(cli, a),
        Command::GenModel(a) => cmd_gen_model(cli, a),
        Command::Quantize(a) => cmd_quantize(cli, a),
        Command::Infer(a) => cmd_infer(cli, a),
        Command::Simulate(a) => cmd_simulate(cli, a),
        Command::Sweep(a) => cmd_sweep(cli, a),
        Command::Validate(a) => cmd_validate(cli, a),
        Command::Trace(a) => cmd_trace(cli, a),
        Command::ActTable(a) => cmd_act_table(cli, a),
    }
}

/// Parse `args` (program name first) and run, as the binary would.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Usage(e.to_string()))?;
    run(&cli)
}

/// Parse arguments, run, and map the outcome to an exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
