use std::path::{Path, PathBuf};

use layerdep::ae::{
    self, generate_synthetic_sequences, load_checkpoint, null_probe_accuracies, percentile_95, probe_classifier,
    save_checkpoint, GeneratorConfig, ProbeConfig, SyntheticSequenceDataset,
};
use layerdep::trace::{export_jsonl, import_jsonl, render_plane_svg, Series};
use layerdep::{
    gram, hsic_normalized, hsic_unnormalized, permutation_test, smi_cross_validated, smi_estimate,
    smi_fixed_theta, Bandwidth, Error, KernelSpec, SampleMatrix, SmiConfig,
};
use serde::Serialize;

use crate::manifest::{artifact_version, parse_train_config, DataSource, RunManifest};
use crate::KernelArgs;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_DEGENERATE: u8 = 3;
pub const EXIT_EXISTS: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::DegenerateInput(_)
            | Error::AllPointsIdentical
            | Error::SingularSystem(_)
            | Error::RangeViolation(_)
            | Error::DegenerateLabels(_) => EXIT_DEGENERATE,
            _ => EXIT_INPUT,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::input(e.to_string())
    }
}

type CliResult = Result<String, CliError>;

fn to_json<T: Serialize>(value: &T) -> CliResult {
    Ok(serde_json::to_string(value)?)
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn load_matrix(path: &Path) -> Result<SampleMatrix, CliError> {
    SampleMatrix::from_csv_path(path).map_err(|e| CliError { message: format!("{}: {e}", path.display()), ..e.into() })
}

fn kernel_spec(kind: &str, bandwidth: Option<&str>, axis: &str) -> Result<KernelSpec, CliError> {
    match kind {
        "linear" if bandwidth.is_some() => {
            Err(CliError::input(format!("--bandwidth-{axis} only applies to the rbf kernel")))
        }
        "linear" => Ok(KernelSpec::Linear),
        "rbf" => match bandwidth.unwrap_or("median") {
            "median" => Ok(KernelSpec::Rbf { bandwidth: Bandwidth::MedianHeuristic }),
            s => {
                let sigma: f64 = s
                    .parse()
                    .map_err(|_| CliError::input(format!("--bandwidth-{axis}: `{s}` is not `median` or a number")))?;
                Ok(KernelSpec::rbf(sigma)?)
            }
        },
        other => Err(CliError::input(format!("--kernel-{axis}: unknown kernel `{other}`; use rbf or linear"))),
    }
}

fn kernels(args: &KernelArgs) -> Result<(KernelSpec, KernelSpec), CliError> {
    Ok((
        kernel_spec(&args.kernel_x, args.bandwidth_x.as_deref(), "x")?,
        kernel_spec(&args.kernel_y, args.bandwidth_y.as_deref(), "y")?,
    ))
}

fn load_pair(x: &Path, y: &Path) -> Result<(SampleMatrix, SampleMatrix), CliError> {
    let xm = load_matrix(x)?;
    let ym = load_matrix(y)?;
    if xm.n() != ym.n() {
        return Err(CliError::input(format!("{} has {} rows but {} has {}", x.display(), xm.n(), y.display(), ym.n())));
    }
    Ok((xm, ym))
}

pub fn hsic(x: &Path, y: &Path, args: &KernelArgs, normalized: bool) -> CliResult {
    let (kx, ky) = kernels(args)?;
    let (xm, ym) = load_pair(x, y)?;
    let k = gram(&xm, kx)?;
    let l = gram(&ym, ky)?;
    let estimate = if normalized { hsic_normalized(&k, &l)? } else { hsic_unnormalized(&k, &l)? };
    to_json(&estimate)
}

pub enum SmiMode {
    Lambda(f64),
    CrossValidated,
    FixedTheta,
}

impl SmiMode {
    pub fn from_flags(lambda: Option<f64>, cv: bool, fixed_theta: bool) -> Self {
        match (lambda, cv, fixed_theta) {
            (Some(l), _, _) => SmiMode::Lambda(l),
            (None, true, _) => SmiMode::CrossValidated,
            _ => SmiMode::FixedTheta,
        }
    }
}

#[derive(Serialize)]
struct SmiOutput {
    estimate: layerdep::DependenceEstimate,
    /// Ridge parameter used; absent for the fixed-θ estimator.
    lambda: Option<f64>,
}

pub fn smi(x: &Path, y: &Path, args: &KernelArgs, mode: SmiMode, seed: u64) -> CliResult {
    let (kx, ky) = kernels(args)?;
    let (xm, ym) = load_pair(x, y)?;
    let out = match mode {
        SmiMode::Lambda(lambda) => {
            let model = layerdep::fit_density_ratio(&xm, &ym, kx, ky, lambda)?;
            SmiOutput { estimate: smi_estimate(&xm, &ym, &model)?, lambda: Some(lambda) }
        }
        SmiMode::CrossValidated => {
            let (estimate, lambda) = smi_cross_validated(&xm, &ym, kx, ky, &SmiConfig::default(), seed)?;
            SmiOutput { estimate, lambda: Some(lambda) }
        }
        SmiMode::FixedTheta => {
            SmiOutput { estimate: smi_fixed_theta(&gram(&xm, kx)?, &gram(&ym, ky)?)?, lambda: None }
        }
    };
    to_json(&out)
}

pub fn permtest(x: &Path, y: &Path, args: &KernelArgs, permutations: usize, seed: u64) -> CliResult {
    let (kx, ky) = kernels(args)?;
    let (xm, ym) = load_pair(x, y)?;
    to_json(&permutation_test(&xm, &ym, kx, ky, permutations, seed)?)
}

/// Refuses to reuse an existing directory unless `force` is set.
fn claim_output_dir(out: &Path, force: bool) -> Result<(), CliError> {
    if out.exists() && !force {
        return Err(CliError {
            code: EXIT_EXISTS,
            message: format!("{} already exists; pass --force to overwrite", out.display()),
        });
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::input(format!("{}: {e}", out.display())))?;
    Ok(())
}

#[derive(Serialize)]
struct GenerateOutput {
    out: String,
    frames: usize,
    input_dim: usize,
    num_classes: usize,
}

pub fn generate(cfg: &GeneratorConfig, out: &Path, force: bool) -> CliResult {
    let data = generate_synthetic_sequences(cfg)?;
    claim_output_dir(out, force)?;
    data.save(out)?;
    to_json(&GenerateOutput {
        out: out.display().to_string(),
        frames: data.len(),
        input_dim: data.input_dim(),
        num_classes: data.num_classes,
    })
}

#[derive(Serialize)]
struct TrainOutput {
    out: String,
    fingerprint: String,
    epochs: usize,
    first_train_loss: f64,
    final_train_loss: f64,
    best_val_epoch: Option<u32>,
}

pub fn train(config_path: &Path, out: &Path, force: bool) -> CliResult {
    let config = parse_train_config(&read_to_string(config_path)?)
        .map_err(|e| CliError::input(format!("{}: {e}", config_path.display())))?;
    config.model.validate()?;
    let data = match &config.data {
        DataSource::Generate(g) => generate_synthetic_sequences(g)?,
        DataSource::Path(p) => SyntheticSequenceDataset::load(p)
            .map_err(|e| CliError { message: format!("{}: {e}", p.display()), ..e.into() })?,
    };
    if data.input_dim() != config.model.input_dim {
        return Err(CliError::input(format!(
            "model input_dim {} does not match frame size {}",
            config.model.input_dim,
            data.input_dim()
        )));
    }
    // Fail on impossible tasks before touching the output directory.
    data.pairs(config.model.task)?;
    claim_output_dir(out, force)?;

    let model_path = out.join("model.bin");
    let trace_path = out.join("trace.jsonl");
    let mut inputs = vec![config_path.display().to_string()];
    if let DataSource::Path(p) = &config.data {
        inputs.push(p.display().to_string());
    }
    let manifest = RunManifest {
        subcommand: "train".into(),
        version: artifact_version(),
        seed: config.model.seed,
        fingerprint: ae::config_fingerprint(&config.model),
        config: config.clone(),
        inputs,
        outputs: vec![model_path.display().to_string(), trace_path.display().to_string()],
    };
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")
        .map_err(|e| CliError::input(e.to_string()))?;

    let (model, trace) = ae::train(&config.model, &data)?;
    save_checkpoint(&model_path, &config.model, &model)?;
    export_jsonl(&trace, &trace_path)?;
    let records = trace.records();
    to_json(&TrainOutput {
        out: out.display().to_string(),
        fingerprint: trace.fingerprint.clone(),
        epochs: records.len(),
        first_train_loss: records[0].train_loss,
        final_train_loss: records[records.len() - 1].train_loss,
        best_val_epoch: trace.best_val_epoch(),
    })
}

pub enum ProbeSource {
    Model { model: PathBuf, data: PathBuf },
    Latents { latents: PathBuf, labels: PathBuf },
}

fn read_labels(path: &Path) -> Result<Vec<usize>, CliError> {
    read_to_string(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| CliError::input(format!("{} line {}: `{l}` is not a class id", path.display(), i + 1)))
        })
        .collect()
}

#[derive(Serialize)]
struct ProbeOutput {
    #[serde(flatten)]
    result: ae::ProbeResult,
    null_trials: usize,
    /// 95th percentile of shuffled-label accuracies; absent without trials.
    null_p95: Option<f64>,
    beats_null: Option<bool>,
}

pub fn probe(source: &ProbeSource, config: Option<&Path>, null_trials: usize, null_seed: u64) -> CliResult {
    let cfg: ProbeConfig = match config {
        Some(p) => serde_json::from_str(&read_to_string(p)?)
            .map_err(|e| CliError::input(format!("{}: {e}", p.display())))?,
        None => ProbeConfig::default(),
    };
    let (z, labels) = match source {
        ProbeSource::Model { model, data } => {
            let (_, m) = load_checkpoint(model)
                .map_err(|e| CliError { message: format!("{}: {e}", model.display()), ..e.into() })?;
            let d = SyntheticSequenceDataset::load(data)
                .map_err(|e| CliError { message: format!("{}: {e}", data.display()), ..e.into() })?;
            (m.encode(d.frames_view())?, d.labels)
        }
        ProbeSource::Latents { latents, labels } => (load_matrix(latents)?.into_inner(), read_labels(labels)?),
    };
    let result = probe_classifier(z.view(), &labels, &cfg)?;
    let nulls = null_probe_accuracies(z.view(), &labels, &cfg, null_trials, null_seed)?;
    let null_p95 = percentile_95(&nulls);
    to_json(&ProbeOutput {
        beats_null: null_p95.map(|p| result.accuracy > p),
        result,
        null_trials,
        null_p95,
    })
}

#[derive(Serialize)]
struct PlotOutput {
    out: String,
    series: &'static str,
    traces: usize,
}

pub fn plot(traces: &[PathBuf], series: &str, out: &Path) -> CliResult {
    let series: Series = series.parse()?;
    let loaded = traces
        .iter()
        .map(|p| import_jsonl(p).map_err(|e| CliError { message: format!("{}: {e}", p.display()), ..e.into() }))
        .collect::<Result<Vec<_>, _>>()?;
    // Check each trace alone first so an error names the offending file.
    for (t, p) in loaded.iter().zip(traces) {
        render_plane_svg(std::slice::from_ref(t), series)
            .map_err(|e| CliError { message: format!("{}: {e}", p.display()), ..e.into() })?;
    }
    let svg = render_plane_svg(&loaded, series)?;
    std::fs::write(out, svg).map_err(|e| CliError::input(format!("{}: {e}", out.display())))?;
    to_json(&PlotOutput { out: out.display().to_string(), series: series.name(), traces: loaded.len() })
}
