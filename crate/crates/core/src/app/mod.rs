//! Command-line front end behind the `sedd` binary.
//!
//! Exit codes: 0 success, 1 internal failure, 2 usage or contract
//! violation, 3 numerical abort. JSON goes to stdout, logs and the
//! reproducibility line to stderr.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bitstream::Bitstream;
use crate::cloud::{load_ply, save_ply, PlyFormat, PointCloud};
use crate::codec::{decode_full, encode_with_report, ArchConfig, ModelKind, ModelParams};
use crate::datagen::{gen_dataset, load_dataset, DatasetOptions};
use crate::error::{Error, Result};
use crate::metrics::{average, bd_report, d1_psnr, rd_point, read_rd_csv, write_rd_csv, y_psnr, RdPoint};
use crate::training::{init_stage3, train_stage, train_teacher, StageConfig, TrainOptions};

pub const SEED_ENV: &str = "SEDD_SEED";

#[derive(Debug, Parser)]
#[command(name = "sedd", version, about = "Learned joint geometry and color point cloud codec")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset of colored voxel surfaces.
    Gen(GenArgs),
    /// Train the geometry-only teacher.
    TrainTeacher(TeacherArgs),
    /// Run one training stage.
    Train(TrainArgs),
    /// Compress a PLY file.
    Encode(EncodeArgs),
    /// Decompress a bitstream to PLY.
    Decode(DecodeArgs),
    /// D1 and Y PSNR between two PLY files.
    Eval(EvalArgs),
    /// Average R-D points of several models over a dataset.
    Rdcurve(RdcurveArgs),
    /// BD-rate between two R-D CSVs.
    Bdrate(BdrateArgs),
    /// Paired R-D curves and BD-rate of an ablation variant.
    Ablate(AblateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchPreset {
    Default,
    Tiny,
}

#[derive(Debug, Args, Serialize)]
pub struct ArchArgs {
    /// Channel widths of a fresh model.
    #[arg(long, value_enum, default_value = "default")]
    pub arch: ArchPreset,
    /// Build the model without the transform module.
    #[arg(long)]
    pub no_transform: bool,
}

impl ArchArgs {
    fn build(&self) -> ArchConfig {
        let base = match self.arch {
            ArchPreset::Default => ArchConfig::default(),
            ArchPreset::Tiny => ArchConfig::tiny(),
        };
        ArchConfig { transform: !self.no_transform, ..base }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 6)]
    pub depth: u32,
    #[arg(long, default_value_t = 10)]
    pub extent_min: u32,
    #[arg(long, default_value_t = 16)]
    pub extent_max: u32,
}

#[derive(Debug, Args, Serialize)]
pub struct TeacherArgs {
    /// Stage config JSON; only schedule, seed, batching, `lambda_g` and
    /// `guide` are used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch CSV log; defaults to `<out>.csv`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub arch: ArchArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub stage: u8,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Stage 2: the stage-1 checkpoint. Stage 3: the stage-1 then the
    /// stage-2 checkpoint. Stage 1: optional starting point.
    #[arg(long, num_args = 1..)]
    pub init: Vec<PathBuf>,
    #[arg(long)]
    pub teacher: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=5))]
    pub rate_point: Option<u8>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub arch: ArchArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct EncodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DecodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub ascii: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub rec: PathBuf,
    #[arg(long)]
    pub depth: u32,
}

#[derive(Debug, Args, Serialize)]
pub struct RdcurveArgs {
    #[arg(long, num_args = 1..)]
    pub models: Vec<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BdrateArgs {
    #[arg(long)]
    pub anchor: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    NoTeacher,
    NoTransform,
}

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    #[arg(long, value_enum)]
    pub variant: Variant,
    /// Baseline checkpoints, one per rate point.
    #[arg(long, num_args = 1..)]
    pub baseline: Vec<PathBuf>,
    /// Variant checkpoints trained with the same seeds and configs.
    #[arg(long, num_args = 1..)]
    pub models: Vec<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// `0` success, `1` internal, `2` usage or contract, `3` numerical.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numerical(_) => 3,
        Error::Shape(_) | Error::Encode(_) | Error::Decode(_) => 1,
        _ => 2,
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Seed from the environment override, else `fallback`.
pub fn seed_override(fallback: u64) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(fallback),
    }
}

/// `sedd <version> cmd=<name> seed=<seed> config=<sha256 prefix>`.
pub fn repro_line(cmd: &str, seed: u64, config: &impl Serialize) -> String {
    let json = serde_json::to_vec(config).unwrap_or_default();
    let hash = sha256_hex(&json);
    format!("sedd {} cmd={cmd} seed={seed} config={}", env!("CARGO_PKG_VERSION"), &hash[..16])
}

fn print_json(v: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn load_model(path: &Path, kind: ModelKind) -> Result<ModelParams> {
    let m = ModelParams::load(path)?;
    if m.kind != kind {
        return Err(Error::Config(format!("{} holds a {:?} model, expected {kind:?}", path.display(), m.kind)));
    }
    Ok(m)
}

fn stage_config(path: Option<&Path>, stage: u8) -> Result<StageConfig> {
    let mut cfg = match path {
        Some(p) => StageConfig::load(p)?,
        None => StageConfig::stage(stage),
    };
    cfg.stage = stage;
    cfg.seed = seed_override(cfg.seed)?;
    cfg.validate()?;
    Ok(cfg)
}

fn log_path(explicit: &Option<PathBuf>, out: &Path) -> PathBuf {
    explicit.clone().unwrap_or_else(|| {
        let mut s = out.as_os_str().to_owned();
        s.push(".csv");
        PathBuf::from(s)
    })
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    let seed = seed_override(a.seed)?;
    eprintln!("{}", repro_line("gen", seed, a));
    if a.extent_min > a.extent_max {
        return Err(Error::Config("extent-min exceeds extent-max".into()));
    }
    let opts = DatasetOptions { depth: a.depth, extent: a.extent_min..=a.extent_max };
    let entries = gen_dataset(a.n, &a.out, seed, &opts)?;
    print_json(&serde_json::json!({ "files": entries.len(), "dir": a.out }))
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    checkpoint: &'a Path,
    log: PathBuf,
    steps: usize,
    first_loss: f64,
    final_loss: f64,
}

fn cmd_train_teacher(a: &TeacherArgs) -> Result<()> {
    let cfg = stage_config(a.config.as_deref(), 2)?;
    eprintln!("{}", repro_line("train-teacher", cfg.seed, &(a, &cfg)));
    let data = load_dataset(&a.data)?;
    let init = ModelParams::new_teacher(a.arch.build(), cfg.seed)?;
    let log = log_path(&a.log, &a.out);
    let opts = TrainOptions { log_csv: Some(log.clone()), checkpoint: Some(a.out.clone()) };
    let out = train_teacher(&cfg, &data, init, &opts)?;
    print_json(&TrainSummary {
        checkpoint: &a.out,
        log,
        steps: out.steps.len(),
        first_loss: out.steps.first().map_or(f64::NAN, |s| s.parts.total),
        final_loss: out.steps.last().map_or(f64::NAN, |s| s.parts.total),
    })
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut cfg = stage_config(a.config.as_deref(), a.stage)?;
    if let Some(rp) = a.rate_point {
        cfg.rate_point = Some(rp as usize);
    }
    cfg.validate()?;
    eprintln!("{}", repro_line("train", cfg.seed, &(a, &cfg)));
    let init = match (a.stage, a.init.as_slice()) {
        (1, []) => ModelParams::new_student(a.arch.build(), cfg.seed)?,
        (1, [p]) | (2, [p]) => load_model(p, ModelKind::Student)?,
        (3, [s1, s2]) => init_stage3(&load_model(s1, ModelKind::Student)?, &load_model(s2, ModelKind::Student)?)?,
        (1, _) => return Err(Error::Config("stage 1 takes at most one --init checkpoint".into())),
        (2, _) => return Err(Error::Config("stage 2 requires exactly one --init (the stage-1 checkpoint)".into())),
        _ => return Err(Error::Config("stage 3 requires --init <stage-1 checkpoint> <stage-2 checkpoint>".into())),
    };
    let teacher = match &a.teacher {
        Some(p) => Some(load_model(p, ModelKind::Teacher)?),
        None => None,
    };
    let data = load_dataset(&a.data)?;
    let log = log_path(&a.log, &a.out);
    let opts = TrainOptions { log_csv: Some(log.clone()), checkpoint: Some(a.out.clone()) };
    let out = train_stage(&cfg, &data, init, teacher.as_ref(), &opts)?;
    print_json(&TrainSummary {
        checkpoint: &a.out,
        log,
        steps: out.steps.len(),
        first_loss: out.steps.first().map_or(f64::NAN, |s| s.parts.total),
        final_loss: out.steps.last().map_or(f64::NAN, |s| s.parts.total),
    })
}

fn cmd_encode(a: &EncodeArgs) -> Result<()> {
    eprintln!("{}", repro_line("encode", 0, a));
    let m = load_model(&a.model, ModelKind::Student)?;
    let pc = load_ply(&a.input)?;
    let (b, report, _) = encode_with_report(&pc, &m)?;
    std::fs::write(&a.out, b.pack())?;
    print_json(&report)
}

fn cmd_decode(a: &DecodeArgs) -> Result<()> {
    eprintln!("{}", repro_line("decode", 0, a));
    let m = load_model(&a.model, ModelKind::Student)?;
    let b = Bitstream::parse(&std::fs::read(&a.input)?)?;
    let pc = decode_full(&b, &m)?;
    let fmt = if a.ascii { PlyFormat::Ascii } else { PlyFormat::BinaryLittleEndian };
    save_ply(&pc, &a.out, fmt)?;
    print_json(&serde_json::json!({ "points": pc.len(), "out": a.out }))
}

#[derive(Serialize)]
struct EvalOut {
    d1_psnr: f64,
    y_psnr: f64,
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    eprintln!("{}", repro_line("eval", 0, a));
    let r = load_ply(&a.reference)?;
    let c = load_ply(&a.rec)?;
    print_json(&EvalOut { d1_psnr: d1_psnr(&r, &c, a.depth)?, y_psnr: y_psnr(&r, &c)? })
}

fn label_of(p: &Path) -> String {
    p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// One averaged R-D row per model over `data`.
pub fn rd_curve(models: &[PathBuf], data: &[PointCloud]) -> Result<Vec<RdPoint>> {
    let mut rows = Vec::with_capacity(models.len());
    for path in models {
        let m = load_model(path, ModelKind::Student)?;
        let label = label_of(path);
        let pts = data.iter().map(|pc| rd_point(pc, &m, &label)).collect::<Result<Vec<_>>>()?;
        rows.push(average(&pts, &label)?);
    }
    Ok(rows)
}

fn cmd_rdcurve(a: &RdcurveArgs) -> Result<()> {
    eprintln!("{}", repro_line("rdcurve", 0, a));
    let data = load_dataset(&a.data)?;
    let rows = rd_curve(&a.models, &data)?;
    write_rd_csv(&rows, &a.out)?;
    print_json(&rows)
}

fn cmd_bdrate(a: &BdrateArgs) -> Result<()> {
    eprintln!("{}", repro_line("bdrate", 0, a));
    let anchor = read_rd_csv(&a.anchor)?;
    let test = read_rd_csv(&a.test)?;
    print_json(&bd_report(&a.anchor.display().to_string(), &anchor, &a.test.display().to_string(), &test)?)
}

fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    eprintln!("{}", repro_line("ablate", 0, a));
    if a.variant == Variant::NoTransform {
        for p in &a.models {
            if load_model(p, ModelKind::Student)?.arch.transform {
                return Err(Error::Config(format!("{} has a transform module; not a no-transform variant", p.display())));
            }
        }
    }
    let data = load_dataset(&a.data)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let base = rd_curve(&a.baseline, &data)?;
    let var = rd_curve(&a.models, &data)?;
    let base_csv = a.out_dir.join("baseline.csv");
    let var_csv = a.out_dir.join("variant.csv");
    write_rd_csv(&base, &base_csv)?;
    write_rd_csv(&var, &var_csv)?;
    let name = match a.variant {
        Variant::NoTeacher => "no-teacher",
        Variant::NoTransform => "no-transform",
    };
    let report = bd_report("baseline", &base, name, &var)?;
    std::fs::write(a.out_dir.join("bdrate.json"), serde_json::to_string_pretty(&report)?)?;
    print_json(&serde_json::json!({ "variant": name, "report": report }))
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::TrainTeacher(a) => cmd_train_teacher(a),
        Command::Train(a) => cmd_train(a),
        Command::Encode(a) => cmd_encode(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Rdcurve(a) => cmd_rdcurve(a),
        Command::Bdrate(a) => cmd_bdrate(a),
        Command::Ablate(a) => cmd_ablate(a),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(exit_code(&Error::Numerical("x".into())), 3);
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Format("x".into())), 2);
        assert_eq!(exit_code(&Error::Decode("x".into())), 1);
    }

    #[test]
    fn unknown_flags_are_usage_errors() {
        assert_eq!(main_with_args(["sedd", "eval", "--bogus"]), 2);
        assert_eq!(main_with_args(["sedd", "nope"]), 2);
        assert_eq!(main_with_args(["sedd", "train", "--stage", "4", "--data", "d", "--out", "o"]), 2);
    }

    #[test]
    fn repro_line_is_stable() {
        let a = repro_line("gen", 3, &serde_json::json!({"n": 5}));
        assert_eq!(a, repro_line("gen", 3, &serde_json::json!({"n": 5})));
        assert_ne!(a, repro_line("gen", 3, &serde_json::json!({"n": 6})));
        assert!(a.starts_with(&format!("sedd {} cmd=gen seed=3 config=", env!("CARGO_PKG_VERSION"))));
    }
}
