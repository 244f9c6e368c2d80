//! Command-line driver: instruments a class file, a jar or a directory of
//! classes with a built-in transformer.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::builder::PossibleValuesParser;
use clap::{ArgAction, Args, Parser, Subcommand};
use rayon::prelude::*;

use weft::analysis::ClassHierarchy;
use weft::classfile::jar::{read_jar, write_jar, JarEntry};
use weft::classfile::{emit_class, parse_class, ClassModel};
use weft::joinpoint::Scope;
use weft::transformers::{builtin, BUILTIN_NAMES};
use weft::weaver::WeaveError;
use weft::{run_pipeline, PipelineConfig, Report, Transformer};

#[derive(Parser)]
#[command(name = "weft", version, about = "Control-flow-aware JVM bytecode instrumentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Weave a built-in transformer into classes.
    Instrument(InstrumentArgs),
}

#[derive(Args)]
struct InstrumentArgs {
    /// A .class file, a .jar, or a directory of classes.
    #[arg(long)]
    input: PathBuf,
    /// Output file, or directory receiving the instrumented artifact.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_parser = PossibleValuesParser::new(BUILTIN_NAMES))]
    transformer: String,
    /// Comma-separated `class.method` glob patterns; all methods if absent.
    #[arg(long)]
    scope: Option<String>,
    /// Extra directories or jars consulted for class hierarchy lookups.
    #[arg(long, value_delimiter = ',')]
    classpath: Vec<PathBuf>,
    /// Directory receiving an HTML control-flow view per modified method.
    #[arg(long, value_name = "DIR")]
    visualize_cfg: Option<PathBuf>,
    /// Fail on classes missing from the hierarchy.
    #[arg(long)]
    strict_frames: bool,
    /// Emit no StackMapTable; the output then needs a JVM run without
    /// verification.
    #[arg(long)]
    strip_frames: bool,
    /// Repeat for more detail.
    #[arg(short, long, action = ArgAction::Count)]
    verbose: u8,
}

/// One class to process: where it came from and its bytes.
struct Unit {
    name: String,
    bytes: Vec<u8>,
}

enum Artifact {
    Class,
    Jar(Vec<JarEntry>),
    Dir(Vec<(PathBuf, Vec<u8>)>),
}

fn load(input: &Path) -> Result<(Artifact, Vec<Unit>)> {
    if input.is_dir() {
        let mut files = Vec::new();
        collect_files(input, input, &mut files)?;
        let units = files
            .iter()
            .filter(|(p, _)| p.extension().is_some_and(|e| e == "class"))
            .map(|(p, b)| Unit { name: p.display().to_string(), bytes: b.clone() })
            .collect();
        return Ok((Artifact::Dir(files), units));
    }
    let is_jar = input.extension().is_some_and(|e| e == "jar" || e == "zip");
    if is_jar {
        let entries = read_jar(input).with_context(|| format!("reading {}", input.display()))?;
        let units = entries.iter().filter(|e| e.is_class()).map(|e| Unit { name: e.name.clone(), bytes: e.data.clone() }).collect();
        return Ok((Artifact::Jar(entries), units));
    }
    let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    Ok((Artifact::Class, vec![Unit { name: input.display().to_string(), bytes }]))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            out.push((p.strip_prefix(root)?.to_path_buf(), fs::read(&p)?));
        }
    }
    Ok(())
}

/// Output file for a single-file input: `output` itself, or the input's
/// file name inside it when it is a directory.
fn file_target(input: &Path, output: &Path) -> Result<PathBuf> {
    let as_dir = output.is_dir() || output.as_os_str().to_string_lossy().ends_with('/') || output.extension().is_none();
    if !as_dir {
        return Ok(output.to_path_buf());
    }
    fs::create_dir_all(output)?;
    Ok(output.join(input.file_name().context("input has no file name")?))
}

fn instrument(args: &InstrumentArgs) -> Result<Report> {
    let t: Box<dyn Transformer> = builtin(&args.transformer).context("unknown transformer")?;
    let config = PipelineConfig {
        scope: args.scope.as_deref().map(Scope::parse).unwrap_or_default(),
        visualize: args.visualize_cfg.clone(),
        classpath: args.classpath.clone(),
        strict_frames: args.strict_frames,
        strip_frames: args.strip_frames,
    };
    if !args.input.exists() {
        bail!("input {} does not exist", args.input.display());
    }
    let (artifact, units) = load(&args.input)?;
    let models: Vec<ClassModel> = units
        .iter()
        .map(|u| parse_class(&u.bytes).with_context(|| format!("parsing {}", u.name)))
        .collect::<Result<_>>()?;
    let mut hierarchy: ClassHierarchy = config.hierarchy().context("reading the classpath")?;
    for m in &models {
        hierarchy.add_class(m);
    }
    if let Some(dir) = &config.visualize {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    log::info!("instrumenting {} classes with {}", models.len(), args.transformer);

    let results: Vec<(Vec<u8>, Report)> = models
        .par_iter()
        .zip(&units)
        .map(|(m, u)| {
            let (woven, report) = run_pipeline(m, t.as_ref(), &config, &hierarchy)?;
            let bytes = if report.classes_modified == 0 { u.bytes.clone() } else { emit_class(&woven)? };
            log::debug!("{}: {} methods modified", u.name, report.methods_touched.len());
            Ok::<_, anyhow::Error>((bytes, report))
        })
        .collect::<Result<_>>()?;
    let mut report = Report::default();
    let mut woven: std::collections::HashMap<&str, Vec<u8>> = std::collections::HashMap::new();
    for (u, (bytes, r)) in units.iter().zip(results) {
        report.merge(r);
        woven.insert(&u.name, bytes);
    }

    match artifact {
        Artifact::Class => {
            let target = file_target(&args.input, &args.output)?;
            fs::write(&target, &woven[units[0].name.as_str()]).with_context(|| format!("writing {}", target.display()))?;
        }
        Artifact::Jar(entries) => {
            let target = file_target(&args.input, &args.output)?;
            if report.classes_modified == 0 {
                fs::copy(&args.input, &target).with_context(|| format!("writing {}", target.display()))?;
            } else {
                let entries: Vec<JarEntry> = entries
                    .into_iter()
                    .map(|mut e| {
                        if let Some(b) = woven.get(e.name.as_str()) {
                            e.data = b.clone();
                        }
                        e
                    })
                    .collect();
                write_jar(&entries, &target).with_context(|| format!("writing {}", target.display()))?;
            }
        }
        Artifact::Dir(files) => {
            for (rel, bytes) in files {
                let target = args.output.join(&rel);
                fs::create_dir_all(target.parent().expect("joined path has a parent"))?;
                let key = rel.display().to_string();
                let data = woven.get(key.as_str()).unwrap_or(&bytes);
                fs::write(&target, data).with_context(|| format!("writing {}", target.display()))?;
            }
        }
    }
    Ok(report)
}

/// The error chain joined by `: `, skipping causes whose text the previous
/// message already includes.
fn describe(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if parts.last().is_none_or(|p| !p.contains(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let Command::Instrument(args) = cli.command;
    let level = match args.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match instrument(&args) {
        Ok(report) => {
            println!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            let weave = e.chain().any(|c| c.downcast_ref::<WeaveError>().is_some());
            ExitCode::from(if weave { 2 } else { 1 })
        }
    }
}
