mod cli;
mod jobs;
mod manifest;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use cyclesearch_core::data::{SyntheticKind, SyntheticTask};
use cyclesearch_core::evaluation::{default_discriminator_spec, GeneratorArch, TrainSetup};
use cyclesearch_core::objectives::GeneratorAdversarial;
use cyclesearch_core::search_engine::{Scheme, SearchConfig};
use cyclesearch_core::search_space::{scientific, search_space_size, AlphaTable, ArchitectureSpec, SpaceRole};
use log::info;

use cli::{Cli, Command, DataArgs};
use jobs::{DataSource, DiscretizeJob, EvalJob, Job, NamedAlpha, SearchJob, TrainJob};
use manifest::{digest_inputs, digest_outputs, Manifest};

/// Bad input detected by the command line layer; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn is_validation(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.downcast_ref::<UsageError>().is_some()
            || e.downcast_ref::<cyclesearch_core::Error>().is_some_and(|c| c.is_validation())
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_validation(&err) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    let job = match command {
        Command::SpaceSize(a) => {
            space_size(a.n, a.full)?;
            return Ok(ExitCode::SUCCESS);
        }
        Command::Replay(a) => return replay(&a.manifest, a.out),
        Command::Search(a) => {
            let out = a.out.clone();
            (search_job(a)?, out)
        }
        Command::Train(a) => {
            let out = a.out.clone();
            (train_job(a)?, out)
        }
        Command::Eval(a) => {
            let out = a.out.clone();
            (eval_job(a)?, out)
        }
        Command::Gendata(a) => {
            let kind: SyntheticKind = a.kind.parse()?;
            let task = SyntheticTask {
                kind,
                image_size: a.size,
                n_a: a.n_a,
                n_b: a.n_b,
                seed: a.seed,
            };
            (Job::Gendata { task }, a.out)
        }
        Command::Discretize(a) => {
            let mut alphas = Vec::new();
            for p in &a.alphas {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                let table = AlphaTable::from_json(&text).with_context(|| p.display().to_string())?;
                alphas.push(NamedAlpha {
                    name: jobs::alpha_name(p),
                    table,
                });
            }
            (Job::Discretize(DiscretizeJob { alphas, hidden: a.hidden }), a.out)
        }
    };
    let (job, out) = job;
    let out = out.unwrap_or_else(|| default_out(job.command()));
    execute(&job, &out, std::env::args().collect())?;
    Ok(ExitCode::SUCCESS)
}

fn out_root() -> PathBuf {
    std::env::var_os("CYCLESEARCH_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

fn default_out(command: &str) -> PathBuf {
    out_root().join(format!("{command}-{}", chrono::Local::now().format("%Y%m%d-%H%M%S")))
}

/// Runs `job` into `out` and writes its manifest.
fn execute(job: &Job, out: &Path, args: Vec<String>) -> Result<Manifest> {
    let started_at = chrono::Utc::now().to_rfc3339();
    let (inputs, inputs_digest) = digest_inputs(&job.inputs()?)?;
    job.run(out)?;
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: job.command().to_string(),
        args,
        seed: job.seed(),
        job: job.clone(),
        inputs,
        inputs_digest,
        outputs: digest_outputs(out)?,
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
    };
    manifest.write(out)?;
    info!("outputs in {}", out.display());
    Ok(manifest)
}

fn space_size(n: usize, full: bool) -> Result<()> {
    let role = if full { SpaceRole::FullSystem(n) } else { SpaceRole::Generator(n) };
    let size = search_space_size(role)?;
    println!("{size} ≈ {}", scientific(&size));
    Ok(())
}

fn data_source(a: &DataArgs, seed: u64) -> Result<DataSource> {
    match (&a.data, &a.synthetic) {
        (Some(root), _) => Ok(DataSource::Folder { root: root.clone() }),
        (None, Some(kind)) => Ok(DataSource::Synthetic {
            task: SyntheticTask {
                kind: kind.parse()?,
                image_size: a.image_size,
                n_a: a.n_a,
                n_b: a.n_b,
                seed: a.data_seed.unwrap_or(seed),
            },
        }),
        (None, None) => Err(usage("a dataset is required: pass --data <root> or --synthetic <kind>")),
    }
}

fn search_job(a: cli::SearchArgs) -> Result<Job> {
    let mut config = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<SearchConfig>(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => SearchConfig::default(),
    };
    if let Some(s) = &a.scheme {
        config.scheme = s.parse::<Scheme>()?;
    }
    if let Some(n) = a.n {
        config.n_cells = n;
    }
    if let Some(h) = a.hsearch {
        config.hidden_search = h;
    }
    if a.hfinal.is_some() {
        config.hidden_final = a.hfinal;
    }
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    if a.swap_epoch.is_some() {
        config.swap_epoch = a.swap_epoch;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if a.saturating {
        config.loss.adversarial = GeneratorAdversarial::Saturating;
    }
    config.validate()?;
    let data = data_source(&a.data, config.seed)?;
    Ok(Job::Search(SearchJob { config, data }))
}

fn read_spec(path: &Path) -> Result<ArchitectureSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ArchitectureSpec::from_json(&text).with_context(|| path.display().to_string())
}

fn train_job(a: cli::TrainArgs) -> Result<Job> {
    let mut spec_files = Vec::new();
    let mut load = |p: PathBuf| -> Result<ArchitectureSpec> {
        let s = read_spec(&p)?;
        spec_files.push(p);
        Ok(s)
    };
    let (ga, gb, mut label) = if let Some(run) = &a.run {
        let ga = load(run.join("spec_GA.json"))?;
        let gb = load(run.join("spec_GB.json"))?;
        let scheme = fs::read_to_string(run.join("config.json"))
            .ok()
            .and_then(|t| serde_json::from_str::<SearchConfig>(&t).ok())
            .map(|c| c.scheme.name().to_string());
        (GeneratorArch::Searched(ga), GeneratorArch::Searched(gb), scheme.unwrap_or_else(|| "searched".into()))
    } else if let (Some(pa), Some(pb)) = (&a.ga, &a.gb) {
        (
            GeneratorArch::Searched(load(pa.clone())?),
            GeneratorArch::Searched(load(pb.clone())?),
            "searched".to_string(),
        )
    } else if a.baseline {
        (GeneratorArch::Baseline, GeneratorArch::Baseline, "baseline".to_string())
    } else {
        return Err(usage("choose generators with --run, --ga/--gb or --baseline"));
    };
    if let Some(l) = &a.label {
        label = l.clone();
    }
    let hidden = match (a.hidden, &ga) {
        (Some(h), _) => h,
        (None, GeneratorArch::Searched(s)) => s.hidden_dim,
        (None, GeneratorArch::Baseline) => return Err(usage("--baseline needs --hidden")),
    };
    let mut disc = |explicit: &Option<PathBuf>, name: &str| -> Result<ArchitectureSpec> {
        match (explicit, &a.run) {
            (Some(p), _) => load(p.clone()),
            (None, Some(run)) => load(run.join(name)),
            (None, None) => Ok(default_discriminator_spec(hidden)?),
        }
    };
    let da = disc(&a.da, "spec_DA.json")?;
    let db = disc(&a.db, "spec_DB.json")?;
    if a.repeats == 0 {
        return Err(usage("--repeats must be at least 1"));
    }
    let mut setup = TrainSetup::searched(da.clone(), db.clone(), da, db, hidden, a.epochs);
    setup.ga = ga;
    setup.gb = gb;
    setup.validate()?;
    let data = data_source(&a.data, a.seed)?;
    Ok(Job::Train(TrainJob {
        setup,
        seeds: (a.seed..a.seed + a.repeats as u64).collect(),
        label,
        save_init: a.save_init,
        data,
        spec_files,
    }))
}

fn eval_job(a: cli::EvalArgs) -> Result<Job> {
    if let (Some(x), Some(y)) = (&a.images_x, &a.images_y) {
        return Ok(Job::Eval(EvalJob::Folders {
            images_x: x.clone(),
            images_y: y.clone(),
        }));
    }
    let Some(run) = a.run else {
        return Err(usage("eval needs --run <dir> or --images-x/--images-y"));
    };
    let data = if a.data.data.is_some() || a.data.synthetic.is_some() {
        data_source(&a.data, a.seed)?
    } else {
        let p = run.join("data.json");
        let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
    };
    let label = match a.label {
        Some(l) => l,
        None => fs::read_to_string(run.join("report.json"))
            .ok()
            .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
            .and_then(|v| v["best"]["scheme"].as_str().map(str::to_string))
            .unwrap_or_else(|| "eval".to_string()),
    };
    Ok(Job::Eval(EvalJob::Run {
        run,
        label,
        data,
        results: a.results,
    }))
}

fn replay(manifest_path: &Path, out: Option<PathBuf>) -> Result<ExitCode> {
    let original = Manifest::read(manifest_path)?;
    let (_, digest) = digest_inputs(&original.job.inputs()?)?;
    if digest != original.inputs_digest {
        return Err(usage(format!(
            "inputs changed since the original run (digest {digest}, recorded {})",
            original.inputs_digest
        )));
    }
    let out = out.unwrap_or_else(|| {
        let orig_dir = manifest_path.parent().and_then(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned());
        out_root().join(format!("{}-replay", orig_dir.unwrap_or_else(|| original.command.clone())))
    });
    let repeated = execute(&original.job, &out, original.args.clone())?;
    let mut mismatches = Vec::new();
    for o in &original.outputs {
        match repeated.outputs.iter().find(|r| r.path == o.path) {
            Some(r) if r.sha256 == o.sha256 => {}
            Some(_) => mismatches.push(format!("{} differs", o.path)),
            None => mismatches.push(format!("{} missing", o.path)),
        }
    }
    for r in &repeated.outputs {
        if !original.outputs.iter().any(|o| o.path == r.path) {
            mismatches.push(format!("{} unexpected", r.path));
        }
    }
    if mismatches.is_empty() {
        println!("replay identical: {} files match", original.outputs.len());
        Ok(ExitCode::SUCCESS)
    } else {
        for m in &mismatches {
            println!("mismatch: {m}");
        }
        println!("replay differs: {} of {} files", mismatches.len(), original.outputs.len());
        Ok(ExitCode::from(1))
    }
}
