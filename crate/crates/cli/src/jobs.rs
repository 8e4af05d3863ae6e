//! Fully resolved commands. A `Job` carries everything a command needs, so a
//! manifest holding one can be re-run without the original arguments.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cyclesearch_core::data::{
    generate_synthetic, load_root, load_unpaired, write_dataset, Side, SyntheticTask, UnpairedDataset,
};
use cyclesearch_core::evaluation::{
    best_of_k, build_nets, evaluate, proxy_frechet, train_metrics_csv, Trained, TrainSetup, RESULTS_HEADER,
};
use cyclesearch_core::networks::{checkpoint, Model};
use cyclesearch_core::search_engine::{epoch_means, metrics_csv, Search, SearchConfig};
use cyclesearch_core::search_space::{discretize, AlphaTable, ArchitectureSpec};
use log::info;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic { task: SyntheticTask },
    Folder { root: PathBuf },
}

impl DataSource {
    pub fn load(&self) -> Result<UnpairedDataset> {
        Ok(match self {
            DataSource::Synthetic { task } => generate_synthetic(task)?,
            DataSource::Folder { root } => load_root(root)?,
        })
    }

    fn test_dirs(&self) -> Option<(PathBuf, PathBuf)> {
        match self {
            DataSource::Synthetic { .. } => None,
            DataSource::Folder { root } => {
                let (a, b) = (root.join("testA"), root.join("testB"));
                (a.is_dir() && b.is_dir()).then_some((a, b))
            }
        }
    }

    /// The `testA`/`testB` split when the folder has one, otherwise the training images.
    pub fn load_eval(&self, train: &UnpairedDataset) -> Result<UnpairedDataset> {
        match self.test_dirs() {
            Some((a, b)) => Ok(load_unpaired(&a, &b)?),
            None => Ok(train.clone()),
        }
    }

    /// Files read by `load` and `load_eval`.
    pub fn inputs(&self) -> Result<Vec<PathBuf>> {
        match self {
            DataSource::Synthetic { .. } => Ok(Vec::new()),
            DataSource::Folder { root } => {
                let mut v = png_files(&root.join("trainA"))?;
                v.extend(png_files(&root.join("trainB"))?);
                if let Some((a, b)) = self.test_dirs() {
                    v.extend(png_files(&a)?);
                    v.extend(png_files(&b)?);
                }
                Ok(v)
            }
        }
    }
}

pub fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    v.sort();
    Ok(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchJob {
    pub config: SearchConfig,
    pub data: DataSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainJob {
    pub setup: TrainSetup,
    pub seeds: Vec<u64>,
    pub label: String,
    pub save_init: bool,
    pub data: DataSource,
    /// Spec files the setup was read from.
    pub spec_files: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EvalJob {
    Run {
        run: PathBuf,
        label: String,
        data: DataSource,
        results: Option<PathBuf>,
    },
    Folders {
        images_x: PathBuf,
        images_y: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedAlpha {
    pub name: String,
    pub table: AlphaTable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizeJob {
    pub alphas: Vec<NamedAlpha>,
    pub hidden: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Job {
    Search(SearchJob),
    Train(TrainJob),
    Eval(EvalJob),
    Gendata { task: SyntheticTask },
    Discretize(DiscretizeJob),
}

pub const CHECKPOINT_NAMES: [&str; 4] = ["ga", "gb", "da", "db"];
pub const NET_SUFFIXES: [&str; 4] = ["GA", "GB", "DA", "DB"];

impl Job {
    pub fn command(&self) -> &'static str {
        match self {
            Job::Search(_) => "search",
            Job::Train(_) => "train",
            Job::Eval(_) => "eval",
            Job::Gendata { .. } => "gendata",
            Job::Discretize(_) => "discretize",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Job::Search(j) => Some(j.config.seed),
            Job::Train(j) => j.seeds.first().copied(),
            Job::Gendata { task } => Some(task.seed),
            Job::Eval(_) | Job::Discretize(_) => None,
        }
    }

    /// Files the job reads, for the manifest.
    pub fn inputs(&self) -> Result<Vec<PathBuf>> {
        match self {
            Job::Search(j) => j.data.inputs(),
            Job::Train(j) => {
                let mut v = j.spec_files.clone();
                v.extend(j.data.inputs()?);
                Ok(v)
            }
            Job::Eval(EvalJob::Run { run, data, .. }) => {
                let mut v = vec![run.join("setup.json")];
                v.extend(CHECKPOINT_NAMES.iter().map(|n| run.join("checkpoints").join(format!("{n}.ckpt"))));
                v.extend(data.inputs()?);
                Ok(v)
            }
            Job::Eval(EvalJob::Folders { images_x, images_y }) => {
                let mut v = png_files(images_x)?;
                v.extend(png_files(images_y)?);
                Ok(v)
            }
            Job::Gendata { .. } | Job::Discretize(_) => Ok(Vec::new()),
        }
    }

    pub fn run(&self, out: &Path) -> Result<()> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        match self {
            Job::Search(j) => run_search(j, out),
            Job::Train(j) => run_train(j, out),
            Job::Eval(j) => run_eval(j, out),
            Job::Gendata { task } => {
                let ds = generate_synthetic(task)?;
                let files = write_dataset(&ds, out)?;
                info!("wrote {} images to {}", files.len(), out.display());
                Ok(())
            }
            Job::Discretize(j) => run_discretize(j, out),
        }
    }
}

fn write(out: &Path, name: &str, content: impl AsRef<[u8]>) -> Result<()> {
    let p = out.join(name);
    fs::write(&p, content).with_context(|| format!("writing {}", p.display()))
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn run_search(job: &SearchJob, out: &Path) -> Result<()> {
    let data = job.data.load()?;
    let mut search = Search::new(job.config.clone(), &data)?;
    info!(
        "search: scheme {} N={} H={} on {} ({}+{} images), {} epochs",
        job.config.scheme,
        job.config.n_cells,
        job.config.hidden_search,
        data.name,
        data.len(Side::A),
        data.len(Side::B),
        job.config.epochs
    );
    while search.epoch() < job.config.epochs {
        let e = search.epoch();
        search.run_epoch()?;
        let mean = epoch_means(search.records()).get(e).copied().unwrap_or(f64::NAN);
        info!("epoch {e}: mean loss {mean:.4}");
    }
    let outcome = search.run()?;
    let specs = [&outcome.specs.ga, &outcome.specs.gb, &outcome.specs.da, &outcome.specs.db];
    let alphas = [&outcome.alphas.ga, &outcome.alphas.gb, &outcome.alphas.da, &outcome.alphas.db];
    for ((suffix, spec), alpha) in NET_SUFFIXES.iter().zip(specs).zip(alphas) {
        write(out, &format!("spec_{suffix}.json"), spec.to_json() + "\n")?;
        write(out, &format!("alpha_{suffix}.json"), alpha.to_json() + "\n")?;
    }
    write(out, "metrics.csv", metrics_csv(&outcome.records))?;
    let events: String = outcome.events.iter().map(|e| format!("{e}\n")).collect();
    write(out, "events.log", events)?;
    let mut trace = String::new();
    for r in &outcome.records {
        trace.push_str(&serde_json::to_string(&serde_json::json!({
            "epoch": r.epoch,
            "iter": r.iter,
            "mixture": r.mixture,
        }))?);
        trace.push('\n');
    }
    write(out, "trace.jsonl", trace)?;
    write(out, "config.json", json(&job.config)?)?;
    info!(
        "search done: {} optimizer passes over {} sampled pairs",
        outcome.optimizer_passes, outcome.sampled_pairs
    );
    Ok(())
}

fn save_stores(trained_stores: [&cyclesearch_core::params::ParamStore; 4], dir: &Path, prefix: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, store) in CHECKPOINT_NAMES.iter().zip(trained_stores) {
        checkpoint::save(store, &dir.join(format!("{prefix}{name}.ckpt")))?;
    }
    Ok(())
}

fn run_train(job: &TrainJob, out: &Path) -> Result<()> {
    job.setup.validate()?;
    let data = job.data.load()?;
    let eval = job.data.load_eval(&data)?;
    info!(
        "train: {} with H={} for {} epochs, seeds {:?}",
        job.label, job.setup.hidden, job.setup.epochs, job.seeds
    );
    let best = best_of_k(&job.setup, &data, &eval, &job.seeds, &job.label)?;
    for r in &best.reports {
        info!("seed {}: proxy_ab {:.5} proxy_ba {:.5}", r.seed, r.proxy_ab, r.proxy_ba);
    }
    let ckpt = out.join("checkpoints");
    let s = best.trained.stores();
    save_stores([s.ga, s.gb, s.da, s.db], &ckpt, "")?;
    if job.save_init {
        let init = build_nets(&job.setup, data.image_shape()[0], best.trained.seed)?;
        save_stores([init.ga.params(), init.gb.params(), init.da.params(), init.db.params()], &ckpt, "init_")?;
    }
    write(out, "setup.json", json(&job.setup)?)?;
    write(out, "data.json", json(&job.data)?)?;
    write(out, "metrics.csv", train_metrics_csv(&best.trained.records))?;
    write(
        out,
        "report.json",
        json(&serde_json::json!({
            "best": best.reports[best.best],
            "runs": best.reports,
        }))?,
    )?;
    let mut table = format!("{RESULTS_HEADER}\n");
    for r in &best.reports {
        table.push_str(&r.csv_row());
        table.push('\n');
    }
    write(out, "results.csv", table)?;
    Ok(())
}

/// Rebuilds the networks of a training run from its checkpoints.
pub fn load_trained(run: &Path, channels: usize) -> Result<(TrainSetup, Trained)> {
    let text = fs::read_to_string(run.join("setup.json")).with_context(|| format!("reading {}/setup.json", run.display()))?;
    let setup: TrainSetup =
        serde_json::from_str(&text).map_err(|e| crate::UsageError(format!("{}/setup.json: {e}", run.display())))?;
    setup.validate()?;
    let mut nets = build_nets(&setup, channels, 0)?;
    let dir = run.join("checkpoints");
    let load = |n: &str| checkpoint::load(&dir.join(format!("{n}.ckpt")));
    checkpoint::restore_into(nets.ga.params_mut(), &load("ga")?)?;
    checkpoint::restore_into(nets.gb.params_mut(), &load("gb")?)?;
    checkpoint::restore_into(nets.da.params_mut(), &load("da")?)?;
    checkpoint::restore_into(nets.db.params_mut(), &load("db")?)?;
    let seed = fs::read_to_string(run.join("report.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| v["best"]["seed"].as_u64())
        .unwrap_or(0);
    Ok((
        setup,
        Trained {
            nets,
            records: Vec::new(),
            seed,
        },
    ))
}

fn run_eval(job: &EvalJob, out: &Path) -> Result<()> {
    match job {
        EvalJob::Run {
            run,
            label,
            data,
            results,
        } => {
            let train = data.load()?;
            let eval = data.load_eval(&train)?;
            let (setup, trained) = load_trained(run, eval.image_shape()[0])?;
            let report = evaluate(&trained, &setup, &eval, label)?;
            info!("proxy_ab {:.5} proxy_ba {:.5} ratio {:.3}", report.proxy_ab, report.proxy_ba, report.ratio);
            write(out, "report.json", json(&report)?)?;
            let table = results.clone().unwrap_or_else(|| out.join("results.csv"));
            let mut text = match fs::read_to_string(&table) {
                Ok(t) if !t.is_empty() => t,
                _ => format!("{RESULTS_HEADER}\n"),
            };
            if !text.ends_with('\n') {
                text.push('\n');
            }
            text.push_str(&report.csv_row());
            text.push('\n');
            fs::write(&table, text).with_context(|| format!("writing {}", table.display()))?;
            println!("{}", report.csv_row());
        }
        EvalJob::Folders { images_x, images_y } => {
            let ds = load_unpaired(images_x, images_y)?;
            let d = proxy_frechet(ds.side(Side::A), ds.side(Side::B))?;
            write(
                out,
                "report.json",
                json(&serde_json::json!({
                    "images_x": images_x,
                    "images_y": images_y,
                    "n_x": ds.len(Side::A),
                    "n_y": ds.len(Side::B),
                    "proxy_distance": d,
                }))?,
            )?;
            println!("proxy distance {d:?}");
        }
    }
    Ok(())
}

fn run_discretize(job: &DiscretizeJob, out: &Path) -> Result<()> {
    for a in &job.alphas {
        let n = a.table.cells.len();
        let spec: ArchitectureSpec = discretize(a.table.role, n, &a.table, job.hidden)?;
        let name = format!("spec_{}.json", a.name);
        write(out, &name, spec.to_json() + "\n")?;
        info!("{} {} -> {name}", a.table.role, a.name);
    }
    Ok(())
}

/// `alpha_GA.json` becomes `GA`; other names keep their stem.
pub fn alpha_name(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    stem.strip_prefix("alpha_").map(str::to_string).unwrap_or(stem)
}
