use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use fling::eval::{
    example1_demo, example2_check, score_graph, write_metrics_csv, Example1Config, Example2Params, MetricsRow,
};
use fling::graph::export::{read_adjacency_csv, to_dot, write_adjacency_csv, write_matrix_csv};
use fling::graph::Dag;
use fling::model::{even_grid, simulate, EffectBlocks, FunctionalDataset, Hyperparameters, SimulationConfig};
use fling::sampler::rng::named_rng;
use fling::sampler::{average_ppi, median_probability_model, run_chains, select_k, McmcConfig, PosteriorSummary};
use fling::splines::PenaltySystem;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::args::{DemoCommand, EvaluateArgs, ExportArgs, FitArgs, SimulateArgs};

/// Points at which `basis.csv` evaluates the basis functions.
const BASIS_GRID: usize = 101;

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn read_dataset(path: &Path) -> Result<FunctionalDataset> {
    FunctionalDataset::read_csv(path).with_context(|| format!("cannot load dataset {}", path.display()))
}

fn read_adjacency(path: &Path) -> Result<Dag> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(read_adjacency_csv(file, &path.display().to_string())?)
}

/// Long-format `child,parent,row,col,value` rows of the present blocks.
fn write_effects<'a, W: Write>(
    blocks: impl IntoIterator<Item = (usize, usize, &'a DMatrix<f64>)>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["child", "parent", "row", "col", "value"])?;
    for (j, l, b) in blocks {
        for r in 0..b.nrows() {
            for c in 0..b.ncols() {
                w.write_record([j, l, r, c].map(|v| v.to_string()).iter().chain([&b[(r, c)].to_string()]))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn present_blocks(effects: &EffectBlocks, p: usize) -> Vec<(usize, usize, &DMatrix<f64>)> {
    (0..p)
        .flat_map(|j| (0..p).map(move |l| (j, l)))
        .filter_map(|(j, l)| effects.get(j, l).map(|b| (j, l, b)))
        .collect()
}

#[derive(Serialize)]
struct SimulationMetadata<'a> {
    seed: u64,
    config: &'a SimulationConfig,
    noise_sd: &'a [f64],
    mean_abs_signal: &'a [f64],
    labels: &'a [String],
}

pub fn simulate_cmd(args: &SimulateArgs) -> Result<()> {
    let config = SimulationConfig {
        k_true: args.k_true,
        l_true: args.l_true,
        laplace_scale: args.laplace_scale,
        snr: args.snr,
        grid: args.grid.into(),
        edge_prob: args.edge_prob,
        ..SimulationConfig::new(args.p, args.n, args.d)
    };
    let sim = simulate(&config, &mut named_rng(args.seed, "simulation"))?;
    out_dir(&args.out)?;
    sim.dataset.write_csv(create(&args.out.join("dataset.csv"))?)?;
    write_adjacency_csv(&sim.truth.dag, create(&args.out.join("truth_adjacency.csv"))?)?;
    write_effects(present_blocks(&sim.truth.effects, args.p), create(&args.out.join("truth_effects.csv"))?)?;
    write_json(
        &args.out.join("metadata.json"),
        &SimulationMetadata {
            seed: args.seed,
            config: &config,
            noise_sd: &sim.noise_sd,
            mean_abs_signal: &sim.mean_abs_signal,
            labels: sim.dataset.labels(),
        },
    )?;
    println!(
        "simulated {} subjects x {} functions, {} true edges -> {}",
        args.n,
        args.p,
        sim.truth.dag.edge_count(),
        args.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct FitRecord<'a> {
    dataset: &'a Path,
    hyperparameters: &'a Hyperparameters,
    mcmc: &'a McmcConfig,
    k_candidates: Option<&'a [usize]>,
}

fn mcmc_config(args: &FitArgs) -> McmcConfig {
    let mut config = McmcConfig::profile(args.profile.into());
    if let Some(iterations) = args.iterations {
        config = config.with_iterations(iterations);
    }
    config.seed = args.seed;
    config.burn_in = args.burn_in.unwrap_or(config.burn_in);
    config.thin = args.thin.unwrap_or(config.thin);
    config.edge_threshold = args.threshold.unwrap_or(config.edge_threshold);
    config.chains = args.chains;
    config
}

pub fn fit_cmd(args: &FitArgs) -> Result<()> {
    let dataset = read_dataset(&args.dataset)?;
    let config = mcmc_config(args);
    config.validate()?;
    let mut hp = Hyperparameters::default();
    hp.m = args.m.unwrap_or(hp.m);
    hp.n_splines = args.l.unwrap_or(hp.n_splines);
    if let Some(k) = args.k {
        hp.k = k;
    }
    if let Some(candidates) = &args.k_candidates {
        hp.k = select_k(&dataset, &hp, candidates)?;
        log::info!("selected K = {} from {candidates:?}", hp.k);
    }
    hp.validate()?;

    let runs = run_chains(&dataset, &hp, &config)?;
    out_dir(&args.out)?;
    let penalty = PenaltySystem::cubic(hp.n_splines)?;
    let labels = dataset.labels();
    for (summary, checkpoint) in &runs {
        let dir = if runs.len() == 1 { args.out.clone() } else { args.out.join(format!("chain-{}", checkpoint.chain)) };
        out_dir(&dir)?;
        write_chain_outputs(&dir, summary, &penalty, labels, config.edge_threshold)?;
        checkpoint.save(dir.join("checkpoint.json"))?;
    }
    if runs.len() > 1 {
        let summaries: Vec<PosteriorSummary> = runs.into_iter().map(|(s, _)| s).collect();
        let ppi = average_ppi(&summaries)?;
        write_graph_outputs(&args.out, &ppi, labels, config.edge_threshold)?;
    }
    write_json(
        &args.out.join("run.json"),
        &FitRecord {
            dataset: &args.dataset,
            hyperparameters: &hp,
            mcmc: &config,
            k_candidates: args.k_candidates.as_deref(),
        },
    )?;
    println!("fit K = {} with {} chain(s) -> {}", hp.k, config.chains, args.out.display());
    Ok(())
}

/// `edge_ppi.csv`, the thresholded `adjacency.csv` and `graph.dot`.
fn write_graph_outputs(dir: &Path, ppi: &[Vec<f64>], labels: &[String], threshold: f64) -> Result<Dag> {
    write_matrix_csv(ppi, create(&dir.join("edge_ppi.csv"))?)?;
    let dag = median_probability_model(ppi, threshold);
    write_adjacency_csv(&dag, create(&dir.join("adjacency.csv"))?)?;
    write_text(&dir.join("graph.dot"), &to_dot(&dag, labels))?;
    Ok(dag)
}

fn write_chain_outputs(
    dir: &Path,
    summary: &PosteriorSummary,
    penalty: &PenaltySystem<f64>,
    labels: &[String],
    threshold: f64,
) -> Result<()> {
    write_graph_outputs(dir, &summary.edge_ppi, labels, threshold)?;
    write_basis_csv(summary, penalty, create(&dir.join("basis.csv"))?)?;

    let mut w = csv::Writer::from_writer(create(&dir.join("trace.csv"))?);
    w.write_record(["draw", "log_joint"])?;
    for (i, v) in summary.log_joint_trace.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;

    let p = summary.p;
    let means = (0..p)
        .flat_map(|j| (0..p).map(move |l| (j, l)))
        .filter_map(|(j, l)| summary.effect_mean[j * p + l].as_ref().map(|b| (j, l, b)));
    write_effects(means, create(&dir.join("b_mean.csv"))?)?;
    write_json(&dir.join("summary.json"), summary)
}

/// Posterior mean basis functions on an even grid. A basis function is only
/// defined up to sign, so each draw is first aligned with the last one.
fn write_basis_csv<W: Write>(summary: &PosteriorSummary, penalty: &PenaltySystem<f64>, out: W) -> Result<()> {
    let Some(reference) = summary.basis_draws.last() else {
        bail!("the chain retained no draws");
    };
    let j = penalty.gram();
    let mut mean = DMatrix::zeros(reference.nrows(), reference.ncols());
    for draw in &summary.basis_draws {
        for k in 0..draw.nrows() {
            let agreement = (draw.row(k) * j * reference.row(k).transpose())[(0, 0)];
            let sign = if agreement < 0.0 { -1.0 } else { 1.0 };
            let mut row = mean.row_mut(k);
            row += draw.row(k) * sign;
        }
    }
    mean /= summary.basis_draws.len() as f64;
    let grid = even_grid(BASIS_GRID);
    let values = penalty.btilde_design(&grid)? * mean.transpose();

    let mut w = csv::Writer::from_writer(out);
    let header = std::iter::once("t".to_string()).chain((1..=values.ncols()).map(|k| format!("phi_{k}")));
    w.write_record(header)?;
    for (r, t) in grid.iter().enumerate() {
        w.write_record(std::iter::once(t.to_string()).chain(values.row(r).iter().map(|v| v.to_string())))?;
    }
    w.flush()?;
    Ok(())
}

pub fn evaluate_cmd(args: &EvaluateArgs) -> Result<()> {
    let estimated = read_adjacency(&args.estimated)?;
    let truth = read_adjacency(&args.truth)?;
    let scores = score_graph(&estimated, &truth)?;
    let (n, d) = match &args.dataset {
        Some(path) => {
            let ds = read_dataset(path)?;
            (ds.n(), ds.max_grid_len())
        }
        None => (0, 0),
    };
    let row = MetricsRow { seed: args.seed, p: truth.p(), d, n, tpr: scores.tpr, fdr: scores.fdr, mcc: scores.mcc };
    match &args.out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                out_dir(parent)?;
            }
            write_metrics_csv(&[row], create(path)?)?;
        }
        None => write_metrics_csv(&[row], std::io::stdout().lock())?,
    }
    Ok(())
}

pub fn demo_cmd(which: &DemoCommand) -> Result<()> {
    match which {
        DemoCommand::Example1 { out, seed, n } => {
            let config = Example1Config { n: *n, ..Example1Config::default() };
            let demo = example1_demo(&config, &mut named_rng(*seed, "demo"))?;
            out_dir(out)?;
            demo.write_csv(create(&out.join("example1_slopes.csv"))?)?;
            let spread = demo.spread();
            println!(
                "pooled slopes: causal {:.4}, anti-causal {:.4}",
                demo.pooled.causal, demo.pooled.anti_causal
            );
            println!(
                "spread across {} groups: causal {:.4}, anti-causal {:.4}",
                demo.groups.len(),
                spread.causal,
                spread.anti_causal
            );
        }
        DemoCommand::Example2 { out, b, tau1, tau2, sigma1, sigma2, tau1_prime, sigma1_prime } => {
            let params = Example2Params {
                b: *b,
                tau1: *tau1,
                tau2: *tau2,
                sigma1: *sigma1,
                sigma2: *sigma2,
                tau1_prime: *tau1_prime,
                sigma1_prime: *sigma1_prime,
            };
            let verdict = example2_check(&params)
                .context("no anti-causal Gaussian model reproduces these parameters")?;
            out_dir(out)?;
            #[derive(Serialize)]
            struct Certificate<'a> {
                params: &'a Example2Params<f64>,
                verdict: &'a fling::eval::Example2Verdict<f64>,
            }
            write_json(&out.join("example2_certificate.json"), &Certificate { params: &params, verdict: &verdict })?;
            println!(
                "anti-causal b' = {:.6}, tau2' = {:.6}, sigma2' = {:.6}; max covariance difference {:.3e}",
                verdict.b_prime, verdict.tau2_prime, verdict.sigma2_prime, verdict.max_difference
            );
        }
    }
    Ok(())
}

pub fn export_cmd(args: &ExportArgs) -> Result<()> {
    if !(args.threshold > 0.0 && args.threshold < 1.0) {
        bail!("threshold {} outside (0, 1)", args.threshold);
    }
    let file = File::open(&args.summary).with_context(|| format!("cannot open {}", args.summary.display()))?;
    let summary: PosteriorSummary = serde_json::from_reader(std::io::BufReader::new(file))
        .with_context(|| format!("{} is not a posterior summary", args.summary.display()))?;
    summary.validate()?;
    let labels = match &args.dataset {
        Some(path) => read_dataset(path)?.labels().to_vec(),
        None => Vec::new(),
    };
    if !labels.is_empty() && labels.len() != summary.p {
        bail!("dataset has {} functions, summary has {}", labels.len(), summary.p);
    }
    out_dir(&args.out)?;
    let dag = write_graph_outputs(&args.out, &summary.edge_ppi, &labels, args.threshold)?;
    println!("{} edges at threshold {} -> {}", dag.edge_count(), args.threshold, args.out.display());
    Ok(())
}
