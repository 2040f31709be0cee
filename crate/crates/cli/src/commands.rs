use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use fealm::datagen::{generate, DatasetKind, SpheresParams};
use fealm::engine::{run_pipeline, IterationReport};
use fealm::io::{read_artifact, read_csv_file, write_artifact, write_csv_file};
use fealm::preprocess::zscore;
use fealm::{validate_artifact, Constraint, DrMeasure, FealmConfig};

#[derive(Debug, Parser)]
#[command(name = "fealm", version, about = "Search projections that yield maximally different k-NN graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset as CSV.
    GenData(GenDataArgs),
    /// Run the projection search and write an artifact.
    Run(RunArgs),
    /// Serve an artifact and its data over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// spheres, spheres3class or spheres3class-entangled
    #[arg(long, default_value = "spheres3class")]
    pub kind: DatasetKind,
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub n_outer: usize,
    #[arg(long, default_value_t = 100)]
    pub n_inner: usize,
    #[arg(long, default_value_t = 0.4)]
    pub inner_ratio: f64,
    #[arg(long, default_value_t = 0.02)]
    pub noise_sd: f64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 15)]
    pub k: usize,
    #[arg(long)]
    pub m_prime: Option<usize>,
    /// scaling, scaling_ortho_scaling or no_constraint
    #[arg(long, default_value = "scaling")]
    pub constraint: Constraint,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 50)]
    pub q: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub lambda1: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub lambda2: f64,
    #[arg(long, default_value_t = 20)]
    pub r: usize,
    #[arg(long, default_value_t = 1000)]
    pub evals: usize,
    #[arg(long)]
    pub n_init: Option<usize>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stop early once a new projection adds little dissimilarity.
    #[arg(long)]
    pub early_stop: bool,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// nsd or procrustes
    #[arg(long, default_value = "nsd")]
    pub dr_measure: DrMeasure,
}

impl RunArgs {
    pub fn config(&self) -> FealmConfig {
        FealmConfig {
            k: self.k,
            m_prime: self.m_prime,
            constraint: self.constraint,
            beta: self.beta,
            q: self.q,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            r: self.r,
            n_evals: self.evals,
            n_init: self.n_init,
            n_clusters: self.clusters,
            seed: self.seed,
            early_stop: self.early_stop,
            layout_epochs: self.epochs,
            dr_measure: self.dr_measure,
        }
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, short)]
    pub artifact: PathBuf,
    #[arg(long, short)]
    pub csv: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

pub fn gen_data(args: &GenDataArgs) -> anyhow::Result<()> {
    let params = SpheresParams {
        n_outer: args.n_outer,
        n_inner: args.n_inner,
        inner_ratio: args.inner_ratio,
        noise_sd: args.noise_sd,
    };
    let data = generate(args.kind, &params, args.seed)?;
    write_csv_file(&data, &args.output).with_context(|| format!("cannot write {}", args.output.display()))?;
    println!("wrote {} rows x {} attributes to {}", data.n(), data.m(), args.output.display());
    Ok(())
}

pub fn run(args: &RunArgs, out: &mut impl Write) -> anyhow::Result<()> {
    let raw = read_csv_file(&args.input).with_context(|| format!("cannot read {}", args.input.display()))?;
    let (data, warnings) = zscore(&raw)?;
    for w in warnings {
        log::warn!("{w}");
    }
    let config = args.config();
    writeln!(out, "{} instances, {} attributes, constraint {}", data.n(), data.m(), config.constraint)?;
    let mut write_err = None;
    let artifact = run_pipeline(&data, &config, |r: &IterationReport| {
        if let Err(e) = writeln!(
            out,
            "iteration {:>3}: objective {:.6}  min dissimilarity {:.6}  evaluations {}",
            r.index, r.value, r.min_dissim, r.evaluations
        ) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    write_artifact(&artifact, &args.output).with_context(|| format!("cannot write {}", args.output.display()))?;
    writeln!(
        out,
        "{} projections, {} clusters, representatives {:?}; artifact written to {}",
        artifact.len(),
        artifact.representatives.len(),
        artifact.representatives,
        args.output.display()
    )?;
    Ok(())
}

pub fn serve(args: &ServeArgs) -> anyhow::Result<()> {
    let artifact = read_artifact(&args.artifact).with_context(|| format!("cannot read {}", args.artifact.display()))?;
    let problems = validate_artifact(&artifact);
    if !problems.is_empty() {
        bail!("invalid artifact: {}", problems.join("; "));
    }
    let raw = read_csv_file(&args.csv).with_context(|| format!("cannot read {}", args.csv.display()))?;
    let state = crate::server::AppState::new(artifact, raw)?;
    let addr = format!("{}:{}", args.host, args.port);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("cannot bind {addr}"))?;
        println!("serving on http://{addr}");
        axum::serve(listener, crate::server::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
