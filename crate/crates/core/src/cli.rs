//! Command-line front end: `icedist <command>`.
//!
//! Every command writes into an output directory that ends up holding the
//! command's artifacts and one `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    coverage_study, diagnostics, diagnostics_report, ice_distribution, posterior_predictive_check, CoverageOptions,
    Diagnostics, HarmDirection, IceOptions, PpcOptions, PpcReport, Quantity,
};
use crate::analysis::kde::DensityGrid;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lmm::select_confounders;
use crate::mcmc::{run_chains, PosteriorDraws};
use crate::model::{ChainConfig, ModelKind, ModelSpec, PriorSpec, Z1Storage};
use crate::plot;
use crate::rng::seeded;
use crate::scm::{simulate, ScmConfig};
use crate::variance::{bound_surface, variance_report};

#[derive(Debug, Parser)]
#[command(name = "icedist", version, about = "Individual causal effect distributions with causal mixed models")]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset and its hidden potential outcomes.
    Simulate(SimulateArgs),
    /// Fit a causal mixed model by MCMC.
    Fit(FitArgs),
    /// R-hat and effective sample sizes of a fit.
    Diagnose(DiagnoseArgs),
    /// Posterior summary of the individual causal effect distribution.
    Ice(IceArgs),
    /// Posterior predictive check per stratum.
    Ppc(PpcArgs),
    /// Moment-based identification and bounds of the effect variance.
    Variance(VarianceArgs),
    /// Two-phase confounder selection with Gaussian mixed models.
    SelectConfounders(SelectArgs),
    /// Repeated simulate-and-fit calibration study.
    Coverage(CoverageArgs),
    /// Render SVG plots from earlier outputs.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct ScmSource {
    /// Built-in configuration (fig3-gaussian, fig3-lognormal, fig3-mixture, fig1-narrow, fig1-wide).
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// JSON simulator configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl ScmSource {
    fn load(&self) -> Result<ScmConfig> {
        match (&self.preset, &self.config) {
            (Some(p), _) => ScmConfig::preset(p),
            (None, Some(path)) => ScmConfig::read_json(path),
            (None, None) => Err(Error::Argument("one of --preset or --config is required".into())),
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scm: ScmSource,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Scale {
    Desk,
    Paper,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    /// JSON chain configuration; flags below override its fields.
    #[arg(long = "chain-config")]
    pub chain_config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Scale::Desk)]
    pub scale: Scale,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub burn: Option<usize>,
    #[arg(long)]
    pub iter: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
}

impl ChainArgs {
    fn resolve(&self) -> Result<ChainConfig> {
        let mut cc = match &self.chain_config {
            Some(path) => read_json::<ChainConfig>(path)?,
            None => match self.scale {
                Scale::Desk => ChainConfig::desk(1),
                Scale::Paper => ChainConfig::paper(1),
            },
        };
        if let Some(v) = self.seed {
            cc.seed = v;
        }
        if let Some(v) = self.chains {
            cc.n_chains = v;
        }
        if let Some(v) = self.burn {
            cc.n_burn = v;
        }
        if let Some(v) = self.iter {
            cc.n_iter = v;
        }
        if let Some(v) = self.thin {
            cc.thin = v;
        }
        cc.validate()?;
        Ok(cc)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Gaussian,
    Mixture,
    FlexResidual,
    ConfHet,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON model specification; overrides the model flags.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = KindArg::Mixture)]
    pub kind: KindArg,
    #[arg(long, default_value_t = 5)]
    pub k_effect: usize,
    /// Residual components for flex-residual and conf-het models.
    #[arg(long, default_value_t = 3)]
    pub k_residual: usize,
    /// Confounders receiving dichotomized random effects (conf-het).
    #[arg(long, value_delimiter = ',')]
    pub het: Vec<String>,
    /// Confounders used as fixed effects (default: every data column).
    #[arg(long, value_delimiter = ',')]
    pub confounders: Option<Vec<String>>,
    /// JSON prior specification.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Latent effects stored per iteration: none, all, or a count.
    #[arg(long, default_value = "256")]
    pub z1: String,
    #[command(flatten)]
    pub chain: ChainArgs,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Quantities to diagnose (parameter names, ate, effect_variance, tbr);
    /// default: a standard set.
    #[arg(long, value_delimiter = ',')]
    pub quantity: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum HarmArg {
    Positive,
    Negative,
}

#[derive(Debug, Args)]
pub struct IceArgs {
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = HarmArg::Positive)]
    pub harm_direction: HarmArg,
    #[arg(long, default_value_t = 500)]
    pub band_iterations: usize,
}

#[derive(Debug, Args)]
pub struct PpcArgs {
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub strata: Vec<String>,
    #[arg(long, default_value_t = 500)]
    pub replicates: usize,
    #[arg(long)]
    pub all_iterations: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct VarianceArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Confounders defining strata.
    #[arg(long, value_delimiter = ',')]
    pub by: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Candidate confounders (default: every data column).
    #[arg(long, value_delimiter = ',')]
    pub candidates: Option<Vec<String>>,
    #[arg(long, default_value_t = 0.05)]
    pub mean_threshold: f64,
    #[arg(long, default_value_t = 0.10)]
    pub var_threshold: f64,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    #[command(flatten)]
    pub scm: ScmSource,
    #[arg(long)]
    pub replicates: usize,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub k_effect: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub chain: ChainArgs,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Output directory of `icedist ice`.
    #[arg(long)]
    pub ice: Option<PathBuf>,
    /// Overlay the true effect density of a preset on the ICE plot.
    #[arg(long, requires = "ice")]
    pub truth_preset: Option<String>,
    /// Output directory of `icedist ppc`.
    #[arg(long)]
    pub ppc: Option<PathBuf>,
    /// Draw the variance lower-bound surface up to these maxima.
    #[arg(long, num_args = 2, value_names = ["VAR0_MAX", "DIFF_MAX"])]
    pub bounds: Option<Vec<f64>>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    /// SHA-256 of the canonical JSON of `config`.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub version: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Excluded from reproducibility comparisons, as is `wall_time_seconds`.
    pub timestamp_unix: u64,
    pub wall_time_seconds: f64,
}

impl RunManifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        read_json(dir.as_ref().join(Self::FILE))
    }
}

pub fn config_hash(config: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(config.to_string().as_bytes()))
}

fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Collects what a command did and writes its manifest.
struct Run {
    command: &'static str,
    out: PathBuf,
    started: Instant,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

impl Run {
    fn start(command: &'static str, out: &Path, inputs: &[&Path]) -> Result<Self> {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        Ok(Self {
            command,
            out: out.to_path_buf(),
            started: Instant::now(),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out.join(name)
    }

    fn finish<C: Serialize>(self, config: &C, seed: Option<u64>) -> Result<()> {
        let config = serde_json::to_value(config).map_err(|e| Error::parse(&self.out, e))?;
        let manifest = RunManifest {
            command: self.command.to_string(),
            config_hash: config_hash(&config),
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: self.inputs,
            outputs: self.outputs,
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
        };
        write_json(&self.out.join(RunManifest::FILE), &manifest)
    }
}

fn simulate_cmd(a: &SimulateArgs) -> Result<()> {
    let cfg = a.scm.load()?;
    let (ds, truth) = simulate(&cfg, a.n, &mut seeded(a.seed))?;
    let mut run = Run::start("simulate", &a.out, &a.scm.config.iter().map(|p| p.as_path()).collect::<Vec<_>>())?;
    ds.write_csv(run.path("data.csv"))?;
    truth.write_csv(run.path("truth.csv"))?;
    write_json(&run.path("scm.json"), &cfg)?;
    #[derive(Serialize)]
    struct Config<'a> {
        scm: &'a ScmConfig,
        preset: &'a Option<String>,
        n: usize,
    }
    run.finish(&Config { scm: &cfg, preset: &a.scm.preset, n: a.n }, Some(a.seed))
}

fn parse_storage(s: &str) -> Result<Z1Storage> {
    match s {
        "none" => Ok(Z1Storage::None),
        "all" => Ok(Z1Storage::All),
        n => n
            .parse()
            .map(Z1Storage::Subset)
            .map_err(|_| Error::Argument(format!("--z1 expects none, all or a count, got `{n}`"))),
    }
}

fn fit_cmd(a: &FitArgs) -> Result<()> {
    let mut ds = Dataset::read_csv(&a.data)?;
    if let Some(c) = &a.confounders {
        ds = ds.select(c)?;
    }
    let model = match &a.model {
        Some(path) => read_json::<ModelSpec>(path)?,
        None => match a.kind {
            KindArg::Gaussian => ModelSpec::gaussian(),
            KindArg::Mixture => ModelSpec::mixture(a.k_effect),
            KindArg::FlexResidual => ModelSpec::flex_residual(a.k_effect, a.k_residual),
            KindArg::ConfHet => ModelSpec::conf_het(a.k_effect, a.k_residual, a.het.clone()),
        },
    };
    if !a.het.is_empty() && model.kind != ModelKind::MixtureLmmConfHet {
        return Err(Error::Argument("--het requires the conf-het model".into()));
    }
    let prior = match &a.prior {
        Some(path) => read_json::<PriorSpec>(path)?,
        None => PriorSpec::default(),
    };
    let mut cc = a.chain.resolve()?;
    cc.z1_storage = parse_storage(&a.z1)?;
    let mut inputs = vec![a.data.as_path()];
    inputs.extend(a.model.iter().chain(&a.prior).chain(&a.chain.chain_config).map(|p| p.as_path()));
    let mut run = Run::start("fit", &a.out, &inputs)?;
    let draws = run_chains(&ds, &model, &prior, &cc)?;
    draws.write_dir(&a.out)?;
    run.outputs.push("draws.json".into());
    run.outputs.extend((0..draws.n_chains()).map(|k| format!("chain_{k}.csv")));
    run.outputs.push("z1.csv".into());
    let rejected = draws.rejected_weight_proposals();
    if rejected > 0 {
        eprintln!("warning: {rejected} residual-weight proposals rejected (last weight below 1e-6)");
    }
    #[derive(Serialize)]
    struct Config<'a> {
        model: &'a ModelSpec,
        prior: &'a PriorSpec,
        chains: &'a ChainConfig,
        confounders: &'a [String],
    }
    run.finish(&Config { model: &model, prior: &prior, chains: &cc, confounders: ds.names() }, Some(cc.seed))
}

fn diagnose_cmd(a: &DiagnoseArgs) -> Result<()> {
    let draws = PosteriorDraws::read_dir(&a.draws)?;
    let mut run = Run::start("diagnose", &a.out, &[&a.draws])?;
    let report: Vec<(String, Diagnostics)> = if a.quantity.is_empty() {
        diagnostics_report(&draws)?
    } else {
        a.quantity
            .iter()
            .map(|q| {
                let quantity: Quantity = q.parse()?;
                Ok((quantity.to_string(), diagnostics(&draws, &quantity)?))
            })
            .collect::<Result<_>>()?
    };
    #[derive(Serialize)]
    struct Row<'a> {
        quantity: &'a str,
        #[serde(flatten)]
        diagnostics: &'a Diagnostics,
    }
    let rows: Vec<Row> = report.iter().map(|(q, d)| Row { quantity: q, diagnostics: d }).collect();
    for r in &rows {
        if let Some(note) = &r.diagnostics.note {
            eprintln!("warning: {}: {note}", r.quantity);
        }
    }
    write_json(&run.path("diagnostics.json"), &rows)?;
    run.finish(&serde_json::json!({ "quantities": a.quantity }), Some(draws.config.seed))
}

fn ice_cmd(a: &IceArgs) -> Result<()> {
    let draws = PosteriorDraws::read_dir(&a.draws)?;
    let opts = IceOptions {
        harm_direction: match a.harm_direction {
            HarmArg::Positive => HarmDirection::Positive,
            HarmArg::Negative => HarmDirection::Negative,
        },
        band_iterations: a.band_iterations,
    };
    let mut run = Run::start("ice", &a.out, &[&a.draws])?;
    let summary = ice_distribution(&draws, &opts)?;
    write_json(&run.path("ice.json"), &summary)?;
    summary.density.write_csv(run.path("density.csv"))?;
    run.finish(&opts, Some(draws.config.seed))
}

fn ppc_cmd(a: &PpcArgs) -> Result<()> {
    let draws = PosteriorDraws::read_dir(&a.draws)?;
    let ds = Dataset::read_csv(&a.data)?;
    let opts = PpcOptions {
        replicates: a.replicates,
        all_iterations: a.all_iterations,
        strata: a.strata.clone(),
        seed: a.seed,
        ..PpcOptions::default()
    };
    let mut run = Run::start("ppc", &a.out, &[&a.draws, &a.data])?;
    let report = posterior_predictive_check(&draws, &ds, &opts)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    write_json(&run.path("ppc.json"), &report)?;
    report.write_csv(run.path("ppc.csv"))?;
    run.finish(&opts, Some(a.seed))
}

fn variance_cmd(a: &VarianceArgs) -> Result<()> {
    let ds = Dataset::read_csv(&a.data)?;
    let mut run = Run::start("variance", &a.out, &[&a.data])?;
    let report = variance_report(&ds, &a.by)?;
    for s in &report.skipped {
        eprintln!("warning: {s}");
    }
    write_json(&run.path("variance.json"), &report)?;
    run.finish(&serde_json::json!({ "by": a.by }), None)
}

fn select_cmd(a: &SelectArgs) -> Result<()> {
    let ds = Dataset::read_csv(&a.data)?;
    let candidates = a.candidates.clone().unwrap_or_else(|| ds.names().to_vec());
    let mut run = Run::start("select-confounders", &a.out, &[&a.data])?;
    let sel = select_confounders(&ds, &candidates, a.mean_threshold, a.var_threshold)?;
    write_json(&run.path("selection.json"), &sel)?;
    run.finish(
        &serde_json::json!({ "candidates": candidates, "mean_threshold": a.mean_threshold, "var_threshold": a.var_threshold }),
        None,
    )
}

fn coverage_cmd(a: &CoverageArgs) -> Result<()> {
    let scm = a.scm.load()?;
    let cc = a.chain.resolve()?;
    let mut opts = CoverageOptions::new(a.replicates, a.n, cc);
    opts.model = ModelSpec::mixture(a.k_effect);
    let mut run = Run::start("coverage", &a.out, &a.scm.config.iter().map(|p| p.as_path()).collect::<Vec<_>>())?;
    let table = coverage_study(&scm, &opts)?;
    for (r, e) in &table.failures {
        eprintln!("warning: replicate {r} failed: {e}");
    }
    table.write_csv(run.path("coverage.csv"))?;
    write_json(&run.path("coverage.json"), &table)?;
    #[derive(Serialize)]
    struct Config<'a> {
        scm: &'a ScmConfig,
        options: &'a CoverageOptions,
    }
    run.finish(&Config { scm: &scm, options: &opts }, Some(opts.seed))
}

fn plot_cmd(a: &PlotArgs) -> Result<()> {
    if a.ice.is_none() && a.ppc.is_none() && a.bounds.is_none() {
        return Err(Error::Argument("nothing to plot: give --ice, --ppc or --bounds".into()));
    }
    let inputs: Vec<&Path> = a.ice.iter().chain(&a.ppc).map(|p| p.as_path()).collect();
    let mut run = Run::start("plot", &a.out, &inputs)?;
    if let Some(dir) = &a.ice {
        let value: serde_json::Value = read_json(dir.join("ice.json"))?;
        let density: DensityGrid = serde_json::from_value(value["density"].clone())
            .map_err(|e| Error::parse(dir.join("ice.json"), e))?;
        let truth = match &a.truth_preset {
            Some(p) => {
                let law = ScmConfig::preset(p)?.ice_law()?;
                // Central differences of the true CDF on the plot grid.
                let h = 1e-4 * (1.0 + density.y.iter().fold(0.0f64, |m, y| m.max(y.abs())));
                Some(density.y.iter().map(|y| (law.cdf(y + h) - law.cdf(y - h)) / (2.0 * h)).collect::<Vec<_>>())
            }
            None => None,
        };
        write_text(&run.path("ice.svg"), &plot::density_svg(&density, "posterior ICE density", truth.as_deref()))?;
    }
    if let Some(dir) = &a.ppc {
        let report: PpcReport = read_json(dir.join("ppc.json"))?;
        write_text(&run.path("ppc.svg"), &plot::ppc_svg(&report))?;
    }
    if let Some(b) = &a.bounds {
        write_text(&run.path("bounds.svg"), &plot::bound_surface_svg(&bound_surface(b[0], b[1], 41)))?;
    }
    run.finish(&serde_json::json!({ "truth_preset": a.truth_preset, "bounds": a.bounds }), None)
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        // Fails only if a pool already exists, in which case it is reused.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    match &cli.command {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Diagnose(a) => diagnose_cmd(a),
        Command::Ice(a) => ice_cmd(a),
        Command::Ppc(a) => ppc_cmd(a),
        Command::Variance(a) => variance_cmd(a),
        Command::SelectConfounders(a) => select_cmd(a),
        Command::Coverage(a) => coverage_cmd(a),
        Command::Plot(a) => plot_cmd(a),
    }
}

/// Entry point of the binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
