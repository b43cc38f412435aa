use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "seedplan",
    version,
    about = "Seeder efficiency, diffusion schemes and dimensioning for P2P live streaming"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analytic efficiency of every seeder and of the chosen set.
    Efficiency(EfficiencyArgs),
    /// Build a diffusion scheme and its plan.
    Scheme(SchemeArgs),
    /// Check a scheme file against a scenario.
    Validate(ValidateArgs),
    /// Exhaustive search for the best scheme on a tiny scenario.
    Oracle(OracleArgs),
    /// Seeder upload needed for a scalable system.
    Dimension(DimensionArgs),
    /// Curve data as CSV.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Perfect,
    Fanout,
    Overhead,
}

impl From<ModelArg> for seedplan::Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Perfect => seedplan::Model::Perfect,
            ModelArg::Fanout => seedplan::Model::Fanout,
            ModelArg::Overhead => seedplan::Model::Overhead,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OverheadArg {
    /// `r = 100, a = 0.1, b = 1.7`
    Small,
    /// `r = 100, a = 0.1, b = 25`
    Large,
}

impl From<OverheadArg> for seedplan::StreamParams {
    fn from(o: OverheadArg) -> Self {
        match o {
            OverheadArg::Small => seedplan::StreamParams::small_overhead(),
            OverheadArg::Large => seedplan::StreamParams::large_overhead(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BuilderArg {
    Perfect,
    Homogeneous,
    Monorate,
    Dichotomic,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario JSON file.
    #[arg(long, value_name = "PATH")]
    pub scenario: PathBuf,
    /// Replace the scenario's stream parameters with a preset.
    #[arg(long, value_enum)]
    pub overhead: Option<OverheadArg>,
    /// Seeder ids, e.g. `0,2` or `S0,S2`; all seeders when omitted.
    #[arg(long, value_name = "IDS")]
    pub subset: Option<String>,
}

#[derive(Debug, Args)]
pub struct EfficiencyArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Restrict the report to one model.
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SchemeArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, value_enum, default_value = "overhead")]
    pub model: ModelArg,
    /// Construction to use; follows the model when omitted.
    #[arg(long, value_enum)]
    pub builder: Option<BuilderArg>,
    #[arg(long, value_name = "K", value_parser = clap::value_parser!(u32).range(1..))]
    pub slots: Option<u32>,
    #[arg(long, value_name = "N")]
    pub kmax: Option<u32>,
    /// Scheme file; the plan goes next to it as `<PATH>.plan.json`.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, value_name = "PATH")]
    pub scheme: PathBuf,
    /// Without a scenario only flow checks run (possession, overlap, completeness).
    #[arg(long, value_name = "PATH")]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub overhead: Option<OverheadArg>,
    #[arg(long, value_enum, default_value = "overhead")]
    pub model: ModelArg,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, value_enum, default_value = "fanout")]
    pub model: ModelArg,
    #[arg(long, value_name = "K", default_value_t = 6, value_parser = clap::value_parser!(u32).range(1..))]
    pub slots: u32,
    /// JSON report; the witness scheme goes to `<PATH>.scheme.json`.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DimensionArgs {
    /// Stream parameters come from this scenario's stream block.
    #[arg(long, value_name = "PATH")]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub overhead: Option<OverheadArg>,
    /// Seeders per leecher.
    #[arg(long, default_value_t = 1.0, conflicts_with = "beta_range")]
    pub beta: f64,
    #[arg(long, value_name = "LO:HI:STEP")]
    pub beta_range: Option<String>,
    /// Leecher efficiency; the overhead ceiling when omitted.
    #[arg(long)]
    pub eta_leecher: Option<f64>,
    /// Leechers each seeder can reach; unbounded when omitted.
    #[arg(long)]
    pub leechers: Option<u64>,
    /// Largest upload searched.
    #[arg(long, default_value_t = 1e6)]
    pub cap: f64,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// One of eta_vs_u, eta_rel_vs_u, input_r_vs_u, bin_vs_opt, u_vs_beta, general_vs_sender.
    #[arg(long, value_name = "NAME")]
    pub generator: String,
    #[arg(long, value_name = "PATH")]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub overhead: Option<OverheadArg>,
    /// Upload range; defaults to `2b+0.1:2000:0.1`.
    #[arg(long, value_name = "LO:HI:STEP")]
    pub range: Option<String>,
    /// Seeder-ratio range for `u_vs_beta`; defaults to `0:4:0.05`.
    #[arg(long, value_name = "LO:HI:STEP")]
    pub beta_range: Option<String>,
    #[arg(long, value_name = "N")]
    pub kmax: Option<u32>,
    /// Leechers each seeder can reach.
    #[arg(long, default_value_t = 1000)]
    pub leechers: u64,
    /// CSV file; standard output when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}
