use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lteu_core::harness::{run_with_learners, Algorithm, Learner};
use lteu_core::ScenarioConfig;
use lteu_sim::checkpoint::write_agent;
use lteu_sim::coexistence::coexistence_sweep;
use lteu_sim::fmt::{opt_sig9, sig9};
use lteu_sim::monte_carlo::monte_carlo;
use lteu_sim::ne_check::{cellular_ne_check, learn_and_check, NeCheck, DEFAULT_HORIZON, DEFAULT_REL_GAP};
use lteu_sim::output::{self, Summary};
use lteu_sim::small_game::read_small_game;
use lteu_sim::sweep::{sweep, Axis};
use lteu_sim::config;

#[derive(Parser)]
#[command(name = "lteu", version, about = "LTE-U resource allocation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML, or JSON by extension). Defaults apply otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set n_sbs=6` or `--set wifi.cw_min=32`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Base seed; replaces `rng_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn config(&self) -> Result<ScenarioConfig> {
        let mut c = config::load(self.config.as_deref())?;
        c = config::apply_overrides(c, &self.overrides)?;
        if let Some(seed) = self.seed {
            c.rng_seed = seed;
        }
        Ok(c)
    }

    fn prepare(&self, c: &ScenarioConfig) -> Result<()> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        write_text(&self.out.join("config_echo.toml"), &config::echo(c))
    }
}

#[derive(Subcommand)]
enum Command {
    /// One detailed run (trace, user rates, checkpoints) plus a Monte-Carlo
    /// batch for the rate CDF and summary.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "esn")]
        algorithm: Algorithm,
        /// Monte-Carlo replications, seeds `seed..seed+runs`.
        #[arg(long, default_value_t = 1)]
        runs: usize,
    },
    /// Monte-Carlo batches over one scenario parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// n_sbs, n_users, r_w or n_wifi.
        #[arg(long)]
        axis: Axis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Defaults to all four algorithms.
        #[arg(long, value_delimiter = ',')]
        algorithms: Vec<Algorithm>,
        #[arg(long, default_value_t = 20)]
        runs: usize,
    },
    /// WiFi transmission probability, saturation throughput and LTE-U share
    /// over station counts and rate requirements.
    Coexistence {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,6,8,10")]
        n_wifi: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1e6,2e6,4e6,6e6,8e6")]
        rates: Vec<f64>,
    },
    /// Learn with ESN agents on small games and test the learned profile
    /// for equilibrium by full enumeration.
    NeCheck {
        #[command(flatten)]
        common: Common,
        /// A small-game text file; tiny cellular games are used otherwise.
        #[arg(long)]
        game: Option<PathBuf>,
        /// Number of tiny cellular games (seeds `seed..seed+games`).
        #[arg(long, default_value_t = 20)]
        games: usize,
        /// Rounds of play per game; 0 uses the config's stopping rule.
        #[arg(long, default_value_t = DEFAULT_HORIZON)]
        horizon: usize,
        /// Tolerated value gap relative to the largest expected utility.
        #[arg(long, default_value_t = DEFAULT_REL_GAP)]
        rel_gap: f64,
    },
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { common, algorithm, runs } => cmd_run(&common, algorithm, runs),
        Command::Sweep { common, axis, values, algorithms, runs } => cmd_sweep(&common, axis, &values, &algorithms, runs),
        Command::Coexistence { common, n_wifi, rates } => cmd_coexistence(&common, &n_wifi, &rates),
        Command::NeCheck { common, game, games, horizon, rel_gap } => {
            cmd_ne_check(&common, game.as_deref(), games, (horizon > 0).then_some(horizon), rel_gap)
        }
    }
}

fn cmd_run(common: &Common, algorithm: Algorithm, runs: usize) -> Result<()> {
    if runs == 0 {
        bail!("--runs must be at least 1");
    }
    let c = common.config()?;
    common.prepare(&c)?;
    let out = &common.out;
    let (result, learners) = run_with_learners(&c, algorithm, c.rng_seed)?;
    output::write_trace(create(&out.join("trace.csv"))?, &result.records)?;
    output::write_user_rates(create(&out.join("user_rates.csv"))?, &result.final_rates)?;
    for (bs, learner) in learners.iter().enumerate() {
        if let Learner::Esn(agent) = learner {
            let dir = out.join("checkpoints");
            fs::create_dir_all(&dir)?;
            write_text(&dir.join(format!("bs{bs}.txt")), &write_agent(agent))?;
        }
    }
    let agg = monte_carlo(&c, algorithm, runs, c.rng_seed)?;
    output::write_cdf(create(&out.join("cdf.csv"))?, &[(algorithm.name().to_string(), agg.pooled_rates.clone())])?;

    let m = &result.metrics;
    let mut s = Summary::default();
    s.text("algorithm", algorithm)
        .text("seed", c.rng_seed)
        .float("lte_fraction", result.lte.fraction)
        .text("wifi_overload", result.lte.overload)
        .text("converged_at", opt_sig9(result.converged_at.map(|t| t as f64)))
        .text("rounds", result.records.len())
        .float("sum_rate_bps", m.sum_rate)
        .float("sum_rate_dl_bps", m.sum_rate_dl)
        .float("sum_rate_ul_bps", m.sum_rate_ul)
        .float("median_user_rate_bps", m.median_user_rate)
        .text("decoupled_users", m.decoupled_users)
        .text("audit.wifi_guarantee", result.audit.wifi_guarantee)
        .text("audit.feasibility_violations", result.audit.feasibility_violations)
        .float("audit.max_reward_error", result.audit.max_reward_error)
        .aggregate("mc", &agg);
    let text = s.render();
    write_text(&out.join("summary.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_sweep(common: &Common, axis: Axis, values: &[f64], algorithms: &[Algorithm], runs: usize) -> Result<()> {
    let c = common.config()?;
    common.prepare(&c)?;
    let algorithms = if algorithms.is_empty() { &Algorithm::ALL[..] } else { algorithms };
    let rows = sweep(&c, axis, values, algorithms, runs, c.rng_seed)?;
    output::write_sweep(create(&common.out.join("sweep.csv"))?, &rows)?;
    let series: Vec<(String, Vec<f64>)> = rows
        .iter()
        .map(|r| (format!("{}@{}={}", r.aggregate.algorithm, axis, sig9(r.value)), r.aggregate.pooled_rates.clone()))
        .collect();
    output::write_cdf(create(&common.out.join("cdf.csv"))?, &series)?;
    let mut s = Summary::default();
    s.text("axis", axis).text("runs_per_point", runs).text("base_seed", c.rng_seed);
    for r in &rows {
        s.aggregate(&format!("{}.{}={}", r.aggregate.algorithm, axis, sig9(r.value)), &r.aggregate);
    }
    let text = s.render();
    write_text(&common.out.join("summary.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_coexistence(common: &Common, n_wifi: &[usize], rates: &[f64]) -> Result<()> {
    let c = common.config()?;
    common.prepare(&c)?;
    let rows = coexistence_sweep(&c.wifi, n_wifi, rates)?;
    output::write_coexistence(create(&common.out.join("coexistence.csv"))?, &rows)?;
    let mut s = Summary::default();
    s.text("points", rows.len()).text("overloaded_points", rows.iter().filter(|r| r.overload).count());
    let text = s.render();
    write_text(&common.out.join("summary.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_ne_check(common: &Common, game: Option<&Path>, games: usize, horizon: Option<usize>, rel_gap: f64) -> Result<()> {
    let c = common.config()?;
    common.prepare(&c)?;
    let checks: Vec<NeCheck> = match game {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let g = read_small_game(&text)?;
            vec![learn_and_check(&g, &c, c.rng_seed, horizon, rel_gap)?]
        }
        None => (0..games as u64)
            .map(|i| cellular_ne_check(&c, c.rng_seed.wrapping_add(i), horizon, rel_gap))
            .collect::<Result<_, _>>()?,
    };
    let mut w = csv::Writer::from_writer(create(&common.out.join("ne_check.csv"))?);
    w.write_record(["seed", "player", "peak", "peak_value", "best_action", "best_value", "gain", "tolerance", "passed"])?;
    for check in &checks {
        for p in &check.players {
            w.write_record([
                check.seed.to_string(),
                p.player.to_string(),
                p.peak.to_string(),
                sig9(p.peak_value),
                p.best_action.to_string(),
                sig9(p.best_value),
                sig9(p.gain),
                sig9(p.tolerance),
                p.passed.to_string(),
            ])?;
        }
    }
    w.flush()?;
    let passed = checks.iter().filter(|c| c.passed).count();
    let mut s = Summary::default();
    s.text("games", checks.len())
        .text("passed", passed)
        .float("pass_fraction", passed as f64 / checks.len().max(1) as f64)
        .float("rel_gap", rel_gap)
        .text("horizon", horizon.map_or_else(|| "stopping rule".to_string(), |h| h.to_string()));
    let text = s.render();
    write_text(&common.out.join("summary.txt"), &text)?;
    print!("{text}");
    Ok(())
}
