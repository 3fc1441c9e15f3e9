//! Command-line harness around the tinyptr experiment runners.
//!
//! Each subcommand builds an `ExperimentConfig`, runs it, and writes the
//! report to stdout or `--out`. The process exits 0 only if every gated
//! metric passed. Output is byte-identical for identical arguments; set
//! `TINYPTR_THREADS` to cap the worker pool (trials still produce the same
//! numbers at any thread count because every trial derives its own seed).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tinyptr::experiments::{run, ExperimentConfig, Report};

#[derive(Parser)]
#[command(name = "tinyptr", about = "Dereference-table experiment harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Single,
    Dleft,
    Iceberg,
}

#[derive(Args)]
struct Common {
    /// Slot count (or dictionary capacity / bin count, per subcommand)
    #[arg(long, default_value_t = 1 << 16)]
    n: usize,

    /// Headroom fraction; tables hold up to (1 - delta) * n keys
    #[arg(long, default_value_t = 0.25)]
    delta: f64,

    /// Average load per bin (ballsbins) or value width in bits (stable-dict)
    #[arg(long, default_value_t = 4)]
    h: usize,

    /// Hash choices per ball for the d-left and iceberg rules
    #[arg(long, default_value_t = 2)]
    d: usize,

    /// Operations per trial
    #[arg(long, default_value_t = 1_000_000)]
    ops: usize,

    /// Independent trials; each derives its own seed from --seed
    #[arg(long, default_value_t = 1)]
    trials: usize,

    /// Master seed
    #[arg(long, default_value_t = 7)]
    seed: u64,

    /// Report format
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    output: OutputFormat,

    /// Workload shape: churn, fifo, reinsert, or file:<path> to a script
    #[arg(long, default_value = "churn")]
    workload: String,

    /// Write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fixed-width pointer table under a live-capped workload
    BenchFixed(Common),
    /// Variable-width pointer table under a live-capped workload
    BenchVariable(Common),
    /// Stable dictionary (slots never move while a key is present)
    StableDict(Common),
    /// Relaxed retrieval over a compact slot universe
    Retrieval(Common),
    /// Balls-into-bins rules: single, d-left, iceberg
    Ballsbins {
        #[command(flatten)]
        common: Common,
        /// Placement rule
        #[arg(long, value_enum, default_value_t = RuleArg::Iceberg)]
        rule: RuleArg,
    },
    /// Probe-cost sweep over delta = 2^-1 .. 2^-10 (ignores --delta)
    Probe(Common),
}

fn build_config(name: &str, common: &Common, rule: Option<RuleArg>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(name);
    cfg.n = common.n;
    cfg.delta = common.delta;
    cfg.h = common.h;
    cfg.d = common.d;
    cfg.ops = common.ops;
    cfg.trials = common.trials.max(1);
    cfg.seed = common.seed;
    cfg.output = match common.output {
        OutputFormat::Json => "json".to_string(),
        OutputFormat::Csv => "csv".to_string(),
    };
    cfg.workload = common.workload.clone();
    if let Some(rule) = rule {
        cfg.rule = match rule {
            RuleArg::Single => "single",
            RuleArg::Dleft => "dleft",
            RuleArg::Iceberg => "iceberg",
        }
        .to_string();
    }
    cfg
}

fn emit(report: &Report, common: &Common) -> std::io::Result<()> {
    let text = match common.output {
        OutputFormat::Json => report.to_json(),
        OutputFormat::Csv => report.to_csv(),
    };
    match &common.out {
        Some(path) => std::fs::write(path, text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("TINYPTR_THREADS") {
        match threads.parse::<usize>() {
            Ok(t) if t >= 1 => {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build_global()
                    .expect("the global pool is configured once, before any parallel work");
            }
            _ => {
                eprintln!("TINYPTR_THREADS must be a positive integer, got {threads:?}");
                return ExitCode::from(2);
            }
        }
    }

    let cli = Cli::parse();
    let (cfg, common) = match &cli.command {
        Command::BenchFixed(c) => (build_config("bench-fixed", c, None), c),
        Command::BenchVariable(c) => (build_config("bench-variable", c, None), c),
        Command::StableDict(c) => (build_config("stable-dict", c, None), c),
        Command::Retrieval(c) => (build_config("retrieval", c, None), c),
        Command::Ballsbins { common, rule } => {
            (build_config("ballsbins", common, Some(*rule)), common)
        }
        Command::Probe(c) => (build_config("probe", c, None), c),
    };

    let report = match run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = emit(&report, common) {
        eprintln!("error writing report: {e}");
        return ExitCode::from(2);
    }
    if report.pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_args_reach_the_config() {
        let cli = Cli::parse_from([
            "tinyptr", "ballsbins", "--n", "1024", "--h", "2", "--d", "3", "--trials", "5",
            "--seed", "99", "--output", "csv", "--workload", "fifo", "--rule", "dleft",
        ]);
        let Command::Ballsbins { common, rule } = &cli.command else {
            panic!("parsed into the wrong subcommand");
        };
        let cfg = build_config("ballsbins", common, Some(*rule));
        assert_eq!(
            (cfg.n, cfg.h, cfg.d, cfg.trials, cfg.seed),
            (1024, 2, 3, 5, 99)
        );
        assert_eq!((cfg.output.as_str(), cfg.workload.as_str(), cfg.rule.as_str()),
                   ("csv", "fifo", "dleft"));
    }

    #[test]
    fn trials_are_clamped_to_at_least_one() {
        let cli = Cli::parse_from(["tinyptr", "probe", "--trials", "0"]);
        let Command::Probe(c) = &cli.command else { panic!("wrong subcommand") };
        assert_eq!(build_config("probe", c, None).trials, 1);
    }
}
