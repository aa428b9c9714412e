use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand as ClapSubcommand};
use hdlda::config::{DatasetFile, LabelColumn, RunConfig, Subcommand};

#[derive(Parser)]
#[command(name = "hdlda", version, about = "High-dimensional LDA with empirical-Bayes mean shrinkage")]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Replicate simulation settings and write error-rate tables.
    Simulate {
        /// Comma-separated setting ids, e.g. 1-1,3-2.
        #[arg(long, value_delimiter = ',')]
        settings: Option<Vec<String>>,
        #[arg(long)]
        reps: Option<usize>,
        /// Precision estimators and/or rules, e.g. IR,glasso,NPMLE1,SM.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
    },
    /// Leave-one-out error of every precision × rule pair on a CSV dataset.
    Classify {
        #[command(flatten)]
        data: DataArgs,
        /// Precision estimators and/or rules, e.g. IR,glasso,NPMLE1,SM.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Fit the whitener once on all rows.
        #[arg(long)]
        fast_whitener: bool,
    },
    /// Region membership over the (a, b) grid, optionally with a V-statistic scan.
    Regions {
        #[arg(long)]
        grid_step: Option<f64>,
        #[arg(long)]
        scan: bool,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        p_list: Option<Vec<usize>>,
    },
    /// Per-component SM, NPEB and NPMLE estimates of the whitened mean difference.
    ShrinkCompare {
        #[command(flatten)]
        data: DataArgs,
        /// Precision estimator used for whitening.
        #[arg(long)]
        precision: Option<String>,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Label column name, or 0-based index.
    #[arg(long)]
    label_col: Option<String>,
    #[arg(long)]
    delimiter: Option<char>,
    #[arg(long)]
    no_header: bool,
}

impl DataArgs {
    fn apply(self, slot: &mut Option<DatasetFile>) {
        if let Some(path) = self.data {
            let file = slot.get_or_insert_with(|| DatasetFile::new(&path));
            file.path = path;
        }
        if let Some(file) = slot.as_mut() {
            if let Some(col) = self.label_col {
                file.label_column = LabelColumn::parse(&col);
            }
            if let Some(d) = self.delimiter {
                file.delimiter = d;
            }
            if self.no_header {
                file.has_header = false;
            }
        }
    }
}

/// Splits a mixed list into precision-estimator tags and rule labels.
fn split_methods(items: Vec<String>) -> anyhow::Result<(Vec<String>, Vec<String>)> {
    let (mut precisions, mut rules) = (Vec::new(), Vec::new());
    for item in items {
        if hdlda_core::precision::PrecisionKind::parse(&item).is_some() {
            precisions.push(item);
        } else if hdlda_core::classifier::RuleSpec::parse(&item).is_some() {
            rules.push(item);
        } else {
            anyhow::bail!("unknown method {item:?}");
        }
    }
    Ok((precisions, rules))
}

fn configure(cli: Cli) -> anyhow::Result<(RunConfig, Subcommand)> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(o) = cli.out {
        cfg.output_dir = o;
    }
    let sub = match cli.command {
        Command::Simulate { settings, reps, methods } => {
            if let Some(s) = settings {
                cfg.simulate.settings = s;
            }
            if let Some(r) = reps {
                cfg.simulate.replications = r;
            }
            if let Some(m) = methods {
                let (p, r) = split_methods(m)?;
                if !p.is_empty() {
                    cfg.simulate.precisions = p;
                }
                if !r.is_empty() {
                    cfg.simulate.rules = r;
                }
            }
            Subcommand::Simulate
        }
        Command::Classify { data, methods, fast_whitener } => {
            data.apply(&mut cfg.classify.data);
            if let Some(m) = methods {
                let (p, r) = split_methods(m)?;
                if !p.is_empty() {
                    cfg.classify.precisions = p;
                }
                if !r.is_empty() {
                    cfg.classify.rules = r;
                }
            }
            cfg.classify.fast_whitener |= fast_whitener;
            Subcommand::Classify
        }
        Command::Regions { grid_step, scan, draws, p_list } => {
            if let Some(g) = grid_step {
                cfg.regions.grid_step = g;
            }
            cfg.regions.scan |= scan;
            if let Some(d) = draws {
                cfg.regions.draws = d;
            }
            if let Some(p) = p_list {
                cfg.regions.p_list = p;
            }
            Subcommand::Regions
        }
        Command::ShrinkCompare { data, precision } => {
            data.apply(&mut cfg.shrink_compare.data);
            if let Some(p) = precision {
                cfg.shrink_compare.precision = p;
            }
            Subcommand::ShrinkCompare
        }
    };
    Ok((cfg, sub))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cfg, sub) = match configure(cli) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match hdlda::run(&cfg, sub) {
        Ok(manifest) => {
            for out in &manifest.outputs {
                println!("{}", cfg.output_dir.join(out).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
