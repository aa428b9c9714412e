//! The four subcommands. Work is spread over a rayon pool; every parallel
//! map collects in index order, and files are written afterwards on the
//! calling thread, so output does not depend on the thread count.

use anyhow::{anyhow, bail, Context};
use hdlda_core::classifier::{fit_precision, fit_rule_from_means, LabeledDataset, RuleSpec, WhitenedMeans};
use hdlda_core::precision::{PrecisionEstimate, PrecisionKind, PrecisionMethod};
use hdlda_core::seed;
use hdlda_core::shrinkage::{shrink, MeanMethod, NoisyVector};
use hdlda_core::simlab::{aggregate, run_replication, ExperimentMethods, Population};
use hdlda_core::theory::{region_membership, summarize_draws, v_scan_draw, SignalConfig, VScanRow};
use rayon::prelude::*;

use crate::config::{
    parse_mean_methods, parse_precisions, parse_rules, parse_settings, DatasetFile, RunConfig, Subcommand,
};
use crate::ingest::{ingest_csv, Ingested};
use crate::manifest::{Manifest, RunRecord};
use crate::report;

/// Runs `sub` and writes the manifest whether or not it succeeded.
pub fn run(cfg: &RunConfig, sub: Subcommand) -> anyhow::Result<Manifest> {
    let mut cfg = cfg.clone();
    cfg.subcommand = Some(sub);
    let mut record = RunRecord::start(&cfg.output_dir);
    let outcome = std::fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("cannot create {}", cfg.output_dir.display()))
        .and_then(|_| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build()?;
            pool.install(|| match sub {
                Subcommand::Simulate => simulate(&cfg, &mut record),
                Subcommand::Classify => classify(&cfg, &mut record),
                Subcommand::Regions => regions(&cfg, &mut record),
                Subcommand::ShrinkCompare => shrink_compare(&cfg, &mut record),
            })
        });
    let error = outcome.as_ref().err().map(|e| format!("{e:#}"));
    let manifest = record.finish(&cfg, error).context("cannot write manifest")?;
    outcome.map(|_| manifest)
}

fn data_precision(kind: PrecisionKind, cfg: &RunConfig) -> anyhow::Result<PrecisionMethod> {
    Ok(match kind {
        PrecisionKind::Ir => PrecisionMethod::Ir,
        PrecisionKind::Glasso => PrecisionMethod::Glasso(cfg.glasso.to_spec()?),
        PrecisionKind::Lam => PrecisionMethod::Lam(cfg.lam.to_config()),
        PrecisionKind::Oracle => {
            bail!("the oracle precision needs a known population; it is only available in simulate")
        }
    })
}

fn load(data: Option<&DatasetFile>, record: &mut RunRecord) -> anyhow::Result<Ingested> {
    let file = data.ok_or_else(|| anyhow!("no dataset given (--data)"))?;
    let ingested = ingest_csv(file).with_context(|| format!("cannot ingest {}", file.path.display()))?;
    record.label_mapping = Some(ingested.labels.clone());
    Ok(ingested)
}

fn simulate(cfg: &RunConfig, record: &mut RunRecord) -> anyhow::Result<()> {
    let sim = &cfg.simulate;
    let settings = parse_settings(&sim.settings)?;
    if sim.replications < 2 {
        bail!("simulate needs at least 2 replications");
    }
    let methods = ExperimentMethods {
        precisions: parse_precisions(&sim.precisions)?,
        rules: parse_rules(&sim.rules)?,
        glasso: cfg.glasso.to_spec()?,
        lam: cfg.lam.to_config(),
        shrinkage: cfg.shrinkage.to_config(),
    };
    for mut setting in settings {
        setting.replications = sim.replications;
        setting.seed = cfg.seed;
        let pop = Population::build(&setting).with_context(|| format!("setting {}", setting.id))?;
        let results = (0..setting.replications)
            .into_par_iter()
            .map(|rep| run_replication(&setting, &pop, &methods, rep))
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("setting {}", setting.id))?;
        let table = aggregate(&setting.id, results);
        report::write_table_long(&record.output(&format!("simulate_{}.csv", setting.id)), &table)?;
        report::write_table_wide(&record.output(&format!("simulate_{}_table.csv", setting.id)), &table)?;
        report::write_table_json(
            &record.output(&format!("simulate_{}.json", setting.id)),
            &table,
            setting.replications,
        )?;
    }
    Ok(())
}

/// Leave-one-out outcome of one (precision, rule) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LoocvCell {
    pub precision: PrecisionKind,
    pub rule: RuleSpec,
    pub predicted: Result<Vec<u8>, String>,
}

impl LoocvCell {
    pub fn errors(&self, truth: &[u8]) -> Option<usize> {
        let p = self.predicted.as_ref().ok()?;
        Some(p.iter().zip(truth).filter(|(a, b)| a != b).count())
    }
}

/// Leave-one-out predictions for every (precision, rule) pair. Each fold
/// fits one precision per estimator (seeded by the fold index) and reuses it
/// for all rules.
pub fn loocv_grid(
    data: &LabeledDataset,
    precisions: &[(PrecisionKind, PrecisionMethod)],
    rules: &[RuleSpec],
    cfg: &RunConfig,
) -> anyhow::Result<Vec<LoocvCell>> {
    if data.len() < 5 {
        bail!("LOOCV needs at least 5 rows, got {}", data.len());
    }
    let shrinkage = cfg.shrinkage.to_config();
    let shared: Vec<Option<Result<PrecisionEstimate, String>>> = precisions
        .iter()
        .map(|(_, m)| cfg.classify.fast_whitener.then(|| fit_precision(data, m, cfg.seed).map_err(|e| e.to_string())))
        .collect();
    let folds: Vec<Vec<Result<u8, String>>> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let train = data.without(i);
            let x = data.features().row(i);
            let mut out = Vec::with_capacity(precisions.len() * rules.len());
            for ((_, method), shared) in precisions.iter().zip(&shared) {
                let prec = match shared {
                    Some(p) => p.clone(),
                    None => fit_precision(&train, method, seed::derive(cfg.seed, i as u64)).map_err(|e| e.to_string()),
                };
                let fitted =
                    prec.and_then(|p| WhitenedMeans::compute(&train, &p).map(|m| (p, m)).map_err(|e| e.to_string()));
                for &rule in rules {
                    out.push(match &fitted {
                        Ok((p, means)) => fit_rule_from_means(means, p, rule, &shrinkage)
                            .and_then(|r| r.classify(x))
                            .map_err(|e| e.to_string()),
                        Err(e) => Err(e.clone()),
                    });
                }
            }
            out
        })
        .collect();
    let mut cells = Vec::new();
    for (k, (kind, _)) in precisions.iter().enumerate() {
        for (r, &rule) in rules.iter().enumerate() {
            let idx = k * rules.len() + r;
            let predicted = folds
                .iter()
                .enumerate()
                .map(|(i, f)| f[idx].clone().map_err(|e| format!("fold {i}: {e}")))
                .collect::<Result<Vec<u8>, String>>();
            cells.push(LoocvCell { precision: *kind, rule, predicted });
        }
    }
    Ok(cells)
}

type MethodGrid = (Vec<(PrecisionKind, PrecisionMethod)>, Vec<RuleSpec>);

fn split_methods(cfg: &RunConfig) -> anyhow::Result<MethodGrid> {
    let precisions = parse_precisions(&cfg.classify.precisions)?
        .into_iter()
        .map(|k| Ok((k, data_precision(k, cfg)?)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let rules = parse_rules(&cfg.classify.rules)?;
    if precisions.is_empty() || rules.is_empty() {
        bail!("classify needs at least one precision estimator and one rule");
    }
    Ok((precisions, rules))
}

fn classify(cfg: &RunConfig, record: &mut RunRecord) -> anyhow::Result<()> {
    let (precisions, rules) = split_methods(cfg)?;
    let ingested = load(cfg.classify.data.as_ref(), record)?;
    let data = &ingested.dataset;
    let cells = loocv_grid(data, &precisions, &rules, cfg)?;
    let truth = data.labels();
    let n = data.len();
    let label_of = |g: u8| ingested.labels[(g - 1) as usize].label.clone();

    let mut w = csv::Writer::from_path(record.output("classify.csv"))?;
    w.write_record(["mean_method", "precision_method", "variant", "errors", "n", "error_rate", "failure"])?;
    for c in &cells {
        let (errors, rate, failure) = match c.errors(truth) {
            Some(e) => (e.to_string(), format!("{}", e as f64 / n as f64), String::new()),
            None => (String::new(), String::new(), c.predicted.clone().unwrap_err()),
        };
        w.write_record([
            c.rule.mean_method.tag(),
            c.precision.label(),
            c.rule.variant.tag(),
            &errors,
            &n.to_string(),
            &rate,
            &failure,
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(record.output("classify_table.csv"))?;
    let mut header = vec!["rule".to_string()];
    header.extend(precisions.iter().map(|(k, _)| k.label().to_string()));
    w.write_record(&header)?;
    for (r, rule) in rules.iter().enumerate() {
        let mut rec = vec![rule.label()];
        for k in 0..precisions.len() {
            let cell = &cells[k * rules.len() + r];
            rec.push(cell.errors(truth).map_or_else(|| "failed".to_string(), |e| format!("{e}/{n}")));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(record.output("classify_predictions.csv"))?;
    w.write_record(["row", "label", "precision_method", "rule", "predicted"])?;
    for c in &cells {
        if let Ok(pred) = &c.predicted {
            for (i, (&t, &p)) in truth.iter().zip(pred).enumerate() {
                w.write_record([
                    i.to_string(),
                    label_of(t),
                    c.precision.label().to_string(),
                    c.rule.label(),
                    label_of(p),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Cell centres of an `n × n` grid over `(0, 1) × (−1/2, 1/2)` with
/// `n = 1 / step`.
pub fn region_grid(step: f64) -> anyhow::Result<Vec<(f64, f64)>> {
    let n = (1.0 / step).round();
    if !step.is_finite() || step <= 0.0 || n < 1.0 || (n * step - 1.0).abs() > 1e-9 {
        bail!("grid step must divide 1 evenly, got {step}");
    }
    let n = n as usize;
    let tidy = |x: f64| (x * 1e12).round() / 1e12;
    Ok((0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (tidy((i as f64 + 0.5) * step), tidy(-0.5 + (j as f64 + 0.5) * step)))
        .collect())
}

fn regions(cfg: &RunConfig, record: &mut RunRecord) -> anyhow::Result<()> {
    let rc = &cfg.regions;
    let reports =
        region_grid(rc.grid_step)?.into_iter().map(|(a, b)| region_membership(a, b)).collect::<Result<Vec<_>, _>>()?;
    report::write_regions(&record.output("regions.csv"), &reports)?;
    if rc.scan {
        let rows = scan(cfg)?;
        report::write_vscan(&record.output("vscan.csv"), &rows)?;
    }
    Ok(())
}

/// V-statistic summaries for every scan point and dimension.
pub fn scan(cfg: &RunConfig) -> anyhow::Result<Vec<([f64; 2], VScanRow)>> {
    let rc = &cfg.regions;
    let methods: Vec<MeanMethod> = parse_mean_methods(&rc.methods)?;
    if rc.draws < 10 {
        bail!("the scan needs at least 10 draws, got {}", rc.draws);
    }
    let shrinkage = cfg.shrinkage.to_config();
    let mut rows = Vec::new();
    for &[a, b] in &rc.scan_points {
        let signal = SignalConfig { a, b, n1: rc.n1, n2: rc.n2 };
        for &p in &rc.p_list {
            let values = (0..rc.draws)
                .into_par_iter()
                .map(|d| v_scan_draw(&signal, p, d, &methods, cfg.seed, &shrinkage))
                .collect::<Result<Vec<_>, _>>()
                .with_context(|| format!("scan at (a, b) = ({a}, {b}), p = {p}"))?;
            rows.extend(summarize_draws(p, &methods, &values).into_iter().map(|r| ([a, b], r)));
        }
    }
    Ok(rows)
}

/// Per-component estimates of the whitened mean difference.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkComparison {
    pub sm: Vec<f64>,
    pub npeb: Vec<f64>,
    pub npmle: Vec<f64>,
}

pub fn compare_shrinkers(
    data: &LabeledDataset,
    method: &PrecisionMethod,
    cfg: &RunConfig,
) -> anyhow::Result<ShrinkComparison> {
    let prec = fit_precision(data, method, cfg.seed)?;
    let means = WhitenedMeans::compute(data, &prec)?;
    let d: Vec<f64> = means.z1.iter().zip(&means.z2).map(|(a, b)| a - b).collect();
    let sd = (1.0 / means.n1 as f64 + 1.0 / means.n2 as f64).sqrt();
    let noisy = NoisyVector::new(d.clone(), sd)?;
    let shrinkage = cfg.shrinkage.to_config();
    Ok(ShrinkComparison {
        npeb: shrink(&noisy, MeanMethod::Npeb, &shrinkage)?.estimates,
        npmle: shrink(&noisy, MeanMethod::Npmle, &shrinkage)?.estimates,
        sm: d,
    })
}

fn shrink_compare(cfg: &RunConfig, record: &mut RunRecord) -> anyhow::Result<()> {
    let kind = PrecisionKind::parse(&cfg.shrink_compare.precision)
        .ok_or_else(|| anyhow!("unknown precision method {:?}", cfg.shrink_compare.precision))?;
    let method = data_precision(kind, cfg)?;
    let ingested = load(cfg.shrink_compare.data.as_ref(), record)?;
    let cmp = compare_shrinkers(&ingested.dataset, &method, cfg)?;
    let mut w = csv::Writer::from_path(record.output("shrink_compare.csv"))?;
    w.write_record(["component", "SM", "NPEB", "NPMLE"])?;
    for (k, ((s, e), m)) in cmp.sm.iter().zip(&cmp.npeb).zip(&cmp.npmle).enumerate() {
        w.write_record([k.to_string(), s.to_string(), e.to_string(), m.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
